#pragma once

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>

#include "rlrec/config.hpp"
#include "rlrec/envs.hpp"

namespace httplib {
class Server;
}

namespace rlrec {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path corpus;
  std::filesystem::path relevance;
  /// BM25 parameters, reward spec and cutoffs of the served environments.
  EnvConfig env;
  std::size_t max_batch = 256;
  double timeout_seconds = 10.0;
  /// Worker threads; a keep-alive connection occupies one while open.
  int threads = 64;

  /// Data paths and environment settings of a run configuration.
  static ServiceConfig from_run_config(const RunConfig& run);
  /// Throws ConfigError.
  void validate() const;
};

struct Response {
  int status = 200;
  /// One JSON document.
  std::string body;
};

/// Request handlers over immutable task data. Handlers are safe to call
/// from any number of threads; until load() has completed they answer 503.
class Service {
 public:
  explicit Service(std::size_t max_batch = 256);
  Service(std::shared_ptr<const TaskData> data, const EnvConfig& env, std::size_t max_batch = 256);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Installs the backend. Only the first call has an effect.
  void load(std::shared_ptr<const TaskData> data, const EnvConfig& env);
  bool ready() const { return backend_.load(std::memory_order_acquire) != nullptr; }

  /// {"query": str, "k": int} -> {"items": [{"id", "score"}]}.
  Response handle_retrieve(std::string_view body) const;
  /// {"state_id", "action_text"} -> {"reward"}; {"batch": [...]} -> {"rewards": [...]}.
  Response handle_reward(std::string_view body) const;
  /// {"status": "ok", "docs", "states"}.
  Response health() const;

  /// In-process reward used by handle_reward. Throws UnknownStateError.
  double reward(std::string_view state_id, std::string_view action_text) const;

 private:
  struct Backend;
  std::atomic<const Backend*> backend_{nullptr};
  std::unique_ptr<Backend> owned_;
  std::size_t max_batch_;
};

/// HTTP/1.1 front end: POST /v1/retrieve, POST /v1/reward, GET /v1/health.
class HttpServer {
 public:
  HttpServer(const Service& service, const ServiceConfig& config);
  ~HttpServer();

  /// Binds the configured address; port 0 picks a free port. Throws Error.
  int bind();
  /// Serves until stop(); requires bind().
  void listen();
  /// Stops accepting and waits for in-flight requests.
  void stop();
  int port() const { return port_; }

 private:
  std::unique_ptr<httplib::Server> server_;
  ServiceConfig config_;
  int port_ = 0;
};

}  // namespace rlrec
