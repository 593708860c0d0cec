#include "rlrec/service.hpp"

// The default backlog of 5 drops connections under bursts of clients.
#define CPPHTTPLIB_LISTEN_BACKLOG 512
#include <httplib.h>

#include <json.hpp>

#include "rlrec/error.hpp"

namespace rlrec {

using nlohmann::json;

ServiceConfig ServiceConfig::from_run_config(const RunConfig& run) {
  ServiceConfig c;
  c.corpus = run.corpus;
  c.relevance = run.relevance;
  c.env = run.env;
  return c;
}

void ServiceConfig::validate() const {
  if (port < 0 || port > 65535) throw ConfigError("service port must be in [0, 65535]");
  if (max_batch < 1) throw ConfigError("service max batch size must be >= 1");
  if (!(timeout_seconds > 0.0)) throw ConfigError("service request timeout must be > 0");
  if (threads < 1) throw ConfigError("service threads must be >= 1");
}

struct Service::Backend {
  std::shared_ptr<const TaskData> data;
  EnvironmentSet envs;
  Bm25Params bm25;

  Backend(std::shared_ptr<const TaskData> d, const EnvConfig& env)
      : data(d), envs(d, env), bm25(env.bm25) {}
};

namespace {

Response error(int status, const std::string& message) { return {status, json{{"error", message}}.dump()}; }

Response not_ready() { return error(503, "service not ready"); }

/// Parses a JSON object body; sets `bad` on failure.
json parse_object(std::string_view body, std::optional<Response>& bad) {
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) bad = error(400, "request body must be a JSON object");
  return j;
}

}  // namespace

Service::Service(std::size_t max_batch) : max_batch_(max_batch) {
  if (max_batch < 1) throw ConfigError("service max batch size must be >= 1");
}

Service::Service(std::shared_ptr<const TaskData> data, const EnvConfig& env, std::size_t max_batch)
    : Service(max_batch) {
  load(std::move(data), env);
}

Service::~Service() = default;

void Service::load(std::shared_ptr<const TaskData> data, const EnvConfig& env) {
  if (owned_) return;
  env.validate(data->corpus);
  owned_ = std::make_unique<Backend>(std::move(data), env);
  backend_.store(owned_.get(), std::memory_order_release);
}

double Service::reward(std::string_view state_id, std::string_view action_text) const {
  const Backend* b = backend_.load(std::memory_order_acquire);
  if (!b) throw Error("service not ready");
  const std::size_t state = b->data->relevance.index_of(state_id);
  return b->envs.for_state(state).reward_text(state, action_text);
}

Response Service::handle_retrieve(std::string_view body) const {
  const Backend* b = backend_.load(std::memory_order_acquire);
  if (!b) return not_ready();
  std::optional<Response> bad;
  const json req = parse_object(body, bad);
  if (bad) return *bad;
  if (!req.contains("query") || !req["query"].is_string()) return error(400, "query must be a string");
  if (!req.contains("k") || !req["k"].is_number_integer() || req["k"].get<long long>() < 1)
    return error(400, "invalid k");
  const auto k = static_cast<std::size_t>(req["k"].get<long long>());
  const auto tokens = b->data->corpus.encode(tokenize(req["query"].get<std::string>()));
  json items = json::array();
  for (const ScoredDoc& hit : retrieve(b->data->index, b->bm25, tokens, k))
    items.push_back({{"id", b->data->corpus.document(hit.doc).id}, {"score", hit.score}});
  return {200, json{{"items", std::move(items)}}.dump()};
}

Response Service::handle_reward(std::string_view body) const {
  const Backend* b = backend_.load(std::memory_order_acquire);
  if (!b) return not_ready();
  std::optional<Response> bad;
  const json req = parse_object(body, bad);
  if (bad) return *bad;

  auto one = [&](const json& item, double& out) -> std::optional<Response> {
    if (!item.is_object() || !item.contains("state_id") || !item["state_id"].is_string())
      return error(400, "state_id must be a string");
    if (!item.contains("action_text") || !item["action_text"].is_string())
      return error(400, "action_text must be a string");
    const std::string id = item["state_id"].get<std::string>();
    const auto state = b->data->relevance.find(id);
    if (!state) return error(404, "unknown state id: " + id);
    out = b->envs.for_state(*state).reward_text(*state, item["action_text"].get<std::string>());
    return std::nullopt;
  };

  if (req.contains("batch")) {
    const json& batch = req["batch"];
    if (!batch.is_array()) return error(400, "batch must be an array");
    if (batch.size() > max_batch_)
      return error(413, "batch of " + std::to_string(batch.size()) + " exceeds limit " + std::to_string(max_batch_));
    std::vector<double> rewards(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i)
      if (auto err = one(batch[i], rewards[i])) return *err;
    return {200, json{{"rewards", rewards}}.dump()};
  }
  double r = 0.0;
  if (auto err = one(req, r)) return *err;
  return {200, json{{"reward", r}}.dump()};
}

Response Service::health() const {
  const Backend* b = backend_.load(std::memory_order_acquire);
  if (!b) return not_ready();
  return {200, json{{"status", "ok"}, {"docs", b->data->corpus.size()}, {"states", b->data->relevance.size()}}.dump()};
}

// ---------------------------------------------------------------- server

HttpServer::HttpServer(const Service& service, const ServiceConfig& config)
    : server_(std::make_unique<httplib::Server>()), config_(config) {
  config_.validate();
  const auto timeout = std::chrono::duration<double>(config_.timeout_seconds);
  const auto sec = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usec = std::chrono::duration_cast<std::chrono::microseconds>(timeout - sec);
  server_->set_read_timeout(sec.count(), usec.count());
  server_->set_write_timeout(sec.count(), usec.count());
  const auto threads = static_cast<std::size_t>(config_.threads);
  server_->new_task_queue = [threads] { return new httplib::ThreadPool(threads); };

  auto reply = [](httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  server_->Post("/v1/retrieve", [&service, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.handle_retrieve(req.body));
  });
  server_->Post("/v1/reward", [&service, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.handle_reward(req.body));
  });
  server_->Get("/v1/health", [&service, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, service.health());
  });
  server_->set_exception_handler([reply](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    reply(res, {500, json{{"error", what}}.dump()});
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind() {
  if (config_.port == 0) {
    port_ = server_->bind_to_any_port(config_.host);
  } else if (server_->bind_to_port(config_.host, config_.port)) {
    port_ = config_.port;
  } else {
    port_ = -1;
  }
  if (port_ < 0) throw Error("cannot bind " + config_.host + ":" + std::to_string(config_.port));
  return port_;
}

void HttpServer::listen() {
  if (port_ <= 0) throw Error("listen() before bind()");
  if (!server_->listen_after_bind()) throw Error("server stopped with an error");
}

void HttpServer::stop() {
  if (server_->is_running()) server_->stop();
}

}  // namespace rlrec
