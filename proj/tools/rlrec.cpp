// rlrec: index, train, eval, verify, fixture and serve.

#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "rlrec/config.hpp"
#include "rlrec/error.hpp"
#include "rlrec/fixture.hpp"
#include "rlrec/retrieval.hpp"
#include "rlrec/service.hpp"
#include "rlrec/train.hpp"
#include "rlrec/verify.hpp"

namespace {

using namespace rlrec;

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };
Level g_level = Level::info;

void log(Level level, const std::string& msg) {
  static constexpr const char* names[] = {"error", "warn", "info", "debug"};
  if (level <= g_level) std::cerr << "[" << names[static_cast<int>(level)] << "] " << msg << '\n';
}

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string log_level = "info";
};

/// Usage problems detected after parsing; exit code 2.
struct UsageError : Error {
  using Error::Error;
};

RunConfig load_config(const Globals& g) {
  if (g.config.empty()) throw UsageError("--config is required");
  RunConfig c = load_run_config(g.config);
  if (g.seed) c.seed = *g.seed;
  if (!g.out.empty()) c.out = g.out;
  return c;
}

int cmd_index(const Globals& g, const std::string& corpus_arg) {
  std::filesystem::path path = corpus_arg;
  if (path.empty()) path = load_config(g).corpus;
  if (path.empty()) throw UsageError("index needs a corpus path or --config");
  const Corpus corpus = load_corpus(path);
  const InvertedIndex index = build_index(corpus);
  std::cout << "N=" << index.num_docs() << " vocab=" << corpus.vocabulary().size() << " avgdl=" << index.avgdl()
            << '\n';
  if (!g.out.empty()) {
    std::filesystem::create_directories(g.out);
    const auto file = std::filesystem::path(g.out) / "index.txt";
    std::ofstream out(file, std::ios::binary);
    if (!out) throw Error("cannot write " + file.string());
    index.write_snapshot(out);
    log(Level::info, "wrote " + file.string());
  }
  return 0;
}

int cmd_train(const Globals& g) {
  const RunConfig config = load_config(g);
  log(Level::info, "training " + std::string(config.trainer == TrainerKind::grpo ? "grpo" : "sft") + " into " +
                       config.out.string());
  const TrainResult result = run_training(config);
  log(Level::info, "best checkpoint at step " + std::to_string(result.best_step));
  std::cout << format_eval_table(result, config.env.eval_cutoff);
  return 0;
}

int cmd_eval(const Globals& g, std::string checkpoint, const std::string& split) {
  const RunConfig config = load_config(g);
  const RunContext ctx = RunContext::load(config);
  if (checkpoint.empty()) checkpoint = (config.out / "checkpoint.txt").string();
  const NeuralPolicy policy = load_checkpoint(checkpoint, ctx.data->corpus);
  std::span<const std::size_t> states = ctx.report_states();
  if (split == "train") states = ctx.train;
  else if (split == "valid") states = ctx.valid;
  else if (split == "test") states = ctx.test;
  if (states.empty()) throw UsageError("split '" + split + "' has no states");
  const EvalSummary s = evaluate_greedy(*ctx.env, policy, states);
  std::printf("ndcg@%zu %.6f\nrecall@%zu %.6f\nvalid %.6f\nstates %zu\n", config.env.eval_cutoff, s.ndcg,
              config.env.eval_cutoff, s.recall, s.valid_rate, s.states);
  return 0;
}

int cmd_verify(const Globals& g, const std::string& suite) {
  const auto& names = suite_names();
  if (suite != "all" && std::find(names.begin(), names.end(), suite) == names.end())
    throw UsageError("unknown suite '" + suite + "'");
  bool ok = true;
  for (const auto& name : names) {
    if (suite != "all" && name != suite) continue;
    const SuiteReport r = run_suite(name, g.seed.value_or(0));
    std::cout << format_report(r);
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

int cmd_fixture(const Globals& g, const std::string& kind, FixtureParams p) {
  if (g.out.empty()) throw UsageError("fixture needs --out DIR");
  const FixtureParams d = FixtureParams::defaults(parse_task_kind(kind));
  // Split sizes default per kind unless given explicitly.
  if (p.train_states == 0) p.train_states = d.train_states;
  if (p.valid_states == static_cast<std::size_t>(-1)) p.valid_states = d.valid_states;
  if (p.test_states == static_cast<std::size_t>(-1)) p.test_states = d.test_states;
  p.kind = d.kind;
  if (g.seed) p.seed = *g.seed;
  const Fixture fx = generate_fixture(p);
  write_fixture(fx, g.out);
  log(Level::info, "wrote " + std::to_string(fx.states.size()) + " states, " + std::to_string(fx.documents.size()) +
                       " documents to " + g.out);
  return 0;
}

std::atomic<bool> g_stop{false};
extern "C" void on_signal(int) { g_stop = true; }

int cmd_serve(const Globals& g, ServiceConfig sc) {
  const RunConfig run = load_config(g);
  const ServiceConfig base = ServiceConfig::from_run_config(run);
  sc.corpus = base.corpus;
  sc.relevance = base.relevance;
  sc.env = base.env;
  sc.validate();

  Service service(sc.max_batch);
  HttpServer server(service, sc);
  const int port = server.bind();
  std::thread listener([&] { server.listen(); });
  log(Level::info, "listening on " + sc.host + ":" + std::to_string(port));
  try {
    service.load(TaskData::load(sc.corpus, sc.relevance), sc.env);
  } catch (...) {
    server.stop();
    listener.join();
    throw;
  }
  log(Level::info, "ready");
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  log(Level::info, "shutting down");
  server.stop();
  listener.join();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Closed-loop query rewriting and reranking with BM25 environments"};
  app.require_subcommand(1);
  // Global flags may also follow the subcommand.
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Run configuration (JSON)");
  app.add_option("--seed", g.seed, "Override the configured seed");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--log-level", g.log_level, "error, warn, info or debug")
      ->check(CLI::IsMember({"error", "warn", "info", "debug"}));

  std::string corpus_arg;
  auto* index = app.add_subcommand("index", "Build the BM25 index and print its statistics");
  index->add_option("corpus", corpus_arg, "Corpus JSONL (defaults to the config's corpus)");

  auto* train = app.add_subcommand("train", "Train a policy as configured");

  std::string checkpoint, split = "report";
  auto* eval = app.add_subcommand("eval", "Greedy eval of a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file (default <out>/checkpoint.txt)");
  eval->add_option("--split", split, "train, valid, test or report")
      ->check(CLI::IsMember({"train", "valid", "test", "report"}));

  std::string suite;
  auto* verify = app.add_subcommand("verify", "Run a verification suite");
  verify->add_option("suite", suite, "fact1, theorem2, theorem3, gradients, bm25, metrics or all")->required();

  std::string kind = "product_search";
  FixtureParams fp;
  fp.train_states = 0;
  fp.valid_states = static_cast<std::size_t>(-1);
  fp.test_states = static_cast<std::size_t>(-1);
  auto* fixture = app.add_subcommand("fixture", "Write a synthetic task family");
  fixture->add_option("--kind", kind, "product_search, seq_rec or rerank")
      ->check(CLI::IsMember({"product_search", "seq_rec", "rerank"}));
  fixture->add_option("--docs", fp.docs, "Documents")->capture_default_str();
  fixture->add_option("--vocab", fp.vocab, "Vocabulary size")->capture_default_str();
  fixture->add_option("--topics", fp.topics, "Topics")->capture_default_str();
  fixture->add_option("--targets-per-topic", fp.targets_per_topic, "Target documents per topic")
      ->capture_default_str();
  fixture->add_option("--train", fp.train_states, "Training states");
  fixture->add_option("--valid", fp.valid_states, "Validation states");
  fixture->add_option("--test", fp.test_states, "Test states");
  fixture->add_option("--slots", fp.slots, "Rerank candidates per state")->capture_default_str();
  fixture->add_option("--max-query-length", fp.max_query_length, "Query tokens before STOP")
      ->capture_default_str();

  ServiceConfig sc;
  auto* serve = app.add_subcommand("serve", "Serve retrieve and reward over HTTP");
  serve->add_option("--host", sc.host, "Bind address")->capture_default_str();
  serve->add_option("--port", sc.port, "Port (0 picks a free one)")->capture_default_str();
  serve->add_option("--max-batch", sc.max_batch, "Largest reward batch")->capture_default_str();
  serve->add_option("--timeout", sc.timeout_seconds, "Request timeout in seconds")->capture_default_str();
  serve->add_option("--threads", sc.threads, "Worker threads")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  g_level = g.log_level == "error" ? Level::error
            : g.log_level == "warn" ? Level::warn
            : g.log_level == "debug" ? Level::debug
                                     : Level::info;

  try {
    if (*index) return cmd_index(g, corpus_arg);
    if (*train) return cmd_train(g);
    if (*eval) return cmd_eval(g, checkpoint, split);
    if (*verify) return cmd_verify(g, suite);
    if (*fixture) return cmd_fixture(g, kind, fp);
    if (*serve) return cmd_serve(g, sc);
  } catch (const UsageError& e) {
    log(Level::error, e.what());
    return 2;
  } catch (const ConfigError& e) {
    log(Level::error, e.what());
    return 2;
  } catch (const std::exception& e) {
    log(Level::error, e.what());
    return 1;
  }
  return 2;
}
