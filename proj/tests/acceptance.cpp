// Acceptance criteria A1-A10. One PASS/FAIL line per criterion; the exit
// status is nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include <json.hpp>

#include "rlrec/envs.hpp"
#include "rlrec/fixture.hpp"
#include "rlrec/random.hpp"
#include "rlrec/service.hpp"
#include "rlrec/train.hpp"
#include "rlrec/verify.hpp"

// After Eigen: <resolv.h> defines a `_res` macro.
#include <httplib.h>

using namespace rlrec;
using nlohmann::json;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c, d);
  return buf;
}

std::filesystem::path scratch_root() {
  return std::filesystem::temp_directory_path() / ("rlrec_acceptance_" + std::to_string(::getpid()));
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = scratch_root() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Fixture of `kind` for `seed`, written to disk and loaded back as a run.
RunConfig fixture_run(TaskKind kind, std::uint64_t seed, const std::string& name) {
  FixtureParams p = FixtureParams::defaults(kind);
  p.seed = seed;
  const auto dir = scratch_dir(name);
  write_fixture(generate_fixture(p), dir);
  RunConfig cfg = load_run_config(dir / "config.json");
  cfg.out = dir / "out";
  return cfg;
}

Outcome from_suite(const SuiteReport& r) {
  std::string detail;
  for (const auto& [name, value] : r.values) detail += (detail.empty() ? "" : " ") + name + "=" + fmt("%.4g", value);
  if (!r.failure.empty()) detail += (detail.empty() ? "" : " ") + std::string("first failure: ") + r.failure;
  return {r.passed, detail};
}

Outcome a1() { return from_suite(verify_bm25()); }
Outcome a2() { return from_suite(verify_metrics()); }
Outcome a3() { return from_suite(verify_gradients()); }
Outcome a4() { return from_suite(verify_fact1()); }
Outcome a6() { return from_suite(verify_theorem2()); }
Outcome a7() { return from_suite(verify_theorem3()); }

Outcome a5() {
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    RunConfig cfg = fixture_run(TaskKind::product_search, seed, "a5_" + std::to_string(seed));
    const RunContext ctx = RunContext::load(cfg);
    const TrainResult grpo = train(cfg, ctx);
    RunConfig sft_cfg = cfg;
    sft_cfg.trainer = TrainerKind::sft;
    const TrainResult sft = train(sft_cfg, ctx);

    const auto& env = dynamic_cast<const QueryEnv&>(*ctx.env);
    double oracle = 0.0;
    for (std::size_t s : ctx.report_states()) oracle += best_query_oracle(env, s, 3, Objective::eval).reward;
    oracle /= static_cast<double>(ctx.report_states().size());

    const bool ok = grpo.final.ndcg >= 0.9 * oracle && grpo.final.ndcg > grpo.initial.ndcg &&
                    grpo.final.ndcg > sft.final.ndcg;
    wins += ok;
    detail += fmt(" [grpo %.3f init %.3f sft %.3f oracle %.3f]", grpo.final.ndcg, grpo.initial.ndcg,
                  sft.final.ndcg, oracle);
  }
  return {wins >= 4, std::to_string(wins) + "/5 seeds" + detail};
}

Outcome a8() {
  bool all = true;
  std::string detail;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    RunConfig cfg = fixture_run(TaskKind::rerank, seed, "a8_" + std::to_string(seed));
    const RunContext ctx = RunContext::load(cfg);
    const auto& env = dynamic_cast<const RerankEnv&>(*ctx.env);
    const auto states = ctx.report_states();

    // Mean NDCG of 1e4 uniform permutations per state.
    Rng rng = Rng::derive(7, seed);
    double baseline = 0.0;
    for (std::size_t s : states) {
      const auto m = static_cast<std::size_t>(env.slots());
      std::vector<int> perm(m);
      double sum = 0.0;
      for (int n = 0; n < 10000; ++n) {
        std::iota(perm.begin(), perm.end(), 0);
        for (std::size_t i = m; i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
        sum += env.evaluate_permutation(s, perm).ndcg;
      }
      baseline += sum / 10000.0;
    }
    baseline /= static_cast<double>(states.size());

    const TrainResult grpo = train(cfg, ctx);
    RunConfig sft_cfg = cfg;
    sft_cfg.trainer = TrainerKind::sft;
    const TrainResult sft = train(sft_cfg, ctx);
    const double valid = sampled_valid_rate(env, grpo.best, states, cfg.grpo.config.sampler, 50, 99);

    const bool ok = grpo.final.ndcg >= baseline + 0.2 && valid >= 0.95 && grpo.final.valid_rate >= 0.95;
    all = all && ok;
    detail += fmt(" [grpo %.3f random %.3f sft %.3f valid %.3f]", grpo.final.ndcg, baseline, sft.final.ndcg, valid);
  }
  return {all, "5 seeds" + detail};
}

Outcome a9() {
  const Fixture fx = generate_fixture(FixtureParams::defaults(TaskKind::product_search));
  auto data = std::make_shared<const TaskData>(fx.corpus(), fx.relevance(fx.corpus()));
  const Service service(data, fx.config.env);
  const auto env = make_environment(TaskKind::product_search, data, fx.config.env);
  const std::vector<std::string> vocab = data->corpus.vocabulary().tokens();

  // Parity with the in-process reward.
  Rng rng(21);
  double max_err = 0.0;
  int parity_failures = 0;
  for (int i = 0; i < 500; ++i) {
    const std::size_t state = rng.index(fx.states.size());
    std::string text;
    for (std::size_t k = 0, n = 1 + rng.index(4); k < n; ++k) text += vocab[rng.index(vocab.size())] + " ";
    const Response r = service.handle_reward(json{{"state_id", fx.states[state].id}, {"action_text", text}}.dump());
    if (r.status != 200) {
      ++parity_failures;
      continue;
    }
    const double err =
        std::abs(json::parse(r.body)["reward"].get<double>() - env->reward(state, action_from_text(*env, text)));
    max_err = std::max(max_err, err);
  }

  // 32 concurrent clients against serial answers.
  struct Call {
    std::string path, body, expected;
  };
  std::vector<Call> calls;
  for (int i = 0; i < 96; ++i) {
    const std::string text = vocab[rng.index(vocab.size())] + " " + vocab[rng.index(vocab.size())];
    const std::string id = fx.states[rng.index(fx.states.size())].id;
    Call c;
    if (i % 3 == 0) {
      c = {"/v1/retrieve", json{{"query", text}, {"k", 1 + rng.index(20)}}.dump(), ""};
      c.expected = service.handle_retrieve(c.body).body;
    } else if (i % 3 == 1) {
      c = {"/v1/reward", json{{"state_id", id}, {"action_text", text}}.dump(), ""};
      c.expected = service.handle_reward(c.body).body;
    } else {
      c = {"/v1/reward",
           json{{"batch", {{{"state_id", id}, {"action_text", text}}, {{"state_id", id}, {"action_text", "x"}}}}}
               .dump(),
           ""};
      c.expected = service.handle_reward(c.body).body;
    }
    calls.push_back(std::move(c));
  }
  ServiceConfig cfg;
  cfg.port = 0;
  HttpServer server(service, cfg);
  const int port = server.bind();
  std::thread listener([&] { server.listen(); });
  constexpr int kClients = 32;
  std::vector<int> failures(kClients, 0), mismatches(kClients, 0);
  std::vector<std::thread> clients;
  for (int t = 0; t < kClients; ++t) {
    clients.emplace_back([&, t] {
      httplib::Client cli("127.0.0.1", port);
      for (std::size_t k = 0; k < calls.size(); ++k) {
        const Call& c = calls[(k + static_cast<std::size_t>(t) * 7) % calls.size()];
        auto res = cli.Post(c.path, c.body, "application/json");
        if (!res || res->status != 200) ++failures[t];
        else if (res->body != c.expected) ++mismatches[t];
      }
    });
  }
  for (auto& c : clients) c.join();
  server.stop();
  listener.join();
  const int failed = std::accumulate(failures.begin(), failures.end(), 0);
  const int mismatched = std::accumulate(mismatches.begin(), mismatches.end(), 0);

  const bool ok = parity_failures == 0 && max_err <= 1e-12 && failed == 0 && mismatched == 0;
  return {ok, fmt("parity max_err=%.3g http_failures=%.0f mismatches=%.0f non200_parity=%.0f", max_err, failed,
                  mismatched, parity_failures)};
}

Outcome a10() {
  RunConfig cfg = fixture_run(TaskKind::product_search, 0, "a10");
  const auto base = cfg.out;
  cfg.out = base / "run1";
  run_training(cfg);
  cfg.out = base / "run2";
  run_training(cfg);
  const std::string first = read_file(base / "run1" / "train_log.jsonl");
  const std::string second = read_file(base / "run2" / "train_log.jsonl");
  const bool ok = !first.empty() && first == second;
  return {ok, std::to_string(first.size()) + " bytes, " + (first == second ? "identical" : "different")};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"A1 bm25 oracle equivalence", a1},   {"A2 metric oracles", a2},
      {"A3 gradient correctness", a3},      {"A4 sft convergence", a4},
      {"A5 closed-loop grpo", a5},          {"A6 performance bound", a6},
      {"A7 rl over sft", a7},               {"A8 rerank grpo", a8},
      {"A9 service parity and concurrency", a9}, {"A10 deterministic training", a10},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.passed;
    std::printf("%s %s (%.1fs) %s\n", o.passed ? "PASS" : "FAIL", name, secs, o.detail.c_str());
    std::fflush(stdout);
  }
  std::error_code ec;
  std::filesystem::remove_all(scratch_root(), ec);
  return failed == 0 ? 0 : 1;
}
