#include <numeric>

#include <gtest/gtest.h>

#include "rlrec/error.hpp"
#include "rlrec/fixture.hpp"
#include "rlrec/train.hpp"
#include "support.hpp"

using namespace rlrec;

namespace {

RunConfig fixture_config(const fixtures::TempDir& dir, TaskKind kind, std::uint64_t seed = 0) {
  FixtureParams p = FixtureParams::defaults(kind);
  p.seed = seed;
  write_fixture(generate_fixture(p), dir.path());
  RunConfig c = load_run_config(dir / "config.json");
  c.out = dir / "run";
  return c;
}

}  // namespace

TEST(Train, ZeroStepsKeepsTheInitialEval) {
  fixtures::TempDir dir("train_zero");
  RunConfig c = fixture_config(dir, TaskKind::product_search);
  c.grpo.steps = 0;
  const RunContext ctx = RunContext::load(c);
  const TrainResult r = train(c, ctx);
  const EvalSummary init = evaluate_greedy(*ctx.env, initial_policy(c, *ctx.env), ctx.report_states());
  EXPECT_EQ(r.final.ndcg, init.ndcg);
  EXPECT_EQ(r.initial.ndcg, init.ndcg);
  EXPECT_EQ(r.best_step, 0);
  EXPECT_TRUE(r.log.empty());

  c.trainer = TrainerKind::sft;
  c.sft.steps = 0;
  EXPECT_EQ(train(c, ctx).final.ndcg, init.ndcg);
}

TEST(Train, LogsAreBitIdenticalAcrossRuns) {
  fixtures::TempDir dir("train_det");
  RunConfig c = fixture_config(dir, TaskKind::product_search, 4);
  c.grpo.steps = 15;
  c.out = dir / "a";
  run_training(c);
  c.out = dir / "b";
  run_training(c);
  const std::string a = fixtures::read_file(dir / "a" / "train_log.jsonl");
  EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 15);
  EXPECT_EQ(a, fixtures::read_file(dir / "b" / "train_log.jsonl"));
  EXPECT_EQ(fixtures::read_file(dir / "a" / "checkpoint.txt"), fixtures::read_file(dir / "b" / "checkpoint.txt"));
}

TEST(Train, RunWritesArtifacts) {
  fixtures::TempDir dir("train_out");
  RunConfig c = fixture_config(dir, TaskKind::product_search);
  c.grpo.steps = 3;
  const TrainResult r = run_training(c);
  for (const char* f : {"config.json", "train_log.jsonl", "checkpoint.txt", "eval.json"})
    EXPECT_TRUE(std::filesystem::exists(c.out / f)) << f;
  const RunContext ctx = RunContext::load(c);
  const NeuralPolicy back = load_checkpoint(c.out / "checkpoint.txt", ctx.data->corpus);
  EXPECT_EQ(back.parameters(), r.best.parameters());
  EXPECT_NE(format_eval_table(r, 10).find("ndcg@10"), std::string::npos);
  EXPECT_EQ(load_run_config(c.out / "config.json").corpus, c.corpus);

  const Corpus other({{"x", "unrelated words", "", std::nullopt}});
  EXPECT_THROW(load_checkpoint(c.out / "checkpoint.txt", other), IngestError);
}

// Mean reward over the last tenth of the steps is at least the first tenth's.
TEST(Train, LearningOccursOnFixtures) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    fixtures::TempDir dir("train_learn" + std::to_string(seed));
    const RunConfig c = fixture_config(dir, TaskKind::product_search, seed);
    const RunContext ctx = RunContext::load(c);
    const TrainResult r = train(c, ctx);
    const std::size_t tenth = r.log.size() / 10;
    ASSERT_GT(tenth, 0u);
    auto mean = [&](std::size_t from) {
      double s = 0.0;
      for (std::size_t i = from; i < from + tenth; ++i) s += r.log[i].mean_reward;
      return s / static_cast<double>(tenth);
    };
    EXPECT_GE(mean(r.log.size() - tenth), mean(0)) << "seed " << seed;
  }
}

TEST(Train, SftLogsNll) {
  fixtures::TempDir dir("train_sft");
  RunConfig c = fixture_config(dir, TaskKind::product_search);
  c.trainer = TrainerKind::sft;
  c.sft.steps = 30;
  c.sft.samples = 500;
  const RunContext ctx = RunContext::load(c);
  const TrainResult r = train(c, ctx);
  ASSERT_EQ(r.log.size(), 30u);
  EXPECT_TRUE(r.log.front().nll.has_value());
  EXPECT_LT(*r.log.back().nll, *r.log.front().nll);
  EXPECT_NE(to_json_line(r.log.front()).find("\"nll\":"), std::string::npos);
}

TEST(Train, WarmStartReportsTheRandomInitialization) {
  fixtures::TempDir dir("train_warm");
  RunConfig c = fixture_config(dir, TaskKind::rerank);
  c.grpo.steps = 2;
  c.sft.steps = 20;
  const RunContext ctx = RunContext::load(c);
  const TrainResult r = train(c, ctx);
  const EvalSummary init = evaluate_greedy(*ctx.env, initial_policy(c, *ctx.env), ctx.report_states());
  EXPECT_EQ(r.initial.ndcg, init.ndcg);
  EXPECT_EQ(r.log.size(), 2u);
}

TEST(ActionText, QueriesAndPermutations) {
  fixtures::TempDir dir("train_text");
  const RunConfig c = fixture_config(dir, TaskKind::rerank);
  const RunContext ctx = RunContext::load(c);
  EXPECT_EQ(action_from_text(*ctx.env, "perm:1,0,2,3,4,5,6,7").tokens,
            (std::vector<int>{1, 0, 2, 3, 4, 5, 6, 7, 8}));
  EXPECT_THROW(action_from_text(*ctx.env, "perm:1,1"), Error);
}

TEST(RunContext, SplitOfAnotherKindIsRejected) {
  fixtures::TempDir dir("train_split");
  RunConfig c = fixture_config(dir, TaskKind::product_search);
  fixtures::write_file(dir / "splits.json", R"({"train":["nope"],"valid":[],"test":[]})");
  try {
    RunContext::load(c);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("nope"), std::string::npos);
  }
}
