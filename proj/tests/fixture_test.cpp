#include <gtest/gtest.h>

#include "rlrec/envs.hpp"
#include "rlrec/error.hpp"
#include "rlrec/fixture.hpp"
#include "support.hpp"

using namespace rlrec;

namespace {

void expect_planted_optimum(TaskKind kind) {
  FixtureParams p = FixtureParams::defaults(kind);
  p.seed = 3;
  const Fixture fx = generate_fixture(p);
  auto data = std::make_shared<const TaskData>(fx.corpus(), fx.relevance(fx.corpus()));
  const auto env = make_environment(kind, data, fx.config.env);
  for (std::size_t i = 0; i < fx.states.size(); ++i) {
    EXPECT_EQ(env->reward_text(i, fx.planted[i]), 1.0) << fx.states[i].id;
    EXPECT_LT(env->reward_text(i, fx.raw[i]), 1.0) << fx.states[i].id;
  }
}

}  // namespace

TEST(Fixture, ProductSearchPlantedOptimum) { expect_planted_optimum(TaskKind::product_search); }
TEST(Fixture, SeqRecPlantedOptimum) { expect_planted_optimum(TaskKind::seq_rec); }
TEST(Fixture, RerankPlantedOptimum) { expect_planted_optimum(TaskKind::rerank); }

TEST(Fixture, DefaultSizes) {
  const Fixture ps = generate_fixture(FixtureParams::defaults(TaskKind::product_search));
  EXPECT_EQ(ps.documents.size(), 200u);
  EXPECT_EQ(ps.corpus().vocabulary().size(), 50u);
  EXPECT_EQ(ps.splits.train.size(), 40u);
  EXPECT_EQ(ps.splits.valid.size(), 10u);
  EXPECT_EQ(ps.splits.test.size(), 10u);
  EXPECT_EQ(ps.config.env.max_query_length, 4);

  const Fixture rr = generate_fixture(FixtureParams::defaults(TaskKind::rerank));
  EXPECT_EQ(rr.states.size(), 20u);
  for (const auto& s : rr.states) EXPECT_EQ(s.rerank().candidates.size(), 8u);
}

TEST(Fixture, RawStateTextHasNoPlantedToken) {
  const Fixture fx = generate_fixture(FixtureParams::defaults(TaskKind::product_search));
  for (std::size_t i = 0; i < fx.states.size(); ++i) {
    for (const auto& planted : tokenize(fx.planted[i]))
      for (const auto& raw : tokenize(fx.states[i].query())) EXPECT_NE(planted, raw);
  }
}

TEST(Fixture, SameSeedWritesIdenticalBytes) {
  fixtures::TempDir a("fx_a"), b("fx_b");
  FixtureParams p = FixtureParams::defaults(TaskKind::seq_rec);
  p.seed = 11;
  write_fixture(generate_fixture(p), a.path());
  write_fixture(generate_fixture(p), b.path());
  for (const char* f : {"corpus.jsonl", "relevance.jsonl", "splits.json", "teacher.jsonl", "planted.jsonl",
                        "config.json"}) {
    const std::string x = fixtures::read_file(a / f);
    EXPECT_FALSE(x.empty()) << f;
    EXPECT_EQ(x, fixtures::read_file(b / f)) << f;
  }
  p.seed = 12;
  fixtures::TempDir c("fx_c");
  write_fixture(generate_fixture(p), c.path());
  EXPECT_NE(fixtures::read_file(a / "corpus.jsonl"), fixtures::read_file(c / "corpus.jsonl"));
}

TEST(Fixture, EmittedConfigLoads) {
  fixtures::TempDir dir("fx_cfg");
  write_fixture(generate_fixture(FixtureParams::defaults(TaskKind::rerank)), dir.path());
  const RunConfig c = load_run_config(dir / "config.json");
  EXPECT_NO_THROW(c.validate_paths());
  EXPECT_EQ(c.task, TaskKind::rerank);
  EXPECT_TRUE(c.grpo.sft_warm_start);
  EXPECT_FALSE(c.env.masked_permutations);
}

TEST(Fixture, ParameterValidation) {
  FixtureParams p;
  p.vocab = 10;
  EXPECT_THROW(generate_fixture(p), ConfigError);
  p = {};
  p.train_states = 0;
  EXPECT_THROW(generate_fixture(p), ConfigError);
}
