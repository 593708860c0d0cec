#include <sstream>

#include <gtest/gtest.h>

#include "rlrec/config.hpp"
#include "rlrec/error.hpp"
#include "support.hpp"

using namespace rlrec;

namespace {

const char* kMinimal = R"({"task": "product_search",
  "data": {"corpus": "c.jsonl", "relevance": "r.jsonl", "splits": "s.json"}})";

std::string error_of(const std::string& text) {
  try {
    parse_run_config(text, "/base");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(RunConfig, MinimalUsesDefaults) {
  const RunConfig c = parse_run_config(kMinimal, "/base");
  EXPECT_EQ(c.task, TaskKind::product_search);
  EXPECT_EQ(c.corpus, std::filesystem::path("/base/c.jsonl"));
  EXPECT_EQ(c.trainer, TrainerKind::grpo);
  EXPECT_EQ(c.grpo.config.group_size, 12);
  EXPECT_EQ(c.grpo.config.clip_eps, 0.2);
  EXPECT_EQ(c.grpo.config.sampler.temperature, 0.6);
  EXPECT_EQ(c.grpo.config.sampler.top_p, 0.95);
  EXPECT_EQ(c.env.bm25.k1, 1.2);
  EXPECT_EQ(c.env.bm25.b, 0.75);
  EXPECT_FALSE(c.grpo.sft_warm_start);
}

TEST(RunConfig, UnknownKeysNameTheField) {
  EXPECT_NE(error_of(R"({"task":"product_search","data":{"corpus":"c","relevance":"r","splits":"s"},
                         "grpo":{"lerning_rate":0.1}})")
                .find("grpo.lerning_rate"),
            std::string::npos);
  EXPECT_NE(error_of(R"({"task":"product_search","data":{"corpus":"c","relevance":"r","splits":"s"},"sed":1})")
                .find("sed"),
            std::string::npos);
}

TEST(RunConfig, TypeAndRangeErrors) {
  EXPECT_NE(error_of(R"({"task":"product_search","data":{"corpus":"c","relevance":"r","splits":"s"},
                         "grpo":{"group_size":"many"}})")
                .find("grpo.group_size"),
            std::string::npos);
  EXPECT_NE(error_of(R"({"task":"shopping","data":{"corpus":"c","relevance":"r","splits":"s"}})"), "");
  EXPECT_NE(error_of(R"({"task":"product_search","data":{"corpus":"c","relevance":"r","splits":"s"},
                         "bm25":{"b":2}})"),
            "");
  EXPECT_NE(error_of(R"({"task":"product_search","data":{"corpus":"c","relevance":"r","splits":"s"},
                         "trainer":"sft"})")
                .find("data.teacher"),
            std::string::npos);
  EXPECT_NE(error_of("{not json"), "");
  EXPECT_NE(error_of(R"({"task":"product_search","data":{"relevance":"r","splits":"s"}})").find("data.corpus"),
            std::string::npos);
}

TEST(RunConfig, DumpParsesBack) {
  RunConfig c = parse_run_config(R"({"task":"rerank","data":{"corpus":"c","relevance":"r","splits":"s",
      "teacher":"t.jsonl"},"reward":{"components":[{"kind":"format","cutoff":null,"weight":0.5},
      {"kind":"ndcg","cutoff":10,"weight":0.5}],"train_cutoff":50,"eval_cutoff":10},
      "grpo":{"steps":7,"sft_warm_start":true,"ratio":"token"},"seed":9,"out":"o"})",
                                 "/base");
  const RunConfig back = parse_run_config(dump_run_config(c, "/base"), "/base");
  EXPECT_EQ(dump_run_config(back, "/base"), dump_run_config(c, "/base"));
  EXPECT_EQ(back.teacher, std::filesystem::path("/base/t.jsonl"));
  EXPECT_EQ(back.env.reward.components.size(), 2u);
  EXPECT_EQ(*back.env.reward.components[1].cutoff, 10u);
  EXPECT_EQ(back.grpo.config.ratio, RatioMode::token);
  EXPECT_TRUE(back.grpo.sft_warm_start);
  EXPECT_EQ(back.seed, 9u);
}

TEST(RunConfig, MissingFilesAreReported) {
  const RunConfig c = parse_run_config(kMinimal, "/nonexistent");
  try {
    c.validate_paths();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("data.corpus"), std::string::npos);
  }
}

TEST(Splits, RoundTrip) {
  fixtures::TempDir dir("splits");
  const Splits s{{"a", "b"}, {"c"}, {}};
  {
    std::ofstream out(dir / "s.json");
    write_splits(s, out);
  }
  const Splits back = load_splits(dir / "s.json");
  EXPECT_EQ(back.train, s.train);
  EXPECT_EQ(back.valid, s.valid);
  EXPECT_TRUE(back.test.empty());
}

TEST(Teacher, ParsesAndChecksProbabilities) {
  std::istringstream ok(R"({"state_id":"q1","outputs":[{"text":"red","prob":0.25},{"text":"blue","prob":0.75}]}
)");
  const Teacher t = parse_teacher(ok);
  ASSERT_EQ(t.outputs.size(), 1u);
  EXPECT_EQ(t.outputs[0][1].text, "blue");
  std::stringstream round;
  write_teacher(t, round);
  EXPECT_EQ(parse_teacher(round).outputs[0][0].prob, 0.25);

  std::istringstream bad(R"({"state_id":"q1","outputs":[{"text":"red","prob":0.5}]}
)");
  EXPECT_THROW(parse_teacher(bad), Error);
}
