#include <cmath>

#include <gtest/gtest.h>

#include "rlrec/error.hpp"
#include "rlrec/retrieval.hpp"
#include "support.hpp"

using namespace rlrec;

namespace {
std::vector<TokenId> q(const Corpus& c, std::vector<std::string> words) { return c.encode(words); }
}  // namespace

TEST(Index, CountsOneDocument) {
  const Corpus c({{"d", "a a b", "", std::nullopt}});
  const InvertedIndex idx(c);
  const TokenId a = *c.vocabulary().find("a"), b = *c.vocabulary().find("b");
  EXPECT_EQ(idx.df(a), 1u);
  EXPECT_EQ(idx.df(b), 1u);
  EXPECT_EQ(idx.tf(a, 0), 2u);
  EXPECT_EQ(idx.doc_length(0), 3u);
  EXPECT_DOUBLE_EQ(idx.avgdl(), 3.0);
}

TEST(Index, EmptyCorpusIsAnError) { EXPECT_THROW(InvertedIndex(Corpus({})), Error); }

TEST(Index, IdenticalDocuments) {
  const Corpus c({{"d1", "x y", "", std::nullopt}, {"d2", "x y", "", std::nullopt}});
  const InvertedIndex idx(c);
  for (TokenId t = 0; t < 2; ++t) EXPECT_EQ(idx.df(t), 2u);
}

TEST(Bm25, WorkedExample) {
  const Corpus c = fixtures::three_docs();
  const InvertedIndex idx(c);
  const Bm25Params p;
  const auto red = q(c, {"red"});
  EXPECT_NEAR(bm25_score(idx, p, red, 0), std::log(1.6) / 2.2, 1e-12);
  EXPECT_NEAR(bm25_score(idx, p, red, 0), 0.2136, 5e-5);
  EXPECT_EQ(bm25_score(idx, p, red, 1), 0.0);
  EXPECT_EQ(bm25_score(idx, p, red, 0), bm25_score(idx, p, red, 2));
  EXPECT_EQ(bm25_score(idx, p, {}, 0), 0.0);
}

TEST(Retrieve, TiesBreakByOrdinal) {
  const Corpus c = fixtures::three_docs();
  const InvertedIndex idx(c);
  const auto hits = retrieve(idx, {}, q(c, {"red"}), 10);
  EXPECT_EQ(ranked_ids(c, hits), (std::vector<std::string>{"d1", "d3"}));
  EXPECT_EQ(ranked_ids(c, retrieve(idx, {}, q(c, {"red"}), 1)), (std::vector<std::string>{"d1"}));
  EXPECT_TRUE(retrieve(idx, {}, q(c, {"zzz"}), 5).empty());
}

TEST(Retrieve, DescendingScores) {
  const Corpus c({{"a", "red red shoes", "", std::nullopt},
                  {"b", "red", "", std::nullopt},
                  {"c", "blue shoes", "", std::nullopt},
                  {"d", "red shoes", "", std::nullopt}});
  const InvertedIndex idx(c);
  const auto hits = retrieve(idx, {}, q(c, {"red", "shoes"}), 10);
  ASSERT_EQ(hits.size(), 4u);
  for (std::size_t i = 1; i < hits.size(); ++i) EXPECT_GE(hits[i - 1].score, hits[i].score);
}

TEST(Bm25Params, Validation) {
  EXPECT_THROW((Bm25Params{-1.0, 0.5}.validate()), ConfigError);
  EXPECT_THROW((Bm25Params{1.2, 1.5}.validate()), ConfigError);
  EXPECT_NO_THROW((Bm25Params{0.0, 0.0}.validate()));
}
