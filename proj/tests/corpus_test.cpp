#include <sstream>

#include <gtest/gtest.h>

#include "rlrec/corpus.hpp"
#include "rlrec/error.hpp"
#include "support.hpp"

using namespace rlrec;

TEST(Tokenize, Rules) {
  EXPECT_TRUE(tokenize("").empty());
  EXPECT_EQ(tokenize("Red-SHOES!!"), (std::vector<std::string>{"red", "shoes"}));
  EXPECT_EQ(tokenize("PlayStation 3 500GB"), (std::vector<std::string>{"playstation", "3", "500gb"}));
}

TEST(Corpus, ParsesWellFormedLines) {
  std::istringstream in(R"({"id":"d1","title":"red shoes"}
{"id":"d2","title":"blue shoes","body":"","category":"c2"}
{"id":"d3","title":"red hat","category":null}
)");
  const Corpus c = parse_corpus(in);
  EXPECT_EQ(c.size(), 3u);
  EXPECT_EQ(c.document(1).category.value_or(""), "c2");
  EXPECT_FALSE(c.document(2).category.has_value());
}

TEST(Corpus, DuplicateIdIsAnError) {
  std::istringstream in("{\"id\":\"d1\",\"title\":\"a\"}\n{\"id\":\"d1\",\"title\":\"b\"}\n");
  try {
    parse_corpus(in);
    FAIL() << "expected IngestError";
  } catch (const IngestError& e) {
    EXPECT_NE(std::string(e.what()).find("d1"), std::string::npos);
  }
}

TEST(Corpus, MalformedLinesNameTheLine) {
  std::istringstream in("{\"id\":\"d1\",\"title\":\"a\"}\n{nope\n");
  try {
    parse_corpus(in);
    FAIL();
  } catch (const IngestError& e) {
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
  }
  std::istringstream no_title("{\"id\":\"d1\",\"title\":\"!!\"}\n");
  EXPECT_THROW(parse_corpus(no_title), IngestError);
}

TEST(Corpus, Vocabulary) {
  const Corpus c = fixtures::three_docs();
  EXPECT_EQ(c.vocabulary().size(), 4u);
  EXPECT_EQ(c.vocabulary().tokens(), (std::vector<std::string>{"red", "shoes", "blue", "hat"}));
  EXPECT_EQ(*c.ordinal("d3"), 2u);
  EXPECT_FALSE(c.ordinal("zz"));
}

TEST(Corpus, RoundTripsThroughJsonl) {
  const Corpus c = fixtures::three_docs();
  std::stringstream ss;
  write_corpus(c, ss);
  const Corpus back = parse_corpus(ss);
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back.vocabulary().fingerprint(), c.vocabulary().fingerprint());
  EXPECT_EQ(back.document(0).category, c.document(0).category);
}

TEST(Relevance, AcceptsPresentItems) {
  const Corpus c = fixtures::three_docs();
  RelevanceDict rel;
  rel.add({"q1", TaskKind::product_search, std::string("red")}, {{"d1", 1.0}}, c);
  EXPECT_EQ(rel.size(), 1u);
  EXPECT_EQ(rel.index_of("q1"), 0u);
}

TEST(Relevance, UnknownItemIsAnError) {
  const Corpus c = fixtures::three_docs();
  RelevanceDict rel;
  EXPECT_THROW(rel.add({"q1", TaskKind::product_search, std::string("red")}, {{"d99", 1.0}}, c), IngestError);
  EXPECT_THROW(rel.index_of("q1"), UnknownStateError);
}

TEST(Relevance, GradedTargetsKeepOrder) {
  const Corpus c = fixtures::three_docs();
  RelevanceDict rel;
  rel.add({"q1", TaskKind::product_search, std::string("red")}, {{"d1", 1.0}, {"d2", 0.5}}, c);
  ASSERT_EQ(rel.targets(0).size(), 2u);
  EXPECT_EQ(rel.targets(0)[0].item_id, "d1");
  EXPECT_EQ(rel.targets(0)[1].gain, 0.5);
}

TEST(Relevance, PayloadChecks) {
  const Corpus c = fixtures::three_docs();
  RelevanceDict rel;
  EXPECT_THROW(rel.add({"s", TaskKind::seq_rec, std::vector<std::string>{}}, {{"d1", 1.0}}, c), IngestError);
  EXPECT_THROW(rel.add({"r", TaskKind::rerank, RerankPayload{"q", {"d1"}}}, {{"d1", 1.0}}, c), IngestError);
  EXPECT_THROW(rel.add({"r", TaskKind::rerank, RerankPayload{"q", {"d1", "d1"}}}, {{"d1", 1.0}}, c), IngestError);
  EXPECT_THROW(rel.add({"q", TaskKind::product_search, std::string("x")}, {{"d1", 0.0}}, c), IngestError);
}

TEST(Relevance, ParsesAllPayloadKinds) {
  const Corpus c = fixtures::three_docs();
  std::istringstream in(R"({"state_id":"q1","task":"product_search","payload":"red","targets":[{"item_id":"d1","gain":1}]}
{"state_id":"h1","task":"seq_rec","payload":["d2","d3"],"targets":[{"item_id":"d1","gain":2}]}
{"state_id":"r1","task":"rerank","payload":{"query":"red","candidates":["d1","d3"]},"targets":[{"item_id":"d3","gain":1}]}
)");
  const RelevanceDict rel = parse_relevance(in, c);
  ASSERT_EQ(rel.size(), 3u);
  EXPECT_EQ(rel.state(1).history().size(), 2u);
  EXPECT_EQ(rel.state(2).rerank().candidates[1], "d3");
  std::stringstream out;
  write_relevance(rel, out);
  EXPECT_EQ(parse_relevance(out, c).size(), 3u);
}
