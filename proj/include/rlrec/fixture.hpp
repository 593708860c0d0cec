#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rlrec/config.hpp"
#include "rlrec/corpus.hpp"

namespace rlrec {

/// Size parameters of a synthetic task family.
///
/// Tokens are split per topic into two surface tokens (seen in state text
/// and in decoy documents) and two planted tokens (seen only in the topic's
/// target documents); the rest are fillers shared by every topic. Raw state
/// text never contains a planted token, so a rewrite is needed to reach the
/// targets.
struct FixtureParams {
  TaskKind kind = TaskKind::product_search;
  std::size_t docs = 200;
  std::size_t vocab = 50;
  std::size_t topics = 10;
  std::size_t targets_per_topic = 4;
  std::size_t train_states = 40;
  std::size_t valid_states = 10;
  std::size_t test_states = 10;
  /// Candidates per rerank state.
  int slots = 8;
  int max_query_length = 4;
  std::uint64_t seed = 0;

  /// Defaults per kind; rerank uses 20 training states and no held-out split.
  static FixtureParams defaults(TaskKind kind);
  /// Throws ConfigError when the sizes cannot host the construction.
  void validate() const;
};

struct Fixture {
  std::vector<Document> documents;
  std::vector<StateRecord> states;
  std::vector<std::vector<Target>> targets;
  Splits splits;
  Teacher teacher;
  /// Per state: an action text that reaches reward 1, and the raw state text
  /// taken as an action (last history title for seq_rec, identity
  /// permutation for rerank).
  std::vector<std::string> planted;
  std::vector<std::string> raw;
  /// Paths relative to the fixture directory.
  RunConfig config;

  Corpus corpus() const;
  RelevanceDict relevance(const Corpus& corpus) const;
};

/// Deterministic in the parameters. Re-checks every state through the
/// environment: the planted action earns reward 1 and the raw action earns
/// strictly less (Error otherwise).
Fixture generate_fixture(const FixtureParams& params);

/// Writes corpus.jsonl, relevance.jsonl, splits.json, teacher.jsonl,
/// planted.jsonl and config.json into `dir`.
void write_fixture(const Fixture& fixture, const std::filesystem::path& dir);

}  // namespace rlrec
