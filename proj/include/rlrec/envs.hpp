#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rlrec/corpus.hpp"
#include "rlrec/metrics.hpp"
#include "rlrec/policy.hpp"
#include "rlrec/retrieval.hpp"

namespace rlrec {

/// Corpus, relevance dictionary and index, shared read-only by every
/// environment and service worker.
struct TaskData {
  Corpus corpus;
  RelevanceDict relevance;
  InvertedIndex index;

  TaskData(Corpus c, RelevanceDict r);

  static std::shared_ptr<const TaskData> load(const std::filesystem::path& corpus_path,
                                              const std::filesystem::path& relevance_path);
};

/// Query-task action ids are corpus token ids; STOP = vocabulary size.
/// Returns nullopt (decode failure) when no query token remains.
std::optional<std::vector<std::string>> decode_query(const ActionSequence& action, const Vocabulary& vocabulary);

/// Inverse of decode_query for in-vocabulary tokens. Throws Error otherwise.
ActionSequence encode_query(std::span<const std::string> tokens, const Vocabulary& vocabulary);

/// Slot ids before STOP must form a permutation of 0..m-1.
std::optional<std::vector<int>> decode_permutation(const ActionSequence& action, int m);

/// Parses the wire form "perm:i,j,k"; nullopt on any malformed input.
std::optional<std::vector<int>> parse_permutation_text(std::string_view text, int m);

struct EnvConfig {
  Bm25Params bm25;
  RewardSpec reward;
  /// Retrieval depth and default reward cutoff during training.
  std::size_t train_cutoff = 1000;
  std::size_t eval_cutoff = 10;
  /// seq_rec: number of most recent history items used.
  std::size_t history_window = 10;
  /// Query tasks: maximum tokens before STOP.
  int max_query_length = 8;
  /// rerank: restrict sampling to valid permutations.
  bool masked_permutations = false;

  void validate(const Corpus& corpus) const;
};

struct EvalScores {
  double ndcg = 0.0;
  double recall = 0.0;
  bool valid = false;
};

/// Reward callback for one task kind. Immutable; reward is pure and safe to
/// call concurrently.
class Environment {
 public:
  Environment(std::shared_ptr<const TaskData> data, EnvConfig config);
  virtual ~Environment() = default;

  virtual TaskKind kind() const = 0;
  virtual int action_vocab_size() const = 0;
  virtual int max_length() const = 0;
  virtual int num_features() const = 0;

  /// Throws Error when the state belongs to another task kind.
  virtual PolicyInput policy_input(std::size_t state) const = 0;
  virtual double reward(std::size_t state, const ActionSequence& action) const = 0;
  /// NDCG and recall at the evaluation cutoff.
  virtual EvalScores evaluate(std::size_t state, const ActionSequence& action) const = 0;
  /// Reward for a textual action as sent over the wire.
  virtual double reward_text(std::size_t state, std::string_view text) const = 0;

  /// Throws UnknownStateError.
  double reward(std::string_view state_id, const ActionSequence& action) const;

  const TaskData& data() const { return *data_; }
  const EnvConfig& config() const { return config_; }
  std::vector<std::size_t> states() const;
  NeuralDims policy_dims(int embed = 16, int hidden = 32) const;

 protected:
  void require_kind(std::size_t state) const;

  std::shared_ptr<const TaskData> data_;
  EnvConfig config_;
};

/// Rewrites a state into a bag-of-words query, retrieves, and scores.
/// Shared by product search and sequential recommendation.
class QueryEnv : public Environment {
 public:
  using Environment::Environment;
  using Environment::reward;

  int action_vocab_size() const override { return static_cast<int>(data_->corpus.vocabulary().size()) + 1; }
  int max_length() const override { return config_.max_query_length; }
  int num_features() const override { return static_cast<int>(data_->corpus.vocabulary().size()); }

  PolicyInput policy_input(std::size_t state) const override;
  double reward(std::size_t state, const ActionSequence& action) const override;
  EvalScores evaluate(std::size_t state, const ActionSequence& action) const override;
  double reward_text(std::size_t state, std::string_view text) const override;

  /// Reward of a decoded query (nullopt = decode failure).
  double reward_query(std::size_t state, const std::optional<std::vector<std::string>>& query) const;
  EvalScores evaluate_query(std::size_t state, const std::optional<std::vector<std::string>>& query) const;

  /// Token ids describing the state: query tokens, or the titles of the
  /// last `history_window` history items.
  virtual std::vector<TokenId> state_tokens(std::size_t state) const = 0;
};

class ProductSearchEnv final : public QueryEnv {
 public:
  using QueryEnv::QueryEnv;
  TaskKind kind() const override { return TaskKind::product_search; }
  std::vector<TokenId> state_tokens(std::size_t state) const override;
};

class SeqRecEnv final : public QueryEnv {
 public:
  SeqRecEnv(std::shared_ptr<const TaskData> data, EnvConfig config);
  TaskKind kind() const override { return TaskKind::seq_rec; }
  std::vector<TokenId> state_tokens(std::size_t state) const override;
};

/// Orders a fixed candidate list; actions are slot permutations.
class RerankEnv final : public Environment {
 public:
  /// Throws ConfigError unless every rerank state has the same candidate count m >= 2.
  RerankEnv(std::shared_ptr<const TaskData> data, EnvConfig config);
  using Environment::reward;

  TaskKind kind() const override { return TaskKind::rerank; }
  int action_vocab_size() const override { return slots_ + 1; }
  int max_length() const override { return slots_; }
  int num_features() const override { return static_cast<int>(data_->corpus.vocabulary().size()); }
  int slots() const { return slots_; }

  PolicyInput policy_input(std::size_t state) const override;
  double reward(std::size_t state, const ActionSequence& action) const override;
  EvalScores evaluate(std::size_t state, const ActionSequence& action) const override;
  double reward_text(std::size_t state, std::string_view text) const override;

  double reward_permutation(std::size_t state, const std::optional<std::vector<int>>& perm) const;
  EvalScores evaluate_permutation(std::size_t state, const std::optional<std::vector<int>>& perm) const;

 private:
  std::vector<std::string> permuted(std::size_t state, const std::vector<int>& perm) const;

  int slots_ = 0;
};

std::unique_ptr<Environment> make_environment(TaskKind kind, std::shared_ptr<const TaskData> data,
                                              EnvConfig config);

/// One environment per task kind present in the relevance dictionary.
class EnvironmentSet {
 public:
  EnvironmentSet(std::shared_ptr<const TaskData> data, const EnvConfig& config);

  /// Environment responsible for a state.
  const Environment& for_state(std::size_t state) const;
  const TaskData& data() const { return *data_; }

 private:
  std::shared_ptr<const TaskData> data_;
  std::vector<std::unique_ptr<Environment>> by_kind_;
};

enum class Objective { train, eval };

struct OracleResult {
  std::vector<std::string> query;
  double reward = 0.0;
};

inline constexpr std::size_t kDefaultOracleBound = 1000000;

/// Exhaustive search over token multisets of size 1..max_length (BM25 bag
/// scoring makes order irrelevant). Objective::eval scores NDCG at the eval
/// cutoff. Throws EnumerationBoundError when |V|^max_length > bound.
OracleResult best_query_oracle(const QueryEnv& env, std::size_t state, int max_length,
                               Objective objective = Objective::train,
                               std::size_t bound = kDefaultOracleBound);

}  // namespace rlrec
