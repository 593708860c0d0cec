#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rlrec/random.hpp"

namespace rlrec {

/// Token ids over an action vocabulary whose last id is STOP. STOP appears
/// exactly once, at the end; at most max_length tokens precede it.
struct ActionSequence {
  std::vector<int> tokens;

  friend bool operator==(const ActionSequence&, const ActionSequence&) = default;
  friend auto operator<=>(const ActionSequence&, const ActionSequence&) = default;
};

/// Throws Error when `action` violates the STOP / length invariants.
void validate_action(const ActionSequence& action, int vocab_size, int max_length);

/// What a policy conditions on for one state.
struct PolicyInput {
  /// Row index for tabular policies.
  std::size_t state = 0;
  /// Bag of state feature ids for neural policies (duplicates count).
  std::vector<int> features;
  /// When > 0, next-token distributions are restricted to valid
  /// permutations of this many slots.
  int permutation_slots = 0;
};

/// Autoregressive categorical policy over an action vocabulary.
class Policy {
 public:
  virtual ~Policy() = default;

  /// Number of action tokens including STOP.
  virtual int vocab_size() const = 0;
  virtual int max_length() const = 0;
  int stop_token() const { return vocab_size() - 1; }
  /// Id used as the "previous token" at position 0.
  int begin_token() const { return vocab_size(); }

  /// Temperature-1 log-probabilities of the next token after `prefix`
  /// (prefix.size() < max_length()). Entries may be -inf.
  virtual void next_log_probs(const PolicyInput& input, std::span<const int> prefix,
                              Eigen::Ref<Eigen::VectorXd> out) const = 0;
};

/// next_log_probs with the input's permutation mask applied and renormalized.
void next_distribution(const Policy& policy, const PolicyInput& input,
                       std::span<const int> prefix, Eigen::Ref<Eigen::VectorXd> log_probs);

struct SamplerConfig {
  double temperature = 0.6;
  double top_p = 0.95;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Rollout {
  ActionSequence action;
  /// Temperature-1, untruncated log-probability of each emitted token; 0 for
  /// the STOP forced at max_length.
  std::vector<double> token_log_probs;
  double log_prob = 0.0;
};

/// Draws tokens from the temperature-scaled, nucleus-truncated distribution.
Rollout sample(const Policy& policy, const PolicyInput& input, const SamplerConfig& sampler, Rng& rng);

/// Argmax decoding (lowest id on ties); the temperature -> 0 limit.
ActionSequence greedy(const Policy& policy, const PolicyInput& input);

/// Sum of token log-probabilities. -inf when a token has zero probability.
double log_prob(const Policy& policy, const PolicyInput& input, const ActionSequence& action);

/// Per-token log-probabilities, same convention as Rollout::token_log_probs.
std::vector<double> token_log_probs(const Policy& policy, const PolicyInput& input,
                                    const ActionSequence& action);

inline constexpr std::size_t kDefaultEnumerationBound = 100000;

/// Every action with nonzero probability, in depth-first token order.
/// Throws EnumerationBoundError beyond `bound` sequences.
std::vector<std::pair<ActionSequence, double>> enumerate_actions(
    const Policy& policy, const PolicyInput& input, std::size_t bound = kDefaultEnumerationBound);

/// Every structurally valid action (including zero-probability ones) for a
/// vocabulary and length, in the same depth-first order.
std::vector<ActionSequence> all_actions(int vocab_size, int max_length,
                                        std::size_t bound = kDefaultEnumerationBound);

/// Probability tables indexed by (state, position, previous token).
class TabularPolicy : public Policy {
 public:
  /// Uniform rows.
  TabularPolicy(std::size_t num_states, int vocab_size, int max_length);

  int vocab_size() const override { return vocab_size_; }
  int max_length() const override { return max_length_; }
  std::size_t num_states() const { return num_states_; }

  /// Categorical over the vocabulary; `prev` is begin_token() at position 0.
  Eigen::Ref<const Eigen::VectorXd> row(std::size_t state, int position, int prev) const;
  /// Throws Error unless `probs` is a distribution (non-negative, sums to 1 within 1e-9).
  void set_row(std::size_t state, int position, int prev, const Eigen::VectorXd& probs);

  void next_log_probs(const PolicyInput& input, std::span<const int> prefix,
                      Eigen::Ref<Eigen::VectorXd> out) const override;

 private:
  Eigen::MatrixXd& table(std::size_t state, int position);
  const Eigen::MatrixXd& table(std::size_t state, int position) const;

  std::size_t num_states_;
  int vocab_size_;
  int max_length_;
  // One (vocab x vocab+1) table per (state, position); column = previous token.
  std::vector<Eigen::MatrixXd> tables_;
};

struct NeuralDims {
  int num_features = 1;
  int vocab_size = 2;
  int max_length = 1;
  int embed = 16;
  int hidden = 32;

  void validate() const;
  friend bool operator==(const NeuralDims&, const NeuralDims&) = default;
};

/// Small differentiable policy:
///   x_t = sum(feature embeddings) + token_embedding[prev] + position_embedding[t]
///   logits_t = W2 tanh(W1 x_t + b1) + b2
/// All parameters live in one flat vector; the accessors are Eigen maps
/// into it.
class NeuralPolicy : public Policy {
 public:
  /// Weights and embeddings uniform in [-0.1, 0.1], biases zero.
  NeuralPolicy(const NeuralDims& dims, std::uint64_t seed);

  int vocab_size() const override { return dims_.vocab_size; }
  int max_length() const override { return dims_.max_length; }
  const NeuralDims& dims() const { return dims_; }

  Eigen::VectorXd& parameters() { return params_; }
  const Eigen::VectorXd& parameters() const { return params_; }

  using MatrixMap = Eigen::Map<Eigen::MatrixXd>;
  using ConstMatrixMap = Eigen::Map<const Eigen::MatrixXd>;
  using VectorMap = Eigen::Map<Eigen::VectorXd>;
  using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;

  // embed x num_features, embed x (vocab + 1), embed x max_length,
  // hidden x embed, hidden, vocab x hidden, vocab.
  ConstMatrixMap feature_embedding() const { return cmat(0); }
  ConstMatrixMap token_embedding() const { return cmat(1); }
  ConstMatrixMap position_embedding() const { return cmat(2); }
  ConstMatrixMap hidden_weight() const { return cmat(3); }
  ConstVectorMap hidden_bias() const { return cvec(4); }
  ConstMatrixMap output_weight() const { return cmat(5); }
  ConstVectorMap output_bias() const { return cvec(6); }
  MatrixMap output_weight() { return mat(5); }
  VectorMap output_bias() { return vec(6); }
  MatrixMap hidden_weight() { return mat(3); }

  /// Views of the same blocks inside a gradient vector.
  VectorMap output_bias_of(Eigen::Ref<Eigen::VectorXd> flat) const;
  MatrixMap feature_embedding_of(Eigen::Ref<Eigen::VectorXd> flat) const;
  MatrixMap token_embedding_of(Eigen::Ref<Eigen::VectorXd> flat) const;

  void next_log_probs(const PolicyInput& input, std::span<const int> prefix,
                      Eigen::Ref<Eigen::VectorXd> out) const override;

  /// Adds sum_t token_weights[t] * grad log pi(token_t | state, prefix_t)
  /// into `grad`. Forced STOP steps contribute nothing. Returns the
  /// sequence log-probability.
  double accumulate_grad(const PolicyInput& input, const ActionSequence& action,
                         std::span<const double> token_weights, Eigen::Ref<Eigen::VectorXd> grad) const;

  /// Text checkpoint with dims, the vocabulary fingerprint and hex-float
  /// parameters, so reload is bit-identical.
  void save(std::ostream& out, std::uint64_t vocab_fingerprint) const;
  /// Throws IngestError on a malformed checkpoint.
  static NeuralPolicy load(std::istream& in, std::uint64_t* vocab_fingerprint = nullptr);

 private:
  struct Block {
    std::size_t offset;
    Eigen::Index rows;
    Eigen::Index cols;
  };

  Eigen::VectorXd state_sum(const PolicyInput& input) const;
  ConstMatrixMap cmat(int b) const;
  ConstVectorMap cvec(int b) const;
  MatrixMap mat(int b);
  VectorMap vec(int b);

  NeuralDims dims_;
  std::vector<Block> blocks_;
  Eigen::VectorXd params_;
};

/// Exact gradient of log_prob with respect to the flat parameter vector.
Eigen::VectorXd grad_log_prob(const NeuralPolicy& policy, const PolicyInput& input,
                              const ActionSequence& action);

}  // namespace rlrec
