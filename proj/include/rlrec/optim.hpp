#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rlrec/policy.hpp"

namespace rlrec {

/// (r_i - mean) / (population std + eps).
std::vector<double> group_advantages(std::span<const double> rewards, double eps);

/// exp(d) - d - 1 with d = log_ref - log_policy. Non-negative.
double kl_penalty_estimate(double log_policy, double log_ref);

/// Adaptive moment estimation, used for gradient ascent.
class Adam {
 public:
  explicit Adam(Eigen::Index size, double learning_rate = 1e-3, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);

  void ascend(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grad);

  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  long steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  Eigen::VectorXd m_, v_;
};

enum class RatioMode { sequence, token };

struct GrpoConfig {
  int group_size = 12;
  double clip_eps = 0.2;
  double kl_coef = 0.001;
  double learning_rate = 1e-3;
  /// Sequences per gradient update; larger than the batch means one update.
  int minibatch_size = 4096;
  int epochs = 1;
  SamplerConfig sampler;
  double advantage_eps = 1e-6;
  RatioMode ratio = RatioMode::sequence;

  void validate() const;
};

struct GroupSample {
  ActionSequence action;
  std::vector<double> old_token_log_probs;
  std::vector<double> ref_token_log_probs;
  double old_log_prob = 0.0;
  double ref_log_prob = 0.0;
  double reward = 0.0;
  double advantage = 0.0;
};

/// One rollout phase: G samples for every input of the batch.
struct GroupBatch {
  std::vector<std::vector<GroupSample>> groups;
};

/// Reward for the batch input at `index` taking `action`.
using RewardFn = std::function<double(std::size_t index, const ActionSequence& action)>;

struct GrpoReport {
  double mean_reward = 0.0;
  double mean_kl = 0.0;
  double clip_frac = 0.0;
};

/// Samples G actions per input from the frozen `policy`, scores them and
/// computes group advantages. Rollouts for input i use an RNG derived from
/// (step_seed, i). Throws Error naming the state on a non-finite reward.
GroupBatch collect_groups(const NeuralPolicy& policy, const NeuralPolicy& reference,
                          std::span<const PolicyInput> batch, const RewardFn& reward,
                          const GrpoConfig& config, std::uint64_t step_seed,
                          std::span<const std::string> state_names = {});

/// Ascends the clipped surrogate minus the KL penalty on a collected batch.
/// Returns the clip fraction over all updates.
double grpo_update(NeuralPolicy& policy, const GroupBatch& groups, std::span<const PolicyInput> batch,
                   const GrpoConfig& config, Adam& optimizer);

/// Rollout phase followed by the update phase.
GrpoReport grpo_step(NeuralPolicy& policy, const NeuralPolicy& reference,
                     std::span<const PolicyInput> batch, const RewardFn& reward,
                     const GrpoConfig& config, Adam& optimizer, std::uint64_t step_seed,
                     std::span<const std::string> state_names = {});

/// One (state, action) pair drawn from a data-generating policy. `state`
/// indexes the caller's input list (tabular row for tabular policies).
struct SftExample {
  std::size_t state = 0;
  ActionSequence action;
};

/// One adaptive-moment ascent step on the mean log-likelihood. Returns the
/// mean negative log-likelihood before the step. Throws Error when empty.
double sft_step(NeuralPolicy& policy, std::span<const PolicyInput> inputs,
                std::span<const SftExample> minibatch, Adam& optimizer);

/// One gradient ascent step on the row logits (log-probabilities) of a
/// tabular policy. Returns the mean negative log-likelihood before the step.
double sft_step(TabularPolicy& policy, std::span<const SftExample> minibatch, double learning_rate);

/// Maximum-likelihood tabular fit: empirical next-token frequencies per
/// (state, position, previous token). Rows with no data stay uniform.
TabularPolicy sft_fit_tabular(std::span<const SftExample> data, std::size_t num_states, int vocab_size,
                              int max_length);

/// N examples: state ~ state_probs, action ~ generator(.|state).
std::vector<SftExample> sample_dataset(const Policy& generator, std::span<const PolicyInput> inputs,
                                       const Eigen::VectorXd& state_probs, std::size_t n, Rng& rng);

}  // namespace rlrec
