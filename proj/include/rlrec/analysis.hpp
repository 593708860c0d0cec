#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "rlrec/optim.hpp"
#include "rlrec/policy.hpp"

namespace rlrec {

/// sum P ln(P / Q) in nats, with 0 ln(0/q) = 0. +inf when Q(a) = 0 < P(a).
template <typename DerivedP, typename DerivedQ>
double kl_divergence(const Eigen::MatrixBase<DerivedP>& p, const Eigen::MatrixBase<DerivedQ>& q) {
  eigen_assert(p.size() == q.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double pi = p.coeff(i);
    if (pi <= 0.0) continue;
    const double qi = q.coeff(i);
    if (qi <= 0.0) return std::numeric_limits<double>::infinity();
    total += pi * std::log(pi / qi);
  }
  return std::max(0.0, total);
}

/// Half the L1 distance.
template <typename DerivedP, typename DerivedQ>
double tv_distance(const Eigen::MatrixBase<DerivedP>& p, const Eigen::MatrixBase<DerivedQ>& q) {
  return 0.5 * (p - q).cwiseAbs().sum();
}

/// -sum P ln P in nats.
template <typename Derived>
double entropy(const Eigen::MatrixBase<Derived>& p) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double pi = p.coeff(i);
    if (pi > 0.0) total -= pi * std::log(pi);
  }
  return total;
}

/// Enumerable decision problem: state distribution p(s), action space of
/// all sequences over a vocabulary up to max_length, bounded reward table.
struct TabularInstance {
  Eigen::VectorXd state_probs;
  int vocab_size = 2;
  int max_length = 1;
  /// Per state; actions absent from the map have reward 0.
  std::vector<std::map<ActionSequence, double>> rewards;
  double max_reward = 1.0;

  std::size_t num_states() const { return static_cast<std::size_t>(state_probs.size()); }
  double reward(std::size_t state, const ActionSequence& action) const;
  /// Throws Error unless p sums to 1 within 1e-9 and 0 <= f <= R_max.
  void validate() const;
  /// Row index s with the one-hot feature s.
  std::vector<PolicyInput> inputs() const;
  /// Every action of the instance, in depth-first order.
  std::vector<ActionSequence> actions(std::size_t bound = kDefaultEnumerationBound) const;
};

/// Probability of each listed action under the policy.
Eigen::VectorXd sequence_distribution(const Policy& policy, const PolicyInput& input,
                                      std::span<const ActionSequence> actions);

/// J(pi) = sum_s p(s) sum_a pi(a|s) f(a|s).
double exact_performance(const TabularInstance& instance, const Policy& policy,
                         std::size_t bound = kDefaultEnumerationBound);

/// sum_s p(s) max_a f(a|s).
double optimal_performance(const TabularInstance& instance);

/// E_s[KL(p(.|s) || q(.|s))] over action sequences.
double expected_kl(const TabularInstance& instance, const Policy& p, const Policy& q);

struct PinskerReport {
  double lhs = 0.0;  // |J(pi) - J(pi_g)|
  double rhs = 0.0;  // R_max sqrt(E_s KL(pi_g || pi) / 2)
  bool holds = true;
  bool infinite_kl = false;
};

PinskerReport pinsker_bound_check(const TabularInstance& instance, const Policy& policy, const Policy& generator);

struct MleKlReport {
  /// max over states of |E_{pi_g}[-log pi] - (KL(pi_g||pi) + H(pi_g))|.
  double max_identity_residual = 0.0;
  double exact_nll = 0.0;
  double empirical_nll = 0.0;
  double standard_error = 0.0;
  bool within_three_se = false;
};

/// Cross-entropy decomposition per state, and the empirical NLL of
/// `samples` (drawn from the generator) against its exact expectation.
MleKlReport mle_kl_decomposition_check(const TabularInstance& instance, const Policy& generator,
                                       const Policy& policy, std::span<const SftExample> samples);

struct RlVsSftSettings {
  GrpoConfig grpo;
  int grpo_steps = 300;
  std::size_t samples = 100000;
  std::uint64_t seed = 0;
  int embed = 16;
  int hidden = 32;
};

struct RlVsSftReport {
  double j_rl = 0.0;
  double j_sft = 0.0;
  double j_g = 0.0;
  double j_opt = 0.0;
  /// 3 R_max sqrt(ln(2 / 0.05) / (2N)).
  double sft_slack = 0.0;
  bool sft_ceiling_holds = false;  // J_sft <= J_g + slack
  bool rl_dominates = false;       // J_rl >= J_sft - 1e-6
  /// rl_dominates failing means GRPO under-converged, not a counterexample.
  bool under_converged = false;
};

/// SFT: closed-form tabular fit on N generator samples. RL: GRPO on a
/// neural policy with one-hot state features, from a seeded initialization.
RlVsSftReport rl_vs_sft_experiment(const TabularInstance& instance, const TabularPolicy& generator,
                                   const RlVsSftSettings& settings);

/// Rows drawn as normalized (floor + U(0,1)) weights; with `zero_fraction`
/// > 0, entries are zeroed at random (at least one survives per row).
TabularPolicy random_tabular_policy(std::size_t num_states, int vocab_size, int max_length, Rng& rng,
                                    double floor = 0.0, double zero_fraction = 0.0);

/// Random instance: p(s) normalized uniforms, rewards U(0, R_max).
TabularInstance random_instance(std::size_t num_states, int vocab_size, int max_length, double max_reward,
                                Rng& rng);

/// One-state bandit over single-token actions; [STOP] alone earns 0.
TabularInstance bandit_instance(std::span<const double> arm_rewards);

/// Bandit generator placing `arm_probs` on the arms and nothing on [STOP].
TabularPolicy bandit_policy(std::span<const double> arm_probs);

}  // namespace rlrec
