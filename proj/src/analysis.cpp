#include "rlrec/analysis.hpp"

#include <algorithm>
#include <numeric>

#include "rlrec/error.hpp"

namespace rlrec {

double TabularInstance::reward(std::size_t state, const ActionSequence& action) const {
  const auto& table = rewards.at(state);
  auto it = table.find(action);
  return it == table.end() ? 0.0 : it->second;
}

void TabularInstance::validate() const {
  if (state_probs.size() == 0) throw Error("instance needs at least one state");
  if ((state_probs.array() < 0.0).any() || std::abs(state_probs.sum() - 1.0) > 1e-9)
    throw Error("state probabilities must be a distribution");
  if (rewards.size() != num_states()) throw Error("reward table needs one row per state");
  for (const auto& row : rewards)
    for (const auto& [a, f] : row)
      if (!(f >= 0.0 && f <= max_reward)) throw Error("reward outside [0, R_max]");
}

std::vector<PolicyInput> TabularInstance::inputs() const {
  std::vector<PolicyInput> out;
  for (std::size_t s = 0; s < num_states(); ++s) out.push_back(PolicyInput{s, {static_cast<int>(s)}, 0});
  return out;
}

std::vector<ActionSequence> TabularInstance::actions(std::size_t bound) const {
  return all_actions(vocab_size, max_length, bound);
}

Eigen::VectorXd sequence_distribution(const Policy& policy, const PolicyInput& input,
                                      std::span<const ActionSequence> actions) {
  Eigen::VectorXd p(static_cast<Eigen::Index>(actions.size()));
  for (std::size_t i = 0; i < actions.size(); ++i) {
    p[static_cast<Eigen::Index>(i)] = std::exp(log_prob(policy, input, actions[i]));
  }
  return p;
}

double exact_performance(const TabularInstance& instance, const Policy& policy, std::size_t bound) {
  const auto inputs = instance.inputs();
  double total = 0.0;
  for (std::size_t s = 0; s < instance.num_states(); ++s) {
    double per_state = 0.0;
    for (const auto& [action, prob] : enumerate_actions(policy, inputs[s], bound)) {
      per_state += prob * instance.reward(s, action);
    }
    total += instance.state_probs[static_cast<Eigen::Index>(s)] * per_state;
  }
  return total;
}

double optimal_performance(const TabularInstance& instance) {
  const auto actions = instance.actions();
  double total = 0.0;
  for (std::size_t s = 0; s < instance.num_states(); ++s) {
    double best = 0.0;
    for (const auto& a : actions) best = std::max(best, instance.reward(s, a));
    total += instance.state_probs[static_cast<Eigen::Index>(s)] * best;
  }
  return total;
}

double expected_kl(const TabularInstance& instance, const Policy& p, const Policy& q) {
  const auto actions = instance.actions();
  const auto inputs = instance.inputs();
  double total = 0.0;
  for (std::size_t s = 0; s < instance.num_states(); ++s) {
    const double w = instance.state_probs[static_cast<Eigen::Index>(s)];
    if (w <= 0.0) continue;
    const double kl = kl_divergence(sequence_distribution(p, inputs[s], actions),
                                    sequence_distribution(q, inputs[s], actions));
    if (std::isinf(kl)) return kl;
    total += w * kl;
  }
  return total;
}

PinskerReport pinsker_bound_check(const TabularInstance& instance, const Policy& policy, const Policy& generator) {
  PinskerReport report;
  report.lhs = std::abs(exact_performance(instance, policy) - exact_performance(instance, generator));
  const double kl = expected_kl(instance, generator, policy);
  if (std::isinf(kl)) {
    report.infinite_kl = true;
    report.rhs = kl;
    report.holds = true;
    return report;
  }
  report.rhs = instance.max_reward * std::sqrt(0.5 * kl);
  report.holds = report.lhs <= report.rhs + 1e-9;
  return report;
}

MleKlReport mle_kl_decomposition_check(const TabularInstance& instance, const Policy& generator,
                                       const Policy& policy, std::span<const SftExample> samples) {
  MleKlReport report;
  const auto actions = instance.actions();
  const auto inputs = instance.inputs();
  double exact_sq = 0.0;
  for (std::size_t s = 0; s < instance.num_states(); ++s) {
    const Eigen::VectorXd pg = sequence_distribution(generator, inputs[s], actions);
    double cross = 0.0, cross_sq = 0.0;
    for (std::size_t i = 0; i < actions.size(); ++i) {
      const double w = pg[static_cast<Eigen::Index>(i)];
      if (w <= 0.0) continue;
      const double nll = -log_prob(policy, inputs[s], actions[i]);
      cross += w * nll;
      cross_sq += w * nll * nll;
    }
    const Eigen::VectorXd pt = sequence_distribution(policy, inputs[s], actions);
    const double residual = std::abs(cross - (kl_divergence(pg, pt) + entropy(pg)));
    if (std::isfinite(residual)) report.max_identity_residual = std::max(report.max_identity_residual, residual);
    const double ps = instance.state_probs[static_cast<Eigen::Index>(s)];
    report.exact_nll += ps * cross;
    exact_sq += ps * cross_sq;
  }
  if (!samples.empty()) {
    double sum = 0.0;
    for (const auto& ex : samples) sum -= log_prob(policy, inputs.at(ex.state), ex.action);
    const double n = static_cast<double>(samples.size());
    report.empirical_nll = sum / n;
    const double var = std::max(0.0, exact_sq - report.exact_nll * report.exact_nll);
    report.standard_error = std::sqrt(var / n);
    report.within_three_se = std::abs(report.empirical_nll - report.exact_nll) <= 3.0 * report.standard_error + 1e-12;
  }
  return report;
}

RlVsSftReport rl_vs_sft_experiment(const TabularInstance& instance, const TabularPolicy& generator,
                                   const RlVsSftSettings& settings) {
  instance.validate();
  RlVsSftReport report;
  report.j_g = exact_performance(instance, generator);
  report.j_opt = optimal_performance(instance);
  if (!(report.j_g < report.j_opt)) throw Error("rl_vs_sft_experiment needs a strictly suboptimal generator");

  const auto inputs = instance.inputs();
  Rng data_rng = Rng::derive(settings.seed, 1);
  const auto data = sample_dataset(generator, inputs, instance.state_probs, settings.samples, data_rng);
  const TabularPolicy sft = sft_fit_tabular(data, instance.num_states(), instance.vocab_size, instance.max_length);
  report.j_sft = exact_performance(instance, sft);
  report.sft_slack = 3.0 * instance.max_reward *
                     std::sqrt(std::log(2.0 / 0.05) / (2.0 * static_cast<double>(settings.samples)));
  report.sft_ceiling_holds = report.j_sft <= report.j_g + report.sft_slack;

  const NeuralDims dims{static_cast<int>(instance.num_states()), instance.vocab_size, instance.max_length,
                        settings.embed, settings.hidden};
  NeuralPolicy policy(dims, Rng::mix(settings.seed));
  const NeuralPolicy reference = policy;
  Adam optimizer(policy.parameters().size(), settings.grpo.learning_rate);
  auto reward = [&](std::size_t i, const ActionSequence& a) { return instance.reward(inputs[i].state, a); };
  for (int step = 0; step < settings.grpo_steps; ++step) {
    grpo_step(policy, reference, inputs, reward, settings.grpo, optimizer,
              Rng::mix(settings.seed ^ Rng::mix(static_cast<std::uint64_t>(step) + 2)));
  }
  report.j_rl = exact_performance(instance, policy);
  report.rl_dominates = report.j_rl >= report.j_sft - 1e-6;
  report.under_converged = !report.rl_dominates;
  return report;
}

TabularPolicy random_tabular_policy(std::size_t num_states, int vocab_size, int max_length, Rng& rng,
                                    double floor, double zero_fraction) {
  TabularPolicy policy(num_states, vocab_size, max_length);
  Eigen::VectorXd row(vocab_size);
  for (std::size_t s = 0; s < num_states; ++s) {
    for (int pos = 0; pos < max_length; ++pos) {
      for (int prev = 0; prev <= vocab_size; ++prev) {
        for (int i = 0; i < vocab_size; ++i) {
          row[i] = (zero_fraction > 0.0 && rng.uniform() < zero_fraction) ? 0.0 : floor + rng.uniform();
        }
        if (row.sum() <= 0.0) row[static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(vocab_size)))] = 1.0;
        row /= row.sum();
        row /= row.sum();
        policy.set_row(s, pos, prev, row);
      }
    }
  }
  return policy;
}

TabularInstance random_instance(std::size_t num_states, int vocab_size, int max_length, double max_reward,
                                Rng& rng) {
  TabularInstance inst;
  inst.vocab_size = vocab_size;
  inst.max_length = max_length;
  inst.max_reward = max_reward;
  inst.state_probs.resize(static_cast<Eigen::Index>(num_states));
  for (auto& p : inst.state_probs) p = 0.05 + rng.uniform();
  inst.state_probs /= inst.state_probs.sum();
  const auto actions = all_actions(vocab_size, max_length);
  inst.rewards.resize(num_states);
  for (auto& row : inst.rewards)
    for (const auto& a : actions) row[a] = max_reward * rng.uniform();
  return inst;
}

TabularInstance bandit_instance(std::span<const double> arm_rewards) {
  TabularInstance inst;
  inst.state_probs = Eigen::VectorXd::Ones(1);
  inst.vocab_size = static_cast<int>(arm_rewards.size()) + 1;
  inst.max_length = 1;
  inst.rewards.resize(1);
  inst.max_reward = 0.0;
  for (std::size_t i = 0; i < arm_rewards.size(); ++i) {
    inst.rewards[0][ActionSequence{{static_cast<int>(i), inst.vocab_size - 1}}] = arm_rewards[i];
    inst.max_reward = std::max(inst.max_reward, arm_rewards[i]);
  }
  return inst;
}

TabularPolicy bandit_policy(std::span<const double> arm_probs) {
  const int v = static_cast<int>(arm_probs.size()) + 1;
  TabularPolicy policy(1, v, 1);
  Eigen::VectorXd row = Eigen::VectorXd::Zero(v);
  for (std::size_t i = 0; i < arm_probs.size(); ++i) row[static_cast<Eigen::Index>(i)] = arm_probs[i];
  policy.set_row(0, 0, policy.begin_token(), row);
  return policy;
}

}  // namespace rlrec
