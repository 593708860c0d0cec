#include "rlrec/optim.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <tuple>

#include "rlrec/error.hpp"
#include "rlrec/parallel.hpp"

namespace rlrec {

std::vector<double> group_advantages(std::span<const double> rewards, double eps) {
  if (rewards.size() < 2) throw Error("group advantages need at least two rewards");
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double std_pop = std::sqrt(var / n);
  std::vector<double> out;
  out.reserve(rewards.size());
  for (double r : rewards) out.push_back((r - mean) / (std_pop + eps));
  return out;
}

double kl_penalty_estimate(double log_policy, double log_ref) {
  const double d = log_ref - log_policy;
  // expm1 keeps the estimator non-negative near d = 0.
  return std::max(0.0, std::expm1(d) - d);
}

Adam::Adam(Eigen::Index size, double learning_rate, double beta1, double beta2, double eps)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps),
      m_(Eigen::VectorXd::Zero(size)), v_(Eigen::VectorXd::Zero(size)) {}

void Adam::ascend(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grad) {
  if (grad.size() != m_.size() || params.size() != m_.size()) throw Error("optimizer size mismatch");
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  params.array() += lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

void GrpoConfig::validate() const {
  if (group_size < 2) throw ConfigError("grpo.group_size must be >= 2");
  if (!(clip_eps > 0.0)) throw ConfigError("grpo.clip_eps must be > 0");
  if (!(kl_coef >= 0.0)) throw ConfigError("grpo.kl_coef must be >= 0");
  if (!(learning_rate > 0.0)) throw ConfigError("grpo.learning_rate must be > 0");
  if (minibatch_size < 1) throw ConfigError("grpo.minibatch_size must be >= 1");
  if (epochs < 1) throw ConfigError("grpo.epochs must be >= 1");
  if (!(advantage_eps > 0.0)) throw ConfigError("grpo.advantage_eps must be > 0");
  sampler.validate();
}

GroupBatch collect_groups(const NeuralPolicy& policy, const NeuralPolicy& reference,
                          std::span<const PolicyInput> batch, const RewardFn& reward,
                          const GrpoConfig& config, std::uint64_t step_seed,
                          std::span<const std::string> state_names) {
  GroupBatch out;
  out.groups.resize(batch.size());
  parallel_for(batch.size(), [&](std::size_t i) {
    Rng rng = Rng::derive(step_seed, i);
    auto& group = out.groups[i];
    group.resize(static_cast<std::size_t>(config.group_size));
    std::vector<double> rewards;
    rewards.reserve(group.size());
    for (auto& g : group) {
      Rollout r = sample(policy, batch[i], config.sampler, rng);
      g.action = std::move(r.action);
      g.old_token_log_probs = std::move(r.token_log_probs);
      g.old_log_prob = r.log_prob;
      g.ref_token_log_probs = token_log_probs(reference, batch[i], g.action);
      g.ref_log_prob = std::accumulate(g.ref_token_log_probs.begin(), g.ref_token_log_probs.end(), 0.0);
      g.reward = reward(i, g.action);
      if (!std::isfinite(g.reward)) {
        const std::string name = i < state_names.size() ? state_names[i] : "#" + std::to_string(i);
        throw Error("non-finite reward for state " + name);
      }
      rewards.push_back(g.reward);
    }
    const auto adv = group_advantages(rewards, config.advantage_eps);
    for (std::size_t k = 0; k < group.size(); ++k) group[k].advantage = adv[k];
  });
  return out;
}

namespace {

struct SampleRef {
  std::size_t input;
  const GroupSample* sample;
};

// Derivative of the per-unit objective min(rA, clip(r)A) - beta*k3 with
// respect to the current log-probability. Sets `clipped` when the clip binds.
double surrogate_coefficient(double log_now, double log_old, double log_ref, double advantage,
                             const GrpoConfig& config, bool& clipped) {
  const double ratio = std::exp(log_now - log_old);
  clipped = (advantage >= 0.0 && ratio > 1.0 + config.clip_eps) ||
            (advantage < 0.0 && ratio < 1.0 - config.clip_eps);
  const double policy_term = clipped ? 0.0 : ratio * advantage;
  const double kl_term = config.kl_coef * std::expm1(log_ref - log_now);
  return policy_term + kl_term;
}

}  // namespace

double grpo_update(NeuralPolicy& policy, const GroupBatch& groups, std::span<const PolicyInput> batch,
                   const GrpoConfig& config, Adam& optimizer) {
  std::vector<SampleRef> samples;
  for (std::size_t i = 0; i < groups.groups.size(); ++i)
    for (const auto& g : groups.groups[i]) samples.push_back({i, &g});
  if (samples.empty()) return 0.0;

  const Eigen::Index n_params = policy.parameters().size();
  const std::size_t mb = static_cast<std::size_t>(config.minibatch_size);
  std::size_t clipped_units = 0, total_units = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t begin = 0; begin < samples.size(); begin += mb) {
      const std::size_t end = std::min(samples.size(), begin + mb);
      const std::size_t count = end - begin;
      std::vector<Eigen::VectorXd> partial(count);
      std::vector<std::size_t> clipped(count, 0), units(count, 0);
      parallel_for(count, [&](std::size_t j) {
        const SampleRef& s = samples[begin + j];
        const GroupSample& g = *s.sample;
        const PolicyInput& input = batch[s.input];
        const auto now = token_log_probs(policy, input, g.action);
        std::vector<double> weights(g.action.tokens.size(), 0.0);
        bool clip = false;
        if (config.ratio == RatioMode::sequence) {
          const double log_now = std::accumulate(now.begin(), now.end(), 0.0);
          const double c = surrogate_coefficient(log_now, g.old_log_prob, g.ref_log_prob, g.advantage, config, clip);
          std::fill(weights.begin(), weights.end(), c);
          units[j] = 1;
          clipped[j] = clip ? 1 : 0;
        } else {
          for (std::size_t t = 0; t < now.size(); ++t) {
            if (static_cast<int>(t) == policy.max_length()) break;
            weights[t] = surrogate_coefficient(now[t], g.old_token_log_probs[t], g.ref_token_log_probs[t],
                                               g.advantage, config, clip);
            ++units[j];
            clipped[j] += clip ? 1 : 0;
          }
        }
        partial[j] = Eigen::VectorXd::Zero(n_params);
        policy.accumulate_grad(input, g.action, weights, partial[j]);
      });
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(n_params);
      std::size_t mb_units = 0;
      for (std::size_t j = 0; j < count; ++j) {
        grad += partial[j];
        mb_units += units[j];
        clipped_units += clipped[j];
      }
      total_units += mb_units;
      if (mb_units == 0) continue;
      grad /= static_cast<double>(mb_units);
      if (grad.isZero(0.0)) continue;
      optimizer.ascend(policy.parameters(), grad);
    }
  }
  return total_units ? static_cast<double>(clipped_units) / static_cast<double>(total_units) : 0.0;
}

GrpoReport grpo_step(NeuralPolicy& policy, const NeuralPolicy& reference,
                     std::span<const PolicyInput> batch, const RewardFn& reward,
                     const GrpoConfig& config, Adam& optimizer, std::uint64_t step_seed,
                     std::span<const std::string> state_names) {
  const GroupBatch groups = collect_groups(policy, reference, batch, reward, config, step_seed, state_names);
  GrpoReport report;
  std::size_t n = 0;
  for (const auto& group : groups.groups) {
    for (const auto& g : group) {
      report.mean_reward += g.reward;
      report.mean_kl += kl_penalty_estimate(g.old_log_prob, g.ref_log_prob);
      ++n;
    }
  }
  if (n) {
    report.mean_reward /= static_cast<double>(n);
    report.mean_kl /= static_cast<double>(n);
  }
  report.clip_frac = grpo_update(policy, groups, batch, config, optimizer);
  return report;
}

double sft_step(NeuralPolicy& policy, std::span<const PolicyInput> inputs,
                std::span<const SftExample> minibatch, Adam& optimizer) {
  if (minibatch.empty()) throw Error("sft_step needs a non-empty minibatch");
  const Eigen::Index n_params = policy.parameters().size();
  std::vector<Eigen::VectorXd> partial(minibatch.size());
  std::vector<double> lps(minibatch.size());
  parallel_for(minibatch.size(), [&](std::size_t j) {
    const auto& ex = minibatch[j];
    partial[j] = Eigen::VectorXd::Zero(n_params);
    const std::vector<double> ones(ex.action.tokens.size(), 1.0);
    lps[j] = policy.accumulate_grad(inputs[ex.state], ex.action, ones, partial[j]);
  });
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(n_params);
  double nll = 0.0;
  for (std::size_t j = 0; j < minibatch.size(); ++j) {
    grad += partial[j];
    nll -= lps[j];
  }
  const double n = static_cast<double>(minibatch.size());
  grad /= n;
  optimizer.ascend(policy.parameters(), grad);
  return nll / n;
}

double sft_step(TabularPolicy& policy, std::span<const SftExample> minibatch, double learning_rate) {
  if (minibatch.empty()) throw Error("sft_step needs a non-empty minibatch");
  const int v = policy.vocab_size();
  // Count matrices per touched (state, position, prev) row.
  struct RowKey {
    std::size_t state;
    int position, prev;
    bool operator<(const RowKey& o) const {
      return std::tie(state, position, prev) < std::tie(o.state, o.position, o.prev);
    }
  };
  std::map<RowKey, Eigen::VectorXd> counts;
  double nll = 0.0;
  for (const auto& ex : minibatch) {
    const PolicyInput input{ex.state, {}, 0};
    nll -= log_prob(policy, input, ex.action);
    for (std::size_t t = 0; t < ex.action.tokens.size(); ++t) {
      if (static_cast<int>(t) == policy.max_length()) break;
      const int prev = t == 0 ? policy.begin_token() : ex.action.tokens[t - 1];
      auto [it, inserted] = counts.try_emplace(RowKey{ex.state, static_cast<int>(t), prev}, Eigen::VectorXd::Zero(v));
      it->second[ex.action.tokens[t]] += 1.0;
    }
  }
  const double n = static_cast<double>(minibatch.size());
  for (const auto& [key, c] : counts) {
    const Eigen::VectorXd p = policy.row(key.state, key.position, key.prev);
    // d/d logits of (1/N) sum log p = (c - n_row p) / N
    Eigen::VectorXd logits = p.array().log().matrix() + learning_rate * (c - c.sum() * p) / n;
    const double m = logits.maxCoeff();
    Eigen::VectorXd next = (logits.array() - m).exp().matrix();
    next /= next.sum();
    policy.set_row(key.state, key.position, key.prev, next);
  }
  return nll / n;
}

TabularPolicy sft_fit_tabular(std::span<const SftExample> data, std::size_t num_states, int vocab_size,
                              int max_length) {
  TabularPolicy policy(num_states, vocab_size, max_length);
  std::vector<Eigen::MatrixXd> counts(num_states * static_cast<std::size_t>(max_length),
                                      Eigen::MatrixXd::Zero(vocab_size, vocab_size + 1));
  for (const auto& ex : data) {
    validate_action(ex.action, vocab_size, max_length);
    if (ex.state >= num_states) throw Error("sft example state out of range");
    for (std::size_t t = 0; t < ex.action.tokens.size(); ++t) {
      if (static_cast<int>(t) == max_length) break;
      const int prev = t == 0 ? vocab_size : ex.action.tokens[t - 1];
      counts[ex.state * static_cast<std::size_t>(max_length) + t](ex.action.tokens[t], prev) += 1.0;
    }
  }
  for (std::size_t s = 0; s < num_states; ++s) {
    for (int pos = 0; pos < max_length; ++pos) {
      const auto& c = counts[s * static_cast<std::size_t>(max_length) + static_cast<std::size_t>(pos)];
      for (int prev = 0; prev <= vocab_size; ++prev) {
        const double total = c.col(prev).sum();
        if (total > 0.0) policy.set_row(s, pos, prev, c.col(prev) / total);
      }
    }
  }
  return policy;
}

std::vector<SftExample> sample_dataset(const Policy& generator, std::span<const PolicyInput> inputs,
                                       const Eigen::VectorXd& state_probs, std::size_t n, Rng& rng) {
  if (state_probs.size() != static_cast<Eigen::Index>(inputs.size())) throw Error("state_probs size mismatch");
  const SamplerConfig exact{1.0, 1.0, 0};
  std::vector<SftExample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    double u = rng.uniform();
    std::size_t s = 0;
    for (; s + 1 < inputs.size(); ++s) {
      u -= state_probs[static_cast<Eigen::Index>(s)];
      if (u < 0.0) break;
    }
    out.push_back({s, sample(generator, inputs[s], exact, rng).action});
  }
  return out;
}

}  // namespace rlrec
