#include "rlrec/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "rlrec/error.hpp"

namespace rlrec {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

// Sets disallowed entries to -inf for permutation-constrained inputs.
void apply_permutation_mask(const PolicyInput& input, std::span<const int> prefix, int stop,
                            Eigen::Ref<Eigen::VectorXd> values) {
  const int m = input.permutation_slots;
  if (m <= 0) return;
  const auto position = static_cast<int>(prefix.size());
  for (int tok = 0; tok < static_cast<int>(values.size()); ++tok) {
    bool allowed;
    if (position >= m) {
      allowed = tok == stop;
    } else {
      allowed = tok < m && std::find(prefix.begin(), prefix.end(), tok) == prefix.end();
    }
    if (!allowed) values[tok] = kNegInf;
  }
}

}  // namespace

void validate_action(const ActionSequence& action, int vocab_size, int max_length) {
  const int stop = vocab_size - 1;
  const auto& t = action.tokens;
  if (t.empty() || t.back() != stop) throw Error("action must end with STOP");
  if (static_cast<int>(t.size()) > max_length + 1) throw Error("action exceeds max length");
  for (std::size_t i = 0; i + 1 < t.size(); ++i) {
    if (t[i] < 0 || t[i] >= stop) throw Error("action token out of range or early STOP");
  }
}

void next_distribution(const Policy& policy, const PolicyInput& input,
                       std::span<const int> prefix, Eigen::Ref<Eigen::VectorXd> log_probs) {
  policy.next_log_probs(input, prefix, log_probs);
  if (input.permutation_slots > 0) {
    apply_permutation_mask(input, prefix, policy.stop_token(), log_probs);
    log_probs.array() -= log_sum_exp(log_probs);
  }
}

void SamplerConfig::validate() const {
  if (!(temperature > 0.0)) throw ConfigError("sampler temperature must be > 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("sampler top_p must lie in (0, 1]");
}

namespace {

int draw_token(const Eigen::VectorXd& log_probs, const SamplerConfig& sampler, Rng& rng,
               std::vector<int>& order, std::vector<double>& weights) {
  const auto n = static_cast<int>(log_probs.size());
  const double top = log_probs.maxCoeff();
  if (sampler.temperature < 1e-8) {
    Eigen::Index best;
    log_probs.maxCoeff(&best);
    return static_cast<int>(best);
  }
  weights.assign(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    const double lp = log_probs[i];
    weights[static_cast<std::size_t>(i)] = std::isfinite(lp) ? std::exp((lp - top) / sampler.temperature) : 0.0;
  }
  order.resize(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return weights[static_cast<std::size_t>(a)] > weights[static_cast<std::size_t>(b)]; });
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  // Nucleus: the smallest prefix of the sorted tokens whose mass reaches top_p.
  double kept = 0.0;
  std::size_t count = 0;
  while (count < order.size()) {
    const double w = weights[static_cast<std::size_t>(order[count])];
    if (w <= 0.0) break;
    kept += w;
    ++count;
    if (kept >= sampler.top_p * total) break;
  }
  double u = rng.uniform() * kept;
  for (std::size_t i = 0; i < count; ++i) {
    u -= weights[static_cast<std::size_t>(order[i])];
    if (u < 0.0) return order[i];
  }
  return order[count - 1];
}

}  // namespace

Rollout sample(const Policy& policy, const PolicyInput& input, const SamplerConfig& sampler, Rng& rng) {
  Rollout out;
  const int stop = policy.stop_token();
  Eigen::VectorXd lp(policy.vocab_size());
  std::vector<int> order;
  std::vector<double> weights;
  for (int position = 0;; ++position) {
    if (position == policy.max_length()) {
      out.action.tokens.push_back(stop);
      out.token_log_probs.push_back(0.0);
      break;
    }
    next_distribution(policy, input, out.action.tokens, lp);
    const int tok = draw_token(lp, sampler, rng, order, weights);
    out.action.tokens.push_back(tok);
    out.token_log_probs.push_back(lp[tok]);
    out.log_prob += lp[tok];
    if (tok == stop) break;
  }
  return out;
}

ActionSequence greedy(const Policy& policy, const PolicyInput& input) {
  ActionSequence action;
  const int stop = policy.stop_token();
  Eigen::VectorXd lp(policy.vocab_size());
  for (int position = 0;; ++position) {
    if (position == policy.max_length()) {
      action.tokens.push_back(stop);
      break;
    }
    next_distribution(policy, input, action.tokens, lp);
    Eigen::Index best;
    lp.maxCoeff(&best);
    action.tokens.push_back(static_cast<int>(best));
    if (best == stop) break;
  }
  return action;
}

std::vector<double> token_log_probs(const Policy& policy, const PolicyInput& input,
                                    const ActionSequence& action) {
  validate_action(action, policy.vocab_size(), policy.max_length());
  std::vector<double> out;
  out.reserve(action.tokens.size());
  Eigen::VectorXd lp(policy.vocab_size());
  const std::span<const int> tokens(action.tokens);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (static_cast<int>(t) == policy.max_length()) {
      out.push_back(0.0);
      break;
    }
    next_distribution(policy, input, tokens.first(t), lp);
    out.push_back(lp[tokens[t]]);
  }
  return out;
}

double log_prob(const Policy& policy, const PolicyInput& input, const ActionSequence& action) {
  double total = 0.0;
  for (double lp : token_log_probs(policy, input, action)) total += lp;
  return total;
}

namespace {

template <typename Visit>
void walk_actions(int vocab_size, int max_length, std::vector<int>& prefix, Visit&& visit) {
  const int stop = vocab_size - 1;
  if (static_cast<int>(prefix.size()) == max_length) {
    prefix.push_back(stop);
    visit(prefix, true);
    prefix.pop_back();
    return;
  }
  for (int tok = 0; tok < vocab_size; ++tok) {
    prefix.push_back(tok);
    if (tok == stop) {
      visit(prefix, false);
    } else if (visit(prefix, false)) {
      walk_actions(vocab_size, max_length, prefix, visit);
    }
    prefix.pop_back();
  }
}

}  // namespace

std::vector<std::pair<ActionSequence, double>> enumerate_actions(const Policy& policy, const PolicyInput& input,
                                                                 std::size_t bound) {
  std::vector<std::pair<ActionSequence, double>> out;
  const int stop = policy.stop_token();
  Eigen::VectorXd lp(policy.vocab_size());
  // Log-probability of each prefix length currently on the path.
  std::vector<double> path_lp{0.0};
  std::vector<int> prefix;
  auto recurse = [&](auto&& self) -> void {
    if (static_cast<int>(prefix.size()) == policy.max_length()) {
      prefix.push_back(stop);
      if (out.size() >= bound)
        throw EnumerationBoundError("more than " + std::to_string(bound) +
                                    " actions; use sampling estimators instead");
      out.emplace_back(ActionSequence{prefix}, std::exp(path_lp.back()));
      prefix.pop_back();
      return;
    }
    next_distribution(policy, input, prefix, lp);
    const Eigen::VectorXd here = lp;
    for (int tok = 0; tok < policy.vocab_size(); ++tok) {
      if (!std::isfinite(here[tok])) continue;
      const double next = path_lp.back() + here[tok];
      prefix.push_back(tok);
      if (tok == stop) {
        if (out.size() >= bound)
          throw EnumerationBoundError("more than " + std::to_string(bound) +
                                      " actions; use sampling estimators instead");
        out.emplace_back(ActionSequence{prefix}, std::exp(next));
      } else {
        path_lp.push_back(next);
        self(self);
        path_lp.pop_back();
      }
      prefix.pop_back();
    }
  };
  recurse(recurse);
  return out;
}

std::vector<ActionSequence> all_actions(int vocab_size, int max_length, std::size_t bound) {
  std::vector<ActionSequence> out;
  std::vector<int> prefix;
  const int stop = vocab_size - 1;
  walk_actions(vocab_size, max_length, prefix, [&](const std::vector<int>& p, bool) {
    if (p.back() != stop) return true;
    if (out.size() >= bound)
      throw EnumerationBoundError("more than " + std::to_string(bound) + " actions");
    out.push_back(ActionSequence{p});
    return true;
  });
  return out;
}

// ---------------------------------------------------------------- tabular

TabularPolicy::TabularPolicy(std::size_t num_states, int vocab_size, int max_length)
    : num_states_(num_states), vocab_size_(vocab_size), max_length_(max_length) {
  if (vocab_size < 2) throw Error("tabular policy needs at least one token plus STOP");
  if (max_length < 1) throw Error("tabular policy needs max_length >= 1");
  tables_.assign(num_states * static_cast<std::size_t>(max_length),
                 Eigen::MatrixXd::Constant(vocab_size, vocab_size + 1, 1.0 / vocab_size));
}

Eigen::MatrixXd& TabularPolicy::table(std::size_t state, int position) {
  if (state >= num_states_ || position < 0 || position >= max_length_) throw Error("tabular index out of range");
  return tables_[state * static_cast<std::size_t>(max_length_) + static_cast<std::size_t>(position)];
}

const Eigen::MatrixXd& TabularPolicy::table(std::size_t state, int position) const {
  return const_cast<TabularPolicy*>(this)->table(state, position);
}

Eigen::Ref<const Eigen::VectorXd> TabularPolicy::row(std::size_t state, int position, int prev) const {
  return table(state, position).col(prev);
}

void TabularPolicy::set_row(std::size_t state, int position, int prev, const Eigen::VectorXd& probs) {
  if (probs.size() != vocab_size_) throw Error("tabular row has the wrong size");
  if ((probs.array() < 0.0).any() || !probs.allFinite()) throw Error("tabular row has negative entries");
  if (std::abs(probs.sum() - 1.0) > 1e-9) throw Error("tabular row does not sum to 1");
  table(state, position).col(prev) = probs;
}

void TabularPolicy::next_log_probs(const PolicyInput& input, std::span<const int> prefix,
                                   Eigen::Ref<Eigen::VectorXd> out) const {
  const int prev = prefix.empty() ? begin_token() : prefix.back();
  out = table(input.state, static_cast<int>(prefix.size())).col(prev).array().log().matrix();
}

// ----------------------------------------------------------------- neural

void NeuralDims::validate() const {
  if (num_features < 1) throw ConfigError("policy needs at least one state feature");
  if (vocab_size < 2) throw ConfigError("policy vocabulary needs a token plus STOP");
  if (max_length < 1) throw ConfigError("policy max_length must be >= 1");
  if (embed < 1 || hidden < 1) throw ConfigError("policy embed and hidden sizes must be >= 1");
}

NeuralPolicy::NeuralPolicy(const NeuralDims& dims, std::uint64_t seed) : dims_(dims) {
  dims_.validate();
  const Eigen::Index d = dims.embed, h = dims.hidden, v = dims.vocab_size;
  const std::pair<Eigen::Index, Eigen::Index> shapes[] = {
      {d, dims.num_features}, {d, v + 1}, {d, dims.max_length}, {h, d}, {h, 1}, {v, h}, {v, 1}};
  std::size_t offset = 0;
  for (auto [r, c] : shapes) {
    blocks_.push_back({offset, r, c});
    offset += static_cast<std::size_t>(r * c);
  }
  params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(offset));
  Rng rng(seed);
  for (int b : {0, 1, 2, 3, 5}) {
    auto m = mat(b);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-0.1, 0.1);
  }
}

NeuralPolicy::ConstMatrixMap NeuralPolicy::cmat(int b) const {
  const Block& blk = blocks_[static_cast<std::size_t>(b)];
  return ConstMatrixMap(params_.data() + blk.offset, blk.rows, blk.cols);
}

NeuralPolicy::ConstVectorMap NeuralPolicy::cvec(int b) const {
  const Block& blk = blocks_[static_cast<std::size_t>(b)];
  return ConstVectorMap(params_.data() + blk.offset, blk.rows);
}

NeuralPolicy::MatrixMap NeuralPolicy::mat(int b) {
  const Block& blk = blocks_[static_cast<std::size_t>(b)];
  return MatrixMap(params_.data() + blk.offset, blk.rows, blk.cols);
}

NeuralPolicy::VectorMap NeuralPolicy::vec(int b) {
  const Block& blk = blocks_[static_cast<std::size_t>(b)];
  return VectorMap(params_.data() + blk.offset, blk.rows);
}

NeuralPolicy::VectorMap NeuralPolicy::output_bias_of(Eigen::Ref<Eigen::VectorXd> flat) const {
  return VectorMap(flat.data() + blocks_[6].offset, blocks_[6].rows);
}

NeuralPolicy::MatrixMap NeuralPolicy::feature_embedding_of(Eigen::Ref<Eigen::VectorXd> flat) const {
  return MatrixMap(flat.data() + blocks_[0].offset, blocks_[0].rows, blocks_[0].cols);
}

NeuralPolicy::MatrixMap NeuralPolicy::token_embedding_of(Eigen::Ref<Eigen::VectorXd> flat) const {
  return MatrixMap(flat.data() + blocks_[1].offset, blocks_[1].rows, blocks_[1].cols);
}

Eigen::VectorXd NeuralPolicy::state_sum(const PolicyInput& input) const {
  Eigen::VectorXd s = Eigen::VectorXd::Zero(dims_.embed);
  const auto emb = feature_embedding();
  for (int f : input.features) {
    if (f < 0 || f >= dims_.num_features) throw Error("state feature id out of range");
    s += emb.col(f);
  }
  return s;
}

void NeuralPolicy::next_log_probs(const PolicyInput& input, std::span<const int> prefix,
                                  Eigen::Ref<Eigen::VectorXd> out) const {
  const auto position = static_cast<Eigen::Index>(prefix.size());
  const int prev = prefix.empty() ? begin_token() : prefix.back();
  const Eigen::VectorXd x = state_sum(input) + token_embedding().col(prev) + position_embedding().col(position);
  const Eigen::VectorXd a = (hidden_weight() * x + hidden_bias()).array().tanh().matrix();
  out = output_weight() * a + output_bias();
  out.array() -= log_sum_exp(out);
}

double NeuralPolicy::accumulate_grad(const PolicyInput& input, const ActionSequence& action,
                                     std::span<const double> token_weights,
                                     Eigen::Ref<Eigen::VectorXd> grad) const {
  validate_action(action, dims_.vocab_size, dims_.max_length);
  if (token_weights.size() < action.tokens.size()) throw Error("need one weight per action token");
  if (grad.size() != params_.size()) throw Error("gradient has the wrong size");

  auto g_tok = MatrixMap(grad.data() + blocks_[1].offset, blocks_[1].rows, blocks_[1].cols);
  auto g_pos = MatrixMap(grad.data() + blocks_[2].offset, blocks_[2].rows, blocks_[2].cols);
  auto g_w1 = MatrixMap(grad.data() + blocks_[3].offset, blocks_[3].rows, blocks_[3].cols);
  auto g_b1 = VectorMap(grad.data() + blocks_[4].offset, blocks_[4].rows);
  auto g_w2 = MatrixMap(grad.data() + blocks_[5].offset, blocks_[5].rows, blocks_[5].cols);
  auto g_b2 = VectorMap(grad.data() + blocks_[6].offset, blocks_[6].rows);

  const Eigen::VectorXd s = state_sum(input);
  Eigen::VectorXd g_state = Eigen::VectorXd::Zero(dims_.embed);
  Eigen::VectorXd logits(dims_.vocab_size);
  double total = 0.0;
  const std::span<const int> tokens(action.tokens);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (static_cast<int>(t) == dims_.max_length) break;  // forced STOP
    const int prev = t == 0 ? begin_token() : tokens[t - 1];
    const int tok = tokens[t];
    const Eigen::VectorXd x = s + token_embedding().col(prev) + position_embedding().col(static_cast<Eigen::Index>(t));
    const Eigen::VectorXd a = (hidden_weight() * x + hidden_bias()).array().tanh().matrix();
    logits = output_weight() * a + output_bias();
    apply_permutation_mask(input, tokens.first(t), stop_token(), logits);
    const double lse = log_sum_exp(logits);
    total += logits[tok] - lse;

    const double w = token_weights[t];
    if (w == 0.0) continue;
    // d log softmax_tok / d logits = e_tok - softmax
    Eigen::VectorXd g_l = -w * (logits.array() - lse).exp().matrix();
    g_l[tok] += w;
    g_w2.noalias() += g_l * a.transpose();
    g_b2 += g_l;
    const Eigen::VectorXd g_z = ((output_weight().transpose() * g_l).array() * (1.0 - a.array().square())).matrix();
    g_w1.noalias() += g_z * x.transpose();
    g_b1 += g_z;
    const Eigen::VectorXd g_x = hidden_weight().transpose() * g_z;
    g_tok.col(prev) += g_x;
    g_pos.col(static_cast<Eigen::Index>(t)) += g_x;
    g_state += g_x;
  }
  auto g_feat = MatrixMap(grad.data() + blocks_[0].offset, blocks_[0].rows, blocks_[0].cols);
  for (int f : input.features) g_feat.col(f) += g_state;
  return total;
}

void NeuralPolicy::save(std::ostream& out, std::uint64_t vocab_fingerprint) const {
  out << "rlrec-neural-policy 1\n";
  out << "dims " << dims_.num_features << ' ' << dims_.vocab_size << ' ' << dims_.max_length << ' '
      << dims_.embed << ' ' << dims_.hidden << '\n';
  out << "vocab " << std::hex << vocab_fingerprint << std::dec << '\n';
  out << "params " << params_.size() << '\n';
  out << std::hexfloat;
  for (Eigen::Index i = 0; i < params_.size(); ++i) out << params_[i] << '\n';
  out << std::defaultfloat;
}

NeuralPolicy NeuralPolicy::load(std::istream& in, std::uint64_t* vocab_fingerprint) {
  std::string magic, version, word;
  if (!(in >> magic >> version) || magic != "rlrec-neural-policy" || version != "1")
    throw IngestError("not a policy checkpoint");
  NeuralDims dims;
  if (!(in >> word) || word != "dims" ||
      !(in >> dims.num_features >> dims.vocab_size >> dims.max_length >> dims.embed >> dims.hidden))
    throw IngestError("checkpoint: bad dims line");
  std::uint64_t fp = 0;
  if (!(in >> word) || word != "vocab" || !(in >> std::hex >> fp >> std::dec))
    throw IngestError("checkpoint: bad vocab line");
  std::size_t count = 0;
  if (!(in >> word) || word != "params" || !(in >> count)) throw IngestError("checkpoint: bad params line");
  try {
    dims.validate();
  } catch (const ConfigError& e) {
    throw IngestError(std::string("checkpoint: ") + e.what());
  }
  NeuralPolicy policy(dims, 0);
  if (count != static_cast<std::size_t>(policy.params_.size())) throw IngestError("checkpoint: parameter count mismatch");
  for (std::size_t i = 0; i < count; ++i) {
    if (!(in >> word)) throw IngestError("checkpoint: truncated parameters");
    char* end = nullptr;
    const double v = std::strtod(word.c_str(), &end);
    if (end == word.c_str() || *end != '\0' || !std::isfinite(v)) throw IngestError("checkpoint: bad parameter value");
    policy.params_[static_cast<Eigen::Index>(i)] = v;
  }
  if (vocab_fingerprint) *vocab_fingerprint = fp;
  return policy;
}

Eigen::VectorXd grad_log_prob(const NeuralPolicy& policy, const PolicyInput& input, const ActionSequence& action) {
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(policy.parameters().size());
  const std::vector<double> ones(action.tokens.size(), 1.0);
  policy.accumulate_grad(input, action, ones, grad);
  return grad;
}

}  // namespace rlrec
