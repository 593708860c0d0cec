#include "rlrec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "rlrec/error.hpp"

namespace rlrec {

namespace {

double discount(std::size_t rank) { return 1.0 / std::log2(static_cast<double>(rank) + 2.0); }

GainMap gain_map(std::span<const Target> targets) {
  GainMap gains;
  for (const auto& t : targets) gains[t.item_id] = std::max(gains[t.item_id], t.gain);
  return gains;
}

}  // namespace

double dcg(std::span<const std::string> ranking, const GainMap& gains, std::size_t k) {
  const std::size_t n = std::min(k, ranking.size());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto it = gains.find(ranking[i]);
    if (it != gains.end()) total += it->second * discount(i);
  }
  return total;
}

double ndcg_at_k(std::span<const std::string> ranking, std::span<const Target> targets,
                 std::size_t k) {
  if (k == 0) throw Error("ndcg cutoff must be >= 1");
  const GainMap gains = gain_map(targets);
  std::vector<double> ideal;
  ideal.reserve(gains.size());
  for (const auto& [id, g] : gains) ideal.push_back(g);
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  double idcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, ideal.size()); ++i) idcg += ideal[i] * discount(i);
  if (!(idcg > 0.0)) throw Error("ndcg needs at least one positive-gain target");
  // The ideal DCG counts each target once, so a repeated item in `ranking`
  // only earns its gain at its first position.
  std::vector<const std::string*> counted;
  double total = 0.0;
  for (std::size_t i = 0; i < std::min(k, ranking.size()); ++i) {
    auto it = gains.find(ranking[i]);
    if (it == gains.end()) continue;
    if (std::find(counted.begin(), counted.end(), &it->first) != counted.end()) continue;
    counted.push_back(&it->first);
    total += it->second * discount(i);
  }
  return std::min(1.0, total / idcg);
}

double recall_at_k(std::span<const std::string> ranking, std::span<const Target> targets,
                   std::size_t k) {
  std::vector<const std::string*> positives;
  for (const auto& t : targets) {
    if (t.gain > 0.0 &&
        std::none_of(positives.begin(), positives.end(), [&](const std::string* p) { return *p == t.item_id; })) {
      positives.push_back(&t.item_id);
    }
  }
  if (positives.empty()) throw Error("recall needs at least one positive-gain target");
  const auto top = ranking.first(std::min(k, ranking.size()));
  std::size_t found = 0;
  for (const std::string* p : positives) {
    if (std::find(top.begin(), top.end(), *p) != top.end()) ++found;
  }
  return static_cast<double>(found) / static_cast<double>(positives.size());
}

double category_consistency(std::span<const std::string> ranking, std::span<const Target> targets,
                            const Corpus& corpus, std::size_t k) {
  std::map<std::string, int> votes;
  for (const auto& t : targets) {
    if (t.gain <= 0.0) continue;
    auto ord = corpus.ordinal(t.item_id);
    if (!ord) continue;
    const auto& cat = corpus.document(*ord).category;
    if (cat) ++votes[*cat];
  }
  const auto top = ranking.first(std::min(k, ranking.size()));
  if (top.empty() || votes.empty()) return 0.0;
  // std::map iterates lexicographically, so the first maximum wins ties.
  auto majority = votes.begin();
  for (auto it = votes.begin(); it != votes.end(); ++it) {
    if (it->second > majority->second) majority = it;
  }
  std::size_t matches = 0;
  for (const auto& item : top) {
    auto ord = corpus.ordinal(item);
    if (!ord) continue;
    const auto& cat = corpus.document(*ord).category;
    if (cat && *cat == majority->first) ++matches;
  }
  return static_cast<double>(matches) / static_cast<double>(top.size());
}

std::string_view to_string(RewardKind kind) {
  switch (kind) {
    case RewardKind::ndcg: return "ndcg";
    case RewardKind::recall: return "recall";
    case RewardKind::format: return "format";
    case RewardKind::category_consistency: return "category_consistency";
  }
  return "unknown";
}

RewardKind parse_reward_kind(std::string_view text) {
  if (text == "ndcg") return RewardKind::ndcg;
  if (text == "recall") return RewardKind::recall;
  if (text == "format") return RewardKind::format;
  if (text == "category_consistency") return RewardKind::category_consistency;
  throw ConfigError("unknown reward component: " + std::string(text));
}

void RewardSpec::validate(const Corpus* corpus) const {
  if (components.empty()) throw ConfigError("reward spec needs at least one component");
  double total = 0.0;
  for (const auto& c : components) {
    if (!std::isfinite(c.weight) || c.weight < 0.0)
      throw ConfigError("reward weight for " + std::string(to_string(c.kind)) + " must be finite and >= 0");
    if (c.cutoff && *c.cutoff == 0) throw ConfigError("reward cutoff must be >= 1");
    if (c.kind == RewardKind::category_consistency && corpus) {
      const auto& docs = corpus->documents();
      if (std::none_of(docs.begin(), docs.end(), [](const Document& d) { return d.category.has_value(); }))
        throw ConfigError("category_consistency requires a corpus with categories");
    }
    total += c.weight;
  }
  if (!(total > 0.0)) throw ConfigError("reward weights must sum to a positive value");
}

double RewardSpec::max_reward() const {
  double total = 0.0;
  for (const auto& c : components) total += c.weight;
  return total;
}

double composite_reward(const RewardSpec& spec, const RewardContext& context) {
  if (!context.decoded) return 0.0;
  double total = 0.0;
  for (const auto& c : spec.components) {
    const std::size_t k = c.cutoff.value_or(context.default_cutoff);
    double value = 0.0;
    switch (c.kind) {
      case RewardKind::ndcg: value = ndcg_at_k(context.ranking, context.targets, k); break;
      case RewardKind::recall: value = recall_at_k(context.ranking, context.targets, k); break;
      case RewardKind::format: value = format_reward(true); break;
      case RewardKind::category_consistency:
        if (!context.corpus) throw ConfigError("category_consistency needs corpus context");
        value = category_consistency(context.ranking, context.targets, *context.corpus, k);
        break;
    }
    total += c.weight * value;
  }
  return total;
}

}  // namespace rlrec
