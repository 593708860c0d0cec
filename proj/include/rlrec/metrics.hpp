#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rlrec/corpus.hpp"

namespace rlrec {

using GainMap = std::unordered_map<std::string, double>;

/// Cutoff meaning "the whole ranking".
inline constexpr std::size_t kNoCutoff = std::numeric_limits<std::size_t>::max();

/// Linear-gain DCG: sum of gain / log2(rank + 1) over the first k items.
double dcg(std::span<const std::string> ranking, const GainMap& gains, std::size_t k);

/// DCG normalized by the ideal ordering of `targets`. Throws Error when no
/// target has positive gain.
double ndcg_at_k(std::span<const std::string> ranking, std::span<const Target> targets,
                 std::size_t k);

/// Fraction of positive-gain targets found in the first k items.
double recall_at_k(std::span<const std::string> ranking, std::span<const Target> targets,
                   std::size_t k);

inline double format_reward(bool decoded) { return decoded ? 1.0 : 0.0; }

/// Fraction of the first k retrieved items whose category equals the
/// majority category among positive targets (ties: lexicographically
/// smallest). Uncategorized items never match.
double category_consistency(std::span<const std::string> ranking, std::span<const Target> targets,
                            const Corpus& corpus, std::size_t k);

enum class RewardKind { ndcg, recall, format, category_consistency };

std::string_view to_string(RewardKind kind);
RewardKind parse_reward_kind(std::string_view text);

struct RewardComponent {
  RewardKind kind = RewardKind::ndcg;
  /// Unset: the environment's training cutoff.
  std::optional<std::size_t> cutoff;
  double weight = 1.0;
};

/// Linear combination of rule-based reward components.
struct RewardSpec {
  std::vector<RewardComponent> components{RewardComponent{}};

  /// Throws ConfigError: empty spec, negative or non-finite weights, zero
  /// total weight, zero cutoffs, or category consistency on a corpus
  /// without categories.
  void validate(const Corpus* corpus = nullptr) const;

  /// Largest achievable reward, the sum of weights.
  double max_reward() const;
};

/// Everything a reward component may look at for one action.
struct RewardContext {
  /// False when the action failed to decode; every component is then 0.
  bool decoded = false;
  /// Retrieved item ids, or the permuted candidate list for reranking.
  std::span<const std::string> ranking;
  std::span<const Target> targets;
  const Corpus* corpus = nullptr;
  std::size_t default_cutoff = kNoCutoff;
};

double composite_reward(const RewardSpec& spec, const RewardContext& context);

}  // namespace rlrec
