#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace rlrec {

/// Outcome of one self-contained verification suite.
struct SuiteReport {
  std::string name;
  bool passed = false;
  /// Named measurements, in print order.
  std::vector<std::pair<std::string, double>> values;
  /// First failing case, when any.
  std::string failure;

  double value(std::string_view key) const;
};

/// Ranking of retrieve() against exhaustive scoring with an independent
/// scalar BM25 on random corpora (<= 50 docs, vocab <= 30).
SuiteReport verify_bm25(std::uint64_t seed = 0, int corpora = 100, int queries = 100);

/// NDCG / recall against direct formula evaluation on random instances,
/// plus the exhaustive best-permutation bound on <= 8 items.
SuiteReport verify_metrics(std::uint64_t seed = 0, int instances = 1000);

/// Neural log-prob gradients against central finite differences (step 1e-5).
SuiteReport verify_gradients(std::uint64_t seed = 0, int triples = 24);

/// Tabular SFT fits converge to the generator: KL at N = 1e5 below 1e-2
/// and below KL at N = 1e2 in >= 95% of instances. Also checks the
/// cross-entropy identity and the empirical NLL at N = 1e5.
SuiteReport verify_fact1(std::uint64_t seed = 0, int instances = 50);

/// Pinsker performance bound on random (instance, pi, pi_g) draws.
SuiteReport verify_theorem2(std::uint64_t seed = 0, int draws = 1000);

/// RL versus SFT on the two-arm bandit f = (1.0, 0.4), pi_g = (0.2, 0.8).
SuiteReport verify_theorem3(std::uint64_t seed = 0, int repetitions = 20);

/// fact1, theorem2, theorem3, gradients, bm25, metrics.
const std::vector<std::string>& suite_names();

/// Throws Error for an unknown suite name.
SuiteReport run_suite(std::string_view name, std::uint64_t seed = 0);

/// "name: PASS|FAIL" followed by one indented line per value.
std::string format_report(const SuiteReport& report);

}  // namespace rlrec
