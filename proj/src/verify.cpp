#include "rlrec/verify.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "rlrec/analysis.hpp"
#include "rlrec/corpus.hpp"
#include "rlrec/error.hpp"
#include "rlrec/metrics.hpp"
#include "rlrec/optim.hpp"
#include "rlrec/parallel.hpp"
#include "rlrec/policy.hpp"
#include "rlrec/retrieval.hpp"

namespace rlrec {

double SuiteReport::value(std::string_view key) const {
  for (const auto& [k, v] : values)
    if (k == key) return v;
  throw Error("report has no value " + std::string(key));
}

namespace {

void fail_once(SuiteReport& r, const std::string& what) {
  if (r.failure.empty()) r.failure = what;
}

// ---------------------------------------------------------------- bm25

// Scores straight from the document token lists, without the index.
struct ScalarBm25 {
  std::vector<std::vector<std::string>> docs;
  double k1, b;

  double score(const std::vector<std::string>& query, std::size_t d) const {
    const double n = static_cast<double>(docs.size());
    double total_len = 0.0;
    for (const auto& doc : docs) total_len += static_cast<double>(doc.size());
    const double avgdl = total_len / n;
    double s = 0.0;
    for (const auto& q : query) {
      double df = 0.0;
      for (const auto& doc : docs) df += std::count(doc.begin(), doc.end(), q) > 0 ? 1.0 : 0.0;
      const double tf = static_cast<double>(std::count(docs[d].begin(), docs[d].end(), q));
      if (tf == 0.0) continue;
      const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
      const double dl = static_cast<double>(docs[d].size());
      s += idf * tf / (tf + k1 * (1.0 - b + b * dl / avgdl));
    }
    return s;
  }
};

std::vector<Document> random_documents(Rng& rng, std::size_t n_docs, std::size_t vocab) {
  auto word = [&] { return "t" + std::to_string(rng.index(vocab)); };
  std::vector<Document> docs;
  for (std::size_t d = 0; d < n_docs; ++d) {
    Document doc;
    doc.id = "d" + std::to_string(d);
    const std::size_t title_len = 1 + rng.index(6);
    for (std::size_t i = 0; i < title_len; ++i) doc.title += (i ? " " : "") + word();
    const std::size_t body_len = rng.index(11);
    for (std::size_t i = 0; i < body_len; ++i) doc.body += (i ? " " : "") + word();
    docs.push_back(std::move(doc));
  }
  return docs;
}

}  // namespace

SuiteReport verify_bm25(std::uint64_t seed, int corpora, int queries) {
  SuiteReport r{"bm25", false, {}, {}};
  double max_err = 0.0;
  long order_mismatch = 0, checks = 0, monotone_fail = 0, full_recall_fail = 0;
  for (int c = 0; c < corpora; ++c) {
    Rng rng = Rng::derive(seed, 0xb25, static_cast<std::uint64_t>(c));
    const std::size_t n_docs = 1 + rng.index(50);
    const std::size_t vocab = 2 + rng.index(29);
    const Corpus corpus(random_documents(rng, n_docs, vocab));
    const InvertedIndex index(corpus);
    Bm25Params params;
    if (c % 2 == 1) params = {rng.uniform(0.1, 2.0), rng.uniform(0.0, 1.0)};

    ScalarBm25 oracle{{}, params.k1, params.b};
    for (const auto& d : corpus.documents()) {
      auto toks = tokenize(d.title);
      const auto body = tokenize(d.body);
      toks.insert(toks.end(), body.begin(), body.end());
      oracle.docs.push_back(std::move(toks));
    }

    for (int q = 0; q < queries; ++q) {
      std::vector<std::string> query;
      const std::size_t len = 1 + rng.index(5);
      for (std::size_t i = 0; i < len; ++i)
        query.push_back(rng.uniform() < 0.1 ? "zz" : "t" + std::to_string(rng.index(vocab)));
      const auto ids = corpus.encode(query);
      const std::size_t k = 1 + rng.index(n_docs + 2);

      std::vector<std::pair<double, std::size_t>> expected;
      for (std::size_t d = 0; d < n_docs; ++d) {
        const double s = oracle.score(query, d);
        const double got = bm25_score(index, params, ids, d);
        max_err = std::max(max_err, std::abs(s - got));
        if (s > 0.0) expected.emplace_back(s, d);
      }
      std::sort(expected.begin(), expected.end(),
                [](const auto& a, const auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
      const std::size_t positive = expected.size();
      if (expected.size() > k) expected.resize(k);

      const RankedList got = retrieve(index, params, ids, k);
      ++checks;
      bool same = got.size() == expected.size();
      for (std::size_t i = 0; same && i < got.size(); ++i) {
        same = got[i].doc == expected[i].second;
        max_err = std::max(max_err, std::abs(got[i].score - expected[i].first));
      }
      if (!same) {
        ++order_mismatch;
        fail_once(r, "corpus " + std::to_string(c) + " query " + std::to_string(q) + ": ranking differs");
      }
      if (retrieve(index, params, ids, n_docs).size() != positive) ++full_recall_fail;
    }

    // One more occurrence of a single query token never lowers its score.
    for (int m = 0; m < 5; ++m) {
      auto docs = corpus.documents();
      const std::size_t d = rng.index(n_docs);
      const std::string t = "t" + std::to_string(rng.index(vocab));
      const std::vector<std::string> q{t};
      if (!corpus.vocabulary().find(t)) continue;
      const double before = bm25_score(index, params, corpus.encode(q), d);
      docs[d].body += " " + t;
      const Corpus grown(docs);
      const InvertedIndex grown_index(grown);
      const double after = bm25_score(grown_index, params, grown.encode(q), d);
      if (after < before - 1e-12) {
        ++monotone_fail;
        fail_once(r, "monotonicity violated in corpus " + std::to_string(c));
      }
    }
  }
  if (max_err > 1e-9) fail_once(r, "score error " + std::to_string(max_err));
  if (full_recall_fail) fail_once(r, "retrieve(k=N) missed positive documents");
  r.passed = order_mismatch == 0 && max_err <= 1e-9 && monotone_fail == 0 && full_recall_fail == 0;
  r.values = {{"rankings_checked", static_cast<double>(checks)},
              {"order_mismatches", static_cast<double>(order_mismatch)},
              {"max_score_error", max_err},
              {"monotonicity_failures", static_cast<double>(monotone_fail)},
              {"full_depth_failures", static_cast<double>(full_recall_fail)}};
  return r;
}

// -------------------------------------------------------------- metrics

namespace {

double oracle_ndcg(const std::vector<std::string>& ranking, const std::vector<Target>& targets, std::size_t k) {
  auto gain_of = [&](const std::string& id) {
    for (const auto& t : targets)
      if (t.item_id == id) return t.gain;
    return 0.0;
  };
  double dcg_value = 0.0;
  for (std::size_t i = 0; i < ranking.size() && i < k; ++i)
    dcg_value += gain_of(ranking[i]) / std::log2(static_cast<double>(i) + 2.0);
  std::vector<double> gains;
  for (const auto& t : targets) gains.push_back(t.gain);
  std::sort(gains.rbegin(), gains.rend());
  double ideal = 0.0;
  for (std::size_t i = 0; i < gains.size() && i < k; ++i) ideal += gains[i] / std::log2(static_cast<double>(i) + 2.0);
  return dcg_value / ideal;
}

double oracle_recall(const std::vector<std::string>& ranking, const std::vector<Target>& targets, std::size_t k) {
  double hit = 0.0, total = 0.0;
  for (const auto& t : targets) {
    if (t.gain <= 0.0) continue;
    total += 1.0;
    for (std::size_t i = 0; i < ranking.size() && i < k; ++i)
      if (ranking[i] == t.item_id) {
        hit += 1.0;
        break;
      }
  }
  return hit / total;
}

std::vector<Target> random_targets(Rng& rng, std::size_t pool) {
  static constexpr double kGains[] = {0.0, 0.5, 1.0, 2.0};
  std::vector<Target> targets;
  for (std::size_t i = 0; i < pool; ++i) {
    if (rng.uniform() < 0.5) continue;
    const double g = rng.uniform() < 0.2 ? rng.uniform(0.0, 3.0) : kGains[rng.index(4)];
    targets.push_back({"i" + std::to_string(i), g});
  }
  if (std::none_of(targets.begin(), targets.end(), [](const Target& t) { return t.gain > 0.0; }))
    targets.push_back({"i" + std::to_string(rng.index(pool)), 1.0});
  // A fresh positive item may duplicate an existing zero-gain one; keep the max.
  std::map<std::string, double> merged;
  for (const auto& t : targets) merged[t.item_id] = std::max(merged[t.item_id], t.gain);
  targets.clear();
  for (const auto& [id, g] : merged) targets.push_back({id, g});
  return targets;
}

}  // namespace

SuiteReport verify_metrics(std::uint64_t seed, int instances) {
  SuiteReport r{"metrics", false, {}, {}};
  double max_err = 0.0;
  long range_fail = 0, tail_fail = 0, brute_fail = 0;
  for (int n = 0; n < instances; ++n) {
    Rng rng = Rng::derive(seed, 0x3e7, static_cast<std::uint64_t>(n));
    const std::size_t pool = 1 + rng.index(12);
    const auto targets = random_targets(rng, pool);
    std::vector<std::string> items;
    for (std::size_t i = 0; i < pool; ++i) items.push_back("i" + std::to_string(i));
    for (std::size_t i = 0; i < 4; ++i) items.push_back("x" + std::to_string(i));
    for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[rng.index(i)]);
    items.resize(rng.index(items.size() + 1));
    const std::size_t k = 1 + rng.index(20);

    const double nd = ndcg_at_k(items, targets, k);
    const double rc = recall_at_k(items, targets, k);
    max_err = std::max({max_err, std::abs(nd - oracle_ndcg(items, targets, k)),
                        std::abs(rc - oracle_recall(items, targets, k))});
    if (nd < 0.0 || nd > 1.0 || rc < 0.0 || rc > 1.0) ++range_fail;
    if (items.size() > k) {
      auto tail = items;
      std::swap(tail.back(), tail[k]);
      tail.push_back("x_tail");
      if (ndcg_at_k(tail, targets, k) != nd || recall_at_k(tail, targets, k) != rc) ++tail_fail;
    }
  }

  // Exhaustive search over orderings of <= 7 items with K covering all.
  for (int n = 0; n < 200; ++n) {
    Rng rng = Rng::derive(seed, 0xb7f, static_cast<std::uint64_t>(n));
    const std::size_t pool = 1 + rng.index(7);
    const auto targets = random_targets(rng, pool);
    std::vector<std::string> items;
    for (std::size_t i = 0; i < pool; ++i) items.push_back("i" + std::to_string(i));
    std::vector<std::string> ranking = items;
    for (std::size_t i = ranking.size(); i > 1; --i) std::swap(ranking[i - 1], ranking[rng.index(i)]);
    const double mine = ndcg_at_k(ranking, targets, pool);
    std::sort(items.begin(), items.end());
    double best = 0.0;
    do best = std::max(best, ndcg_at_k(items, targets, pool));
    while (std::next_permutation(items.begin(), items.end()));
    GainMap gains;
    for (const auto& t : targets) gains[t.item_id] = t.gain;
    bool sorted = true;
    for (std::size_t i = 1; i < ranking.size(); ++i) {
      const double prev = gains.count(ranking[i - 1]) ? gains[ranking[i - 1]] : 0.0;
      const double cur = gains.count(ranking[i]) ? gains[ranking[i]] : 0.0;
      if (cur > prev) sorted = false;
    }
    const bool equal = std::abs(mine - best) <= 1e-12;
    if (mine > best + 1e-12 || equal != sorted) {
      ++brute_fail;
      fail_once(r, "exhaustive bound failed on instance " + std::to_string(n));
    }
  }

  const std::vector<std::string> example{"i1", "x", "i2"};
  const std::vector<Target> example_targets{{"i1", 1.0}, {"i2", 1.0}};
  const double worked = ndcg_at_k(example, example_targets, 10);
  const double worked_dcg = dcg(example, GainMap{{"i1", 1.0}, {"i2", 1.0}}, 10);
  const double worked_expected = 1.5 / (1.0 + 1.0 / std::log2(3.0));
  if (std::abs(worked - worked_expected) > 1e-12 || std::abs(worked_dcg - 1.5) > 1e-12)
    fail_once(r, "worked example mismatch");
  if (max_err > 1e-12) fail_once(r, "formula mismatch " + std::to_string(max_err));
  if (range_fail) fail_once(r, "metric outside [0, 1]");
  if (tail_fail) fail_once(r, "metric depends on items beyond K");
  r.passed = r.failure.empty();
  r.values = {{"instances", static_cast<double>(instances)},
              {"max_abs_error", max_err},
              {"worked_ndcg", worked},
              {"worked_dcg", worked_dcg},
              {"range_failures", static_cast<double>(range_fail)},
              {"tail_failures", static_cast<double>(tail_fail)},
              {"exhaustive_failures", static_cast<double>(brute_fail)}};
  return r;
}

// ------------------------------------------------------------ gradients

SuiteReport verify_gradients(std::uint64_t seed, int triples) {
  SuiteReport r{"gradients", false, {}, {}};
  constexpr double h = 1e-5;
  double max_rel = 0.0, max_shift = 0.0, max_bias_dot = 0.0;
  long coords = 0;
  for (int n = 0; n < triples; ++n) {
    Rng rng = Rng::derive(seed, 0x9ad, static_cast<std::uint64_t>(n));
    NeuralDims dims;
    dims.num_features = 2 + static_cast<int>(rng.index(4));
    dims.vocab_size = 3 + static_cast<int>(rng.index(4));
    dims.max_length = 1 + static_cast<int>(rng.index(4));
    dims.embed = 3 + static_cast<int>(rng.index(4));
    dims.hidden = 3 + static_cast<int>(rng.index(4));
    NeuralPolicy policy(dims, rng.next());
    for (auto& p : policy.parameters()) p = rng.uniform(-0.5, 0.5);

    PolicyInput input;
    const std::size_t n_feat = 1 + rng.index(4);
    for (std::size_t i = 0; i < n_feat; ++i) input.features.push_back(static_cast<int>(rng.index(dims.num_features)));
    if (n % 4 == 3 && dims.vocab_size - 1 >= dims.max_length) input.permutation_slots = dims.vocab_size - 1;
    const ActionSequence action = sample(policy, input, SamplerConfig{1.0, 1.0, 0}, rng).action;

    const Eigen::VectorXd grad = grad_log_prob(policy, input, action);
    NeuralPolicy probe = policy;
    for (Eigen::Index i = 0; i < grad.size(); ++i) {
      const double saved = probe.parameters()[i];
      probe.parameters()[i] = saved + h;
      const double up = log_prob(probe, input, action);
      probe.parameters()[i] = saved - h;
      const double down = log_prob(probe, input, action);
      probe.parameters()[i] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double rel = std::abs(grad[i] - fd) / std::max({std::abs(grad[i]), std::abs(fd), 1e-5});
      max_rel = std::max(max_rel, rel);
      ++coords;
    }

    // Adding a constant to every output bias leaves log-probs unchanged.
    NeuralPolicy shifted = policy;
    shifted.output_bias().array() += rng.uniform(-3.0, 3.0);
    max_shift = std::max(max_shift, std::abs(log_prob(shifted, input, action) - log_prob(policy, input, action)));
    Eigen::VectorXd g = grad;
    max_bias_dot = std::max(max_bias_dot, std::abs(policy.output_bias_of(g).sum()));
  }
  if (max_rel > 1e-4) fail_once(r, "relative error " + std::to_string(max_rel));
  if (max_shift > 1e-12) fail_once(r, "output-bias shift changed log_prob");
  if (max_bias_dot > 1e-10) fail_once(r, "gradient not orthogonal to the all-ones bias direction");
  r.passed = r.failure.empty();
  r.values = {{"triples", static_cast<double>(triples)},
              {"coordinates", static_cast<double>(coords)},
              {"max_relative_error", max_rel},
              {"max_bias_shift_change", max_shift},
              {"max_bias_gradient_sum", max_bias_dot}};
  return r;
}

// -------------------------------------------------------- sft convergence

SuiteReport verify_fact1(std::uint64_t seed, int instances) {
  SuiteReport r{"fact1", false, {}, {}};
  struct Row {
    double kl_large = 0.0, kl_small = 0.0, residual = 0.0;
    bool within = false;
  };
  std::vector<Row> rows(static_cast<std::size_t>(instances));
  parallel_for(rows.size(), [&](std::size_t i) {
    Rng rng = Rng::derive(seed, 0xfac1, i);
    const TabularInstance inst = random_instance(3, 3, 2, 1.0, rng);
    const TabularPolicy generator = random_tabular_policy(3, 3, 2, rng, 0.1);
    const TabularPolicy other = random_tabular_policy(3, 3, 2, rng, 0.1);
    const auto inputs = inst.inputs();
    const auto large = sample_dataset(generator, inputs, inst.state_probs, 100000, rng);
    const auto small = sample_dataset(generator, inputs, inst.state_probs, 100, rng);
    rows[i].kl_large = expected_kl(inst, generator, sft_fit_tabular(large, 3, 3, 2));
    rows[i].kl_small = expected_kl(inst, generator, sft_fit_tabular(small, 3, 3, 2));
    const MleKlReport mle = mle_kl_decomposition_check(inst, generator, other, large);
    rows[i].residual = mle.max_identity_residual;
    rows[i].within = mle.within_three_se;
  });
  double max_large = 0.0, max_residual = 0.0;
  int smaller = 0, within = 0, infinite_small = 0;
  for (const auto& row : rows) {
    max_large = std::max(max_large, row.kl_large);
    max_residual = std::max(max_residual, row.residual);
    if (row.kl_large < row.kl_small) ++smaller;
    if (std::isinf(row.kl_small)) ++infinite_small;
    if (row.within) ++within;
  }
  const double n = static_cast<double>(instances);
  if (max_large >= 1e-2) fail_once(r, "KL at N=1e5 reached " + std::to_string(max_large));
  if (smaller < 0.95 * n) fail_once(r, "KL shrank with N in only " + std::to_string(smaller) + " instances");
  if (max_residual > 1e-9) fail_once(r, "cross-entropy identity residual " + std::to_string(max_residual));
  if (within < 0.9 * n) fail_once(r, "empirical NLL outside 3 SE too often");
  r.passed = r.failure.empty();
  r.values = {{"instances", n},
              {"max_kl_n1e5", max_large},
              {"fraction_kl_smaller", smaller / n},
              {"infinite_kl_n1e2", static_cast<double>(infinite_small)},
              {"max_identity_residual", max_residual},
              {"fraction_nll_within_3se", within / n}};
  return r;
}

// ------------------------------------------------------ performance bound

SuiteReport verify_theorem2(std::uint64_t seed, int draws) {
  SuiteReport r{"theorem2", false, {}, {}};
  long violations = 0, infinite = 0, chain_fail = 0;
  double max_ratio = 0.0;
  for (int n = 0; n < draws; ++n) {
    Rng rng = Rng::derive(seed, 0x7e2, static_cast<std::uint64_t>(n));
    const std::size_t states = 1 + rng.index(3);
    const int vocab = 2 + static_cast<int>(rng.index(2));
    const int length = 1 + static_cast<int>(rng.index(2));
    const TabularInstance inst = random_instance(states, vocab, length, rng.uniform(0.5, 2.0), rng);
    const double zeros = rng.uniform() < 0.2 ? 0.3 : 0.0;
    const TabularPolicy pi = random_tabular_policy(states, vocab, length, rng, 0.0, zeros);
    const TabularPolicy pi_g = random_tabular_policy(states, vocab, length, rng, 0.0, zeros);
    const PinskerReport rep = pinsker_bound_check(inst, pi, pi_g);
    if (!rep.holds) {
      ++violations;
      fail_once(r, "bound violated on draw " + std::to_string(n));
    }
    if (rep.infinite_kl) ++infinite;
    else if (rep.rhs > 0.0) max_ratio = std::max(max_ratio, rep.lhs / rep.rhs);

    const auto actions = inst.actions();
    for (const auto& input : inst.inputs()) {
      const Eigen::VectorXd p = sequence_distribution(pi_g, input, actions);
      const Eigen::VectorXd q = sequence_distribution(pi, input, actions);
      const double kl = kl_divergence(p, q);
      if (std::isfinite(kl) && tv_distance(p, q) > std::sqrt(0.5 * kl) + 1e-12) ++chain_fail;
    }
    if (n == 0) {
      const PinskerReport self = pinsker_bound_check(inst, pi_g, pi_g);
      if (self.lhs > 1e-12 || self.rhs > 1e-6) fail_once(r, "identical policies give a nonzero bound");
    }
  }
  if (chain_fail) fail_once(r, "TV exceeded sqrt(KL/2)");
  r.passed = r.failure.empty();
  r.values = {{"draws", static_cast<double>(draws)},
              {"violations", static_cast<double>(violations)},
              {"infinite_kl_draws", static_cast<double>(infinite)},
              {"max_lhs_over_rhs", max_ratio},
              {"pinsker_chain_failures", static_cast<double>(chain_fail)}};
  return r;
}

// -------------------------------------------------------- rl versus sft

SuiteReport verify_theorem3(std::uint64_t seed, int repetitions) {
  SuiteReport r{"theorem3", false, {}, {}};
  const double arms[] = {1.0, 0.4};
  const double probs[] = {0.2, 0.8};
  const TabularInstance inst = bandit_instance(arms);
  const TabularPolicy generator = bandit_policy(probs);
  std::vector<RlVsSftReport> reps(static_cast<std::size_t>(repetitions));
  parallel_for(reps.size(), [&](std::size_t i) {
    RlVsSftSettings s;
    s.grpo.sampler = SamplerConfig{1.0, 1.0, 0};
    s.grpo_steps = 500;
    s.samples = 100000;
    s.seed = Rng::derive(seed, 0x7e3, i).next();
    reps[i] = rl_vs_sft_experiment(inst, generator, s);
  });
  double min_margin = 1e300, min_rl = 1e300, max_sft_gap = 0.0, j_g = 0.0;
  int dominated = 0, ceiling = 0;
  for (const auto& rep : reps) {
    j_g = rep.j_g;
    min_margin = std::min(min_margin, rep.j_rl - rep.j_sft);
    min_rl = std::min(min_rl, rep.j_rl);
    max_sft_gap = std::max(max_sft_gap, std::abs(rep.j_sft - rep.j_g));
    if (rep.rl_dominates) ++dominated;
    if (rep.sft_ceiling_holds) ++ceiling;
  }
  if (dominated != repetitions) fail_once(r, "J_rl < J_sft - 1e-6 in some repetition (GRPO under-converged)");
  if (ceiling != repetitions) fail_once(r, "J_sft exceeded J_g + slack");
  if (max_sft_gap > 0.01) fail_once(r, "J_sft not within 0.01 of J_g");
  if (min_rl < 0.95) fail_once(r, "GRPO reached only J_rl = " + std::to_string(min_rl));
  r.passed = r.failure.empty();
  r.values = {{"repetitions", static_cast<double>(repetitions)},
              {"j_g", j_g},
              {"j_opt", reps.empty() ? 0.0 : reps.front().j_opt},
              {"min_j_rl", min_rl},
              {"max_abs_j_sft_minus_j_g", max_sft_gap},
              {"min_j_rl_minus_j_sft", min_margin},
              {"rl_dominates_count", static_cast<double>(dominated)}};
  return r;
}

// ------------------------------------------------------------- dispatch

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"fact1", "theorem2", "theorem3", "gradients", "bm25", "metrics"};
  return names;
}

SuiteReport run_suite(std::string_view name, std::uint64_t seed) {
  if (name == "fact1") return verify_fact1(seed);
  if (name == "theorem2") return verify_theorem2(seed);
  if (name == "theorem3") return verify_theorem3(seed);
  if (name == "gradients") return verify_gradients(seed);
  if (name == "bm25") return verify_bm25(seed);
  if (name == "metrics") return verify_metrics(seed);
  throw Error("unknown suite: " + std::string(name));
}

std::string format_report(const SuiteReport& report) {
  std::ostringstream out;
  out << report.name << ": " << (report.passed ? "PASS" : "FAIL") << '\n';
  for (const auto& [k, v] : report.values) out << "  " << k << " = " << v << '\n';
  if (!report.failure.empty()) out << "  first failure: " << report.failure << '\n';
  return out.str();
}

}  // namespace rlrec
