#include <cmath>

#include <gtest/gtest.h>

#include "rlrec/analysis.hpp"
#include "rlrec/error.hpp"
#include "rlrec/optim.hpp"
#include "rlrec/verify.hpp"

using namespace rlrec;

TEST(Divergence, Kl) {
  const Eigen::Vector2d p(0.5, 0.5), q(0.25, 0.75);
  EXPECT_EQ(kl_divergence(p, p), 0.0);
  EXPECT_NEAR(kl_divergence(p, q), 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0), 1e-15);
  EXPECT_NEAR(kl_divergence(p, q), 0.1438, 5e-5);
  EXPECT_EQ(kl_divergence(Eigen::Vector2d(0.5, 0.5), Eigen::Vector2d(1.0, 0.0)), INFINITY);
  Rng rng(2);
  for (int i = 0; i < 500; ++i) {
    Eigen::VectorXd a(4), b(4);
    for (int k = 0; k < 4; ++k) {
      a[k] = rng.uniform();
      b[k] = rng.uniform() + 1e-3;
    }
    a /= a.sum();
    b /= b.sum();
    EXPECT_GE(kl_divergence(a, b), 0.0);
  }
}

TEST(Divergence, TotalVariation) {
  const Eigen::Vector2d p(0.5, 0.5), q(0.25, 0.75);
  EXPECT_EQ(tv_distance(p, p), 0.0);
  EXPECT_EQ(tv_distance(Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 1)), 1.0);
  EXPECT_DOUBLE_EQ(tv_distance(p, q), 0.25);
}

TEST(Divergence, Entropy) {
  EXPECT_EQ(entropy(Eigen::Vector3d(0, 1, 0)), 0.0);
  EXPECT_NEAR(entropy(Eigen::VectorXd::Constant(5, 0.2)), std::log(5.0), 1e-15);
  EXPECT_NEAR(entropy(Eigen::Vector2d(0.25, 0.75)), 0.5623, 5e-5);
}

TEST(Performance, Examples) {
  TabularInstance inst;
  inst.state_probs = Eigen::Vector2d(0.5, 0.5);
  inst.vocab_size = 3;  // two actions + STOP
  inst.max_length = 1;
  inst.rewards = {{{ActionSequence{{0, 2}}, 1.0}}, {{ActionSequence{{1, 2}}, 1.0}}};
  inst.validate();

  TabularPolicy uniform_arms(2, 3, 1);
  for (std::size_t s = 0; s < 2; ++s) uniform_arms.set_row(s, 0, 3, Eigen::Vector3d(0.5, 0.5, 0.0));
  EXPECT_DOUBLE_EQ(exact_performance(inst, uniform_arms), 0.5);

  TabularPolicy best(2, 3, 1);
  best.set_row(0, 0, 3, Eigen::Vector3d(1, 0, 0));
  best.set_row(1, 0, 3, Eigen::Vector3d(0, 1, 0));
  EXPECT_DOUBLE_EQ(exact_performance(inst, best), optimal_performance(inst));
  EXPECT_DOUBLE_EQ(optimal_performance(inst), 1.0);

  TabularInstance flat = inst;
  for (auto& row : flat.rewards)
    for (const auto& a : flat.actions()) row[a] = 0.3;
  EXPECT_NEAR(exact_performance(flat, TabularPolicy(2, 3, 1)), 0.3, 1e-15);
}

TEST(Pinsker, EqualPoliciesGiveZero) {
  Rng rng(1);
  const TabularInstance inst = random_instance(3, 3, 2, 1.0, rng);
  const TabularPolicy p = random_tabular_policy(3, 3, 2, rng);
  const PinskerReport r = pinsker_bound_check(inst, p, p);
  EXPECT_EQ(r.lhs, 0.0);
  EXPECT_EQ(r.rhs, 0.0);
  EXPECT_TRUE(r.holds);
}

TEST(Pinsker, RandomDraws) {
  const SuiteReport r = verify_theorem2(0, 1000);
  EXPECT_TRUE(r.passed) << format_report(r);
  EXPECT_EQ(r.value("violations"), 0.0);
  EXPECT_LE(r.value("max_lhs_over_rhs"), 1.0);
}

TEST(MleKl, IdentityAtTheGenerator) {
  Rng rng(4);
  const TabularInstance inst = random_instance(2, 3, 2, 1.0, rng);
  const TabularPolicy gen = random_tabular_policy(2, 3, 2, rng, 0.1);
  const auto samples = sample_dataset(gen, inst.inputs(), inst.state_probs, 2000, rng);
  const MleKlReport self = mle_kl_decomposition_check(inst, gen, gen, samples);
  EXPECT_LE(self.max_identity_residual, 1e-9);
  const TabularPolicy other = random_tabular_policy(2, 3, 2, rng, 0.1);
  EXPECT_LE(mle_kl_decomposition_check(inst, gen, other, samples).max_identity_residual, 1e-9);
}

TEST(Bandit, GeneratorPerformance) {
  const std::vector<double> f{1.0, 0.4}, pg{0.2, 0.8};
  const TabularInstance inst = bandit_instance(f);
  EXPECT_NEAR(exact_performance(inst, bandit_policy(pg)), 0.52, 1e-15);
  EXPECT_DOUBLE_EQ(optimal_performance(inst), 1.0);
}

TEST(Sft, OptimalGeneratorReachesTheOptimum) {
  const std::vector<double> f{1.0, 0.4}, pg{1.0, 0.0};
  const TabularInstance inst = bandit_instance(f);
  const TabularPolicy gen = bandit_policy(pg);
  Rng rng(3);
  const auto data = sample_dataset(gen, inst.inputs(), inst.state_probs, 1000, rng);
  const TabularPolicy fit = sft_fit_tabular(data, 1, inst.vocab_size, inst.max_length);
  EXPECT_NEAR(exact_performance(inst, fit), optimal_performance(inst), 1e-12);
}

TEST(Instances, Validation) {
  TabularInstance bad;
  bad.state_probs = Eigen::Vector2d(0.5, 0.6);
  bad.rewards.resize(2);
  EXPECT_THROW(bad.validate(), Error);
}
