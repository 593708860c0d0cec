#include <cmath>

#include <gtest/gtest.h>

#include "rlrec/analysis.hpp"
#include "rlrec/error.hpp"
#include "rlrec/optim.hpp"

using namespace rlrec;

TEST(Advantages, Examples) {
  for (double a : group_advantages(std::vector<double>{0.3, 0.3, 0.3}, 1e-6)) EXPECT_EQ(a, 0.0);
  const auto adv = group_advantages(std::vector<double>{1, 0, 0, 1}, 1e-6);
  const std::vector<double> expected{1, -1, -1, 1};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(adv[i], expected[i], 1e-5);
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> r(7);
    for (auto& x : r) x = rng.uniform();
    double sum = 0.0;
    for (double a : group_advantages(r, 1e-6)) sum += a;
    EXPECT_NEAR(sum, 0.0, 1e-12);
  }
}

TEST(KlEstimate, Examples) {
  EXPECT_EQ(kl_penalty_estimate(-1.3, -1.3), 0.0);
  EXPECT_NEAR(kl_penalty_estimate(0.0, std::log(2.0)), 2.0 - std::log(2.0) - 1.0, 1e-15);
  EXPECT_NEAR(kl_penalty_estimate(0.0, std::log(2.0)), 0.3069, 5e-5);
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) EXPECT_GE(kl_penalty_estimate(0.0, rng.uniform(-5.0, 5.0)), 0.0);
}

TEST(Adam, AscendsAQuadratic) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(2);
  Adam opt(2, 0.05);
  for (int i = 0; i < 500; ++i) {
    const Eigen::VectorXd grad = -2.0 * (x - Eigen::Vector2d(1.0, -2.0));
    opt.ascend(x, grad);
  }
  EXPECT_NEAR(x[0], 1.0, 1e-2);
  EXPECT_NEAR(x[1], -2.0, 1e-2);
  EXPECT_EQ(opt.steps(), 500);
}

namespace {

struct Bandit {
  NeuralPolicy policy{{1, 3, 1, 8, 8}, 7};
  std::vector<PolicyInput> inputs{PolicyInput{0, {0}, 0}};

  double p_first() const {
    Eigen::VectorXd lp(3);
    policy.next_log_probs(inputs[0], {}, lp);
    return std::exp(lp[0]);
  }
};

}  // namespace

TEST(Grpo, EqualRewardsLeaveParametersUnchanged) {
  Bandit b;
  const NeuralPolicy ref = b.policy;
  GrpoConfig cfg;
  cfg.kl_coef = 0.0;
  Adam opt(b.policy.parameters().size(), cfg.learning_rate);
  const Eigen::VectorXd before = b.policy.parameters();
  const GrpoReport r = grpo_step(b.policy, ref, b.inputs, [](std::size_t, const ActionSequence&) { return 0.5; },
                                 cfg, opt, 1);
  EXPECT_EQ(b.policy.parameters(), before);
  EXPECT_EQ(r.mean_reward, 0.5);
}

TEST(Grpo, TwoArmBandit) {
  Bandit b;
  const NeuralPolicy ref = b.policy;
  GrpoConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.sampler = {1.0, 1.0, 0};
  Adam opt(b.policy.parameters().size(), cfg.learning_rate);
  auto reward = [](std::size_t, const ActionSequence& a) { return a.tokens[0] == 0 ? 1.0 : 0.0; };
  int steps = 0;
  for (; steps < 500 && b.p_first() < 0.95; ++steps) {
    const GrpoReport r = grpo_step(b.policy, ref, b.inputs, reward, cfg, opt, static_cast<std::uint64_t>(steps));
    EXPECT_GE(r.clip_frac, 0.0);
    EXPECT_LE(r.clip_frac, 1.0);
  }
  EXPECT_GE(b.p_first(), 0.95) << "after " << steps << " steps";
}

TEST(Grpo, NonFiniteRewardNamesTheState) {
  Bandit b;
  GrpoConfig cfg;
  Adam opt(b.policy.parameters().size());
  const std::vector<std::string> names{"q7"};
  try {
    grpo_step(b.policy, b.policy, b.inputs, [](std::size_t, const ActionSequence&) { return NAN; }, cfg, opt, 0,
              names);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("q7"), std::string::npos);
  }
}

TEST(Grpo, ConfigValidation) {
  GrpoConfig c;
  c.group_size = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.clip_eps = -0.1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.sampler.top_p = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Sft, RepeatedPairNllDecreases) {
  NeuralPolicy p({3, 4, 2, 8, 8}, 2);
  const std::vector<PolicyInput> inputs{PolicyInput{0, {1}, 0}};
  const std::vector<SftExample> batch{{0, {{2, 0, 3}}}};
  Adam opt(p.parameters().size(), 1e-2);
  double prev = INFINITY;
  for (int i = 0; i < 100; ++i) {
    const double nll = sft_step(p, inputs, batch, opt);
    EXPECT_LE(nll, prev + 1e-9) << "step " << i;
    prev = nll;
  }
  EXPECT_THROW(sft_step(p, inputs, std::vector<SftExample>{}, opt), Error);
}

TEST(Sft, TabularStepLowersNll) {
  TabularPolicy p(1, 3, 1);
  const std::vector<SftExample> batch{{0, {{1, 2}}}};
  double prev = INFINITY;
  for (int i = 0; i < 20; ++i) {
    const double nll = sft_step(p, batch, 0.5);
    EXPECT_LE(nll, prev + 1e-12);
    prev = nll;
  }
  EXPECT_THROW(sft_step(p, std::vector<SftExample>{}, 0.1), Error);
}

TEST(Sft, TabularFitApproachesGenerator) {
  Rng rng(17);
  const TabularPolicy gen = random_tabular_policy(2, 3, 2, rng, 0.1);
  const TabularInstance inst = random_instance(2, 3, 2, 1.0, rng);
  const auto data = sample_dataset(gen, inst.inputs(), inst.state_probs, 100000, rng);
  const TabularPolicy fit = sft_fit_tabular(data, 2, 3, 2);
  double max_tv = 0.0;
  for (std::size_t s = 0; s < 2; ++s) {
    const Eigen::VectorXd a = fit.row(s, 0, fit.begin_token());
    const Eigen::VectorXd b = gen.row(s, 0, gen.begin_token());
    max_tv = std::max(max_tv, tv_distance(a, b));
    for (int prev = 0; prev < 2; ++prev)
      max_tv = std::max(max_tv, tv_distance(Eigen::VectorXd(fit.row(s, 1, prev)), Eigen::VectorXd(gen.row(s, 1, prev))));
  }
  EXPECT_LE(max_tv, 0.02);
}
