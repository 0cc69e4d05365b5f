#include <gtest/gtest.h>

#include "poisonlab/errors.hpp"
#include "poisonlab/rollout.hpp"
#include "poisonlab/vulnerability.hpp"
#include "test_util.hpp"

using namespace poisonlab;

namespace {

/// Random policy within TV distance delta of `pi` in every state.
TabularPolicy perturb_policy(const TabularPolicy& pi, double delta, Rng& rng) {
  TabularPolicy out = pi;
  for (Index s = 0; s < pi.rows(); ++s) {
    Vector target(pi.cols());
    for (Index a = 0; a < pi.cols(); ++a) target[a] = rng.uniform() + 1e-3;
    target /= target.sum();
    const double tv = 0.5 * (target - pi.row(s).transpose()).cwiseAbs().sum();
    const double mix = tv > delta ? delta / tv : 1.0;
    out.row(s) = (1.0 - mix) * pi.row(s) + mix * target.transpose();
  }
  return out;
}

}  // namespace

TEST(RewardDropBound, DominatesExactDrop) {
  Rng rng(1);
  for (int trial = 0; trial < 30; ++trial) {
    const int S = 2 + static_cast<int>(rng.index(5)), A = 2 + static_cast<int>(rng.index(3));
    const TabularMDP m = testutil::random_mdp(S, A, 0.9, rng);
    const TabularPolicy pi = testutil::random_policy(S, A, rng);
    const double eta = policy_evaluation(m, pi).eta;
    for (double delta : {0.01, 0.05, 0.1}) {
      const double bound = reward_drop_bound(m, pi, delta, m.gamma);
      for (int i = 0; i < 20; ++i) {
        const double drop = eta - policy_evaluation(m, perturb_policy(pi, delta, rng)).eta;
        EXPECT_LE(drop, bound);
      }
    }
  }
}

TEST(RewardDropBound, ZeroDeltaZeroBound) {
  Rng rng(2);
  const TabularMDP m = testutil::random_mdp(3, 2, 0.9, rng);
  EXPECT_EQ(reward_drop_bound(m, testutil::random_policy(3, 2, rng), 0.0, 0.9), 0.0);
  EXPECT_THROW(reward_drop_bound(m, testutil::random_policy(3, 2, rng), -0.1, 0.9), DomainError);
}

TEST(EvasionBound, Formula) {
  Rng rng(3);
  TabularMDP m = testutil::random_mdp(3, 2, 0.9, rng);
  const double max_r = m.reward.cwiseAbs().maxCoeff();
  EXPECT_NEAR(evasion_reward_drop_bound(m, 0.1, 0.9), (2.0 * 0.1 * 0.9 / 0.01 + 0.2) * max_r, 1e-12);
}

TEST(RobustnessRadius, LinearTwoActionBoundary) {
  // Logits W s + b: the argmax flips on the hyperplane (w1 - w0) s + (b1 - b0) = 0.
  Rng rng(4);
  PolicyParams p = make_softmax_policy(Architecture::linear, 3, 0, 2, rng);
  RadiusSearch search;
  search.eps_max = 20.0;
  search.bisection_iters = 40;
  const Vector w = (p.net.w2.row(1) - p.net.w2.row(0)).transpose();
  const double b = p.net.b2[1] - p.net.b2[0];
  for (int i = 0; i < 10; ++i) {
    const Vector s = testutil::random_vector(3, rng);
    const double analytic = std::abs(w.dot(s) + b) / w.norm();
    const RadiusEstimate est = robustness_radius_state(p, s, 0.1, true, search);
    ASSERT_FALSE(est.unbounded());
    EXPECT_LE(est.lo, analytic + 1e-12);
    EXPECT_LE(*est.hi - analytic, 1e-3);
  }
}

TEST(RobustnessRadius, UnboundedWhenOutOfReach) {
  const PolicyParams p = zero_softmax_policy(Architecture::linear, 2, 0, 2);
  RadiusSearch search;
  search.eps_max = 1.0;
  const RadiusEstimate est = robustness_radius_state(p, Vector::Ones(2), 0.1, false, search);
  EXPECT_TRUE(est.unbounded());
  EXPECT_EQ(est.value(), est.lo);
}

TEST(StabilityRadius, BracketIsConsistentWithTrace) {
  Rng rng(5);
  LearnerState l;
  l.algo = Algo::vpg;
  l.lr_policy = 0.5;
  l.gamma = 0.99;
  l.policy = make_softmax_policy(Architecture::tabular, 11, 0, 2, rng);
  const Observation obs = rollout_episodes(l.policy, river_mdp(), 4, rng);
  RadiusSearch search;
  search.bisection_iters = 10;
  search.pgd.max_iters = 10;
  const RadiusEstimate est = stability_radius_update(l, obs, Aim::rewards, 0.05, search, rng);
  ASSERT_FALSE(est.unbounded());
  EXPECT_LT(est.lo, *est.hi);
  for (const auto& [eps, psi] : est.trace) {
    if (eps >= *est.hi) EXPECT_GE(psi, 0.05);
  }
  EXPECT_THROW(stability_radius_update(l, obs, Aim::rewards, 0.0, search, rng), DomainError);
}

TEST(StabilityRadius, MdpMinimumIsBelowEachSample) {
  Rng rng(6);
  LearnerState l;
  l.algo = Algo::vpg;
  l.lr_policy = 0.5;
  l.gamma = 0.9;
  l.policy = zero_softmax_policy(Architecture::tabular, 4, 0, 2);
  const TabularMDP m = testutil::random_mdp(4, 2, 0.9, rng);
  MdpSampling sampling;
  sampling.n_policies = 3;
  sampling.n_obs_per_policy = 1;
  RadiusSearch search;
  search.bisection_iters = 8;
  search.pgd.max_iters = 5;
  const RadiusEstimate est = stability_radius_mdp(l, m, Aim::rewards, 0.05, sampling, search, rng);
  EXPECT_GE(est.lo, 0.0);
  if (!est.unbounded()) EXPECT_LE(est.lo, *est.hi);
}
