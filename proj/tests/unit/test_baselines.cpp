#include <gtest/gtest.h>

#include <set>

#include "poisonlab/baselines.hpp"
#include "poisonlab/errors.hpp"
#include "poisonlab/rollout.hpp"
#include "test_util.hpp"

using namespace poisonlab;

namespace {

Observation cartpole_obs(std::uint64_t seed, PolicyParams* policy = nullptr) {
  Rng rng(seed);
  const PolicyParams p = make_softmax_policy(Architecture::mlp, 4, 8, 2, rng);
  if (policy) *policy = p;
  return rollout_episodes(p, CartPole{}, 3, rng);
}

}  // namespace

TEST(RandomSchedule, SortedDistinctInRange) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const int K = 1 + static_cast<int>(rng.index(40));
    const int C = static_cast<int>(rng.index(static_cast<std::size_t>(K) + 1));
    const auto s = random_schedule(C, K, rng);
    ASSERT_EQ(s.size(), static_cast<std::size_t>(C));
    EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
    EXPECT_EQ(std::set<int>(s.begin(), s.end()).size(), s.size());
    for (int k : s) EXPECT_TRUE(k >= 1 && k <= K);
  }
  const auto all = random_schedule(5, 5, rng);
  EXPECT_EQ(all, (std::vector<int>{1, 2, 3, 4, 5}));
  EXPECT_THROW(random_schedule(6, 5, rng), InputError);
}

TEST(RandomPerturb, EffortIsExactlyEps) {
  const Observation obs = cartpole_obs(2);
  Rng rng(3);
  for (double eps : {0.1, 0.5, 2.0}) {
    EXPECT_NEAR(total_effort(Aim::rewards, obs, random_perturb(obs, Aim::rewards, eps, rng)), eps, 1e-12);
    EXPECT_NEAR(total_effort(Aim::states, obs, random_perturb(obs, Aim::states, eps, rng)), eps, 1e-12);
    const Observation flipped = random_perturb(obs, Aim::actions, eps, rng, 2);
    EXPECT_DOUBLE_EQ(total_effort(Aim::actions, obs, flipped),
                     static_cast<double>(max_flips(eps, obs.num_steps())) / static_cast<double>(obs.num_steps()));
  }
}

TEST(RandomPerturb, OnlyTouchesItsAim) {
  const Observation obs = cartpole_obs(4);
  Rng rng(5);
  const Observation p = random_perturb(obs, Aim::rewards, 0.5, rng);
  for (std::size_t i = 0; i < obs.trajectories.size(); ++i) {
    EXPECT_EQ(p.trajectories[i].states, obs.trajectories[i].states);
    EXPECT_EQ(p.trajectories[i].actions, obs.trajectories[i].actions);
    EXPECT_EQ(p.trajectories[i].dones, obs.trajectories[i].dones);
  }
  EXPECT_TRUE(identical(random_perturb(obs, Aim::states, 0.0, rng), obs));
}

TEST(Fgsm, SignOfTargetProbabilityGradient) {
  PolicyParams p;
  const Observation obs = cartpole_obs(6, &p);
  TargetPolicy target;
  target.action = 1;
  const Vector s = obs.trajectories[0].states[0];
  const Vector stepped = fgsm_targeted_step(p, s, target, 0.1);
  const auto prob = [&](const Vector& x) { return policy_forward(p, x).probs[1]; };
  const Vector g = testutil::central_diff(prob, s, 1e-6);
  for (Index i = 0; i < s.size(); ++i) {
    EXPECT_NEAR(stepped[i] - s[i], g[i] > 0 ? 0.1 : -0.1, 1e-15);
  }
  EXPECT_GT(prob(stepped), prob(s));
}

TEST(Fgsm, ZeroGradientLeavesStateUnchanged) {
  const PolicyParams p = zero_softmax_policy(Architecture::mlp, 4, 8, 2);
  TargetPolicy target;
  target.action = 0;
  const Vector s = Vector::Constant(4, 0.3);
  EXPECT_EQ(fgsm_targeted_step(p, s, target, 0.1), s);
}

TEST(Fgsm, PoisonStaysInInfBall) {
  PolicyParams p;
  const Observation obs = cartpole_obs(7, &p);
  TargetPolicy target;
  target.action = 0;
  const Observation poisoned = fgsm_poison(p, obs, target, 0.05);
  for (std::size_t i = 0; i < obs.trajectories.size(); ++i) {
    for (std::size_t t = 0; t < obs.trajectories[i].size(); ++t) {
      EXPECT_LE((poisoned.trajectories[i].states[t] - obs.trajectories[i].states[t]).cwiseAbs().maxCoeff(),
                0.05 + 1e-15);
    }
  }
}
