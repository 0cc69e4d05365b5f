#include <gtest/gtest.h>

#include "poisonlab/effort.hpp"
#include "poisonlab/errors.hpp"
#include "test_util.hpp"

using namespace poisonlab;

namespace {

Observation make_obs(Rng& rng, std::vector<std::size_t> lengths, Index state_dim = 3, bool discrete = true) {
  Observation obs;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    Trajectory tr;
    for (std::size_t t = 0; t < lengths[i]; ++t) {
      tr.states.push_back(testutil::random_vector(state_dim, rng));
      tr.actions.push_back(discrete ? Action::discrete(static_cast<int>(rng.index(3)))
                                    : Action::continuous(testutil::random_vector(2, rng)));
      tr.rewards.push_back(rng.normal());
      tr.dones.push_back(t + 1 == lengths[i]);
    }
    obs.trajectories.push_back(tr);
  }
  return obs;
}

}  // namespace

TEST(Effort, RewardsIsRootMeanSquare) {
  Rng rng(1);
  const Observation clean = make_obs(rng, {2, 2});
  Observation p = clean;
  p.trajectories[1].rewards[0] += 2.0;
  EXPECT_NEAR(total_effort(Aim::rewards, clean, p), 1.0, 1e-15);
  EXPECT_EQ(total_effort(Aim::rewards, clean, clean), 0.0);
}

TEST(Effort, FlipsCountedOverSteps) {
  Rng rng(2);
  const Observation clean = make_obs(rng, {3, 1});
  Observation p = clean;
  p.trajectories[0].actions[1] = Action::discrete((clean.trajectories[0].actions[1].index + 1) % 3);
  EXPECT_DOUBLE_EQ(total_effort(Aim::actions, clean, p), 0.25);
}

TEST(Effort, StatesSumOfNorms) {
  Rng rng(3);
  const Observation clean = make_obs(rng, {4});
  Observation p = clean;
  p.trajectories[0].states[0][0] += 3.0;
  p.trajectories[0].states[2][1] += 4.0;
  p.trajectories[0].states[2][2] -= 3.0;
  EXPECT_NEAR(total_effort(Aim::states, clean, p), (3.0 + 5.0) / 2.0, 1e-12);
}

TEST(Effort, ContinuousActions) {
  Rng rng(4);
  const Observation clean = make_obs(rng, {1, 3}, 3, false);
  Observation p = clean;
  p.trajectories[1].actions[2].value[0] += 1.0;
  EXPECT_NEAR(total_effort(Aim::actions, clean, p), 0.5, 1e-12);
}

TEST(Effort, Errors) {
  Rng rng(5);
  const Observation a = make_obs(rng, {2, 2});
  const Observation b = make_obs(rng, {3, 1});
  EXPECT_THROW(total_effort(Aim::rewards, a, b), InputError);
  EXPECT_THROW(total_effort(Aim::hybrid, a, a), InputError);
}

TEST(MaxFlips, Floor) {
  EXPECT_EQ(max_flips(0.5, 7), 3u);
  EXPECT_EQ(max_flips(0.3, 10), 3u);
  EXPECT_EQ(max_flips(0.0, 10), 0u);
  EXPECT_EQ(max_flips(5.0, 10), 10u);
}

TEST(Projection, RewardsOntoSphere) {
  Rng rng(6);
  const Observation clean = make_obs(rng, {5, 4});
  for (int trial = 0; trial < 20; ++trial) {
    Observation cand = clean;
    std::vector<double> r = cand.flat_rewards();
    std::vector<double> d(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] += (d[i] = 3.0 * rng.normal());
    cand.set_flat_rewards(r);
    const Observation p = project_onto_power(Aim::rewards, clean, cand, 0.4);
    EXPECT_NEAR(total_effort(Aim::rewards, clean, p), 0.4, 1e-12);
    // Same direction as the candidate's displacement.
    const std::vector<double> pr = p.flat_rewards(), cr = clean.flat_rewards();
    const double ratio = (pr[0] - cr[0]) / d[0];
    for (std::size_t i = 0; i < r.size(); ++i) EXPECT_NEAR(pr[i] - cr[i], ratio * d[i], 1e-12);
    EXPECT_TRUE(identical(project_onto_power(Aim::rewards, clean, p, 0.4), p) ||
                total_effort(Aim::rewards, p, project_onto_power(Aim::rewards, clean, p, 0.4)) < 1e-14);
  }
}

TEST(Projection, InsideBallUnchanged) {
  Rng rng(7);
  const Observation clean = make_obs(rng, {3});
  Observation cand = clean;
  cand.trajectories[0].rewards[1] += 0.1;
  EXPECT_TRUE(identical(project_onto_power(Aim::rewards, clean, cand, 0.5), cand));
}

TEST(Projection, StatesIsNearestFeasiblePoint) {
  Rng rng(8);
  const Observation clean = make_obs(rng, {4, 2});
  Observation cand = clean;
  for (auto& tr : cand.trajectories)
    for (auto& s : tr.states) s += testutil::random_vector(3, rng, 2.0);
  const double eps = 0.7;
  const Observation p = project_onto_power(Aim::states, clean, cand, eps);
  EXPECT_LE(total_effort(Aim::states, clean, p), eps * (1.0 + 1e-9));
  const double dist = total_effort(Aim::states, p, cand);
  // Random feasible points, scaled into the ball, are never closer.
  for (int i = 0; i < 200; ++i) {
    Observation q = clean;
    for (auto& tr : q.trajectories)
      for (auto& s : tr.states) s += testutil::random_vector(3, rng);
    const double e = total_effort(Aim::states, clean, q);
    const double scale = rng.uniform() * eps / e;
    for (std::size_t k = 0; k < q.trajectories.size(); ++k)
      for (std::size_t t = 0; t < q.trajectories[k].size(); ++t)
        q.trajectories[k].states[t] =
            clean.trajectories[k].states[t] + scale * (q.trajectories[k].states[t] - clean.trajectories[k].states[t]);
    EXPECT_GE(total_effort(Aim::states, q, cand), dist - 1e-12);
  }
}

TEST(Projection, FlipsKeepHighestGains) {
  Rng rng(9);
  const Observation clean = make_obs(rng, {4});
  Observation cand = clean;
  for (auto& a : cand.trajectories[0].actions) a = Action::discrete((a.index + 1) % 3);
  const std::vector<double> gains{0.1, 0.9, 0.3, 0.5};
  const Observation p = project_onto_power(Aim::actions, clean, cand, 0.5, &gains);
  EXPECT_DOUBLE_EQ(total_effort(Aim::actions, clean, p), 0.5);
  EXPECT_EQ(p.trajectories[0].actions[1], cand.trajectories[0].actions[1]);
  EXPECT_EQ(p.trajectories[0].actions[3], cand.trajectories[0].actions[3]);
  EXPECT_EQ(p.trajectories[0].actions[0], clean.trajectories[0].actions[0]);
  EXPECT_EQ(p.trajectories[0].actions[2], clean.trajectories[0].actions[2]);
}

TEST(Projection, ZeroPowerRestoresClean) {
  Rng rng(10);
  const Observation clean = make_obs(rng, {3});
  Observation cand = clean;
  cand.trajectories[0].rewards[0] += 5.0;
  EXPECT_TRUE(identical(project_onto_power(Aim::rewards, clean, cand, 0.0), clean));
}

TEST(L1Projection, Examples) {
  Vector v(2);
  v << 3.0, 1.0;
  EXPECT_TRUE(project_l1_nonnegative(v, 2.0).isApprox(Vector::Unit(2, 0) * 2.0));
  v << 1.0, 1.0;
  EXPECT_TRUE(project_l1_nonnegative(v, 1.0).isApprox(Vector::Constant(2, 0.5)));
  EXPECT_EQ(project_l1_nonnegative(v, 5.0), v);
}
