#include <gtest/gtest.h>

#include <sstream>

#include "poisonlab/errors.hpp"
#include "poisonlab/rollout.hpp"
#include "poisonlab/tabular.hpp"
#include "test_util.hpp"

using namespace poisonlab;

namespace {

/// Softmax policy over one-hot states that picks `choice[s]` with
/// probability ~1 (logit gap 60).
PolicyParams deterministic_tabular(const std::vector<int>& choice, int n_actions) {
  PolicyParams p = zero_softmax_policy(Architecture::tabular, static_cast<Index>(choice.size()), 0, n_actions);
  for (std::size_t s = 0; s < choice.size(); ++s) p.net.w2(choice[s], static_cast<Index>(s)) = 60.0;
  return p;
}

TabularPolicy one_hot_policy(const std::vector<int>& choice, int n_actions) {
  TabularPolicy pi = TabularPolicy::Zero(static_cast<Index>(choice.size()), n_actions);
  for (std::size_t s = 0; s < choice.size(); ++s) pi(static_cast<Index>(s), choice[s]) = 1.0;
  return pi;
}

TabularMDP self_loop(double reward, double gamma) {
  TabularMDP m = TabularMDP::sized(1, 1, gamma, 10);
  m.p(0, 0, 0) = 1.0;
  m.reward(0, 0) = reward;
  m.initial_dist[0] = 1.0;
  return m;
}

}  // namespace

TEST(Reset, TabularInitialDistribution) {
  TabularMDP m = TabularMDP::sized(3, 1, 0.9);
  for (int s = 0; s < 3; ++s) m.p(s, 0, s) = 1.0;
  m.initial_dist[0] = 1.0;
  Rng rng(1);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(env_reset(m, rng).index, 0);
}

TEST(Reset, CartpoleRange) {
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const EnvState s = env_reset(CartPole{}, rng);
    ASSERT_EQ(s.x.size(), 4);
    ASSERT_LE(s.x.cwiseAbs().maxCoeff(), 0.05);
    ASSERT_EQ(s.steps, 0);
  }
}

TEST(Reset, FixedSeedReplays) {
  Rng a(3), b(3);
  EXPECT_EQ(env_reset(CartPole{}, a).x, env_reset(CartPole{}, b).x);
}

TEST(Step, TabularSelfLoop) {
  const TabularMDP m = self_loop(1.0, 0.5);
  Rng rng(1);
  const auto r = env_step(m, env_reset(m, rng), Action::discrete(0), rng);
  EXPECT_EQ(r.reward, 1.0);
  EXPECT_EQ(r.next.index, 0);
  EXPECT_THROW(env_step(m, r.next, Action::discrete(1), rng), DomainError);
}

TEST(Step, CartpolePushRightFromRest) {
  // Independent evaluation of the published Euler dynamics at theta = 0.
  const double g = 9.8, mc = 1.0, mp = 0.1, l = 0.5, f = 10.0, dt = 0.02;
  const double temp = f / (mc + mp);
  const double theta_acc = (g * 0.0 - temp) / (l * (4.0 / 3.0 - mp / (mc + mp)));
  const double x_acc = temp - mp * l * theta_acc / (mc + mp);
  EnvState s;
  s.x = Vector::Zero(4);
  Rng rng(0);
  const auto r = env_step(CartPole{}, s, Action::discrete(1), rng);
  EXPECT_NEAR(r.next.x[1], dt * x_acc, 1e-12);
  EXPECT_NEAR(r.next.x[1], 0.19512, 1e-5);
  EXPECT_NEAR(r.next.x[3], dt * theta_acc, 1e-12);
  EXPECT_NEAR(r.next.x[3], -0.29268, 1e-5);
  EXPECT_EQ(r.next.x[0], 0.0);
  EXPECT_EQ(r.reward, 1.0);
  EXPECT_FALSE(r.done);
}

TEST(Step, CartpoleTerminatesOnAngle) {
  EnvState s;
  s.x = Vector::Zero(4);
  s.x[2] = 0.25;
  Rng rng(0);
  EXPECT_TRUE(env_step(CartPole{}, s, Action::discrete(0), rng).done);
}

TEST(Step, PointMassKinematics) {
  PointMass pm;
  EnvState s;
  s.x = Vector(4);
  s.x << 1.0, -1.0, 0.5, 0.25;
  Rng rng(0);
  const auto zero = env_step(pm, s, Action::continuous(Vector::Zero(2)), rng);
  EXPECT_NEAR(zero.next.x[0], 1.0 + 0.1 * 0.5, 1e-15);
  EXPECT_NEAR(zero.next.x[1], -1.0 + 0.1 * 0.25, 1e-15);
  EXPECT_EQ(zero.next.x.tail(2), s.x.tail(2));
  Vector big(2);
  big << 5.0, -0.5;
  const auto pushed = env_step(pm, s, Action::continuous(big), rng);
  EXPECT_NEAR(pushed.next.x[2], 0.5 + 0.1 * 1.0, 1e-15);
  EXPECT_NEAR(pushed.next.x[3], 0.25 - 0.05, 1e-15);
  EXPECT_NEAR(pushed.reward, -pushed.next.x.head(2).norm(), 1e-15);
}

TEST(Rollout, DeterministicPolicyOnRiver) {
  const TabularMDP river = river_mdp();
  // a_1 everywhere swims straight to the end: 10 steps, reward 10 at the last.
  const PolicyParams p = deterministic_tabular(std::vector<int>(11, 1), 2);
  Rng rng(4);
  const Observation obs = rollout_episodes(p, river, 1, rng);
  ASSERT_EQ(obs.trajectories.size(), 1u);
  const Trajectory& tr = obs.trajectories[0];
  ASSERT_EQ(tr.size(), 10u);
  for (std::size_t t = 0; t < 10; ++t) {
    EXPECT_EQ(tr.states[t], one_hot(static_cast<int>(t) + 1, 11));
    EXPECT_EQ(tr.rewards[t], t == 9 ? 10.0 : 0.0);
    EXPECT_EQ(tr.dones[t], t == 9);
  }
}

TEST(Rollout, HorizonBoundsLength) {
  CartPole cp;
  cp.horizon = 7;
  Rng rng(5);
  const PolicyParams p = make_softmax_policy(Architecture::mlp, 4, 8, 2, rng);
  const Observation obs = rollout_episodes(p, cp, 3, rng);
  for (const auto& tr : obs.trajectories) EXPECT_LE(tr.size(), 7u);
}

TEST(Rollout, FixedSeedIsBitIdentical) {
  Rng init(6);
  const PolicyParams p = make_softmax_policy(Architecture::mlp, 4, 8, 2, init);
  Rng a(9), b(9);
  EXPECT_TRUE(identical(rollout_episodes(p, CartPole{}, 4, a), rollout_episodes(p, CartPole{}, 4, b)));
  const Environment env = CartPole{};
  ParallelEnvs pa(env, 3, Rng(1)), pb(env, 3, Rng(1));
  for (int i = 0; i < 5; ++i) EXPECT_TRUE(identical(pa.rollout(p, 5), pb.rollout(p, 5)));
}

TEST(Rollout, SampledTransitionsHavePositiveProbability) {
  Rng rng(7);
  const TabularMDP m = testutil::random_mdp(4, 3, 0.9, rng);
  const PolicyParams p = make_softmax_policy(Architecture::tabular, 4, 0, 3, rng);
  const Observation obs = rollout_episodes(p, m, 5, rng);
  for (const auto& tr : obs.trajectories) {
    for (std::size_t t = 0; t + 1 < tr.size(); ++t) {
      Index s, n;
      tr.states[t].maxCoeff(&s);
      tr.states[t + 1].maxCoeff(&n);
      EXPECT_GT(m.p(static_cast<int>(s), tr.actions[t].index, static_cast<int>(n)), 0.0);
    }
  }
}

TEST(Rollout, ParallelSegmentsCarryFinalState) {
  Rng rng(8);
  const PolicyParams p = make_softmax_policy(Architecture::mlp, 4, 8, 2, rng);
  const Environment env = CartPole{};
  ParallelEnvs envs(env, 4, rng);
  const Observation obs = envs.rollout(p, 5);
  EXPECT_EQ(obs.num_steps(), 20u);
  validate(obs);
  for (const auto& tr : obs.trajectories) EXPECT_EQ(tr.ends_episode(), tr.final_state.size() == 0);
}

TEST(River, Structure) {
  const TabularMDP river = river_mdp();
  EXPECT_EQ(river.n_states, 11);
  EXPECT_NO_THROW(validate(river));
  for (int s = 0; s < river.n_states; ++s) {
    for (int a = 0; a < 2; ++a) {
      double total = 0.0;
      for (int n = 0; n < river.n_states; ++n) total += river.p(s, a, n);
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(River, FarsightedPathBeatsImmediateReward) {
  const TabularMDP river = river_mdp();
  const double greedy = policy_evaluation(river, one_hot_policy(std::vector<int>(11, 0), 2)).eta;
  const double path = policy_evaluation(river, one_hot_policy(std::vector<int>(11, 1), 2)).eta;
  EXPECT_NEAR(greedy, 1.0, 1e-12);
  EXPECT_NEAR(path, 10.0 * std::pow(0.99, 9), 1e-10);
  EXPECT_LT(greedy, path);
  EXPECT_EQ(value_iteration(river).greedy[1], 1);
}

TEST(River, ShortSightedDiscountPicksTrap) {
  RiverOptions o;
  o.gamma = 0.5;
  EXPECT_EQ(value_iteration(river_mdp(o)).greedy[1], 0);
}

TEST(PolicyEvaluation, GeometricSeries) {
  const auto pv = policy_evaluation(self_loop(1.0, 0.5), TabularPolicy::Ones(1, 1));
  EXPECT_NEAR(pv.v[0], 2.0, 1e-12);
  EXPECT_NEAR(pv.eta, 2.0, 1e-12);
}

TEST(PolicyEvaluation, ZeroRewards) {
  Rng rng(1);
  TabularMDP m = testutil::random_mdp(4, 2, 0.9, rng);
  m.reward.setZero();
  const auto pv = policy_evaluation(m, testutil::random_policy(4, 2, rng));
  EXPECT_EQ(pv.v.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(pv.q.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(pv.advantage.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(pv.eta, 0.0);
}

TEST(PolicyEvaluation, BellmanResidualAndConsistency) {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const TabularMDP m = testutil::random_mdp(6, 3, 0.9, rng);
    const TabularPolicy pi = testutil::random_policy(6, 3, rng);
    const auto pv = policy_evaluation(m, pi);
    for (int s = 0; s < 6; ++s) {
      double v = 0.0;
      for (int a = 0; a < 3; ++a) {
        double q = m.reward(s, a);
        for (int n = 0; n < 6; ++n) q += m.gamma * m.p(s, a, n) * pv.v[n];
        EXPECT_NEAR(pv.q(s, a), q, 1e-9);
        EXPECT_NEAR(pv.advantage(s, a), pv.q(s, a) - pv.v[s], 1e-12);
        v += pi(s, a) * q;
      }
      EXPECT_NEAR(pv.v[s], v, 1e-9);
    }
    const Vector g = discounted_visitation(m, pi);
    double eta = 0.0;
    for (int s = 0; s < 6; ++s) eta += g[s] * pi.row(s).dot(m.reward.row(s));
    EXPECT_NEAR(eta, pv.eta, 1e-8);
    EXPECT_NEAR(g.sum(), 1.0 / (1.0 - m.gamma), 1e-8);
  }
}

TEST(PolicyEvaluation, MatchesMonteCarlo) {
  Rng rng(3);
  TabularMDP m = testutil::random_mdp(5, 2, 0.6, rng);
  m.initial_dist.setZero();
  m.initial_dist[2] = 1.0;
  m.horizon = 1000;
  const TabularPolicy pi = testutil::random_policy(5, 2, rng);
  const double exact = policy_evaluation(m, pi).v[2];
  const int episodes = 100000;
  double sum = 0.0, sum_sq = 0.0;
  Rng mc(4);
  for (int e = 0; e < episodes; ++e) {
    int s = 2;
    double discount = 1.0, ret = 0.0;
    // 0.6^80 is far below double resolution of the return.
    for (int t = 0; t < 80; ++t) {
      const int a = mc.uniform() < pi(s, 0) ? 0 : 1;
      ret += discount * m.reward(s, a);
      discount *= m.gamma;
      const double u = mc.uniform();
      double cum = 0.0;
      int next = 4;
      for (int n = 0; n < 5; ++n) {
        cum += m.p(s, a, n);
        if (u < cum) {
          next = n;
          break;
        }
      }
      s = next;
    }
    sum += ret;
    sum_sq += ret * ret;
  }
  const double mean = sum / episodes;
  const double se = std::sqrt((sum_sq / episodes - mean * mean) / episodes);
  EXPECT_NEAR(mean, exact, 3.0 * se);
}

TEST(PolicyEvaluation, RejectsNonSimplexPolicy) {
  TabularPolicy pi(1, 1);
  pi(0, 0) = 0.7;
  EXPECT_THROW(policy_evaluation(self_loop(1.0, 0.5), pi), DomainError);
}

TEST(Visitation, Examples) {
  EXPECT_NEAR(discounted_visitation(self_loop(1.0, 0.5), TabularPolicy::Ones(1, 1))[0], 2.0, 1e-12);
  TabularMDP alt = TabularMDP::sized(2, 1, 0.5);
  alt.p(0, 0, 1) = 1.0;
  alt.p(1, 0, 0) = 1.0;
  alt.initial_dist[0] = 1.0;
  const Vector g = discounted_visitation(alt, TabularPolicy::Ones(2, 1));
  EXPECT_NEAR(g[0], 4.0 / 3.0, 1e-12);
  EXPECT_NEAR(g[1], 2.0 / 3.0, 1e-12);
}

TEST(ValueIteration, MatchesEnumerationOfDeterministicPolicies) {
  // 0 -> {stay, go to 1}; 1 -> {back to 0, go to 2}; 2 absorbing with reward 1.
  TabularMDP m = TabularMDP::sized(3, 2, 0.9);
  m.p(0, 0, 0) = 1.0;
  m.p(0, 1, 1) = 1.0;
  m.p(1, 0, 0) = 1.0;
  m.p(1, 1, 2) = 1.0;
  m.p(2, 0, 2) = 1.0;
  m.p(2, 1, 2) = 1.0;
  m.reward(2, 0) = m.reward(2, 1) = 1.0;
  m.reward(0, 0) = 0.05;
  m.initial_dist[0] = 1.0;
  const auto opt = value_iteration(m);
  double best = -1e9;
  for (int code = 0; code < 8; ++code) {
    const std::vector<int> choice{code & 1, (code >> 1) & 1, (code >> 2) & 1};
    const auto pv = policy_evaluation(m, one_hot_policy(choice, 2));
    for (int s = 0; s < 3; ++s) EXPECT_GE(opt.v[s], pv.v[s] - 1e-10);
    best = std::max(best, pv.v[0]);
  }
  EXPECT_NEAR(opt.v[0], best, 1e-10);
  EXPECT_EQ(opt.greedy[0], 1);
  EXPECT_EQ(opt.greedy[1], 1);
}

TEST(ValueIteration, DominatesRandomPolicies) {
  Rng rng(5);
  const TabularMDP m = testutil::random_mdp(6, 3, 0.95, rng);
  const auto opt = value_iteration(m);
  for (int i = 0; i < 20; ++i) {
    const auto pv = policy_evaluation(m, testutil::random_policy(6, 3, rng));
    EXPECT_TRUE(((opt.v - pv.v).array() >= -1e-10).all());
  }
}

TEST(MdpFile, RoundTrip) {
  Rng rng(6);
  TabularMDP m = testutil::random_mdp(3, 2, 0.9, rng);
  m.terminal[2] = true;
  std::stringstream ss;
  write_tabular_mdp(ss, m);
  const TabularMDP back = read_tabular_mdp(ss);
  EXPECT_EQ(back.transition, m.transition);
  EXPECT_EQ(back.reward, m.reward);
  EXPECT_EQ(back.terminal, m.terminal);
  EXPECT_EQ(back.gamma, m.gamma);
}

TEST(MdpFile, RejectsBadRows) {
  std::stringstream ss(
      "poisonlab-mdp v1\nstates 1\nactions 1\ngamma 0.9\nhorizon 5\ninitial 1\nterminal 0\n"
      "transition\n0.5\nreward\n1\n");
  EXPECT_THROW(read_tabular_mdp(ss), DomainError);
}
