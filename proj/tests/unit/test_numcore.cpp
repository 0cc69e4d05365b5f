#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "poisonlab/checkpoint.hpp"
#include "poisonlab/errors.hpp"
#include "test_util.hpp"

using namespace poisonlab;
using testutil::central_diff;
using testutil::random_vector;
using testutil::rel_error;

namespace {

PolicyParams random_policy_net(bool discrete, Architecture arch, Rng& rng) {
  const Index state_dim = 3 + static_cast<Index>(rng.index(3));
  const Index out = 2 + static_cast<Index>(rng.index(2));
  PolicyParams p = discrete ? make_softmax_policy(arch, state_dim, 5, out, rng)
                            : make_gaussian_policy(arch, state_dim, 5, out, rng, -0.3);
  // Push weights away from the tiny init so the check exercises curvature.
  return with_flat(p, 2.0 * to_flat(p) + 0.1 * random_vector(p.num_params(), rng));
}

Action random_action(const PolicyParams& p, Rng& rng) {
  if (p.discrete()) return Action::discrete(static_cast<int>(rng.index(p.action_size())));
  return Action::continuous(random_vector(p.action_size(), rng));
}

}  // namespace

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
  Rng c(43);
  EXPECT_NE(Rng(42).next_u64(), c.next_u64());
}

TEST(Rng, SplitDoesNotAdvanceParent) {
  Rng a(7);
  Rng child = a.split(1);
  Rng b(7);
  EXPECT_EQ(a.next_u64(), b.next_u64());
  EXPECT_NE(child.next_u64(), a.split(2).next_u64());
}

TEST(Rng, UniformRange) {
  Rng r(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Mlp, HiddenActivationMatchesStdTanh) {
  Mlp net = zero_mlp(Architecture::mlp, 1, 1, 1);
  net.w1(0, 0) = 1.0;
  MlpTrace trace;
  for (double x = -25.0; x <= 25.0; x += 0.01) {
    mlp_forward(net, Vector::Constant(1, x), trace);
    EXPECT_NEAR(trace.hidden[0], std::tanh(x), 1e-15) << x;
  }
}

TEST(PolicyForward, ZeroSoftmaxIsUniform) {
  const PolicyParams p = zero_softmax_policy(Architecture::mlp, 4, 8, 2);
  const auto d = policy_forward(p, Vector::Constant(4, 3.0));
  EXPECT_DOUBLE_EQ(d.probs[0], 0.5);
  EXPECT_DOUBLE_EQ(d.probs[1], 0.5);
}

TEST(PolicyForward, ZeroGaussianIsStandardNormal) {
  PolicyParams p = zero_gaussian_policy(Architecture::mlp, 3, 8, 2);
  const auto d = policy_forward(p, Vector::Ones(3));
  EXPECT_EQ(d.mean, Vector::Zero(2));
  EXPECT_EQ(d.stddev, Vector::Ones(2));
}

TEST(PolicyForward, ShapeMismatchThrows) {
  const PolicyParams p = zero_softmax_policy(Architecture::mlp, 4, 8, 2);
  EXPECT_THROW(policy_forward(p, Vector::Zero(3)), ShapeError);
}

TEST(PolicyForward, ProbabilitiesFormSimplex) {
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const PolicyParams p = random_policy_net(true, Architecture::mlp, rng);
    const auto d = policy_forward(p, random_vector(p.state_dim(), rng, 3.0));
    EXPECT_NEAR(d.probs.sum(), 1.0, 1e-9);
    EXPECT_GE(d.probs.minCoeff(), 0.0);
  }
}

TEST(PolicyForward, TaylorRemainderIsSecondOrder) {
  Rng rng(5);
  const PolicyParams p = random_policy_net(true, Architecture::mlp, rng);
  const Vector s = random_vector(p.state_dim(), rng);
  const Action a = Action::discrete(0);
  const Vector theta = to_flat(p);
  const Vector dir = random_vector(theta.size(), rng);
  const auto grad = log_prob_and_grads(p, s, a).grad_params;
  auto remainder = [&](double h) {
    const double moved = log_prob(with_flat(p, theta + h * dir), s, a);
    return std::abs(moved - log_prob(p, s, a) - h * grad.dot(dir));
  };
  // Halving h should shrink the remainder by about 4.
  const double ratio = remainder(1e-3) / remainder(5e-4);
  EXPECT_GT(ratio, 3.5);
  EXPECT_LT(ratio, 4.5);
}

TEST(LogProb, SoftmaxLogitGradient) {
  const PolicyParams p = zero_softmax_policy(Architecture::linear, 3, 0, 2);
  const auto lg = log_prob_and_grads(p, Vector::Zero(3), Action::discrete(0));
  EXPECT_NEAR(lg.logp, std::log(0.5), 1e-15);
  // Flat order is W2 then b2; b2 receives d logp / d logits.
  EXPECT_NEAR(lg.grad_params[6], 0.5, 1e-15);
  EXPECT_NEAR(lg.grad_params[7], -0.5, 1e-15);
}

TEST(LogProb, StandardNormalDensity) {
  const PolicyParams p = zero_gaussian_policy(Architecture::mlp, 2, 4, 3);
  const double logp = log_prob(p, Vector::Ones(2), Action::continuous(Vector::Zero(3)));
  EXPECT_NEAR(logp, -1.5 * std::log(2.0 * M_PI), 1e-12);
}

TEST(LogProb, InvalidActionThrows) {
  const PolicyParams p = zero_softmax_policy(Architecture::mlp, 2, 4, 2);
  EXPECT_THROW(log_prob(p, Vector::Zero(2), Action::discrete(2)), DomainError);
  EXPECT_THROW(log_prob(p, Vector::Zero(2), Action::continuous(Vector::Zero(2))), DomainError);
}

class LogProbGradients : public ::testing::TestWithParam<std::tuple<bool, Architecture>> {};

TEST_P(LogProbGradients, MatchCentralDifferences) {
  const auto [discrete, arch] = GetParam();
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const PolicyParams p = random_policy_net(discrete, arch, rng);
    const Vector s = random_vector(p.state_dim(), rng);
    const Action a = random_action(p, rng);
    const LogProbGrad lg = log_prob_and_grads(p, s, a);
    const Vector fd_params =
        central_diff([&](const Vector& th) { return log_prob(with_flat(p, th), s, a); }, to_flat(p));
    const Vector fd_state = central_diff([&](const Vector& x) { return log_prob(p, x, a); }, s);
    EXPECT_LT(rel_error(lg.grad_params, fd_params), 1e-4) << "trial " << trial;
    EXPECT_LT(rel_error(lg.grad_state, fd_state), 1e-4) << "trial " << trial;
  }
}

INSTANTIATE_TEST_SUITE_P(Heads, LogProbGradients,
                         ::testing::Combine(::testing::Bool(),
                                            ::testing::Values(Architecture::mlp, Architecture::linear)));

TEST(Value, ZeroParamsGiveZero) {
  const ValueParams v = zero_value(Architecture::mlp, 3, 6);
  EXPECT_EQ(value_forward(v, Vector::Ones(3)), 0.0);
}

TEST(Value, GradientMatchesCentralDifferences) {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    ValueParams v = make_value(Architecture::mlp, 4, 7, rng);
    v = with_flat(v, 2.0 * to_flat(v));
    const Vector s = random_vector(4, rng);
    const ValueGrad vg = value_forward_and_grad(v, s);
    const Vector fd = central_diff([&](const Vector& th) { return value_forward(with_flat(v, th), s); }, to_flat(v));
    EXPECT_LT(rel_error(vg.grad_params, fd), 1e-4);
    EXPECT_DOUBLE_EQ(vg.value, value_forward(v, s));
  }
}

TEST(Value, DoublingOutputLayerDoublesValue) {
  Rng rng(17);
  ValueParams v = make_value(Architecture::mlp, 3, 5, rng);
  v.net.b2.setZero();
  const Vector s = random_vector(3, rng);
  const double before = value_forward(v, s);
  v.net.w2 *= 2.0;
  EXPECT_NEAR(value_forward(v, s), 2.0 * before, 1e-14);
}

TEST(SgdStep, Examples) {
  Vector p(2), g(2);
  p << 1, 2;
  g << 1, -1;
  const Vector out = sgd_step(p, g, 0.1);
  EXPECT_DOUBLE_EQ(out[0], 1.1);
  EXPECT_DOUBLE_EQ(out[1], 1.9);
  EXPECT_EQ(sgd_step(p, g, 0.0), p);
  EXPECT_TRUE(sgd_step(sgd_step(p, g, 0.1), g, 0.2).isApprox(sgd_step(p, g, 0.3), 1e-15));
}

TEST(SgdStep, NanGradientThrows) {
  Vector g(2);
  g << 1, std::nan("");
  EXPECT_THROW(sgd_step(Vector::Zero(2), g, 0.1), NumericError);
  EXPECT_THROW(sgd_step(Vector::Zero(2), Vector::Zero(3), 0.1), ShapeError);
}

TEST(SampleAction, DegenerateDistribution) {
  ActionDistribution d;
  d.probs = Vector(2);
  d.probs << 1.0, 0.0;
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(sample_action(d, rng).index, 0);
}

TEST(SampleAction, FixedSeedReplays) {
  Rng rng(21);
  const PolicyParams p = random_policy_net(false, Architecture::mlp, rng);
  const auto d = policy_forward(p, random_vector(p.state_dim(), rng));
  Rng a(5), b(5);
  for (int i = 0; i < 50; ++i) ASSERT_TRUE(sample_action(d, a) == sample_action(d, b));
}

TEST(SampleAction, FairCoinFrequency) {
  ActionDistribution d;
  d.probs = Vector::Constant(2, 0.5);
  Rng rng(99);
  int zeros = 0;
  for (int i = 0; i < 10000; ++i) zeros += sample_action(d, rng).index == 0;
  EXPECT_GE(zeros, 4700);
  EXPECT_LE(zeros, 5300);
}

TEST(Params, ValidateRejectsBadEntries) {
  PolicyParams p = zero_gaussian_policy(Architecture::mlp, 2, 3, 1);
  p.log_std[0] = 5.0;
  EXPECT_THROW(validate(p), DomainError);
  p.log_std[0] = 0.0;
  p.net.w1(0, 0) = std::nan("");
  EXPECT_THROW(validate(p), NumericError);
}

TEST(Params, FlatRoundTripAndClamp) {
  Rng rng(4);
  PolicyParams p = make_gaussian_policy(Architecture::mlp, 3, 4, 2, rng);
  Vector flat = to_flat(p);
  EXPECT_EQ(to_flat(with_flat(p, flat)), flat);
  flat[flat.size() - 1] = 50.0;
  EXPECT_EQ(with_flat(p, flat).log_std[1], kLogStdMax);
}

TEST(Checkpoint, RoundTripIsExact) {
  Rng rng(8);
  for (auto arch : {Architecture::mlp, Architecture::linear, Architecture::tabular}) {
    const PolicyParams p = make_gaussian_policy(arch, 4, 6, 2, rng, -0.7);
    const ValueParams v = make_value(arch, 4, 6, rng);
    std::stringstream ss;
    write_checkpoint(ss, p);
    write_checkpoint(ss, v);
    const PolicyParams p2 = read_policy_checkpoint(ss);
    const ValueParams v2 = read_value_checkpoint(ss);
    EXPECT_EQ(to_flat(p2), to_flat(p));
    EXPECT_EQ(to_flat(v2), to_flat(v));
    EXPECT_EQ(p2.net.arch, arch);
  }
}

TEST(Checkpoint, RejectsBadMagic) {
  std::stringstream ss("not-a-checkpoint\n");
  EXPECT_THROW(read_policy_checkpoint(ss), InputError);
}
