#include "poisonlab/tabular.hpp"

#include <cmath>

#include "poisonlab/errors.hpp"

namespace poisonlab {

namespace {

constexpr int kDirectSolveLimit = 200;
constexpr double kFixedPointTol = 1e-10;

using Matrix = Eigen::MatrixXd;

/// State-to-state kernel under `policy`, with terminal rows and columns
/// removed: leaving into a terminal state ends accumulation.
Matrix killed_kernel(const TabularMDP& mdp, const TabularPolicy& policy) {
  const int S = mdp.n_states;
  Matrix p = Matrix::Zero(S, S);
  for (int s = 0; s < S; ++s) {
    if (mdp.terminal[s]) continue;
    for (int a = 0; a < mdp.n_actions; ++a) {
      const double pa = policy(s, a);
      if (pa == 0.0) continue;
      for (int n = 0; n < S; ++n) {
        if (!mdp.terminal[n]) p(s, n) += pa * mdp.p(s, a, n);
      }
    }
  }
  return p;
}

/// Solves x = b + gamma K x.
Vector solve_fixed_point(const Matrix& k, const Vector& b, double gamma) {
  const Index n = b.size();
  if (n <= kDirectSolveLimit) {
    Matrix a = Matrix::Identity(n, n) - gamma * k;
    return a.partialPivLu().solve(b);
  }
  Vector x = b;
  for (int it = 0; it < 1000000; ++it) {
    Vector next = b + gamma * (k * x);
    const double change = (next - x).lpNorm<Eigen::Infinity>();
    x = std::move(next);
    if (change < kFixedPointTol * (1.0 - gamma)) return x;
  }
  throw NumericError("fixed-point iteration did not converge");
}

RowMatrix q_from_v(const TabularMDP& mdp, const Vector& v) {
  RowMatrix q = RowMatrix::Zero(mdp.n_states, mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s) {
    if (mdp.terminal[s]) continue;
    for (int a = 0; a < mdp.n_actions; ++a) {
      double next = 0.0;
      for (int n = 0; n < mdp.n_states; ++n) next += mdp.p(s, a, n) * v[n];
      q(s, a) = mdp.reward(s, a) + mdp.gamma * next;
    }
  }
  return q;
}

}  // namespace

void validate_policy(const TabularMDP& mdp, const TabularPolicy& policy) {
  if (policy.rows() != mdp.n_states || policy.cols() != mdp.n_actions) {
    throw ShapeError("policy table does not match the MDP");
  }
  for (int s = 0; s < mdp.n_states; ++s) {
    if ((policy.row(s).array() < 0.0).any() || !policy.row(s).allFinite() ||
        std::abs(policy.row(s).sum() - 1.0) > 1e-9) {
      throw DomainError("policy row " + std::to_string(s) + " is not a simplex");
    }
  }
}

PolicyValues policy_evaluation(const TabularMDP& mdp, const TabularPolicy& policy) {
  validate_policy(mdp, policy);
  const int S = mdp.n_states;
  Vector r_pi = Vector::Zero(S);
  for (int s = 0; s < S; ++s) {
    if (!mdp.terminal[s]) r_pi[s] = policy.row(s).dot(mdp.reward.row(s));
  }
  PolicyValues out;
  out.v = solve_fixed_point(killed_kernel(mdp, policy), r_pi, mdp.gamma);
  for (int s = 0; s < S; ++s) {
    if (mdp.terminal[s]) out.v[s] = 0.0;
  }
  out.q = q_from_v(mdp, out.v);
  out.advantage = out.q.colwise() - out.v;
  for (int s = 0; s < S; ++s) {
    if (mdp.terminal[s]) out.advantage.row(s).setZero();
  }
  out.eta = mdp.initial_dist.dot(out.v);
  return out;
}

Vector discounted_visitation(const TabularMDP& mdp, const TabularPolicy& policy) {
  validate_policy(mdp, policy);
  Vector mu = mdp.initial_dist;
  for (int s = 0; s < mdp.n_states; ++s) {
    if (mdp.terminal[s]) mu[s] = 0.0;
  }
  const Matrix kt = killed_kernel(mdp, policy).transpose();
  return solve_fixed_point(kt, mu, mdp.gamma);
}

TabularPolicy OptimalSolution::policy(int n_actions) const {
  TabularPolicy pi = TabularPolicy::Zero(static_cast<Index>(greedy.size()), n_actions);
  for (std::size_t s = 0; s < greedy.size(); ++s) pi(static_cast<Index>(s), greedy[s]) = 1.0;
  return pi;
}

OptimalSolution value_iteration(const TabularMDP& mdp) {
  validate(mdp);
  const int S = mdp.n_states;
  OptimalSolution sol;
  sol.v = Vector::Zero(S);
  sol.greedy.assign(S, 0);
  for (int it = 0; it < 1000000; ++it) {
    const RowMatrix q = q_from_v(mdp, sol.v);
    const Vector next = q.rowwise().maxCoeff();
    const double change = (next - sol.v).lpNorm<Eigen::Infinity>();
    sol.v = next;
    if (change < 1e-12) break;
  }
  // Policy iteration from the value-iteration greedy policy is exact and
  // terminates in a handful of sweeps.
  for (int sweep = 0; sweep < 1000; ++sweep) {
    const RowMatrix q = q_from_v(mdp, sol.v);
    bool changed = false;
    for (int s = 0; s < S; ++s) {
      int best = sol.greedy[s];
      for (int a = 0; a < mdp.n_actions; ++a) {
        if (q(s, a) > q(s, best) + 1e-12) best = a;
      }
      if (best != sol.greedy[s]) {
        sol.greedy[s] = best;
        changed = true;
      }
    }
    sol.v = policy_evaluation(mdp, sol.policy(mdp.n_actions)).v;
    if (!changed && sweep > 0) break;
  }
  sol.q = q_from_v(mdp, sol.v);
  return sol;
}

TabularPolicy tabular_policy_from(const PolicyParams& params, int n_states) {
  if (!params.discrete()) throw UnsupportedError("tabular policies need a softmax head");
  if (params.state_dim() != n_states) throw ShapeError("policy input is not a one-hot over the states");
  TabularPolicy pi(n_states, params.action_size());
  for (int s = 0; s < n_states; ++s) pi.row(s) = policy_forward(params, one_hot(s, n_states)).probs.transpose();
  return pi;
}

}  // namespace poisonlab
