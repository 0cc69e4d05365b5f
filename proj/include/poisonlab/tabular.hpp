#pragma once

#include <vector>

#include "poisonlab/envs.hpp"

namespace poisonlab {

/// Row s holds pi(.|s).
using TabularPolicy = RowMatrix;

struct PolicyValues {
  Vector v;
  RowMatrix q;
  RowMatrix advantage;
  double eta = 0.0;
};

/// Exact evaluation. Terminal states have V = Q = A = 0 and collect no reward.
/// Direct LU solve up to 200 states, fixed-point iteration beyond.
PolicyValues policy_evaluation(const TabularMDP& mdp, const TabularPolicy& policy);

/// g(s) = sum_t gamma^t P(s_t = s), the solution of g = mu + gamma P_pi^T g
/// over non-terminal states.
Vector discounted_visitation(const TabularMDP& mdp, const TabularPolicy& policy);

struct OptimalSolution {
  Vector v;
  RowMatrix q;
  std::vector<int> greedy;

  TabularPolicy policy(int n_actions) const;
};

/// Value iteration to a 1e-12 sup-norm change, then policy-iteration polish so
/// that V* is the exact value of the returned greedy policy.
OptimalSolution value_iteration(const TabularMDP& mdp);

/// Action distribution of a policy network at every one-hot state.
TabularPolicy tabular_policy_from(const PolicyParams& params, int n_states);

/// Throws DomainError unless every row is a probability simplex (1e-9).
void validate_policy(const TabularMDP& mdp, const TabularPolicy& policy);

}  // namespace poisonlab
