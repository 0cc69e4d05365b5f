#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "poisonlab/attack.hpp"
#include "poisonlab/tabular.hpp"

namespace poisonlab {

/// Bisection bracket for a radius. `hi` is the smallest power at which the
/// (heuristic) inner attack reached the discrepancy; an empty `hi` means no
/// tried power reached it, i.e. the radius is unbounded as far as we know.
struct RadiusEstimate {
  double lo = 0.0;
  std::optional<double> hi;
  double delta = 0.0;
  Distance distance = Distance::total_variation;
  std::vector<std::pair<double, double>> trace;  // (eps, achieved discrepancy), sorted by eps

  bool unbounded() const { return !hi.has_value(); }
  /// Upper-bound value of the bracket (lo when unbounded).
  double value() const { return hi.value_or(lo); }
};

struct RadiusSearch {
  double eps_max = 10.0;
  int bisection_iters = 20;
  Reduction reduction = Reduction::max;
  Distance distance = Distance::total_variation;
  PgdConfig pgd;
  int restarts = 3;
};

/// Smallest poison power on `aim` that moves the learner's next policy by at
/// least delta (Reduction::max over the observed states by default).
RadiusEstimate stability_radius_update(const LearnerState& learner, const Observation& obs, Aim aim, double delta,
                                       const RadiusSearch& search, Rng& rng);

struct MdpSampling {
  int n_policies = 8;
  int n_obs_per_policy = 2;
  int episodes_per_obs = 4;
  double logit_scale = 1.0;  // random tabular logits are N(0, scale^2)
};

/// Minimum of the update radius over random tabular policies and on-policy
/// observations. A sampled minimum, hence an upper bound on the MDP's radius.
/// `learner` supplies the algorithm and hyperparameters; its policy is replaced.
RadiusEstimate stability_radius_mdp(const LearnerState& learner, const TabularMDP& mdp, Aim aim, double delta,
                                    const MdpSampling& sampling, const RadiusSearch& search, Rng& rng);

/// Reward-drop bound for a perturbed policy within TV distance delta of pi':
/// 4 delta^2 gamma max|A| / (1-gamma)^2 + 2 delta sum_s g(s) max_a |A(s,a)|.
double reward_drop_bound(const TabularMDP& mdp, const TabularPolicy& policy, double delta, double gamma);

/// Test-time radius around one state. With `deterministic`, the search is for
/// the smallest l2 perturbation that changes the argmax action; otherwise
/// for one that moves pi(.|s) by delta.
RadiusEstimate robustness_radius_state(const PolicyParams& policy, const Vector& state, double delta,
                                       bool deterministic, const RadiusSearch& search);

/// Minimum over the sampled states.
RadiusEstimate robustness_radius_mdp(const PolicyParams& policy, const std::vector<Vector>& states, double delta,
                                     bool deterministic, const RadiusSearch& search);

/// (2 delta gamma / (1-gamma)^2 + 2 delta) max|R|.
double evasion_reward_drop_bound(const TabularMDP& mdp, double delta, double gamma);

}  // namespace poisonlab
