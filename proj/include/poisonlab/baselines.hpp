#pragma once

#include <utility>
#include <vector>

#include "poisonlab/attack.hpp"

namespace poisonlab {

/// Uniformly random C-subset of {1..K}, sorted.
std::vector<int> random_schedule(int budget, int horizon, Rng& rng);

/// Random poison of effort exactly eps: a uniform direction for rewards,
/// random per-step directions with random split of the effort for states and
/// continuous actions, floor(eps N) uniformly chosen flips for discrete actions.
/// `n_actions` bounds the flip targets; 0 infers it from the observed actions.
Observation random_perturb(const Observation& obs, Aim aim, double eps, Rng& rng, int n_actions = 0);

/// s + eps * sign(grad_s pi(a_target | s)) with sign(0) = 0.
Vector fgsm_targeted_step(const PolicyParams& learner_policy, const Vector& state, const TargetPolicy& target,
                          double eps);

/// FGSM applied to every state of `obs`.
Observation fgsm_poison(const PolicyParams& learner_policy, const Observation& obs, const TargetPolicy& target,
                        double eps);

/// AC-P: VA2C-P crafting on a fixed schedule. Crafting happens only on
/// scheduled iterations; the adversarial critic is fitted every iteration.
std::pair<PoisonOutcome, AttackerState> acp_step(const AttackerState& attacker, const AttackConfig& cfg,
                                                 const LearnerState* learner_view, const Observation& obs,
                                                 const std::vector<int>& schedule);

}  // namespace poisonlab
