#pragma once

#include <optional>
#include <string>
#include <vector>

#include "poisonlab/observation.hpp"

namespace poisonlab {

enum class Algo { vpg, a2c };

std::string to_string(Algo algo);
Algo parse_algo(const std::string& text);

struct LearnerState {
  PolicyParams policy;
  std::optional<ValueParams> critic;  // present iff algo == a2c
  Algo algo = Algo::vpg;
  double lr_policy = 0.01;
  double lr_critic = 0.005;
  double gamma = 0.99;
  int iteration = 0;
};

/// Throws ConfigError when the critic presence does not match the algorithm.
void validate(const LearnerState& learner);

/// Discounted reward-to-go, restarted after every done flag.
std::vector<double> reward_to_go(const std::vector<double>& rewards, const std::vector<bool>& dones,
                                 double gamma);

/// Per-trajectory returns. When `critic` is given, cut trajectories bootstrap
/// from V(final_state); otherwise they are truncated Monte-Carlo sums.
std::vector<double> observation_returns(const Observation& obs, double gamma,
                                        const ValueParams* critic = nullptr);

/// Both learners take a step theta' = theta + lr * sum_t w_t grad log pi(a_t|s_t).
/// These are the per-step weights w_t (without lr), in flat step order:
/// VPG: G_t / N with N the number of trajectories; A2C: (G_t - V(s_t)) / (N T)
/// with N T the total number of steps.
std::vector<double> policy_step_weights(const LearnerState& learner, const Observation& obs);

/// Normalizer applied to returns in the step weights (1/N or 1/NT).
double step_scale(Algo algo, const Observation& obs);

/// sum_t w_t grad log pi(a_t|s_t) for the given weights.
Vector weighted_score(const PolicyParams& policy, const Observation& obs, const std::vector<double>& w);

LearnerState vpg_update(const LearnerState& learner, const Observation& obs);
LearnerState a2c_update(const LearnerState& learner, const Observation& obs);
LearnerState learner_update(const LearnerState& learner, const Observation& obs);

/// The policy half of learner_update only (critic untouched, iteration kept).
PolicyParams next_policy(const LearnerState& learner, const Observation& obs);

/// Softmax policy stored directly as logits, one row per state.
struct TabularLearnerState {
  RowMatrix logits;
  double lr = 0.01;
  double gamma = 0.99;
};

/// VPG on per-state logits. States in `obs` must be one-hot vectors.
TabularLearnerState tabular_pg_update(const TabularLearnerState& learner, const Observation& obs);
RowMatrix tabular_probs(const TabularLearnerState& learner);

}  // namespace poisonlab
