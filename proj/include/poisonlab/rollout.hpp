#pragma once

#include <vector>

#include "poisonlab/envs.hpp"
#include "poisonlab/observation.hpp"

namespace poisonlab {

/// Undiscounted returns and action statistics gathered while rolling out.
struct RolloutStats {
  std::vector<double> episode_returns;  // episodes that finished during the call
  std::size_t steps = 0;
  std::vector<std::size_t> action_counts;  // discrete envs only
};

/// Collects `episodes` whole episodes with the current policy. Rewards are
/// the clean environment rewards.
Observation rollout_episodes(const PolicyParams& policy, const Environment& env, int episodes,
                             Rng& rng, RolloutStats* stats = nullptr);

/// Independent environment copies for n-step learners. Each copy owns a
/// split of the constructor's Rng and keeps its episode running across calls.
class ParallelEnvs {
 public:
  ParallelEnvs(const Environment& env, int copies, const Rng& rng);

  /// Advances every copy by `segment_len` steps. Episode ends split a copy's
  /// segment into several trajectories; a cut segment carries `final_state`.
  Observation rollout(const PolicyParams& policy, int segment_len, RolloutStats* stats = nullptr);

  int copies() const { return static_cast<int>(states_.size()); }

 private:
  const Environment* env_;
  std::vector<EnvState> states_;
  std::vector<Rng> rngs_;
  std::vector<double> running_;
};

}  // namespace poisonlab
