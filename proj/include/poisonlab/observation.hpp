#pragma once

#include <vector>

#include "poisonlab/mlp.hpp"

namespace poisonlab {

/// One contiguous piece of experience. It ends either at an episode end
/// (last done flag set) or at a segment cut, in which case `final_state`
/// holds the state reached after the last action, used for bootstrapping.
struct Trajectory {
  std::vector<Vector> states;
  std::vector<Action> actions;
  std::vector<double> rewards;
  std::vector<bool> dones;
  Vector final_state;  // empty when the trajectory ended with done

  std::size_t size() const { return states.size(); }
  bool ends_episode() const { return !dones.empty() && dones.back(); }
};

/// Everything a learner sees in one iteration.
struct Observation {
  std::vector<Trajectory> trajectories;
  int iteration = 0;

  std::size_t num_steps() const;
  std::size_t num_trajectories() const { return trajectories.size(); }
  bool empty() const { return num_steps() == 0; }

  /// Rewards of every step, trajectory-major.
  std::vector<double> flat_rewards() const;
  void set_flat_rewards(const std::vector<double>& rewards);
  std::vector<Vector> flat_states() const;
};

/// Throws ShapeError when per-trajectory lists disagree in length, a
/// trajectory is empty, or a done flag appears before the last step.
void validate(const Observation& obs);

/// True when both observations agree on every field (bitwise on doubles).
bool identical(const Observation& a, const Observation& b);

}  // namespace poisonlab
