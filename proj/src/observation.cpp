#include "poisonlab/observation.hpp"

#include <string>

#include "poisonlab/errors.hpp"

namespace poisonlab {

std::size_t Observation::num_steps() const {
  std::size_t n = 0;
  for (const auto& tr : trajectories) n += tr.size();
  return n;
}

std::vector<double> Observation::flat_rewards() const {
  std::vector<double> out;
  out.reserve(num_steps());
  for (const auto& tr : trajectories) out.insert(out.end(), tr.rewards.begin(), tr.rewards.end());
  return out;
}

void Observation::set_flat_rewards(const std::vector<double>& rewards) {
  if (rewards.size() != num_steps()) throw ShapeError("reward vector length differs from step count");
  std::size_t i = 0;
  for (auto& tr : trajectories) {
    for (auto& r : tr.rewards) r = rewards[i++];
  }
}

std::vector<Vector> Observation::flat_states() const {
  std::vector<Vector> out;
  out.reserve(num_steps());
  for (const auto& tr : trajectories) out.insert(out.end(), tr.states.begin(), tr.states.end());
  return out;
}

void validate(const Observation& obs) {
  for (std::size_t i = 0; i < obs.trajectories.size(); ++i) {
    const auto& tr = obs.trajectories[i];
    const std::size_t n = tr.states.size();
    if (n == 0) throw ShapeError("trajectory " + std::to_string(i) + " is empty");
    if (tr.actions.size() != n || tr.rewards.size() != n || tr.dones.size() != n) {
      throw ShapeError("trajectory " + std::to_string(i) + " has mismatched list lengths");
    }
    for (std::size_t t = 0; t + 1 < n; ++t) {
      if (tr.dones[t]) throw ShapeError("done flag before the last step of trajectory " + std::to_string(i));
    }
    const Index d = tr.states.front().size();
    for (const auto& s : tr.states) {
      if (s.size() != d) throw ShapeError("state dimensions differ within trajectory " + std::to_string(i));
    }
  }
}

namespace {

bool same_vector(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) return false;
  for (Index i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) return false;
  }
  return true;
}

}  // namespace

bool identical(const Observation& a, const Observation& b) {
  if (a.iteration != b.iteration || a.trajectories.size() != b.trajectories.size()) return false;
  for (std::size_t i = 0; i < a.trajectories.size(); ++i) {
    const auto& x = a.trajectories[i];
    const auto& y = b.trajectories[i];
    if (x.size() != y.size() || x.rewards != y.rewards || x.dones != y.dones) return false;
    if (!same_vector(x.final_state, y.final_state)) return false;
    for (std::size_t t = 0; t < x.size(); ++t) {
      if (!same_vector(x.states[t], y.states[t]) || !(x.actions[t] == y.actions[t])) return false;
    }
  }
  return true;
}

}  // namespace poisonlab
