#include "poisonlab/effort.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "poisonlab/errors.hpp"

namespace poisonlab {

std::string to_string(Aim aim) {
  switch (aim) {
    case Aim::rewards: return "rewards";
    case Aim::actions: return "actions";
    case Aim::states: return "states";
    case Aim::hybrid: return "hybrid";
  }
  return "rewards";
}

Aim parse_aim(const std::string& text) {
  if (text == "rewards") return Aim::rewards;
  if (text == "actions") return Aim::actions;
  if (text == "states") return Aim::states;
  if (text == "hybrid") return Aim::hybrid;
  throw ConfigError("unknown poison aim '" + text + "'");
}

namespace {

void check_same_shape(const Observation& a, const Observation& b) {
  if (a.trajectories.size() != b.trajectories.size()) throw InputError("observations differ in trajectory count");
  for (std::size_t i = 0; i < a.trajectories.size(); ++i) {
    if (a.trajectories[i].size() != b.trajectories[i].size()) {
      throw InputError("observations differ in trajectory length");
    }
  }
}

/// Calls f(clean_vector, poisoned_vector) for each step's state or action vector.
template <class Obs, class F>
void for_each_vector(Aim aim, const Observation& clean, Obs& poisoned, F&& f) {
  for (std::size_t i = 0; i < clean.trajectories.size(); ++i) {
    auto& pt = poisoned.trajectories[i];
    const auto& ct = clean.trajectories[i];
    for (std::size_t t = 0; t < ct.size(); ++t) {
      if (aim == Aim::states) {
        f(ct.states[t], pt.states[t]);
      } else {
        f(ct.actions[t].value, pt.actions[t].value);
      }
    }
  }
}

bool discrete_action_obs(const Observation& obs) {
  for (const auto& tr : obs.trajectories) {
    if (!tr.actions.empty()) return tr.actions.front().is_discrete();
  }
  return true;
}

}  // namespace

std::size_t max_flips(double eps, std::size_t n) {
  if (eps <= 0.0) return 0;
  const double cap = std::floor(eps * static_cast<double>(n) * (1.0 + 1e-10));
  return static_cast<std::size_t>(std::min(cap, static_cast<double>(n)));
}

double total_effort(Aim aim, const Observation& clean, const Observation& poisoned) {
  check_same_shape(clean, poisoned);
  const std::size_t n = clean.num_steps();
  if (n == 0) return 0.0;
  const double root_n = std::sqrt(static_cast<double>(n));
  switch (aim) {
    case Aim::rewards: {
      double sq = 0.0;
      for (std::size_t i = 0; i < clean.trajectories.size(); ++i) {
        const auto& a = clean.trajectories[i].rewards;
        const auto& b = poisoned.trajectories[i].rewards;
        for (std::size_t t = 0; t < a.size(); ++t) sq += (a[t] - b[t]) * (a[t] - b[t]);
      }
      return std::sqrt(sq) / root_n;
    }
    case Aim::actions:
      if (discrete_action_obs(clean)) {
        std::size_t flips = 0;
        for (std::size_t i = 0; i < clean.trajectories.size(); ++i) {
          const auto& a = clean.trajectories[i].actions;
          const auto& b = poisoned.trajectories[i].actions;
          for (std::size_t t = 0; t < a.size(); ++t) flips += a[t].index != b[t].index;
        }
        return static_cast<double>(flips) / static_cast<double>(n);
      }
      [[fallthrough]];
    case Aim::states: {
      double sum = 0.0;
      for_each_vector(aim, clean, poisoned, [&](const Vector& c, const Vector& x) {
        if (c.size() != x.size()) throw InputError("vector dimensions differ between observations");
        sum += (c - x).norm();
      });
      return sum / root_n;
    }
    case Aim::hybrid: break;
  }
  throw InputError("effort is defined per concrete aim, not for hybrid");
}

Vector project_l1_nonnegative(const Vector& v, double radius) {
  if (v.sum() <= radius) return v;
  if (radius <= 0.0) return Vector::Zero(v.size());
  std::vector<double> sorted(v.data(), v.data() + v.size());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cum = 0.0;
  double theta = 0.0;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    cum += sorted[k];
    const double t = (cum - radius) / static_cast<double>(k + 1);
    if (k + 1 == sorted.size() || sorted[k + 1] <= t) {
      theta = t;
      break;
    }
  }
  return (v.array() - theta).max(0.0).matrix();
}

Observation project_onto_power(Aim aim, const Observation& clean, const Observation& candidate,
                               double eps, const std::vector<double>* flip_gains) {
  check_same_shape(clean, candidate);
  if (aim == Aim::hybrid) throw InputError("projection is defined per concrete aim");
  if (eps <= 0.0) {
    Observation out = candidate;
    for (std::size_t i = 0; i < out.trajectories.size(); ++i) {
      auto& o = out.trajectories[i];
      const auto& c = clean.trajectories[i];
      if (aim == Aim::rewards) o.rewards = c.rewards;
      if (aim == Aim::actions) o.actions = c.actions;
      if (aim == Aim::states) o.states = c.states;
    }
    return out;
  }
  if (total_effort(aim, clean, candidate) <= eps) return candidate;

  const std::size_t n = clean.num_steps();
  const double radius = eps * std::sqrt(static_cast<double>(n));
  Observation out = candidate;
  if (aim == Aim::rewards) {
    double sq = 0.0;
    for (std::size_t i = 0; i < clean.trajectories.size(); ++i) {
      for (std::size_t t = 0; t < clean.trajectories[i].size(); ++t) {
        const double d = candidate.trajectories[i].rewards[t] - clean.trajectories[i].rewards[t];
        sq += d * d;
      }
    }
    const double factor = radius / std::sqrt(sq);
    for (std::size_t i = 0; i < clean.trajectories.size(); ++i) {
      auto& r = out.trajectories[i].rewards;
      const auto& c = clean.trajectories[i].rewards;
      for (std::size_t t = 0; t < r.size(); ++t) r[t] = c[t] + factor * (r[t] - c[t]);
    }
    return out;
  }
  if (aim == Aim::actions && discrete_action_obs(clean)) {
    struct Flip {
      std::size_t traj, step, flat;
    };
    std::vector<Flip> flips;
    std::size_t flat = 0;
    for (std::size_t i = 0; i < clean.trajectories.size(); ++i) {
      for (std::size_t t = 0; t < clean.trajectories[i].size(); ++t, ++flat) {
        if (clean.trajectories[i].actions[t].index != candidate.trajectories[i].actions[t].index) {
          flips.push_back({i, t, flat});
        }
      }
    }
    if (flip_gains && flip_gains->size() != n) throw InputError("one flip gain per step expected");
    std::stable_sort(flips.begin(), flips.end(), [&](const Flip& a, const Flip& b) {
      return flip_gains && (*flip_gains)[a.flat] > (*flip_gains)[b.flat];
    });
    for (std::size_t k = max_flips(eps, n); k < flips.size(); ++k) {
      const Flip& f = flips[k];
      out.trajectories[f.traj].actions[f.step] = clean.trajectories[f.traj].actions[f.step];
    }
    return out;
  }
  // Group norms onto the l1 ball, each step's perturbation shrunk along itself.
  std::vector<double> norms;
  norms.reserve(n);
  for_each_vector(aim, clean, out, [&](const Vector& c, const Vector& x) { norms.push_back((x - c).norm()); });
  const Vector target = project_l1_nonnegative(Eigen::Map<const Vector>(norms.data(), norms.size()), radius);
  std::size_t k = 0;
  for_each_vector(aim, clean, out, [&](const Vector& c, Vector& x) {
    const double norm = norms[k];
    const double keep = norm > 0.0 ? target[k] / norm : 0.0;
    x = c + keep * (x - c);
    ++k;
  });
  return out;
}

}  // namespace poisonlab
