#include "poisonlab/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "poisonlab/errors.hpp"

namespace poisonlab {

std::vector<int> random_schedule(int budget, int horizon, Rng& rng) {
  if (budget < 0 || budget > horizon) throw InputError("random schedule needs 0 <= C <= K");
  std::vector<int> all(static_cast<std::size_t>(horizon));
  std::iota(all.begin(), all.end(), 1);
  for (int i = 0; i < budget; ++i) {
    const std::size_t pick = static_cast<std::size_t>(i) + rng.index(static_cast<std::size_t>(horizon - i));
    std::swap(all[static_cast<std::size_t>(i)], all[pick]);
  }
  all.resize(static_cast<std::size_t>(budget));
  std::sort(all.begin(), all.end());
  return all;
}

namespace {

Vector random_unit(Index dim, Rng& rng) {
  Vector v(dim);
  double norm = 0.0;
  while (norm == 0.0) {
    for (Index i = 0; i < dim; ++i) v[i] = rng.normal();
    norm = v.norm();
  }
  return v / norm;
}

}  // namespace

Observation random_perturb(const Observation& obs, Aim aim, double eps, Rng& rng, int n_actions) {
  if (eps < 0.0) throw DomainError("attack power must be non-negative");
  if (aim == Aim::hybrid) throw InputError("random perturbation needs a concrete aim");
  Observation out = obs;
  const std::size_t n = obs.num_steps();
  if (eps == 0.0 || n == 0) return out;
  const double radius = eps * std::sqrt(static_cast<double>(n));

  if (aim == Aim::rewards) {
    const Vector dir = random_unit(static_cast<Index>(n), rng);
    std::vector<double> r = out.flat_rewards();
    for (std::size_t i = 0; i < n; ++i) r[i] += radius * dir[static_cast<Index>(i)];
    out.set_flat_rewards(r);
    return out;
  }

  const bool discrete = obs.trajectories.front().actions.front().is_discrete();
  if (aim == Aim::actions && discrete) {
    int count = n_actions;
    if (count <= 0) {
      for (const auto& tr : obs.trajectories) {
        for (const auto& a : tr.actions) count = std::max(count, a.index + 1);
      }
      count = std::max(count, 2);
    }
    std::vector<std::pair<std::size_t, std::size_t>> slots;
    for (std::size_t i = 0; i < out.trajectories.size(); ++i) {
      for (std::size_t t = 0; t < out.trajectories[i].size(); ++t) slots.emplace_back(i, t);
    }
    const std::size_t flips = max_flips(eps, n);
    for (std::size_t k = 0; k < flips; ++k) {
      std::swap(slots[k], slots[k + rng.index(slots.size() - k)]);
      Action& a = out.trajectories[slots[k].first].actions[slots[k].second];
      const int shift = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(count - 1)));
      a = Action::discrete((a.index + shift) % count);
    }
    return out;
  }

  // Random split of the total l2 mass across steps (flat Dirichlet), each
  // step moved along its own random direction.
  std::vector<double> share(n);
  double total = 0.0;
  for (auto& s : share) {
    s = -std::log(1.0 - rng.uniform());
    total += s;
  }
  std::size_t k = 0;
  for (auto& tr : out.trajectories) {
    for (std::size_t t = 0; t < tr.size(); ++t, ++k) {
      Vector& x = aim == Aim::states ? tr.states[t] : tr.actions[t].value;
      x += (radius * share[k] / total) * random_unit(x.size(), rng);
    }
  }
  return out;
}

Vector fgsm_targeted_step(const PolicyParams& learner_policy, const Vector& state, const TargetPolicy& target,
                          double eps) {
  if (!learner_policy.discrete()) throw UnsupportedError("FGSM baseline needs a discrete-action learner");
  if (eps == 0.0) return state;
  // pi(a|s) > 0, so grad_s pi and grad_s log pi share their signs.
  const Vector g = log_prob_and_grads(learner_policy, state, target.act(state)).grad_state;
  const Vector sign = g.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
  return state + eps * sign;
}

Observation fgsm_poison(const PolicyParams& learner_policy, const Observation& obs, const TargetPolicy& target,
                        double eps) {
  Observation out = obs;
  for (auto& tr : out.trajectories) {
    for (auto& s : tr.states) s = fgsm_targeted_step(learner_policy, s, target, eps);
  }
  return out;
}

std::pair<PoisonOutcome, AttackerState> acp_step(const AttackerState& attacker, const AttackConfig& cfg,
                                                 const LearnerState* learner_view, const Observation& obs,
                                                 const std::vector<int>& schedule) {
  const int k = attacker.iteration + 1;
  const bool scheduled = std::binary_search(schedule.begin(), schedule.end(), k);
  PreparedStep p = prepare_step(attacker, cfg, learner_view, obs, scheduled);
  return finish_step(std::move(p), cfg, obs, scheduled);
}

}  // namespace poisonlab
