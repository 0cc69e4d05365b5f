#include "poisonlab/vulnerability.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "poisonlab/errors.hpp"
#include "poisonlab/rollout.hpp"

namespace poisonlab {

namespace {

/// Bisection on eps for the predicate "achieved >= delta" (or "> 0" for the
/// argmax test, expressed through `reached`).
RadiusEstimate bisect(const std::function<double(double)>& achieved, const std::function<bool(double)>& reached,
                      double delta, const RadiusSearch& search) {
  if (!(search.eps_max > 0.0) || search.bisection_iters < 0) throw InputError("invalid radius search settings");
  RadiusEstimate est;
  est.delta = delta;
  est.distance = search.distance;
  const double at_max = achieved(search.eps_max);
  est.trace.emplace_back(search.eps_max, at_max);
  if (!reached(at_max)) {
    est.lo = search.eps_max;
  } else {
    double lo = 0.0, hi = search.eps_max;
    for (int i = 0; i < search.bisection_iters; ++i) {
      const double mid = 0.5 * (lo + hi);
      const double psi = achieved(mid);
      est.trace.emplace_back(mid, psi);
      (reached(psi) ? hi : lo) = mid;
    }
    est.lo = lo;
    est.hi = hi;
  }
  // A larger ball contains the smaller one, so what was reached at a small
  // power is reachable at every larger one.
  std::sort(est.trace.begin(), est.trace.end());
  double running = 0.0;
  for (auto& [eps, psi] : est.trace) {
    running = std::max(running, psi);
    psi = running;
  }
  return est;
}

RadiusEstimate combine_min(std::vector<RadiusEstimate> parts, double delta, Distance distance) {
  if (parts.empty()) throw InputError("radius minimum over an empty sample");
  RadiusEstimate out;
  out.delta = delta;
  out.distance = distance;
  out.lo = parts.front().lo;
  std::size_t arg = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    out.lo = std::min(out.lo, parts[i].lo);
    if (parts[i].hi && (!out.hi || *parts[i].hi < *out.hi)) {
      out.hi = parts[i].hi;
      arg = i;
    }
  }
  out.trace = std::move(parts[arg].trace);
  return out;
}

}  // namespace

RadiusEstimate stability_radius_update(const LearnerState& learner, const Observation& obs, Aim aim, double delta,
                                       const RadiusSearch& search, Rng& rng) {
  if (!(delta > 0.0)) throw DomainError("discrepancy threshold must be positive");
  if (aim == Aim::hybrid) throw InputError("stability radius needs a concrete aim");
  const std::vector<Vector> states = obs.flat_states();
  const Rng base = rng.split(0x5AB);
  std::uint64_t call = 0;
  auto achieved = [&](double eps) {
    CraftRequest req;
    req.objective = CraftObjective::discrepancy;
    req.aim = aim;
    req.epsilon = eps;
    req.pgd = search.pgd;
    req.restarts = search.restarts;
    req.distance = search.distance;
    req.reduction = search.reduction;
    Rng r = base.split(call++);
    const CraftResult res = craft(learner, obs, req, r);
    return policy_discrepancy(res.clean_next, res.poisoned_next, states, search.distance, search.reduction);
  };
  return bisect(achieved, [delta](double psi) { return psi >= delta; }, delta, search);
}

RadiusEstimate stability_radius_mdp(const LearnerState& learner, const TabularMDP& mdp, Aim aim, double delta,
                                    const MdpSampling& sampling, const RadiusSearch& search, Rng& rng) {
  if (sampling.n_policies < 1 || sampling.n_obs_per_policy < 1 || sampling.episodes_per_obs < 1) {
    throw InputError("radius sampling needs at least one policy, observation and episode");
  }
  const Environment env = mdp;
  std::vector<RadiusEstimate> parts;
  for (int p = 0; p < sampling.n_policies; ++p) {
    LearnerState probe = learner;
    probe.policy = zero_softmax_policy(Architecture::tabular, mdp.n_states, 0, mdp.n_actions);
    for (Index i = 0; i < probe.policy.net.w2.size(); ++i) {
      probe.policy.net.w2.data()[i] = sampling.logit_scale * rng.normal();
    }
    if (probe.algo == Algo::a2c && !probe.critic) probe.critic = zero_value(Architecture::tabular, mdp.n_states, 0);
    for (int o = 0; o < sampling.n_obs_per_policy; ++o) {
      const Observation obs = rollout_episodes(probe.policy, env, sampling.episodes_per_obs, rng);
      parts.push_back(stability_radius_update(probe, obs, aim, delta, search, rng));
    }
  }
  return combine_min(std::move(parts), delta, search.distance);
}

double reward_drop_bound(const TabularMDP& mdp, const TabularPolicy& policy, double delta, double gamma) {
  if (delta < 0.0) throw DomainError("delta must be non-negative");
  TabularMDP m = mdp;
  m.gamma = gamma;
  validate(m);
  const PolicyValues values = policy_evaluation(m, policy);
  const Vector g = discounted_visitation(m, policy);
  const RowMatrix abs_adv = values.advantage.cwiseAbs();
  const Vector per_state = abs_adv.rowwise().maxCoeff();
  const double max_adv = per_state.maxCoeff();
  return 4.0 * delta * delta * gamma * max_adv / ((1.0 - gamma) * (1.0 - gamma)) + 2.0 * delta * g.dot(per_state);
}

namespace {

int argmax_action(const PolicyParams& policy, const Vector& s) {
  Index a = 0;
  mlp_output(policy.net, s).maxCoeff(&a);
  return static_cast<int>(a);
}

/// Logit margin z_rival - z_target and its input gradient.
double margin_and_grad(const PolicyParams& policy, const Vector& s, int target, int rival, Vector* grad) {
  MlpTrace trace;
  mlp_forward(policy.net, s, trace);
  const Vector& z = trace.output;
  if (grad) {
    Vector d_out = Vector::Zero(z.size());
    d_out[rival] = 1.0;
    d_out[target] = -1.0;
    *grad = mlp_input_gradient(policy.net, trace, d_out);
  }
  return z[rival] - z[target];
}

/// Surrogate 1/2 ||p(x) - p(s)||^2 (means for gaussian heads) and its input gradient.
double spread_and_grad(const PolicyParams& policy, const Vector& x, const ActionDistribution& ref, Vector* grad) {
  MlpTrace trace;
  mlp_forward(policy.net, x, trace);
  Vector d_out;
  double value;
  if (policy.discrete()) {
    const Vector& z = trace.output;
    Vector p = (z.array() - z.maxCoeff()).exp().matrix();
    p /= p.sum();
    const Vector e = p - ref.probs;
    value = 0.5 * e.squaredNorm();
    d_out = (p.array() * (e.array() - p.dot(e))).matrix();
  } else {
    const Vector e = trace.output - ref.mean;
    value = 0.5 * e.squaredNorm();
    d_out = e;
  }
  if (grad) *grad = mlp_input_gradient(policy.net, trace, d_out);
  return value;
}

Vector project_ball(const Vector& center, const Vector& x, double eps) {
  const Vector d = x - center;
  const double n = d.norm();
  return n <= eps ? x : Vector(center + d * (eps / n));
}

}  // namespace

RadiusEstimate robustness_radius_state(const PolicyParams& policy, const Vector& state, double delta,
                                       bool deterministic, const RadiusSearch& search) {
  if (state.size() != policy.state_dim()) throw ShapeError("state dimension does not match the policy");
  if (deterministic && !policy.discrete()) throw UnsupportedError("argmax radius needs a discrete-action policy");
  if (!deterministic && !(delta > 0.0)) throw DomainError("discrepancy threshold must be positive");
  const int iters = std::max(1, search.pgd.max_iters);
  const ActionDistribution ref = policy_forward(policy, state);

  if (deterministic) {
    const int a = argmax_action(policy, state);
    if (policy.action_size() < 2) {
      return bisect([](double) { return -1.0; }, [](double m) { return m > 0.0; }, 0.0, search);
    }
    // One ascent per rival action: the nearest boundary need not belong to
    // the current runner-up.
    auto towards = [&](int rival, double eps) {
      Vector g;
      margin_and_grad(policy, state, a, rival, &g);
      const double gn = g.norm();
      if (gn == 0.0) return margin_and_grad(policy, state, a, rival, nullptr);
      Vector x = state + (eps / gn) * g;
      double best = margin_and_grad(policy, x, a, rival, nullptr);
      const double step = 2.5 * eps / iters;
      for (int j = 0; j < iters && best <= 0.0; ++j) {
        const double m = margin_and_grad(policy, x, a, rival, &g);
        best = std::max(best, m);
        const double n = g.norm();
        if (n == 0.0) break;
        x = project_ball(state, x + (step / n) * g, eps);
      }
      return std::max(best, margin_and_grad(policy, x, a, rival, nullptr));
    };
    auto achieved = [&](double eps) {
      double best = -std::numeric_limits<double>::infinity();
      for (int rival = 0; rival < policy.action_size() && best <= 0.0; ++rival) {
        if (rival != a) best = std::max(best, towards(rival, eps));
      }
      return best;
    };
    return bisect(achieved, [](double m) { return m > 0.0; }, 0.0, search);
  }

  // Start from the boundary point that most decreases the likeliest action
  // (gaussian: moves the first mean coordinate), then ascend the surrogate.
  Vector start_dir;
  if (policy.discrete()) {
    Index a = 0;
    ref.probs.maxCoeff(&a);
    start_dir = -log_prob_and_grads(policy, state, Action::discrete(static_cast<int>(a))).grad_state;
  } else {
    MlpTrace trace;
    mlp_forward(policy.net, state, trace);
    start_dir = mlp_input_gradient(policy.net, trace, Vector::Unit(trace.output.size(), 0));
  }
  auto achieved = [&](double eps) {
    const double sn = start_dir.norm();
    if (sn == 0.0) return 0.0;
    Vector x = state + (eps / sn) * start_dir;
    double best = distribution_distance(ref, policy_forward(policy, x), search.distance);
    const double step = 2.5 * eps / iters;
    Vector g;
    for (int j = 0; j < iters && best < delta; ++j) {
      spread_and_grad(policy, x, ref, &g);
      const double n = g.norm();
      if (n == 0.0) break;
      x = project_ball(state, x + (step / n) * g, eps);
      best = std::max(best, distribution_distance(ref, policy_forward(policy, x), search.distance));
    }
    return best;
  };
  return bisect(achieved, [delta](double psi) { return psi >= delta; }, delta, search);
}

RadiusEstimate robustness_radius_mdp(const PolicyParams& policy, const std::vector<Vector>& states, double delta,
                                     bool deterministic, const RadiusSearch& search) {
  if (states.empty()) throw InputError("robustness radius needs at least one state");
  std::vector<RadiusEstimate> parts;
  parts.reserve(states.size());
  for (const auto& s : states) parts.push_back(robustness_radius_state(policy, s, delta, deterministic, search));
  return combine_min(std::move(parts), delta, search.distance);
}

double evasion_reward_drop_bound(const TabularMDP& mdp, double delta, double gamma) {
  if (delta < 0.0) throw DomainError("delta must be non-negative");
  if (!(gamma > 0.0 && gamma < 1.0)) throw DomainError("gamma must lie in (0, 1)");
  const double max_r = mdp.reward.cwiseAbs().maxCoeff();
  return (2.0 * delta * gamma / ((1.0 - gamma) * (1.0 - gamma)) + 2.0 * delta) * max_r;
}

}  // namespace poisonlab
