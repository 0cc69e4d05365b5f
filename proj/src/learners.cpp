#include "poisonlab/learners.hpp"

#include <cmath>

#include "poisonlab/errors.hpp"

namespace poisonlab {

std::string to_string(Algo algo) { return algo == Algo::vpg ? "vpg" : "a2c"; }

Algo parse_algo(const std::string& text) {
  if (text == "vpg") return Algo::vpg;
  if (text == "a2c") return Algo::a2c;
  throw ConfigError("unknown learner algorithm '" + text + "'");
}

void validate(const LearnerState& learner) {
  if (learner.algo == Algo::a2c && !learner.critic) throw ConfigError("A2C learner needs a critic");
  if (learner.algo == Algo::vpg && learner.critic) throw ConfigError("VPG learner carries no critic");
  if (!(learner.gamma > 0.0 && learner.gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
  if (!(learner.lr_policy > 0.0) || (learner.critic && !(learner.lr_critic > 0.0))) {
    throw ConfigError("learning rates must be positive");
  }
}

std::vector<double> reward_to_go(const std::vector<double>& rewards, const std::vector<bool>& dones,
                                 double gamma) {
  if (rewards.size() != dones.size()) throw ShapeError("rewards and dones differ in length");
  std::vector<double> g(rewards.size());
  double acc = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    if (dones[i]) acc = 0.0;
    acc = rewards[i] + gamma * acc;
    g[i] = acc;
  }
  return g;
}

std::vector<double> observation_returns(const Observation& obs, double gamma, const ValueParams* critic) {
  std::vector<double> out;
  out.reserve(obs.num_steps());
  for (const auto& tr : obs.trajectories) {
    double acc = 0.0;
    if (critic && !tr.ends_episode() && tr.final_state.size() > 0) {
      acc = value_forward(*critic, tr.final_state);
    }
    const std::size_t start = out.size();
    out.resize(start + tr.size());
    for (std::size_t t = tr.size(); t-- > 0;) {
      acc = tr.rewards[t] + gamma * acc;
      out[start + t] = acc;
    }
  }
  return out;
}

double step_scale(Algo algo, const Observation& obs) {
  const std::size_t n = algo == Algo::vpg ? obs.num_trajectories() : obs.num_steps();
  if (n == 0) throw InputError("empty observation");
  return 1.0 / static_cast<double>(n);
}

std::vector<double> policy_step_weights(const LearnerState& learner, const Observation& obs) {
  const double scale = step_scale(learner.algo, obs);
  const ValueParams* critic = learner.algo == Algo::a2c ? &*learner.critic : nullptr;
  std::vector<double> w = observation_returns(obs, learner.gamma, critic);
  if (critic) {
    std::size_t i = 0;
    for (const auto& tr : obs.trajectories) {
      for (const auto& s : tr.states) w[i++] -= value_forward(*critic, s);
    }
  }
  for (auto& x : w) x *= scale;
  return w;
}

Vector weighted_score(const PolicyParams& policy, const Observation& obs, const std::vector<double>& w) {
  if (w.size() != obs.num_steps()) throw ShapeError("one weight per step expected");
  Vector grad = Vector::Zero(policy.num_params());
  std::size_t i = 0;
  for (const auto& tr : obs.trajectories) {
    for (std::size_t t = 0; t < tr.size(); ++t, ++i) {
      if (w[i] != 0.0) accumulate_score(policy, tr.states[t], tr.actions[t], w[i], grad);
    }
  }
  return grad;
}

namespace {

void require_nonempty(const Observation& obs) {
  if (obs.empty()) throw InputError("learner update needs a non-empty observation");
}

PolicyParams apply_policy_step(const LearnerState& learner, const Observation& obs) {
  const Vector grad = weighted_score(learner.policy, obs, policy_step_weights(learner, obs));
  return with_flat(learner.policy, sgd_step(to_flat(learner.policy), grad, learner.lr_policy));
}

}  // namespace

PolicyParams next_policy(const LearnerState& learner, const Observation& obs) {
  require_nonempty(obs);
  return apply_policy_step(learner, obs);
}

LearnerState vpg_update(const LearnerState& learner, const Observation& obs) {
  if (learner.algo != Algo::vpg) throw ConfigError("vpg_update called on a non-VPG learner");
  require_nonempty(obs);
  LearnerState out = learner;
  out.policy = apply_policy_step(learner, obs);
  ++out.iteration;
  return out;
}

LearnerState a2c_update(const LearnerState& learner, const Observation& obs) {
  if (learner.algo != Algo::a2c || !learner.critic) throw ConfigError("a2c_update needs an A2C learner");
  require_nonempty(obs);
  const ValueParams& critic = *learner.critic;
  const std::vector<double> targets = observation_returns(obs, learner.gamma, &critic);
  const double scale = step_scale(Algo::a2c, obs);

  // Critic: one descent step on 1/2 mean squared error to the bootstrapped returns.
  Vector critic_grad = Vector::Zero(critic.num_params());
  std::size_t i = 0;
  for (const auto& tr : obs.trajectories) {
    for (const auto& s : tr.states) {
      const ValueGrad vg = value_forward_and_grad(critic, s);
      critic_grad += (scale * (vg.value - targets[i++])) * vg.grad_params;
    }
  }
  LearnerState out = learner;
  out.policy = apply_policy_step(learner, obs);
  out.critic = with_flat(critic, sgd_step(to_flat(critic), -critic_grad, learner.lr_critic));
  ++out.iteration;
  return out;
}

LearnerState learner_update(const LearnerState& learner, const Observation& obs) {
  switch (learner.algo) {
    case Algo::vpg: return vpg_update(learner, obs);
    case Algo::a2c: return a2c_update(learner, obs);
  }
  throw ConfigError("unknown learner algorithm");
}

RowMatrix tabular_probs(const TabularLearnerState& learner) {
  RowMatrix p = learner.logits;
  for (Index s = 0; s < p.rows(); ++s) {
    p.row(s).array() -= p.row(s).maxCoeff();
    p.row(s) = p.row(s).array().exp().matrix();
    p.row(s) /= p.row(s).sum();
  }
  return p;
}

TabularLearnerState tabular_pg_update(const TabularLearnerState& learner, const Observation& obs) {
  require_nonempty(obs);
  if (!learner.logits.allFinite()) throw NumericError("tabular logits are not finite");
  const RowMatrix probs = tabular_probs(learner);
  RowMatrix grad = RowMatrix::Zero(probs.rows(), probs.cols());
  const double scale = 1.0 / static_cast<double>(obs.num_trajectories());
  for (const auto& tr : obs.trajectories) {
    const std::vector<double> g = reward_to_go(tr.rewards, tr.dones, learner.gamma);
    for (std::size_t t = 0; t < tr.size(); ++t) {
      Index s = 0;
      tr.states[t].maxCoeff(&s);
      const double w = scale * g[t];
      grad.row(s) -= w * probs.row(s);
      grad(s, tr.actions[t].index) += w;
    }
  }
  TabularLearnerState out = learner;
  out.logits += learner.lr * grad;
  return out;
}

}  // namespace poisonlab
