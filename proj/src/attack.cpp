#include "poisonlab/attack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

#include "poisonlab/baselines.hpp"
#include "poisonlab/errors.hpp"

namespace poisonlab {

std::string to_string(Box box) { return box == Box::white ? "white" : "black"; }
std::string to_string(Goal goal) { return goal == Goal::non_targeted ? "non_targeted" : "targeted"; }
std::string to_string(Distance d) { return d == Distance::total_variation ? "tv" : "kl"; }

Box parse_box(const std::string& text) {
  if (text == "white") return Box::white;
  if (text == "black") return Box::black;
  throw ConfigError("unknown box mode '" + text + "'");
}

Goal parse_goal(const std::string& text) {
  if (text == "non_targeted") return Goal::non_targeted;
  if (text == "targeted") return Goal::targeted;
  throw ConfigError("unknown attack goal '" + text + "'");
}

Distance parse_distance(const std::string& text) {
  if (text == "tv") return Distance::total_variation;
  if (text == "kl") return Distance::kl_surrogate;
  throw ConfigError("unknown distance '" + text + "'");
}

Action TargetPolicy::act(const Vector&) const {
  if (action >= 0) return Action::discrete(action);
  if (mean.size() > 0) return Action::continuous(mean);
  throw ConfigError("target policy is undefined");
}

double AttackConfig::epsilon_for(Aim a) const {
  double e = -1.0;
  switch (a) {
    case Aim::rewards: e = eps_rewards; break;
    case Aim::actions: e = eps_actions; break;
    case Aim::states: e = eps_states; break;
    case Aim::hybrid: break;
  }
  return e < 0.0 ? epsilon : e;
}

void validate(const AttackConfig& cfg) {
  if (cfg.epsilon < 0.0) throw ConfigError("attack power must be non-negative");
  if (cfg.budget < 0 || cfg.horizon < 1 || cfg.budget > cfg.horizon) {
    throw ConfigError("attack budget must satisfy 0 <= C <= K");
  }
  if (cfg.pgd.max_iters < 1) throw ConfigError("PGD needs at least one iteration");
  if (cfg.pgd.fd_delta <= 0.0) throw ConfigError("finite-difference step must be positive");
  if (cfg.goal == Goal::targeted && !cfg.target.defined()) throw ConfigError("targeted goal needs a target policy");
  if (cfg.critic_epochs < 0 || cfg.critic_lr < 0.0) throw ConfigError("critic fitting settings must be non-negative");
}

AttackerState make_attacker_state(const AttackConfig& cfg, const LearnerState& learner, const Rng& rng) {
  validate(cfg);
  AttackerState st;
  st.rng = rng;
  const Mlp& net = learner.policy.net;
  Rng critic_rng = rng.split(0xC417);
  st.critic = make_value(net.arch, net.input_dim(), net.hidden_size(), critic_rng);
  st.imitator = learner;
  st.imitator.iteration = 0;
  if (cfg.box == Box::black && !cfg.shared_init) {
    Rng init = rng.split(0xB1AC);
    const PolicyParams& p = learner.policy;
    st.imitator.policy =
        p.discrete() ? make_softmax_policy(net.arch, net.input_dim(), net.hidden_size(), p.action_size(), init)
                     : make_gaussian_policy(net.arch, net.input_dim(), net.hidden_size(), p.action_size(), init,
                                            p.log_std[0]);
    if (learner.critic) {
      const Mlp& c = learner.critic->net;
      st.imitator.critic = make_value(c.arch, c.input_dim(), c.hidden_size(), init);
    }
  }
  return st;
}

double distribution_distance(const ActionDistribution& a, const ActionDistribution& b, Distance distance) {
  if (a.discrete() != b.discrete()) throw ShapeError("cannot compare discrete and continuous distributions");
  if (a.discrete()) {
    if (a.probs.size() != b.probs.size()) throw ShapeError("action counts differ");
    if (distance == Distance::total_variation) return 0.5 * (a.probs - b.probs).cwiseAbs().sum();
    double kl_ab = 0.0, kl_ba = 0.0;
    for (Index i = 0; i < a.probs.size(); ++i) {
      const double p = a.probs[i], q = b.probs[i];
      if (p > 0.0) kl_ab += q > 0.0 ? p * std::log(p / q) : std::numeric_limits<double>::infinity();
      if (q > 0.0) kl_ba += p > 0.0 ? q * std::log(q / p) : std::numeric_limits<double>::infinity();
    }
    return std::min(1.0, std::sqrt(std::max(0.0, std::min(kl_ab, kl_ba)) / 2.0));
  }
  auto kl = [](const ActionDistribution& x, const ActionDistribution& y) {
    double sum = 0.0;
    for (Index i = 0; i < x.mean.size(); ++i) {
      const double vx = x.stddev[i] * x.stddev[i], vy = y.stddev[i] * y.stddev[i];
      const double dm = x.mean[i] - y.mean[i];
      sum += std::log(y.stddev[i] / x.stddev[i]) + (vx + dm * dm) / (2.0 * vy) - 0.5;
    }
    return std::max(0.0, sum);
  };
  if (a.mean.size() != b.mean.size()) throw ShapeError("action dimensions differ");
  return std::min(1.0, std::sqrt(std::min(kl(a, b), kl(b, a)) / 2.0));
}

double policy_discrepancy(const PolicyParams& a, const PolicyParams& b, const std::vector<Vector>& states,
                          Distance distance, Reduction reduction) {
  if (states.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& s : states) {
    const double d = distribution_distance(policy_forward(a, s), policy_forward(b, s), distance);
    acc = reduction == Reduction::mean ? acc + d : std::max(acc, d);
  }
  return reduction == Reduction::mean ? acc / static_cast<double>(states.size()) : acc;
}

double nearest_rank_quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InputError("quantile of an empty list");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  const double rank = std::ceil(std::clamp(q, 0.0, 1.0) * n - 1e-9);
  const std::size_t idx = static_cast<std::size_t>(std::clamp(rank, 1.0, n));
  return values[idx - 1];
}

bool decide_attack(const std::vector<double>& psi, int budget, int spent, int horizon, int k) {
  if (spent >= budget) return false;
  if (k >= horizon) return true;
  if (psi.empty()) throw InputError("decide_attack needs the current psi-hat in the history");
  const double level = 1.0 - static_cast<double>(budget - spent) / static_cast<double>(horizon - k);
  return psi.back() >= nearest_rank_quantile(psi, level);
}

double targeted_loss(const PolicyParams& params, const TargetPolicy& target, const std::vector<Vector>& states) {
  if (states.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& s : states) {
    const Action a = target.act(s);
    if (params.discrete()) {
      sum -= log_prob(params, s, a);
    } else {
      sum += (mlp_output(params.net, s) - a.value).squaredNorm();
    }
  }
  return sum / static_cast<double>(states.size());
}

namespace {

double critic_loss_and_grad(const ValueParams& critic, const std::vector<Vector>& states,
                            const std::vector<double>& targets, Vector* grad) {
  const double inv_n = 1.0 / static_cast<double>(states.size());
  double loss = 0.0;
  if (grad) grad->setZero(critic.num_params());
  MlpTrace trace;
  Vector d_out(1);
  for (std::size_t i = 0; i < states.size(); ++i) {
    mlp_forward(critic.net, states[i], trace);
    const double err = trace.output[0] - targets[i];
    loss += 0.5 * err * err * inv_n;
    if (grad) {
      d_out[0] = err * inv_n;
      mlp_backward(critic.net, trace, d_out, *grad, nullptr);
    }
  }
  return loss;
}

}  // namespace

double critic_loss(const ValueParams& critic, const Observation& obs, double gamma, const ValueParams* bootstrap) {
  if (obs.empty()) throw InputError("critic loss needs a non-empty observation");
  return critic_loss_and_grad(critic, obs.flat_states(), observation_returns(obs, gamma, bootstrap), nullptr);
}

ValueParams fit_adversarial_critic(const ValueParams& critic, const Observation& obs, int epochs, double lr,
                                   double gamma) {
  if (obs.empty()) throw InputError("critic fitting needs a non-empty observation");
  if (epochs <= 0 || lr <= 0.0) return critic;
  const std::vector<Vector> states = obs.flat_states();
  // Cut segments bootstrap from the critic being fitted, held fixed for the fit.
  const std::vector<double> targets = observation_returns(obs, gamma, &critic);
  ValueParams current = critic;
  Vector flat = to_flat(current);
  Vector grad;
  double loss = critic_loss_and_grad(current, states, targets, &grad);
  double step = lr;
  for (int e = 0; e < epochs; ++e) {
    if (grad.squaredNorm() == 0.0) break;
    bool accepted = false;
    for (int tries = 0; tries < 40 && !accepted; ++tries) {
      const Vector cand_flat = flat - step * grad;
      ValueParams cand = with_flat(current, cand_flat);
      Vector cand_grad;
      const double cand_loss = critic_loss_and_grad(cand, states, targets, &cand_grad);
      if (cand_loss <= loss) {
        current = std::move(cand);
        flat = cand_flat;
        grad = std::move(cand_grad);
        loss = cand_loss;
        accepted = true;
      } else {
        step *= 0.5;
      }
    }
    if (!accepted) break;
  }
  return current;
}

double importance_objective(const PolicyParams& old_policy, const PolicyParams& new_policy, const Observation& obs,
                            const ValueParams& critic, double gamma) {
  if (obs.empty()) throw InputError("objective needs a non-empty observation");
  const std::vector<double> g = observation_returns(obs, gamma, &critic);
  double sum = 0.0;
  std::size_t i = 0;
  for (const auto& tr : obs.trajectories) {
    for (std::size_t t = 0; t < tr.size(); ++t, ++i) {
      const double ratio =
          std::exp(log_prob(new_policy, tr.states[t], tr.actions[t]) - log_prob(old_policy, tr.states[t], tr.actions[t]));
      sum += ratio * (g[i] - value_forward(critic, tr.states[t]));
    }
  }
  return sum / static_cast<double>(i);
}

ImitationResult imitate_update(const LearnerState& imitator, const Observation& obs, const ValueParams& critic,
                               const Observation* eval_obs) {
  ImitationResult out;
  out.next = next_policy(imitator, obs);
  out.eta_hat = importance_objective(imitator.policy, out.next, eval_obs ? *eval_obs : obs, critic, imitator.gamma);
  return out;
}

namespace {

/// Rows are grad log pi(a_t|s_t) under `policy`, one per step.
RowMatrix score_matrix(const PolicyParams& policy, const Observation& obs) {
  RowMatrix g = RowMatrix::Zero(static_cast<Index>(obs.num_steps()), policy.num_params());
  Index i = 0;
  for (const auto& tr : obs.trajectories) {
    for (std::size_t t = 0; t < tr.size(); ++t, ++i) {
      Eigen::Map<Vector> row(g.row(i).data(), g.cols());
      accumulate_score(policy, tr.states[t], tr.actions[t], 1.0, row);
    }
  }
  return g;
}

/// out_u = coef * sum_{t <= u, same trajectory} gamma^{u-t} d_t.
Vector discounted_prefix(const Observation& obs, const Vector& d, double gamma, double coef) {
  Vector out(d.size());
  Index i = 0;
  for (const auto& tr : obs.trajectories) {
    double acc = 0.0;
    for (std::size_t t = 0; t < tr.size(); ++t, ++i) {
      acc = gamma * acc + d[i];
      out[i] = coef * acc;
    }
  }
  return out;
}

}  // namespace

RowMatrix reward_jacobian(const LearnerState& learner, const Observation& obs) {
  if (obs.empty()) throw InputError("reward Jacobian needs a non-empty observation");
  const RowMatrix g = score_matrix(learner.policy, obs);
  const double coef = learner.lr_policy * step_scale(learner.algo, obs);
  RowMatrix jac(g.cols(), g.rows());
  Index i = 0;
  for (const auto& tr : obs.trajectories) {
    Vector acc = Vector::Zero(g.cols());
    for (std::size_t t = 0; t < tr.size(); ++t, ++i) {
      acc = learner.gamma * acc + g.row(i).transpose();
      jac.col(i) = coef * acc;
    }
  }
  return jac;
}

RowMatrix vpg_reward_jacobian(const LearnerState& learner, const Observation& obs) {
  if (learner.algo != Algo::vpg) throw UnsupportedError("the analytic reward Jacobian is defined for VPG");
  return reward_jacobian(learner, obs);
}

namespace {

bool discrete_actions_in(const Observation& obs) {
  return obs.trajectories.empty() || obs.trajectories.front().actions.front().is_discrete();
}

/// The poisoned component as one flat vector.
Vector get_component(const Observation& obs, Aim aim) {
  std::vector<double> out;
  for (const auto& tr : obs.trajectories) {
    for (std::size_t t = 0; t < tr.size(); ++t) {
      if (aim == Aim::rewards) {
        out.push_back(tr.rewards[t]);
      } else {
        const Vector& v = aim == Aim::states ? tr.states[t] : tr.actions[t].value;
        out.insert(out.end(), v.data(), v.data() + v.size());
      }
    }
  }
  return Eigen::Map<Vector>(out.data(), static_cast<Index>(out.size()));
}

void set_component(Observation& obs, Aim aim, const Vector& x) {
  Index k = 0;
  for (auto& tr : obs.trajectories) {
    for (std::size_t t = 0; t < tr.size(); ++t) {
      if (aim == Aim::rewards) {
        tr.rewards[t] = x[k++];
      } else {
        Vector& v = aim == Aim::states ? tr.states[t] : tr.actions[t].value;
        v = x.segment(k, v.size());
        k += v.size();
      }
    }
  }
}

void body_backprop(const PolicyParams& p, const Vector& s, const Vector& d_out, Eigen::Ref<Vector> grad) {
  MlpTrace trace;
  mlp_forward(p.net, s, trace);
  mlp_backward(p.net, trace, d_out, grad.head(p.net.num_params()), nullptr);
}

/// A scalar function of the imitated next policy, to be minimized.
class Objective {
 public:
  Objective(const CraftRequest& req, const LearnerState& imitator, const Observation& clean,
            const PolicyParams& clean_next)
      : kind_(req.objective), states_(clean.flat_states()) {
    const double gamma = imitator.gamma;
    inv_n_ = 1.0 / static_cast<double>(states_.size());
    switch (kind_) {
      case CraftObjective::attacker: {
        if (!req.critic) throw InputError("the attacker objective needs an adversarial critic");
        const std::vector<double> g = observation_returns(clean, gamma, req.critic);
        std::size_t i = 0;
        for (const auto& tr : clean.trajectories) {
          for (std::size_t t = 0; t < tr.size(); ++t, ++i) {
            actions_.push_back(tr.actions[t]);
            advantage_.push_back(g[i] - value_forward(*req.critic, tr.states[t]));
            logp_old_.push_back(log_prob(imitator.policy, tr.states[t], tr.actions[t]));
          }
        }
        break;
      }
      case CraftObjective::targeted:
        if (!req.target || !req.target->defined()) throw InputError("the targeted objective needs a target");
        for (const auto& s : states_) actions_.push_back(req.target->act(s));
        break;
      case CraftObjective::discrepancy:
        reference_ = clean_next;
        for (const auto& s : states_) reference_dists_.push_back(policy_forward(clean_next, s));
        break;
    }
  }

  double value(const PolicyParams& p) const {
    double sum = 0.0;
    for (std::size_t i = 0; i < states_.size(); ++i) {
      const Vector& s = states_[i];
      switch (kind_) {
        case CraftObjective::attacker:
          sum += std::exp(log_prob(p, s, actions_[i]) - logp_old_[i]) * advantage_[i];
          break;
        case CraftObjective::targeted:
          sum += p.discrete() ? -log_prob(p, s, actions_[i])
                              : (mlp_output(p.net, s) - actions_[i].value).squaredNorm();
          break;
        case CraftObjective::discrepancy: {
          const ActionDistribution d = policy_forward(p, s);
          const ActionDistribution& r = reference_dists_[i];
          sum -= p.discrete() ? 0.5 * (d.probs - r.probs).squaredNorm() : 0.5 * (d.mean - r.mean).squaredNorm();
          break;
        }
      }
    }
    double out = sum * inv_n_;
    if (kind_ == CraftObjective::discrepancy && !p.discrete()) {
      out -= 0.5 * (p.log_std - reference_.log_std).squaredNorm();
    }
    return out;
  }

  Vector gradient(const PolicyParams& p) const {
    Vector grad = Vector::Zero(p.num_params());
    Vector buffer(p.num_params());
    for (std::size_t i = 0; i < states_.size(); ++i) {
      const Vector& s = states_[i];
      switch (kind_) {
        case CraftObjective::attacker: {
          buffer.setZero();
          const double ratio = std::exp(accumulate_score(p, s, actions_[i], 1.0, buffer) - logp_old_[i]);
          grad += (ratio * advantage_[i] * inv_n_) * buffer;
          break;
        }
        case CraftObjective::targeted:
          if (p.discrete()) {
            accumulate_score(p, s, actions_[i], -inv_n_, grad);
          } else {
            body_backprop(p, s, 2.0 * inv_n_ * (mlp_output(p.net, s) - actions_[i].value), grad);
          }
          break;
        case CraftObjective::discrepancy: {
          const ActionDistribution d = policy_forward(p, s);
          const ActionDistribution& r = reference_dists_[i];
          if (p.discrete()) {
            const Vector e = d.probs - r.probs;
            const Vector d_out = -inv_n_ * (d.probs.array() * (e.array() - d.probs.dot(e))).matrix();
            body_backprop(p, s, d_out, grad);
          } else {
            body_backprop(p, s, -inv_n_ * (d.mean - r.mean), grad);
          }
          break;
        }
      }
    }
    if (kind_ == CraftObjective::discrepancy && !p.discrete()) {
      const Index body = p.net.num_params();
      for (Index j = 0; j < p.log_std.size(); ++j) {
        const double raw = p.log_std[j];
        if (raw > kLogStdMin && raw < kLogStdMax) grad[body + j] -= raw - reference_.log_std[j];
      }
    }
    return grad;
  }

 private:
  CraftObjective kind_;
  std::vector<Vector> states_;
  std::vector<Action> actions_;
  std::vector<double> advantage_;
  std::vector<double> logp_old_;
  PolicyParams reference_;
  std::vector<ActionDistribution> reference_dists_;
  double inv_n_ = 1.0;
};

/// Poison candidates for one (imitator, clean observation, aim) triple.
class Crafter {
 public:
  Crafter(const LearnerState& imitator, const Observation& clean, const CraftRequest& req, Rng& rng)
      : imitator_(imitator), clean_(clean), req_(req), rng_(rng) {
    result_.clean_next = next_policy(imitator, clean);
    objective_.emplace(req, imitator, clean, result_.clean_next);
    result_.objective_clean = objective_->value(result_.clean_next);
  }

  CraftResult run() {
    result_.poisoned = clean_;
    result_.poisoned_next = result_.clean_next;
    result_.objective_poisoned = result_.objective_clean;
    if (req_.epsilon <= 0.0) return result_;
    if (req_.aim == Aim::actions && discrete_actions_in(clean_)) {
      craft_flips();
    } else if (req_.objective == CraftObjective::discrepancy) {
      craft_discrepancy();
    } else {
      adopt(pgd(clean_));
    }
    return result_;
  }

 private:
  struct Point {
    Observation obs;
    PolicyParams next;
    double value = 0.0;
    int iterations = 0;
  };

  Point evaluate(Observation obs) {
    Point p;
    p.next = linear_in_rewards() ? linear_next(obs) : next_policy(imitator_, obs);
    p.value = objective_->value(p.next);
    p.obs = std::move(obs);
    return p;
  }

  // The policy step is affine in the rewards (critic held fixed), so reward
  // candidates move theta' by coef * S^T rtg(r' - r) with S the score rows.
  bool linear_in_rewards() const { return req_.aim == Aim::rewards && !req_.pgd.exact_fd; }

  PolicyParams linear_next(const Observation& obs) {
    if (score_rows_.size() == 0) score_rows_ = score_matrix(imitator_.policy, clean_);
    if (clean_next_flat_.size() == 0) clean_next_flat_ = to_flat(result_.clean_next);
    const std::vector<double> r = obs.flat_rewards();
    const std::vector<double> r0 = clean_.flat_rewards();
    Vector togo(static_cast<Index>(r.size()));
    Index i = static_cast<Index>(r.size());
    for (auto tr = clean_.trajectories.rbegin(); tr != clean_.trajectories.rend(); ++tr) {
      double acc = 0.0;
      for (std::size_t t = 0; t < tr->size(); ++t) {
        --i;
        acc = (r[i] - r0[i]) + imitator_.gamma * acc;
        togo[i] = acc;
      }
    }
    const double coef = imitator_.lr_policy * step_scale(imitator_.algo, clean_);
    return with_flat(result_.clean_next, clean_next_flat_ + coef * (score_rows_.transpose() * togo));
  }

  void adopt(Point p) {
    result_.iterations = p.iterations;
    if (linear_in_rewards()) {
      p.next = next_policy(imitator_, p.obs);
      p.value = objective_->value(p.next);
    }
    if (req_.objective != CraftObjective::discrepancy && !(p.value < result_.objective_clean)) return;
    result_.poisoned = std::move(p.obs);
    result_.poisoned_next = std::move(p.next);
    result_.objective_poisoned = p.value;
  }

  double step_size() const {
    const double beta = req_.pgd.beta > 0.0 ? req_.pgd.beta : 0.05 * req_.epsilon;
    return beta * std::sqrt(static_cast<double>(clean_.num_steps()));
  }

  /// Monotone PGD: a step that does not improve the objective halves the step
  /// size instead of being taken.
  Point pgd(const Observation& start) {
    Point cur = evaluate(project_onto_power(req_.aim, clean_, start, req_.epsilon));
    double step = step_size();
    const double min_step = 1e-9 * step;
    int it = 0;
    for (; it < req_.pgd.max_iters; ++it) {
      const Vector g = component_gradient(cur);
      const double norm = g.norm();
      if (!(norm > 0.0) || !std::isfinite(norm)) break;
      Observation cand = cur.obs;
      set_component(cand, req_.aim, get_component(cur.obs, req_.aim) - (step / norm) * g);
      Point next = evaluate(project_onto_power(req_.aim, clean_, cand, req_.epsilon));
      if (next.value < cur.value) {
        const double change = cur.value - next.value;
        cur = std::move(next);
        if (change < req_.pgd.convergence_tol) {
          ++it;
          break;
        }
      } else {
        step *= 0.5;
        if (step < min_step) {
          ++it;
          break;
        }
      }
    }
    cur.iterations = it;
    return cur;
  }

  void craft_discrepancy() {
    Point best;
    double best_psi = -1.0;
    const std::vector<Vector> states = clean_.flat_states();
    for (int r = 0; r < std::max(1, req_.restarts); ++r) {
      Point p = pgd(random_perturb(clean_, req_.aim, req_.epsilon, rng_));
      const double psi = policy_discrepancy(result_.clean_next, p.next, states, req_.distance, req_.reduction);
      if (psi > best_psi) {
        best_psi = psi;
        best = std::move(p);
      }
    }
    adopt(std::move(best));
  }

  Vector component_gradient(const Point& at) {
    if (req_.aim == Aim::rewards && !req_.pgd.exact_fd) return reward_gradient(at);
    const Vector x = get_component(at.obs, req_.aim);
    const std::vector<Index> coords = sample_coordinates(x.size());
    Vector grad = Vector::Zero(x.size());
    if (req_.pgd.exact_fd) {
      for (Index c : coords) {
        const double h = req_.pgd.fd_delta * (1.0 + std::abs(x[c]));
        Observation plus = at.obs, minus = at.obs;
        Vector xp = x, xm = x;
        xp[c] += h;
        xm[c] -= h;
        set_component(plus, req_.aim, xp);
        set_component(minus, req_.aim, xm);
        grad[c] = (evaluate(std::move(plus)).value - evaluate(std::move(minus)).value) / (2.0 * h);
      }
      return grad;
    }
    return separable_gradient(at, x, coords);
  }

  Vector reward_gradient(const Point& at) {
    if (score_rows_.size() == 0) score_rows_ = score_matrix(imitator_.policy, clean_);
    const Vector v = objective_->gradient(at.next);
    const Vector d = score_rows_ * v;
    const double coef = imitator_.lr_policy * step_scale(imitator_.algo, clean_);
    return discounted_prefix(clean_, d, imitator_.gamma, coef);
  }

  /// Each step enters the update as w_t(x_t) grad log pi(a_t|s_t), so a
  /// coordinate's effect on theta' only needs that step's term re-evaluated.
  Vector separable_gradient(const Point& at, const Vector& x, const std::vector<Index>& coords) {
    const Vector v = objective_->gradient(at.next);
    const double scale = step_scale(imitator_.algo, clean_);
    const ValueParams* critic = imitator_.algo == Algo::a2c ? &*imitator_.critic : nullptr;
    const std::vector<double> returns = observation_returns(at.obs, imitator_.gamma, critic);
    // Locate the step and the offset within it for every flat coordinate.
    std::vector<const Trajectory*> traj_of;
    std::vector<std::size_t> step_of;
    std::vector<Index> start_of;
    Index offset = 0;
    for (const auto& tr : at.obs.trajectories) {
      for (std::size_t t = 0; t < tr.size(); ++t) {
        traj_of.push_back(&tr);
        step_of.push_back(t);
        start_of.push_back(offset);
        offset += req_.aim == Aim::states ? tr.states[t].size() : tr.actions[t].value.size();
      }
    }
    Vector grad = Vector::Zero(x.size());
    Vector buffer(imitator_.policy.num_params());
    auto term = [&](std::size_t i, const Vector& s, const Action& a) {
      double w = scale * returns[i];
      if (critic) w -= scale * value_forward(*critic, s);
      buffer.setZero();
      accumulate_score(imitator_.policy, s, a, 1.0, buffer);
      return w * v.dot(buffer);
    };
    const double lr = imitator_.lr_policy;
    for (Index c : coords) {
      const auto it = std::upper_bound(start_of.begin(), start_of.end(), c);
      const std::size_t i = static_cast<std::size_t>(it - start_of.begin()) - 1;
      const Index j = c - start_of[i];
      const Trajectory& tr = *traj_of[i];
      const std::size_t t = step_of[i];
      const double h = req_.pgd.fd_delta * (1.0 + std::abs(x[c]));
      if (req_.aim == Aim::states) {
        Vector sp = tr.states[t], sm = tr.states[t];
        sp[j] += h;
        sm[j] -= h;
        grad[c] = lr * (term(i, sp, tr.actions[t]) - term(i, sm, tr.actions[t])) / (2.0 * h);
      } else {
        Vector ap = tr.actions[t].value, am = ap;
        ap[j] += h;
        am[j] -= h;
        grad[c] = lr * (term(i, tr.states[t], Action::continuous(ap)) -
                        term(i, tr.states[t], Action::continuous(am))) / (2.0 * h);
      }
    }
    return grad;
  }

  std::vector<Index> sample_coordinates(Index total) {
    std::vector<Index> idx(static_cast<std::size_t>(total));
    std::iota(idx.begin(), idx.end(), Index{0});
    const Index cap = req_.pgd.max_coords;
    if (req_.pgd.exact_fd || cap <= 0 || total <= cap) return idx;
    for (Index k = 0; k < cap; ++k) {
      const std::size_t pick = static_cast<std::size_t>(k) + rng_.index(static_cast<std::size_t>(total - k));
      std::swap(idx[static_cast<std::size_t>(k)], idx[pick]);
    }
    idx.resize(static_cast<std::size_t>(cap));
    std::sort(idx.begin(), idx.end());
    return idx;
  }

  /// Each step's best single flip is scored (exactly, or to first order for
  /// large batches), then the best-scoring flips are committed up to the cap.
  void craft_flips() {
    const std::size_t n = clean_.num_steps();
    const std::size_t cap = max_flips(req_.epsilon, n);
    if (cap == 0) return;
    const PolicyParams& theta = imitator_.policy;
    const Index n_actions = theta.action_size();
    const std::vector<double> w = policy_step_weights(imitator_, clean_);
    const Vector base = to_flat(result_.clean_next);
    const double lr = imitator_.lr_policy;
    const bool exact = req_.objective == CraftObjective::discrepancy ||
                       static_cast<double>(n) * static_cast<double>(n) * static_cast<double>(n_actions - 1) <= 2e6;
    const Vector v = exact ? Vector() : objective_->gradient(result_.clean_next);

    struct Candidate {
      std::size_t flat;
      int action;
      double gain;
      Vector delta;
    };
    std::vector<Candidate> cands;
    std::size_t i = 0;
    for (const auto& tr : clean_.trajectories) {
      for (std::size_t t = 0; t < tr.size(); ++t, ++i) {
        if (w[i] == 0.0) continue;
        Vector g_a = Vector::Zero(theta.num_params());
        accumulate_score(theta, tr.states[t], tr.actions[t], 1.0, g_a);
        Candidate best{i, -1, 0.0, {}};
        for (int b = 0; b < n_actions; ++b) {
          if (b == tr.actions[t].index) continue;
          Vector delta = -g_a;
          accumulate_score(theta, tr.states[t], Action::discrete(b), 1.0, delta);
          delta *= lr * w[i];
          const double gain = exact ? result_.objective_clean - objective_->value(with_flat(theta, base + delta))
                                    : -v.dot(delta);
          if (gain > best.gain) best = Candidate{i, b, gain, std::move(delta)};
        }
        if (best.action >= 0) cands.push_back(std::move(best));
      }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) { return a.gain > b.gain; });
    std::size_t keep = std::min(cap, cands.size());
    while (keep > 0) {
      Observation poisoned = clean_;
      std::vector<double> gains(n, 0.0);
      std::vector<int> flip_to(n, -1);
      for (std::size_t k = 0; k < keep; ++k) {
        gains[cands[k].flat] = cands[k].gain;
        flip_to[cands[k].flat] = cands[k].action;
      }
      std::size_t flat = 0;
      for (auto& tr : poisoned.trajectories) {
        for (std::size_t t = 0; t < tr.size(); ++t, ++flat) {
          if (flip_to[flat] >= 0) tr.actions[t] = Action::discrete(flip_to[flat]);
        }
      }
      Point p = evaluate(project_onto_power(Aim::actions, clean_, poisoned, req_.epsilon, &gains));
      if (req_.objective == CraftObjective::discrepancy || p.value < result_.objective_clean) {
        adopt(std::move(p));
        return;
      }
      keep /= 2;
    }
  }

  const LearnerState& imitator_;
  const Observation& clean_;
  const CraftRequest& req_;
  Rng& rng_;
  std::optional<Objective> objective_;
  RowMatrix score_rows_;
  Vector clean_next_flat_;
  CraftResult result_;
};

}  // namespace

Vector importance_objective_gradient(const PolicyParams& old_policy, const PolicyParams& new_policy,
                                     const Observation& obs, const ValueParams& critic, double gamma) {
  if (obs.empty()) throw InputError("objective needs a non-empty observation");
  CraftRequest req;
  req.critic = &critic;
  LearnerState view;
  view.policy = old_policy;
  view.gamma = gamma;
  return Objective(req, view, obs, new_policy).gradient(new_policy);
}

CraftResult craft(const LearnerState& imitator, const Observation& obs, const CraftRequest& req, Rng& rng) {
  if (req.aim == Aim::hybrid) throw InputError("craft works on one concrete aim at a time");
  if (req.epsilon < 0.0) throw DomainError("attack power must be non-negative");
  if (obs.empty()) throw InputError("cannot craft poison for an empty observation");
  return Crafter(imitator, obs, req, rng).run();
}

CraftResult craft_poison(const AttackerState& attacker, const AttackConfig& cfg, const Observation& obs, Aim aim,
                         Rng& rng) {
  CraftRequest req;
  req.objective = cfg.goal == Goal::targeted ? CraftObjective::targeted : CraftObjective::attacker;
  req.aim = aim;
  req.epsilon = cfg.epsilon_for(aim);
  req.pgd = cfg.pgd;
  req.critic = &attacker.critic;
  req.target = &cfg.target;
  req.distance = cfg.distance;
  return craft(attacker.imitator, obs, req, rng);
}

Aim hybrid_select(const std::map<Aim, double>& psi) {
  if (psi.empty()) throw InputError("hybrid selection needs at least one evaluated aim");
  auto best = psi.begin();
  for (auto it = psi.begin(); it != psi.end(); ++it) {
    if (it->second > best->second) best = it;
  }
  return best->first;
}

PreparedStep prepare_step(const AttackerState& attacker, const AttackConfig& cfg, const LearnerState* learner_view,
                          const Observation& obs, bool craft_now) {
  PreparedStep p;
  p.state = attacker;
  AttackerState& st = p.state;
  const int k = st.iteration + 1;
  if (cfg.box == Box::white) {
    if (!learner_view) throw ConfigError("white-box attack needs a view of the learner");
    st.imitator = *learner_view;
  }
  st.critic = fit_adversarial_critic(st.critic, obs, cfg.critic_epochs, cfg.critic_lr, st.imitator.gamma);
  p.aim = cfg.aim == Aim::hybrid ? Aim::rewards : cfg.aim;
  p.poisoned = obs;
  if (craft_now) {
    const Rng craft_rng = st.rng.split(static_cast<std::uint64_t>(k));
    const std::vector<Vector> states = obs.flat_states();
    const std::vector<Aim> aims =
        cfg.aim == Aim::hybrid ? std::vector<Aim>{Aim::rewards, Aim::actions, Aim::states} : std::vector<Aim>{cfg.aim};
    std::map<Aim, double> psi;
    std::map<Aim, CraftResult> results;
    for (Aim aim : aims) {
      Rng r = craft_rng.split(static_cast<std::uint64_t>(aim));
      CraftResult res = craft_poison(st, cfg, obs, aim, r);
      psi[aim] = policy_discrepancy(res.clean_next, res.poisoned_next, states, cfg.distance, Reduction::mean);
      results.emplace(aim, std::move(res));
    }
    p.aim = hybrid_select(psi);
    CraftResult& chosen = results.at(p.aim);
    p.poisoned = std::move(chosen.poisoned);
    p.clean_next = std::move(chosen.clean_next);
    p.poisoned_next = std::move(chosen.poisoned_next);
    p.psi_hat = psi.at(p.aim);
    p.crafted = true;
  } else {
    p.clean_next = next_policy(st.imitator, obs);
    p.poisoned_next = p.clean_next;
  }
  st.psi.push_back(p.psi_hat);
  st.iteration = k;
  return p;
}

std::pair<PoisonOutcome, AttackerState> finish_step(PreparedStep prepared, const AttackConfig& cfg,
                                                    const Observation& obs, bool attack) {
  AttackerState st = std::move(prepared.state);
  PoisonOutcome out;
  out.aim = prepared.aim;
  out.psi_hat = prepared.psi_hat;
  out.clean_next = std::move(prepared.clean_next);
  out.poisoned_next = std::move(prepared.poisoned_next);
  if (attack && prepared.crafted && st.spent < cfg.budget) {
    out.delivered = std::move(prepared.poisoned);
    out.attacked = true;
    out.effort = total_effort(out.aim, obs, out.delivered);
    ++st.spent;
  } else {
    out.delivered = obs;
  }
  if (cfg.box == Box::black) st.imitator = learner_update(st.imitator, out.delivered);
  return {std::move(out), std::move(st)};
}

std::pair<PoisonOutcome, AttackerState> va2cp_step(const AttackerState& attacker, const AttackConfig& cfg,
                                                   const LearnerState* learner_view, const Observation& obs) {
  PreparedStep p = prepare_step(attacker, cfg, learner_view, obs, true);
  const bool attack = decide_attack(p.state.psi, cfg.budget, p.state.spent, cfg.horizon, p.state.iteration);
  return finish_step(std::move(p), cfg, obs, attack);
}

}  // namespace poisonlab
