#include "poisonlab/envs.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "poisonlab/errors.hpp"

namespace poisonlab {

TabularMDP TabularMDP::sized(int n_states, int n_actions, double gamma, int horizon) {
  if (n_states <= 0 || n_actions <= 0) throw InputError("MDP needs at least one state and action");
  TabularMDP mdp;
  mdp.n_states = n_states;
  mdp.n_actions = n_actions;
  mdp.transition.assign(static_cast<std::size_t>(n_states) * n_actions * n_states, 0.0);
  mdp.reward = RowMatrix::Zero(n_states, n_actions);
  mdp.gamma = gamma;
  mdp.initial_dist = Vector::Zero(n_states);
  mdp.terminal.assign(n_states, false);
  mdp.horizon = horizon;
  return mdp;
}

void validate(const TabularMDP& mdp) {
  if (!(mdp.gamma > 0.0 && mdp.gamma < 1.0)) throw DomainError("gamma must lie in (0, 1)");
  if (mdp.horizon <= 0) throw DomainError("horizon must be positive");
  const std::size_t S = mdp.n_states;
  if (mdp.transition.size() != S * mdp.n_actions * S || mdp.reward.rows() != mdp.n_states ||
      mdp.reward.cols() != mdp.n_actions || mdp.initial_dist.size() != mdp.n_states ||
      mdp.terminal.size() != S) {
    throw ShapeError("MDP tables do not match n_states / n_actions");
  }
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      double total = 0.0;
      for (int n = 0; n < mdp.n_states; ++n) {
        const double p = mdp.p(s, a, n);
        if (!(p >= 0.0)) throw DomainError("negative or NaN transition probability");
        total += p;
      }
      if (std::abs(total - 1.0) > 1e-12) {
        throw DomainError("transition row (" + std::to_string(s) + "," + std::to_string(a) +
                          ") sums to " + std::to_string(total));
      }
    }
  }
  if ((mdp.initial_dist.array() < 0.0).any() || std::abs(mdp.initial_dist.sum() - 1.0) > 1e-12) {
    throw DomainError("initial distribution is not a simplex");
  }
  if (!mdp.reward.allFinite()) throw NumericError("reward table contains non-finite entries");
}

TabularMDP river_mdp(const RiverOptions& o) {
  if (o.chain_length < 2) throw InputError("river needs at least two states");
  const int L = o.chain_length;
  TabularMDP mdp = TabularMDP::sized(L + 1, 2, o.gamma, o.horizon);
  constexpr int kEnd = 0;
  mdp.terminal[kEnd] = true;
  mdp.p(kEnd, 0, kEnd) = 1.0;
  mdp.p(kEnd, 1, kEnd) = 1.0;
  mdp.initial_dist[1] = 1.0;
  // s_1: the trap and the first stroke upstream.
  mdp.p(1, 0, kEnd) = 1.0;
  mdp.reward(1, 0) = o.small_reward;
  mdp.p(1, 1, 2) = 1.0;
  for (int s = 2; s < L; ++s) {
    mdp.p(s, 0, s - 1) = 1.0;
    mdp.p(s, 1, s + 1) = 1.0;
  }
  for (int a = 0; a < 2; ++a) {
    mdp.p(L, a, kEnd) = 1.0;
    mdp.reward(L, a) = o.big_reward;
  }
  return mdp;
}

namespace {

std::string next_content_line(std::istream& is) {
  std::string line;
  while (std::getline(is, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    return line;
  }
  throw InputError("MDP file ended early");
}

template <class T>
T keyed_value(std::istream& is, const std::string& key) {
  std::istringstream ss(next_content_line(is));
  std::string k;
  T v{};
  ss >> k >> v;
  if (k != key || ss.fail()) throw InputError("expected '" + key + " <value>' in MDP file");
  return v;
}

std::vector<double> keyed_row(std::istream& is, const std::string& key, int n) {
  std::istringstream ss(next_content_line(is));
  std::string k;
  ss >> k;
  if (k != key) throw InputError("expected '" + key + "' row in MDP file");
  std::vector<double> row(n);
  for (auto& v : row) {
    if (!(ss >> v)) throw InputError("short '" + key + "' row in MDP file");
  }
  return row;
}

std::vector<double> plain_row(std::istream& is, int n) {
  std::istringstream ss(next_content_line(is));
  std::vector<double> row(n);
  for (auto& v : row) {
    if (!(ss >> v)) throw InputError("short table row in MDP file");
  }
  return row;
}

}  // namespace

TabularMDP read_tabular_mdp(std::istream& is) {
  if (next_content_line(is).rfind("poisonlab-mdp v1", 0) != 0) {
    throw InputError("MDP file must start with 'poisonlab-mdp v1'");
  }
  const int S = keyed_value<int>(is, "states");
  const int A = keyed_value<int>(is, "actions");
  const double gamma = keyed_value<double>(is, "gamma");
  const int horizon = keyed_value<int>(is, "horizon");
  TabularMDP mdp = TabularMDP::sized(S, A, gamma, horizon);
  const auto init = keyed_row(is, "initial", S);
  for (int s = 0; s < S; ++s) mdp.initial_dist[s] = init[s];
  const auto term = keyed_row(is, "terminal", S);
  for (int s = 0; s < S; ++s) mdp.terminal[s] = term[s] != 0.0;
  if (next_content_line(is).find("transition") == std::string::npos) {
    throw InputError("expected 'transition' section in MDP file");
  }
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      const auto row = plain_row(is, S);
      for (int n = 0; n < S; ++n) mdp.p(s, a, n) = row[n];
    }
  }
  if (next_content_line(is).find("reward") == std::string::npos) {
    throw InputError("expected 'reward' section in MDP file");
  }
  for (int s = 0; s < S; ++s) {
    const auto row = plain_row(is, A);
    for (int a = 0; a < A; ++a) mdp.reward(s, a) = row[a];
  }
  validate(mdp);
  return mdp;
}

TabularMDP load_tabular_mdp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open MDP file " + path);
  return read_tabular_mdp(in);
}

void write_tabular_mdp(std::ostream& os, const TabularMDP& mdp) {
  const auto old_precision = os.precision(17);
  os << "poisonlab-mdp v1\nstates " << mdp.n_states << "\nactions " << mdp.n_actions << "\ngamma "
     << mdp.gamma << "\nhorizon " << mdp.horizon << "\ninitial";
  for (int s = 0; s < mdp.n_states; ++s) os << ' ' << mdp.initial_dist[s];
  os << "\nterminal";
  for (int s = 0; s < mdp.n_states; ++s) os << ' ' << (mdp.terminal[s] ? 1 : 0);
  os << "\ntransition\n";
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      for (int n = 0; n < mdp.n_states; ++n) os << (n ? " " : "") << mdp.p(s, a, n);
      os << '\n';
    }
  }
  os << "reward\n";
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) os << (a ? " " : "") << mdp.reward(s, a);
    os << '\n';
  }
  os.precision(old_precision);
}

Vector one_hot(int index, int size) {
  Vector v = Vector::Zero(size);
  v[index] = 1.0;
  return v;
}

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

int sample_index(const TabularMDP& mdp, int s, int a, Rng& rng) {
  const double u = rng.uniform();
  double cum = 0.0;
  int last = -1;
  for (int n = 0; n < mdp.n_states; ++n) {
    const double p = mdp.p(s, a, n);
    if (p <= 0.0) continue;
    last = n;
    cum += p;
    if (u < cum) return n;
  }
  return last;
}

StepResult step_tabular(const TabularMDP& mdp, const EnvState& state, const Action& action, Rng& rng) {
  if (!action.is_discrete() || action.index >= mdp.n_actions) {
    throw DomainError("invalid tabular action");
  }
  StepResult out;
  out.reward = mdp.reward(state.index, action.index);
  out.next.index = sample_index(mdp, state.index, action.index, rng);
  out.next.steps = state.steps + 1;
  out.done = mdp.terminal[out.next.index] || out.next.steps >= mdp.horizon;
  return out;
}

StepResult step_cartpole(const CartPole& cp, const EnvState& state, const Action& action) {
  if (!action.is_discrete() || action.index > 1) throw DomainError("cartpole actions are 0 or 1");
  const double x = state.x[0], x_dot = state.x[1], theta = state.x[2], theta_dot = state.x[3];
  const double force = action.index == 1 ? cp.force_mag : -cp.force_mag;
  const double total_mass = cp.mass_cart + cp.mass_pole;
  const double pole_ml = cp.mass_pole * cp.half_length;
  const double cos_t = std::cos(theta), sin_t = std::sin(theta);
  const double temp = (force + pole_ml * theta_dot * theta_dot * sin_t) / total_mass;
  const double theta_acc = (cp.gravity * sin_t - cos_t * temp) /
                           (cp.half_length * (4.0 / 3.0 - cp.mass_pole * cos_t * cos_t / total_mass));
  const double x_acc = temp - pole_ml * theta_acc * cos_t / total_mass;

  StepResult out;
  out.next.x = Vector(4);
  out.next.x << x + cp.tau * x_dot, x_dot + cp.tau * x_acc, theta + cp.tau * theta_dot,
      theta_dot + cp.tau * theta_acc;
  out.next.steps = state.steps + 1;
  out.reward = 1.0;
  const bool fallen = std::abs(out.next.x[0]) > cp.x_threshold ||
                      std::abs(out.next.x[2]) > cp.theta_threshold;
  out.done = fallen || out.next.steps >= cp.horizon;
  return out;
}

StepResult step_point_mass(const PointMass& pm, const EnvState& state, const Action& action) {
  const int d = pm.space_dim;
  if (action.is_discrete() || action.value.size() != d) {
    throw DomainError("point-mass action must be a vector of length " + std::to_string(d));
  }
  StepResult out;
  out.next.x = state.x;
  auto pos = out.next.x.head(d);
  auto vel = out.next.x.tail(d);
  pos += pm.dt * state.x.tail(d);
  vel += pm.dt * action.value.cwiseMax(-pm.max_action).cwiseMin(pm.max_action);
  out.next.steps = state.steps + 1;
  out.reward = -out.next.x.head(d).norm();
  out.done = out.next.steps >= pm.horizon;
  return out;
}

}  // namespace

Index state_dim(const Environment& env) {
  return std::visit(overloaded{[](const TabularMDP& m) -> Index { return m.n_states; },
                               [](const CartPole&) -> Index { return 4; },
                               [](const PointMass& p) -> Index { return 2 * p.space_dim; }},
                    env);
}

bool discrete_actions(const Environment& env) { return !std::holds_alternative<PointMass>(env); }

Index action_size(const Environment& env) {
  return std::visit(overloaded{[](const TabularMDP& m) -> Index { return m.n_actions; },
                               [](const CartPole&) -> Index { return 2; },
                               [](const PointMass& p) -> Index { return p.space_dim; }},
                    env);
}

int horizon(const Environment& env) {
  return std::visit([](const auto& e) { return e.horizon; }, env);
}

std::string env_name(const Environment& env) {
  return std::visit(overloaded{[](const TabularMDP&) { return std::string("tabular"); },
                               [](const CartPole&) { return std::string("cartpole"); },
                               [](const PointMass&) { return std::string("pointmass"); }},
                    env);
}

EnvState env_reset(const Environment& env, Rng& rng) {
  return std::visit(
      overloaded{
          [&](const TabularMDP& m) {
            EnvState s;
            const double u = rng.uniform();
            double cum = 0.0;
            s.index = -1;
            for (int i = 0; i < m.n_states; ++i) {
              if (m.initial_dist[i] <= 0.0) continue;
              s.index = i;
              cum += m.initial_dist[i];
              if (u < cum) break;
            }
            return s;
          },
          [&](const CartPole&) {
            EnvState s;
            s.x = Vector(4);
            for (Index i = 0; i < 4; ++i) s.x[i] = rng.uniform(-0.05, 0.05);
            return s;
          },
          [&](const PointMass& p) {
            EnvState s;
            s.x = Vector::Zero(2 * p.space_dim);
            for (int i = 0; i < p.space_dim; ++i) s.x[i] = rng.uniform(-p.init_range, p.init_range);
            return s;
          }},
      env);
}

StepResult env_step(const Environment& env, const EnvState& state, const Action& action, Rng& rng) {
  return std::visit(
      overloaded{[&](const TabularMDP& m) { return step_tabular(m, state, action, rng); },
                 [&](const CartPole& c) { return step_cartpole(c, state, action); },
                 [&](const PointMass& p) { return step_point_mass(p, state, action); }},
      env);
}

Vector observe(const Environment& env, const EnvState& state) {
  if (const auto* m = std::get_if<TabularMDP>(&env)) return one_hot(state.index, m->n_states);
  return state.x;
}

}  // namespace poisonlab
