#pragma once

#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include "poisonlab/mlp.hpp"
#include "poisonlab/rng.hpp"

namespace poisonlab {

/// Finite MDP with explicit tables. Entering a terminal state ends the
/// episode; terminal states accrue no further reward.
struct TabularMDP {
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> transition;  // P[s][a][s'] flattened as (s * n_actions + a) * n_states + s'
  RowMatrix reward;                // n_states x n_actions
  double gamma = 0.99;
  Vector initial_dist;
  std::vector<bool> terminal;
  int horizon = 100;

  double p(int s, int a, int next) const {
    return transition[(static_cast<std::size_t>(s) * n_actions + a) * n_states + next];
  }
  double& p(int s, int a, int next) {
    return transition[(static_cast<std::size_t>(s) * n_actions + a) * n_states + next];
  }

  /// Empty-table MDP of the given size (all probabilities zero).
  static TabularMDP sized(int n_states, int n_actions, double gamma, int horizon = 100);
};

/// Throws DomainError when rows are not distributions or gamma is outside (0,1).
void validate(const TabularMDP& mdp);

struct RiverOptions {
  int chain_length = 10;      // river states s_1 .. s_L
  double small_reward = 1.0;  // a_0 at s_1: immediate reward, episode ends
  double big_reward = 10.0;   // paid on leaving s_L
  double gamma = 0.99;
  int horizon = 100;
};

/// Chain MDP with a myopic trap. State 0 is the absorbing terminal; states
/// 1..L form the river and the episode starts in state 1. At s_1, a_0 pays
/// `small_reward` and ends the episode; a_1 swims forward for reward 0. In
/// the middle of the river a_1 moves forward and a_0 drifts back one state.
/// Any action at s_L pays `big_reward` and ends the episode.
TabularMDP river_mdp(const RiverOptions& options = {});

/// Text format:
///   poisonlab-mdp v1
///   states S / actions A / gamma g / horizon H
///   initial <S values> / terminal <S 0|1 values>
///   transition  then S*A rows of S probabilities (row (s,a) in s-major order)
///   reward      then S rows of A values
/// Lines starting with '#' are ignored.
TabularMDP read_tabular_mdp(std::istream& is);
TabularMDP load_tabular_mdp(const std::string& path);
void write_tabular_mdp(std::ostream& os, const TabularMDP& mdp);

/// Classic cart-pole balancing task with Euler integration.
struct CartPole {
  double gravity = 9.8;
  double mass_cart = 1.0;
  double mass_pole = 0.1;
  double half_length = 0.5;
  double force_mag = 10.0;
  double tau = 0.02;
  double x_threshold = 2.4;
  double theta_threshold = 12.0 * 2.0 * 3.14159265358979323846 / 360.0;
  int horizon = 200;
};

/// Continuous-action point mass driven toward the origin. State is
/// (position, velocity), reward is minus the distance to the origin.
struct PointMass {
  int space_dim = 2;
  double dt = 0.1;
  double max_action = 1.0;
  double init_range = 1.0;
  int horizon = 50;
};

using Environment = std::variant<TabularMDP, CartPole, PointMass>;

struct EnvState {
  Vector x;        // continuous state (cartpole, point mass)
  int index = -1;  // tabular state index
  int steps = 0;
};

struct StepResult {
  EnvState next;
  double reward = 0.0;
  bool done = false;
};

Index state_dim(const Environment& env);
bool discrete_actions(const Environment& env);
/// Number of discrete actions, or the action dimension for continuous spaces.
Index action_size(const Environment& env);
int horizon(const Environment& env);
std::string env_name(const Environment& env);

EnvState env_reset(const Environment& env, Rng& rng);
StepResult env_step(const Environment& env, const EnvState& state, const Action& action, Rng& rng);

/// Policy input for a state: one-hot for tabular environments.
Vector observe(const Environment& env, const EnvState& state);
Vector one_hot(int index, int size);

}  // namespace poisonlab
