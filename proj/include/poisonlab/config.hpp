#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace poisonlab {

// Plain-data run configuration mirroring the config file sections. Enums are
// kept as their config spellings and resolved when a run is built, so that
// the struct compares and round-trips exactly.

struct EnvSection {
  std::string name;               // river | cartpole | pointmass | file
  std::string mdp_file;           // name = file
  int chain_length = 10;
  double small_reward = 1.0;
  double big_reward = 10.0;
  double gamma = 0.99;            // tabular discount used for exact evaluation
  int horizon = 0;                // 0 keeps the environment default
  int space_dim = 2;
  bool operator==(const EnvSection&) const = default;
};

struct LearnerSection {
  std::string algo;               // vpg | a2c
  double lr_policy = 0.01;
  double lr_critic = 0.005;
  double gamma = 0.99;
  std::string arch = "mlp";       // mlp | linear | tabular
  int hidden = 64;
  int episodes = 10;              // VPG episodes per iteration
  int segments = 16;              // A2C parallel copies
  int segment_len = 5;            // A2C steps per update
  double init_log_std = 0.0;
  bool operator==(const LearnerSection&) const = default;
};

struct AttackerSection {
  std::string kind = "none";      // none | random | acp | va2cp | fgsm
  std::string aim = "rewards";
  double epsilon = 0.5;
  double eps_rewards = -1.0;
  double eps_actions = -1.0;
  double eps_states = -1.0;
  int budget = 0;                 // C; ignored when budget_ratio >= 0
  double budget_ratio = -1.0;     // C / K
  std::string box = "white";
  std::string goal = "non_targeted";
  int target_action = -1;
  std::vector<double> target_mean;
  std::string distance = "tv";
  double beta = 0.0;
  int max_iters = 30;
  double fd_delta = 1e-3;
  double convergence_tol = 1e-6;
  int max_coords = 256;
  bool exact_fd = false;
  int critic_epochs = 20;
  double critic_lr = 0.01;
  double fgsm_epsilon = 0.1;
  bool shared_init = false;
  bool operator==(const AttackerSection&) const = default;
};

struct RunSection {
  int iterations = 0;             // K
  std::uint64_t seed = 0;
  std::string output_dir;
  int eval_episodes = 0;          // > 0: Monte-Carlo evaluation every eval_period iterations
  int eval_period = 1;
  bool operator==(const RunSection&) const = default;
};

struct RadiusSection {
  std::string probe = "stability";  // stability | robustness
  std::string aim = "rewards";
  std::vector<double> deltas{0.1};
  double eps_max = 10.0;
  int bisection_iters = 20;
  int n_policies = 8;
  int n_obs = 2;
  int episodes = 4;
  int n_states = 32;
  bool deterministic = false;
  bool operator==(const RadiusSection&) const = default;
};

struct SweepSection {
  std::vector<std::uint64_t> seeds;
  std::vector<double> budget_ratios;
  std::vector<double> epsilons;
  std::vector<std::string> aims;
  std::vector<std::string> attackers;
  int parallelism = 1;
  bool operator==(const SweepSection&) const = default;
};

struct RunConfig {
  EnvSection env;
  LearnerSection learner;
  AttackerSection attacker;
  RunSection run;
  RadiusSection radius;
  SweepSection sweep;
  bool operator==(const RunConfig&) const = default;

  /// C after resolving budget_ratio against K.
  int resolved_budget() const;
};

/// INI-style text: `[section]` headers, `key = value` lines, `#` comments,
/// comma-separated lists. Unknown sections or keys, malformed values and
/// missing required keys (env.name, learner.algo, run.iterations, run.seed)
/// raise ConfigError naming the line or key.
RunConfig parse_config(std::istream& is);
RunConfig load_config(const std::string& path);
void write_config(std::ostream& os, const RunConfig& cfg);
std::string config_to_string(const RunConfig& cfg);

/// Checks names and ranges; throws ConfigError.
void validate(const RunConfig& cfg);

}  // namespace poisonlab
