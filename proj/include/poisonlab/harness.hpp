#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "poisonlab/attackers.hpp"
#include "poisonlab/config.hpp"
#include "poisonlab/rollout.hpp"
#include "poisonlab/vulnerability.hpp"

namespace poisonlab {

Environment make_environment(const EnvSection& env);
LearnerState make_learner(const RunConfig& cfg, const Environment& env, Rng& rng);
AttackerSpec make_attacker_spec(const RunConfig& cfg, const Environment& env);

/// Tabular environments: exact discounted eta. Otherwise the undiscounted
/// mean return over `episodes` Monte-Carlo episodes.
double evaluate_policy(const PolicyParams& policy, const Environment& env, int episodes, Rng& rng);

struct RunRow {
  int k = 0;
  double reward = 0.0;
  bool attacked = false;
  double psi_hat = 0.0;
  double effort = 0.0;
  int budget = 0;          // attacks spent up to and including k
  double wall_ms = 0.0;
  double target_fraction = 0.0;  // share of rollout actions equal to the target action
};

struct RunSummary {
  double final_reward = 0.0;     // mean reward over the last 10% of rows (at least one)
  int total_attacks = 0;
  std::uint64_t seed = 0;
  double target_fraction = 0.0;  // same window as final_reward
  std::string key;
};

struct RunLog {
  RunConfig config;
  std::vector<RunRow> rows;
  RunSummary summary;
  PolicyParams final_policy;
};

/// The learner-vs-attacker game: for k = 1..K roll out, let the attacker
/// intervene, update the learner on what was delivered, log a row. Budget,
/// power and delivery checks raise InvariantViolation.
RunLog run_game(const RunConfig& cfg);

/// Sweep axes and the base seed define a run; the key omits the seed.
std::string config_key(const RunConfig& cfg);
RunSummary summarize(const std::vector<RunRow>& rows, const RunConfig& cfg);

void write_csv(std::ostream& os, const std::vector<RunRow>& rows);
void write_summary_json(std::ostream& os, const RunLog& log);
/// Writes run.csv, summary.json, config.ini and policy.ckpt into `dir`.
void write_run_artifacts(const RunLog& log, const std::string& dir);

struct SweepRun {
  std::size_t index = 0;
  RunConfig config;
  std::string key;
  std::optional<RunSummary> summary;
  std::string error;  // non-empty when the run failed
  bool invariant_violation = false;
};

struct AggregateRow {
  std::string key;
  int runs = 0;
  int failures = 0;
  double mean_reward = 0.0;
  double std_reward = 0.0;  // sample standard deviation, 0 for a single run
  double mean_attacks = 0.0;
  double mean_target_fraction = 0.0;
};

struct SweepResult {
  std::vector<SweepRun> runs;          // Cartesian-product order
  std::vector<AggregateRow> aggregate;  // first-appearance order of keys
};

/// Expands the [sweep] axes of `base` (empty axes keep the base value; seeds
/// must be given) into runs.
std::vector<RunConfig> expand_sweep(const RunConfig& base);
/// Runs every expanded config on up to `parallelism` threads. A failing run
/// is recorded and does not stop the others. When `out_dir` is non-empty,
/// each run's artifacts go to out_dir/run-<index>.
SweepResult run_sweep(const RunConfig& base, int parallelism, const std::string& out_dir = "");
std::vector<AggregateRow> aggregate(const std::vector<SweepRun>& runs);
void write_aggregate_csv(std::ostream& os, const std::vector<AggregateRow>& rows);

/// Aggregates every summary.json below `dir`.
std::vector<AggregateRow> report(const std::string& dir);

struct RadiusRow {
  double delta = 0.0;
  RadiusEstimate estimate;
};

/// Radius probe configured by the [radius] section: the stability radius of
/// a tabular MDP for the configured learner, or the robustness radius of
/// the initial policy over states visited by its rollouts.
std::vector<RadiusRow> run_radius(const RunConfig& cfg);
void write_radius_csv(std::ostream& os, const std::vector<RadiusRow>& rows);

/// POISONLAB_OUT when set, otherwise the current directory.
std::string output_root();
/// `path` when absolute, otherwise joined onto output_root().
std::string resolve_output(const std::string& path);

}  // namespace poisonlab
