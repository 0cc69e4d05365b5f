#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "poisonlab/errors.hpp"
#include "poisonlab/harness.hpp"

namespace {

using namespace poisonlab;

// Exit codes: 0 success, 1 usage or input error, 2 invariant violation.
constexpr int kFailure = 1;
constexpr int kViolation = 2;

std::string out_dir(const RunConfig& cfg, const std::string& fallback) {
  return resolve_output(cfg.run.output_dir.empty() ? fallback : cfg.run.output_dir);
}

void print_summary(const RunLog& log, const std::string& dir) {
  std::cout << log.summary.key << " seed=" << log.summary.seed << " final_reward=" << log.summary.final_reward
            << " attacks=" << log.summary.total_attacks << " -> " << dir << '\n';
}

int run(const std::string& path, bool force_clean) {
  RunConfig cfg = load_config(path);
  if (force_clean) cfg.attacker.kind = "none";
  const RunLog log = run_game(cfg);
  const std::string dir = out_dir(cfg, force_clean ? "train" : "attack");
  write_run_artifacts(log, dir);
  print_summary(log, dir);
  return 0;
}

int radius(const std::string& path) {
  const RunConfig cfg = load_config(path);
  const auto rows = run_radius(cfg);
  write_radius_csv(std::cout, rows);
  if (!cfg.run.output_dir.empty()) {
    const std::string dir = out_dir(cfg, "radius");
    std::filesystem::create_directories(dir);
    std::ofstream f(std::filesystem::path(dir) / "radius.csv");
    write_radius_csv(f, rows);
  }
  return 0;
}

int sweep(const std::string& path, int parallelism) {
  const RunConfig cfg = load_config(path);
  const int threads = parallelism > 0 ? parallelism : cfg.sweep.parallelism;
  const std::string dir = out_dir(cfg, "sweep");
  const SweepResult result = run_sweep(cfg, threads, dir);
  int failures = 0;
  bool violation = false;
  for (const auto& r : result.runs) {
    if (r.error.empty()) continue;
    ++failures;
    violation = violation || r.invariant_violation;
    std::cerr << "run " << r.index << " (" << r.key << ") failed: " << r.error << '\n';
  }
  std::ofstream f(std::filesystem::path(dir) / "aggregate.csv");
  write_aggregate_csv(f, result.aggregate);
  write_aggregate_csv(std::cout, result.aggregate);
  if (violation) return kViolation;
  return failures ? kFailure : 0;
}

int report_dir(const std::string& dir, const std::string& output) {
  const auto rows = report(dir);
  if (output.empty()) {
    write_aggregate_csv(std::cout, rows);
  } else {
    std::ofstream f(output);
    write_aggregate_csv(f, rows);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Training-time poisoning attacks on policy-gradient learners"};
  app.require_subcommand(1);
  std::string config;
  int parallelism = 0;
  std::string dir, output;

  auto* train_cmd = app.add_subcommand("train", "Train the learner without an attacker");
  train_cmd->add_option("config", config, "Run config file")->required()->check(CLI::ExistingFile);
  auto* attack_cmd = app.add_subcommand("attack", "Run the learner-vs-attacker game");
  attack_cmd->add_option("config", config, "Run config file")->required()->check(CLI::ExistingFile);
  auto* radius_cmd = app.add_subcommand("radius", "Estimate stability or robustness radii");
  radius_cmd->add_option("config", config, "Run config file with a [radius] section")
      ->required()
      ->check(CLI::ExistingFile);
  auto* sweep_cmd = app.add_subcommand("sweep", "Run the Cartesian product of the [sweep] axes");
  sweep_cmd->add_option("spec", config, "Config file with a [sweep] section")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("-j,--parallelism", parallelism, "Concurrent runs (default: sweep.parallelism)");
  auto* report_cmd = app.add_subcommand("report", "Aggregate every summary.json below a directory");
  report_cmd->add_option("dir", dir, "Directory with run outputs")->required();
  report_cmd->add_option("-o,--output", output, "Write the aggregate CSV here instead of stdout");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train_cmd) return run(config, true);
    if (*attack_cmd) return run(config, false);
    if (*radius_cmd) return radius(config);
    if (*sweep_cmd) return sweep(config, parallelism);
    if (*report_cmd) return report_dir(dir, output);
  } catch (const poisonlab::InvariantViolation& e) {
    std::cerr << "invariant violation: " << e.what() << '\n';
    return kViolation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
