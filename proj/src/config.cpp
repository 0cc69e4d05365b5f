#include "poisonlab/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "poisonlab/attack.hpp"
#include "poisonlab/attackers.hpp"
#include "poisonlab/checkpoint.hpp"
#include "poisonlab/errors.hpp"

namespace poisonlab {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  if (trim(text).empty()) return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

std::string format(const std::string& v) { return v; }
std::string format(int v) { return std::to_string(v); }
std::string format(std::uint64_t v) { return std::to_string(v); }
std::string format(bool v) { return v ? "true" : "false"; }
std::string format(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
template <class T>
std::string format(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + format(v[i]);
  return out;
}

void parse(const std::string& text, std::string& out) { out = text; }

void parse(const std::string& text, double& out) {
  std::size_t used = 0;
  out = std::stod(text, &used);
  if (used != text.size()) throw std::invalid_argument("trailing characters");
}

void parse(const std::string& text, int& out) {
  std::size_t used = 0;
  out = std::stoi(text, &used);
  if (used != text.size()) throw std::invalid_argument("trailing characters");
}

void parse(const std::string& text, std::uint64_t& out) {
  std::size_t used = 0;
  if (!text.empty() && text[0] == '-') throw std::invalid_argument("negative");
  out = std::stoull(text, &used);
  if (used != text.size()) throw std::invalid_argument("trailing characters");
}

void parse(const std::string& text, bool& out) {
  if (text == "true" || text == "1") {
    out = true;
  } else if (text == "false" || text == "0") {
    out = false;
  } else {
    throw std::invalid_argument("expected true or false");
  }
}

template <class T>
void parse(const std::string& text, std::vector<T>& out) {
  out.clear();
  for (const auto& item : split_list(text)) {
    T v{};
    parse(item, v);
    out.push_back(v);
  }
}

struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
  bool required = false;
};

template <class S, class T>
Field field(const char* section, const char* key, S RunConfig::*sec, T S::*member, bool required = false) {
  return Field{section, key, [=](const RunConfig& c) { return format((c.*sec).*member); },
               [=](RunConfig& c, const std::string& v) { parse(v, (c.*sec).*member); }, required};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      field("env", "name", &RunConfig::env, &EnvSection::name, true),
      field("env", "mdp_file", &RunConfig::env, &EnvSection::mdp_file),
      field("env", "chain_length", &RunConfig::env, &EnvSection::chain_length),
      field("env", "small_reward", &RunConfig::env, &EnvSection::small_reward),
      field("env", "big_reward", &RunConfig::env, &EnvSection::big_reward),
      field("env", "gamma", &RunConfig::env, &EnvSection::gamma),
      field("env", "horizon", &RunConfig::env, &EnvSection::horizon),
      field("env", "space_dim", &RunConfig::env, &EnvSection::space_dim),

      field("learner", "algo", &RunConfig::learner, &LearnerSection::algo, true),
      field("learner", "lr_policy", &RunConfig::learner, &LearnerSection::lr_policy),
      field("learner", "lr_critic", &RunConfig::learner, &LearnerSection::lr_critic),
      field("learner", "gamma", &RunConfig::learner, &LearnerSection::gamma),
      field("learner", "arch", &RunConfig::learner, &LearnerSection::arch),
      field("learner", "hidden", &RunConfig::learner, &LearnerSection::hidden),
      field("learner", "episodes", &RunConfig::learner, &LearnerSection::episodes),
      field("learner", "segments", &RunConfig::learner, &LearnerSection::segments),
      field("learner", "segment_len", &RunConfig::learner, &LearnerSection::segment_len),
      field("learner", "init_log_std", &RunConfig::learner, &LearnerSection::init_log_std),

      field("attacker", "kind", &RunConfig::attacker, &AttackerSection::kind),
      field("attacker", "aim", &RunConfig::attacker, &AttackerSection::aim),
      field("attacker", "epsilon", &RunConfig::attacker, &AttackerSection::epsilon),
      field("attacker", "eps_rewards", &RunConfig::attacker, &AttackerSection::eps_rewards),
      field("attacker", "eps_actions", &RunConfig::attacker, &AttackerSection::eps_actions),
      field("attacker", "eps_states", &RunConfig::attacker, &AttackerSection::eps_states),
      field("attacker", "budget", &RunConfig::attacker, &AttackerSection::budget),
      field("attacker", "budget_ratio", &RunConfig::attacker, &AttackerSection::budget_ratio),
      field("attacker", "box", &RunConfig::attacker, &AttackerSection::box),
      field("attacker", "goal", &RunConfig::attacker, &AttackerSection::goal),
      field("attacker", "target_action", &RunConfig::attacker, &AttackerSection::target_action),
      field("attacker", "target_mean", &RunConfig::attacker, &AttackerSection::target_mean),
      field("attacker", "distance", &RunConfig::attacker, &AttackerSection::distance),
      field("attacker", "beta", &RunConfig::attacker, &AttackerSection::beta),
      field("attacker", "max_iters", &RunConfig::attacker, &AttackerSection::max_iters),
      field("attacker", "fd_delta", &RunConfig::attacker, &AttackerSection::fd_delta),
      field("attacker", "convergence_tol", &RunConfig::attacker, &AttackerSection::convergence_tol),
      field("attacker", "max_coords", &RunConfig::attacker, &AttackerSection::max_coords),
      field("attacker", "exact_fd", &RunConfig::attacker, &AttackerSection::exact_fd),
      field("attacker", "critic_epochs", &RunConfig::attacker, &AttackerSection::critic_epochs),
      field("attacker", "critic_lr", &RunConfig::attacker, &AttackerSection::critic_lr),
      field("attacker", "fgsm_epsilon", &RunConfig::attacker, &AttackerSection::fgsm_epsilon),
      field("attacker", "shared_init", &RunConfig::attacker, &AttackerSection::shared_init),

      field("run", "iterations", &RunConfig::run, &RunSection::iterations, true),
      field("run", "seed", &RunConfig::run, &RunSection::seed, true),
      field("run", "output_dir", &RunConfig::run, &RunSection::output_dir),
      field("run", "eval_episodes", &RunConfig::run, &RunSection::eval_episodes),
      field("run", "eval_period", &RunConfig::run, &RunSection::eval_period),

      field("radius", "probe", &RunConfig::radius, &RadiusSection::probe),
      field("radius", "aim", &RunConfig::radius, &RadiusSection::aim),
      field("radius", "deltas", &RunConfig::radius, &RadiusSection::deltas),
      field("radius", "eps_max", &RunConfig::radius, &RadiusSection::eps_max),
      field("radius", "bisection_iters", &RunConfig::radius, &RadiusSection::bisection_iters),
      field("radius", "n_policies", &RunConfig::radius, &RadiusSection::n_policies),
      field("radius", "n_obs", &RunConfig::radius, &RadiusSection::n_obs),
      field("radius", "episodes", &RunConfig::radius, &RadiusSection::episodes),
      field("radius", "n_states", &RunConfig::radius, &RadiusSection::n_states),
      field("radius", "deterministic", &RunConfig::radius, &RadiusSection::deterministic),

      field("sweep", "seeds", &RunConfig::sweep, &SweepSection::seeds),
      field("sweep", "budget_ratios", &RunConfig::sweep, &SweepSection::budget_ratios),
      field("sweep", "epsilons", &RunConfig::sweep, &SweepSection::epsilons),
      field("sweep", "aims", &RunConfig::sweep, &SweepSection::aims),
      field("sweep", "attackers", &RunConfig::sweep, &SweepSection::attackers),
      field("sweep", "parallelism", &RunConfig::sweep, &SweepSection::parallelism),
  };
  return table;
}

const std::vector<std::string> kSections = {"env", "learner", "attacker", "run", "radius", "sweep"};

}  // namespace

int RunConfig::resolved_budget() const {
  if (attacker.budget_ratio >= 0.0) {
    return static_cast<int>(std::lround(attacker.budget_ratio * run.iterations));
  }
  return attacker.budget;
}

RunConfig parse_config(std::istream& is) {
  std::map<std::pair<std::string, std::string>, const Field*> index;
  for (const auto& f : fields()) index[{f.section, f.key}] = &f;
  RunConfig cfg;
  std::set<std::pair<std::string, std::string>> seen;
  std::string section;
  std::string raw;
  int line_no = 0;
  while (std::getline(is, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    const std::string where = "line " + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (std::find(kSections.begin(), kSections.end(), section) == kSections.end()) {
        throw ConfigError(where + ": unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    if (section.empty()) throw ConfigError(where + ": key outside of any section");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = index.find({section, key});
    if (it == index.end()) throw ConfigError(where + ": unknown key '" + key + "' in [" + section + "]");
    if (!seen.insert({section, key}).second) {
      throw ConfigError(where + ": duplicate key '" + key + "' in [" + section + "]");
    }
    try {
      it->second->set(cfg, value);
    } catch (const std::exception& e) {
      throw ConfigError(where + ": bad value '" + value + "' for [" + section + "] " + key);
    }
  }
  for (const auto& f : fields()) {
    if (f.required && !seen.count({f.section, f.key})) {
      throw ConfigError("missing required key [" + f.section + "] " + f.key);
    }
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return parse_config(in);
}

void write_config(std::ostream& os, const RunConfig& cfg) {
  std::string current;
  for (const auto& f : fields()) {
    if (f.section != current) {
      os << (current.empty() ? "" : "\n") << '[' << f.section << "]\n";
      current = f.section;
    }
    os << f.key << " = " << f.get(cfg) << '\n';
  }
}

std::string config_to_string(const RunConfig& cfg) {
  std::ostringstream os;
  write_config(os, cfg);
  return os.str();
}

void validate(const RunConfig& cfg) {
  static const std::set<std::string> envs = {"river", "cartpole", "pointmass", "file"};
  if (!envs.count(cfg.env.name)) throw ConfigError("unknown environment '" + cfg.env.name + "'");
  if (cfg.env.name == "file" && cfg.env.mdp_file.empty()) throw ConfigError("env.name = file needs env.mdp_file");
  parse_algo(cfg.learner.algo);
  parse_architecture(cfg.learner.arch);
  parse_attacker_kind(cfg.attacker.kind);
  parse_aim(cfg.attacker.aim);
  parse_box(cfg.attacker.box);
  parse_goal(cfg.attacker.goal);
  parse_distance(cfg.attacker.distance);
  for (const auto& a : cfg.sweep.aims) parse_aim(a);
  for (const auto& a : cfg.sweep.attackers) parse_attacker_kind(a);
  if (cfg.run.iterations < 1) throw ConfigError("run.iterations must be at least 1");
  if (cfg.run.eval_period < 1) throw ConfigError("run.eval_period must be at least 1");
  if (cfg.learner.episodes < 1 || cfg.learner.segments < 1 || cfg.learner.segment_len < 1) {
    throw ConfigError("learner rollout sizes must be positive");
  }
  if (cfg.learner.arch == "mlp" && cfg.learner.hidden < 1) throw ConfigError("learner.hidden must be positive");
  const int c = cfg.resolved_budget();
  if (c < 0 || c > cfg.run.iterations) throw ConfigError("attack budget must satisfy 0 <= C <= K");
  if (cfg.attacker.epsilon < 0.0) throw ConfigError("attacker.epsilon must be non-negative");
  if (cfg.sweep.parallelism < 1) throw ConfigError("sweep.parallelism must be at least 1");
}

}  // namespace poisonlab
