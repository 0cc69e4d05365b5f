#include "poisonlab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <thread>

#include <json.hpp>

#include "poisonlab/checkpoint.hpp"
#include "poisonlab/errors.hpp"
#include "poisonlab/tabular.hpp"

namespace poisonlab {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kEnvStream = 1;
constexpr std::uint64_t kInitStream = 2;
constexpr std::uint64_t kAttackerStream = 3;
constexpr std::uint64_t kEvalStream = 4;
constexpr std::uint64_t kRadiusStream = 5;

std::string fmt(double v, const char* spec = "%.17g") {
  char buf[48];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

void check_outcome(const Observation& clean, const PoisonOutcome& out, const Attacker& attacker,
                   const AttackerSpec& spec, int k) {
  const std::string at = " at iteration " + std::to_string(k);
  if (!out.attacked) {
    if (!identical(clean, out.delivered)) throw InvariantViolation("poisoned data delivered on a skipped iteration" + at);
    if (out.effort != 0.0) throw InvariantViolation("non-zero effort on a skipped iteration" + at);
    return;
  }
  if (attacker.kind() == AttackerKind::none) throw InvariantViolation("no-attack baseline reported an attack" + at);
  const double power = attacker.kind() == AttackerKind::fgsm ? spec.fgsm_epsilon : spec.attack.epsilon_for(out.aim);
  if (attacker.kind() != AttackerKind::fgsm) {
    const double measured = total_effort(out.aim, clean, out.delivered);
    if (std::abs(measured - out.effort) > 1e-9 * (1.0 + measured)) {
      throw InvariantViolation("reported effort disagrees with the delivered observation" + at);
    }
  }
  if (out.effort > power * (1.0 + 1e-9)) {
    throw InvariantViolation("effort " + fmt(out.effort) + " exceeds power " + fmt(power) + at);
  }
  if (attacker.spent() > attacker.budget()) throw InvariantViolation("attack budget exceeded" + at);
}

}  // namespace

Environment make_environment(const EnvSection& e) {
  if (e.name == "river") {
    RiverOptions o;
    o.chain_length = e.chain_length;
    o.small_reward = e.small_reward;
    o.big_reward = e.big_reward;
    o.gamma = e.gamma;
    if (e.horizon > 0) o.horizon = e.horizon;
    TabularMDP mdp = river_mdp(o);
    validate(mdp);
    return mdp;
  }
  if (e.name == "file") {
    TabularMDP mdp = load_tabular_mdp(e.mdp_file);
    if (e.horizon > 0) mdp.horizon = e.horizon;
    return mdp;
  }
  if (e.name == "cartpole") {
    CartPole c;
    if (e.horizon > 0) c.horizon = e.horizon;
    return c;
  }
  if (e.name == "pointmass") {
    if (e.space_dim < 1) throw ConfigError("env.space_dim must be positive");
    PointMass p;
    p.space_dim = e.space_dim;
    if (e.horizon > 0) p.horizon = e.horizon;
    return p;
  }
  throw ConfigError("unknown environment '" + e.name + "'");
}

LearnerState make_learner(const RunConfig& cfg, const Environment& env, Rng& rng) {
  const auto& l = cfg.learner;
  const Architecture arch = parse_architecture(l.arch);
  LearnerState s;
  s.algo = parse_algo(l.algo);
  s.lr_policy = l.lr_policy;
  s.lr_critic = l.lr_critic;
  s.gamma = l.gamma;
  s.policy = discrete_actions(env)
                 ? make_softmax_policy(arch, state_dim(env), l.hidden, action_size(env), rng)
                 : make_gaussian_policy(arch, state_dim(env), l.hidden, action_size(env), rng, l.init_log_std);
  if (s.algo == Algo::a2c) s.critic = make_value(arch, state_dim(env), l.hidden, rng);
  validate(s);
  return s;
}

AttackerSpec make_attacker_spec(const RunConfig& cfg, const Environment& env) {
  const auto& a = cfg.attacker;
  AttackerSpec spec;
  spec.kind = parse_attacker_kind(a.kind);
  spec.fgsm_epsilon = a.fgsm_epsilon;
  AttackConfig& c = spec.attack;
  c.aim = parse_aim(a.aim);
  c.epsilon = a.epsilon;
  c.eps_rewards = a.eps_rewards;
  c.eps_actions = a.eps_actions;
  c.eps_states = a.eps_states;
  c.budget = cfg.resolved_budget();
  c.horizon = cfg.run.iterations;
  c.box = parse_box(a.box);
  c.goal = parse_goal(a.goal);
  c.distance = parse_distance(a.distance);
  c.pgd.beta = a.beta;
  c.pgd.max_iters = a.max_iters;
  c.pgd.fd_delta = a.fd_delta;
  c.pgd.convergence_tol = a.convergence_tol;
  c.pgd.max_coords = a.max_coords;
  c.pgd.exact_fd = a.exact_fd;
  c.critic_epochs = a.critic_epochs;
  c.critic_lr = a.critic_lr;
  c.shared_init = a.shared_init;
  if (a.target_action >= 0) {
    if (!discrete_actions(env) || a.target_action >= action_size(env)) {
      throw ConfigError("attacker.target_action does not name an action of " + env_name(env));
    }
    c.target.action = a.target_action;
  } else if (!a.target_mean.empty()) {
    if (discrete_actions(env) || static_cast<Index>(a.target_mean.size()) != action_size(env)) {
      throw ConfigError("attacker.target_mean does not match the action space of " + env_name(env));
    }
    c.target.mean = Eigen::Map<const Vector>(a.target_mean.data(), a.target_mean.size());
  }
  return spec;
}

double evaluate_policy(const PolicyParams& policy, const Environment& env, int episodes, Rng& rng) {
  if (episodes < 1) throw InputError("evaluation needs at least one episode");
  if (const auto* mdp = std::get_if<TabularMDP>(&env)) {
    return policy_evaluation(*mdp, tabular_policy_from(policy, mdp->n_states)).eta;
  }
  RolloutStats stats;
  rollout_episodes(policy, env, episodes, rng, &stats);
  return mean_of(stats.episode_returns);
}

RunLog run_game(const RunConfig& cfg) {
  validate(cfg);
  const Environment env = make_environment(cfg.env);
  const Rng root(cfg.run.seed);
  Rng env_rng = root.split(kEnvStream);
  Rng init_rng = root.split(kInitStream);
  Rng eval_rng = root.split(kEvalStream);
  LearnerState learner = make_learner(cfg, env, init_rng);
  const AttackerSpec spec = make_attacker_spec(cfg, env);
  Attacker attacker(spec, learner, root.split(kAttackerStream));

  std::optional<ParallelEnvs> parallel;
  if (learner.algo == Algo::a2c) parallel.emplace(env, cfg.learner.segments, env_rng);
  const auto* mdp = std::get_if<TabularMDP>(&env);
  const int target = discrete_actions(env) ? spec.attack.target.action : -1;

  RunLog log;
  log.config = cfg;
  double last_reward = 0.0;
  bool have_reward = false;
  for (int k = 1; k <= cfg.run.iterations; ++k) {
    const auto start = std::chrono::steady_clock::now();
    RolloutStats stats;
    Observation obs = parallel ? parallel->rollout(learner.policy, cfg.learner.segment_len, &stats)
                               : rollout_episodes(learner.policy, env, cfg.learner.episodes, env_rng, &stats);
    obs.iteration = k;

    const PoisonOutcome out = attacker.step(learner, obs);
    check_outcome(obs, out, attacker, spec, k);
    learner = learner_update(learner, out.delivered);

    RunRow row;
    row.k = k;
    if (mdp) {
      last_reward = policy_evaluation(*mdp, tabular_policy_from(learner.policy, mdp->n_states)).eta;
    } else if (cfg.run.eval_episodes > 0) {
      if (!have_reward || k % cfg.run.eval_period == 0 || k == cfg.run.iterations) {
        last_reward = evaluate_policy(learner.policy, env, cfg.run.eval_episodes, eval_rng);
      }
    } else if (!stats.episode_returns.empty()) {
      last_reward = mean_of(stats.episode_returns);
    }
    have_reward = true;
    row.reward = last_reward;
    row.attacked = out.attacked;
    row.psi_hat = out.psi_hat;
    row.effort = out.effort;
    row.budget = attacker.spent();
    if (target >= 0) {
      std::size_t total = 0;
      for (auto c : stats.action_counts) total += c;
      const std::size_t hits =
          static_cast<std::size_t>(target) < stats.action_counts.size() ? stats.action_counts[target] : 0;
      row.target_fraction = total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
    }
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    if (!log.rows.empty() && row.budget < log.rows.back().budget) {
      throw InvariantViolation("cumulative budget decreased at iteration " + std::to_string(k));
    }
    if (row.budget > cfg.resolved_budget() && attacker.kind() != AttackerKind::none) {
      throw InvariantViolation("cumulative budget exceeds C at iteration " + std::to_string(k));
    }
    log.rows.push_back(row);
  }
  log.summary = summarize(log.rows, cfg);
  log.final_policy = learner.policy;
  return log;
}

std::string config_key(const RunConfig& cfg) {
  const auto& a = cfg.attacker;
  std::string key = "env=" + cfg.env.name + ",algo=" + cfg.learner.algo + ",attacker=" + a.kind;
  if (a.kind != "none") {
    key += ",aim=" + a.aim + ",eps=" + fmt(a.epsilon, "%g") + ",box=" + a.box + ",goal=" + a.goal;
    key += a.budget_ratio >= 0.0 ? ",ratio=" + fmt(a.budget_ratio, "%g") : ",C=" + std::to_string(a.budget);
  }
  return key + ",K=" + std::to_string(cfg.run.iterations);
}

RunSummary summarize(const std::vector<RunRow>& rows, const RunConfig& cfg) {
  RunSummary s;
  s.seed = cfg.run.seed;
  s.key = config_key(cfg);
  if (rows.empty()) return s;
  const std::size_t window = std::max<std::size_t>(1, (rows.size() + 9) / 10);
  double reward = 0.0, fraction = 0.0;
  for (std::size_t i = rows.size() - window; i < rows.size(); ++i) {
    reward += rows[i].reward;
    fraction += rows[i].target_fraction;
  }
  s.final_reward = reward / static_cast<double>(window);
  s.target_fraction = fraction / static_cast<double>(window);
  s.total_attacks = rows.back().budget;
  return s;
}

void write_csv(std::ostream& os, const std::vector<RunRow>& rows) {
  os << "k,reward,attacked,psi_hat,effort,budget,wall_ms\n";
  for (const auto& r : rows) {
    os << r.k << ',' << fmt(r.reward) << ',' << (r.attacked ? 1 : 0) << ',' << fmt(r.psi_hat) << ','
       << fmt(r.effort) << ',' << r.budget << ',' << fmt(r.wall_ms, "%.3f") << '\n';
  }
}

void write_summary_json(std::ostream& os, const RunLog& log) {
  nlohmann::ordered_json j;
  j["key"] = log.summary.key;
  j["seed"] = log.summary.seed;
  j["final_reward"] = log.summary.final_reward;
  j["total_attacks"] = log.summary.total_attacks;
  j["target_fraction"] = log.summary.target_fraction;
  j["iterations"] = log.config.run.iterations;
  j["budget"] = log.config.resolved_budget();
  j["attacker"] = log.config.attacker.kind;
  j["aim"] = log.config.attacker.aim;
  j["epsilon"] = log.config.attacker.epsilon;
  os << j.dump(2) << '\n';
}

void write_run_artifacts(const RunLog& log, const std::string& dir) {
  fs::create_directories(dir);
  const fs::path root(dir);
  std::ofstream csv(root / "run.csv");
  write_csv(csv, log.rows);
  std::ofstream summary(root / "summary.json");
  write_summary_json(summary, log);
  std::ofstream config(root / "config.ini");
  write_config(config, log.config);
  std::ofstream policy(root / "policy.ckpt");
  write_checkpoint(policy, log.final_policy);
  if (!csv || !summary || !config || !policy) throw InputError("cannot write run artifacts to " + dir);
}

std::vector<RunConfig> expand_sweep(const RunConfig& base) {
  const auto& sw = base.sweep;
  if (sw.seeds.empty()) throw ConfigError("sweep.seeds must list at least one seed");
  const auto attackers = sw.attackers.empty() ? std::vector<std::string>{base.attacker.kind} : sw.attackers;
  const auto aims = sw.aims.empty() ? std::vector<std::string>{base.attacker.aim} : sw.aims;
  const auto epsilons = sw.epsilons.empty() ? std::vector<double>{base.attacker.epsilon} : sw.epsilons;
  const auto ratios = sw.budget_ratios.empty() ? std::vector<double>{base.attacker.budget_ratio} : sw.budget_ratios;
  std::vector<RunConfig> out;
  for (const auto& kind : attackers) {
    for (const auto& aim : aims) {
      for (double eps : epsilons) {
        for (double ratio : ratios) {
          for (auto seed : sw.seeds) {
            RunConfig c = base;
            c.sweep = SweepSection{};
            c.attacker.kind = kind;
            c.attacker.aim = aim;
            c.attacker.epsilon = eps;
            c.attacker.budget_ratio = ratio;
            c.run.seed = seed;
            out.push_back(std::move(c));
          }
        }
      }
    }
  }
  return out;
}

std::vector<AggregateRow> aggregate(const std::vector<SweepRun>& runs) {
  std::vector<AggregateRow> rows;
  std::map<std::string, std::size_t> where;
  std::vector<std::vector<const RunSummary*>> members;
  for (const auto& r : runs) {
    auto [it, fresh] = where.emplace(r.key, rows.size());
    if (fresh) {
      rows.push_back(AggregateRow{r.key});
      members.emplace_back();
    }
    AggregateRow& row = rows[it->second];
    if (r.summary) {
      members[it->second].push_back(&*r.summary);
    } else {
      ++row.failures;
    }
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& m = members[i];
    AggregateRow& row = rows[i];
    row.runs = static_cast<int>(m.size());
    if (m.empty()) continue;
    for (const auto* s : m) {
      row.mean_reward += s->final_reward;
      row.mean_attacks += s->total_attacks;
      row.mean_target_fraction += s->target_fraction;
    }
    const double n = static_cast<double>(m.size());
    row.mean_reward /= n;
    row.mean_attacks /= n;
    row.mean_target_fraction /= n;
    if (m.size() > 1) {
      double ss = 0.0;
      for (const auto* s : m) ss += (s->final_reward - row.mean_reward) * (s->final_reward - row.mean_reward);
      row.std_reward = std::sqrt(ss / (n - 1.0));
    }
  }
  return rows;
}

SweepResult run_sweep(const RunConfig& base, int parallelism, const std::string& out_dir) {
  if (parallelism < 1) throw ConfigError("sweep parallelism must be at least 1");
  const auto configs = expand_sweep(base);
  SweepResult result;
  result.runs.resize(configs.size());
  for (std::size_t i = 0; i < configs.size(); ++i) {
    result.runs[i].index = i;
    result.runs[i].config = configs[i];
    result.runs[i].key = config_key(configs[i]);
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      SweepRun& run = result.runs[i];
      try {
        const RunLog log = run_game(run.config);
        run.summary = log.summary;
        if (!out_dir.empty()) write_run_artifacts(log, (fs::path(out_dir) / ("run-" + std::to_string(i))).string());
      } catch (const InvariantViolation& e) {
        run.summary.reset();
        run.error = e.what();
        run.invariant_violation = true;
      } catch (const std::exception& e) {
        run.summary.reset();
        run.error = e.what();
      }
    }
  };
  const int threads = static_cast<int>(std::min<std::size_t>(parallelism, configs.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  result.aggregate = aggregate(result.runs);
  return result;
}

void write_aggregate_csv(std::ostream& os, const std::vector<AggregateRow>& rows) {
  os << "key,runs,failures,mean_reward,std_reward,mean_attacks,mean_target_fraction\n";
  for (const auto& r : rows) {
    os << '"' << r.key << "\"," << r.runs << ',' << r.failures << ',' << fmt(r.mean_reward) << ','
       << fmt(r.std_reward) << ',' << fmt(r.mean_attacks) << ',' << fmt(r.mean_target_fraction) << '\n';
  }
}

std::vector<AggregateRow> report(const std::string& dir) {
  if (!fs::is_directory(dir)) throw InputError("report directory " + dir + " does not exist");
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().filename() == "summary.json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<SweepRun> runs;
  for (const auto& path : files) {
    std::ifstream in(path);
    const auto j = nlohmann::json::parse(in, nullptr, false);
    SweepRun run;
    run.index = runs.size();
    if (j.is_discarded() || !j.contains("key")) {
      run.key = path.string();
      run.error = "unreadable summary";
    } else {
      run.key = j.at("key").get<std::string>();
      RunSummary s;
      s.key = run.key;
      s.seed = j.value("seed", std::uint64_t{0});
      s.final_reward = j.value("final_reward", 0.0);
      s.total_attacks = j.value("total_attacks", 0);
      s.target_fraction = j.value("target_fraction", 0.0);
      run.summary = s;
    }
    runs.push_back(std::move(run));
  }
  return aggregate(runs);
}

std::vector<RadiusRow> run_radius(const RunConfig& cfg) {
  validate(cfg);
  const auto& r = cfg.radius;
  const Environment env = make_environment(cfg.env);
  const Rng root(cfg.run.seed);
  Rng init_rng = root.split(kInitStream);
  const LearnerState learner = make_learner(cfg, env, init_rng);
  const AttackerSpec spec = make_attacker_spec(cfg, env);
  RadiusSearch search;
  search.eps_max = r.eps_max;
  search.bisection_iters = r.bisection_iters;
  search.distance = spec.attack.distance;
  search.pgd = spec.attack.pgd;

  std::vector<RadiusRow> rows;
  if (r.probe == "stability") {
    const auto* mdp = std::get_if<TabularMDP>(&env);
    if (!mdp) throw ConfigError("the stability probe needs a tabular environment");
    MdpSampling sampling;
    sampling.n_policies = r.n_policies;
    sampling.n_obs_per_policy = r.n_obs;
    sampling.episodes_per_obs = r.episodes;
    const Aim aim = parse_aim(r.aim);
    for (std::size_t i = 0; i < r.deltas.size(); ++i) {
      Rng rng = root.split(kRadiusStream).split(i);
      rows.push_back({r.deltas[i], stability_radius_mdp(learner, *mdp, aim, r.deltas[i], sampling, search, rng)});
    }
  } else if (r.probe == "robustness") {
    Rng rng = root.split(kRadiusStream);
    const Observation obs = rollout_episodes(learner.policy, env, std::max(1, r.episodes), rng);
    auto visited = obs.flat_states();
    std::vector<Vector> states;
    const std::size_t want = std::min<std::size_t>(std::max(1, r.n_states), visited.size());
    for (std::size_t i = 0; i < want; ++i) states.push_back(visited[i * visited.size() / want]);
    for (double delta : r.deltas) {
      rows.push_back({delta, robustness_radius_mdp(learner.policy, states, delta, r.deterministic, search)});
    }
  } else {
    throw ConfigError("radius.probe must be stability or robustness");
  }
  return rows;
}

void write_radius_csv(std::ostream& os, const std::vector<RadiusRow>& rows) {
  os << "delta,lo,hi,unbounded\n";
  for (const auto& r : rows) {
    os << fmt(r.delta) << ',' << fmt(r.estimate.lo) << ',' << (r.estimate.hi ? fmt(*r.estimate.hi) : "inf") << ','
       << (r.estimate.unbounded() ? 1 : 0) << '\n';
  }
}

std::string output_root() {
  const char* env = std::getenv("POISONLAB_OUT");
  return env && *env ? env : ".";
}

std::string resolve_output(const std::string& path) {
  const fs::path p(path);
  if (p.is_absolute()) return p.string();
  return (fs::path(output_root()) / p).string();
}

}  // namespace poisonlab
