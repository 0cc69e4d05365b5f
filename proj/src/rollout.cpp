#include "poisonlab/rollout.hpp"

#include "poisonlab/errors.hpp"

namespace poisonlab {

namespace {

void check_compatible(const PolicyParams& policy, const Environment& env) {
  if (policy.discrete() != discrete_actions(env) || policy.action_size() != action_size(env) ||
      policy.state_dim() != state_dim(env)) {
    throw ShapeError("policy shape does not fit environment " + env_name(env));
  }
}

void count_action(RolloutStats* stats, const Action& a) {
  if (!stats || !a.is_discrete()) return;
  if (stats->action_counts.size() <= static_cast<std::size_t>(a.index)) {
    stats->action_counts.resize(a.index + 1, 0);
  }
  ++stats->action_counts[a.index];
}

}  // namespace

Observation rollout_episodes(const PolicyParams& policy, const Environment& env, int episodes,
                             Rng& rng, RolloutStats* stats) {
  check_compatible(policy, env);
  Observation obs;
  obs.trajectories.reserve(episodes);
  for (int e = 0; e < episodes; ++e) {
    Trajectory tr;
    EnvState state = env_reset(env, rng);
    double total = 0.0;
    bool done = false;
    while (!done) {
      Vector s = observe(env, state);
      Action a = sample_action(policy_forward(policy, s), rng);
      StepResult step = env_step(env, state, a, rng);
      count_action(stats, a);
      tr.states.push_back(std::move(s));
      tr.actions.push_back(std::move(a));
      tr.rewards.push_back(step.reward);
      tr.dones.push_back(step.done);
      total += step.reward;
      done = step.done;
      state = std::move(step.next);
    }
    if (stats) {
      stats->episode_returns.push_back(total);
      stats->steps += tr.size();
    }
    obs.trajectories.push_back(std::move(tr));
  }
  return obs;
}

ParallelEnvs::ParallelEnvs(const Environment& env, int copies, const Rng& rng) : env_(&env) {
  if (copies <= 0) throw InputError("need at least one environment copy");
  for (int i = 0; i < copies; ++i) {
    rngs_.push_back(rng.split(static_cast<std::uint64_t>(i)));
    states_.push_back(env_reset(env, rngs_.back()));
    running_.push_back(0.0);
  }
}

Observation ParallelEnvs::rollout(const PolicyParams& policy, int segment_len, RolloutStats* stats) {
  check_compatible(policy, *env_);
  if (segment_len <= 0) throw InputError("segment length must be positive");
  Observation obs;
  for (std::size_t c = 0; c < states_.size(); ++c) {
    Rng& rng = rngs_[c];
    Trajectory tr;
    for (int t = 0; t < segment_len; ++t) {
      Vector s = observe(*env_, states_[c]);
      Action a = sample_action(policy_forward(policy, s), rng);
      StepResult step = env_step(*env_, states_[c], a, rng);
      count_action(stats, a);
      running_[c] += step.reward;
      tr.states.push_back(std::move(s));
      tr.actions.push_back(std::move(a));
      tr.rewards.push_back(step.reward);
      tr.dones.push_back(step.done);
      if (stats) ++stats->steps;
      if (step.done) {
        if (stats) stats->episode_returns.push_back(running_[c]);
        running_[c] = 0.0;
        states_[c] = env_reset(*env_, rng);
        obs.trajectories.push_back(std::move(tr));
        tr = Trajectory{};
      } else {
        states_[c] = std::move(step.next);
      }
    }
    if (!tr.states.empty()) {
      tr.final_state = observe(*env_, states_[c]);
      obs.trajectories.push_back(std::move(tr));
    }
  }
  return obs;
}

}  // namespace poisonlab
