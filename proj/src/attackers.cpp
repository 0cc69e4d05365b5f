#include "poisonlab/attackers.hpp"

#include <algorithm>

#include "poisonlab/errors.hpp"

namespace poisonlab {

std::string to_string(AttackerKind kind) {
  switch (kind) {
    case AttackerKind::none: return "none";
    case AttackerKind::random: return "random";
    case AttackerKind::acp: return "acp";
    case AttackerKind::va2cp: return "va2cp";
    case AttackerKind::fgsm: return "fgsm";
  }
  return "none";
}

AttackerKind parse_attacker_kind(const std::string& text) {
  if (text == "none") return AttackerKind::none;
  if (text == "random") return AttackerKind::random;
  if (text == "acp") return AttackerKind::acp;
  if (text == "va2cp") return AttackerKind::va2cp;
  if (text == "fgsm") return AttackerKind::fgsm;
  throw ConfigError("unknown attacker '" + text + "'");
}

namespace {

constexpr std::uint64_t kScheduleStream = 0x5C4ED;
constexpr std::uint64_t kStateStream = 0xA77AC;
constexpr std::uint64_t kPerturbStream = 0x9E27B;

}  // namespace

Attacker::Attacker(const AttackerSpec& spec, const LearnerState& learner, const Rng& rng) : spec_(spec), rng_(rng) {
  if (spec_.kind == AttackerKind::none) return;
  validate(spec_.attack);
  if (spec_.kind == AttackerKind::fgsm) {
    if (!learner.policy.discrete()) throw ConfigError("FGSM baseline needs a discrete-action learner");
    if (!spec_.attack.target.defined()) throw ConfigError("FGSM baseline needs a target policy");
    if (spec_.fgsm_epsilon < 0.0) throw ConfigError("FGSM power must be non-negative");
  }
  if (spec_.kind == AttackerKind::random && spec_.attack.aim == Aim::hybrid) {
    throw ConfigError("random baseline needs a concrete aim");
  }
  if (spec_.kind != AttackerKind::va2cp) {
    Rng sched = rng.split(kScheduleStream);
    schedule_ = random_schedule(spec_.attack.budget, spec_.attack.horizon, sched);
  }
  if (spec_.kind == AttackerKind::va2cp || spec_.kind == AttackerKind::acp) {
    state_ = make_attacker_state(spec_.attack, learner, rng.split(kStateStream));
  }
}

double Attacker::power() const {
  if (spec_.kind == AttackerKind::fgsm) return spec_.fgsm_epsilon;
  if (spec_.attack.aim == Aim::hybrid) {
    return std::max({spec_.attack.epsilon_for(Aim::rewards), spec_.attack.epsilon_for(Aim::actions),
                     spec_.attack.epsilon_for(Aim::states)});
  }
  return spec_.attack.epsilon;
}

PoisonOutcome Attacker::step(const LearnerState& learner, const Observation& obs) {
  const int k = ++iteration_;
  PoisonOutcome out;
  const bool scheduled = std::binary_search(schedule_.begin(), schedule_.end(), k) && spent_ < budget();
  switch (spec_.kind) {
    case AttackerKind::none:
      out.delivered = obs;
      return out;
    case AttackerKind::random:
      out.aim = spec_.attack.aim;
      if (scheduled) {
        Rng r = rng_.split(kPerturbStream).split(static_cast<std::uint64_t>(k));
        out.delivered = random_perturb(obs, out.aim, spec_.attack.epsilon, r,
                                       static_cast<int>(learner.policy.action_size()));
        out.attacked = true;
        out.effort = total_effort(out.aim, obs, out.delivered);
        ++spent_;
      } else {
        out.delivered = obs;
      }
      return out;
    case AttackerKind::fgsm:
      out.aim = Aim::states;
      if (scheduled) {
        out.delivered = fgsm_poison(learner.policy, obs, spec_.attack.target, spec_.fgsm_epsilon);
        out.attacked = true;
        const auto clean = obs.flat_states();
        const auto poisoned = out.delivered.flat_states();
        for (std::size_t i = 0; i < clean.size(); ++i) {
          out.effort = std::max(out.effort, (clean[i] - poisoned[i]).lpNorm<Eigen::Infinity>());
        }
        ++spent_;
      } else {
        out.delivered = obs;
      }
      return out;
    case AttackerKind::acp:
    case AttackerKind::va2cp: {
      auto [outcome, next] = spec_.kind == AttackerKind::va2cp
                                 ? va2cp_step(*state_, spec_.attack, &learner, obs)
                                 : acp_step(*state_, spec_.attack, &learner, obs, schedule_);
      state_ = std::move(next);
      spent_ = state_->spent;
      return std::move(outcome);
    }
  }
  throw ConfigError("unknown attacker kind");
}

}  // namespace poisonlab
