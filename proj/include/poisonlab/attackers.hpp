#pragma once

#include <optional>
#include <string>
#include <vector>

#include "poisonlab/baselines.hpp"

namespace poisonlab {

enum class AttackerKind { none, random, acp, va2cp, fgsm };

std::string to_string(AttackerKind kind);
AttackerKind parse_attacker_kind(const std::string& text);

struct AttackerSpec {
  AttackerKind kind = AttackerKind::none;
  AttackConfig attack;
  double fgsm_epsilon = 0.1;  // per-state inf-norm power of the FGSM baseline
};

/// One attacker of any kind, stepped once per learner iteration.
class Attacker {
 public:
  Attacker(const AttackerSpec& spec, const LearnerState& learner, const Rng& rng);

  /// Called after the rollout and before the learner's update.
  PoisonOutcome step(const LearnerState& learner, const Observation& obs);

  AttackerKind kind() const { return spec_.kind; }
  int spent() const { return spent_; }
  int budget() const { return spec_.kind == AttackerKind::none ? 0 : spec_.attack.budget; }
  /// Upper bound for the effort column (eps, or the FGSM inf-norm power).
  double power() const;
  const AttackerState* state() const { return state_ ? &*state_ : nullptr; }
  const std::vector<int>& schedule() const { return schedule_; }

 private:
  AttackerSpec spec_;
  Rng rng_;
  std::optional<AttackerState> state_;
  std::vector<int> schedule_;
  int iteration_ = 0;
  int spent_ = 0;
};

}  // namespace poisonlab
