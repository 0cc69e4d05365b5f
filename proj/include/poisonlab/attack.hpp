#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "poisonlab/effort.hpp"
#include "poisonlab/learners.hpp"

namespace poisonlab {

enum class Box { white, black };
enum class Goal { non_targeted, targeted };
/// Distance between action distributions. For gaussian heads both choices
/// use the capped Pinsker surrogate min(1, sqrt(KL/2)).
enum class Distance { total_variation, kl_surrogate };
enum class Reduction { mean, max };

std::string to_string(Box box);
std::string to_string(Goal goal);
std::string to_string(Distance distance);
Box parse_box(const std::string& text);
Goal parse_goal(const std::string& text);
Distance parse_distance(const std::string& text);

/// State-independent target policy pi-dagger: a constant discrete action or
/// a constant continuous action vector.
struct TargetPolicy {
  int action = -1;
  Vector mean;

  bool defined() const { return action >= 0 || mean.size() > 0; }
  Action act(const Vector& state) const;
};

struct PgdConfig {
  double beta = 0.0;            // step in effort units; <= 0 means 0.05 * eps
  int max_iters = 30;           // J
  double fd_delta = 1e-3;       // finite-difference step is fd_delta * (1 + |x|)
  double convergence_tol = 1e-6;
  int max_coords = 256;         // finite-difference coordinates sampled per iteration
  bool exact_fd = false;        // re-run the whole learner update per coordinate
};

struct AttackConfig {
  Aim aim = Aim::rewards;
  double epsilon = 0.5;
  // Per-aim powers for the hybrid aim; negative means `epsilon`.
  double eps_rewards = -1.0;
  double eps_actions = -1.0;
  double eps_states = -1.0;
  int budget = 0;   // C
  int horizon = 1;  // K
  Box box = Box::white;
  Goal goal = Goal::non_targeted;
  TargetPolicy target;
  Distance distance = Distance::total_variation;
  PgdConfig pgd;
  int critic_epochs = 20;
  double critic_lr = 0.01;
  // Black-box imitator starts from the learner's initial parameters instead
  // of a fresh draw. Used for parity checks.
  bool shared_init = false;

  double epsilon_for(Aim a) const;
};

/// Throws ConfigError on C > K, eps < 0, J < 1 or a targeted goal without target.
void validate(const AttackConfig& cfg);

struct AttackerState {
  ValueParams critic;      // omega
  LearnerState imitator;   // theta-tilde (and its critic for A2C)
  std::vector<double> psi;
  int spent = 0;
  int iteration = 0;       // iterations observed so far
  Rng rng{0};
};

/// Fresh attacker against learners shaped like `learner`. The adversarial
/// critic copies the learner policy's body architecture.
AttackerState make_attacker_state(const AttackConfig& cfg, const LearnerState& learner, const Rng& rng);

struct PoisonOutcome {
  Observation delivered;
  bool attacked = false;
  double psi_hat = 0.0;
  double effort = 0.0;
  Aim aim = Aim::rewards;
  PolicyParams clean_next;
  PolicyParams poisoned_next;
};

double distribution_distance(const ActionDistribution& a, const ActionDistribution& b,
                             Distance distance = Distance::total_variation);

/// Mean (or max) over `states` of the distance between the two policies.
double policy_discrepancy(const PolicyParams& a, const PolicyParams& b, const std::vector<Vector>& states,
                          Distance distance = Distance::total_variation,
                          Reduction reduction = Reduction::mean);

/// Nearest-rank quantile: the ceil(q n)-th smallest value (at least the first).
double nearest_rank_quantile(std::vector<double> values, double q);

/// `psi` already holds the current psi-hat as its last entry; k is the
/// 1-based current iteration out of K, c the attacks spent out of C.
bool decide_attack(const std::vector<double>& psi, int budget, int spent, int horizon, int k);

/// Mean cross-entropy of the target action (discrete) or mean squared
/// distance between policy mean and target (continuous).
double targeted_loss(const PolicyParams& params, const TargetPolicy& target, const std::vector<Vector>& states);

/// 1/2 mean squared error of V_omega against reward-to-go. Segments cut
/// before an episode end bootstrap from `bootstrap` when given.
double critic_loss(const ValueParams& critic, const Observation& obs, double gamma,
                   const ValueParams* bootstrap = nullptr);

/// Full-batch gradient descent on critic_loss (targets bootstrapped from the
/// starting critic) with step halving whenever a step would increase the
/// loss, so the loss never goes up.
ValueParams fit_adversarial_critic(const ValueParams& critic, const Observation& obs, int epochs, double lr,
                                   double gamma);

/// (1/NT) sum_t pi_new(a_t|s_t) / pi_old(a_t|s_t) * (G_t - V_omega(s_t)) over `obs`,
/// with G_t bootstrapped from V_omega on cut segments.
double importance_objective(const PolicyParams& old_policy, const PolicyParams& new_policy,
                            const Observation& obs, const ValueParams& critic, double gamma);
/// Gradient of importance_objective with respect to the new policy's flat parameters.
Vector importance_objective_gradient(const PolicyParams& old_policy, const PolicyParams& new_policy,
                                     const Observation& obs, const ValueParams& critic, double gamma);

struct ImitationResult {
  PolicyParams next;
  double eta_hat = 0.0;
};

/// theta' from the imitator's update rule on `obs`; eta-hat is evaluated on
/// `eval_obs` when given (the attacker scores candidates on clean data).
ImitationResult imitate_update(const LearnerState& imitator, const Observation& obs, const ValueParams& critic,
                               const Observation* eval_obs = nullptr);

/// Jacobian (params x steps) of the VPG policy step with respect to rewards.
RowMatrix vpg_reward_jacobian(const LearnerState& learner, const Observation& obs);

/// The same Jacobian for either learner; A2C holds its critic fixed, which
/// keeps the step linear in the rewards.
RowMatrix reward_jacobian(const LearnerState& learner, const Observation& obs);

enum class CraftObjective {
  attacker,     // minimize eta-hat of the imitated next policy
  targeted,     // minimize targeted_loss of the imitated next policy
  discrepancy,  // maximize the discrepancy between clean and poisoned next policies
};

struct CraftRequest {
  CraftObjective objective = CraftObjective::attacker;
  Aim aim = Aim::rewards;
  double epsilon = 0.0;
  PgdConfig pgd;
  const ValueParams* critic = nullptr;    // attacker objective
  const TargetPolicy* target = nullptr;   // targeted objective
  int restarts = 3;                       // discrepancy objective: random boundary starts
  Distance distance = Distance::total_variation;
  Reduction reduction = Reduction::mean;
};

struct CraftResult {
  Observation poisoned;
  PolicyParams clean_next;
  PolicyParams poisoned_next;
  double objective_clean = 0.0;
  double objective_poisoned = 0.0;
  int iterations = 0;
};

/// Projected gradient descent over the eps-ball of `req.aim` around `obs`,
/// predicting the learner through `imitator`. Objectives are minimized; the
/// returned objective is never worse than the clean one.
CraftResult craft(const LearnerState& imitator, const Observation& obs, const CraftRequest& req, Rng& rng);

/// Attacker-level wrapper: objective from cfg.goal, power from cfg.epsilon_for(aim).
CraftResult craft_poison(const AttackerState& attacker, const AttackConfig& cfg, const Observation& obs, Aim aim,
                         Rng& rng);

/// Aim with the largest psi-hat, ties resolved as rewards < actions < states.
Aim hybrid_select(const std::map<Aim, double>& psi);

/// Front half of an attacker step (critic fit, imitator sync, crafting and
/// psi-hat). With `craft_now` false nothing is crafted and psi-hat is 0.
struct PreparedStep {
  AttackerState state;
  Aim aim = Aim::rewards;
  Observation poisoned;
  PolicyParams clean_next;
  PolicyParams poisoned_next;
  double psi_hat = 0.0;
  bool crafted = false;
};

PreparedStep prepare_step(const AttackerState& attacker, const AttackConfig& cfg, const LearnerState* learner_view,
                          const Observation& obs, bool craft_now);

/// Back half: delivers the poison or the clean data and advances the imitator.
std::pair<PoisonOutcome, AttackerState> finish_step(PreparedStep prepared, const AttackConfig& cfg,
                                                    const Observation& obs, bool attack);

std::pair<PoisonOutcome, AttackerState> va2cp_step(const AttackerState& attacker, const AttackConfig& cfg,
                                                   const LearnerState* learner_view, const Observation& obs);

}  // namespace poisonlab
