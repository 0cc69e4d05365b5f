#pragma once

#include <Eigen/Dense>

#include "poisonlab/rng.hpp"

namespace poisonlab {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Network body shared by policies and value functions.
///
///  - mlp:     out = W2 tanh(W1 x + b1) + b2
///  - linear:  out = W2 x + b2
///  - tabular: out = W2 x, meant for one-hot inputs (one logit per state/action)
enum class Architecture { mlp, linear, tabular };

/// Weights are stored row-major so the flat parameter view is a plain
/// concatenation: W1, b1, W2, b2 (absent blocks are skipped).
struct Mlp {
  Architecture arch = Architecture::mlp;
  RowMatrix w1;  // hidden x input, mlp only
  Vector b1;
  RowMatrix w2;  // out x hidden (mlp) or out x input
  Vector b2;     // empty for tabular

  Index input_dim() const { return arch == Architecture::mlp ? w1.cols() : w2.cols(); }
  Index output_dim() const { return w2.rows(); }
  Index hidden_size() const { return arch == Architecture::mlp ? w1.rows() : 0; }
  Index num_params() const { return w1.size() + b1.size() + w2.size() + b2.size(); }
};

/// Uniform initialization in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
Mlp make_mlp(Architecture arch, Index input_dim, Index hidden, Index output_dim, Rng& rng);
Mlp zero_mlp(Architecture arch, Index input_dim, Index hidden, Index output_dim);

/// Intermediate activations kept for the backward pass.
struct MlpTrace {
  Vector input;
  Vector hidden;
  Vector output;
};

void mlp_forward(const Mlp& net, const Vector& x, MlpTrace& trace);
Vector mlp_output(const Mlp& net, const Vector& x);

/// Backpropagates d_out through the network. Parameter gradients are added
/// (not assigned) into `grad`, laid out in the flat order; the input gradient
/// is written to `d_input` when non-null.
void mlp_backward(const Mlp& net, const MlpTrace& trace, const Vector& d_out,
                  Eigen::Ref<Vector> grad, Vector* d_input = nullptr);

Vector mlp_input_gradient(const Mlp& net, const MlpTrace& trace, const Vector& d_out);

void write_flat(const Mlp& net, Eigen::Ref<Vector> out);
void read_flat(Mlp& net, const Eigen::Ref<const Vector>& flat);

enum class HeadKind { softmax, gaussian };

inline constexpr double kLogStdMin = -10.0;
inline constexpr double kLogStdMax = 2.0;

/// Policy network parameters. For the gaussian head `log_std` is a learned,
/// state-independent vector; flat order is the body followed by log_std.
struct PolicyParams {
  Mlp net;
  HeadKind head = HeadKind::softmax;
  Vector log_std;

  bool discrete() const { return head == HeadKind::softmax; }
  Index state_dim() const { return net.input_dim(); }
  Index hidden_size() const { return net.hidden_size(); }
  /// Number of discrete actions (softmax) or action dimensions (gaussian).
  Index action_size() const { return net.output_dim(); }
  Index num_params() const { return net.num_params() + log_std.size(); }
};

struct ValueParams {
  Mlp net;

  Index state_dim() const { return net.input_dim(); }
  Index num_params() const { return net.num_params(); }
};

PolicyParams make_softmax_policy(Architecture arch, Index state_dim, Index hidden, Index n_actions,
                                 Rng& rng);
PolicyParams make_gaussian_policy(Architecture arch, Index state_dim, Index hidden,
                                  Index action_dim, Rng& rng, double initial_log_std = 0.0);
ValueParams make_value(Architecture arch, Index state_dim, Index hidden, Rng& rng);

PolicyParams zero_softmax_policy(Architecture arch, Index state_dim, Index hidden, Index n_actions);
PolicyParams zero_gaussian_policy(Architecture arch, Index state_dim, Index hidden,
                                  Index action_dim);
ValueParams zero_value(Architecture arch, Index state_dim, Index hidden);

/// Throws ShapeError / NumericError / DomainError when invariants fail.
void validate(const PolicyParams& params);
void validate(const ValueParams& params);

Vector to_flat(const PolicyParams& params);
Vector to_flat(const ValueParams& params);
/// Copy of `shape` with parameters replaced by `flat`. log_std is clamped.
PolicyParams with_flat(const PolicyParams& shape, const Eigen::Ref<const Vector>& flat);
ValueParams with_flat(const ValueParams& shape, const Eigen::Ref<const Vector>& flat);

/// A discrete action index or a continuous action vector.
struct Action {
  int index = -1;
  Vector value;

  static Action discrete(int i) { return Action{i, {}}; }
  static Action continuous(Vector v) { return Action{-1, std::move(v)}; }
  bool is_discrete() const { return index >= 0; }
};

bool operator==(const Action& a, const Action& b);

struct ActionDistribution {
  Vector probs;   // softmax head
  Vector mean;    // gaussian head
  Vector stddev;  // gaussian head

  bool discrete() const { return probs.size() > 0; }
};

ActionDistribution policy_forward(const PolicyParams& params, const Vector& state);

/// log pi(action | state) and its exact gradients.
struct LogProbGrad {
  double logp = 0.0;
  Vector grad_params;
  Vector grad_state;
};

LogProbGrad log_prob_and_grads(const PolicyParams& params, const Vector& state,
                               const Action& action);

/// Adds scale * grad_theta log pi(action|state) into `grad` and returns the
/// log-probability. `grad_state`, when non-null, receives the (unscaled)
/// state gradient. This is the allocation-light kernel behind the learners.
double accumulate_score(const PolicyParams& params, const Vector& state, const Action& action,
                        double scale, Eigen::Ref<Vector> grad, Vector* grad_state = nullptr);

double log_prob(const PolicyParams& params, const Vector& state, const Action& action);

struct ValueGrad {
  double value = 0.0;
  Vector grad_params;
};

ValueGrad value_forward_and_grad(const ValueParams& params, const Vector& state);
double value_forward(const ValueParams& params, const Vector& state);

/// params + lr * grad. Ascent or descent is the caller's choice of sign.
Vector sgd_step(const Vector& params, const Vector& grad, double lr);

Action sample_action(const ActionDistribution& dist, Rng& rng);

}  // namespace poisonlab
