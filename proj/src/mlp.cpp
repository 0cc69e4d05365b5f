#include "poisonlab/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "poisonlab/errors.hpp"

namespace poisonlab {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)

void fill_uniform(double* data, Index n, double bound, Rng& rng) {
  for (Index i = 0; i < n; ++i) data[i] = rng.uniform(-bound, bound);
}

Mlp shaped_mlp(Architecture arch, Index input_dim, Index hidden, Index output_dim) {
  if (input_dim <= 0 || output_dim <= 0) throw ShapeError("network dimensions must be positive");
  Mlp net;
  net.arch = arch;
  if (arch == Architecture::mlp) {
    if (hidden <= 0) throw ShapeError("mlp hidden size must be positive");
    net.w1 = RowMatrix::Zero(hidden, input_dim);
    net.b1 = Vector::Zero(hidden);
    net.w2 = RowMatrix::Zero(output_dim, hidden);
    net.b2 = Vector::Zero(output_dim);
  } else {
    net.w2 = RowMatrix::Zero(output_dim, input_dim);
    if (arch == Architecture::linear) net.b2 = Vector::Zero(output_dim);
  }
  return net;
}

double clamped_log_std(double v) { return std::clamp(v, kLogStdMin, kLogStdMax); }

void check_finite(const Eigen::Ref<const Vector>& v, const char* what) {
  if (!v.allFinite()) throw NumericError(std::string(what) + " contains non-finite entries");
}

}  // namespace

Mlp make_mlp(Architecture arch, Index input_dim, Index hidden, Index output_dim, Rng& rng) {
  Mlp net = shaped_mlp(arch, input_dim, hidden, output_dim);
  if (arch == Architecture::mlp) {
    const double b_in = 1.0 / std::sqrt(static_cast<double>(input_dim));
    const double b_hid = 1.0 / std::sqrt(static_cast<double>(hidden));
    fill_uniform(net.w1.data(), net.w1.size(), b_in, rng);
    fill_uniform(net.b1.data(), net.b1.size(), b_in, rng);
    fill_uniform(net.w2.data(), net.w2.size(), b_hid, rng);
    fill_uniform(net.b2.data(), net.b2.size(), b_hid, rng);
  } else {
    const double b_in = 1.0 / std::sqrt(static_cast<double>(input_dim));
    fill_uniform(net.w2.data(), net.w2.size(), b_in, rng);
    fill_uniform(net.b2.data(), net.b2.size(), b_in, rng);
  }
  return net;
}

Mlp zero_mlp(Architecture arch, Index input_dim, Index hidden, Index output_dim) {
  return shaped_mlp(arch, input_dim, hidden, output_dim);
}

void mlp_forward(const Mlp& net, const Vector& x, MlpTrace& trace) {
  if (x.size() != net.input_dim()) {
    throw ShapeError("state dimension " + std::to_string(x.size()) + " does not match network input " +
                     std::to_string(net.input_dim()));
  }
  trace.input = x;
  if (net.arch == Architecture::mlp) {
    trace.hidden.noalias() = net.w1 * x;
    trace.hidden += net.b1;
    // tanh|x| = (1 - e) / (1 + e) with e = exp(-2|x|): one exp instead of libm's expm1 path.
    for (Index i = 0; i < trace.hidden.size(); ++i) {
      const double x_i = trace.hidden[i];
      const double e = std::exp(-2.0 * std::abs(x_i));
      trace.hidden[i] = std::copysign((1.0 - e) / (1.0 + e), x_i);
    }
    trace.output.noalias() = net.w2 * trace.hidden;
  } else {
    trace.hidden.resize(0);
    trace.output.noalias() = net.w2 * x;
  }
  if (net.b2.size() > 0) trace.output += net.b2;
}

Vector mlp_output(const Mlp& net, const Vector& x) {
  MlpTrace trace;
  mlp_forward(net, x, trace);
  return std::move(trace.output);
}

void mlp_backward(const Mlp& net, const MlpTrace& trace, const Vector& d_out,
                  Eigen::Ref<Vector> grad, Vector* d_input) {
  double* g = grad.data();
  if (net.arch == Architecture::mlp) {
    const Index H = net.w1.rows();
    const Index D = net.w1.cols();
    const Index O = net.w2.rows();
    Eigen::Map<RowMatrix> g_w1(g, H, D);
    Eigen::Map<Vector> g_b1(g + H * D, H);
    Eigen::Map<RowMatrix> g_w2(g + H * D + H, O, H);
    Eigen::Map<Vector> g_b2(g + H * D + H + O * H, O);
    g_w2.noalias() += d_out * trace.hidden.transpose();
    g_b2 += d_out;
    Vector d_hidden = net.w2.transpose() * d_out;
    d_hidden.array() *= (1.0 - trace.hidden.array().square());
    g_w1.noalias() += d_hidden * trace.input.transpose();
    g_b1 += d_hidden;
    if (d_input) *d_input = net.w1.transpose() * d_hidden;
  } else {
    const Index O = net.w2.rows();
    const Index D = net.w2.cols();
    Eigen::Map<RowMatrix> g_w2(g, O, D);
    g_w2.noalias() += d_out * trace.input.transpose();
    if (net.b2.size() > 0) Eigen::Map<Vector>(g + O * D, O) += d_out;
    if (d_input) *d_input = net.w2.transpose() * d_out;
  }
}

Vector mlp_input_gradient(const Mlp& net, const MlpTrace& trace, const Vector& d_out) {
  if (net.arch != Architecture::mlp) return net.w2.transpose() * d_out;
  Vector d_hidden = net.w2.transpose() * d_out;
  d_hidden.array() *= (1.0 - trace.hidden.array().square());
  return net.w1.transpose() * d_hidden;
}

void write_flat(const Mlp& net, Eigen::Ref<Vector> out) {
  Index off = 0;
  auto put = [&](const double* p, Index n) {
    std::copy(p, p + n, out.data() + off);
    off += n;
  };
  put(net.w1.data(), net.w1.size());
  put(net.b1.data(), net.b1.size());
  put(net.w2.data(), net.w2.size());
  put(net.b2.data(), net.b2.size());
}

void read_flat(Mlp& net, const Eigen::Ref<const Vector>& flat) {
  if (flat.size() < net.num_params()) throw ShapeError("flat parameter vector too short");
  Index off = 0;
  auto get = [&](double* p, Index n) {
    std::copy(flat.data() + off, flat.data() + off + n, p);
    off += n;
  };
  get(net.w1.data(), net.w1.size());
  get(net.b1.data(), net.b1.size());
  get(net.w2.data(), net.w2.size());
  get(net.b2.data(), net.b2.size());
}

PolicyParams make_softmax_policy(Architecture arch, Index state_dim, Index hidden, Index n_actions,
                                 Rng& rng) {
  return PolicyParams{make_mlp(arch, state_dim, hidden, n_actions, rng), HeadKind::softmax, {}};
}

PolicyParams make_gaussian_policy(Architecture arch, Index state_dim, Index hidden,
                                  Index action_dim, Rng& rng, double initial_log_std) {
  return PolicyParams{make_mlp(arch, state_dim, hidden, action_dim, rng), HeadKind::gaussian,
                      Vector::Constant(action_dim, clamped_log_std(initial_log_std))};
}

ValueParams make_value(Architecture arch, Index state_dim, Index hidden, Rng& rng) {
  return ValueParams{make_mlp(arch, state_dim, hidden, 1, rng)};
}

PolicyParams zero_softmax_policy(Architecture arch, Index state_dim, Index hidden, Index n_actions) {
  return PolicyParams{zero_mlp(arch, state_dim, hidden, n_actions), HeadKind::softmax, {}};
}

PolicyParams zero_gaussian_policy(Architecture arch, Index state_dim, Index hidden,
                                  Index action_dim) {
  return PolicyParams{zero_mlp(arch, state_dim, hidden, action_dim), HeadKind::gaussian,
                      Vector::Zero(action_dim)};
}

ValueParams zero_value(Architecture arch, Index state_dim, Index hidden) {
  return ValueParams{zero_mlp(arch, state_dim, hidden, 1)};
}

namespace {

void validate_net(const Mlp& net) {
  if (net.arch == Architecture::mlp) {
    if (net.w1.rows() != net.b1.size() || net.w2.cols() != net.w1.rows() ||
        net.w2.rows() != net.b2.size()) {
      throw ShapeError("mlp weight shapes are inconsistent");
    }
  } else if (net.arch == Architecture::linear) {
    if (net.w2.rows() != net.b2.size() || net.w1.size() != 0 || net.b1.size() != 0) {
      throw ShapeError("linear weight shapes are inconsistent");
    }
  } else if (net.b2.size() != 0 || net.w1.size() != 0 || net.b1.size() != 0) {
    throw ShapeError("tabular networks carry a single bias-free weight matrix");
  }
  if (!net.w1.allFinite() || !net.b1.allFinite() || !net.w2.allFinite() || !net.b2.allFinite()) {
    throw NumericError("network parameters contain non-finite entries");
  }
}

}  // namespace

void validate(const PolicyParams& params) {
  validate_net(params.net);
  if (params.head == HeadKind::gaussian) {
    if (params.log_std.size() != params.net.output_dim()) throw ShapeError("log_std size mismatch");
    check_finite(params.log_std, "log_std");
    if ((params.log_std.array() < kLogStdMin).any() || (params.log_std.array() > kLogStdMax).any()) {
      throw DomainError("log_std outside [-10, 2]");
    }
  } else if (params.log_std.size() != 0) {
    throw ShapeError("softmax policies carry no log_std");
  }
}

void validate(const ValueParams& params) {
  validate_net(params.net);
  if (params.net.output_dim() != 1) throw ShapeError("value networks have a scalar output");
}

Vector to_flat(const PolicyParams& params) {
  Vector flat(params.num_params());
  write_flat(params.net, flat);
  flat.tail(params.log_std.size()) = params.log_std;
  return flat;
}

Vector to_flat(const ValueParams& params) {
  Vector flat(params.num_params());
  write_flat(params.net, flat);
  return flat;
}

PolicyParams with_flat(const PolicyParams& shape, const Eigen::Ref<const Vector>& flat) {
  if (flat.size() != shape.num_params()) throw ShapeError("flat policy vector has wrong length");
  PolicyParams out = shape;
  read_flat(out.net, flat);
  const Index n = out.log_std.size();
  for (Index i = 0; i < n; ++i) out.log_std[i] = clamped_log_std(flat[flat.size() - n + i]);
  return out;
}

ValueParams with_flat(const ValueParams& shape, const Eigen::Ref<const Vector>& flat) {
  if (flat.size() != shape.num_params()) throw ShapeError("flat value vector has wrong length");
  ValueParams out = shape;
  read_flat(out.net, flat);
  return out;
}

bool operator==(const Action& a, const Action& b) {
  if (a.index != b.index) return false;
  if (a.value.size() != b.value.size()) return false;
  return a.value.size() == 0 || a.value == b.value;
}

namespace {

Vector softmax(const Vector& z) {
  Vector p = (z.array() - z.maxCoeff()).exp().matrix();
  p /= p.sum();
  return p;
}

}  // namespace

ActionDistribution policy_forward(const PolicyParams& params, const Vector& state) {
  Vector out = mlp_output(params.net, state);
  ActionDistribution dist;
  if (params.discrete()) {
    dist.probs = softmax(out);
  } else {
    dist.mean = std::move(out);
    dist.stddev = params.log_std.unaryExpr([](double v) { return std::exp(clamped_log_std(v)); });
  }
  return dist;
}

double accumulate_score(const PolicyParams& params, const Vector& state, const Action& action,
                        double scale, Eigen::Ref<Vector> grad, Vector* grad_state) {
  if (grad.size() != params.num_params()) throw ShapeError("gradient buffer has wrong length");
  MlpTrace trace;
  mlp_forward(params.net, state, trace);
  const Vector& z = trace.output;
  Vector d_out;
  double logp = 0.0;
  if (params.discrete()) {
    if (!action.is_discrete() || action.index >= z.size()) {
      throw DomainError("invalid discrete action index " + std::to_string(action.index));
    }
    const double zmax = z.maxCoeff();
    const double lse = zmax + std::log((z.array() - zmax).exp().sum());
    logp = z[action.index] - lse;
    d_out = -(z.array() - lse).exp().matrix();
    d_out[action.index] += 1.0;
  } else {
    if (action.is_discrete() || action.value.size() != z.size()) {
      throw DomainError("continuous action has wrong dimension");
    }
    const Index n = z.size();
    d_out.resize(n);
    double* g_log_std = grad.data() + params.net.num_params();
    for (Index i = 0; i < n; ++i) {
      const double raw = params.log_std[i];
      const double ls = clamped_log_std(raw);
      const double sigma = std::exp(ls);
      const double u = (action.value[i] - z[i]) / sigma;
      logp += -0.5 * u * u - ls - kHalfLog2Pi;
      d_out[i] = u / sigma;
      if (raw > kLogStdMin && raw < kLogStdMax) g_log_std[i] += scale * (u * u - 1.0);
    }
  }
  mlp_backward(params.net, trace, scale * d_out, grad, nullptr);
  if (grad_state) *grad_state = mlp_input_gradient(params.net, trace, d_out);
  return logp;
}

LogProbGrad log_prob_and_grads(const PolicyParams& params, const Vector& state,
                               const Action& action) {
  LogProbGrad out;
  out.grad_params = Vector::Zero(params.num_params());
  out.logp = accumulate_score(params, state, action, 1.0, out.grad_params, &out.grad_state);
  return out;
}

double log_prob(const PolicyParams& params, const Vector& state, const Action& action) {
  const Vector z = mlp_output(params.net, state);
  if (params.discrete()) {
    if (!action.is_discrete() || action.index >= z.size()) {
      throw DomainError("invalid discrete action index " + std::to_string(action.index));
    }
    const double zmax = z.maxCoeff();
    return z[action.index] - zmax - std::log((z.array() - zmax).exp().sum());
  }
  if (action.is_discrete() || action.value.size() != z.size()) {
    throw DomainError("continuous action has wrong dimension");
  }
  double logp = 0.0;
  for (Index i = 0; i < z.size(); ++i) {
    const double ls = clamped_log_std(params.log_std[i]);
    const double u = (action.value[i] - z[i]) / std::exp(ls);
    logp += -0.5 * u * u - ls - kHalfLog2Pi;
  }
  return logp;
}

ValueGrad value_forward_and_grad(const ValueParams& params, const Vector& state) {
  MlpTrace trace;
  mlp_forward(params.net, state, trace);
  ValueGrad out;
  out.value = trace.output[0];
  out.grad_params = Vector::Zero(params.num_params());
  mlp_backward(params.net, trace, Vector::Ones(1), out.grad_params, nullptr);
  return out;
}

double value_forward(const ValueParams& params, const Vector& state) {
  return mlp_output(params.net, state)[0];
}

Vector sgd_step(const Vector& params, const Vector& grad, double lr) {
  if (params.size() != grad.size()) throw ShapeError("sgd_step: parameter and gradient sizes differ");
  if (!(lr >= 0.0)) throw DomainError("sgd_step: learning rate must be non-negative");
  if (grad.hasNaN()) throw NumericError("sgd_step: gradient contains NaN");
  return params + lr * grad;
}

Action sample_action(const ActionDistribution& dist, Rng& rng) {
  if (dist.discrete()) {
    const double u = rng.uniform();
    double cum = 0.0;
    int last_positive = 0;
    for (Index i = 0; i < dist.probs.size(); ++i) {
      if (dist.probs[i] > 0.0) last_positive = static_cast<int>(i);
      cum += dist.probs[i];
      if (u < cum) return Action::discrete(static_cast<int>(i));
    }
    return Action::discrete(last_positive);
  }
  Vector a(dist.mean.size());
  for (Index i = 0; i < a.size(); ++i) a[i] = dist.mean[i] + dist.stddev[i] * rng.normal();
  return Action::continuous(std::move(a));
}

}  // namespace poisonlab
