#pragma once

// Trainable primitives with hand-written gradients: the position-velocity GRU
// cell, the linear output head, inverted dropout, Xavier initialization, and
// Adam. All batched tensors hold one clip per column.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "pvred/error.hpp"

namespace pvred::net {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Weights of one GRU gate: pose, velocity, position and recurrent maps plus bias.
struct GateParams {
  MatrixXd ux;  // H x D
  MatrixXd uv;  // H x D
  MatrixXd up;  // H x d_p
  MatrixXd w;   // H x H
  VectorXd b;   // H
};

/// The cell shared by encoder and decoder.
struct PvGruParams {
  GateParams update;     // z
  GateParams reset;      // r
  GateParams candidate;  // h~

  Eigen::Index hidden() const { return update.w.rows(); }
  Eigen::Index pose_dim() const { return update.ux.cols(); }
  Eigen::Index embed_dim() const { return update.up.cols(); }
};

/// Output regression: out = w * h + b.
struct LinearParams {
  MatrixXd w;  // D x H
  VectorXd b;  // D
};

struct ModelParams {
  PvGruParams cell;
  LinearParams out;
};

namespace detail {

template <class F, class... Gs>
void visit_gate(const std::string& prefix, F& f, Gs&... gates) {
  f(prefix + ".ux", gates.ux...);
  f(prefix + ".uv", gates.uv...);
  f(prefix + ".up", gates.up...);
  f(prefix + ".w", gates.w...);
  f(prefix + ".b", gates.b...);
}

}  // namespace detail

/// Calls f(name, tensor_of_p0, tensor_of_p1, ...) for every tensor, in a fixed
/// order, over any number of structurally identical ModelParams.
template <class F, class... Ps>
void visit_tensors(F&& f, Ps&... params) {
  detail::visit_gate("cell.z", f, params.cell.update...);
  detail::visit_gate("cell.r", f, params.cell.reset...);
  detail::visit_gate("cell.h", f, params.cell.candidate...);
  f(std::string("out.w"), params.out.w...);
  f(std::string("out.b"), params.out.b...);
}

/// All-zero parameters shaped like `like`.
inline ModelParams zeros_like(const ModelParams& like) {
  ModelParams z = like;
  visit_tensors([](const std::string&, auto& t) { t.setZero(); }, z);
  return z;
}

inline double squared_norm(const ModelParams& p) {
  double s = 0.0;
  visit_tensors([&](const std::string&, const auto& t) { s += t.squaredNorm(); }, p);
  return s;
}

/// Scales grads so their global L2 norm is at most max_norm. Returns the norm before clipping.
inline double clip_global_norm(ModelParams& grads, double max_norm) {
  const double norm = std::sqrt(squared_norm(grads));
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    visit_tensors([&](const std::string&, auto& t) { t *= scale; }, grads);
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Initialization

/// Xavier-uniform weights, zero biases. Deterministic for a given seed.
inline ModelParams init_params(Eigen::Index pose_dim, Eigen::Index embed_dim, Eigen::Index hidden, std::uint64_t seed) {
  if (pose_dim < 1 || embed_dim < 1 || hidden < 1) throw InvalidInput("init_params: dimensions must be positive");
  std::mt19937_64 rng(seed);
  auto xavier = [&](Eigen::Index rows, Eigen::Index cols) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-limit, limit);
    MatrixXd m(rows, cols);
    // column-major fill keeps the draw order independent of Eigen internals
    for (Eigen::Index c = 0; c < cols; ++c)
      for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = dist(rng);
    return m;
  };
  auto gate = [&] {
    GateParams g;
    g.ux = xavier(hidden, pose_dim);
    g.uv = xavier(hidden, pose_dim);
    g.up = xavier(hidden, embed_dim);
    g.w = xavier(hidden, hidden);
    g.b = VectorXd::Zero(hidden);
    return g;
  };
  ModelParams p;
  p.cell.update = gate();
  p.cell.reset = gate();
  p.cell.candidate = gate();
  // A zero head starts training from the zero-velocity predictor instead of a
  // random drift that compounds over the decoded frames.
  p.out.w = MatrixXd::Zero(pose_dim, hidden);
  p.out.b = VectorXd::Zero(pose_dim);
  return p;
}

// ---------------------------------------------------------------------------
// PV-GRU cell

/// Everything pvgru_backward needs; batch along columns.
struct StepCache {
  MatrixXd x, v, p, h_prev;
  MatrixXd z, r, h_tilde;
  MatrixXd h;
};

/// Gradients of a cell step with respect to its inputs.
struct CellInputGrads {
  MatrixXd dx, dv, dp, dh_prev;
};

namespace detail {

inline void require_rows(const MatrixXd& m, Eigen::Index rows, Eigen::Index cols, const char* what) {
  if (m.rows() != rows || m.cols() != cols)
    throw ShapeError(std::string("pvgru: ") + what + " is " + std::to_string(m.rows()) + "x" +
                     std::to_string(m.cols()) + ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
}

inline MatrixXd gate_preactivation(const GateParams& g, const MatrixXd& x, const MatrixXd& v, const MatrixXd& p,
                                   const MatrixXd& recurrent) {
  MatrixXd a = g.w * recurrent;
  a.noalias() += g.ux * x;
  a.noalias() += g.uv * v;
  a.noalias() += g.up * p;
  a.colwise() += g.b;
  return a;
}

inline MatrixXd sigmoid(const MatrixXd& a) { return (1.0 + (-a.array()).exp()).inverse().matrix(); }

// Accumulates parameter grads for one gate given d(preactivation); returns nothing
// for inputs, which callers gather themselves.
inline void accumulate_gate(GateParams& grad, const MatrixXd& da, const MatrixXd& x, const MatrixXd& v,
                            const MatrixXd& p, const MatrixXd& recurrent) {
  grad.ux.noalias() += da * x.transpose();
  grad.uv.noalias() += da * v.transpose();
  grad.up.noalias() += da * p.transpose();
  grad.w.noalias() += da * recurrent.transpose();
  grad.b += da.rowwise().sum();
}

}  // namespace detail

/// One step of the three-input GRU:
///   z = sig(Ux^z x + Uv^z v + Up^z p + W^z h_prev + b^z), r likewise,
///   h~ = tanh(Ux^h x + Uv^h v + Up^h p + W^h (r o h_prev) + b^h),
///   h = (1 - z) o h_prev + z o h~.
inline StepCache pvgru_forward(const PvGruParams& params, const MatrixXd& x, const MatrixXd& v, const MatrixXd& p,
                               const MatrixXd& h_prev) {
  const Eigen::Index batch = x.cols();
  detail::require_rows(x, params.pose_dim(), batch, "pose input");
  detail::require_rows(v, params.pose_dim(), batch, "velocity input");
  detail::require_rows(p, params.embed_dim(), batch, "position input");
  detail::require_rows(h_prev, params.hidden(), batch, "previous hidden state");

  StepCache c;
  c.x = x;
  c.v = v;
  c.p = p;
  c.h_prev = h_prev;
  c.z = detail::sigmoid(detail::gate_preactivation(params.update, x, v, p, h_prev));
  c.r = detail::sigmoid(detail::gate_preactivation(params.reset, x, v, p, h_prev));
  const MatrixXd gated = c.r.cwiseProduct(h_prev);
  c.h_tilde = detail::gate_preactivation(params.candidate, x, v, p, gated).array().tanh().matrix();
  c.h = h_prev + c.z.cwiseProduct(c.h_tilde - h_prev);
  return c;
}

/// Reverse of pvgru_forward. Parameter gradients are ADDED into `grads`
/// (which must be shaped like `params`); input gradients are returned.
inline CellInputGrads pvgru_backward(const PvGruParams& params, const StepCache& cache, const MatrixXd& dh,
                                     PvGruParams& grads) {
  if (cache.h.size() == 0) throw StateError("pvgru_backward: empty cache");
  detail::require_rows(dh, cache.h.rows(), cache.h.cols(), "dh");

  const auto& z = cache.z.array();
  const auto& r = cache.r.array();
  const auto& ht = cache.h_tilde.array();
  const auto& hp = cache.h_prev.array();
  const auto& g = dh.array();

  const MatrixXd da_h = (g * z * (1.0 - ht * ht)).matrix();
  const MatrixXd da_z = (g * (ht - hp) * z * (1.0 - z)).matrix();
  const MatrixXd gated = cache.r.cwiseProduct(cache.h_prev);
  const MatrixXd d_gated = params.candidate.w.transpose() * da_h;
  const MatrixXd da_r = (d_gated.array() * hp * r * (1.0 - r)).matrix();

  detail::accumulate_gate(grads.candidate, da_h, cache.x, cache.v, cache.p, gated);
  detail::accumulate_gate(grads.update, da_z, cache.x, cache.v, cache.p, cache.h_prev);
  detail::accumulate_gate(grads.reset, da_r, cache.x, cache.v, cache.p, cache.h_prev);

  CellInputGrads in;
  in.dh_prev = (g * (1.0 - z)).matrix() + d_gated.cwiseProduct(cache.r);
  in.dh_prev.noalias() += params.update.w.transpose() * da_z;
  in.dh_prev.noalias() += params.reset.w.transpose() * da_r;

  auto input_grad = [&](auto member) {
    MatrixXd d = (params.candidate.*member).transpose() * da_h;
    d.noalias() += (params.update.*member).transpose() * da_z;
    d.noalias() += (params.reset.*member).transpose() * da_r;
    return d;
  };
  in.dx = input_grad(&GateParams::ux);
  in.dv = input_grad(&GateParams::uv);
  in.dp = input_grad(&GateParams::up);
  return in;
}

// ---------------------------------------------------------------------------
// Linear head

inline MatrixXd linear_forward(const LinearParams& params, const MatrixXd& h) {
  if (h.rows() != params.w.cols())
    throw ShapeError("linear_forward: input has " + std::to_string(h.rows()) + " rows, expected " +
                     std::to_string(params.w.cols()));
  MatrixXd out = params.w * h;
  out.colwise() += params.b;
  return out;
}

/// Adds dW, db into `grads` and returns dh.
inline MatrixXd linear_backward(const LinearParams& params, const MatrixXd& h, const MatrixXd& dout,
                                LinearParams& grads) {
  if (h.rows() != params.w.cols() || dout.rows() != params.w.rows() || dout.cols() != h.cols())
    throw ShapeError("linear_backward: shape mismatch");
  grads.w.noalias() += dout * h.transpose();
  grads.b += dout.rowwise().sum();
  return params.w.transpose() * dout;
}

// ---------------------------------------------------------------------------
// Dropout

struct DropoutResult {
  MatrixXd out;
  MatrixXd mask;  // entries are 0 or 1/(1-rate); out == h o mask
};

/// Inverted dropout. Identity (mask of ones) when not training or rate == 0.
inline DropoutResult dropout(const MatrixXd& h, double rate, std::mt19937_64& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) throw InvalidInput("dropout: rate must lie in [0, 1)");
  DropoutResult res;
  if (!training || rate == 0.0) {
    res.out = h;
    res.mask = MatrixXd::Ones(h.rows(), h.cols());
    return res;
  }
  const double keep_scale = 1.0 / (1.0 - rate);
  std::bernoulli_distribution drop(rate);
  res.mask.resize(h.rows(), h.cols());
  for (Eigen::Index c = 0; c < h.cols(); ++c)
    for (Eigen::Index r = 0; r < h.rows(); ++r) res.mask(r, c) = drop(rng) ? 0.0 : keep_scale;
  res.out = h.cwiseProduct(res.mask);
  return res;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  ModelParams first_moment;
  ModelParams second_moment;
  long step = 0;

  static AdamState for_params(const ModelParams& p) { return {zeros_like(p), zeros_like(p), 0}; }
};

/// Bias-corrected Adam update of one tensor at 1-based step `step`.
template <class Param, class Grad, class Moment>
void adam_update(Param& param, const Grad& grad, Moment& m, Moment& v, long step, double lr, const AdamConfig& cfg) {
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.epsilon);
}

/// One Adam step over every tensor. Throws TrainingDivergence (naming the step
/// about to be taken) if any gradient entry is non-finite; params are then untouched.
inline void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr,
                      const AdamConfig& cfg = {}) {
  visit_tensors(
      [&](const std::string& name, const auto& g) {
        if (!g.allFinite()) throw TrainingDivergence("non-finite gradient in " + name, state.step + 1);
      },
      grads);
  ++state.step;
  visit_tensors([&](const std::string&, auto& p, const auto& g, auto& m,
                    auto& v) { adam_update(p, g, m, v, state.step, lr, cfg); },
                params, grads, state.first_moment, state.second_moment);
}

}  // namespace pvred::net
