#pragma once

// Encoder-decoder wiring. The encoder runs the shared PV-GRU over the observed
// poses; the decoder predicts a velocity from each hidden state, adds it to the
// previous pose, and feeds both back into the cell. Includes both training
// losses and exact backpropagation through time over the whole unrolled graph.
//
// Batched tensors are "steps": one D x B matrix per frame, one clip per column.

#include <cmath>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "pvred/error.hpp"
#include "pvred/net.hpp"
#include "pvred/posembed.hpp"
#include "pvred/rotmath.hpp"

namespace pvred::model {

using Eigen::Index;
using Eigen::MatrixXd;
using Steps = std::vector<MatrixXd>;
using net::ModelParams;
using net::StepCache;

enum class Variant { kPvred, kRed };
/// kQuatL1: mean L1 distance of QT-transformed poses. kEulerMse: mean per-frame
/// L2 distance of the raw exponential-map poses.
enum class LossKind { kQuatL1, kEulerMse };

inline std::string_view to_string(Variant v) { return v == Variant::kPvred ? "pvred" : "red"; }
inline std::string_view to_string(LossKind k) { return k == LossKind::kQuatL1 ? "quat_l1" : "euler_mse"; }

inline Variant parse_variant(std::string_view s) {
  if (s == "pvred") return Variant::kPvred;
  if (s == "red") return Variant::kRed;
  throw InvalidInput("unknown variant '" + std::string(s) + "' (expected pvred or red)");
}

inline LossKind parse_loss_kind(std::string_view s) {
  if (s == "quat_l1") return LossKind::kQuatL1;
  if (s == "euler_mse") return LossKind::kEulerMse;
  throw InvalidInput("unknown loss '" + std::string(s) + "' (expected quat_l1 or euler_mse)");
}

struct ModelConfig {
  Index pose_dim = 12;
  Index hidden = 64;
  Index embed_dim = 0;  // 0: same as pose_dim
  long observed = 50;   // n
  long predicted = 25;  // m
  Variant variant = Variant::kPvred;
  bool use_velocity = true;
  bool use_position = true;
  LossKind loss = LossKind::kQuatL1;
  bool use_bias = true;
  double dropout = 0.2;
  double fps = 25.0;

  Index position_dim() const { return embed_dim > 0 ? embed_dim : pose_dim; }
  bool use_qt() const { return loss == LossKind::kQuatL1; }
  /// RED feeds poses only, whatever the toggles say.
  bool feeds_velocity() const { return variant == Variant::kPvred && use_velocity; }
  bool feeds_position() const { return variant == Variant::kPvred && use_position; }

  void validate() const {
    if (pose_dim < 1 || hidden < 1 || embed_dim < 0) throw InvalidInput("model config: dimensions must be positive");
    if (observed < 2) throw InvalidInput("model config: need n >= 2 observed frames");
    if (predicted < 1) throw InvalidInput("model config: need m >= 1 predicted frames");
    if (use_qt() && pose_dim % 3 != 0) throw InvalidInput("model config: quaternion loss needs D divisible by 3");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw InvalidInput("model config: dropout must lie in [0, 1)");
    if (!(fps > 0.0)) throw InvalidInput("model config: fps must be positive");
  }

  bool operator==(const ModelConfig&) const = default;
};

/// Ablation toggles {Vel, Pos, QT}; each of the six variants keeps one or two of them.
struct Ablation {
  bool velocity;
  bool position;
  bool qt;
};

/// Applies an ablation to a PVRED config.
inline ModelConfig with_ablation(ModelConfig cfg, Ablation a) {
  cfg.variant = Variant::kPvred;
  cfg.use_velocity = a.velocity;
  cfg.use_position = a.position;
  cfg.loss = a.qt ? LossKind::kQuatL1 : LossKind::kEulerMse;
  return cfg;
}

inline ModelParams init_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  return net::init_params(cfg.pose_dim, cfg.position_dim(), cfg.hidden, seed);
}

// ---------------------------------------------------------------------------
// Layout helpers

/// Clips (rows are frames, all the same shape) -> one D x B matrix per frame.
inline Steps clips_to_steps(std::span<const MatrixXd> clips) {
  if (clips.empty()) return {};
  const Index frames = clips.front().rows(), dim = clips.front().cols();
  Steps steps(static_cast<std::size_t>(frames), MatrixXd(dim, static_cast<Index>(clips.size())));
  for (std::size_t b = 0; b < clips.size(); ++b) {
    if (clips[b].rows() != frames || clips[b].cols() != dim) throw ShapeError("clips_to_steps: clips differ in shape");
    for (Index t = 0; t < frames; ++t) steps[static_cast<std::size_t>(t)].col(static_cast<Index>(b)) = clips[b].row(t).transpose();
  }
  return steps;
}

inline std::vector<MatrixXd> steps_to_clips(const Steps& steps) {
  if (steps.empty()) return {};
  const Index batch = steps.front().cols(), dim = steps.front().rows();
  std::vector<MatrixXd> clips(static_cast<std::size_t>(batch), MatrixXd(static_cast<Index>(steps.size()), dim));
  for (std::size_t t = 0; t < steps.size(); ++t)
    for (Index b = 0; b < batch; ++b) clips[static_cast<std::size_t>(b)].row(static_cast<Index>(t)) = steps[t].col(b).transpose();
  return clips;
}

/// v_t = x_t - x_{t-1}; the first velocity is zero.
inline MatrixXd compute_velocities(const MatrixXd& poses) {
  MatrixXd v = MatrixXd::Zero(poses.rows(), poses.cols());
  if (poses.rows() > 1) v.bottomRows(poses.rows() - 1) = poses.bottomRows(poses.rows() - 1) - poses.topRows(poses.rows() - 1);
  return v;
}

// ---------------------------------------------------------------------------
// Forward

struct EncodeResult {
  MatrixXd h;                     // h_n, H x B
  std::vector<StepCache> caches;  // one per observed frame
};

/// Runs the cell over observed frames t = 1..n starting from h_0 = 0.
inline EncodeResult encode(const ModelParams& params, const Steps& observed, const ModelConfig& cfg) {
  if (observed.empty()) throw InvalidInput("encode: no observed frames");
  const Index batch = observed.front().cols();
  const Index dim = params.cell.pose_dim();
  for (const auto& x : observed)
    if (x.rows() != dim || x.cols() != batch) throw ShapeError("encode: observed frame shape mismatch");
  const long n = static_cast<long>(observed.size());
  const MatrixXd zeros_v = MatrixXd::Zero(dim, batch);
  const MatrixXd zeros_p = MatrixXd::Zero(params.cell.embed_dim(), batch);
  const MatrixXd positions = cfg.feeds_position() ? posembed::position_table(1, n, params.cell.embed_dim()) : MatrixXd();

  EncodeResult res;
  res.h = MatrixXd::Zero(params.cell.hidden(), batch);
  res.caches.reserve(observed.size());
  for (long t = 0; t < n; ++t) {
    MatrixXd v = zeros_v;
    if (cfg.feeds_velocity() && t > 0) v = observed[t] - observed[t - 1];
    const MatrixXd p = cfg.feeds_position() ? MatrixXd(positions.col(t).replicate(1, batch)) : zeros_p;
    res.caches.push_back(net::pvgru_forward(params.cell, observed[t], v, p, res.h));
    res.h = res.caches.back().h;
  }
  return res;
}

struct DecodeOptions {
  long frames = 0;                   // 0: cfg.predicted
  bool training = false;             // enables dropout
  std::mt19937_64* rng = nullptr;    // required when training with dropout > 0
};

struct PredictionBatch {
  Steps poses;       // x^_{n+1} .. x^_{n+m}
  Steps velocities;  // v^_n .. v^_{n+m-1}; poses[j] = prev + velocities[j]
  std::vector<StepCache> caches;  // m - 1 decoder cells
  Steps head_inputs;              // dropout(h_{n+j})
  Steps masks;
};

/// Autoregressive decoding from the encoder state. Each step predicts a
/// velocity from the (dropped-out) hidden state, adds it to the previous pose,
/// and feeds pose, velocity and position p_{n+j} back into the shared cell.
inline PredictionBatch decode(const ModelParams& params, const MatrixXd& h_n, const MatrixXd& last_pose,
                              const ModelConfig& cfg, const DecodeOptions& opts = {}) {
  const long m = opts.frames > 0 ? opts.frames : cfg.predicted;
  if (m < 1) throw InvalidInput("decode: need at least one predicted frame");
  const Index batch = last_pose.cols();
  const Index dim = params.cell.pose_dim();
  if (last_pose.rows() != dim || h_n.rows() != params.cell.hidden() || h_n.cols() != batch)
    throw ShapeError("decode: initial state shape mismatch");
  const bool drop = opts.training && cfg.dropout > 0.0;
  if (drop && opts.rng == nullptr) throw InvalidInput("decode: training with dropout needs an rng");

  const MatrixXd zeros_v = MatrixXd::Zero(dim, batch);
  const MatrixXd zeros_p = MatrixXd::Zero(params.cell.embed_dim(), batch);
  const MatrixXd positions =
      cfg.feeds_position() && m > 1 ? posembed::position_table(cfg.observed + 1, m - 1, params.cell.embed_dim()) : MatrixXd();

  PredictionBatch out;
  out.poses.reserve(m);
  out.velocities.reserve(m);
  out.head_inputs.reserve(m);
  out.masks.reserve(m);
  out.caches.reserve(m - 1);

  MatrixXd h = h_n;
  const MatrixXd* prev = &last_pose;
  for (long j = 0; j < m; ++j) {
    if (drop) {
      auto d = net::dropout(h, cfg.dropout, *opts.rng, true);
      out.head_inputs.push_back(std::move(d.out));
      out.masks.push_back(std::move(d.mask));
    } else {
      out.head_inputs.push_back(h);
      out.masks.push_back(MatrixXd::Ones(h.rows(), h.cols()));
    }
    out.velocities.push_back(net::linear_forward(params.out, out.head_inputs.back()));
    out.poses.push_back(*prev + out.velocities.back());
    prev = &out.poses.back();
    if (j + 1 < m) {
      const MatrixXd& v = cfg.feeds_velocity() ? out.velocities.back() : zeros_v;
      const MatrixXd p = cfg.feeds_position() ? MatrixXd(positions.col(j).replicate(1, batch)) : zeros_p;
      out.caches.push_back(net::pvgru_forward(params.cell, out.poses.back(), v, p, h));
      h = out.caches.back().h;
    }
  }
  return out;
}

/// The residual RED baseline decoder: pose-only cell inputs,
/// x_{n+j} = x_{n+j-1} + W h_{n+j-1} + b.
inline PredictionBatch red_decode(const ModelParams& params, const MatrixXd& h_n, const MatrixXd& last_pose,
                                  ModelConfig cfg, const DecodeOptions& opts = {}) {
  cfg.variant = Variant::kRed;
  return decode(params, h_n, last_pose, cfg, opts);
}

/// Single-clip inference: observed is n x D, returns frames x D.
inline MatrixXd predict(const ModelParams& params, const MatrixXd& observed, const ModelConfig& cfg, long frames = 0) {
  const Steps steps = clips_to_steps(std::span<const MatrixXd>(&observed, 1));
  const EncodeResult enc = encode(params, steps, cfg);
  const PredictionBatch pred = decode(params, enc.h, steps.back(), cfg, {frames, false, nullptr});
  return steps_to_clips(pred.poses).front();
}

// ---------------------------------------------------------------------------
// Losses

struct LossValue {
  double value = 0.0;  // mean over clips of the per-clip loss
  Steps grad;          // d value / d predicted poses
};

namespace detail {

inline void require_same(const Steps& pred, const Steps& target) {
  if (pred.size() != target.size()) throw ShapeError("loss: prediction and target frame counts differ");
  for (std::size_t j = 0; j < pred.size(); ++j)
    if (pred[j].rows() != target[j].rows() || pred[j].cols() != target[j].cols())
      throw ShapeError("loss: prediction and target shapes differ");
}

inline double sign0(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace detail

/// (1/m) sum_j || g(y_j) - g(x^_j) ||_1 averaged over clips, g = QT layer.
/// The subgradient of |.| at 0 is taken as 0.
inline LossValue quat_l1_loss(const Steps& pred, const Steps& target) {
  detail::require_same(pred, target);
  LossValue res;
  if (pred.empty()) return res;
  const Index batch = pred.front().cols();
  const double scale = 1.0 / (static_cast<double>(pred.size()) * static_cast<double>(batch));
  res.grad.reserve(pred.size());
  for (std::size_t j = 0; j < pred.size(); ++j) {
    MatrixXd g(pred[j].rows(), batch);
    for (Index b = 0; b < batch; ++b) {
      const Eigen::VectorXd qp = rot::pose_qt(pred[j].col(b));
      const Eigen::VectorXd diff = qp - rot::pose_qt(target[j].col(b));
      res.value += scale * diff.lpNorm<1>();
      const Eigen::VectorXd upstream = diff.unaryExpr([&](double d) { return scale * detail::sign0(d); });
      g.col(b) = rot::pose_qt_backward(pred[j].col(b), upstream);
    }
    res.grad.push_back(std::move(g));
  }
  return res;
}

/// (1/m) sum_j || y_j - x^_j ||_2 averaged over clips. Gradient at a zero residual is 0.
inline LossValue mse_loss(const Steps& pred, const Steps& target) {
  detail::require_same(pred, target);
  LossValue res;
  if (pred.empty()) return res;
  const Index batch = pred.front().cols();
  const double scale = 1.0 / (static_cast<double>(pred.size()) * static_cast<double>(batch));
  res.grad.reserve(pred.size());
  for (std::size_t j = 0; j < pred.size(); ++j) {
    MatrixXd g = MatrixXd::Zero(pred[j].rows(), batch);
    for (Index b = 0; b < batch; ++b) {
      const Eigen::VectorXd diff = pred[j].col(b) - target[j].col(b);
      const double norm = diff.norm();
      res.value += scale * norm;
      if (norm > 0.0) g.col(b) = (scale / norm) * diff;
    }
    res.grad.push_back(std::move(g));
  }
  return res;
}

inline LossValue compute_loss(const Steps& pred, const Steps& target, LossKind kind) {
  return kind == LossKind::kQuatL1 ? quat_l1_loss(pred, target) : mse_loss(pred, target);
}

/// Per-clip quaternion L1 loss on m x D matrices.
inline double loss_quat_l1(const MatrixXd& pred, const MatrixXd& target) {
  return quat_l1_loss(clips_to_steps(std::span<const MatrixXd>(&pred, 1)),
                      clips_to_steps(std::span<const MatrixXd>(&target, 1)))
      .value;
}

/// Per-clip mean of frame-wise L2 distances on m x D matrices.
inline double loss_mse(const MatrixXd& pred, const MatrixXd& target) {
  return mse_loss(clips_to_steps(std::span<const MatrixXd>(&pred, 1)),
                  clips_to_steps(std::span<const MatrixXd>(&target, 1)))
      .value;
}

// ---------------------------------------------------------------------------
// Backward

/// Exact gradients of the loss with respect to every parameter, given
/// d loss / d predicted poses. Follows every path: the residual pose chain, the
/// fed-back poses and velocities, dropout masks, and the encoder.
inline ModelParams backward(const ModelParams& params, const EncodeResult& enc, const PredictionBatch& pred,
                            const Steps& pose_grads, const ModelConfig& cfg) {
  const std::size_t m = pred.poses.size();
  if (enc.caches.empty() || m == 0 || pred.velocities.size() != m || pred.head_inputs.size() != m ||
      pred.masks.size() != m || pred.caches.size() + 1 != m)
    throw StateError("backward: forward caches are missing or incomplete");
  if (pose_grads.size() != m) throw ShapeError("backward: need one pose gradient per predicted frame");

  ModelParams grads = net::zeros_like(params);
  MatrixXd grad_h = MatrixXd::Zero(enc.h.rows(), enc.h.cols());     // w.r.t. h_{n+j+1}
  MatrixXd grad_pose_next = MatrixXd::Zero(pose_grads[0].rows(), pose_grads[0].cols());  // w.r.t. x^_{n+j+2}

  for (std::size_t jj = m; jj-- > 0;) {
    MatrixXd grad_pose = pose_grads[jj] + grad_pose_next;
    MatrixXd grad_vel;
    MatrixXd grad_h_here;
    if (jj + 1 < m) {
      const auto in = net::pvgru_backward(params.cell, pred.caches[jj], grad_h, grads.cell);
      grad_pose += in.dx;
      grad_vel = grad_pose;
      if (cfg.feeds_velocity()) grad_vel += in.dv;
      grad_h_here = in.dh_prev;
    } else {
      grad_vel = grad_pose;
      grad_h_here = MatrixXd::Zero(grad_h.rows(), grad_h.cols());
    }
    const MatrixXd d_head = net::linear_backward(params.out, pred.head_inputs[jj], grad_vel, grads.out);
    grad_h_here += d_head.cwiseProduct(pred.masks[jj]);
    grad_pose_next = std::move(grad_pose);
    grad_h = std::move(grad_h_here);
  }

  for (std::size_t t = enc.caches.size(); t-- > 0;)
    grad_h = net::pvgru_backward(params.cell, enc.caches[t], grad_h, grads.cell).dh_prev;

  if (!cfg.use_bias) {
    grads.cell.update.b.setZero();
    grads.cell.reset.b.setZero();
    grads.cell.candidate.b.setZero();
    grads.out.b.setZero();
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Whole-batch convenience

struct ClipBatch {
  Steps observed;  // n frames
  Steps target;    // m frames
};

inline ClipBatch make_batch(std::span<const MatrixXd> observed, std::span<const MatrixXd> target) {
  return {clips_to_steps(observed), clips_to_steps(target)};
}

struct ForwardResult {
  EncodeResult enc;
  PredictionBatch pred;
  LossValue loss;
};

inline ForwardResult forward(const ModelParams& params, const ClipBatch& batch, const ModelConfig& cfg,
                             std::mt19937_64* dropout_rng = nullptr) {
  if (batch.observed.empty() || batch.target.empty()) throw InvalidInput("forward: empty clip batch");
  ForwardResult r;
  r.enc = encode(params, batch.observed, cfg);
  r.pred = decode(params, r.enc.h, batch.observed.back(), cfg,
                  {static_cast<long>(batch.target.size()), dropout_rng != nullptr, dropout_rng});
  r.loss = compute_loss(r.pred.poses, batch.target, cfg.loss);
  return r;
}

struct LossAndGradient {
  double loss = 0.0;
  ModelParams grads;
};

/// Forward plus backward. Passing an rng enables training-mode dropout.
inline LossAndGradient loss_and_gradient(const ModelParams& params, const ClipBatch& batch, const ModelConfig& cfg,
                                         std::mt19937_64* dropout_rng = nullptr) {
  const ForwardResult f = forward(params, batch, cfg, dropout_rng);
  return {f.loss.value, backward(params, f.enc, f.pred, f.loss.grad, cfg)};
}

}  // namespace pvred::model
