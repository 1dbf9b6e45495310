#pragma once

// Finite-difference verification of every hand-written gradient: the QT
// Jacobian, the PV-GRU cell, the linear head, and the whole unrolled model.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pvred/model.hpp"
#include "pvred/net.hpp"
#include "pvred/rotmath.hpp"
#include "pvred/textio.hpp"

namespace pvred::gradcheck {

inline constexpr double kStep = 1e-6;
/// Denominator floor for relative errors, so entries near zero are judged absolutely.
inline constexpr double kRelativeFloor = 1e-3;

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kRelativeFloor});
}

struct CheckResult {
  std::string name;
  double max_error = 0.0;
  double tolerance = 0.0;
  std::string worst;  // where the maximum was attained

  bool passed() const { return max_error < tolerance; }
};

struct Report {
  std::vector<CheckResult> checks;

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed(); });
  }

  std::string format() const {
    std::ostringstream out;
    for (const auto& c : checks)
      out << (c.passed() ? "PASS " : "FAIL ") << c.name << " max_rel_error=" << textio::format_double(c.max_error)
          << " tol=" << textio::format_double(c.tolerance) << (c.worst.empty() ? "" : " worst=" + c.worst) << "\n";
    return out.str();
  }
};

namespace detail {

inline void note(CheckResult& r, double err, const std::string& where) {
  if (err > r.max_error || !std::isfinite(err)) {
    r.max_error = std::isfinite(err) ? err : std::numeric_limits<double>::infinity();
    r.worst = where;
  }
}

/// Central difference of f() with respect to the scalar x, restoring x.
template <class F>
double central_difference(double& x, F&& f, double step = kStep) {
  const double saved = x;
  x = saved + step;
  const double up = f();
  x = saved - step;
  const double down = f();
  x = saved;
  return (up - down) / (2.0 * step);
}

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, double scale, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = u(rng);
  return m;
}

inline Eigen::Vector3d random_direction(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Vector3d d;
  do {
    d = Eigen::Vector3d(n(rng), n(rng), n(rng));
  } while (d.norm() < 1e-3);
  return d.normalized();
}

}  // namespace detail

using JacobianFn = std::function<rot::QtJacobian(const rot::AxisAngle&)>;

/// The top row as typeset without the -1/2 factor; exists so the check can be
/// shown to catch a wrong Jacobian.
inline rot::QtJacobian corrupted_qt_jacobian(const rot::AxisAngle& e) {
  rot::QtJacobian j = rot::expmap_to_quat_jacobian(e);
  j.row(0) *= -2.0;
  return j;
}

/// Analytic vs central differences on `samples` exponential maps: one each at
/// norms 1e-7, 1e-3, 1 and pi, the rest with norm uniform in [1e-3, pi].
inline CheckResult check_qt_jacobian(std::uint64_t seed, int samples, double tol,
                                     const JacobianFn& jacobian = rot::expmap_to_quat_jacobian) {
  CheckResult res{"qt_jacobian", 0.0, tol, {}};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> norm_dist(1e-3, std::numbers::pi);
  const double fixed[] = {1e-7, 1e-3, 1.0, std::numbers::pi};
  for (int s = 0; s < samples; ++s) {
    const double norm = s < 4 ? fixed[s] : norm_dist(rng);
    rot::AxisAngle e = norm * detail::random_direction(rng);
    const rot::QtJacobian analytic = jacobian(e);
    for (int col = 0; col < 3; ++col) {
      const double saved = e(col);
      e(col) = saved + kStep;
      const rot::Quaternion up = rot::expmap_to_quat(e);
      e(col) = saved - kStep;
      const rot::Quaternion down = rot::expmap_to_quat(e);
      e(col) = saved;
      const rot::Quaternion fd = (up - down) / (2.0 * kStep);
      for (int row = 0; row < 4; ++row)
        detail::note(res, relative_error(analytic(row, col), fd(row)),
                     "sample " + std::to_string(s) + " (" + std::to_string(row) + "," + std::to_string(col) + ")");
    }
  }
  return res;
}

/// Cell gradients on `configs` random small cells (D <= 4, H <= 5, batch 2)
/// under the scalar loss sum(weights o h).
inline CheckResult check_cell(std::uint64_t seed, int configs, double tol) {
  CheckResult res{"pvgru_cell", 0.0, tol, {}};
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> dim(1, 4), hid(1, 5), emb(1, 3);
  for (int cfg = 0; cfg < configs; ++cfg) {
    const int d = dim(rng), h = hid(rng), dp = emb(rng), batch = 2;
    net::ModelParams mp = net::init_params(d, dp, h, rng());
    net::visit_tensors([&](const std::string&, auto& t) { t = detail::random_matrix(t.rows(), t.cols(), 0.8, rng); },
                       mp);
    net::PvGruParams& cell = mp.cell;
    Eigen::MatrixXd x = detail::random_matrix(d, batch, 1.0, rng);
    Eigen::MatrixXd v = detail::random_matrix(d, batch, 1.0, rng);
    Eigen::MatrixXd p = detail::random_matrix(dp, batch, 1.0, rng);
    Eigen::MatrixXd hp = detail::random_matrix(h, batch, 0.9, rng);
    const Eigen::MatrixXd weights = detail::random_matrix(h, batch, 1.0, rng);

    auto loss = [&] { return net::pvgru_forward(cell, x, v, p, hp).h.cwiseProduct(weights).sum(); };
    net::ModelParams grads = net::zeros_like(mp);
    const auto in = net::pvgru_backward(cell, net::pvgru_forward(cell, x, v, p, hp), weights, grads.cell);

    const std::string tag = "config " + std::to_string(cfg) + " ";
    net::visit_tensors(
        [&](const std::string& name, auto& t, const auto& g) {
          if (name.rfind("cell.", 0) != 0) return;
          for (Eigen::Index i = 0; i < t.size(); ++i)
            detail::note(res, relative_error(g(i), detail::central_difference(t(i), loss)), tag + name);
        },
        mp, grads);
    auto check_input = [&](Eigen::MatrixXd& input, const Eigen::MatrixXd& g, const char* name) {
      for (Eigen::Index i = 0; i < input.size(); ++i)
        detail::note(res, relative_error(g(i), detail::central_difference(input(i), loss)), tag + name);
    };
    check_input(x, in.dx, "dx");
    check_input(v, in.dv, "dv");
    check_input(p, in.dp, "dp");
    check_input(hp, in.dh_prev, "dh_prev");
  }
  return res;
}

inline CheckResult check_linear(std::uint64_t seed, double tol) {
  CheckResult res{"linear", 0.0, tol, {}};
  std::mt19937_64 rng(seed);
  net::LinearParams lp{detail::random_matrix(3, 5, 1.0, rng), detail::random_matrix(3, 1, 1.0, rng)};
  Eigen::MatrixXd h = detail::random_matrix(5, 2, 1.0, rng);
  const Eigen::MatrixXd weights = detail::random_matrix(3, 2, 1.0, rng);
  auto loss = [&] { return net::linear_forward(lp, h).cwiseProduct(weights).sum(); };
  net::LinearParams grads{Eigen::MatrixXd::Zero(3, 5), Eigen::VectorXd::Zero(3)};
  const Eigen::MatrixXd dh = net::linear_backward(lp, h, weights, grads);
  for (Eigen::Index i = 0; i < lp.w.size(); ++i)
    detail::note(res, relative_error(grads.w(i), detail::central_difference(lp.w(i), loss)), "w");
  for (Eigen::Index i = 0; i < lp.b.size(); ++i)
    detail::note(res, relative_error(grads.b(i), detail::central_difference(lp.b(i), loss)), "b");
  for (Eigen::Index i = 0; i < h.size(); ++i)
    detail::note(res, relative_error(dh(i), detail::central_difference(h(i), loss)), "h");
  return res;
}

/// The tiny model (D=3, H=4, n=4, m=2, batch 2, dropout 0.2 with masks fixed by
/// reseeding) under one variant/loss combination; every parameter entry is perturbed.
inline CheckResult check_end_to_end(std::uint64_t seed, model::Variant variant, model::LossKind loss_kind,
                                    double tol) {
  model::ModelConfig cfg;
  cfg.pose_dim = 3;
  cfg.hidden = 4;
  cfg.observed = 4;
  cfg.predicted = 2;
  cfg.variant = variant;
  cfg.loss = loss_kind;
  cfg.dropout = 0.2;
  CheckResult res{"end_to_end_" + std::string(model::to_string(variant)) + "_" + std::string(model::to_string(loss_kind)),
                  0.0, tol, {}};

  std::mt19937_64 rng(seed);
  net::ModelParams params = model::init_model(cfg, rng());
  net::visit_tensors([&](const std::string&, auto& t) { t = detail::random_matrix(t.rows(), t.cols(), 0.6, rng); },
                     params);
  std::vector<Eigen::MatrixXd> xs, ys;
  for (int b = 0; b < 2; ++b) {
    xs.push_back(detail::random_matrix(cfg.observed, cfg.pose_dim, 1.0, rng));
    ys.push_back(detail::random_matrix(cfg.predicted, cfg.pose_dim, 1.0, rng));
  }
  const model::ClipBatch batch = model::make_batch(xs, ys);
  const std::uint64_t dropout_seed = rng();

  auto loss = [&] {
    std::mt19937_64 drop(dropout_seed);
    return model::forward(params, batch, cfg, &drop).loss.value;
  };
  std::mt19937_64 drop(dropout_seed);
  const net::ModelParams grads = model::loss_and_gradient(params, batch, cfg, &drop).grads;
  net::visit_tensors(
      [&](const std::string& name, auto& t, const auto& g) {
        for (Eigen::Index i = 0; i < t.size(); ++i)
          detail::note(res, relative_error(g(i), detail::central_difference(t(i), loss)), name);
      },
      params, grads);
  return res;
}

struct Options {
  std::uint64_t seed = 1;
  double end_to_end_tol = 1e-4;
  double unit_tol = 1e-6;
  bool corrupt_jacobian = false;
};

inline Report run_all(const Options& opt) {
  Report report;
  report.checks.push_back(check_qt_jacobian(opt.seed, 1000, opt.unit_tol,
                                            opt.corrupt_jacobian ? JacobianFn(corrupted_qt_jacobian)
                                                                 : JacobianFn(rot::expmap_to_quat_jacobian)));
  report.checks.push_back(check_cell(opt.seed, 20, opt.unit_tol));
  report.checks.push_back(check_linear(opt.seed, opt.unit_tol));
  for (auto variant : {model::Variant::kPvred, model::Variant::kRed})
    for (auto loss : {model::LossKind::kQuatL1, model::LossKind::kEulerMse})
      report.checks.push_back(check_end_to_end(opt.seed, variant, loss, opt.end_to_end_tol));
  return report;
}

}  // namespace pvred::gradcheck
