#pragma once

// Evaluation protocol: Euler-angle error at fixed horizons, averaged over
// deterministically sampled seed clips, plus the zero-velocity and
// moving-average reference predictors.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pvred/data.hpp"
#include "pvred/error.hpp"
#include "pvred/rotmath.hpp"
#include "pvred/textio.hpp"

namespace pvred::eval {

using Eigen::MatrixXd;

/// Maps (observed n x D, frames m) to an m x D prediction.
using Predictor = std::function<MatrixXd(const MatrixXd&, long)>;

/// Repeats the last observed frame.
inline MatrixXd zero_velocity_predict(const MatrixXd& observed, long frames) {
  if (observed.rows() < 1) throw InvalidInput("zero_velocity_predict: no observed frames");
  return observed.row(observed.rows() - 1).replicate(frames, 1);
}

/// Each next frame is the mean of the previous `window` frames, observed or
/// already predicted.
inline MatrixXd moving_average_predict(const MatrixXd& observed, long frames, long window = 2) {
  if (window < 1) throw InvalidInput("moving_average_predict: window must be >= 1");
  if (observed.rows() < window)
    throw InvalidInput("moving_average_predict: need at least " + std::to_string(window) + " observed frames");
  MatrixXd history(window + frames, observed.cols());
  history.topRows(window) = observed.bottomRows(window);
  for (long j = 0; j < frames; ++j) history.row(window + j) = history.middleRows(j, window).colwise().mean();
  return history.bottomRows(frames);
}

/// 1-based frame index of a horizon: ceil(ms * fps / 1000).
inline long horizon_frame(double ms, double fps) {
  // the slack absorbs products like 0.08 * 25 landing just above an integer
  return static_cast<long>(std::ceil(ms * fps / 1000.0 - 1e-9));
}

struct HorizonTable {
  std::vector<double> horizons_ms;
  std::vector<double> errors;  // radians, same order
  long clips = 0;

  bool operator==(const HorizonTable&) const = default;
};

/// Channels where mask[c] is false are left out; an empty mask keeps all.
using ChannelMask = std::vector<bool>;

/// Euclidean distance between Euler-angle versions of predicted and true
/// frames at each horizon. Per-channel differences are wrapped to (-pi, pi].
inline HorizonTable euler_error(const MatrixXd& pred, const MatrixXd& truth, std::span<const double> horizons_ms,
                                double fps, const ChannelMask& mask = {}) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) throw ShapeError("euler_error: shape mismatch");
  if (!mask.empty() && static_cast<Eigen::Index>(mask.size()) != pred.cols())
    throw ShapeError("euler_error: channel mask length differs from pose dimension");
  HorizonTable table;
  table.clips = 1;
  for (double ms : horizons_ms) {
    const long frame = horizon_frame(ms, fps);
    if (frame < 1 || frame > pred.rows())
      throw InvalidInput("horizon " + textio::format_double(ms) + " ms maps to frame " + std::to_string(frame) +
                         ", outside the " + std::to_string(pred.rows()) + " predicted frames");
    const Eigen::VectorXd a = rot::pose_to_euler(pred.row(frame - 1).transpose());
    const Eigen::VectorXd b = rot::pose_to_euler(truth.row(frame - 1).transpose());
    double sq = 0.0;
    for (Eigen::Index c = 0; c < a.size(); ++c) {
      if (!mask.empty() && !mask[static_cast<std::size_t>(c)]) continue;
      const double d = rot::wrap_angle(a(c) - b(c));
      sq += d * d;
    }
    table.horizons_ms.push_back(ms);
    table.errors.push_back(std::sqrt(sq));
  }
  return table;
}

/// Clip-weighted mean of tables over the same horizons.
inline HorizonTable average_tables(std::span<const HorizonTable> tables) {
  if (tables.empty()) throw InvalidInput("average_tables: nothing to average");
  HorizonTable out;
  out.horizons_ms = tables.front().horizons_ms;
  out.errors.assign(out.horizons_ms.size(), 0.0);
  for (const auto& t : tables) {
    if (t.horizons_ms != out.horizons_ms) throw ShapeError("average_tables: horizon sets differ");
    for (std::size_t i = 0; i < t.errors.size(); ++i) out.errors[i] += t.errors[i] * static_cast<double>(t.clips);
    out.clips += t.clips;
  }
  for (double& e : out.errors) e /= static_cast<double>(out.clips);
  return out;
}

struct EvalOptions {
  long observed = 50;
  long predicted = 25;
  std::vector<double> horizons_ms{80, 160, 320, 400, 560, 1000};
  long num_clips = 64;
  std::uint64_t seed = 7;
  ChannelMask mask;
};

/// Seed clip i comes from sequence i mod S at a start drawn from an rng seeded
/// by `seed`; the same options always pick the same clips.
inline std::vector<data::Clip> seed_clips(std::span<const data::MotionSequence> sequences, const EvalOptions& opt) {
  if (sequences.empty()) throw InvalidInput("evaluate: no test sequences");
  if (opt.num_clips < 1) throw InvalidInput("evaluate: need at least one clip");
  std::mt19937_64 rng(opt.seed);
  std::vector<data::Clip> clips;
  clips.reserve(opt.num_clips);
  for (long i = 0; i < opt.num_clips; ++i)
    clips.push_back(data::sample_clip(sequences[static_cast<std::size_t>(i) % sequences.size()], opt.observed,
                                      opt.predicted, rng));
  return clips;
}

/// Per-clip tables, in clip order.
inline std::vector<HorizonTable> evaluate_clips(const Predictor& predictor,
                                                std::span<const data::MotionSequence> sequences,
                                                const EvalOptions& opt) {
  const double fps = sequences.empty() ? 0.0 : sequences.front().fps;
  std::vector<HorizonTable> tables;
  for (const auto& clip : seed_clips(sequences, opt)) {
    const MatrixXd pred = predictor(clip.observed, opt.predicted);
    if (pred.rows() != opt.predicted || pred.cols() != clip.target.cols())
      throw ShapeError("evaluate: predictor returned a wrongly shaped prediction");
    tables.push_back(euler_error(pred, clip.target, opt.horizons_ms, fps, opt.mask));
  }
  return tables;
}

inline HorizonTable evaluate(const Predictor& predictor, std::span<const data::MotionSequence> sequences,
                             const EvalOptions& opt) {
  return average_tables(evaluate_clips(predictor, sequences, opt));
}

// ---------------------------------------------------------------------------
// CSV: horizon_ms,mean_error,clips

inline constexpr std::string_view kHorizonHeader = "horizon_ms,mean_error,clips";

inline std::string format_horizon_csv(const HorizonTable& t) {
  std::string out(kHorizonHeader);
  out += '\n';
  for (std::size_t i = 0; i < t.horizons_ms.size(); ++i)
    out += textio::format_double(t.horizons_ms[i]) + "," + textio::format_double(t.errors[i]) + "," +
           std::to_string(t.clips) + "\n";
  return out;
}

inline HorizonTable parse_horizon_csv(std::string_view text) {
  const auto lines = textio::lines(text);
  if (lines.empty() || lines.front() != kHorizonHeader)
    throw ParseError("expected header '" + std::string(kHorizonHeader) + "'", 1);
  HorizonTable t;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = textio::split(lines[i], ',');
    if (f.size() != 3) throw ParseError("expected 3 fields", i + 1);
    t.horizons_ms.push_back(textio::parse_double(f[0], i + 1));
    t.errors.push_back(textio::parse_double(f[1], i + 1));
    const long clips = textio::parse_long(f[2], i + 1);
    if (i > 1 && clips != t.clips) throw ParseError("clip count differs between rows", i + 1);
    t.clips = clips;
  }
  return t;
}

}  // namespace pvred::eval
