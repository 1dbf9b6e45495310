#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pvred/data.hpp"
#include "pvred/error.hpp"
#include "pvred/model.hpp"
#include "pvred/net.hpp"
#include "pvred/textio.hpp"

namespace pvred::train {

struct TrainConfig {
  model::ModelConfig model;
  long iterations = 2000;
  long batch_size = 16;
  double learning_rate = 3e-3;  // desk scale; large models train better near 1e-4
  double clip_norm = 5.0;  // global L2; <= 0 disables
  std::uint64_t seed = 7;
  net::AdamConfig adam;
};

struct TrainResult {
  net::ModelParams params;
  std::vector<double> loss_history;  // one entry per iteration, pre-update batch loss
};

/// Called after every iteration with the 1-based iteration and its loss.
using Observer = std::function<void(long, double)>;

/// Draws a batch: each clip picks a sequence uniformly, then a uniform start.
inline model::ClipBatch sample_batch(std::span<const data::MotionSequence> dataset, long observed, long predicted,
                                     long batch_size, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);
  std::vector<Eigen::MatrixXd> xs, ys;
  xs.reserve(batch_size);
  ys.reserve(batch_size);
  for (long b = 0; b < batch_size; ++b) {
    auto clip = data::sample_clip(dataset[pick(rng)], observed, predicted, rng);
    xs.push_back(std::move(clip.observed));
    ys.push_back(std::move(clip.target));
  }
  return model::make_batch(xs, ys);
}

/// sample -> forward -> loss -> backward -> clip -> Adam, `iterations` times.
/// Deterministic for a fixed config. Throws TrainingDivergence naming the
/// iteration at the first non-finite loss or gradient.
inline TrainResult train(net::ModelParams params, std::span<const data::MotionSequence> dataset,
                         const TrainConfig& cfg, const Observer& observer = {}) {
  cfg.model.validate();
  if (cfg.iterations < 0 || cfg.batch_size < 1 || !(cfg.learning_rate > 0.0))
    throw InvalidInput("train: need iterations >= 0, batch >= 1 and a positive learning rate");
  TrainResult result{std::move(params), {}};
  if (cfg.iterations == 0) return result;
  if (dataset.empty()) throw InvalidInput("train: empty dataset");
  for (const auto& seq : dataset) {
    if (seq.channels() != cfg.model.pose_dim)
      throw ShapeError("train: sequence has " + std::to_string(seq.channels()) + " channels, model expects " +
                       std::to_string(cfg.model.pose_dim));
    if (seq.length() < cfg.model.observed + cfg.model.predicted)
      throw InsufficientLength("train: a sequence is shorter than n + m frames");
    if (!seq.frames.allFinite()) throw InvalidInput("train: a sequence contains non-finite values");
  }

  std::seed_seq seq{cfg.seed, std::uint64_t{0x5eed}};
  std::mt19937_64 rng(seq);
  net::AdamState adam = net::AdamState::for_params(result.params);
  result.loss_history.reserve(cfg.iterations);

  for (long it = 1; it <= cfg.iterations; ++it) {
    const auto batch = sample_batch(dataset, cfg.model.observed, cfg.model.predicted, cfg.batch_size, rng);
    model::LossAndGradient step;
    try {
      step = model::loss_and_gradient(result.params, batch, cfg.model, &rng);
    } catch (const InvalidInput&) {
      // data and config are validated above, so this is a blown-up prediction
      throw TrainingDivergence("non-finite prediction", it);
    }
    if (!std::isfinite(step.loss)) throw TrainingDivergence("non-finite loss", it);
    net::clip_global_norm(step.grads, cfg.clip_norm);
    try {
      net::adam_step(result.params, step.grads, adam, cfg.learning_rate, cfg.adam);
    } catch (const TrainingDivergence&) {
      throw TrainingDivergence("non-finite gradient", it);
    }
    result.loss_history.push_back(step.loss);
    if (observer) observer(it, step.loss);
  }
  return result;
}

/// `iteration,loss` CSV.
inline std::string format_loss_csv(std::span<const double> history) {
  std::string out = "iteration,loss\n";
  for (std::size_t i = 0; i < history.size(); ++i)
    out += std::to_string(i + 1) + "," + textio::format_double(history[i]) + "\n";
  return out;
}

/// Trailing moving average; the first window-1 entries average what is available.
inline std::vector<double> smooth(std::span<const double> values, std::size_t window) {
  std::vector<double> out(values.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    sum += values[i];
    if (i >= window) sum -= values[i - window];
    out[i] = sum / static_cast<double>(std::min(i + 1, window));
  }
  return out;
}

}  // namespace pvred::train
