// Generates the default synthetic dataset, trains a short PVRED run in memory and
// compares it with the zero-velocity baseline at the standard horizons.

#include <iostream>
#include <span>

#include "pvred/pvred.hpp"

int main() {
  using namespace pvred;

  const data::SynthSpec spec;
  const auto sequences = data::generate_synthetic(spec);
  const std::span<const data::MotionSequence> all(sequences);
  const auto train_set = all.first(20);
  const auto test_set = all.last(4);

  train::TrainConfig cfg;
  cfg.model.pose_dim = spec.channels();
  cfg.iterations = 1000;
  auto result = train::train(model::init_model(cfg.model, cfg.seed), train_set, cfg);
  std::cout << "loss " << result.loss_history.front() << " -> " << result.loss_history.back() << "\n";

  const eval::EvalOptions opt;
  const auto ours = eval::evaluate(
      [&](const Eigen::MatrixXd& x, long m) { return model::predict(result.params, x, cfg.model, m); }, test_set, opt);
  const auto zero = eval::evaluate(eval::zero_velocity_predict, test_set, opt);
  std::cout << "horizon_ms  pvred    zero-velocity\n";
  for (std::size_t i = 0; i < ours.horizons_ms.size(); ++i)
    std::cout << ours.horizons_ms[i] << "\t    " << ours.errors[i] << "\t" << zero.errors[i] << "\n";
}
