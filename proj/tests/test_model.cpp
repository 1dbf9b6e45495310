#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pvred/eval.hpp"
#include "pvred/model.hpp"

namespace {

using namespace pvred;
using Eigen::MatrixXd;

model::ModelConfig tiny_config() {
  model::ModelConfig cfg;
  cfg.pose_dim = 3;
  cfg.hidden = 5;
  cfg.embed_dim = 4;
  cfg.observed = 6;
  cfg.predicted = 4;
  return cfg;
}

net::ModelParams random_model(const model::ModelConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  net::ModelParams p = model::init_model(cfg, rng());
  oracle::randomize(p, 0.5, rng);
  return p;
}

TEST(ModelConfig, Validation) {
  model::ModelConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.pose_dim = 4;
  EXPECT_THROW(cfg.validate(), InvalidInput);  // quaternion loss needs whole joints
  cfg.loss = model::LossKind::kEulerMse;
  EXPECT_NO_THROW(cfg.validate());
  cfg.dropout = 1.0;
  EXPECT_THROW(cfg.validate(), InvalidInput);
  cfg = {};
  cfg.observed = 1;
  EXPECT_THROW(cfg.validate(), InvalidInput);
  EXPECT_EQ(model::ModelConfig{}.position_dim(), 12);
}

TEST(ModelConfig, NamesRoundTrip) {
  for (auto v : {model::Variant::kPvred, model::Variant::kRed}) EXPECT_EQ(model::parse_variant(model::to_string(v)), v);
  for (auto k : {model::LossKind::kQuatL1, model::LossKind::kEulerMse})
    EXPECT_EQ(model::parse_loss_kind(model::to_string(k)), k);
  EXPECT_THROW(model::parse_variant("lstm"), InvalidInput);
  EXPECT_THROW(model::parse_loss_kind("l2"), InvalidInput);
}

TEST(Layout, StepsRoundTrip) {
  std::mt19937_64 rng(1);
  std::vector<MatrixXd> clips{oracle::random_matrix(5, 3, 1, rng), oracle::random_matrix(5, 3, 1, rng)};
  const auto steps = model::clips_to_steps(clips);
  ASSERT_EQ(steps.size(), 5u);
  EXPECT_EQ(steps[2].col(1), clips[1].row(2).transpose());
  EXPECT_EQ(model::steps_to_clips(steps), clips);
  clips.push_back(MatrixXd::Zero(4, 3));
  EXPECT_THROW(model::clips_to_steps(clips), ShapeError);
}

TEST(Layout, VelocitiesStartAtZero) {
  MatrixXd x(3, 2);
  x << 1, 2, 4, 3, 5, 3;
  MatrixXd expected(3, 2);
  expected << 0, 0, 3, 1, 1, 0;
  EXPECT_EQ(model::compute_velocities(x), expected);
}

TEST(Encode, ConstantZeroSequenceWithZeroModelStaysAtZero) {
  const auto cfg = tiny_config();
  const auto p = net::zeros_like(model::init_model(cfg, 1));
  const model::Steps obs(6, MatrixXd::Zero(3, 2));
  EXPECT_EQ(model::encode(p, obs, cfg).h, MatrixXd::Zero(5, 2));
}

TEST(Encode, SingleFrameEqualsOneCellStep) {
  const auto cfg = tiny_config();
  const auto p = random_model(cfg, 3);
  std::mt19937_64 rng(2);
  const MatrixXd x = oracle::random_matrix(3, 1, 1, rng);
  const auto enc = model::encode(p, {x}, cfg);
  const Eigen::VectorXd expected =
      oracle::pvgru_step(p.cell, x.col(0), Eigen::VectorXd::Zero(3), oracle::position(1, 4), Eigen::VectorXd::Zero(5));
  EXPECT_LT((enc.h.col(0) - expected).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_EQ(enc.caches.size(), 1u);
}

TEST(Encode, RejectsShapeMismatch) {
  const auto cfg = tiny_config();
  const auto p = random_model(cfg, 3);
  EXPECT_THROW(model::encode(p, {MatrixXd::Zero(3, 1), MatrixXd::Zero(4, 1)}, cfg), ShapeError);
  EXPECT_THROW(model::encode(p, {}, cfg), InvalidInput);
}

TEST(Predict, MatchesStraightLineRolloutForAllVariants) {
  std::mt19937_64 rng(77);
  for (auto [vel, pos, red] : {std::tuple{true, true, false}, std::tuple{true, false, false},
                               std::tuple{false, true, false}, std::tuple{false, false, false},
                               std::tuple{true, true, true}}) {
    auto cfg = tiny_config();
    cfg.use_velocity = vel;
    cfg.use_position = pos;
    if (red) cfg.variant = model::Variant::kRed;
    const auto p = random_model(cfg, rng());
    const MatrixXd obs = oracle::random_matrix(cfg.observed, 3, 1, rng);
    const auto ref = oracle::rollout(p, obs, cfg.predicted, vel, pos, red);
    EXPECT_LT((model::predict(p, obs, cfg) - ref.poses).cwiseAbs().maxCoeff(), 1e-12)
        << "vel=" << vel << " pos=" << pos << " red=" << red;
  }
}

TEST(Decode, ZeroHeadReproducesZeroVelocityBaseline) {
  const auto cfg = tiny_config();
  net::ModelParams p = random_model(cfg, 5);
  p.out.w.setZero();
  p.out.b.setZero();
  std::mt19937_64 rng(4);
  const MatrixXd obs = oracle::random_matrix(cfg.observed, 3, 1, rng);
  EXPECT_EQ(model::predict(p, obs, cfg, 30), eval::zero_velocity_predict(obs, 30));
}

TEST(Decode, SingleFrameIsLastPosePlusHead) {
  const auto cfg = tiny_config();
  const auto p = random_model(cfg, 6);
  std::mt19937_64 rng(6);
  const MatrixXd h = oracle::random_matrix(5, 2, 0.9, rng), x = oracle::random_matrix(3, 2, 1, rng);
  const auto out = model::decode(p, h, x, cfg, {1, false, nullptr});
  ASSERT_EQ(out.poses.size(), 1u);
  EXPECT_TRUE(out.caches.empty());
  const MatrixXd expected = x + MatrixXd((p.out.w * h).colwise() + p.out.b);
  EXPECT_LT((out.poses[0] - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Decode, EachPoseIsPreviousPlusItsVelocity) {
  const auto cfg = tiny_config();
  const auto p = random_model(cfg, 8);
  std::mt19937_64 rng(8);
  const MatrixXd h = oracle::random_matrix(5, 3, 0.9, rng), x = oracle::random_matrix(3, 3, 1, rng);
  std::mt19937_64 drop(1);
  for (const auto& opts : {model::DecodeOptions{12, false, nullptr}, model::DecodeOptions{12, true, &drop}}) {
    const auto out = model::decode(p, h, x, cfg, opts);
    ASSERT_EQ(out.poses.size(), 12u);
    EXPECT_EQ(out.caches.size(), 11u);
    EXPECT_EQ(out.poses[0], x + out.velocities[0]);
    for (std::size_t j = 1; j < out.poses.size(); ++j) EXPECT_EQ(out.poses[j], out.poses[j - 1] + out.velocities[j]);
  }
}

TEST(Decode, VariableLengthPrefixesAgree) {
  const auto cfg = tiny_config();
  const auto p = random_model(cfg, 9);
  std::mt19937_64 rng(9);
  const MatrixXd obs = oracle::random_matrix(cfg.observed, 3, 1, rng);
  const MatrixXd longer = model::predict(p, obs, cfg, 100);
  EXPECT_EQ(longer.rows(), 100);
  EXPECT_TRUE(longer.allFinite());
  EXPECT_EQ(longer.topRows(cfg.predicted), model::predict(p, obs, cfg));
}

TEST(Decode, TrainingDropoutNeedsRng) {
  const auto cfg = tiny_config();
  const auto p = random_model(cfg, 9);
  EXPECT_THROW(model::decode(p, MatrixXd::Zero(5, 1), MatrixXd::Zero(3, 1), cfg, {0, true, nullptr}), InvalidInput);
  EXPECT_THROW(model::decode(p, MatrixXd::Zero(4, 1), MatrixXd::Zero(3, 1), cfg), ShapeError);
}

TEST(Decode, RedDecodeIgnoresVelocityAndPositionWeights) {
  const auto cfg = tiny_config();
  net::ModelParams a = random_model(cfg, 10);
  net::ModelParams b = a;
  std::mt19937_64 rng(10);
  for (auto* g : {&b.cell.update, &b.cell.reset, &b.cell.candidate}) {
    g->uv = oracle::random_matrix(g->uv.rows(), g->uv.cols(), 3, rng);
    g->up = oracle::random_matrix(g->up.rows(), g->up.cols(), 3, rng);
  }
  const MatrixXd h = oracle::random_matrix(5, 1, 0.9, rng), x = oracle::random_matrix(3, 1, 1, rng);
  const auto ra = model::red_decode(a, h, x, cfg), rb = model::red_decode(b, h, x, cfg);
  for (std::size_t j = 0; j < ra.poses.size(); ++j) EXPECT_EQ(ra.poses[j], rb.poses[j]);
}

TEST(Ablation, EveryVariantChangesTheForwardPass) {
  const auto base = tiny_config();
  const auto p = random_model(base, 12);
  std::mt19937_64 rng(12);
  const MatrixXd obs = oracle::random_matrix(base.observed, 3, 1, rng);
  const MatrixXd target = oracle::random_matrix(base.predicted, 3, 1, rng);
  std::vector<std::pair<MatrixXd, double>> outputs;
  for (bool v : {true, false})
    for (bool ps : {true, false})
      for (bool qt : {true, false}) {
        const auto cfg = model::with_ablation(base, {v, ps, qt});
        EXPECT_EQ(cfg.use_qt(), qt);
        const MatrixXd pred = model::predict(p, obs, cfg);
        const double loss = qt ? model::loss_quat_l1(pred, target) : model::loss_mse(pred, target);
        outputs.emplace_back(pred, loss);
      }
  // distinct (Vel, Pos) pairs give distinct predictions; QT changes the loss
  for (std::size_t a = 0; a < outputs.size(); a += 2) {
    EXPECT_NE(outputs[a].second, outputs[a + 1].second);
    for (std::size_t b = a + 2; b < outputs.size(); b += 2) EXPECT_NE(outputs[a].first, outputs[b].first);
  }
}

TEST(QuatL1Loss, KnownValues) {
  const MatrixXd zero = MatrixXd::Zero(2, 3);
  EXPECT_EQ(model::loss_quat_l1(zero, zero), 0.0);
  MatrixXd y = zero;
  y.row(0) << std::numbers::pi, 0, 0;
  // frame 1: |1-0| + |0-1| = 2, frame 2: 0, mean over two frames
  EXPECT_NEAR(model::loss_quat_l1(zero, y), 1.0, 1e-15);
}

TEST(QuatL1Loss, DoubleCoverIsNotIdentified) {
  // 2 pi about x is the same rotation as 0 but maps to q = (-1, 0, 0, 0)
  MatrixXd a = MatrixXd::Zero(1, 3), b = a;
  b(0, 0) = 2 * std::numbers::pi;
  EXPECT_NEAR(model::loss_quat_l1(a, b), 2.0, 1e-12);
}

TEST(QuatL1Loss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(13);
  model::Steps pred{oracle::random_matrix(6, 2, 1.5, rng), oracle::random_matrix(6, 2, 1.5, rng)};
  const model::Steps target{oracle::random_matrix(6, 2, 1.5, rng), oracle::random_matrix(6, 2, 1.5, rng)};
  const auto lv = model::quat_l1_loss(pred, target);
  for (std::size_t j = 0; j < pred.size(); ++j)
    for (Eigen::Index i = 0; i < pred[j].size(); ++i)
      EXPECT_NEAR(lv.grad[j](i),
                  oracle::central_difference(pred[j](i), [&] { return model::quat_l1_loss(pred, target).value; }), 1e-7);
}

TEST(QuatL1Loss, SubgradientAtZeroResidualIsZero) {
  const model::Steps x{MatrixXd::Constant(3, 1, 0.2)};
  const auto lv = model::quat_l1_loss(x, x);
  EXPECT_EQ(lv.value, 0.0);
  EXPECT_EQ(lv.grad[0], MatrixXd::Zero(3, 1));
}

TEST(MseLoss, KnownValuesAndGradient) {
  MatrixXd y = MatrixXd::Zero(2, 3), p = y;
  p.row(0) << 3, 4, 0;
  EXPECT_DOUBLE_EQ(model::loss_mse(p, y), 2.5);
  std::mt19937_64 rng(14);
  model::Steps pred{oracle::random_matrix(3, 2, 1, rng)};
  const model::Steps target{oracle::random_matrix(3, 2, 1, rng)};
  const auto lv = model::mse_loss(pred, target);
  for (Eigen::Index i = 0; i < pred[0].size(); ++i)
    EXPECT_NEAR(lv.grad[0](i), oracle::central_difference(pred[0](i), [&] { return model::mse_loss(pred, target).value; }),
                1e-8);
  EXPECT_THROW(model::mse_loss(pred, {}), ShapeError);
}

TEST(Loss, BatchValueIsMeanOfClipValues) {
  std::mt19937_64 rng(15);
  std::vector<MatrixXd> p{oracle::random_matrix(4, 3, 1, rng), oracle::random_matrix(4, 3, 1, rng)};
  std::vector<MatrixXd> y{oracle::random_matrix(4, 3, 1, rng), oracle::random_matrix(4, 3, 1, rng)};
  const double batch = model::quat_l1_loss(model::clips_to_steps(p), model::clips_to_steps(y)).value;
  EXPECT_NEAR(batch, 0.5 * (model::loss_quat_l1(p[0], y[0]) + model::loss_quat_l1(p[1], y[1])), 1e-15);
}

// Full BPTT against central differences of the whole forward pass, for every
// variant and both losses, with dropout masks fixed by reseeding.
class EndToEndGradient : public ::testing::TestWithParam<std::tuple<bool, bool, bool, bool>> {};

TEST_P(EndToEndGradient, MatchesFiniteDifferences) {
  const auto [vel, pos, qt, red] = GetParam();
  auto cfg = model::with_ablation(tiny_config(), {vel, pos, qt});
  cfg.observed = 4;
  cfg.predicted = 3;
  cfg.hidden = 4;
  if (red) cfg.variant = model::Variant::kRed;
  std::mt19937_64 rng(31);
  net::ModelParams p = random_model(cfg, rng());
  std::vector<MatrixXd> xs, ys;
  for (int b = 0; b < 2; ++b) {
    xs.push_back(oracle::random_matrix(cfg.observed, 3, 1, rng));
    ys.push_back(oracle::random_matrix(cfg.predicted, 3, 1, rng));
  }
  const auto batch = model::make_batch(xs, ys);
  const std::uint64_t drop_seed = rng();
  auto loss = [&] {
    std::mt19937_64 d(drop_seed);
    return model::forward(p, batch, cfg, &d).loss.value;
  };
  std::mt19937_64 d(drop_seed);
  const auto lg = model::loss_and_gradient(p, batch, cfg, &d);
  EXPECT_DOUBLE_EQ(lg.loss, loss());
  double worst = 0.0;
  net::visit_tensors(
      [&](const std::string& name, auto& t, const auto& g) {
        for (Eigen::Index i = 0; i < t.size(); ++i) {
          const double err = oracle::rel_err(g(i), oracle::central_difference(t(i), loss));
          worst = std::max(worst, err);
          ASSERT_LT(err, 1e-4) << name << "[" << i << "]";
        }
      },
      p, lg.grads);
  EXPECT_LT(worst, 1e-4);
}

INSTANTIATE_TEST_SUITE_P(Variants, EndToEndGradient,
                         ::testing::Values(std::tuple{true, true, true, false}, std::tuple{true, true, false, false},
                                           std::tuple{false, true, true, false}, std::tuple{true, false, true, false},
                                           std::tuple{false, false, false, false}, std::tuple{true, true, true, true}));

TEST(Backward, DisabledInputsGetNoGradient) {
  auto cfg = model::with_ablation(tiny_config(), {false, false, true});
  const auto p = random_model(cfg, 40);
  std::mt19937_64 rng(40);
  const auto batch = model::make_batch(std::vector{oracle::random_matrix(cfg.observed, 3, 1, rng)},
                                       std::vector{oracle::random_matrix(cfg.predicted, 3, 1, rng)});
  const auto g = model::loss_and_gradient(p, batch, cfg).grads;
  for (const auto* gate : {&g.cell.update, &g.cell.reset, &g.cell.candidate}) {
    EXPECT_EQ(gate->uv.squaredNorm(), 0.0);
    EXPECT_EQ(gate->up.squaredNorm(), 0.0);
    EXPECT_GT(gate->ux.squaredNorm(), 0.0);
  }
}

TEST(Backward, BiasFreeModelLeavesBiasGradientsAtZero) {
  auto cfg = tiny_config();
  cfg.use_bias = false;
  const auto p = random_model(cfg, 41);
  std::mt19937_64 rng(41);
  const auto batch = model::make_batch(std::vector{oracle::random_matrix(cfg.observed, 3, 1, rng)},
                                       std::vector{oracle::random_matrix(cfg.predicted, 3, 1, rng)});
  const auto g = model::loss_and_gradient(p, batch, cfg).grads;
  EXPECT_EQ(g.out.b.squaredNorm() + g.cell.update.b.squaredNorm() + g.cell.candidate.b.squaredNorm(), 0.0);
  EXPECT_GT(g.out.w.squaredNorm(), 0.0);
}

TEST(Backward, IncompleteCachesAreAStateError) {
  const auto cfg = tiny_config();
  const auto p = random_model(cfg, 42);
  std::mt19937_64 rng(42);
  const auto batch = model::make_batch(std::vector{oracle::random_matrix(cfg.observed, 3, 1, rng)},
                                       std::vector{oracle::random_matrix(cfg.predicted, 3, 1, rng)});
  auto f = model::forward(p, batch, cfg);
  f.pred.caches.pop_back();
  EXPECT_THROW(model::backward(p, f.enc, f.pred, f.loss.grad, cfg), StateError);
  EXPECT_THROW(model::backward(p, model::EncodeResult{}, f.pred, f.loss.grad, cfg), StateError);
}

}  // namespace
