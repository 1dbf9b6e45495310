#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pvred/data.hpp"

namespace {

using namespace pvred;
namespace fs = std::filesystem;

data::SynthSpec single_channel() {
  data::SynthSpec spec;
  spec.num_sequences = 1;
  spec.frames = 60;
  spec.joints = 1;
  spec.harmonics = 1;
  spec.offset_max = 0.0;
  spec.drift_max = 0.0;
  spec.noise_std = 0.0;
  return spec;
}

TEST(Synthetic, ZeroAmplitudeWithoutNoiseIsAllZero) {
  auto spec = single_channel();
  spec.amplitude_min = spec.amplitude_max = 0.0;
  const auto seqs = data::generate_synthetic(spec);
  ASSERT_EQ(seqs.size(), 1u);
  EXPECT_EQ(seqs[0].frames, Eigen::MatrixXd::Zero(60, 3));
}

TEST(Synthetic, UnitSineAtOneHertz) {
  auto spec = single_channel();
  spec.amplitude_min = spec.amplitude_max = 1.0;
  spec.frequency_min = spec.frequency_max = 1.0;
  spec.phase_min = spec.phase_max = 0.0;
  const auto seq = data::generate_synthetic(spec)[0];
  for (long t = 0; t < 60; ++t)
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(seq.frames(t, c), std::sin(2 * std::numbers::pi * t / 25.0), 1e-12);
}

TEST(Synthetic, DefaultShapeAndDeterminism) {
  const data::SynthSpec spec;
  const auto a = data::generate_synthetic(spec), b = data::generate_synthetic(spec);
  ASSERT_EQ(a.size(), 24u);
  EXPECT_EQ(a[0].frames.rows(), 500);
  EXPECT_EQ(a[0].frames.cols(), 12);
  EXPECT_EQ(a[0].fps, 25.0);
  EXPECT_EQ(a, b);
  auto other = spec;
  other.seed = 8;
  EXPECT_NE(data::generate_synthetic(other)[0].frames, a[0].frames);
}

TEST(Synthetic, ValuesStayWithinTheirBounds) {
  const data::SynthSpec spec;
  const double bound = spec.offset_max + spec.harmonics * spec.amplitude_max +
                       spec.drift_max * spec.frames / spec.fps + 6 * spec.noise_std;
  for (const auto& s : data::generate_synthetic(spec)) {
    EXPECT_TRUE(s.frames.allFinite());
    EXPECT_LE(s.frames.cwiseAbs().maxCoeff(), bound);
  }
}

TEST(Synthetic, HalfOfTheSequencesDrift) {
  const data::SynthSpec spec;
  int aperiodic = 0;
  for (int s = 0; s < spec.num_sequences; ++s) aperiodic += spec.is_aperiodic(s);
  EXPECT_EQ(aperiodic, 12);
  auto none = spec;
  none.aperiodic_fraction = 0.0;
  for (int s = 0; s < spec.num_sequences; ++s) EXPECT_FALSE(none.is_aperiodic(s));
}

TEST(Synthetic, RejectsFrequenciesAtNyquist) {
  auto spec = single_channel();
  spec.frequency_max = 12.5;
  EXPECT_THROW(data::generate_synthetic(spec), InvalidSpec);
  spec.frequency_max = 12.4;
  EXPECT_NO_THROW(data::generate_synthetic(spec));
}

TEST(Synthetic, RejectsInvalidRanges) {
  auto spec = single_channel();
  spec.amplitude_max = 4.0;
  EXPECT_THROW(spec.validate(), InvalidSpec);
  spec = single_channel();
  spec.noise_std = -1.0;
  EXPECT_THROW(spec.validate(), InvalidSpec);
  spec = single_channel();
  spec.joints = 0;
  EXPECT_THROW(spec.validate(), InvalidSpec);
}

TEST(SequenceFormat, RoundTripIsExact) {
  const auto seq = data::generate_synthetic(data::SynthSpec{})[3];
  EXPECT_EQ(data::parse_sequence(data::format_sequence(seq)), seq);
}

TEST(SequenceFormat, KnownText) {
  data::MotionSequence seq;
  seq.frames = Eigen::MatrixXd(2, 3);
  seq.frames << 0.1, -2, 3.5, 0, 1e-20, 7;
  seq.fps = 50;
  seq.channel_names = {"a", "b", "c"};
  EXPECT_EQ(data::format_sequence(seq), "# fps=50 channels=3\n# names=a,b,c\n0.1,-2,3.5\n0,1e-20,7\n");
}

TEST(SequenceFormat, ToleratesCommentsAndCrlf) {
  const auto seq = data::parse_sequence("# fps=25 channels=2\r\n# names=p,q\r\n1,2\r\n# note\r\n\r\n3,4\r\n");
  Eigen::MatrixXd expected(2, 2);
  expected << 1, 2, 3, 4;
  EXPECT_EQ(seq.frames, expected);
}

TEST(SequenceFormat, ErrorsCarryLineNumbers) {
  auto line_of = [](std::string_view text) {
    try {
      data::parse_sequence(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return std::size_t{0};
  };
  EXPECT_EQ(line_of("fps=25\n# names=a\n"), 1u);
  EXPECT_EQ(line_of("# fps=25 channels=2\n# names=a\n"), 2u);
  EXPECT_EQ(line_of("# fps=25 channels=2\n# names=a,b\n1,2\n1,x\n"), 4u);
  EXPECT_EQ(line_of("# fps=25 channels=2\n# names=a,b\n1,2\n1,2,3\n"), 4u);
  EXPECT_EQ(line_of("# fps=25 channels=2\n# names=a,b\n1,nan\n"), 3u);
  EXPECT_EQ(line_of("# fps=-1 channels=2\n# names=a,b\n"), 1u);
}

TEST(SequenceFormat, RejectsUnwritableSequences) {
  data::MotionSequence seq;
  seq.frames = Eigen::MatrixXd::Zero(1, 2);
  seq.channel_names = {"a"};
  EXPECT_THROW(data::format_sequence(seq), ShapeError);
  seq.channel_names = {"a", "b,c"};
  EXPECT_THROW(data::format_sequence(seq), InvalidInput);
}

TEST(SequenceFile, SaveAndLoad) {
  const fs::path dir = fs::temp_directory_path() / "pvred_test_data";
  fs::create_directories(dir);
  const auto seq = data::generate_synthetic(data::SynthSpec{})[0];
  data::save_sequence(seq, dir / "seq.csv");
  EXPECT_EQ(data::load_sequence(dir / "seq.csv"), seq);
  EXPECT_THROW(data::load_sequence(dir / "missing.csv"), Error);
  fs::remove_all(dir);
}

TEST(Clips, WindowIsContiguous) {
  data::MotionSequence seq;
  seq.frames = Eigen::VectorXd::LinSpaced(20, 0, 19).replicate(1, 3);
  const auto clip = data::clip_at(seq, 4, 5, 3);
  EXPECT_EQ(clip.observed.col(0), Eigen::VectorXd::LinSpaced(5, 4, 8));
  EXPECT_EQ(clip.target.col(0), Eigen::VectorXd::LinSpaced(3, 9, 11));
  EXPECT_THROW(data::clip_at(seq, 13, 5, 3), InsufficientLength);
  EXPECT_NO_THROW(data::clip_at(seq, 12, 5, 3));
}

TEST(Clips, SamplingCoversEveryValidStart) {
  data::MotionSequence seq;
  seq.frames = Eigen::MatrixXd::Zero(10, 3);
  std::mt19937_64 rng(1);
  std::vector<int> seen(3, 0);
  for (int i = 0; i < 300; ++i) ++seen[static_cast<std::size_t>(data::sample_clip(seq, 5, 3, rng).start)];
  for (int c : seen) EXPECT_GT(c, 50);
}

TEST(Clips, ShortSequenceIsInsufficient) {
  data::MotionSequence seq;
  seq.frames = Eigen::MatrixXd::Zero(7, 3);
  std::mt19937_64 rng(1);
  EXPECT_THROW(data::sample_clip(seq, 5, 3, rng), InsufficientLength);
}

}  // namespace
