#include <cmath>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pvred/posembed.hpp"

namespace {

using namespace pvred;
using posembed::embed_position;
using posembed::offset_map;

TEST(EmbedPosition, FirstFrameFourDims) {
  const Eigen::VectorXd p = embed_position(1, 4);
  ASSERT_EQ(p.size(), 4);
  EXPECT_DOUBLE_EQ(p(0), std::cos(0.01));
  EXPECT_DOUBLE_EQ(p(1), std::sin(0.01));
  EXPECT_DOUBLE_EQ(p(2), std::cos(1e-4));
  EXPECT_DOUBLE_EQ(p(3), std::sin(1e-4));
  EXPECT_NEAR(p(0), 0.99995, 1e-6);
  EXPECT_NEAR(p(1), 0.0100, 1e-5);
}

TEST(EmbedPosition, TwoDimsUseSingleFrequency) {
  for (long t : {1L, 50L, 12345L}) {
    const Eigen::VectorXd p = embed_position(t, 2);
    EXPECT_DOUBLE_EQ(p(0), std::cos(t / 10000.0));
    EXPECT_DOUBLE_EQ(p(1), std::sin(t / 10000.0));
    EXPECT_LE(p.cwiseAbs().maxCoeff(), 1.0);
  }
}

TEST(EmbedPosition, MatchesDirectFormula) {
  for (long d : {1L, 3L, 6L, 7L, 64L})
    for (long t : {1L, 2L, 75L, 400L}) EXPECT_LT((embed_position(t, d) - oracle::position(t, d)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(EmbedPosition, OddDimensionEndsWithCos) {
  const Eigen::VectorXd p = embed_position(5, 5);
  EXPECT_DOUBLE_EQ(p(4), std::cos(5.0 / std::pow(10000.0, 6.0 / 5.0)));
}

TEST(EmbedPosition, RejectsBadArguments) {
  EXPECT_THROW(embed_position(0, 4), InvalidInput);
  EXPECT_THROW(embed_position(1, 0), InvalidInput);
}

TEST(EmbedPosition, IsDeterministic) {
  for (long t = 1; t < 50; ++t) EXPECT_EQ(embed_position(t, 13), embed_position(t, 13));
}

TEST(EmbedPosition, DistinctFramesHaveDistinctEmbeddings) {
  for (long d : {6L, 12L, 64L}) {
    double min_dist = 1e9;
    for (long a = 1; a <= 100; ++a)
      for (long b = a + 1; b <= 100; ++b) min_dist = std::min(min_dist, (embed_position(a, d) - embed_position(b, d)).norm());
    EXPECT_GT(min_dist, 0.0) << "d=" << d;
  }
}

TEST(OffsetMap, ZeroOffsetIsIdentity) {
  EXPECT_EQ(offset_map(0, 6), Eigen::MatrixXd::Identity(6, 6));
}

TEST(OffsetMap, UnitOffsetInTwoDimsIsRotation) {
  const Eigen::MatrixXd m = offset_map(1, 2);
  Eigen::Matrix2d expected;
  expected << std::cos(1e-4), -std::sin(1e-4), std::sin(1e-4), std::cos(1e-4);
  EXPECT_LT((m - expected).cwiseAbs().maxCoeff(), 1e-15);
  for (long t = 1; t <= 100; ++t) EXPECT_LT((m * embed_position(t, 2) - embed_position(t + 1, 2)).norm(), 1e-9);
}

TEST(OffsetMap, SevenStepsFromFrameThree) {
  EXPECT_LT((offset_map(7, 6) * embed_position(3, 6) - embed_position(10, 6)).norm(), 1e-9);
}

TEST(OffsetMap, LinearShiftHoldsOnWholeGrid) {
  for (long d : {2L, 6L, 64L})
    for (long k = 0; k <= 50; ++k) {
      const Eigen::MatrixXd m = offset_map(k, d);
      for (long t = 1; t <= 200; ++t)
        ASSERT_LT((m * embed_position(t, d) - embed_position(t + k, d)).cwiseAbs().maxCoeff(), 1e-9)
            << "d=" << d << " k=" << k << " t=" << t;
    }
}

TEST(OffsetMap, RejectsOddOrTinyDimension) {
  EXPECT_THROW(offset_map(1, 5), InvalidInput);
  EXPECT_THROW(offset_map(1, 0), InvalidInput);
}

}  // namespace
