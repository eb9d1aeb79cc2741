#include <gtest/gtest.h>

#include <random>

#include "gemino/keypoints.hpp"
#include "oracles.hpp"

namespace gemino {
namespace {

constexpr int kSize = 64;

Tensor constant_jacobians(const Mat2& j, int h = kSize, int w = kSize) {
  Tensor maps(4 * kNumKeypoints, h, w);
  for (int k = 0; k < kNumKeypoints; ++k) {
    const float e[4] = {j.a, j.b, j.c, j.d};
    for (int i = 0; i < 4; ++i) std::fill(maps.channel(4 * k + i).begin(), maps.channel(4 * k + i).end(), e[i]);
  }
  return maps;
}

TEST(KeypointsFromHeads, SpikeAtGridCenterGivesOrigin) {
  // An even grid has no center texel; the four central texels share the spike.
  Tensor logits(kNumKeypoints, kSize, kSize);
  for (int k = 0; k < kNumKeypoints; ++k) {
    for (int y : {31, 32}) {
      for (int x : {31, 32}) logits(k, y, x) = 200.0f;
    }
  }
  const KeypointSet kp = keypoints_from_heads(logits, constant_jacobians(Mat2::identity()));
  for (const auto& p : kp.points) {
    EXPECT_NEAR(p.x, 0.0f, 1e-3f);
    EXPECT_NEAR(p.y, 0.0f, 1e-3f);
  }
}

TEST(KeypointsFromHeads, UniformLogitsGiveOrigin) {
  const KeypointSet kp = keypoints_from_heads(Tensor(kNumKeypoints, kSize, kSize, 3.0f),
                                              constant_jacobians(Mat2::identity()));
  for (const auto& p : kp.points) {
    EXPECT_NEAR(p.x, 0.0f, 1e-6f);
    EXPECT_NEAR(p.y, 0.0f, 1e-6f);
  }
}

TEST(KeypointsFromHeads, TopLeftSpikeSitsHalfTexelInside) {
  Tensor logits(kNumKeypoints, kSize, kSize);
  for (int k = 0; k < kNumKeypoints; ++k) logits(k, 0, 0) = 100.0f;
  const KeypointSet kp = keypoints_from_heads(logits, constant_jacobians(Mat2::identity()));
  // Texel 0 of n has center (2*0 + 1)/n - 1.
  const double expected = 1.0 / kSize - 1.0;
  for (const auto& p : kp.points) {
    EXPECT_NEAR(p.x, expected, 1e-5);
    EXPECT_NEAR(p.y, expected, 1e-5);
  }
}

TEST(KeypointsFromHeads, JacobianIsProbabilityWeightedAverage) {
  std::mt19937 rng(5);
  const Tensor logits = oracle::random_tensor(kNumKeypoints, 8, 8, rng, -2.0f, 2.0f);
  const Tensor maps = oracle::random_tensor(4 * kNumKeypoints, 8, 8, rng);
  const KeypointSet kp = keypoints_from_heads(logits, maps);
  const Tensor prob = oracle::softmax_spatial(logits);
  for (int k = 0; k < kNumKeypoints; ++k) {
    double j[4] = {0, 0, 0, 0}, sx = 0, sy = 0;
    for (int y = 0; y < 8; ++y) {
      for (int x = 0; x < 8; ++x) {
        const double p = prob(k, y, x);
        sx += p * ((2.0 * x + 1) / 8 - 1);
        sy += p * ((2.0 * y + 1) / 8 - 1);
        for (int e = 0; e < 4; ++e) j[e] += p * maps(4 * k + e, y, x);
      }
    }
    const auto& pt = kp.points[k];
    EXPECT_NEAR(pt.x, sx, 1e-5);
    EXPECT_NEAR(pt.y, sy, 1e-5);
    EXPECT_NEAR(pt.jacobian.a, j[0], 1e-5);
    EXPECT_NEAR(pt.jacobian.b, j[1], 1e-5);
    EXPECT_NEAR(pt.jacobian.c, j[2], 1e-5);
    EXPECT_NEAR(pt.jacobian.d, j[3], 1e-5);
  }
}

TEST(KeypointsFromHeads, LocationsStayInsideSquareForExtremeLogits) {
  std::mt19937 rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const float scale = std::pow(10.0f, static_cast<float>(trial % 6));
    const Tensor logits = oracle::random_tensor(kNumKeypoints, 16, 16, rng, -scale, scale);
    const KeypointSet kp = keypoints_from_heads(logits, constant_jacobians(Mat2::identity(), 16, 16));
    for (const auto& p : kp.points) {
      ASSERT_TRUE(std::isfinite(p.x) && std::isfinite(p.y));
      ASSERT_GE(p.x, -1.0f);
      ASSERT_LE(p.x, 1.0f);
      ASSERT_GE(p.y, -1.0f);
      ASSERT_LE(p.y, 1.0f);
    }
  }
}

TEST(KeypointsFromHeads, RejectsWrongChannelCounts) {
  EXPECT_THROW(keypoints_from_heads(Tensor(9, 8, 8), Tensor(40, 8, 8)), ShapeError);
  EXPECT_THROW(keypoints_from_heads(Tensor(10, 8, 8), Tensor(40, 4, 8)), ShapeError);
}

class DetectorTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    ArchitectureSpec spec;
    KeypointDetector::declare(spec, "kp");
    store_ = new WeightStore(random_init(spec, 21));
  }
  static void TearDownTestSuite() { delete store_; }
  static WeightStore* store_;
};
WeightStore* DetectorTest::store_ = nullptr;

TEST_F(DetectorTest, UNetPreservesSpatialSize) {
  const UNetTrunk trunk = UNetTrunk::build(*store_, "kp.unet", KeypointDetector::trunk_config());
  std::mt19937 rng(1);
  const Tensor out = trunk.forward(oracle::random_tensor(3, kSize, kSize, rng, 0.0f, 1.0f));
  EXPECT_EQ(out.channels(), 64);
  EXPECT_EQ(out.height(), kSize);
  EXPECT_EQ(out.width(), kSize);
  EXPECT_THROW(trunk.forward(Tensor(3, 48, 48)), ShapeError);
  EXPECT_THROW(trunk.forward(Tensor(4, 64, 64)), ShapeError);
}

TEST_F(DetectorTest, UNetWidthsDoubleThenMirror) {
  const UNetConfig cfg = KeypointDetector::trunk_config();
  EXPECT_EQ(cfg.depth, 5);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(cfg.encoder_width(i), 64 << i);
  EXPECT_EQ(cfg.decoder_in(0), 1024);
  EXPECT_EQ(cfg.decoder_out(0), 512);
  EXPECT_EQ(cfg.decoder_in(1), 512 + 512);
  EXPECT_EQ(cfg.decoder_out(4), 64);
  EXPECT_EQ(cfg.decoder_in(3), 128 + 128);
  EXPECT_EQ(cfg.decoder_in(4), 64 + 64);
  EXPECT_EQ(store_->at("kp.unet.down0.conv.weight").shape, (std::vector<int>{64, 3, 3, 3}));
  EXPECT_EQ(store_->at("kp.kp_head.weight").shape, (std::vector<int>{10, 64, 7, 7}));
  EXPECT_EQ(store_->at("kp.jacobian_head.weight").shape, (std::vector<int>{40, 64, 7, 7}));
}

TEST_F(DetectorTest, DetectIsDeterministicAndInRange) {
  const KeypointDetector det = KeypointDetector::build(*store_, "kp");
  std::mt19937 rng(2);
  const Tensor frame = oracle::random_tensor(3, kSize, kSize, rng, 0.0f, 1.0f);
  const KeypointSet a = det.detect(frame);
  EXPECT_EQ(a, det.detect(frame));
  for (const auto& p : a.points) {
    EXPECT_LE(std::abs(p.x), 1.0f);
    EXPECT_LE(std::abs(p.y), 1.0f);
  }
}

TEST_F(DetectorTest, RejectsWrongInputSize) {
  const KeypointDetector det = KeypointDetector::build(*store_, "kp");
  EXPECT_THROW(det.detect(Tensor(3, 128, 128)), ShapeError);
  EXPECT_THROW(det.detect(Tensor(1, 64, 64)), ShapeError);
}

TEST_F(DetectorTest, MissingParameterIsNamed) {
  WeightStore partial = *store_;
  partial.erase("kp.unet.up3.conv.bias");
  try {
    KeypointDetector::build(partial, "kp");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("kp.unet.up3.conv.bias"), std::string::npos) << e.what();
  }
}

TEST_F(DetectorTest, MisShapedParameterIsNamed) {
  WeightStore bad;
  for (const auto& [name, entry] : *store_) {
    if (name == "kp.kp_head.bias") {
      bad.add(name, {11}, std::vector<float>(11));
    } else {
      bad.add(name, entry.shape, entry.values);
    }
  }
  try {
    KeypointDetector::build(bad, "kp");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("kp.kp_head.bias"), std::string::npos) << e.what();
  }
}

TEST_F(DetectorTest, ZeroJacobianWeightsYieldIdentityJacobians) {
  WeightStore s = *store_;
  s.fill("kp.jacobian_head.weight", 0.0f);
  const KeypointDetector det = KeypointDetector::build(s, "kp");
  std::mt19937 rng(3);
  const KeypointSet kp = det.detect(oracle::random_tensor(3, kSize, kSize, rng, 0.0f, 1.0f));
  for (const auto& p : kp.points) {
    EXPECT_NEAR(p.jacobian.a, 1.0f, 1e-5f);
    EXPECT_NEAR(p.jacobian.b, 0.0f, 1e-5f);
    EXPECT_NEAR(p.jacobian.c, 0.0f, 1e-5f);
    EXPECT_NEAR(p.jacobian.d, 1.0f, 1e-5f);
  }
}

}  // namespace
}  // namespace gemino
