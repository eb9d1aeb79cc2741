#include <gtest/gtest.h>

#include <random>

#include "gemino/motion.hpp"
#include "oracles.hpp"

namespace gemino {
namespace {

constexpr int kSize = 64;

KeypointSet random_keypoints(std::mt19937& rng) {
  std::uniform_real_distribution<float> loc(-0.8f, 0.8f);
  std::uniform_real_distribution<float> jit(-0.3f, 0.3f);
  KeypointSet s;
  for (auto& p : s.points) p = {loc(rng), loc(rng), {1.0f + jit(rng), jit(rng), jit(rng), 1.0f + jit(rng)}};
  return s;
}

double max_warp_error(const WarpField& f, const auto& expected_xy) {
  double m = 0;
  for (int y = 0; y < f.height(); ++y) {
    for (int x = 0; x < f.width(); ++x) {
      const auto [ex, ey] = expected_xy(pixel_center(x, f.width()), pixel_center(y, f.height()));
      m = std::max({m, std::abs(f.x(y, x) - ex), std::abs(f.y(y, x) - ey)});
    }
  }
  return m;
}

TEST(Heatmaps, IdenticalKeypointsGiveZero) {
  std::mt19937 rng(1);
  const KeypointSet kp = random_keypoints(rng);
  const Tensor heat = gaussian_heatmaps(kp, kp, kSize, kSize);
  EXPECT_EQ(heat.channels(), 11);
  for (float v : heat.values()) ASSERT_EQ(v, 0.0f);
}

TEST(Heatmaps, MatchScalarFormulaAndBackgroundIsZero) {
  std::mt19937 rng(2);
  const KeypointSet ref = random_keypoints(rng);
  const KeypointSet tgt = random_keypoints(rng);
  const double sigma2 = 0.01;
  const Tensor heat = gaussian_heatmaps(ref, tgt, 32, 48, static_cast<float>(sigma2));
  for (int k = 0; k < kNumKeypoints; ++k) {
    for (int y = 0; y < 32; ++y) {
      for (int x = 0; x < 48; ++x) {
        const double gx = (2.0 * x + 1) / 48 - 1, gy = (2.0 * y + 1) / 32 - 1;
        const auto g = [&](const Keypoint& p) {
          return std::exp(-((gx - p.x) * (gx - p.x) + (gy - p.y) * (gy - p.y)) / (2 * sigma2));
        };
        ASSERT_NEAR(heat(k, y, x), g(tgt.points[k]) - g(ref.points[k]), 1e-5);
      }
    }
  }
  for (float v : heat.channel(kBackground)) ASSERT_EQ(v, 0.0f);
  EXPECT_THROW(gaussian_heatmaps(ref, tgt, 8, 8, 0.0f), ShapeError);
}

TEST(Heatmaps, CenteredKeypointPeaksAtGridCenter) {
  const KeypointSet ref = KeypointSet::uniform(0.9f, 0.9f);
  const KeypointSet tgt = KeypointSet::uniform(0.0f, 0.0f);
  const Tensor heat = gaussian_heatmaps(ref, tgt, kSize, kSize);
  float best = -1;
  int by = -1, bx = -1;
  for (int y = 0; y < kSize; ++y) {
    for (int x = 0; x < kSize; ++x) {
      if (heat(0, y, x) > best) best = heat(0, y, x), by = y, bx = x;
    }
  }
  EXPECT_TRUE(by == 31 || by == 32);
  EXPECT_TRUE(bx == 31 || bx == 32);
}

TEST(SparseMotionTest, EqualKeypointsGiveIdentity) {
  const KeypointSet kp = KeypointSet::uniform(0.3f, -0.2f);
  const SparseMotion m = sparse_motion(kp, kp, kSize, kSize);
  for (const auto& c : m.candidates) {
    EXPECT_LT(max_warp_error(c, [](double x, double y) { return std::pair{x, y}; }), 1e-6);
  }
  EXPECT_EQ(m.candidates[kBackground], WarpField::identity(kSize, kSize));
  EXPECT_FALSE(m.degenerate);
}

TEST(SparseMotionTest, PureTranslation) {
  const SparseMotion m = sparse_motion(KeypointSet::uniform(0.2f, 0.0f), KeypointSet::uniform(0.0f, 0.0f), 16, 16);
  for (int k = 0; k < kNumKeypoints; ++k) {
    EXPECT_LT(max_warp_error(m.candidates[k], [](double x, double y) { return std::pair{x + 0.2, y}; }), 1e-6);
  }
  EXPECT_EQ(m.candidates[kBackground], WarpField::identity(16, 16));
}

TEST(SparseMotionTest, ScaledReferenceJacobian) {
  KeypointSet ref = KeypointSet::uniform();
  for (auto& p : ref.points) p.jacobian = {2, 0, 0, 2};
  const SparseMotion m = sparse_motion(ref, KeypointSet::uniform(), 16, 16);
  for (int k = 0; k < kNumKeypoints; ++k) {
    EXPECT_LT(max_warp_error(m.candidates[k], [](double x, double y) { return std::pair{2 * x, 2 * y}; }), 1e-6);
  }
}

// Fixes which jacobian is inverted: candidate = p_ref + J_ref * inv(J_tgt) * (z - p_tgt).
TEST(SparseMotionTest, TargetJacobianIsInverted) {
  KeypointSet ref = KeypointSet::uniform(0.1f, 0.2f);
  KeypointSet tgt = KeypointSet::uniform(-0.1f, 0.05f);
  const Mat2 jr{1.5f, 0.2f, -0.1f, 0.8f};
  const Mat2 jt{0.5f, 0.0f, 0.3f, 2.0f};
  for (auto& p : ref.points) p.jacobian = jr;
  for (auto& p : tgt.points) p.jacobian = jt;
  const SparseMotion m = sparse_motion(ref, tgt, 16, 16);
  // inv(jt) = [2, 0; -0.3, 0.5]; jr * inv(jt):
  const double a = 1.5 * 2 + 0.2 * -0.3, b = 0.2 * 0.5, c = -0.1 * 2 + 0.8 * -0.3, d = 0.8 * 0.5;
  const auto expected = [&](double x, double y) {
    const double dx = x + 0.1, dy = y - 0.05;
    return std::pair{0.1 + a * dx + b * dy, 0.2 + c * dx + d * dy};
  };
  EXPECT_LT(max_warp_error(m.candidates[0], expected), 1e-5);
}

TEST(SparseMotionTest, SwappingRolesInvertsTheMap) {
  std::mt19937 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const KeypointSet r = random_keypoints(rng);
    const KeypointSet t = random_keypoints(rng);
    const SparseMotion fwd = sparse_motion(r, t, 8, 8);
    for (int k = 0; k < kNumKeypoints; ++k) {
      const Mat2 m = r.points[k].jacobian * mat2_inverse(t.points[k].jacobian).value;
      const Mat2 back = t.points[k].jacobian * mat2_inverse(r.points[k].jacobian).value;
      const Mat2 prod = back * m;
      EXPECT_NEAR(prod.a, 1, 1e-5);
      EXPECT_NEAR(prod.b, 0, 1e-5);
      EXPECT_NEAR(prod.c, 0, 1e-5);
      EXPECT_NEAR(prod.d, 1, 1e-5);
      // Applying the reverse affine map to a forward sample returns the grid point.
      const float zx = fwd.candidates[k].x(3, 5), zy = fwd.candidates[k].y(3, 5);
      const float dx = zx - r.points[k].x, dy = zy - r.points[k].y;
      EXPECT_NEAR(t.points[k].x + back.a * dx + back.b * dy, pixel_center(5, 8), 1e-5);
      EXPECT_NEAR(t.points[k].y + back.c * dx + back.d * dy, pixel_center(3, 8), 1e-5);
    }
  }
}

TEST(SparseMotionTest, SingularTargetJacobianIsFlagged) {
  KeypointSet tgt = KeypointSet::uniform();
  tgt.points[4].jacobian = {1, 2, 2, 4};
  const SparseMotion m = sparse_motion(KeypointSet::uniform(), tgt, 8, 8);
  EXPECT_TRUE(m.degenerate);
  for (float v : m.candidates[4].values()) ASSERT_TRUE(std::isfinite(v));
}

TEST(DeformedReferences, IdentityMotionCopiesReference) {
  std::mt19937 rng(4);
  const Tensor ref = oracle::random_tensor(3, kSize, kSize, rng, 0.0f, 1.0f);
  const KeypointSet kp = KeypointSet::uniform();
  const Tensor out = deformed_references(ref, sparse_motion(kp, kp, kSize, kSize));
  ASSERT_EQ(out.channels(), 33);
  for (int k = 0; k < kNumMotions; ++k) {
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < kSize; ++y) {
        for (int x = 0; x < kSize; ++x) ASSERT_NEAR(out(3 * k + c, y, x), ref(c, y, x), 1e-6);
      }
    }
  }
}

TEST(DeformedReferences, ConstantReferenceStaysConstant) {
  std::mt19937 rng(5);
  const Tensor ref(3, kSize, kSize, 0.37f);
  const Tensor out = deformed_references(ref, sparse_motion(random_keypoints(rng), random_keypoints(rng), kSize, kSize));
  for (float v : out.values()) ASSERT_NEAR(v, 0.37f, 1e-6f);
}

TEST(DeformedReferences, TranslationMatchesShiftOracle) {
  std::mt19937 rng(6);
  const Tensor ref = oracle::random_tensor(3, 16, 16, rng);
  // Shift of 2 / 16 in normalized units is exactly one texel to the right.
  const SparseMotion m = sparse_motion(KeypointSet::uniform(0.125f, 0.0f), KeypointSet::uniform(), 16, 16);
  const Tensor out = deformed_references(ref, m);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < 16; ++y) {
      for (int x = 0; x < 16; ++x) ASSERT_NEAR(out(c, y, x), ref(c, y, std::min(x + 1, 15)), 1e-5);
    }
  }
}

TEST(MotionInput, Has47ChannelsInInterleavedOrder) {
  std::mt19937 rng(7);
  const Tensor ref = oracle::random_tensor(3, kSize, kSize, rng, 0.0f, 1.0f);
  const Tensor tgt = oracle::random_tensor(3, kSize, kSize, rng, 0.0f, 1.0f);
  const KeypointSet kr = random_keypoints(rng), kt = random_keypoints(rng);
  SparseMotion motion;
  const Tensor in = MotionEstimator::motion_input(ref, tgt, kr, kt, &motion);
  EXPECT_EQ(in.channels(), 47);
  const Tensor heat = gaussian_heatmaps(kr, kt, kSize, kSize);
  const Tensor def = deformed_references(ref, motion);
  for (int k = 0; k < kNumMotions; ++k) {
    EXPECT_EQ(in(4 * k, 10, 20), heat(k, 10, 20));
    for (int c = 0; c < 3; ++c) EXPECT_EQ(in(4 * k + 1 + c, 10, 20), def(3 * k + c, 10, 20));
  }
  for (int c = 0; c < 3; ++c) EXPECT_EQ(in(44 + c, 10, 20), tgt(c, 10, 20));
  EXPECT_THROW(MotionEstimator::motion_input(ref, Tensor(3, 32, 32), kr, kt), ShapeError);
}

TEST(CombineMotion, BackgroundOneHotGivesIdentityWarp) {
  std::mt19937 rng(8);
  const SparseMotion m = sparse_motion(random_keypoints(rng), random_keypoints(rng), kSize, kSize);
  Tensor logits(kNumMotions, kSize, kSize, -60.0f);
  std::fill(logits.channel(kBackground).begin(), logits.channel(kBackground).end(), 60.0f);
  const MotionOutput out = combine_motion(m, logits, Tensor(3, kSize, kSize));
  const WarpField id = WarpField::identity(kSize, kSize);
  for (std::size_t i = 0; i < id.values().size(); ++i) ASSERT_NEAR(out.warp.values()[i], id.values()[i], 1e-6);
}

TEST(CombineMotion, WarpLiesInCandidateHullAndMasksSumToOne) {
  std::mt19937 rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const SparseMotion m = sparse_motion(random_keypoints(rng), random_keypoints(rng), 16, 16);
    const MotionOutput out = combine_motion(m, oracle::random_tensor(kNumMotions, 16, 16, rng, -8, 8),
                                            oracle::random_tensor(3, 16, 16, rng, -50, 50));
    for (int y = 0; y < 16; ++y) {
      for (int x = 0; x < 16; ++x) {
        float lo_x = 1e9f, hi_x = -1e9f, lo_y = 1e9f, hi_y = -1e9f;
        for (const auto& c : m.candidates) {
          lo_x = std::min(lo_x, c.x(y, x)), hi_x = std::max(hi_x, c.x(y, x));
          lo_y = std::min(lo_y, c.y(y, x)), hi_y = std::max(hi_y, c.y(y, x));
        }
        ASSERT_GE(out.warp.x(y, x), lo_x - 1e-5f);
        ASSERT_LE(out.warp.x(y, x), hi_x + 1e-5f);
        ASSERT_GE(out.warp.y(y, x), lo_y - 1e-5f);
        ASSERT_LE(out.warp.y(y, x), hi_y + 1e-5f);
        const float s = out.occlusion.warped(y, x) + out.occlusion.unwarped(y, x) + out.occlusion.low_res(y, x);
        ASSERT_NEAR(s, 1.0f, 1e-5f);
      }
    }
  }
}

TEST(OcclusionFromLogits, SigmoidThenSoftmax) {
  Tensor logits(3, 1, 1);
  logits(0, 0, 0) = 2.0f;
  logits(1, 0, 0) = -1.0f;
  logits(2, 0, 0) = 0.0f;
  const OcclusionMasks m = occlusion_from_logits(logits);
  const double s[3] = {1 / (1 + std::exp(-2.0)), 1 / (1 + std::exp(1.0)), 0.5};
  const double z = std::exp(s[0]) + std::exp(s[1]) + std::exp(s[2]);
  EXPECT_NEAR(m.warped(0, 0), std::exp(s[0]) / z, 1e-6);
  EXPECT_NEAR(m.unwarped(0, 0), std::exp(s[1]) / z, 1e-6);
  EXPECT_NEAR(m.low_res(0, 0), std::exp(s[2]) / z, 1e-6);
}

class EstimatorTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    ArchitectureSpec spec;
    MotionEstimator::declare(spec, "motion");
    store_ = new WeightStore(random_init(spec, 33));
  }
  static void TearDownTestSuite() { delete store_; }
  static WeightStore* store_;
};
WeightStore* EstimatorTest::store_ = nullptr;

TEST_F(EstimatorTest, RandomWeightsMasksSumToOne) {
  const MotionEstimator est = MotionEstimator::build(*store_, "motion");
  std::mt19937 rng(11);
  for (int trial = 0; trial < 3; ++trial) {
    const MotionOutput out = est.estimate(oracle::random_tensor(3, kSize, kSize, rng, 0, 1),
                                          oracle::random_tensor(3, kSize, kSize, rng, 0, 1), random_keypoints(rng),
                                          random_keypoints(rng));
    EXPECT_EQ(out.warp.height(), kSize);
    EXPECT_EQ(out.occlusion.height(), kSize);
    for (int y = 0; y < kSize; ++y) {
      for (int x = 0; x < kSize; ++x) {
        const float s = out.occlusion.warped(y, x) + out.occlusion.unwarped(y, x) + out.occlusion.low_res(y, x);
        ASSERT_NEAR(s, 1.0f, 1e-5f);
      }
    }
  }
}

TEST_F(EstimatorTest, EqualInputsGiveIdentityWarp) {
  const MotionEstimator est = MotionEstimator::build(*store_, "motion");
  std::mt19937 rng(12);
  const Tensor frame = oracle::random_tensor(3, kSize, kSize, rng, 0, 1);
  KeypointSet kp = random_keypoints(rng);
  for (auto& p : kp.points) p.jacobian = Mat2::identity();
  const MotionOutput out = est.estimate(frame, frame, kp, kp);
  const WarpField id = WarpField::identity(kSize, kSize);
  for (std::size_t i = 0; i < id.values().size(); ++i) ASSERT_NEAR(out.warp.values()[i], id.values()[i], 1e-6);
}

TEST_F(EstimatorTest, DeterministicAndRejectsMismatch) {
  const MotionEstimator est = MotionEstimator::build(*store_, "motion");
  std::mt19937 rng(13);
  const Tensor a = oracle::random_tensor(3, kSize, kSize, rng, 0, 1);
  const Tensor b = oracle::random_tensor(3, kSize, kSize, rng, 0, 1);
  const KeypointSet kr = random_keypoints(rng), kt = random_keypoints(rng);
  const MotionOutput x = est.estimate(a, b, kr, kt);
  const MotionOutput y = est.estimate(a, b, kr, kt);
  EXPECT_EQ(x.warp, y.warp);
  EXPECT_EQ(x.occlusion.masks, y.occlusion.masks);
  EXPECT_THROW(est.estimate(a, Tensor(3, 32, 32), kr, kt), ShapeError);
}

}  // namespace
}  // namespace gemino
