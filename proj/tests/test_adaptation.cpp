#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "gemino/adaptation.hpp"

namespace gemino {
namespace {

TEST(Ladder, TableExamples) {
  const auto ladder = BitrateLadder::standard();
  EXPECT_EQ(resolution_for_bitrate(ladder, 20), (OperatingPoint{128, FrameMode::neural}));
  EXPECT_EQ(resolution_for_bitrate(ladder, 100), (OperatingPoint{256, FrameMode::neural}));
  EXPECT_EQ(resolution_for_bitrate(ladder, 300), (OperatingPoint{512, FrameMode::neural}));
  EXPECT_EQ(resolution_for_bitrate(ladder, 600), (OperatingPoint{1024, FrameMode::fallback}));
}

TEST(Ladder, BoundariesBelongToTheHigherRow) {
  const auto ladder = BitrateLadder::standard();
  EXPECT_EQ(resolution_for_bitrate(ladder, 30).resolution, 256);
  EXPECT_EQ(resolution_for_bitrate(ladder, 29.999).resolution, 128);
  EXPECT_EQ(resolution_for_bitrate(ladder, 180).resolution, 512);
  EXPECT_EQ(resolution_for_bitrate(ladder, 179.999).resolution, 256);
  EXPECT_EQ(resolution_for_bitrate(ladder, 550).resolution, 1024);
  EXPECT_EQ(resolution_for_bitrate(ladder, 549.999).resolution, 512);
}

TEST(Ladder, MonotoneOverSweep) {
  const auto ladder = BitrateLadder::standard();
  int previous = 0;
  for (double kbps = 1; kbps <= 1000; kbps += 0.5) {
    const int res = resolution_for_bitrate(ladder, kbps).resolution;
    EXPECT_GE(res, previous) << kbps;
    previous = res;
  }
}

TEST(Ladder, RejectsNonPositiveTargets) {
  const auto ladder = BitrateLadder::standard();
  EXPECT_THROW(resolution_for_bitrate(ladder, 0), Error);
  EXPECT_THROW(resolution_for_bitrate(ladder, -5), Error);
}

TEST(Ladder, RejectsUnorderedRows) {
  EXPECT_THROW(BitrateLadder({{0, 128, FrameMode::neural}, {30, 128, FrameMode::neural}}), Error);
  EXPECT_THROW(BitrateLadder({{0, 128, FrameMode::neural}, {0, 256, FrameMode::neural}}), Error);
  EXPECT_THROW(BitrateLadder({{5, 128, FrameMode::neural}}), Error);
  EXPECT_THROW(BitrateLadder(std::vector<LadderRow>{}), Error);
}

TEST(ModelSelector, OneWeightSetPerResolution) {
  const auto ladder = BitrateLadder::standard();
  EXPECT_EQ(model_selector(ladder, 128), "p128");
  const int a = resolution_for_bitrate(ladder, 40).resolution;
  const int b = resolution_for_bitrate(ladder, 170).resolution;
  EXPECT_EQ(model_selector(ladder, a), "p256");
  EXPECT_EQ(model_selector(ladder, a), model_selector(ladder, b));
  EXPECT_EQ(model_selector(ladder, 1024), std::nullopt);
  EXPECT_THROW(model_selector(ladder, 64), Error);
  EXPECT_THROW(model_selector(ladder, 300), Error);
}

TEST(Trace, StepInterpolation) {
  const TargetTrace trace({{0, 100}, {2, 50}, {5, 20}});
  EXPECT_EQ(trace.at(0), 100);
  EXPECT_EQ(trace.at(1.999), 100);
  EXPECT_EQ(trace.at(2), 50);
  EXPECT_EQ(trace.at(4.5), 50);
  EXPECT_EQ(trace.at(5), 20);
  EXPECT_EQ(trace.at(1e6), 20);
  EXPECT_THROW(trace.at(-0.1), Error);
}

TEST(Trace, RejectsBadBreakpoints) {
  EXPECT_THROW(TargetTrace({{0, 10}, {0, 20}}), Error);
  EXPECT_THROW(TargetTrace({{1, 10}, {0, 20}}), Error);
  EXPECT_THROW(TargetTrace({{0, 0}}), Error);
}

TEST(Trace, LinearRampEndpoints) {
  const auto trace = TargetTrace::linear(800, 20, 31, 30);
  ASSERT_EQ(trace.points().size(), 31u);
  EXPECT_DOUBLE_EQ(trace.points().front().kbps, 800);
  EXPECT_DOUBLE_EQ(trace.points().back().kbps, 20);
  EXPECT_DOUBLE_EQ(trace.points().back().time_s, 1.0);
}

TEST(Trace, CsvParsing) {
  std::istringstream ok("time_s,target_kbps\n0,800\n1.5,300\r\n\n3,20\n");
  const auto trace = TargetTrace::parse_csv(ok);
  ASSERT_EQ(trace.points().size(), 3u);
  EXPECT_EQ(trace.points()[1], (TargetTrace::Point{1.5, 300}));

  std::istringstream no_header("0,800\n1,300\n");
  EXPECT_THROW(TargetTrace::parse_csv(no_header), FormatError);
  std::istringstream empty("");
  EXPECT_THROW(TargetTrace::parse_csv(empty), FormatError);
  std::istringstream bad_field("time_s,target_kbps\n0,abc\n");
  EXPECT_THROW(TargetTrace::parse_csv(bad_field), FormatError);
  std::istringstream extra_column("time_s,target_kbps\n0,1,2\n");
  EXPECT_THROW(TargetTrace::parse_csv(extra_column), FormatError);
  std::istringstream unordered("time_s,target_kbps\n1,100\n0,100\n");
  EXPECT_THROW(TargetTrace::parse_csv(unordered), FormatError);
  std::istringstream header_only("time_s,target_kbps\n");
  EXPECT_THROW(TargetTrace::parse_csv(header_only), FormatError);
}

TEST(Trace, CsvRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "gemino_trace_round_trip.csv";
  const auto trace = TargetTrace::linear(800, 20, 10, 30);
  trace.save_csv(path);
  const auto loaded = TargetTrace::load_csv(path);
  ASSERT_EQ(loaded.points().size(), trace.points().size());
  for (std::size_t i = 0; i < trace.points().size(); ++i) {
    EXPECT_NEAR(loaded.points()[i].time_s, trace.points()[i].time_s, 1e-9);
    EXPECT_NEAR(loaded.points()[i].kbps, trace.points()[i].kbps, 1e-7);
  }
  std::filesystem::remove(path);
  EXPECT_THROW(TargetTrace::load_csv(path), FormatError);
}

RateProfile fixed_profile() {
  RateProfile p;
  p.ranges[128] = {12, 90};
  p.ranges[256] = {35, 260};
  p.ranges[512] = {70, 800};
  p.ranges[1024] = {140, 2500};
  return p;
}

TEST(Controller, ClampsIntoProfiledRange) {
  const auto ladder = BitrateLadder::standard();
  const auto profile = fixed_profile();
  for (double kbps = 1; kbps <= 1000; kbps += 1) {
    const auto d = controller_step(ladder, TargetTrace::constant(kbps), 0, profile);
    const RateRange& range = profile.at(d.point.resolution);
    EXPECT_GE(d.codec_target_kbps, range.min_kbps);
    EXPECT_LE(d.codec_target_kbps, range.max_kbps);
    EXPECT_EQ(d.target_in_profile, range.contains(kbps));
    if (d.target_in_profile) EXPECT_EQ(d.codec_target_kbps, kbps);
  }
  const auto low = controller_step(ladder, TargetTrace::constant(5), 0, profile);
  EXPECT_EQ(low.codec_target_kbps, 12);
  EXPECT_FALSE(low.target_in_profile);
  const auto mid = controller_step(ladder, TargetTrace::constant(31), 0, profile);
  EXPECT_EQ(mid.point.resolution, 256);
  EXPECT_EQ(mid.codec_target_kbps, 35);
}

TEST(Controller, SendModeFollowsPoint) {
  const auto ladder = BitrateLadder::standard();
  const auto profile = fixed_profile();
  const auto neural = controller_step(ladder, TargetTrace::constant(100), 0, profile).send_mode();
  EXPECT_EQ(neural.kind, FrameMode::neural);
  EXPECT_EQ(neural.resolution, 256);
  EXPECT_EQ(neural.kbps, 100);
  const auto fallback = controller_step(ladder, TargetTrace::constant(700), 0, profile).send_mode();
  EXPECT_EQ(fallback.kind, FrameMode::fallback);
  EXPECT_EQ(fallback.kbps, 700);
}

TEST(Controller, DecreasingTraceSwitchesOnlyAtCrossings) {
  const auto ladder = BitrateLadder::standard();
  const auto profile = fixed_profile();
  const int frames = 600;
  const double fps = 30;
  const auto trace = TargetTrace::linear(800, 20, frames, fps);
  std::vector<double> thresholds = {30, 180, 550};
  int previous = -1;
  double previous_target = 0;
  int switches = 0;
  for (int i = 0; i < frames; ++i) {
    const auto d = controller_step(ladder, trace, i / fps, profile);
    if (previous >= 0) {
      EXPECT_LE(d.point.resolution, previous);
      if (d.point.resolution != previous) {
        ++switches;
        bool crossed = false;
        for (double t : thresholds) crossed |= previous_target >= t && d.target_kbps < t;
        EXPECT_TRUE(crossed) << "switch at frame " << i;
      }
    }
    previous = d.point.resolution;
    previous_target = d.target_kbps;
  }
  EXPECT_EQ(switches, 3);
}

TEST(Controller, ConstantTraceKeepsOnePoint) {
  const auto ladder = BitrateLadder::standard();
  const auto profile = fixed_profile();
  const auto trace = TargetTrace::constant(120);
  const auto first = controller_step(ladder, trace, 0, profile);
  for (int i = 1; i < 90; ++i) {
    const auto d = controller_step(ladder, trace, i / 30.0, profile);
    EXPECT_EQ(d.point, first.point);
    EXPECT_EQ(d.codec_target_kbps, first.codec_target_kbps);
  }
}

}  // namespace
}  // namespace gemino
