#pragma once

// End-to-end experiments over raw video files. Every command writes into its
// output directory:
//   run      metrics.csv, summary.json, reconstructed.rgb (+ .json sidecar)
//   adapt    adapt.csv, metrics.csv, summary.json, reconstructed.rgb (+ .json)
//   rd-curve rd_curve.csv
//   profile  profile.json
// With compute measurement off (the default) all outputs are byte-identical
// across reruns with the same inputs and seed.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gemino/adaptation.hpp"
#include "gemino/channel.hpp"
#include "gemino/metrics.hpp"
#include "gemino/synthetic.hpp"
#include "gemino/video_io.hpp"

namespace gemino {

inline const char* kMetricsFile = "metrics.csv";
inline const char* kSummaryFile = "summary.json";
inline const char* kVideoFile = "reconstructed.rgb";
inline const char* kAdaptFile = "adapt.csv";
inline const char* kRdCurveFile = "rd_curve.csv";
inline const char* kProfileFile = "profile.json";

enum class RunMode { neural, bicubic, keypoints, fallback, adaptive };

inline const char* to_string(RunMode m) noexcept {
  switch (m) {
    case RunMode::neural: return "neural";
    case RunMode::bicubic: return "bicubic";
    case RunMode::keypoints: return "keypoints";
    case RunMode::fallback: return "fallback";
    case RunMode::adaptive: return "adaptive";
  }
  return "?";
}

inline RunMode parse_run_mode(const std::string& s) {
  for (RunMode m : {RunMode::neural, RunMode::bicubic, RunMode::keypoints, RunMode::fallback, RunMode::adaptive}) {
    if (s == to_string(m)) return m;
  }
  throw UsageError("unknown mode '" + s + "' (expected neural, bicubic, keypoints, fallback or adaptive)");
}

/// "min_kbps:resolution:mode,..." with mode neural or fallback, e.g. the
/// standard ladder "0:128:neural,30:256:neural,180:512:neural,550:1024:fallback".
inline BitrateLadder parse_ladder(const std::string& text) {
  std::vector<LadderRow> rows;
  std::istringstream list(text);
  std::string item;
  while (std::getline(list, item, ',')) {
    std::replace(item.begin(), item.end(), ':', ' ');
    std::istringstream fields(item);
    LadderRow row;
    std::string mode, extra;
    if (!(fields >> row.min_kbps >> row.resolution >> mode) || (fields >> extra) ||
        (mode != "neural" && mode != "fallback")) {
      throw UsageError("ladder rows must look like min_kbps:resolution:neural|fallback");
    }
    if (!is_supported_resolution(row.resolution)) {
      throw UsageError("unsupported ladder resolution " + std::to_string(row.resolution));
    }
    row.mode = mode == "neural" ? FrameMode::neural : FrameMode::fallback;
    rows.push_back(row);
  }
  try {
    return BitrateLadder(std::move(rows));
  } catch (const UsageError&) {
    throw;
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

struct RunConfig {
  std::filesystem::path input;
  std::optional<std::filesystem::path> weights_dir;
  BitrateLadder ladder = BitrateLadder::standard();
  std::optional<std::filesystem::path> trace;
  std::optional<std::filesystem::path> profile;  // adaptive; derived from the input when absent
  RunMode mode = RunMode::neural;
  int resolution = 256;  // PF resolution for neural and bicubic
  double kbps = 100;     // PF codec target for neural, bicubic and fallback
  std::optional<double> fps;  // overrides the sidecar rate
  std::uint64_t seed = 0;
  std::filesystem::path out = ".";
  int max_frames = 0;  // 0 replays the whole input
  int reference_quality = 12;
  int reference_interval = 0;
  double bandwidth_kbps = std::numeric_limits<double>::infinity();
  double delay_ms = 0;
  bool measure_compute = false;
  bool write_video = true;
  int profile_frames = 4;
  int profile_quality_stride = 4;

  void validate() const {
    if (input.empty()) throw UsageError("an input video is required");
    if (mode == RunMode::adaptive && !trace) throw UsageError("adaptive mode needs a trace");
    if ((mode == RunMode::neural || mode == RunMode::bicubic) && !is_supported_resolution(resolution)) {
      throw UsageError("unsupported PF resolution " + std::to_string(resolution));
    }
    if ((mode == RunMode::neural || mode == RunMode::bicubic || mode == RunMode::fallback) && !(kbps > 0)) {
      throw UsageError("the target bitrate must be positive");
    }
    if (fps && !(*fps > 0)) throw UsageError("fps must be positive");
    if (max_frames < 0) throw UsageError("frame limit must be non-negative");
    if (reference_quality < 0 || reference_quality > kMaxQuality) throw UsageError("reference quality out of range");
    if (reference_interval < 0) throw UsageError("reference interval must be non-negative");
    if (!(bandwidth_kbps > 0) || delay_ms < 0) throw UsageError("link bandwidth must be positive, delay non-negative");
    if (profile_frames < 1 || profile_quality_stride < 1) throw UsageError("profile sampling must be positive");
  }
};

/// Input geometry after validation: square, supported, at least 128.
struct InputClip {
  VideoInfo info;
  double fps = 30;
  int frames = 0;
  int resolution = 0;
};

inline InputClip open_clip(const RunConfig& cfg) {
  InputClip c;
  c.info = read_video_info(cfg.input);
  if (c.info.width != c.info.height || !is_supported_resolution(c.info.width) || c.info.width < 128) {
    throw FormatError("input video must be square at 128, 256, 512 or 1024 pixels, got " +
                      std::to_string(c.info.width) + "x" + std::to_string(c.info.height));
  }
  c.resolution = c.info.width;
  c.fps = cfg.fps.value_or(c.info.fps);
  c.frames = cfg.max_frames > 0 ? std::min(cfg.max_frames, c.info.frames) : c.info.frames;
  if (c.frames == 0) throw FormatError("input video has no frames");
  return c;
}

/// Per-frame outcome of a replay; packets are dropped after accounting.
struct ReplayFrame {
  MetricsRecord record;
  double time_s = 0;
  FrameMode mode = FrameMode::neural;
  int resolution = 0;           // PF resolution, 0 for keypoints
  std::size_t payload_bytes = 0;  // codec or keypoint payload of this frame
  std::size_t frame_bytes = 0;    // wire bytes of this frame's body, references excluded
  int quality = -1;
  bool feasible = true;
};

struct Replay {
  InputClip clip;
  std::vector<ReplayFrame> frames;
};

inline double kbps_per_frame(std::size_t bytes, double fps) { return static_cast<double>(bytes) * 8.0 * fps / 1000.0; }

/// Sender -> link -> receiver over the input clip with the given policy.
inline Replay replay(const RunConfig& cfg, const InputClip& clip, const ModePolicy& policy, Upsampler upsampler,
                     const std::optional<std::filesystem::path>& video_out) {
  auto models = std::make_shared<ModelBank>(clip.resolution, cfg.weights_dir, cfg.seed);
  Sender sender({clip.resolution, clip.fps, cfg.reference_quality, cfg.reference_interval, kDefaultMtu}, models);
  Receiver receiver({clip.resolution, upsampler}, models);
  RawVideoReader source_reader(cfg.input);
  RawVideoReader truth_reader(cfg.input);
  std::optional<RawVideoWriter> writer;
  if (video_out) writer.emplace(*video_out, clip.resolution, clip.resolution, clip.fps);

  Replay result;
  result.clip = clip;
  const auto sink = [&](const SentFrame& sent, const ReceivedFrame& received, const FrameTiming& timing) {
    const Frame truth = truth_reader.frame(static_cast<int>(sent.frame_id));
    const Frame shown = clamp_unit(received.output);
    ReplayFrame f;
    f.record.frame_id = sent.frame_id;
    f.record.psnr_db = psnr(shown, truth);
    f.record.ssim = ssim(shown, truth);
    f.record.ssim_db = ssim_to_db(f.record.ssim);
    f.record.bytes_on_wire = sent.wire_bytes();
    f.record.latency_ms = timing.latency_s() * 1000.0;
    f.record.resolution_id = sent.resolution ? resolution_id(sent.resolution) : kNoResolutionId;
    f.record.mode = received.method;
    f.time_s = timing.read_s;
    f.mode = sent.mode;
    f.resolution = sent.resolution;
    f.payload_bytes = sent.payload_bytes;
    f.frame_bytes = sent.frame_bytes;
    f.quality = sent.quality;
    f.feasible = sent.feasible;
    result.frames.push_back(std::move(f));
    if (writer) writer->write(shown);
  };
  channel_run(
      sender, receiver, [&](int i) { return source_reader.frame(i); }, clip.frames, policy,
      LinkSchedule::constant(cfg.bandwidth_kbps, cfg.delay_ms), sink, {cfg.measure_compute, 4});
  if (writer) writer->close();
  return result;
}

inline std::vector<MetricsRecord> records_of(const Replay& r) {
  std::vector<MetricsRecord> out;
  out.reserve(r.frames.size());
  for (const ReplayFrame& f : r.frames) out.push_back(f.record);
  return out;
}

inline Summary write_run_outputs(const Replay& r, const std::filesystem::path& out) {
  const auto records = records_of(r);
  write_metrics_csv(out / kMetricsFile, records);
  Summary s = account(records, static_cast<double>(records.size()) / r.clip.fps);
  s.save(out / kSummaryFile);
  return s;
}

inline std::vector<Frame> read_corpus(const std::filesystem::path& video, int max_frames) {
  RawVideoReader reader(video);
  const int n = max_frames > 0 ? std::min(max_frames, reader.info().frames) : reader.info().frames;
  std::vector<Frame> frames;
  for (int i = 0; i < n; ++i) frames.push_back(reader.frame(i));
  return frames;
}

inline RateProfile profile_for(const RunConfig& cfg, const InputClip& clip) {
  if (cfg.profile) return RateProfile::load(*cfg.profile);
  const auto corpus = read_corpus(cfg.input, cfg.profile_frames);
  return profile(corpus, clip.fps, cfg.profile_quality_stride);
}

struct AdaptPlan {
  TargetTrace trace;
  RateProfile profile;
  std::vector<ControllerDecision> decisions;  // one per frame
};

inline AdaptPlan plan_adaptation(const RunConfig& cfg, const InputClip& clip) {
  AdaptPlan plan{TargetTrace::load_csv(*cfg.trace), profile_for(cfg, clip), {}};
  for (const LadderRow& row : cfg.ladder.rows()) {
    if (row.resolution > clip.resolution) {
      throw UsageError("ladder resolution " + std::to_string(row.resolution) + " exceeds the input resolution");
    }
    if (!plan.profile.has(row.resolution)) {
      throw FormatError("rate profile lacks ladder resolution " + std::to_string(row.resolution));
    }
  }
  for (int i = 0; i < clip.frames; ++i) {
    plan.decisions.push_back(controller_step(cfg.ladder, plan.trace, i / clip.fps, plan.profile));
  }
  return plan;
}

inline ModePolicy fixed_policy(const RunConfig& cfg) {
  switch (cfg.mode) {
    case RunMode::neural:
    case RunMode::bicubic: {
      const SendMode m = SendMode::neural(cfg.resolution, cfg.kbps);
      return [m](int, double) { return m; };
    }
    case RunMode::keypoints: return [](int, double) { return SendMode::keypoints_only(); };
    case RunMode::fallback: {
      const SendMode m = SendMode::fallback(cfg.kbps);
      return [m](int, double) { return m; };
    }
    case RunMode::adaptive: break;
  }
  throw UsageError("adaptive mode has no fixed policy");
}

inline void prepare_out(const std::filesystem::path& out) {
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec || !std::filesystem::is_directory(out)) throw Error("cannot create output directory '" + out.string() + "'");
}

struct RunOutcome {
  Replay replay;
  Summary summary;
};

inline RunOutcome cmd_run(const RunConfig& cfg) {
  cfg.validate();
  const InputClip clip = open_clip(cfg);
  if ((cfg.mode == RunMode::neural || cfg.mode == RunMode::bicubic) && cfg.resolution > clip.resolution) {
    throw UsageError("PF resolution exceeds the input resolution");
  }
  prepare_out(cfg.out);
  ModePolicy policy;
  if (cfg.mode == RunMode::adaptive) {
    auto plan = std::make_shared<AdaptPlan>(plan_adaptation(cfg, clip));
    policy = [plan](int i, double) { return plan->decisions[static_cast<std::size_t>(i)].send_mode(); };
  } else {
    policy = fixed_policy(cfg);
  }
  const Upsampler up = cfg.mode == RunMode::bicubic ? Upsampler::bicubic : Upsampler::neural;
  const std::optional<std::filesystem::path> video =
      cfg.write_video ? std::optional(cfg.out / kVideoFile) : std::nullopt;
  RunOutcome outcome{replay(cfg, clip, policy, up, video), {}};
  outcome.summary = write_run_outputs(outcome.replay, cfg.out);
  return outcome;
}

struct AdaptRow {
  std::uint32_t frame_id = 0;
  double time_s = 0;
  double target_kbps = 0;
  double codec_target_kbps = 0;
  double achieved_kbps = 0;  // PF payload of this frame at the frame rate
  double wire_kbps = 0;      // same frame with packet headers, references excluded
  int resolution = 0;
  FrameMode mode = FrameMode::neural;
  bool target_in_profile = false;
  double ssim_db = 0;
};

struct AdaptOutcome {
  RateProfile profile;
  std::vector<AdaptRow> rows;
  Summary summary;
};

inline constexpr const char* kAdaptCsvHeader =
    "frame_id,time_s,target_kbps,codec_target_kbps,achieved_kbps,wire_kbps,resolution,mode,target_in_profile,ssim_db";

inline void write_adapt_csv(const std::filesystem::path& path, std::span<const AdaptRow> rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << kAdaptCsvHeader << "\n";
  for (const AdaptRow& r : rows) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%u,%.6f,%.3f,%.3f,%.3f,%.3f,%d,%s,%d,%.6f\n", r.frame_id, r.time_s, r.target_kbps,
                  r.codec_target_kbps, r.achieved_kbps, r.wire_kbps, r.resolution, to_string(r.mode),
                  r.target_in_profile ? 1 : 0, r.ssim_db);
    out << buf;
  }
}

/// Controller-driven replay. `upsampler` chooses how PF frames below the
/// output resolution are reconstructed.
inline AdaptOutcome cmd_adapt(const RunConfig& base, Upsampler upsampler = Upsampler::neural) {
  RunConfig cfg = base;
  cfg.mode = RunMode::adaptive;
  cfg.validate();
  const InputClip clip = open_clip(cfg);
  prepare_out(cfg.out);
  const auto plan = std::make_shared<AdaptPlan>(plan_adaptation(cfg, clip));
  const ModePolicy policy = [plan](int i, double) { return plan->decisions[static_cast<std::size_t>(i)].send_mode(); };
  const std::optional<std::filesystem::path> video =
      cfg.write_video ? std::optional(cfg.out / kVideoFile) : std::nullopt;
  const Replay r = replay(cfg, clip, policy, upsampler, video);

  AdaptOutcome outcome{plan->profile, {}, write_run_outputs(r, cfg.out)};
  for (const ReplayFrame& f : r.frames) {
    const ControllerDecision& d = plan->decisions[f.record.frame_id];
    AdaptRow row;
    row.frame_id = f.record.frame_id;
    row.time_s = f.time_s;
    row.target_kbps = d.target_kbps;
    row.codec_target_kbps = d.codec_target_kbps;
    row.achieved_kbps = kbps_per_frame(f.payload_bytes, clip.fps);
    row.wire_kbps = kbps_per_frame(f.frame_bytes, clip.fps);
    row.resolution = f.resolution;
    row.mode = f.mode;
    row.target_in_profile = d.target_in_profile;
    row.ssim_db = f.record.ssim_db;
    outcome.rows.push_back(row);
  }
  write_adapt_csv(cfg.out / kAdaptFile, outcome.rows);
  return outcome;
}

struct RdPoint {
  RunMode mode = RunMode::neural;
  int resolution = 0;  // ignored for keypoints and fallback
  double kbps = 0;     // ignored for keypoints
};

/// "mode:resolution:kbps", or just "keypoints".
inline RdPoint parse_rd_point(const std::string& text) {
  RdPoint p;
  const auto first = text.find(':');
  p.mode = parse_run_mode(text.substr(0, first));
  if (p.mode == RunMode::adaptive) throw UsageError("rd-curve points cannot be adaptive");
  if (p.mode == RunMode::keypoints && first == std::string::npos) return p;
  const auto second = first == std::string::npos ? first : text.find(':', first + 1);
  if (second == std::string::npos) throw UsageError("rd-curve point '" + text + "' must be mode:resolution:kbps");
  try {
    std::size_t used = 0;
    const std::string res = text.substr(first + 1, second - first - 1), rate = text.substr(second + 1);
    p.resolution = std::stoi(res, &used);
    if (used != res.size()) throw std::invalid_argument(res);
    p.kbps = std::stod(rate, &used);
    if (used != rate.size()) throw std::invalid_argument(rate);
  } catch (const std::logic_error&) {
    throw UsageError("rd-curve point '" + text + "' must be mode:resolution:kbps");
  }
  return p;
}

struct RdRow {
  RdPoint point;
  int resolution = 0;     // effective PF resolution, 0 for keypoints
  double bitrate_kbps = 0;  // mean frame wire rate, references excluded
  double payload_kbps = 0;
  double psnr_db = 0;
  double ssim_db = 0;
  int frames = 0;
  int feasible_frames = 0;
};

inline constexpr const char* kRdCsvHeader =
    "mode,resolution,target_kbps,bitrate_kbps,payload_kbps,psnr_db,ssim_db,frames,feasible_frames";

/// One short replay per grid point; rows sorted by achieved bitrate.
inline std::vector<RdRow> cmd_rd_curve(const RunConfig& base, const std::vector<RdPoint>& grid) {
  if (grid.empty()) throw UsageError("rd-curve needs at least one grid point");
  RunConfig probe = base;
  probe.mode = RunMode::fallback;
  probe.validate();
  const InputClip clip = open_clip(probe);
  prepare_out(base.out);
  std::vector<RdRow> rows;
  for (const RdPoint& p : grid) {
    RunConfig cfg = base;
    cfg.mode = p.mode;
    cfg.resolution = p.mode == RunMode::fallback ? clip.resolution : p.resolution;
    cfg.kbps = p.mode == RunMode::keypoints ? 1.0 : p.kbps;
    cfg.validate();
    if ((p.mode == RunMode::neural || p.mode == RunMode::bicubic) && p.resolution >= clip.resolution) {
      throw UsageError("rd-curve PF resolution must be below the input resolution");
    }
    const Upsampler up = p.mode == RunMode::bicubic ? Upsampler::bicubic : Upsampler::neural;
    const Replay r = replay(cfg, clip, fixed_policy(cfg), up, std::nullopt);
    RdRow row;
    row.point = p;
    row.resolution = p.mode == RunMode::keypoints ? 0 : cfg.resolution;
    row.frames = static_cast<int>(r.frames.size());
    for (const ReplayFrame& f : r.frames) {
      row.bitrate_kbps += kbps_per_frame(f.frame_bytes, clip.fps);
      row.payload_kbps += kbps_per_frame(f.payload_bytes, clip.fps);
      row.psnr_db += f.record.psnr_db;
      row.ssim_db += f.record.ssim_db;
      row.feasible_frames += f.feasible ? 1 : 0;
    }
    row.bitrate_kbps /= row.frames;
    row.payload_kbps /= row.frames;
    row.psnr_db /= row.frames;
    row.ssim_db /= row.frames;
    rows.push_back(row);
  }
  std::stable_sort(rows.begin(), rows.end(), [](const RdRow& a, const RdRow& b) { return a.bitrate_kbps < b.bitrate_kbps; });
  std::ofstream out(base.out / kRdCurveFile, std::ios::trunc);
  if (!out) throw Error("cannot write rd-curve output");
  out << kRdCsvHeader << "\n";
  for (const RdRow& r : rows) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s,%d,%.3f,%.3f,%.3f,%.6f,%.6f,%d,%d\n", to_string(r.point.mode), r.resolution,
                  r.point.mode == RunMode::keypoints ? 0.0 : r.point.kbps, r.bitrate_kbps, r.payload_kbps, r.psnr_db,
                  r.ssim_db, r.frames, r.feasible_frames);
    out << buf;
  }
  return rows;
}

/// Profiles the first `max_frames` frames of every corpus video (all frames
/// when 0); all videos must share one square resolution.
inline RateProfile cmd_profile(const std::vector<std::filesystem::path>& corpus, std::optional<double> fps,
                               const std::filesystem::path& out, int max_frames = 8, int quality_stride = 1) {
  if (corpus.empty()) throw UsageError("profile needs at least one corpus video");
  if (max_frames < 0 || quality_stride < 1) throw UsageError("profile sampling must be positive");
  std::vector<Frame> frames;
  double rate = 0;
  for (const auto& video : corpus) {
    const VideoInfo info = read_video_info(video);
    if (rate == 0) rate = fps.value_or(info.fps);
    auto part = read_corpus(video, max_frames);
    for (Frame& f : part) {
      if (!frames.empty() && !f.same_shape(frames.front())) throw FormatError("corpus videos differ in size");
      frames.push_back(std::move(f));
    }
  }
  if (frames.empty()) throw FormatError("profile corpus has no frames");
  if (frames.front().height() != frames.front().width() || !is_supported_resolution(frames.front().height())) {
    throw FormatError("corpus frames must be square at a supported resolution");
  }
  if (fps && !(*fps > 0)) throw UsageError("fps must be positive");
  prepare_out(out);
  RateProfile p = profile(frames, rate, quality_stride);
  p.save(out / kProfileFile);
  return p;
}

/// Writes a procedural clip as raw video with its sidecar.
inline void write_synthetic_video(const std::filesystem::path& path, int size, int frames, double fps,
                                  std::uint64_t seed, SyntheticStyle style = SyntheticStyle::talking_head) {
  if (frames < 1) throw UsageError("a synthetic clip needs at least one frame");
  if (path.has_parent_path()) prepare_out(path.parent_path());
  const SyntheticVideo clip(size, seed, style);
  RawVideoWriter writer(path, size, size, fps);
  for (int t = 0; t < frames; ++t) writer.write(clip.frame(t));
  writer.close();
}

}  // namespace gemino
