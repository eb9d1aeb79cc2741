// Exit status: 0 success, 1 internal failure, 2 usage error, 3 input format error.

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gemino/experiment.hpp"

namespace {

constexpr int kExitInternal = 1;
constexpr int kExitUsage = 2;
constexpr int kExitFormat = 3;

struct Flags {
  gemino::RunConfig cfg;
  std::string weights, trace, profile, ladder, mode = "neural", upsampler = "neural";
  double fps = 0;
  bool no_video = false;
};

// Options shared by run, adapt and rd-curve.
void add_run_options(CLI::App* cmd, Flags& f) {
  cmd->add_option("-i,--input", f.cfg.input, "Raw RGB8 video; a <path>.json sidecar must sit next to it")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("-w,--weights", f.weights, "Weights directory with <name>.manifest files; random weights if unset")
      ->envname("GEMINO_WEIGHTS_DIR");
  cmd->add_option("-o,--out", f.cfg.out, "Output directory")->required();
  cmd->add_option("--ladder", f.ladder, "Ladder rows min_kbps:resolution:neural|fallback, comma separated");
  cmd->add_option("--fps", f.fps, "Override the sidecar frame rate");
  cmd->add_option("--seed", f.cfg.seed, "Seed for random weights");
  cmd->add_option("--frames", f.cfg.max_frames, "Replay at most this many frames (0: all)");
  cmd->add_option("--reference-quality", f.cfg.reference_quality, "Codec quality of reference frames");
  cmd->add_option("--reference-interval", f.cfg.reference_interval, "Frames between references (0: first only)");
  cmd->add_option("--bandwidth-kbps", f.cfg.bandwidth_kbps, "Link bandwidth (default unlimited)");
  cmd->add_option("--delay-ms", f.cfg.delay_ms, "One-way link delay");
  cmd->add_flag("--measure-compute", f.cfg.measure_compute, "Add measured compute time to latency (not reproducible)");
  cmd->add_flag("--no-video", f.no_video, "Skip writing the reconstructed video");
}

void finish_flags(Flags& f) {
  if (!f.weights.empty()) f.cfg.weights_dir = f.weights;
  if (!f.trace.empty()) f.cfg.trace = f.trace;
  if (!f.profile.empty()) f.cfg.profile = f.profile;
  if (!f.ladder.empty()) f.cfg.ladder = gemino::parse_ladder(f.ladder);
  if (f.fps != 0) f.cfg.fps = f.fps;
  f.cfg.mode = gemino::parse_run_mode(f.mode);
  f.cfg.write_video = !f.no_video;
}

gemino::Upsampler parse_upsampler(const std::string& s) {
  if (s == "neural") return gemino::Upsampler::neural;
  if (s == "bicubic") return gemino::Upsampler::bicubic;
  throw gemino::UsageError("unknown upsampler '" + s + "' (expected neural or bicubic)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural-upsampling video conferencing experiments"};
  app.require_subcommand(1);

  Flags run_flags;
  CLI::App* run = app.add_subcommand("run", "Replay a video through sender, link and receiver");
  add_run_options(run, run_flags);
  run->add_option("-m,--mode", run_flags.mode, "neural, bicubic, keypoints, fallback or adaptive");
  run->add_option("-r,--resolution", run_flags.cfg.resolution, "PF resolution for neural and bicubic modes");
  run->add_option("-b,--kbps", run_flags.cfg.kbps, "PF codec target bitrate");
  run->add_option("--trace", run_flags.trace, "Target-bitrate trace CSV (adaptive mode)");
  run->add_option("--profile", run_flags.profile, "Rate profile JSON (adaptive mode; derived from the input if unset)");

  Flags adapt_flags;
  CLI::App* adapt = app.add_subcommand("adapt", "Follow a target-bitrate trace with the bitrate ladder");
  add_run_options(adapt, adapt_flags);
  adapt->add_option("--trace", adapt_flags.trace, "Target-bitrate trace CSV")->required();
  adapt->add_option("--profile", adapt_flags.profile, "Rate profile JSON (derived from the input if unset)");
  adapt->add_option("--upsampler", adapt_flags.upsampler, "neural or bicubic reconstruction of PF frames");

  Flags rd_flags;
  std::vector<std::string> rd_points;
  CLI::App* rd = app.add_subcommand("rd-curve", "Rate-distortion points over a grid of operating points");
  add_run_options(rd, rd_flags);
  rd->add_option("-p,--point", rd_points, "mode:resolution:kbps, repeatable (\"keypoints\" alone is allowed)")
      ->required();

  std::vector<std::filesystem::path> corpus;
  std::filesystem::path profile_out;
  double profile_fps = 0;
  int profile_frames = 8, quality_stride = 1;
  CLI::App* prof = app.add_subcommand("profile", "Measure the codec's achievable bitrate range per resolution");
  prof->add_option("-c,--corpus", corpus, "Raw videos, repeatable")->required()->check(CLI::ExistingFile);
  prof->add_option("-o,--out", profile_out, "Output directory")->required();
  prof->add_option("--fps", profile_fps, "Override the sidecar frame rate");
  prof->add_option("--frames", profile_frames, "Frames per video (0: all)");
  prof->add_option("--quality-stride", quality_stride, "Sample every n-th quality level");

  std::filesystem::path synth_out;
  int synth_size = 256, synth_frames = 30;
  double synth_fps = 30;
  std::uint64_t synth_seed = 0;
  std::string synth_style = "talking-head";
  CLI::App* synth = app.add_subcommand("synth", "Write a procedural test clip as raw video");
  synth->add_option("-o,--output", synth_out, "Video path; the sidecar goes to <path>.json")->required();
  synth->add_option("--size", synth_size, "Square frame size");
  synth->add_option("--frames", synth_frames, "Number of frames");
  synth->add_option("--fps", synth_fps, "Frame rate");
  synth->add_option("--seed", synth_seed, "Scene seed");
  synth->add_option("--style", synth_style, "talking-head or gradient");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*run) {
      finish_flags(run_flags);
      const auto outcome = gemino::cmd_run(run_flags.cfg);
      std::cout << "frames " << outcome.summary.frames << ", mean " << outcome.summary.mean_kbps << " Kbps, PSNR "
                << outcome.summary.mean("psnr_db") << " dB, SSIM " << outcome.summary.mean("ssim_db") << " dB\n";
    } else if (*adapt) {
      finish_flags(adapt_flags);
      const auto outcome = gemino::cmd_adapt(adapt_flags.cfg, parse_upsampler(adapt_flags.upsampler));
      std::cout << "frames " << outcome.rows.size() << ", mean " << outcome.summary.mean_kbps << " Kbps\n";
    } else if (*rd) {
      finish_flags(rd_flags);
      std::vector<gemino::RdPoint> grid;
      for (const auto& p : rd_points) grid.push_back(gemino::parse_rd_point(p));
      const auto rows = gemino::cmd_rd_curve(rd_flags.cfg, grid);
      std::cout << rows.size() << " operating points\n";
    } else if (*prof) {
      const auto p = gemino::cmd_profile(corpus, profile_fps != 0 ? std::optional(profile_fps) : std::nullopt,
                                         profile_out, profile_frames, quality_stride);
      for (const auto& [res, range] : p.ranges) {
        std::cout << res << ": " << range.min_kbps << " - " << range.max_kbps << " Kbps\n";
      }
    } else if (*synth) {
      gemino::SyntheticStyle style;
      if (synth_style == "talking-head") {
        style = gemino::SyntheticStyle::talking_head;
      } else if (synth_style == "gradient") {
        style = gemino::SyntheticStyle::gradient;
      } else {
        throw gemino::UsageError("unknown style '" + synth_style + "'");
      }
      if (synth_size <= 0 || !(synth_fps > 0)) throw gemino::UsageError("size and fps must be positive");
      gemino::write_synthetic_video(synth_out, synth_size, synth_frames, synth_fps, synth_seed, style);
    }
  } catch (const gemino::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const gemino::FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kExitFormat;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInternal;
  }
  return EXIT_SUCCESS;
}
