#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gemino/codec.hpp"
#include "gemino/session.hpp"

namespace gemino {

struct LadderRow {
  double min_kbps = 0;  // inclusive lower bound; the row extends to the next row's bound
  int resolution = 0;
  FrameMode mode = FrameMode::neural;
};

/// Rows in increasing bitrate; a target belongs to the last row whose bound it
/// reaches, so every boundary value goes to the higher-resolution row.
class BitrateLadder {
 public:
  static BitrateLadder standard() {
    return BitrateLadder({{0, 128, FrameMode::neural},
                          {30, 256, FrameMode::neural},
                          {180, 512, FrameMode::neural},
                          {550, 1024, FrameMode::fallback}});
  }

  explicit BitrateLadder(std::vector<LadderRow> rows) : rows_(std::move(rows)) {
    if (rows_.empty() || rows_.front().min_kbps != 0) throw Error("ladder: the first row must start at 0 Kbps");
    for (std::size_t i = 1; i < rows_.size(); ++i) {
      if (!(rows_[i].min_kbps > rows_[i - 1].min_kbps) || rows_[i].resolution <= rows_[i - 1].resolution) {
        throw Error("ladder: thresholds and resolutions must increase strictly");
      }
    }
  }

  const std::vector<LadderRow>& rows() const noexcept { return rows_; }

  const LadderRow& row_for(double kbps) const {
    if (!(kbps > 0)) throw Error("ladder: target bitrate must be positive");
    const LadderRow* row = &rows_.front();
    for (const LadderRow& r : rows_) {
      if (kbps >= r.min_kbps) row = &r;
    }
    return *row;
  }

  const LadderRow* find(int resolution) const noexcept {
    for (const LadderRow& r : rows_) {
      if (r.resolution == resolution) return &r;
    }
    return nullptr;
  }

 private:
  std::vector<LadderRow> rows_;
};

struct OperatingPoint {
  int resolution = 0;
  FrameMode mode = FrameMode::neural;
  friend bool operator==(const OperatingPoint&, const OperatingPoint&) = default;
};

inline OperatingPoint resolution_for_bitrate(const BitrateLadder& ladder, double kbps) {
  const LadderRow& r = ladder.row_for(kbps);
  return {r.resolution, r.mode};
}

/// Weight set for a ladder resolution; fallback rows use none.
inline std::optional<std::string> model_selector(const BitrateLadder& ladder, int resolution) {
  const LadderRow* r = ladder.find(resolution);
  if (!r) throw Error("model selector: resolution " + std::to_string(resolution) + " is not in the ladder");
  if (r->mode == FrameMode::fallback) return std::nullopt;
  return weight_set_for(resolution);
}

/// Step-interpolated target bitrate: the value of the last breakpoint at or
/// before t.
class TargetTrace {
 public:
  struct Point {
    double time_s = 0;
    double kbps = 0;
    friend bool operator==(const Point&, const Point&) = default;
  };

  explicit TargetTrace(std::vector<Point> points) : points_(std::move(points)) {
    if (points_.empty()) throw Error("trace: no breakpoints");
    for (std::size_t i = 0; i < points_.size(); ++i) {
      if (!(points_[i].kbps > 0)) throw Error("trace: targets must be positive");
      if (i > 0 && !(points_[i].time_s > points_[i - 1].time_s)) throw Error("trace: times must increase strictly");
    }
  }

  static TargetTrace constant(double kbps) { return TargetTrace({{0.0, kbps}}); }

  /// One breakpoint per frame, decreasing linearly from `from` to `to`.
  static TargetTrace linear(double from_kbps, double to_kbps, int frames, double fps) {
    if (frames < 2) throw Error("trace: a ramp needs at least two frames");
    std::vector<Point> pts;
    for (int i = 0; i < frames; ++i) {
      pts.push_back({i / fps, from_kbps + (to_kbps - from_kbps) * i / (frames - 1)});
    }
    return TargetTrace(std::move(pts));
  }

  const std::vector<Point>& points() const noexcept { return points_; }

  double at(double t) const {
    if (t < points_.front().time_s) throw Error("trace does not cover t = " + std::to_string(t));
    auto it = std::upper_bound(points_.begin(), points_.end(), t,
                               [](double v, const Point& p) { return v < p.time_s; });
    return (it - 1)->kbps;
  }

  /// Two columns with a header line, e.g. "time_s,target_kbps".
  static TargetTrace parse_csv(std::istream& in, const std::string& source = "trace") {
    std::string line;
    if (!std::getline(in, line)) throw FormatError(source + ": empty file, header required");
    if (line.find("time") == std::string::npos) throw FormatError(source + ": missing header line");
    std::vector<Point> pts;
    int line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      std::replace(line.begin(), line.end(), ',', ' ');
      std::istringstream fields(line);
      Point p;
      std::string extra;
      if (!(fields >> p.time_s >> p.kbps) || (fields >> extra)) {
        throw FormatError(source + ":" + std::to_string(line_no) + ": expected two numeric columns");
      }
      pts.push_back(p);
    }
    try {
      return TargetTrace(std::move(pts));
    } catch (const FormatError&) {
      throw;
    } catch (const Error& e) {
      throw FormatError(source + ": " + e.what());
    }
  }

  static TargetTrace load_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot read trace '" + path.string() + "'");
    return parse_csv(in, path.string());
  }

  void save_csv(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << "time_s,target_kbps\n";
    out.precision(10);
    for (const Point& p : points_) out << p.time_s << "," << p.kbps << "\n";
  }

 private:
  std::vector<Point> points_;
};

struct ControllerDecision {
  OperatingPoint point;
  double target_kbps = 0;
  double codec_target_kbps = 0;  // target clamped to the profiled range of point.resolution
  bool target_in_profile = false;

  SendMode send_mode() const {
    return point.mode == FrameMode::fallback ? SendMode::fallback(codec_target_kbps)
                                             : SendMode::neural(point.resolution, codec_target_kbps);
  }
};

/// Memoryless: depends only on the trace value at now_s.
inline ControllerDecision controller_step(const BitrateLadder& ladder, const TargetTrace& trace, double now_s,
                                          const RateProfile& profile) {
  ControllerDecision d;
  d.target_kbps = trace.at(now_s);
  d.point = resolution_for_bitrate(ladder, d.target_kbps);
  const RateRange& range = profile.at(d.point.resolution);
  d.codec_target_kbps = range.clamp(d.target_kbps);
  d.target_in_profile = range.contains(d.target_kbps);
  return d;
}

}  // namespace gemino
