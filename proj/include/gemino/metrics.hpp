#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gemino/tensor.hpp"

namespace gemino {

inline constexpr double kMaxDb = 100.0;

/// 10 log10(1 / MSE) over all samples with peak 1, capped at 100 dB.
inline double psnr(const Frame& a, const Frame& b) {
  if (!a.same_shape(b)) throw ShapeError("psnr: " + a.shape_string() + " vs " + b.shape_string());
  if (a.size() == 0) throw ShapeError("psnr: empty frames");
  double se = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.values()[i]) - b.values()[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.size());
  if (mse == 0) return kMaxDb;
  return std::min(kMaxDb, -10.0 * std::log10(mse));
}

namespace detail {

inline std::vector<double> luma(const Frame& f) {
  const std::size_t n = static_cast<std::size_t>(f.height()) * f.width();
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = 0.299 * f.data()[i] + 0.587 * f.data()[n + i] + 0.114 * f.data()[2 * n + i];
  }
  return y;
}

inline constexpr int kSsimWindow = 11;

inline const std::array<double, kSsimWindow>& ssim_kernel() {
  static const std::array<double, kSsimWindow> k = [] {
    std::array<double, kSsimWindow> w{};
    double sum = 0;
    for (int i = 0; i < kSsimWindow; ++i) {
      const double d = i - kSsimWindow / 2;
      w[i] = std::exp(-d * d / (2 * 1.5 * 1.5));
      sum += w[i];
    }
    for (double& v : w) v /= sum;
    return w;
  }();
  return k;
}

// Separable Gaussian filter keeping only windows fully inside the image.
inline std::vector<double> filter_valid(const std::vector<double>& img, int h, int w) {
  const auto& k = ssim_kernel();
  const int oh = h - kSsimWindow + 1, ow = w - kSsimWindow + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow), out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int i = 0; i < kSsimWindow; ++i) s += k[i] * img[static_cast<std::size_t>(y) * w + x + i];
      rows[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int i = 0; i < kSsimWindow; ++i) s += k[i] * rows[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  return out;
}

}  // namespace detail

/// Mean SSIM of the luma planes over all 11x11 Gaussian windows (sigma 1.5)
/// inside the frame, peak 1, clamped to [0, 1].
inline double ssim(const Frame& a, const Frame& b) {
  if (!a.same_shape(b)) throw ShapeError("ssim: " + a.shape_string() + " vs " + b.shape_string());
  if (a.channels() != 3) throw ShapeError("ssim: expected RGB frames, got " + a.shape_string());
  const int h = a.height(), w = a.width();
  if (h < detail::kSsimWindow || w < detail::kSsimWindow) throw ShapeError("ssim: frames must be at least 11x11");
  const std::vector<double> ya = detail::luma(a), yb = detail::luma(b);
  std::vector<double> aa(ya.size()), bb(ya.size()), ab(ya.size());
  for (std::size_t i = 0; i < ya.size(); ++i) {
    aa[i] = ya[i] * ya[i];
    bb[i] = yb[i] * yb[i];
    ab[i] = ya[i] * yb[i];
  }
  const auto mu_a = detail::filter_valid(ya, h, w), mu_b = detail::filter_valid(yb, h, w);
  const auto e_aa = detail::filter_valid(aa, h, w), e_bb = detail::filter_valid(bb, h, w);
  const auto e_ab = detail::filter_valid(ab, h, w);
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double var_a = e_aa[i] - mu_a[i] * mu_a[i];
    const double var_b = e_bb[i] - mu_b[i] * mu_b[i];
    const double cov = e_ab[i] - mu_a[i] * mu_b[i];
    total += ((2 * mu_a[i] * mu_b[i] + c1) * (2 * cov + c2)) /
             ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (var_a + var_b + c2));
  }
  return std::clamp(total / static_cast<double>(mu_a.size()), 0.0, 1.0);
}

inline double ssim_to_db(double s) {
  if (s >= 1.0) return kMaxDb;
  return std::min(kMaxDb, -10.0 * std::log10(1.0 - std::max(0.0, s)));
}

inline double ssim_db(const Frame& a, const Frame& b) { return ssim_to_db(ssim(a, b)); }

struct MetricsRecord {
  std::uint32_t frame_id = 0;
  double psnr_db = 0;
  double ssim = 0;
  double ssim_db = 0;
  std::size_t bytes_on_wire = 0;
  double latency_ms = 0;
  std::uint8_t resolution_id = 0xFF;
  std::string mode;
};

inline constexpr const char* kMetricsCsvHeader =
    "frame_id,psnr_db,ssim,ssim_db,bytes_on_wire,latency_ms,resolution_id,mode";

inline std::string to_csv_row(const MetricsRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%u,%.6f,%.6f,%.6f,%zu,%.3f,%u,", r.frame_id, r.psnr_db, r.ssim, r.ssim_db,
                r.bytes_on_wire, r.latency_ms, static_cast<unsigned>(r.resolution_id));
  return buf + r.mode;
}

inline void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsRecord> records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << kMetricsCsvHeader << "\n";
  for (const MetricsRecord& r : records) out << to_csv_row(r) << "\n";
}

/// Sorted sample with linearly interpolated quantiles.
class Cdf {
 public:
  explicit Cdf(std::vector<double> values) : sorted_(std::move(values)) {
    if (sorted_.empty()) throw Error("cdf: no values");
    std::sort(sorted_.begin(), sorted_.end());
  }

  const std::vector<double>& sorted() const noexcept { return sorted_; }

  double quantile(double p) const {
    const double pos = std::clamp(p, 0.0, 1.0) * static_cast<double>(sorted_.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted_.size() - 1);
    return sorted_[lo] + (pos - static_cast<double>(lo)) * (sorted_[hi] - sorted_[lo]);
  }

  double mean() const {
    double s = 0;
    for (double v : sorted_) s += v;
    return s / static_cast<double>(sorted_.size());
  }

 private:
  std::vector<double> sorted_;
};

inline constexpr std::array<double, 5> kReportedQuantiles = {0.05, 0.25, 0.5, 0.75, 0.95};

struct Summary {
  std::size_t frames = 0;
  std::size_t total_bytes = 0;
  double duration_s = 0;
  double mean_kbps = 0;
  std::map<std::string, Cdf> metrics;  // psnr_db, ssim, ssim_db, latency_ms, bytes_on_wire

  double mean(const std::string& name) const { return metrics.at(name).mean(); }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["frames"] = frames;
    j["total_bytes"] = total_bytes;
    j["duration_s"] = duration_s;
    j["mean_kbps"] = mean_kbps;
    for (const auto& [name, cdf] : metrics) {
      nlohmann::ordered_json m;
      m["mean"] = cdf.mean();
      for (double q : kReportedQuantiles) {
        char key[8];
        std::snprintf(key, sizeof key, "p%02d", static_cast<int>(std::lround(q * 100)));
        m["quantiles"][key] = cdf.quantile(q);
      }
      m["cdf"] = cdf.sorted();
      j["metrics"][name] = std::move(m);
    }
    return j;
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << to_json().dump(2) << "\n";
  }
};

/// Mean bitrate is total wire bytes * 8 / duration.
inline Summary account(std::span<const MetricsRecord> records, double duration_s) {
  if (records.empty()) throw Error("account: no records");
  if (!(duration_s > 0)) throw Error("account: duration must be positive");
  Summary s;
  s.frames = records.size();
  s.duration_s = duration_s;
  std::map<std::string, std::vector<double>> columns;
  for (const MetricsRecord& r : records) {
    s.total_bytes += r.bytes_on_wire;
    columns["psnr_db"].push_back(r.psnr_db);
    columns["ssim"].push_back(r.ssim);
    columns["ssim_db"].push_back(r.ssim_db);
    columns["latency_ms"].push_back(r.latency_ms);
    columns["bytes_on_wire"].push_back(static_cast<double>(r.bytes_on_wire));
  }
  s.mean_kbps = static_cast<double>(s.total_bytes) * 8.0 / duration_s / 1000.0;
  for (auto& [name, values] : columns) s.metrics.emplace(name, Cdf(std::move(values)));
  return s;
}

}  // namespace gemino
