#pragma once

// Intra-only block-DCT frame codec. Every frame is coded independently:
//   RGB [0,1] -> orthonormal luma/chroma basis on a 0..255 scale -> 2x2
//   box-subsampled chroma -> 8x8 orthonormal DCT per plane -> uniform
//   quantization per quantizer(quality) -> zigzag run/level tokens -> adaptive
//   range coding, one coder per plane.
//
// Both the color basis and the DCT are orthonormal, so the RGB squared error
// of a reconstruction is the chroma subsampling error plus the sum of the
// per-coefficient quantization errors (chroma weighted by 4). Every coarser
// quantizer beyond the scaled range only removes reconstruction points, which
// makes the unclamped round-trip error non-decreasing there on any frame.
//
// Serialized frame (little-endian):
//   0  "GMC1"
//   4  resolution id (index into kResolutions, 0xFF for other sizes)
//   5  quality (0 = finest .. kMaxQuality = coarsest)
//   6  flags (bit 0: key frame, always set)
//   7  reserved, 0
//   8  width  u16
//   10 height u16
//   12 three planes (luma, chroma 1, chroma 2), each: length as an unsigned LEB128 varint,
//      then that many range-coded bytes
//
// decode() returns the reconstruction without clamping so that
// decode(encode(decode(encode(x)))) == decode(encode(x)) holds exactly for
// frames whose dimensions are multiples of 16. Consumers clamp to [0, 1].

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "gemino/image_ops.hpp"
#include "gemino/range_coder.hpp"

namespace gemino {

/// Quantizer of one quality level; coarser levels never refine a finer one.
/// The kept count is fractional: each block has a fixed threshold u in (0, 1]
/// that rounds it, so per-block settings are monotone in quality and grids
/// still nest. DC steps double a whole plane at a time, luma first.
struct QuantizerSetting {
  double ac_step = 1;  // on the 0..255 sample scale
  double dc_step = 1;  // a power of two not above ac_step, before doublings
  double kept = 64;    // effective zigzag positions that may be nonzero, 1..64
  int luma_doublings = 0;
  int chroma_doublings = 0;

  int kept_for(double u) const noexcept { return std::min(64, static_cast<int>(std::floor(kept + 1.0 - u))); }
  double dc_step_for(int plane) const noexcept {
    return dc_step * std::exp2(plane == 0 ? luma_doublings : chroma_doublings);
  }
};

namespace detail {
inline constexpr int kScaledLevels = 65;   // ac_step = 0.5 * 2^(q/8) for q < 65
inline constexpr int kDroppingLevels = 40;  // kept falls geometrically from 64 to 1
inline constexpr int kDoublingLevels = 4;   // luma, chroma, luma, chroma

// Fixed per-block threshold in (0, 1].
inline double block_threshold(std::size_t plane, std::size_t block) noexcept {
  std::uint64_t z = (static_cast<std::uint64_t>(plane) << 32) + block + 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  z ^= z >> 31;
  return static_cast<double>((z >> 11) + 1) * 0x1.0p-53;
}

}  // namespace detail

inline constexpr int kMaxQuality = detail::kScaledLevels - 1 + detail::kDroppingLevels + detail::kDoublingLevels;
inline constexpr std::size_t kEncodedHeaderBytes = 12;

/// Levels below 65 grow the AC step by 2^(1/8) each. Beyond that the step
/// stays at 128, the kept count shrinks by a constant factor per level, then
/// whole planes double their DC step; both only remove reconstruction points.
inline QuantizerSetting quantizer(int quality) {
  if (quality < 0 || quality > kMaxQuality) throw Error("quality out of range: " + std::to_string(quality));
  QuantizerSetting s;
  const int scaled = std::min(quality, detail::kScaledLevels - 1);
  s.ac_step = 0.5 * std::exp2(scaled / 8.0);
  s.dc_step = std::exp2(std::floor(std::log2(s.ac_step)));
  const int dropping = std::min(quality - scaled, detail::kDroppingLevels);
  if (dropping == detail::kDroppingLevels) {
    s.kept = 1;
  } else if (dropping > 0) {
    s.kept = 64.0 * std::exp2(-6.0 * dropping / detail::kDroppingLevels);
  }
  const int doubling = quality - scaled - dropping;
  s.luma_doublings = (doubling + 1) / 2;
  s.chroma_doublings = doubling / 2;
  return s;
}

struct EncodedFrame {
  std::uint8_t resolution_id = kNoResolutionId;
  std::uint8_t quality = 0;
  bool is_key = true;
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bytes;  // the complete serialized frame, header included

  std::size_t size() const noexcept { return bytes.size(); }
  friend bool operator==(const EncodedFrame&, const EncodedFrame&) = default;
};

namespace detail {

inline constexpr std::array<int, 64> kZigzag = {
    0,  1,  8,  16, 9,  2,  3,  10, 17, 24, 32, 25, 18, 11, 4,  5,  12, 19, 26, 33, 40, 48,
    41, 34, 27, 20, 13, 6,  7,  14, 21, 28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23,
    30, 37, 44, 51, 58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63};

inline const std::array<double, 64>& dct_matrix() {
  static const std::array<double, 64> m = [] {
    std::array<double, 64> c{};
    const double pi = std::acos(-1.0);
    for (int k = 0; k < 8; ++k) {
      const double scale = k == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int n = 0; n < 8; ++n) c[k * 8 + n] = scale * std::cos(pi * (2 * n + 1) * k / 16.0);
    }
    return c;
  }();
  return m;
}

// out = C * in * C^T (forward) or C^T * in * C (inverse), row-major 8x8.
inline void dct8x8(const double* in, double* out, bool inverse) {
  const auto& c = dct_matrix();
  double tmp[64];
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 8; ++j) {
      double s = 0;
      for (int k = 0; k < 8; ++k) s += (inverse ? c[k * 8 + i] : c[i * 8 + k]) * in[k * 8 + j];
      tmp[i * 8 + j] = s;
    }
  }
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 8; ++j) {
      double s = 0;
      for (int k = 0; k < 8; ++k) s += tmp[i * 8 + k] * (inverse ? c[k * 8 + j] : c[j * 8 + k]);
      out[i * 8 + j] = s;
    }
  }
}

// Luma is the scaled channel mean; the two chroma axes are red-blue and
// green-magenta opponents. Rows are orthonormal, so the inverse is the transpose.
struct ColorTransform {
  Eigen::Matrix3d forward;
  Eigen::Matrix3d inverse;
  Eigen::Vector3d offset{0.0, 128.0, 128.0};

  static const ColorTransform& get() {
    static const ColorTransform t = [] {
      ColorTransform ct;
      const double r3 = 1 / std::sqrt(3.0), r2 = 1 / std::sqrt(2.0), r6 = 1 / std::sqrt(6.0);
      ct.forward << r3, r3, r3, r2, 0, -r2, r6, -2 * r6, r6;
      ct.inverse = ct.forward.transpose();
      return ct;
    }();
    return t;
  }
};

struct PlaneGeometry {
  int width = 0;   // samples actually coded
  int height = 0;
  int blocks_x = 0;
  int blocks_y = 0;
};

inline PlaneGeometry plane_geometry(int w, int h) { return {w, h, (w + 7) / 8, (h + 7) / 8}; }

inline void write_u16(std::vector<std::uint8_t>& out, unsigned v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
inline void write_leb128(std::vector<std::uint8_t>& out, std::uint32_t v) {
  do {
    const auto group = static_cast<std::uint8_t>(v & 0x7F);
    v >>= 7;
    out.push_back(group | (v ? 0x80 : 0));
  } while (v);
}
// Advances `at`; at most five groups.
inline std::uint32_t read_leb128(std::span<const std::uint8_t> in, std::size_t& at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 5; ++i) {
    if (at >= in.size()) throw FormatError("codec: truncated plane length");
    const std::uint8_t b = in[at++];
    v |= static_cast<std::uint64_t>(b & 0x7F) << (7 * i);
    if (!(b & 0x80)) {
      if (v > 0xFFFFFFFFull) break;
      return static_cast<std::uint32_t>(v);
    }
  }
  throw FormatError("codec: malformed plane length");
}
inline unsigned read_u16(std::span<const std::uint8_t> in, std::size_t at) { return in[at] | (in[at + 1] << 8); }

// Adaptive contexts of one plane kind; the two chroma planes share a set that carries
// over from the first to the second. Values are written as little-endian base-128
// groups; the first group uses the head model, later groups the extension model.
struct PlaneModels {
  entropy::AdaptiveModel dc{256};
  entropy::AdaptiveModel run{64};  // 0..62 zero run before a level, 63 = end of block
  entropy::AdaptiveModel level{256};
  entropy::AdaptiveModel ext{256};
};

inline constexpr int kEndOfBlock = 63;
inline constexpr int kMaxVarintGroups = 5;

inline std::uint32_t zigzag_encode(std::int32_t v) noexcept {
  return (static_cast<std::uint32_t>(v) << 1) ^ static_cast<std::uint32_t>(v >> 31);
}
inline std::int32_t zigzag_decode(std::uint32_t u) noexcept {
  return static_cast<std::int32_t>(u >> 1) ^ -static_cast<std::int32_t>(u & 1);
}

inline void put_varint(entropy::RangeEncoder& enc, entropy::AdaptiveModel& head, entropy::AdaptiveModel& ext,
                       std::uint32_t v) {
  bool first = true;
  do {
    const int group = static_cast<int>(v & 0x7F);
    v >>= 7;
    enc.encode(first ? head : ext, group | (v ? 0x80 : 0));
    first = false;
  } while (v);
}

inline std::uint32_t get_varint(entropy::RangeDecoder& dec, entropy::AdaptiveModel& head,
                                entropy::AdaptiveModel& ext) {
  std::uint32_t v = 0;
  for (int i = 0; i < kMaxVarintGroups; ++i) {
    const int b = dec.decode(i == 0 ? head : ext);
    v |= static_cast<std::uint32_t>(b & 0x7F) << (7 * i);
    if (!(b & 0x80)) return v;
  }
  throw FormatError("codec: varint too long");
}

// Median edge predictor over the reconstructed DC values of the left (a),
// upper (b) and upper-left (c) blocks, expressed in the current block's step;
// missing neighbors fall back along the edge. With one step everywhere this is
// the predictor over quantized levels.
class DcPredictor {
 public:
  explicit DcPredictor(int blocks_x) : blocks_x_(blocks_x) {}

  std::int32_t predict(double step) const {
    const std::size_t i = dc_.size();
    const bool has_left = i % blocks_x_ != 0, has_up = i >= blocks_x_;
    double v = 0;
    if (has_left && has_up) {
      const double a = dc_[i - 1], b = dc_[i - blocks_x_], c = dc_[i - blocks_x_ - 1];
      if (c >= std::max(a, b)) {
        v = std::min(a, b);
      } else if (c <= std::min(a, b)) {
        v = std::max(a, b);
      } else {
        v = a + b - c;
      }
    } else if (has_up) {
      v = dc_[i - blocks_x_];
    } else if (has_left) {
      v = dc_[i - 1];
    }
    return static_cast<std::int32_t>(std::clamp(std::nearbyint(v / step), -1e9, 1e9));
  }

  void push(double reconstructed) { dc_.push_back(reconstructed); }

 private:
  std::size_t blocks_x_;
  std::vector<double> dc_;
};

// Quantized levels of one block, zigzag order, are coded as a DC prediction
// residual followed by (run, level) pairs and an end-of-block token when needed.
inline void code_block(entropy::RangeEncoder& enc, PlaneModels& m, const std::int32_t* levels, DcPredictor& dc,
                       double dc_step) {
  put_varint(enc, m.dc, m.ext, zigzag_encode(levels[0] - dc.predict(dc_step)));
  dc.push(levels[0] * dc_step);
  int last = 0;
  for (int i = 63; i > 0; --i) {
    if (levels[i] != 0) {
      last = i;
      break;
    }
  }
  int run = 0;
  for (int i = 1; i <= last; ++i) {
    if (levels[i] == 0) {
      ++run;
      continue;
    }
    enc.encode(m.run, run);
    put_varint(enc, m.level, m.ext, zigzag_encode(levels[i]) - 1);
    run = 0;
  }
  if (last < 63) enc.encode(m.run, kEndOfBlock);
}

inline void decode_block(entropy::RangeDecoder& dec, PlaneModels& m, std::int32_t* levels, DcPredictor& dc,
                         double dc_step) {
  std::fill(levels, levels + 64, 0);
  levels[0] = static_cast<std::int32_t>(dc.predict(dc_step) +
                                        static_cast<std::int64_t>(zigzag_decode(get_varint(dec, m.dc, m.ext))));
  dc.push(levels[0] * dc_step);
  int pos = 1;
  while (pos < 64) {
    const int run = dec.decode(m.run);
    if (run == kEndOfBlock) break;
    pos += run;
    if (pos > 63) throw FormatError("codec: run past end of block");
    levels[pos] = zigzag_decode(get_varint(dec, m.level, m.ext) + 1);
    ++pos;
  }
}

}  // namespace detail

/// Forward transform of one frame, reusable across quality levels.
class FrameAnalysis {
 public:
  explicit FrameAnalysis(const Frame& frame) {
    if (frame.channels() != 3) throw ShapeError("codec: expected an RGB frame, got " + frame.shape_string());
    width_ = frame.width();
    height_ = frame.height();
    if (width_ <= 0 || height_ <= 0 || width_ % 8 != 0 || height_ % 8 != 0) {
      throw ShapeError("codec: frame dimensions must be positive multiples of 8, got " + frame.shape_string());
    }
    if (width_ > 0xFFFF || height_ > 0xFFFF) throw ShapeError("codec: frame too large");
    resolution_id_ = width_ == height_ ? resolution_id(width_) : kNoResolutionId;

    const auto& ct = detail::ColorTransform::get();
    const std::size_t n = static_cast<std::size_t>(width_) * height_;
    std::array<std::vector<double>, 3> full;
    for (auto& p : full) p.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::Vector3d rgb(255.0 * frame.data()[i], 255.0 * frame.data()[n + i], 255.0 * frame.data()[2 * n + i]);
      const Eigen::Vector3d ycc = ct.forward * rgb + ct.offset;
      for (int c = 0; c < 3; ++c) full[c][i] = ycc[c];
    }
    const int cw = width_ / 2, ch = height_ / 2;
    std::array<std::vector<double>, 3> sub;
    for (int c = 1; c < 3; ++c) {
      sub[c].resize(static_cast<std::size_t>(cw) * ch);
      for (int y = 0; y < ch; ++y) {
        for (int x = 0; x < cw; ++x) {
          const auto at = [&](int yy, int xx) { return full[c][static_cast<std::size_t>(yy) * width_ + xx]; };
          sub[c][static_cast<std::size_t>(y) * cw + x] =
              (at(2 * y, 2 * x) + at(2 * y, 2 * x + 1) + at(2 * y + 1, 2 * x) + at(2 * y + 1, 2 * x + 1)) / 4.0;
        }
      }
    }
    planes_[0] = transform(full[0], width_, height_);
    planes_[1] = transform(sub[1], cw, ch);
    planes_[2] = transform(sub[2], cw, ch);
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }

  EncodedFrame encode(int quality) const {
    const QuantizerSetting qs = quantizer(quality);
    EncodedFrame out;
    out.resolution_id = resolution_id_;
    out.quality = static_cast<std::uint8_t>(quality);
    out.width = width_;
    out.height = height_;
    auto& b = out.bytes;
    b = {'G', 'M', 'C', '1', resolution_id_, static_cast<std::uint8_t>(quality), 1, 0};
    detail::write_u16(b, static_cast<unsigned>(width_));
    detail::write_u16(b, static_cast<unsigned>(height_));
    std::vector<std::uint8_t> coded;
    std::array<std::int32_t, 64> levels{};
    std::array<detail::PlaneModels, 2> model_sets;  // luma, then both chroma planes
    for (std::size_t p = 0; p < planes_.size(); ++p) {
      const auto& plane = planes_[p];
      coded.clear();
      entropy::RangeEncoder enc(coded);
      auto& models = model_sets[p == 0 ? 0 : 1];
      detail::DcPredictor dc(plane.geometry.blocks_x);
      for (std::size_t blk = 0; blk < plane.coefficients.size() / 64; ++blk) {
        const double* coef = &plane.coefficients[blk * 64];
        const int kept = qs.kept_for(detail::block_threshold(p, blk));
        const double dc_step = qs.dc_step_for(static_cast<int>(p));
        for (int i = 0; i < 64; ++i) {
          const double q = i < kept ? std::nearbyint(coef[i] / (i == 0 ? dc_step : qs.ac_step)) : 0.0;
          levels[i] = static_cast<std::int32_t>(std::clamp(q, -1e8, 1e8));
        }
        detail::code_block(enc, models, levels.data(), dc, dc_step);
      }
      enc.finish();
      detail::write_leb128(b, static_cast<std::uint32_t>(coded.size()));
      b.insert(b.end(), coded.begin(), coded.end());
    }
    return out;
  }

 private:
  struct CodedPlane {
    detail::PlaneGeometry geometry;
    std::vector<double> coefficients;  // blocks in raster order, 64 zigzag-ordered values each
  };

  // Level-shifted, edge-padded to whole blocks, transformed.
  static CodedPlane transform(const std::vector<double>& samples, int w, int h) {
    CodedPlane p;
    p.geometry = detail::plane_geometry(w, h);
    p.coefficients.resize(static_cast<std::size_t>(p.geometry.blocks_x) * p.geometry.blocks_y * 64);
    double block[64], coef[64];
    std::size_t out = 0;
    for (int by = 0; by < p.geometry.blocks_y; ++by) {
      for (int bx = 0; bx < p.geometry.blocks_x; ++bx) {
        for (int y = 0; y < 8; ++y) {
          const int sy = std::min(by * 8 + y, h - 1);
          for (int x = 0; x < 8; ++x) {
            const int sx = std::min(bx * 8 + x, w - 1);
            block[y * 8 + x] = samples[static_cast<std::size_t>(sy) * w + sx] - 128.0;
          }
        }
        detail::dct8x8(block, coef, false);
        for (int i = 0; i < 64; ++i) p.coefficients[out + i] = coef[detail::kZigzag[i]];
        out += 64;
      }
    }
    return p;
  }

  int width_ = 0;
  int height_ = 0;
  std::uint8_t resolution_id_ = kNoResolutionId;
  std::array<CodedPlane, 3> planes_;
};

inline EncodedFrame encode(const Frame& frame, int quality) { return FrameAnalysis(frame).encode(quality); }

/// Validates the header and plane framing; plane contents are checked by decode().
inline EncodedFrame parse_encoded(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kEncodedHeaderBytes || bytes[0] != 'G' || bytes[1] != 'M' || bytes[2] != 'C' || bytes[3] != '1') {
    throw FormatError("codec: missing frame magic");
  }
  EncodedFrame f;
  f.resolution_id = bytes[4];
  f.quality = bytes[5];
  f.is_key = (bytes[6] & 1) != 0;
  f.width = static_cast<int>(detail::read_u16(bytes, 8));
  f.height = static_cast<int>(detail::read_u16(bytes, 10));
  if (f.quality > kMaxQuality) throw FormatError("codec: quality out of range");
  if (f.width == 0 || f.height == 0 || f.width % 8 || f.height % 8) throw FormatError("codec: bad frame dimensions");
  const std::uint8_t expected_id = f.width == f.height ? resolution_id(f.width) : kNoResolutionId;
  if (f.resolution_id != expected_id) throw FormatError("codec: resolution id does not match dimensions");
  std::size_t at = kEncodedHeaderBytes;
  for (int p = 0; p < 3; ++p) {
    const std::uint32_t len = detail::read_leb128(bytes, at);
    if (len > bytes.size() - at) throw FormatError("codec: truncated plane payload");
    at += len;
  }
  if (at != bytes.size()) throw FormatError("codec: trailing bytes after last plane");
  f.bytes.assign(bytes.begin(), bytes.end());
  return f;
}

inline Frame decode(const EncodedFrame& encoded) {
  const EncodedFrame f = parse_encoded(encoded.bytes);
  const std::span<const std::uint8_t> bytes(f.bytes);
  const QuantizerSetting qs = quantizer(f.quality);
  const int w = f.width, h = f.height;
  std::array<std::vector<double>, 3> planes;
  std::array<detail::PlaneGeometry, 3> geo = {detail::plane_geometry(w, h), detail::plane_geometry(w / 2, h / 2),
                                              detail::plane_geometry(w / 2, h / 2)};
  std::size_t at = kEncodedHeaderBytes;
  std::array<std::int32_t, 64> levels{};
  double coef[64], block[64];
  std::array<detail::PlaneModels, 2> model_sets;
  for (int p = 0; p < 3; ++p) {
    const std::uint32_t len = detail::read_leb128(bytes, at);
    entropy::RangeDecoder dec(bytes.subspan(at, len));
    at += len;
    auto& models = model_sets[p == 0 ? 0 : 1];
    const auto& g = geo[p];
    planes[p].assign(static_cast<std::size_t>(g.width) * g.height, 0.0);
    detail::DcPredictor dc(g.blocks_x);
    for (int by = 0; by < g.blocks_y; ++by) {
      for (int bx = 0; bx < g.blocks_x; ++bx) {
        const double dc_step = qs.dc_step_for(p);
        detail::decode_block(dec, models, levels.data(), dc, dc_step);
        for (int i = 0; i < 64; ++i) coef[detail::kZigzag[i]] = levels[i] * (i == 0 ? dc_step : qs.ac_step);
        detail::dct8x8(coef, block, true);
        for (int y = 0; y < 8 && by * 8 + y < g.height; ++y) {
          for (int x = 0; x < 8 && bx * 8 + x < g.width; ++x) {
            planes[p][static_cast<std::size_t>(by * 8 + y) * g.width + bx * 8 + x] = block[y * 8 + x] + 128.0;
          }
        }
      }
    }
    if (!dec.exhausted()) throw FormatError("codec: unread bytes in plane " + std::to_string(p));
  }
  const auto& ct = detail::ColorTransform::get();
  Frame out(3, h, w);
  const std::size_t n = static_cast<std::size_t>(w) * h;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const std::size_t ci = static_cast<std::size_t>(y / 2) * (w / 2) + x / 2;
      const Eigen::Vector3d ycc(planes[0][i], planes[1][ci], planes[2][ci]);
      const Eigen::Vector3d rgb = ct.inverse * (ycc - ct.offset);
      for (int c = 0; c < 3; ++c) out.data()[c * n + i] = static_cast<float>(rgb[c] / 255.0);
    }
  }
  return out;
}

inline Frame decode(std::span<const std::uint8_t> bytes) { return decode(parse_encoded(bytes)); }

/// Bytes available to one frame at `kbps` and `fps`.
inline std::size_t frame_budget_bytes(double kbps, double fps) {
  if (!(kbps > 0) || !(fps > 0)) throw Error("frame budget needs positive bitrate and frame rate");
  return static_cast<std::size_t>(std::floor(kbps * 1000.0 / 8.0 / fps));
}

struct RateControlResult {
  EncodedFrame frame;
  bool feasible = false;        // frame fits the budget
  int level = 0;                // requested quality; frame.quality may be finer
  std::size_t budget_bytes = 0;
  std::size_t overshoot_bytes() const noexcept { return feasible ? 0 : frame.size() - budget_bytes; }
};

/// Finest quality whose frame fits the budget, found by bisection over the
/// quality index; the coarsest quality, flagged infeasible, if none fits.
inline RateControlResult encode_at_bitrate(const FrameAnalysis& analysis, double kbps, double fps) {
  RateControlResult r;
  r.budget_bytes = frame_budget_bytes(kbps, fps);
  int lo = 0, hi = kMaxQuality;
  EncodedFrame best;
  int best_level = -1;
  while (lo < hi) {
    const int mid = (lo + hi) / 2;
    EncodedFrame trial = analysis.encode(mid);
    if (trial.size() <= r.budget_bytes) {
      hi = mid;
      best = std::move(trial);
      best_level = mid;
    } else {
      lo = mid + 1;
    }
  }
  if (best_level != lo) best = analysis.encode(lo);
  r.level = lo;
  r.feasible = best.size() <= r.budget_bytes;
  r.frame = std::move(best);
  return r;
}

inline RateControlResult encode_at_bitrate(const Frame& frame, double kbps, double fps) {
  return encode_at_bitrate(FrameAnalysis(frame), kbps, fps);
}

/// Narrow codec interface used by the streaming layer.
class FrameCodec {
 public:
  virtual ~FrameCodec() = default;
  virtual EncodedFrame encode(const Frame& frame, int quality) const = 0;
  virtual RateControlResult encode_at_bitrate(const Frame& frame, double kbps, double fps) const = 0;
  virtual Frame decode(std::span<const std::uint8_t> bytes) const = 0;
};

class BlockDctCodec final : public FrameCodec {
 public:
  EncodedFrame encode(const Frame& frame, int quality) const override { return gemino::encode(frame, quality); }
  RateControlResult encode_at_bitrate(const Frame& frame, double kbps, double fps) const override {
    return gemino::encode_at_bitrate(frame, kbps, fps);
  }
  Frame decode(std::span<const std::uint8_t> bytes) const override { return gemino::decode(bytes); }
};

struct RateRange {
  double min_kbps = 0;
  double max_kbps = 0;
  bool contains(double kbps) const noexcept { return kbps >= min_kbps && kbps <= max_kbps; }
  double clamp(double kbps) const noexcept { return std::min(std::max(kbps, min_kbps), max_kbps); }
  friend bool operator==(const RateRange&, const RateRange&) = default;
};

/// Achievable mean bitrate per square resolution across the quality range.
struct RateProfile {
  double fps = 30.0;
  std::map<int, RateRange> ranges;

  bool has(int resolution) const { return ranges.count(resolution) != 0; }
  const RateRange& at(int resolution) const {
    const auto it = ranges.find(resolution);
    if (it == ranges.end()) throw Error("rate profile has no entry for resolution " + std::to_string(resolution));
    return it->second;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["fps"] = fps;
    j["resolutions"] = nlohmann::ordered_json::array();
    for (const auto& [res, r] : ranges) {
      j["resolutions"].push_back({{"resolution", res}, {"min_kbps", r.min_kbps}, {"max_kbps", r.max_kbps}});
    }
    return j;
  }

  static RateProfile from_json(const nlohmann::json& j) {
    try {
      RateProfile p;
      p.fps = j.at("fps").get<double>();
      for (const auto& e : j.at("resolutions")) {
        const int res = e.at("resolution").get<int>();
        if (!is_supported_resolution(res)) throw FormatError("rate profile: unsupported resolution");
        p.ranges[res] = {e.at("min_kbps").get<double>(), e.at("max_kbps").get<double>()};
      }
      return p;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("rate profile: ") + e.what());
    }
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << to_json().dump(2) << "\n";
  }

  static RateProfile load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot read rate profile '" + path.string() + "'");
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("rate profile '" + path.string() + "': " + e.what());
    }
    return from_json(j);
  }

  friend bool operator==(const RateProfile&, const RateProfile&) = default;
};

/// Sweeps every quality level over the corpus at each supported square
/// resolution the corpus can be box-downsampled to.
inline RateProfile profile(std::span<const Frame> corpus, double fps, int quality_stride = 1) {
  if (corpus.empty()) throw Error("profile: empty corpus");
  if (quality_stride < 1) throw Error("profile: quality stride must be positive");
  const int source = corpus.front().height();
  for (const Frame& f : corpus) {
    if (f.height() != source || f.width() != source || !is_supported_resolution(source)) {
      throw ShapeError("profile: corpus frames must share one supported square resolution");
    }
  }
  RateProfile p;
  p.fps = fps;
  for (int res : kResolutions) {
    if (res > source) break;
    std::vector<double> total_bytes(kMaxQuality + 1, 0.0);
    for (const Frame& f : corpus) {
      const FrameAnalysis a(downsample(f, res));
      for (int q = 0; q <= kMaxQuality; q += quality_stride) total_bytes[q] += static_cast<double>(a.encode(q).size());
      if (kMaxQuality % quality_stride != 0) total_bytes[kMaxQuality] += static_cast<double>(a.encode(kMaxQuality).size());
    }
    RateRange r{1e300, 0.0};
    for (int q = 0; q <= kMaxQuality; ++q) {
      if (q % quality_stride != 0 && q != kMaxQuality) continue;
      const double kbps = total_bytes[q] / static_cast<double>(corpus.size()) * 8.0 * fps / 1000.0;
      r.min_kbps = std::min(r.min_kbps, kbps);
      r.max_kbps = std::max(r.max_kbps, kbps);
    }
    p.ranges[res] = r;
  }
  return p;
}

}  // namespace gemino
