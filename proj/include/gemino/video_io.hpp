#pragma once

// Raw video: `<path>` holds frames back to back, each height*width pixels of
// interleaved 8-bit R, G, B in row-major order. `<path>.json` holds
//   {"width": W, "height": H, "fps": F, "frames": N}
// and the data file must be exactly N*H*W*3 bytes.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gemino/tensor.hpp"

namespace gemino {

struct VideoInfo {
  int width = 0;
  int height = 0;
  double fps = 30.0;
  int frames = 0;

  std::size_t frame_bytes() const noexcept { return static_cast<std::size_t>(width) * height * 3; }
  friend bool operator==(const VideoInfo&, const VideoInfo&) = default;
};

inline std::filesystem::path sidecar_path(const std::filesystem::path& video) {
  return std::filesystem::path(video.string() + ".json");
}

inline VideoInfo read_video_info(const std::filesystem::path& video) {
  const auto meta = sidecar_path(video);
  std::ifstream in(meta);
  if (!in) throw FormatError("cannot read video sidecar '" + meta.string() + "'");
  VideoInfo info;
  try {
    nlohmann::json j;
    in >> j;
    info.width = j.at("width").get<int>();
    info.height = j.at("height").get<int>();
    info.fps = j.at("fps").get<double>();
    info.frames = j.at("frames").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("video sidecar '" + meta.string() + "': " + e.what());
  }
  if (info.width <= 0 || info.height <= 0 || info.frames < 0 || !(info.fps > 0)) {
    throw FormatError("video sidecar '" + meta.string() + "': non-positive dimensions or frame rate");
  }
  std::error_code ec;
  const auto size = std::filesystem::file_size(video, ec);
  if (ec) throw FormatError("cannot read video '" + video.string() + "'");
  if (size != info.frame_bytes() * static_cast<std::uint64_t>(info.frames)) {
    throw FormatError("video '" + video.string() + "' has " + std::to_string(size) + " bytes, sidecar implies " +
                      std::to_string(info.frame_bytes() * static_cast<std::uint64_t>(info.frames)));
  }
  return info;
}

inline Frame frame_from_rgb8(std::span<const std::uint8_t> rgb, int height, int width) {
  Frame f(3, height, width);
  const std::size_t n = static_cast<std::size_t>(height) * width;
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) f.data()[c * n + i] = rgb[i * 3 + c] / 255.0f;
  }
  return f;
}

/// Samples are clamped to [0, 1] and rounded to the nearest level.
inline std::vector<std::uint8_t> frame_to_rgb8(const Frame& f) {
  if (f.channels() != 3) throw ShapeError("frame_to_rgb8: expected 3 channels, got " + f.shape_string());
  const std::size_t n = static_cast<std::size_t>(f.height()) * f.width();
  std::vector<std::uint8_t> out(n * 3);
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) {
      out[i * 3 + c] = static_cast<std::uint8_t>(std::lround(std::clamp(f.data()[c * n + i], 0.0f, 1.0f) * 255.0f));
    }
  }
  return out;
}

class RawVideoReader {
 public:
  explicit RawVideoReader(const std::filesystem::path& path) : info_(read_video_info(path)), in_(path, std::ios::binary) {
    if (!in_) throw FormatError("cannot open video '" + path.string() + "'");
  }

  const VideoInfo& info() const noexcept { return info_; }

  Frame frame(int index) {
    if (index < 0 || index >= info_.frames) throw Error("video frame index out of range: " + std::to_string(index));
    std::vector<std::uint8_t> buf(info_.frame_bytes());
    in_.seekg(static_cast<std::streamoff>(info_.frame_bytes() * static_cast<std::size_t>(index)));
    in_.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in_) throw FormatError("short read in video frame " + std::to_string(index));
    return frame_from_rgb8(buf, info_.height, info_.width);
  }

 private:
  VideoInfo info_;
  std::ifstream in_;
};

/// Writes frames as they come; the sidecar is written by close() or the
/// destructor.
class RawVideoWriter {
 public:
  RawVideoWriter(const std::filesystem::path& path, int width, int height, double fps)
      : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw Error("cannot write video '" + path.string() + "'");
    info_ = {width, height, fps, 0};
  }
  RawVideoWriter(const RawVideoWriter&) = delete;
  RawVideoWriter& operator=(const RawVideoWriter&) = delete;
  ~RawVideoWriter() {
    try {
      close();
    } catch (...) {
    }
  }

  void write(const Frame& f) {
    if (f.height() != info_.height || f.width() != info_.width) {
      throw ShapeError("video writer: frame " + f.shape_string() + " does not match the stream size");
    }
    const auto bytes = frame_to_rgb8(f);
    out_.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    ++info_.frames;
  }

  void close() {
    if (closed_) return;
    closed_ = true;
    out_.close();
    write_sidecar(path_, info_);
  }

  static void write_sidecar(const std::filesystem::path& video, const VideoInfo& info) {
    nlohmann::ordered_json j;
    j["width"] = info.width;
    j["height"] = info.height;
    j["fps"] = info.fps;
    j["frames"] = info.frames;
    std::ofstream meta(sidecar_path(video), std::ios::trunc);
    if (!meta) throw Error("cannot write '" + sidecar_path(video).string() + "'");
    meta << j.dump(2) << "\n";
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  VideoInfo info_;
  bool closed_ = false;
};

}  // namespace gemino
