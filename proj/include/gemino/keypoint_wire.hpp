#pragma once

// Keypoint payload, 10 bytes per keypoint in keypoint order:
//   x u8, y u8           round((v + 1) / 2 * 255), v clamped to [-1, 1]
//   a, b, c, d  fp16 LE  jacobian entries, row-major, saturated to +-65504

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "gemino/keypoints.hpp"

namespace gemino {

inline constexpr std::size_t kKeypointBytes = 10;
inline constexpr std::size_t kKeypointPayloadBytes = kKeypointBytes * kNumKeypoints;

inline std::uint16_t to_half_bits(float v) {
  constexpr float kMaxHalf = 65504.0f;
  if (std::isfinite(v)) v = std::clamp(v, -kMaxHalf, kMaxHalf);
  return Eigen::numext::bit_cast<std::uint16_t>(Eigen::half(v));
}

inline float from_half_bits(std::uint16_t bits) {
  return static_cast<float>(Eigen::numext::bit_cast<Eigen::half>(bits));
}

inline std::uint8_t quantize_location(float v) {
  const float t = (std::clamp(v, -1.0f, 1.0f) + 1.0f) * 0.5f * 255.0f;
  return static_cast<std::uint8_t>(std::lround(t));
}

inline float dequantize_location(std::uint8_t q) { return static_cast<float>(q) / 255.0f * 2.0f - 1.0f; }

inline std::vector<std::uint8_t> encode_keypoints(const KeypointSet& kp) {
  std::vector<std::uint8_t> out;
  out.reserve(kKeypointPayloadBytes);
  for (const Keypoint& p : kp.points) {
    out.push_back(quantize_location(p.x));
    out.push_back(quantize_location(p.y));
    for (float v : {p.jacobian.a, p.jacobian.b, p.jacobian.c, p.jacobian.d}) {
      const std::uint16_t h = to_half_bits(v);
      out.push_back(static_cast<std::uint8_t>(h));
      out.push_back(static_cast<std::uint8_t>(h >> 8));
    }
  }
  return out;
}

inline KeypointSet decode_keypoints(std::span<const std::uint8_t> bytes) {
  if (bytes.size() != kKeypointPayloadBytes) {
    throw FormatError("keypoint payload must be " + std::to_string(kKeypointPayloadBytes) + " bytes, got " +
                      std::to_string(bytes.size()));
  }
  KeypointSet kp;
  for (std::size_t k = 0; k < kp.points.size(); ++k) {
    const std::uint8_t* b = bytes.data() + k * kKeypointBytes;
    const auto half = [&](int i) { return from_half_bits(static_cast<std::uint16_t>(b[2 + 2 * i] | (b[3 + 2 * i] << 8))); };
    kp.points[k] = {dequantize_location(b[0]), dequantize_location(b[1]), {half(0), half(1), half(2), half(3)}};
  }
  return kp;
}

}  // namespace gemino
