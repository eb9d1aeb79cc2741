#pragma once

// Wire packets. Every packet is a 12-byte little-endian header followed by
// its payload fragment:
//
//   0  stream_id      u8   1 = per-frame (PF), 2 = reference, 3 = keypoints
//   1  resolution_id  u8   index into kResolutions, 0xFF when not applicable
//   2  frame_id       u32
//   6  frag_index     u16
//   8  frag_count     u16
//   10 payload_len    u16  bytes following the header
//
// A packet never exceeds the MTU, header included.

#include <algorithm>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gemino/error.hpp"
#include "gemino/image_ops.hpp"

namespace gemino {

enum class StreamId : std::uint8_t { per_frame = 1, reference = 2, keypoints = 3 };

inline constexpr std::size_t kPacketHeaderBytes = 12;
inline constexpr std::size_t kDefaultMtu = 1200;
inline constexpr std::size_t kMaxFragments = 0xFFFF;

struct Packet {
  StreamId stream = StreamId::per_frame;
  std::uint8_t resolution_id = kNoResolutionId;
  std::uint32_t frame_id = 0;
  std::uint16_t frag_index = 0;
  std::uint16_t frag_count = 1;
  std::vector<std::uint8_t> payload;

  std::size_t wire_size() const noexcept { return kPacketHeaderBytes + payload.size(); }

  std::vector<std::uint8_t> serialize() const {
    std::vector<std::uint8_t> out;
    out.reserve(wire_size());
    out.push_back(static_cast<std::uint8_t>(stream));
    out.push_back(resolution_id);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(frame_id >> (8 * i)));
    for (unsigned v : {unsigned{frag_index}, unsigned{frag_count}, static_cast<unsigned>(payload.size())}) {
      out.push_back(static_cast<std::uint8_t>(v));
      out.push_back(static_cast<std::uint8_t>(v >> 8));
    }
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
  }

  static Packet parse(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kPacketHeaderBytes) throw FormatError("packet: shorter than its header");
    const auto u16 = [&](std::size_t at) { return static_cast<std::uint16_t>(bytes[at] | (bytes[at + 1] << 8)); };
    Packet p;
    if (bytes[0] < 1 || bytes[0] > 3) throw FormatError("packet: unknown stream id " + std::to_string(bytes[0]));
    p.stream = static_cast<StreamId>(bytes[0]);
    p.resolution_id = bytes[1];
    for (int i = 0; i < 4; ++i) p.frame_id |= static_cast<std::uint32_t>(bytes[2 + i]) << (8 * i);
    p.frag_index = u16(6);
    p.frag_count = u16(8);
    const std::size_t len = u16(10);
    if (bytes.size() != kPacketHeaderBytes + len) throw FormatError("packet: payload length does not match header");
    if (p.frag_index >= p.frag_count) throw FormatError("packet: fragment index out of range");
    p.payload.assign(bytes.begin() + kPacketHeaderBytes, bytes.end());
    return p;
  }

  friend bool operator==(const Packet&, const Packet&) = default;
};

/// Splits `payload` into fragments of at most mtu - header bytes. An empty
/// payload still yields one (empty) packet.
inline std::vector<Packet> packetize(StreamId stream, std::uint32_t frame_id, std::uint8_t resolution_id,
                                     std::span<const std::uint8_t> payload, std::size_t mtu = kDefaultMtu) {
  if (mtu <= kPacketHeaderBytes) throw Error("packetize: MTU must exceed the " + std::to_string(kPacketHeaderBytes) +
                                             "-byte header");
  const std::size_t chunk = std::min<std::size_t>(mtu - kPacketHeaderBytes, 0xFFFF);
  const std::size_t count = std::max<std::size_t>(1, (payload.size() + chunk - 1) / chunk);
  if (count > kMaxFragments) throw Error("packetize: frame " + std::to_string(frame_id) + " needs too many fragments");
  std::vector<Packet> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    Packet& p = out[i];
    p.stream = stream;
    p.resolution_id = resolution_id;
    p.frame_id = frame_id;
    p.frag_index = static_cast<std::uint16_t>(i);
    p.frag_count = static_cast<std::uint16_t>(count);
    const std::size_t begin = i * chunk, end = std::min(payload.size(), begin + chunk);
    p.payload.assign(payload.begin() + static_cast<std::ptrdiff_t>(begin),
                     payload.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

/// Payload of one frame; fragments may arrive in any order.
inline std::vector<std::uint8_t> reassemble(std::span<const Packet> packets) {
  if (packets.empty()) throw FormatError("reassemble: no packets");
  const Packet& first = packets.front();
  const std::string frame = "frame " + std::to_string(first.frame_id);
  std::vector<const Packet*> slots(first.frag_count, nullptr);
  for (const Packet& p : packets) {
    if (p.frame_id != first.frame_id) {
      throw FormatError("reassemble: " + frame + " mixed with frame " + std::to_string(p.frame_id));
    }
    if (p.stream != first.stream || p.resolution_id != first.resolution_id || p.frag_count != first.frag_count) {
      throw FormatError("reassemble: " + frame + " has inconsistent fragment headers");
    }
    if (p.frag_index >= p.frag_count) throw FormatError("reassemble: " + frame + " fragment index out of range");
    if (slots[p.frag_index]) {
      throw FormatError("reassemble: " + frame + " has duplicate fragment " + std::to_string(p.frag_index));
    }
    slots[p.frag_index] = &p;
  }
  std::vector<std::uint8_t> payload;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (!slots[i]) throw FormatError("reassemble: " + frame + " is missing fragment " + std::to_string(i));
    payload.insert(payload.end(), slots[i]->payload.begin(), slots[i]->payload.end());
  }
  return payload;
}

inline std::size_t wire_bytes(std::span<const Packet> packets) noexcept {
  std::size_t total = 0;
  for (const Packet& p : packets) total += p.wire_size();
  return total;
}

}  // namespace gemino
