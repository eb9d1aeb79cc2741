#pragma once

// Sender and receiver halves of a streaming session.
//
// Per frame the sender emits, in order:
//   - a reference frame on stream 2 when the session needs one (first frame,
//     then every `reference_interval` frames if that is nonzero), coded at the
//     output resolution with the intra codec;
//   - either a PF frame on stream 1 (box-downsampled, rate-controlled, tagged
//     with its resolution id; at the output resolution this is the plain codec
//     fallback) or a 100-byte keypoint payload on stream 3.
// The receiver routes PF frames by resolution id to that resolution's decoder
// context and reconstructs at the output resolution.

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "gemino/codec.hpp"
#include "gemino/keypoint_wire.hpp"
#include "gemino/model.hpp"
#include "gemino/packet.hpp"

namespace gemino {

inline std::string weight_set_for(int lr_resolution) { return "p" + std::to_string(lr_resolution); }
inline const std::string kKeypointBaselineWeights = "fomm";

/// Lazily built models for one output resolution. With a weights directory
/// the set `name` is read from `<dir>/<name>.manifest`; without one, every
/// name resolves to a single model with seeded random weights.
class ModelBank {
 public:
  ModelBank(int output_resolution, std::optional<std::filesystem::path> weights_dir, std::uint64_t seed = 0)
      : config_(SynthesizerConfig::for_resolution(output_resolution)), dir_(std::move(weights_dir)), seed_(seed) {}

  const SynthesizerConfig& config() const noexcept { return config_; }

  const GeminoModel& get(const std::string& name) {
    std::lock_guard lock(mutex_);
    const std::string key = dir_ ? name : std::string();
    auto it = models_.find(key);
    if (it != models_.end()) return *it->second;
    std::unique_ptr<GeminoModel> model;
    if (dir_) {
      const auto manifest = *dir_ / (name + ".manifest");
      if (!std::filesystem::exists(manifest)) throw FormatError("missing weight set '" + manifest.string() + "'");
      model = std::make_unique<GeminoModel>(
          GeminoModel::build(std::make_shared<const WeightStore>(load(manifest)), config_));
    } else {
      model = std::make_unique<GeminoModel>(GeminoModel::random(config_, seed_));
    }
    return *models_.emplace(key, std::move(model)).first->second;
  }

 private:
  SynthesizerConfig config_;
  std::optional<std::filesystem::path> dir_;
  std::uint64_t seed_;
  std::mutex mutex_;
  std::map<std::string, std::unique_ptr<GeminoModel>> models_;
};

enum class FrameMode : std::uint8_t { neural, fallback, keypoints_only };

inline const char* to_string(FrameMode m) noexcept {
  switch (m) {
    case FrameMode::neural: return "neural";
    case FrameMode::fallback: return "fallback";
    case FrameMode::keypoints_only: return "keypoints";
  }
  return "?";
}

struct SendMode {
  FrameMode kind = FrameMode::neural;
  int resolution = 0;  // PF resolution; the output resolution for fallback
  double kbps = 0;     // codec target for the PF frame

  static SendMode neural(int resolution, double kbps) { return {FrameMode::neural, resolution, kbps}; }
  static SendMode fallback(double kbps) { return {FrameMode::fallback, 0, kbps}; }
  static SendMode keypoints_only() { return {FrameMode::keypoints_only, 0, 0}; }
};

struct SenderConfig {
  int output_resolution = 1024;
  double fps = 30.0;
  int reference_quality = 12;
  int reference_interval = 0;  // frames between references; 0 sends only the first
  std::size_t mtu = kDefaultMtu;
};

struct SentFrame {
  std::uint32_t frame_id = 0;
  FrameMode mode = FrameMode::neural;
  int resolution = 0;             // PF resolution, or 0 for keypoints
  std::vector<Packet> packets;    // reference packets first
  std::size_t reference_bytes = 0;  // wire bytes on stream 2
  std::size_t frame_bytes = 0;      // wire bytes on stream 1 or 3
  std::size_t payload_bytes = 0;    // codec or keypoint payload, headers excluded
  int quality = -1;
  bool feasible = true;

  std::size_t wire_bytes() const noexcept { return reference_bytes + frame_bytes; }
};

struct CodecContext {
  int resolution = 0;
  std::uint64_t frames = 0;
};

class Sender {
 public:
  Sender(SenderConfig config, std::shared_ptr<ModelBank> models, std::shared_ptr<const FrameCodec> codec = nullptr)
      : config_(config), models_(std::move(models)),
        codec_(codec ? std::move(codec) : std::make_shared<const BlockDctCodec>()) {
    if (!is_supported_resolution(config_.output_resolution) || config_.output_resolution < 128) {
      throw Error("sender: unsupported output resolution " + std::to_string(config_.output_resolution));
    }
    if (config_.reference_interval < 0) throw Error("sender: negative reference interval");
    for (int r : kResolutions) {
      if (r <= config_.output_resolution) contexts_[r] = {r, 0};
    }
  }

  const SenderConfig& config() const noexcept { return config_; }
  const std::map<int, CodecContext>& contexts() const noexcept { return contexts_; }
  std::uint32_t frames_sent() const noexcept { return next_id_; }

  SentFrame send(const Frame& frame, const SendMode& mode) {
    const int out = config_.output_resolution;
    if (frame.channels() != 3 || frame.height() != out || frame.width() != out) {
      throw ShapeError("sender: expected a 3x" + std::to_string(out) + "x" + std::to_string(out) + " frame, got " +
                       frame.shape_string());
    }
    SentFrame s;
    s.frame_id = next_id_;
    const bool need_reference =
        next_id_ == 0 || (config_.reference_interval > 0 && next_id_ % config_.reference_interval == 0);
    if (need_reference) {
      const EncodedFrame ref = codec_->encode(frame, config_.reference_quality);
      s.packets = packetize(StreamId::reference, s.frame_id, ref.resolution_id, ref.bytes, config_.mtu);
      s.reference_bytes = wire_bytes(s.packets);
    }
    std::vector<Packet> body;
    if (mode.kind == FrameMode::keypoints_only) {
      const auto payload = encode_keypoints(models_->get(kKeypointBaselineWeights).keypoints(frame));
      body = packetize(StreamId::keypoints, s.frame_id, kNoResolutionId, payload, config_.mtu);
      s.mode = FrameMode::keypoints_only;
      s.payload_bytes = payload.size();
    } else {
      const int res = mode.kind == FrameMode::fallback ? out : mode.resolution;
      auto ctx = contexts_.find(res);
      if (ctx == contexts_.end()) throw Error("sender: unsupported PF resolution " + std::to_string(res));
      const RateControlResult rc = codec_->encode_at_bitrate(downsample(frame, res), mode.kbps, config_.fps);
      ++ctx->second.frames;
      body = packetize(StreamId::per_frame, s.frame_id, rc.frame.resolution_id, rc.frame.bytes, config_.mtu);
      s.mode = res == out ? FrameMode::fallback : FrameMode::neural;
      s.resolution = res;
      s.payload_bytes = rc.frame.size();
      s.quality = rc.frame.quality;
      s.feasible = rc.feasible;
    }
    s.frame_bytes = wire_bytes(body);
    s.packets.insert(s.packets.end(), std::make_move_iterator(body.begin()), std::make_move_iterator(body.end()));
    ++next_id_;
    return s;
  }

 private:
  SenderConfig config_;
  std::shared_ptr<ModelBank> models_;
  std::shared_ptr<const FrameCodec> codec_;
  std::map<int, CodecContext> contexts_;
  std::uint32_t next_id_ = 0;
};

/// How a PF frame below the output resolution becomes a full frame.
enum class Upsampler : std::uint8_t { neural, bicubic };

struct ReceiverConfig {
  int output_resolution = 1024;
  Upsampler upsampler = Upsampler::neural;
};

struct ReceivedFrame {
  std::uint32_t frame_id = 0;
  FrameMode mode = FrameMode::neural;
  int resolution = 0;
  std::string method;  // neural, bicubic, fallback or keypoints
  Frame output;
};

class Receiver {
 public:
  Receiver(ReceiverConfig config, std::shared_ptr<ModelBank> models,
           std::shared_ptr<const FrameCodec> codec = nullptr)
      : config_(config), models_(std::move(models)),
        codec_(codec ? std::move(codec) : std::make_shared<const BlockDctCodec>()) {
    for (int r : kResolutions) {
      if (r <= config_.output_resolution) contexts_[r] = {r, 0};
    }
  }

  const std::map<int, CodecContext>& contexts() const noexcept { return contexts_; }
  bool has_reference() const noexcept { return reference_.has_value(); }

  /// All packets of one frame id, any order; a reference on stream 2 is
  /// applied before the frame itself.
  ReceivedFrame receive(std::span<const Packet> packets) {
    if (packets.empty()) throw FormatError("receiver: no packets");
    std::vector<Packet> ref_packets, body;
    for (const Packet& p : packets) (p.stream == StreamId::reference ? ref_packets : body).push_back(p);
    if (!ref_packets.empty()) set_reference(codec_->decode(reassemble(ref_packets)));
    if (body.empty()) throw FormatError("receiver: frame " + std::to_string(packets.front().frame_id) + " has no body");

    const std::vector<std::uint8_t> payload = reassemble(body);
    ReceivedFrame r;
    r.frame_id = body.front().frame_id;
    if (body.front().stream == StreamId::keypoints) {
      const KeypointSet kp = decode_keypoints(payload);
      const auto& ref = require_reference(r.frame_id);
      const auto& cache = cached(kKeypointBaselineWeights);
      r.mode = FrameMode::keypoints_only;
      r.method = "keypoints";
      r.output = models_->get(kKeypointBaselineWeights).predict_keypoints_only(ref, cache.keypoints, kp, &cache.encoding);
      return r;
    }
    const std::uint8_t id = body.front().resolution_id;
    const int res = resolution_from_id(id);
    auto ctx = contexts_.find(res);
    if (ctx == contexts_.end()) throw FormatError("receiver: resolution " + std::to_string(res) + " exceeds output");
    Frame decoded = codec_->decode(payload);
    ++ctx->second.frames;
    if (decoded.height() != res || decoded.width() != res) {
      throw FormatError("receiver: frame " + std::to_string(r.frame_id) + " payload does not match its resolution tag");
    }
    r.resolution = res;
    if (res == config_.output_resolution) {
      r.mode = FrameMode::fallback;
      r.method = "fallback";
      r.output = std::move(decoded);
      return r;
    }
    r.mode = FrameMode::neural;
    decoded.clamp(0.0f, 1.0f);
    if (config_.upsampler == Upsampler::bicubic) {
      r.method = "bicubic";
      r.output = bicubic_upsample(decoded, config_.output_resolution, config_.output_resolution);
      return r;
    }
    const std::string name = weight_set_for(res);
    const auto& ref = require_reference(r.frame_id);
    const auto& cache = cached(name);
    const GeminoModel& model = models_->get(name);
    r.method = "neural";
    r.output = model.predict(ref, decoded, cache.keypoints, model.keypoints(decoded), &cache.encoding);
    return r;
  }

 private:
  struct ReferenceCache {
    KeypointSet keypoints;
    ReferenceEncoding encoding;
  };

  void set_reference(Frame reference) {
    if (reference.height() != config_.output_resolution || reference.width() != config_.output_resolution) {
      throw FormatError("receiver: reference is " + reference.shape_string() + ", expected the output resolution");
    }
    reference.clamp(0.0f, 1.0f);
    reference_ = std::move(reference);
    caches_.clear();
  }

  const Frame& require_reference(std::uint32_t frame_id) const {
    if (!reference_) throw FormatError("receiver: frame " + std::to_string(frame_id) + " arrived before any reference");
    return *reference_;
  }

  // Reference keypoints and features depend on the weight set.
  const ReferenceCache& cached(const std::string& name) {
    auto it = caches_.find(name);
    if (it != caches_.end()) return it->second;
    const GeminoModel& model = models_->get(name);
    return caches_.emplace(name, ReferenceCache{model.keypoints(*reference_), model.encode_reference(*reference_)})
        .first->second;
  }

  ReceiverConfig config_;
  std::shared_ptr<ModelBank> models_;
  std::shared_ptr<const FrameCodec> codec_;
  std::map<int, CodecContext> contexts_;
  std::optional<Frame> reference_;
  std::map<std::string, ReferenceCache> caches_;
};

}  // namespace gemino
