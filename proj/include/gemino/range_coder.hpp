#pragma once

// 32-bit range coder with carry propagation and adaptive frequency tables.

#include <cstdint>
#include <span>
#include <vector>

#include "gemino/error.hpp"

namespace gemino::entropy {

inline constexpr std::uint32_t kTop = 1u << 24;
inline constexpr std::uint32_t kBottom = 1u << 16;

/// Frequency table over `size` symbols; every symbol keeps a count >= 1 and
/// the total stays <= kBottom so the coder's division never loses a symbol.
class AdaptiveModel {
 public:
  explicit AdaptiveModel(int size) : freq_(static_cast<std::size_t>(size), 1), total_(static_cast<std::uint32_t>(size)) {}

  int size() const noexcept { return static_cast<int>(freq_.size()); }
  std::uint32_t total() const noexcept { return total_; }
  std::uint32_t freq(int s) const noexcept { return freq_[static_cast<std::size_t>(s)]; }

  std::uint32_t cumulative(int s) const noexcept {
    std::uint32_t c = 0;
    for (int i = 0; i < s; ++i) c += freq_[static_cast<std::size_t>(i)];
    return c;
  }

  /// Symbol whose interval contains `target`, with its cumulative start.
  int find(std::uint32_t target, std::uint32_t& cum) const {
    std::uint32_t c = 0;
    for (std::size_t i = 0; i < freq_.size(); ++i) {
      if (target < c + freq_[i]) {
        cum = c;
        return static_cast<int>(i);
      }
      c += freq_[i];
    }
    throw FormatError("entropy decoder: symbol out of range");
  }

  void update(int s) {
    freq_[static_cast<std::size_t>(s)] += kIncrement;
    total_ += kIncrement;
    if (total_ > kBottom - kIncrement) {
      total_ = 0;
      for (auto& f : freq_) {
        f = (f + 1) / 2;
        total_ += f;
      }
    }
  }

 private:
  static constexpr std::uint32_t kIncrement = 24;
  std::vector<std::uint32_t> freq_;
  std::uint32_t total_;
};

/// Carries resolve through a one-byte cache and a count of pending 0xFF bytes,
/// so renormalization never discards range. The coded interval stays inside
/// the initial one, so the byte ahead of the first cached byte is always zero
/// and is not written.
class RangeEncoder {
 public:
  explicit RangeEncoder(std::vector<std::uint8_t>& out) : out_(out) {}

  void encode(std::uint32_t cum, std::uint32_t freq, std::uint32_t total) {
    range_ /= total;
    low_ += std::uint64_t{cum} * range_;
    range_ *= freq;
    while (range_ < kTop) {
      range_ <<= 8;
      shift_low();
    }
  }

  void encode(AdaptiveModel& model, int symbol) {
    encode(model.cumulative(symbol), model.freq(symbol), model.total());
    model.update(symbol);
  }

  /// Emits the fewest bytes whose zero-padded value lies in [low, low + range).
  void finish() {
    for (int k = 0; k <= 4; ++k) {
      const std::uint64_t mask = k == 4 ? 0 : (0xFFFFFFFFull >> (8 * k));
      const std::uint64_t v = (low_ + mask) & ~mask;
      if (v - low_ < range_) {
        low_ = v;
        for (int i = 0; i <= k; ++i) shift_low();
        return;
      }
    }
  }

 private:
  void shift_low() {
    if (low_ < 0xFF000000ull || low_ >= 0x100000000ull) {
      const auto carry = static_cast<std::uint8_t>(low_ >> 32);
      std::uint8_t byte = cache_;
      for (; pending_ > 0; --pending_) {
        if (!leading_) out_.push_back(static_cast<std::uint8_t>(byte + carry));
        leading_ = false;
        byte = 0xFF;
      }
      cache_ = static_cast<std::uint8_t>(low_ >> 24);
    }
    ++pending_;
    low_ = (low_ & 0x00FFFFFFull) << 8;
  }

  std::vector<std::uint8_t>& out_;
  std::uint64_t low_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint8_t cache_ = 0;
  std::uint64_t pending_ = 1;  // cache plus the 0xFF bytes behind it
  bool leading_ = true;
};

/// Reads the bytes the matching encoder wrote, then up to four implicit zero
/// bytes. Reading further, or leaving bytes unread, means the stream is corrupt.
class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const std::uint8_t> in) : in_(in) {
    for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next();
  }

  int decode(AdaptiveModel& model) {
    range_ /= model.total();
    const std::uint32_t target = code_ / range_;
    if (target >= model.total()) throw FormatError("entropy decoder: corrupt stream");
    std::uint32_t cum = 0;
    const int s = model.find(target, cum);
    code_ -= cum * range_;
    range_ *= model.freq(s);
    while (range_ < kTop) {
      code_ = (code_ << 8) | next();
      range_ <<= 8;
    }
    model.update(s);
    return s;
  }

  bool exhausted() const noexcept { return pos_ >= in_.size(); }

 private:
  std::uint32_t next() {
    if (pos_ >= in_.size() + 4) throw FormatError("entropy decoder: truncated stream");
    return pos_ < in_.size() ? in_[pos_++] : (++pos_, 0u);
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
  std::uint32_t code_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
};

}  // namespace gemino::entropy
