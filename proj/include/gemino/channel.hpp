#pragma once

// In-process replay of sender -> link -> receiver on a virtual clock.
//
// Frame i is read at i / fps. The sender, the link and the receiver each
// process one frame at a time in order, so for every frame
//   sent     = max(read, previous sent) + sender compute
//   on_link  = max(sent, previous link release)
//   released = on_link + wire bits / bandwidth
//   arrival  = released + propagation delay
//   done     = max(arrival, previous done) + receiver compute
//   latency  = done - read
// Compute times are zero unless measured, which keeps replays deterministic.
// The sender runs on its own thread; the queue between the threads is the
// only shared state.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "gemino/session.hpp"

namespace gemino {

/// Blocking bounded queue for exactly one producer and one consumer.
template <typename T>
class SpscQueue {
 public:
  explicit SpscQueue(std::size_t capacity) : capacity_(std::max<std::size_t>(1, capacity)) {}

  void push(T value) {
    std::unique_lock lock(mutex_);
    not_full_.wait(lock, [&] { return items_.size() < capacity_; });
    items_.push_back(std::move(value));
    not_empty_.notify_one();
  }

  T pop() {
    std::unique_lock lock(mutex_);
    not_empty_.wait(lock, [&] { return !items_.empty(); });
    T value = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return value;
  }

 private:
  std::size_t capacity_;
  std::mutex mutex_;
  std::condition_variable not_full_, not_empty_;
  std::deque<T> items_;
};

struct LinkSegment {
  double start_s = 0;
  double bandwidth_kbps = std::numeric_limits<double>::infinity();
  double delay_ms = 0;
};

/// Step-interpolated link conditions; the first segment starts at 0.
class LinkSchedule {
 public:
  LinkSchedule() : segments_{LinkSegment{}} {}

  explicit LinkSchedule(std::vector<LinkSegment> segments) : segments_(std::move(segments)) {
    if (segments_.empty() || segments_.front().start_s != 0) throw Error("link schedule must start at time 0");
    for (std::size_t i = 0; i < segments_.size(); ++i) {
      if (!(segments_[i].bandwidth_kbps > 0) || segments_[i].delay_ms < 0) {
        throw Error("link schedule needs positive bandwidth and non-negative delay");
      }
      if (i > 0 && !(segments_[i].start_s > segments_[i - 1].start_s)) {
        throw Error("link schedule times must increase strictly");
      }
    }
  }

  static LinkSchedule constant(double bandwidth_kbps, double delay_ms) {
    return LinkSchedule({LinkSegment{0, bandwidth_kbps, delay_ms}});
  }

  const LinkSegment& at(double t) const {
    auto it = std::upper_bound(segments_.begin(), segments_.end(), t,
                               [](double v, const LinkSegment& s) { return v < s.start_s; });
    return it == segments_.begin() ? segments_.front() : *(it - 1);
  }

 private:
  std::vector<LinkSegment> segments_;
};

struct FrameTiming {
  std::uint32_t frame_id = 0;
  double read_s = 0;
  double sent_s = 0;
  double arrival_s = 0;
  double done_s = 0;
  double latency_s() const noexcept { return done_s - read_s; }
};

/// The per-frame recurrences above, one stage at a time.
class PipelineClock {
 public:
  explicit PipelineClock(LinkSchedule link) : link_(std::move(link)) {}

  double sent(double read_s, double compute_s) { return sender_free_ = std::max(read_s, sender_free_) + compute_s; }

  double arrival(double sent_s, std::size_t wire_bytes) {
    const double on_link = std::max(sent_s, link_free_);
    const LinkSegment& seg = link_.at(on_link);
    const double bits = 8.0 * static_cast<double>(wire_bytes);
    link_free_ = on_link + (std::isinf(seg.bandwidth_kbps) ? 0.0 : bits / (seg.bandwidth_kbps * 1000.0));
    return link_free_ + seg.delay_ms / 1000.0;
  }

  double done(double arrival_s, double compute_s) {
    return receiver_free_ = std::max(arrival_s, receiver_free_) + compute_s;
  }

 private:
  LinkSchedule link_;
  double sender_free_ = 0, link_free_ = 0, receiver_free_ = 0;
};

struct ChannelOptions {
  bool measure_compute = false;
  std::size_t queue_capacity = 4;
};

using FrameSource = std::function<Frame(int index)>;
using ModePolicy = std::function<SendMode(int index, double time_s)>;
using FrameSink = std::function<void(const SentFrame&, const ReceivedFrame&, const FrameTiming&)>;

inline std::vector<FrameTiming> channel_run(Sender& sender, Receiver& receiver, const FrameSource& source, int frames,
                                            const ModePolicy& policy, const LinkSchedule& link, const FrameSink& sink,
                                            const ChannelOptions& options = {}) {
  using Clock = std::chrono::steady_clock;
  struct Item {
    std::optional<SentFrame> frame;  // empty on the final item
    double compute_s = 0;
    std::exception_ptr error;
  };
  const double fps = sender.config().fps;
  SpscQueue<Item> queue(options.queue_capacity);
  std::atomic<bool> stop{false};
  std::thread producer([&] {
    try {
      for (int i = 0; i < frames && !stop; ++i) {
        const Frame frame = source(i);
        const SendMode mode = policy(i, i / fps);
        const auto start = Clock::now();
        SentFrame sent = sender.send(frame, mode);
        const double compute =
            options.measure_compute ? std::chrono::duration<double>(Clock::now() - start).count() : 0.0;
        queue.push({std::move(sent), compute, nullptr});
      }
      queue.push({});
    } catch (...) {
      queue.push({std::nullopt, 0, std::current_exception()});
    }
  });

  std::vector<FrameTiming> log;
  std::exception_ptr failure;
  PipelineClock clock(link);
  for (int i = 0; i < frames; ++i) {
    Item item = queue.pop();
    if (item.error) {
      producer.join();
      std::rethrow_exception(item.error);
    }
    FrameTiming t;
    t.frame_id = item.frame->frame_id;
    t.read_s = i / fps;
    t.sent_s = clock.sent(t.read_s, item.compute_s);
    t.arrival_s = clock.arrival(t.sent_s, item.frame->wire_bytes());
    try {
      const auto start = Clock::now();
      ReceivedFrame received = receiver.receive(item.frame->packets);
      const double compute =
          options.measure_compute ? std::chrono::duration<double>(Clock::now() - start).count() : 0.0;
      t.done_s = clock.done(t.arrival_s, compute);
      log.push_back(t);
      if (sink) sink(*item.frame, received, t);
    } catch (...) {
      failure = std::current_exception();
      break;
    }
  }
  if (failure) stop = true;
  // Drain up to the final item so a producer blocked on a full queue finishes.
  for (;;) {
    Item rest = queue.pop();
    if (!rest.frame) break;
  }
  producer.join();
  if (failure) std::rethrow_exception(failure);
  return log;
}

}  // namespace gemino
