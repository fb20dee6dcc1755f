#pragma once

#include <cstdint>
#include <mutex>
#include <optional>
#include <utility>

#include "rtsac/clock.hpp"

namespace rtsac {

// One-element latest-wins cell. Writes overwrite, reads return a copy of the
// freshest value. Neither side blocks beyond the copy.
template <class T>
class LatestSlot {
 public:
  void publish(T v) {
    std::lock_guard lk(mu_);
    value_ = std::move(v);
    ++seq_;
  }

  std::optional<T> latest() const {
    std::lock_guard lk(mu_);
    if (seq_ == 0) return std::nullopt;
    return value_;
  }

  std::uint64_t sequence() const {
    std::lock_guard lk(mu_);
    return seq_;
  }

 private:
  mutable std::mutex mu_;
  T value_{};
  std::uint64_t seq_ = 0;
};

// Single-slot blocking handoff between one producer and one consumer.
// put() blocks while the slot is full, take() while it is empty; each value
// is taken exactly once. Both unblock early when stop is requested.
template <class T>
class Handoff {
 public:
  explicit Handoff(Clock& clk)
      : not_full_(clk.make_waitset()), not_empty_(clk.make_waitset()) {}

  bool put(T v, const StopFlag& stop) {
    std::unique_lock lk(mu_);
    while (cell_.has_value()) {
      if (stop.stop_requested()) return false;
      not_full_->wait(lk);
    }
    if (stop.stop_requested()) return false;
    cell_ = std::move(v);
    not_empty_->notify_all();
    return true;
  }

  std::optional<T> take(const StopFlag& stop) {
    std::unique_lock lk(mu_);
    while (!cell_.has_value()) {
      if (stop.stop_requested()) return std::nullopt;
      not_empty_->wait(lk);
    }
    std::optional<T> out = std::move(cell_);
    cell_.reset();
    not_full_->notify_all();
    return out;
  }

  // Wake all waiters so they can observe a stop request.
  void poke() {
    std::lock_guard lk(mu_);
    not_full_->notify_all();
    not_empty_->notify_all();
  }

 private:
  std::mutex mu_;
  std::optional<T> cell_;
  std::unique_ptr<WaitSet> not_full_;
  std::unique_ptr<WaitSet> not_empty_;
};

// Pure throttle rule: may one more update (or batch at the pipeline head)
// start, given cap updates per environment step? cap = 0 means uncapped.
inline bool throttle_proceed(std::uint64_t updates_done,
                             std::uint64_t env_steps_done, std::uint64_t cap) {
  return cap == 0 || updates_done < cap * env_steps_done;
}

// Shared step/update counters plus the blocking side of the throttle.
// The interaction process ticks steps; learner stages hold until the
// update-to-step ratio permits another update.
class ThrottleGate {
 public:
  ThrottleGate(Clock& clk, std::uint64_t cap)
      : cap_(cap), ws_(clk.make_waitset()) {}

  void tick_step() {
    std::lock_guard lk(mu_);
    ++steps_;
    ws_->notify_all();
  }

  // Blocks until proceed; claims one update slot. False on stop.
  bool acquire_update(const StopFlag& stop) {
    std::unique_lock lk(mu_);
    while (!throttle_proceed(updates_, steps_, cap_)) {
      if (stop.stop_requested()) return false;
      ws_->wait(lk);
    }
    if (stop.stop_requested()) return false;
    ++updates_;
    return true;
  }

  void poke() {
    std::lock_guard lk(mu_);
    ws_->notify_all();
  }

  std::uint64_t steps() const {
    std::lock_guard lk(mu_);
    return steps_;
  }
  std::uint64_t updates() const {
    std::lock_guard lk(mu_);
    return updates_;
  }
  std::uint64_t cap() const { return cap_; }

 private:
  std::uint64_t cap_;
  mutable std::mutex mu_;
  std::uint64_t steps_ = 0;
  std::uint64_t updates_ = 0;
  std::unique_ptr<WaitSet> ws_;
};

}  // namespace rtsac
