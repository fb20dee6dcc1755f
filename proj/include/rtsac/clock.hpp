#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace rtsac {

// Microseconds since the start of the run. Every timestamp in the system is
// expressed in this unit against a single time authority.
using Micros = std::int64_t;

constexpr Micros msec(std::int64_t v) { return v * 1000; }
constexpr Micros sec(std::int64_t v) { return v * 1000000; }

template <class T>
struct Timestamped {
  T value{};
  Micros ts = 0;
};

enum class ClockMode { Wall, Virtual };

enum class Component { Interaction, Sample, Update };

// Per-component compute costs injected in Virtual mode. Ignored in Wall mode,
// where real elapsed time applies.
struct CostProfile {
  Micros interaction_us = 0;
  Micros sample_us = 0;
  Micros update_us = 0;

  Micros of(Component c) const {
    switch (c) {
      case Component::Interaction: return interaction_us;
      case Component::Sample: return sample_us;
      case Component::Update: return update_us;
    }
    return 0;
  }
};

// Dispatch priority at equal virtual timestamps: lower value runs first.
// Devices run before the interaction process, which runs before the
// sampling stage, which runs before the gradient stage.
namespace proc_priority {
inline constexpr int kArmDevice = 0;
inline constexpr int kCameraDevice = 1;
inline constexpr int kMonitorDevice = 2;
inline constexpr int kInteraction = 10;
inline constexpr int kSampler = 20;
inline constexpr int kUpdater = 30;
inline constexpr int kMain = 90;
}  // namespace proc_priority

// Scheduler-aware condition primitive. wait() atomically releases the
// caller's lock and parks the calling process; notify_all() makes every
// parked process runnable again. Spurious wakeups are allowed: callers must
// re-check their predicate in a loop.
class WaitSet {
 public:
  virtual ~WaitSet() = default;
  virtual void wait(std::unique_lock<std::mutex>& lk) = 0;
  virtual void notify_all() = 0;
};

// Shared time authority. All processes in a run hold a reference to one
// Clock; the mode is fixed for the lifetime of the run.
class Clock {
 public:
  virtual ~Clock() = default;

  virtual ClockMode mode() const = 0;

  // Current time of the calling process. Monotone per process.
  virtual Micros now() = 0;

  // Returns with now() >= t; in Virtual mode returns with now() == t exactly.
  // A deadline in the past returns immediately.
  virtual void wait_until(Micros t) = 0;

  // Accounts for one unit of component work. Wall mode: no-op (the real time
  // already passed). Virtual mode: advances the calling process's local time
  // by the profile entry for `c`, ignoring `actual_elapsed`.
  virtual void charge(Component c, Micros actual_elapsed) = 0;

  virtual std::unique_ptr<WaitSet> make_waitset() = 0;

  // Process registry. create_process is called by the spawning thread (so
  // the child inherits its start time deterministically); attach binds the
  // calling thread to the slot and, in Virtual mode, blocks until the
  // scheduler first dispatches it. join_process blocks the caller until the
  // given process has exited (scheduler-aware in Virtual mode).
  virtual int create_process(const std::string& name, int priority) = 0;
  virtual void attach(int id) = 0;
  virtual void detach(int id) = 0;
  virtual void join_process(int id) = 0;
};

class WallClock final : public Clock {
 public:
  // spin_margin: how long before a deadline wait_until switches from
  // sleep_until to a spin loop. Larger is tighter but burns CPU.
  explicit WallClock(Micros spin_margin_us = 500);

  ClockMode mode() const override { return ClockMode::Wall; }
  Micros now() override;
  void wait_until(Micros t) override;
  void charge(Component, Micros) override {}
  std::unique_ptr<WaitSet> make_waitset() override;

  int create_process(const std::string& name, int priority) override;
  void attach(int id) override;
  void detach(int id) override;
  void join_process(int id) override;

 private:
  std::chrono::steady_clock::time_point epoch_;
  Micros spin_margin_us_;
  std::mutex mu_;
  std::condition_variable exited_cv_;
  std::vector<bool> exited_;
};

// Deterministic virtual time. Every registered process has a local clock;
// exactly one process executes at any moment, and the scheduler always
// dispatches the runnable process with the smallest (time, priority, id).
// This serialization makes the full event schedule a pure function of the
// program, the seed and the CostProfile.
class VirtualClock final : public Clock {
 public:
  // Registers the calling thread as the "main" process at t = 0.
  explicit VirtualClock(CostProfile profile);
  ~VirtualClock() override;

  ClockMode mode() const override { return ClockMode::Virtual; }
  Micros now() override;
  void wait_until(Micros t) override;
  void charge(Component c, Micros actual_elapsed) override;
  std::unique_ptr<WaitSet> make_waitset() override;

  int create_process(const std::string& name, int priority) override;
  void attach(int id) override;
  void detach(int id) override;
  void join_process(int id) override;

  const CostProfile& profile() const { return profile_; }

  // Dispatch trace: one entry per time the scheduler hands control to a
  // process. Bit-identical across runs with equal seed and profile.
  struct TraceEvent {
    std::string proc;
    Micros t;
    bool operator==(const TraceEvent&) const = default;
  };
  std::vector<TraceEvent> trace() const;

 private:
  friend class VirtualWaitSet;

  enum class St { Unborn, Running, Ready, Blocked, Exited };

  struct Proc {
    std::string name;
    int id = 0;
    int priority = 0;
    Micros time = 0;
    St st = St::Unborn;
    std::thread::id tid{};
    bool tid_bound = false;
    std::condition_variable cv;
  };

  Proc& self_locked();
  void dispatch_next_locked();
  // Make self Ready at time t (>= current), hand the baton over, park until
  // dispatched again.
  void yield_until_locked(std::unique_lock<std::mutex>& lk, Micros t);

  CostProfile profile_;
  mutable std::mutex mu_;
  std::vector<std::unique_ptr<Proc>> procs_;
  std::vector<int> exit_waiters_;
  std::vector<TraceEvent> trace_;
  int main_id_ = -1;
};

// Cooperative stop signal shared by the processes of one run.
class StopFlag {
 public:
  bool stop_requested() const { return v_.load(std::memory_order_acquire); }
  void request_stop() { v_.store(true, std::memory_order_release); }

 private:
  std::atomic<bool> v_{false};
};

// A worker bound to a Clock. The constructor returns only after the child
// is registered with the scheduler, so spawn order is deterministic.
class Process {
 public:
  Process(Clock& clk, std::string name, int priority,
          std::function<void()> body);
  ~Process();

  Process(const Process&) = delete;
  Process& operator=(const Process&) = delete;

  // Scheduler-aware join: in Virtual mode the caller keeps yielding virtual
  // time until the child exits.
  void join();

 private:
  Clock* clk_;
  int id_;
  std::thread thread_;
  bool joined_ = false;
};

}  // namespace rtsac
