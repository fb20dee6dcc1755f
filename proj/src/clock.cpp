#include "rtsac/clock.hpp"

#include <algorithm>
#include <stdexcept>
#include <tuple>

namespace rtsac {

// ---------------------------------------------------------------------------
// WallClock

namespace {

class CvWaitSet final : public WaitSet {
 public:
  void wait(std::unique_lock<std::mutex>& lk) override { cv_.wait(lk); }
  void notify_all() override { cv_.notify_all(); }

 private:
  std::condition_variable cv_;
};

}  // namespace

WallClock::WallClock(Micros spin_margin_us)
    : epoch_(std::chrono::steady_clock::now()),
      spin_margin_us_(spin_margin_us) {}

Micros WallClock::now() {
  return std::chrono::duration_cast<std::chrono::microseconds>(
             std::chrono::steady_clock::now() - epoch_)
      .count();
}

void WallClock::wait_until(Micros t) {
  const auto target = epoch_ + std::chrono::microseconds(t);
  const auto coarse = target - std::chrono::microseconds(spin_margin_us_);
  if (std::chrono::steady_clock::now() < coarse) {
    std::this_thread::sleep_until(coarse);
  }
  while (std::chrono::steady_clock::now() < target) {
    std::this_thread::yield();
  }
}

std::unique_ptr<WaitSet> WallClock::make_waitset() {
  return std::make_unique<CvWaitSet>();
}

int WallClock::create_process(const std::string&, int) {
  std::lock_guard lk(mu_);
  exited_.push_back(false);
  return static_cast<int>(exited_.size()) - 1;
}

void WallClock::attach(int) {}

void WallClock::detach(int id) {
  std::lock_guard lk(mu_);
  exited_[id] = true;
  exited_cv_.notify_all();
}

void WallClock::join_process(int id) {
  std::unique_lock lk(mu_);
  exited_cv_.wait(lk, [&] { return exited_[id]; });
}

// ---------------------------------------------------------------------------
// VirtualClock

class VirtualWaitSet final : public WaitSet {
 public:
  explicit VirtualWaitSet(VirtualClock& clk) : clk_(&clk) {}

  void wait(std::unique_lock<std::mutex>& user_lk) override {
    std::unique_lock lk(clk_->mu_);
    VirtualClock::Proc& me = clk_->self_locked();
    me.st = VirtualClock::St::Blocked;
    waiting_.push_back(me.id);
    // The notifier can only run once we hand the baton over below, so
    // releasing the user lock here cannot lose a wakeup.
    user_lk.unlock();
    clk_->dispatch_next_locked();
    me.cv.wait(lk, [&] { return me.st == VirtualClock::St::Running; });
    lk.unlock();
    user_lk.lock();
  }

  void notify_all() override {
    std::lock_guard lk(clk_->mu_);
    const Micros t = clk_->self_locked().time;
    for (int id : waiting_) {
      VirtualClock::Proc& p = *clk_->procs_[id];
      if (p.st == VirtualClock::St::Blocked) {
        p.st = VirtualClock::St::Ready;
        p.time = std::max(p.time, t);  // time passed while it was parked
      }
    }
    waiting_.clear();
  }

 private:
  VirtualClock* clk_;
  std::vector<int> waiting_;
};

VirtualClock::VirtualClock(CostProfile profile) : profile_(profile) {
  std::lock_guard lk(mu_);
  auto p = std::make_unique<Proc>();
  p->name = "main";
  p->id = 0;
  p->priority = proc_priority::kMain;
  p->time = 0;
  p->st = St::Running;
  p->tid = std::this_thread::get_id();
  p->tid_bound = true;
  procs_.push_back(std::move(p));
  main_id_ = 0;
  trace_.push_back({"main", 0});
}

VirtualClock::~VirtualClock() = default;

VirtualClock::Proc& VirtualClock::self_locked() {
  const auto tid = std::this_thread::get_id();
  for (auto& p : procs_) {
    if (p->tid_bound && p->tid == tid && p->st != St::Exited) return *p;
  }
  throw std::logic_error("VirtualClock: calling thread is not a registered process");
}

void VirtualClock::dispatch_next_locked() {
  Proc* best = nullptr;
  for (auto& up : procs_) {
    if (up->st != St::Ready) continue;
    if (!best || std::tie(up->time, up->priority, up->id) <
                     std::tie(best->time, best->priority, best->id)) {
      best = up.get();
    }
  }
  if (!best) {
    for (auto& up : procs_) {
      if (up->st == St::Blocked) {
        throw std::logic_error(
            "VirtualClock deadlock: all live processes are blocked");
      }
    }
    return;  // everything has exited
  }
  best->st = St::Running;
  trace_.push_back({best->name, best->time});
  best->cv.notify_one();
}

void VirtualClock::yield_until_locked(std::unique_lock<std::mutex>& lk,
                                      Micros t) {
  Proc& me = self_locked();
  me.time = std::max(me.time, t);
  me.st = St::Ready;
  dispatch_next_locked();
  me.cv.wait(lk, [&] { return me.st == St::Running; });
}

Micros VirtualClock::now() {
  std::lock_guard lk(mu_);
  // const_cast-free: self_locked is non-const on purpose (registry lookup).
  return self_locked().time;
}

void VirtualClock::wait_until(Micros t) {
  std::unique_lock lk(mu_);
  Proc& me = self_locked();
  if (t <= me.time) return;
  yield_until_locked(lk, t);
}

void VirtualClock::charge(Component c, Micros) {
  std::unique_lock lk(mu_);
  Proc& me = self_locked();
  const Micros cost = profile_.of(c);
  if (cost <= 0) return;
  yield_until_locked(lk, me.time + cost);
}

std::unique_ptr<WaitSet> VirtualClock::make_waitset() {
  return std::make_unique<VirtualWaitSet>(*this);
}

int VirtualClock::create_process(const std::string& name, int priority) {
  std::lock_guard lk(mu_);
  Proc& creator = self_locked();
  auto p = std::make_unique<Proc>();
  p->name = name;
  p->id = static_cast<int>(procs_.size());
  p->priority = priority;
  p->time = creator.time;  // child starts at the spawner's current time
  p->st = St::Ready;
  procs_.push_back(std::move(p));
  return static_cast<int>(procs_.size()) - 1;
}

void VirtualClock::attach(int id) {
  std::unique_lock lk(mu_);
  Proc& me = *procs_[id];
  me.tid = std::this_thread::get_id();
  me.tid_bound = true;
  me.cv.wait(lk, [&] { return me.st == St::Running; });
}

void VirtualClock::detach(int id) {
  std::unique_lock lk(mu_);
  Proc& me = *procs_[id];
  me.st = St::Exited;
  for (int w : exit_waiters_) {
    Proc& p = *procs_[w];
    if (p.st == St::Blocked) {
      p.st = St::Ready;
      p.time = std::max(p.time, me.time);
    }
  }
  exit_waiters_.clear();
  dispatch_next_locked();
}

void VirtualClock::join_process(int id) {
  std::unique_lock lk(mu_);
  Proc& me = self_locked();
  while (procs_[id]->st != St::Exited) {
    me.st = St::Blocked;
    exit_waiters_.push_back(me.id);
    dispatch_next_locked();
    me.cv.wait(lk, [&] { return me.st == St::Running; });
  }
}

std::vector<VirtualClock::TraceEvent> VirtualClock::trace() const {
  std::lock_guard lk(mu_);
  return trace_;
}

// ---------------------------------------------------------------------------
// Process

Process::Process(Clock& clk, std::string name, int priority,
                 std::function<void()> body)
    : clk_(&clk), id_(clk.create_process(name, priority)) {
  thread_ = std::thread([clk = clk_, id = id_, fn = std::move(body)] {
    clk->attach(id);
    fn();
    clk->detach(id);
  });
}

void Process::join() {
  if (joined_) return;
  clk_->join_process(id_);
  thread_.join();
  joined_ = true;
}

Process::~Process() {
  if (!joined_ && thread_.joinable()) join();
}

}  // namespace rtsac
