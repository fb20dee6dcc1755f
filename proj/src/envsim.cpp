#include "rtsac/envsim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <stdexcept>

namespace rtsac::sim {

std::vector<double> make_weight_matrix(int h, int w) {
  std::vector<double> out(static_cast<std::size_t>(h) * w);
  const double ci = (h - 1) / 2.0, cj = (w - 1) / 2.0;
  const double corner = std::hypot(ci, cj);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const double d = std::hypot(i - ci, j - cj);
      out[static_cast<std::size_t>(i) * w + j] =
          corner > 0 ? std::max(0.0, 1.0 - d / corner) : 1.0;
    }
  return out;
}

CameraFrame render_camera(const Vec2& pose, const TargetState& target, int h,
                          int w, const EnvConfig& cfg, Micros ts) {
  if (h < 4 || w < 4) throw std::invalid_argument("render_camera: image too small");
  CameraFrame f;
  f.h = h;
  f.w = w;
  f.ts = ts;
  f.rgb.assign(static_cast<std::size_t>(h) * w * 3, 1.0f);  // white background
  f.mask.assign(static_cast<std::size_t>(h) * w, 0);
  const double sx = 2.0 * cfg.fov_half_w / w;
  const double sy = 2.0 * cfg.fov_half_h() / h;
  const double r2 = target.radius * target.radius;
  for (int i = 0; i < h; ++i) {
    const double py = pose[1] + (i - h / 2) * sy;
    const double dy = py - target.position[1];
    for (int j = 0; j < w; ++j) {
      const double px = pose[0] + (j - w / 2) * sx;
      const double dx = px - target.position[0];
      if (dx * dx + dy * dy <= r2) {
        const std::size_t at = static_cast<std::size_t>(i) * w + j;
        f.mask[at] = 1;
        f.rgb[at * 3 + 1] = 0.0f;  // red disc: kill green and blue
        f.rgb[at * 3 + 2] = 0.0f;
      }
    }
  }
  return f;
}

RewardConfig RewardConfig::from_env(const EnvConfig& cfg) {
  RewardConfig r;
  r.alpha = cfg.reward_alpha;
  r.beta = cfg.reward_beta;
  r.h = cfg.img_h;
  r.w = cfg.img_w;
  r.weights = make_weight_matrix(cfg.img_h, cfg.img_w);
  return r;
}

double compute_reward(const std::vector<std::uint8_t>& mask,
                      const Vec5& omega, const RewardConfig& cfg) {
  return compute_reward(mask, cfg.weights, cfg.h, cfg.w, omega, cfg.alpha,
                        cfg.beta);
}

double compute_reward(const std::vector<std::uint8_t>& mask,
                      const std::vector<double>& weights, int h, int w,
                      const Vec5& omega, double alpha, double beta) {
  const std::size_t n = static_cast<std::size_t>(h) * w;
  if (mask.size() != n || weights.size() != n)
    throw std::invalid_argument("compute_reward: mask/weight shape mismatch");
  double target_term = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (mask[i]) target_term += weights[i];
  target_term *= alpha / static_cast<double>(n);
  const double twist = std::abs(kPi - (omega[0] + omega[1] + omega[2])) +
                       std::abs(omega[3] + omega[4]);
  return target_term - beta * twist;
}

void advance_target(TargetState& t, double dt_seconds) {
  if (t.regime == Task::Reaching) return;
  for (int a = 0; a < 2; ++a) {
    double p = t.position[a] + t.velocity[a] * dt_seconds;
    // fold overshoot back into [-1, 1], flipping velocity per reflection
    while (p > 1.0 || p < -1.0) {
      if (p > 1.0) p = 2.0 - p;
      else p = -2.0 - p;
      t.velocity[a] = -t.velocity[a];
    }
    t.position[a] = p;
  }
}

// ---------------------------------------------------------------------------

Env::Env(const EnvConfig& cfg, Clock& clk, Rng env_rng)
    : cfg_(cfg), clk_(&clk), rng_(env_rng),
      reward_(RewardConfig::from_env(cfg)) {}

Env::~Env() {
  if (started_) stop();
}

void Env::start() {
  if (started_) return;
  t0_ = clk_->now();
  // Seed the slots so the first camera tick always has a pose and a target.
  ArmState init;
  init.joint_angles = neutral_pose();
  arm_slot_.publish({init, t0_});
  TargetState tgt;
  tgt.radius = cfg_.target_radius;
  tgt.regime = cfg_.task;
  target_slot_.publish(tgt);
  started_ = true;
  arm_proc_ = std::make_unique<Process>(*clk_, "arm_device",
                                        proc_priority::kArmDevice,
                                        [this] { arm_body(); });
  camera_proc_ = std::make_unique<Process>(*clk_, "camera_device",
                                           proc_priority::kCameraDevice,
                                           [this] { camera_body(); });
  monitor_proc_ = std::make_unique<Process>(*clk_, "monitor_device",
                                            proc_priority::kMonitorDevice,
                                            [this] { monitor_body(); });
}

void Env::stop() {
  if (!started_) return;
  stop_.request_stop();
  arm_proc_->join();
  camera_proc_->join();
  monitor_proc_->join();
  arm_proc_.reset();
  camera_proc_.reset();
  monitor_proc_.reset();
  started_ = false;
}

void Env::actuate(const Vec5& command) {
  for (double v : command) {
    if (!std::isfinite(v)) {
      faults_.fetch_add(1);
      return;  // previous command stays latched
    }
  }
  const Vec5 clamped = clamp_command(command, cfg_.max_velocity);
  std::lock_guard lk(cmd_mu_);
  command_ = clamped;
}

Vec5 Env::latched_command() const {
  std::lock_guard lk(cmd_mu_);
  return command_;
}

void Env::arm_body() {
  const double dt = static_cast<double>(cfg_.arm_cadence) / 1e6;
  const Vec5 neutral = neutral_pose();
  ArmState st;
  st.joint_angles = neutral;
  for (std::int64_t k = 1; !stop_.stop_requested(); ++k) {
    const Micros t = t0_ + k * cfg_.arm_cadence;
    clk_->wait_until(t);
    if (stop_.stop_requested()) break;
    const Vec5 cmd = latched_command();
    for (int j = 0; j < kJoints; ++j) {
      const double lo = neutral[j] - cfg_.angle_limit;
      const double hi = neutral[j] + cfg_.angle_limit;
      double w = st.joint_angles[j] + cmd[j] * dt;
      double v = cmd[j];
      if (w <= lo) { w = lo; v = 0.0; }
      if (w >= hi) { w = hi; v = 0.0; }
      st.joint_angles[j] = w;
      st.joint_velocities[j] = v;
      st.last_command[j] = cmd[j];
    }
    arm_slot_.publish({st, t});
    arm_ticks_.fetch_add(1);
  }
}

void Env::camera_body() {
  std::deque<FramePtr> history;
  for (std::int64_t k = 1; !stop_.stop_requested(); ++k) {
    const Micros t = t0_ + k * cfg_.camera_cadence;
    clk_->wait_until(t);
    if (stop_.stop_requested()) break;
    const auto arm = arm_slot_.latest();
    const auto tgt = target_slot_.latest();
    const Vec2 pose = forward_kinematics(arm->value.joint_angles, cfg_.fk_gain);
    auto frame = std::make_shared<CameraFrame>(
        render_camera(pose, *tgt, cfg_.img_h, cfg_.img_w, cfg_, t));
    history.push_back(std::move(frame));
    if (history.size() > 3) history.pop_front();
    if (history.size() == 3) {
      frames_slot_.publish({history[0], history[1], history[2]});
    }
    camera_ticks_.fetch_add(1);
  }
}

void Env::monitor_body() {
  const double dt = static_cast<double>(cfg_.monitor_cadence) / 1e6;
  std::uint64_t seen_cmd = 0;
  for (std::int64_t k = 1; !stop_.stop_requested(); ++k) {
    const Micros t = t0_ + k * cfg_.monitor_cadence;
    clk_->wait_until(t);
    if (stop_.stop_requested()) break;
    TargetState st = *target_slot_.latest();
    const std::uint64_t cmd_seq = target_cmd_.sequence();
    if (cmd_seq != seen_cmd) {
      seen_cmd = cmd_seq;
      st = target_cmd_.latest()->state;  // fresh target, no advance this tick
    } else {
      advance_target(st, dt);
    }
    target_slot_.publish(st);
  }
}

Observation Env::assemble_observation() {
  const auto frames = frames_slot_.latest();
  if (!frames)
    throw std::logic_error("assemble_observation: frame history not primed");
  const auto arm = arm_slot_.latest();
  Observation obs;
  obs.frames = *frames;
  obs.joint_angles = arm->value.joint_angles;
  obs.joint_velocities = arm->value.joint_velocities;
  obs.previous_action = latched_command();
  obs.ts = clk_->now();
  return obs;
}

double Env::reward_for(const Observation& obs) const {
  const CameraFrame& newest = *obs.frames[2];
  return compute_reward(newest.mask, obs.joint_angles, reward_);
}

void Env::reset() {
  const Micros t0 = clk_->now();
  // Re-sample the target. Reaching: uniform in the window, static. Tracking:
  // uniform position plus a fresh random direction at the configured speed.
  TargetState tgt;
  tgt.radius = cfg_.target_radius;
  tgt.regime = cfg_.task;
  tgt.position = {rng_.uniform(-cfg_.target_window, cfg_.target_window),
                  rng_.uniform(-cfg_.target_window, cfg_.target_window)};
  if (cfg_.task == Task::Tracking) {
    const double theta = rng_.uniform(0.0, 2.0 * kPi);
    tgt.velocity = {cfg_.target_speed * std::cos(theta),
                    cfg_.target_speed * std::sin(theta)};
  }
  target_cmd_.publish({tgt});

  // Drive to neutral: command the velocity that lands on the pose within one
  // refresh period, clamped to the velocity limit.
  const Vec5 neutral = neutral_pose();
  const double period_s = static_cast<double>(cfg_.command_refresh) / 1e6;
  for (Micros t = t0; t < t0 + cfg_.reset_duration; t += cfg_.command_refresh) {
    clk_->wait_until(t);
    const auto arm = arm_slot_.latest();
    Vec5 cmd{};
    for (int j = 0; j < kJoints; ++j)
      cmd[j] = (neutral[j] - arm->value.joint_angles[j]) / period_s;
    actuate(cmd);  // clamped inside
  }
  clk_->wait_until(t0 + cfg_.reset_duration);
  actuate(Vec5{});
}

TargetState Env::target_now() const { return *target_slot_.latest(); }

ArmState Env::arm_now() const { return arm_slot_.latest()->value; }

void write_ppm(const CameraFrame& frame, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_ppm: cannot open " + path);
  out << "P6\n" << frame.w << ' ' << frame.h << "\n255\n";
  for (float v : frame.rgb) {
    const float c = std::min(1.0f, std::max(0.0f, v));
    out.put(static_cast<char>(std::lround(c * 255.0f)));
  }
}

nn::Tensor observation_images(const Observation& obs) {
  const CameraFrame& f0 = *obs.frames[0];
  const int h = f0.h, w = f0.w;
  nn::Tensor out({1, 9, h, w});
  for (int fidx = 0; fidx < 3; ++fidx) {
    const CameraFrame& f = *obs.frames[fidx];
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
          out.at4(0, 3 * fidx + c, i, j) =
              f.rgb[(static_cast<std::size_t>(i) * w + j) * 3 + c];
  }
  return out;
}

std::array<float, 15> observation_proprio(const Observation& obs) {
  std::array<float, 15> out{};
  for (int j = 0; j < kJoints; ++j) {
    out[j] = static_cast<float>(obs.joint_angles[j]);
    out[5 + j] = static_cast<float>(obs.joint_velocities[j]);
    out[10 + j] = static_cast<float>(obs.previous_action[j]);
  }
  return out;
}

}  // namespace rtsac::sim
