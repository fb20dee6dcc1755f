#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "rtsac/clock.hpp"
#include "rtsac/rng.hpp"
#include "rtsac/slots.hpp"
#include "rtsac/tensor.hpp"

namespace rtsac::sim {

inline constexpr int kJoints = 5;
inline constexpr double kPi = 3.14159265358979323846;

using Vec5 = std::array<double, kJoints>;
using Vec2 = std::array<double, 2>;

enum class Task { Reaching, Tracking };

struct EnvConfig {
  int img_h = 24;
  int img_w = 32;
  Task task = Task::Reaching;

  // Geometry: pan = gain * (w1+w2+w3 - pi), tilt = gain * (w4+w5); the camera
  // window is an orthographic cut of the monitor plane around that pose.
  double fk_gain = 0.5;
  double fov_half_w = 0.75;
  double target_radius = 0.10;

  double max_velocity = 0.7;       // rad/s, actuation clamp
  double angle_limit = 1.5;        // rad, per joint around the neutral pose
  double target_speed = 0.25;      // plane units/s, Tracking
  double target_window = 1.0;      // reset samples positions in [-tw, tw]^2

  Micros arm_cadence = msec(8);
  Micros camera_cadence = msec(40);
  Micros monitor_cadence = msec(8);
  Micros reset_duration = msec(3000);
  Micros command_refresh = msec(40);  // reset controller update period

  double reward_alpha = 800.0;  // target-term coefficient of the reward
  double reward_beta = 1.0;     // twist-penalty coefficient

  double fov_half_h() const { return fov_half_w * img_h / img_w; }
};

inline Vec5 neutral_pose() { return {kPi / 3, kPi / 3, kPi / 3, 0.0, 0.0}; }

struct ArmState {
  Vec5 joint_angles{};
  Vec5 joint_velocities{};
  Vec5 last_command{};
};

struct TargetState {
  Vec2 position{};
  Vec2 velocity{};
  double radius = 0.2;
  Task regime = Task::Reaching;
};

struct CameraFrame {
  int h = 0, w = 0;
  std::vector<float> rgb;        // h*w*3, interleaved, values in [0,1]
  std::vector<std::uint8_t> mask;  // h*w, 1 iff the pixel lies in the target disc
  Micros ts = 0;
};

using FramePtr = std::shared_ptr<const CameraFrame>;

struct Observation {
  std::array<FramePtr, 3> frames{};  // oldest .. newest
  Vec5 joint_angles{};
  Vec5 joint_velocities{};
  Vec5 previous_action{};
  Micros ts = 0;
};

struct RewardConfig {
  double alpha = 800.0;
  double beta = 1.0;
  std::vector<double> weights;  // h*w, 1 at the center falling to 0 at corners
  int h = 0, w = 0;

  static RewardConfig from_env(const EnvConfig& cfg);
};

// ---------------------------------------------------------------------------
// Pure operations.

inline Vec5 clamp_command(const Vec5& cmd, double max_vel) {
  Vec5 out{};
  for (int j = 0; j < kJoints; ++j)
    out[j] = std::min(max_vel, std::max(-max_vel, cmd[j]));
  return out;
}

// (pan, tilt) of the camera on the monitor plane. Only the angle sums matter,
// which preserves the actuation redundancy of the full arm.
inline Vec2 forward_kinematics(const Vec5& w, double gain) {
  return {gain * (w[0] + w[1] + w[2] - kPi), gain * (w[3] + w[4])};
}

// Radial linear falloff: 1 at the continuous image center, 0 at the corners.
std::vector<double> make_weight_matrix(int h, int w);

// Orthographic render of the monitor plane: red disc on white background.
// Pixel (i, j) is centered at pose + ((j - w/2) * sx, (i - h/2) * sy).
CameraFrame render_camera(const Vec2& pose, const TargetState& target, int h,
                          int w, const EnvConfig& cfg, Micros ts);

// The reward: alpha * (1/hw) * sum(M .* W) - beta * (|pi - w1-w2-w3| + |w4+w5|).
double compute_reward(const std::vector<std::uint8_t>& mask,
                      const std::vector<double>& weights, int h, int w,
                      const Vec5& omega, double alpha, double beta);

double compute_reward(const std::vector<std::uint8_t>& mask,
                      const Vec5& omega, const RewardConfig& cfg);

// Tracking targets integrate position and reflect specularly off the
// [-1, 1]^2 boundary; Reaching targets do not move.
void advance_target(TargetState& t, double dt_seconds);

// ---------------------------------------------------------------------------
// The simulated real-time environment: three device processes (arm, camera,
// monitor) streaming timestamped samples into latest-wins slots while the
// environment interface actuates, fuses, rewards and resets.

class Env {
 public:
  Env(const EnvConfig& cfg, Clock& clk, Rng env_rng);
  ~Env();

  Env(const Env&) = delete;
  Env& operator=(const Env&) = delete;

  // Spawns the device processes; ticks begin at the next cadence boundary.
  void start();
  // Stops and joins the devices.
  void stop();

  // Clamps, latches and counts a command; non-finite input is rejected and
  // leaves the previous command in force.
  void actuate(const Vec5& command);

  // Three freshest frames plus the latest arm sample; never blocks.
  // Requires the frame history to be primed (always true after reset()).
  Observation assemble_observation();

  // Eq-3 reward of the newest frame and the proprioception in `obs`.
  double reward_for(const Observation& obs) const;

  // Drives the arm to the neutral pose over reset_duration while time keeps
  // passing, re-samples the target, and leaves a zero command latched.
  // Runs in the calling process.
  void reset();

  const EnvConfig& config() const { return cfg_; }
  const RewardConfig& reward_config() const { return reward_; }
  const std::vector<double>& weight_matrix() const { return reward_.weights; }

  std::uint64_t arm_ticks() const { return arm_ticks_.load(); }
  std::uint64_t camera_ticks() const { return camera_ticks_.load(); }
  std::uint64_t faults() const { return faults_.load(); }

  TargetState target_now() const;
  ArmState arm_now() const;
  Vec5 latched_command() const;

 private:
  struct TargetCommand {
    TargetState state;
  };

  void arm_body();
  void camera_body();
  void monitor_body();

  EnvConfig cfg_;
  Clock* clk_;
  Rng rng_;
  RewardConfig reward_;

  LatestSlot<Timestamped<ArmState>> arm_slot_;
  LatestSlot<TargetState> target_slot_;
  LatestSlot<std::array<FramePtr, 3>> frames_slot_;
  LatestSlot<TargetCommand> target_cmd_;

  mutable std::mutex cmd_mu_;
  Vec5 command_{};

  std::atomic<std::uint64_t> arm_ticks_{0};
  std::atomic<std::uint64_t> camera_ticks_{0};
  std::atomic<std::uint64_t> faults_{0};

  StopFlag stop_;
  Micros t0_ = 0;
  bool started_ = false;
  std::unique_ptr<Process> arm_proc_, camera_proc_, monitor_proc_;
};

// Binary PPM (P6) dump of one frame, for eyeballing what the camera sees.
void write_ppm(const CameraFrame& frame, const std::string& path);

// Stacks the three frames of an observation channel-wise into [9, h, w],
// oldest frame first, RGB within each frame.
nn::Tensor observation_images(const Observation& obs);

// angles ++ velocities ++ previous action, raw units.
std::array<float, 15> observation_proprio(const Observation& obs);

}  // namespace rtsac::sim
