#include "rtsac/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace rtsac::harness {

Setting Setting::named(const std::string& name, bool full_scale) {
  Setting s;
  s.name = name;
  if (name == "baseline") {
    s.img_h = full_scale ? 90 : 24;
    s.img_w = full_scale ? 160 : 32;
    s.batch_size = full_scale ? 128 : 32;
    s.virtual_costs = {msec(10), msec(20), msec(35)};
    s.update_cap = 1;  // updates outpace data collection here; cap at 1:1
  } else if (name == "highres" || name == "high_resolution") {
    s.name = "highres";
    s.img_h = full_scale ? 180 : 48;
    s.img_w = full_scale ? 320 : 64;
    s.batch_size = full_scale ? 128 : 32;
    s.virtual_costs = {msec(15), msec(35), msec(55)};
    s.update_cap = 0;
  } else if (name == "largebatch" || name == "large_minibatch") {
    s.name = "largebatch";
    s.img_h = full_scale ? 90 : 24;
    s.img_w = full_scale ? 160 : 32;
    s.batch_size = full_scale ? 512 : 128;
    s.virtual_costs = {msec(20), msec(55), msec(110)};
    s.update_cap = 0;
  } else {
    throw std::invalid_argument("unknown setting: " + name);
  }
  return s;
}

namespace {

const std::set<std::string> kKnownKeys = {
    "arch", "setting", "task", "clock", "seed", "budget_s", "out",
    "full_scale", "warmup_steps", "update_cap", "margin_ms",
    "action_cycle_ms", "episode_ms", "image_h", "image_w", "batch",
    "cost_interaction_ms", "cost_sample_ms", "cost_update_ms",
    "replay_capacity", "crop_fraction", "gamma", "alpha_ent", "tau",
    "critic_lr", "policy_lr", "twin_critics", "value_samples", "hidden",
    "conv1_filters", "conv2_filters", "fk_gain", "fov_half_w",
    "target_radius", "target_speed", "target_window", "angle_limit",
    "max_velocity", "reward_alpha", "reward_beta", "reset_ms",
    "overrun_tolerance_ms", "load_params", "save_params", "dump_frames",
    "dump_every", "spin_margin_us",
};

exec::Architecture parse_arch(const std::string& s) {
  if (s == "seq") return exec::Architecture::SeqSAC;
  if (s == "async1") return exec::Architecture::AsyncSAC1;
  if (s == "async2") return exec::Architecture::AsyncSAC2;
  throw std::invalid_argument("unknown arch: " + s);
}

}  // namespace

ExperimentPlan build_plan(const Config& cfg) {
  for (const auto& [k, v] : cfg.entries())
    if (!kKnownKeys.count(k))
      throw std::invalid_argument("unknown config key: " + k);

  ExperimentPlan plan;
  plan.setting_name = cfg.get_str("setting", "baseline");
  const bool full_scale = cfg.get_bool("full_scale", false);
  Setting setting = Setting::named(plan.setting_name, full_scale);
  plan.setting_name = setting.name;

  exec::RunConfig& rc = plan.run;
  rc.arch = parse_arch(cfg.get_str("arch", "async2"));
  plan.clock_mode = cfg.get_str("clock", "virtual") == "wall"
                        ? ClockMode::Wall
                        : ClockMode::Virtual;
  plan.out_dir = cfg.get_str("out", "");

  rc.seed = static_cast<std::uint64_t>(cfg.get_int("seed", 1));
  rc.budget = sec(cfg.get_int("budget_s", 600));
  rc.warmup_steps = static_cast<int>(cfg.get_int("warmup_steps", 1000));
  rc.update_cap = static_cast<std::uint64_t>(
      cfg.get_int("update_cap", static_cast<long long>(setting.update_cap)));
  rc.margin = msec(cfg.get_int("margin_ms", 10));
  rc.action_cycle = msec(cfg.get_int("action_cycle_ms", 0));
  rc.episode_length = msec(cfg.get_int("episode_ms", 4000));
  rc.overrun_tolerance = msec(cfg.get_int("overrun_tolerance_ms", 2));
  rc.batch_size = static_cast<int>(cfg.get_int("batch", setting.batch_size));

  rc.costs.interaction_us = msec(
      cfg.get_int("cost_interaction_ms", setting.virtual_costs.interaction_us / 1000));
  rc.costs.sample_us =
      msec(cfg.get_int("cost_sample_ms", setting.virtual_costs.sample_us / 1000));
  rc.costs.update_us =
      msec(cfg.get_int("cost_update_ms", setting.virtual_costs.update_us / 1000));

  sim::EnvConfig& env = rc.env;
  env.img_h = static_cast<int>(cfg.get_int("image_h", setting.img_h));
  env.img_w = static_cast<int>(cfg.get_int("image_w", setting.img_w));
  env.task = cfg.get_str("task", "reaching") == "tracking" ? sim::Task::Tracking
                                                           : sim::Task::Reaching;
  env.fk_gain = cfg.get_double("fk_gain", env.fk_gain);
  env.fov_half_w = cfg.get_double("fov_half_w", env.fov_half_w);
  env.target_radius = cfg.get_double("target_radius", env.target_radius);
  env.target_speed = cfg.get_double("target_speed", env.target_speed);
  env.target_window = cfg.get_double("target_window", env.target_window);
  env.angle_limit = cfg.get_double("angle_limit", env.angle_limit);
  env.max_velocity = cfg.get_double("max_velocity", env.max_velocity);
  env.reward_alpha = cfg.get_double("reward_alpha", env.reward_alpha);
  env.reward_beta = cfg.get_double("reward_beta", env.reward_beta);
  env.reset_duration = msec(cfg.get_int("reset_ms", 3000));

  const double crop_fraction = cfg.get_double("crop_fraction", 0.9);
  rc.replay.capacity =
      static_cast<std::size_t>(cfg.get_int("replay_capacity", 100000));
  rc.replay.crop_h = static_cast<int>(std::floor(env.img_h * crop_fraction));
  rc.replay.crop_w = static_cast<int>(std::floor(env.img_w * crop_fraction));

  nn::NetConfig& net = rc.net;
  net.img_h = rc.replay.crop_h;
  net.img_w = rc.replay.crop_w;
  net.hidden = static_cast<int>(cfg.get_int("hidden", 128));
  net.conv1_filters = static_cast<int>(cfg.get_int("conv1_filters", 8));
  net.conv2_filters = static_cast<int>(cfg.get_int("conv2_filters", 16));
  net.action_scale = env.max_velocity;
  net.twin_critics = cfg.get_bool("twin_critics", true);
  // Condition proprioception: angles centered on the neutral pose and scaled
  // by the angle limit; velocities and previous action scaled to [-1, 1].
  net.proprio_offset.assign(15, 0.0);
  net.proprio_scale.assign(15, 1.0);
  const auto neutral = sim::neutral_pose();
  for (int j = 0; j < 5; ++j) {
    net.proprio_offset[j] = neutral[j];
    net.proprio_scale[j] = 1.0 / env.angle_limit;
    net.proprio_scale[5 + j] = 1.0 / env.max_velocity;
    net.proprio_scale[10 + j] = 1.0 / env.max_velocity;
  }

  sac::SacConfig& sc = rc.sac;
  sc.gamma = static_cast<float>(cfg.get_double("gamma", 0.99));
  sc.alpha_ent = static_cast<float>(cfg.get_double("alpha_ent", 0.1));
  sc.tau = static_cast<float>(cfg.get_double("tau", 0.005));
  sc.critic_lr = static_cast<float>(cfg.get_double("critic_lr", 3e-4));
  sc.policy_lr = static_cast<float>(cfg.get_double("policy_lr", 3e-4));
  sc.value_samples = static_cast<int>(cfg.get_int("value_samples", 1));

  rc.load_params_path = cfg.get_str("load_params", "");
  rc.save_params_path = cfg.get_str("save_params", "");
  rc.dump_frames_dir = cfg.get_str("dump_frames", "");
  rc.dump_every = static_cast<int>(cfg.get_int("dump_every", 25));

  if (rc.costs.interaction_us < 0 || rc.costs.sample_us < 0 ||
      rc.costs.update_us < 0)
    throw std::invalid_argument("component costs must be non-negative");
  if (sc.gamma < 0 || sc.gamma >= 1)
    throw std::invalid_argument("gamma must lie in [0, 1)");
  if (sc.alpha_ent <= 0)
    throw std::invalid_argument("alpha_ent must be positive");
  if (rc.budget <= 0 || rc.warmup_steps < 0 || rc.batch_size <= 0)
    throw std::invalid_argument("budget, warmup and batch must be positive");

  return plan;
}

void run_experiment(const ExperimentPlan& plan, RunLog& log) {
  log.meta.setting = plan.setting_name;
  std::unique_ptr<Clock> clk;
  if (plan.clock_mode == ClockMode::Wall) {
    clk = std::make_unique<WallClock>();
  } else {
    clk = std::make_unique<VirtualClock>(plan.run.costs);
  }
  exec::run(plan.run, *clk, log);
  if (!plan.out_dir.empty()) write_outputs(log, plan.out_dir);
}

std::string summary_json(const RunLog& log) {
  nlohmann::json j;
  j["arch"] = log.meta.arch;
  j["setting"] = log.meta.setting;
  j["task"] = log.meta.task;
  j["clock"] = log.meta.clock;
  j["seed"] = log.meta.seed;
  j["budget_s"] = static_cast<double>(log.meta.budget) / 1e6;
  j["action_cycle_ms"] = static_cast<double>(log.meta.action_cycle) / 1000.0;
  j["warmup_steps"] = log.meta.warmup_steps;
  j["batch_size"] = log.meta.batch_size;
  j["image"] = {log.meta.img_h, log.meta.img_w};
  j["episodes"] = log.episodes.size();
  j["steps"] = log.steps.size();
  j["updates"] = log.updates.size();
  j["overruns"] = log.overruns;
  j["faults"] = log.env_faults;
  if (!log.episodes.empty()) j["overall_performance"] = overall_performance(log);

  if (!log.steps.empty()) {
    double mean = 0, mn = 1e300, mx = -1e300;
    for (const auto& s : log.steps) {
      const double c = static_cast<double>(s.cycle_us) / 1000.0;
      mean += c;
      mn = std::min(mn, c);
      mx = std::max(mx, c);
    }
    mean /= static_cast<double>(log.steps.size());
    j["cycle_ms"] = {{"mean", mean}, {"min", mn}, {"max", mx}};
  }
  if (log.updates.size() >= 2) {
    double mean = 0;
    for (std::size_t i = 1; i < log.updates.size(); ++i)
      mean += static_cast<double>(log.updates[i].update_end -
                                  log.updates[i - 1].update_end) / 1000.0;
    mean /= static_cast<double>(log.updates.size() - 1);
    j["update_period_ms_mean"] = mean;
  }
  const auto prof = profile_components(log);
  j["component_profile_ms"] = {{"interaction", prof.interaction_ms},
                               {"sample", prof.sample_ms},
                               {"update", prof.update_ms}};
  if (!log.steps.empty())
    j["update_step_ratio"] = static_cast<double>(log.updates.size()) /
                             static_cast<double>(log.steps.size());
  return j.dump(2) + "\n";
}

void write_outputs(const RunLog& log, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream out(out_dir + "/" + name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + out_dir + "/" + name);
    out << content;
  };
  write("runlog.csv", log.steps_csv());
  write("updates.csv", log.updates_csv());
  write("curve.csv", log.curve_csv());
  write("summary.json", summary_json(log));
}

}  // namespace rtsac::harness
