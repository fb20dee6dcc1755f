#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rtsac/clock.hpp"

namespace rtsac::harness {

struct StepRecord {
  std::int64_t step = 0;     // global training step, 1-based
  std::int64_t episode = 0;  // contiguous episode id, 0-based
  std::int64_t k = 0;        // step index within the episode, 1-based
  Micros t = 0;              // observation timestamp
  Micros cycle_us = 0;       // realized action cycle (0 on the first step of an episode)
  Micros interaction_us = 0;
  double raw_reward = 0;
  double scaled_reward = 0;
  std::uint64_t param_version = 0;
  bool overrun = false;
};

struct UpdateRecord {
  std::int64_t update = 0;  // 1-based
  Micros sample_start = 0;
  Micros sample_end = 0;
  Micros update_start = 0;
  Micros update_end = 0;
  double q_loss = 0;
  double policy_loss = 0;
  double entropy = 0;
  std::uint64_t steps_seen = 0;     // env steps done when sampling started
  std::uint64_t batch_version = 0;  // parameter version stamped at sampling
  std::uint64_t version_after = 0;
  std::uint64_t checksum = 0;       // parameter checksum after the update
};

struct EpisodeRecord {
  std::int64_t episode = 0;
  Micros t_start = 0;
  Micros t_end = 0;
  int steps = 0;
  double ret = 0;  // sum of scaled rewards
};

struct RunMeta {
  std::string arch;
  std::string setting;
  std::string task;
  std::string clock;
  std::uint64_t seed = 0;
  Micros budget = 0;
  Micros action_cycle = 0;
  Micros margin = 0;
  CostProfile costs;
  int warmup_steps = 0;
  int batch_size = 0;
  int img_h = 0, img_w = 0;
};

// Per-run record sink. Step/episode records and the overrun counter are
// written only by the interaction process and update records only by the
// gradient stage; everything is read after the workers joined.
class RunLog {
 public:
  RunMeta meta;
  std::vector<StepRecord> steps;
  std::vector<UpdateRecord> updates;
  std::vector<EpisodeRecord> episodes;
  std::uint64_t overruns = 0;
  std::uint64_t env_faults = 0;
  std::uint64_t warmup_pushes = 0;  // replay size when training began
  std::uint64_t arm_ticks = 0;      // device tick totals over the whole run
  std::uint64_t camera_ticks = 0;
  Micros env_elapsed = 0;           // clock time when the devices stopped

  std::string steps_csv() const;
  std::string updates_csv() const;
  std::string curve_csv() const;
};

struct ComponentProfile {
  double interaction_ms = 0;  // medians
  double sample_ms = 0;
  double update_ms = 0;
};

// raw * (action_cycle / base): keeps episode returns comparable across
// different action cycle times.
inline double scale_reward(double raw, Micros action_cycle,
                           Micros base = msec(40)) {
  return raw * static_cast<double>(action_cycle) / static_cast<double>(base);
}

// Mean episode return over the whole training period.
double overall_performance(const RunLog& log);

// Median component durations over the run.
ComponentProfile profile_components(const RunLog& log);

struct Aggregate {
  double mean = 0;
  double standard_error = 0;
  int n = 0;
};

Aggregate aggregate_runs(const std::vector<double>& per_run_values);

}  // namespace rtsac::harness
