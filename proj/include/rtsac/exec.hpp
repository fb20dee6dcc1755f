#pragma once

#include <array>
#include <functional>
#include <string>

#include "rtsac/clock.hpp"
#include "rtsac/envsim.hpp"
#include "rtsac/nets.hpp"
#include "rtsac/replay.hpp"
#include "rtsac/runlog.hpp"
#include "rtsac/sac.hpp"
#include "rtsac/slots.hpp"

namespace rtsac::exec {

enum class Architecture { SeqSAC, AsyncSAC1, AsyncSAC2 };

std::string arch_name(Architecture a);

struct CycleConfig {
  Micros action_cycle = msec(40);  // positive multiple of the camera cadence
  Micros arm_cadence = msec(8);
  Micros camera_cadence = msec(40);
  Micros margin = msec(10);
};

// Smallest multiple of the camera cadence that fits the per-cycle work plus
// margin: interaction + sample + update for Seq-SAC, interaction alone for
// the asynchronous variants.
Micros min_action_cycle(Architecture arch, const CostProfile& costs,
                        Micros margin, Micros camera_cadence = msec(40));

// Latest-wins parameter publication. fetch_latest returns the most recently
// published immutable snapshot; the channel is seeded with the initial
// (version 0) parameters before any process starts.
class ParamChannel {
 public:
  void publish(const nn::ParameterSet& p) { slot_.publish(p); }

  nn::ParameterSet fetch_latest() const {
    auto p = slot_.latest();
    if (!p) throw std::logic_error("ParamChannel: fetch before seeding");
    return *p;
  }

  std::uint64_t latest_version() const {
    auto p = slot_.latest();
    return p ? p->version : 0;
  }

 private:
  LatestSlot<nn::ParameterSet> slot_;
};

struct RunConfig {
  Architecture arch = Architecture::AsyncSAC2;
  CostProfile costs;        // virtual-mode injected costs
  Micros margin = msec(10);
  Micros action_cycle = 0;  // 0 = derive with min_action_cycle
  Micros episode_length = msec(4000);
  Micros budget = sec(600);     // training time; warmup is not counted
  Micros overrun_tolerance = msec(2);  // wall-mode lateness before an overrun is logged
  int warmup_steps = 1000;
  std::uint64_t update_cap = 0;  // updates per env step, 0 = uncapped
  std::uint64_t seed = 1;
  int batch_size = 32;

  sim::EnvConfig env;
  replay::ReplayConfig replay;
  nn::NetConfig net;
  sac::SacConfig sac;

  // Checkpointing.
  std::string load_params_path;  // start from this checkpoint instead of fresh weights
  std::string save_params_path;  // write final weights here

  // Debug/test hooks.
  std::function<void(int k, const sim::Observation&)> obs_probe;
  std::function<void(const replay::Transition&, bool warmup)> transition_probe;
  std::string dump_frames_dir;
  int dump_every = 0;

  Micros resolved_action_cycle() const {
    return action_cycle > 0 ? action_cycle
                            : min_action_cycle(arch, costs, margin);
  }

  // The resolved cadence bundle for this run. The action cycle must be a
  // positive multiple of the camera cadence (the lcm of both device rates).
  CycleConfig cycle_config() const {
    CycleConfig cc;
    cc.action_cycle = resolved_action_cycle();
    cc.arm_cadence = env.arm_cadence;
    cc.camera_cadence = env.camera_cadence;
    cc.margin = margin;
    return cc;
  }
};

// Executes warmup plus training episodes until the budget expires; fills the
// run log. The caller owns the clock so virtual schedules can be inspected.
void run(const RunConfig& cfg, Clock& clk, harness::RunLog& log);

}  // namespace rtsac::exec
