#pragma once

#include <memory>
#include <string>

#include "rtsac/config.hpp"
#include "rtsac/exec.hpp"
#include "rtsac/runlog.hpp"

namespace rtsac::harness {

// Experimental settings. Desk-scale presets keep the full-scale ratios
// (high resolution quadruples the pixel count, large mini-batch quadruples
// the batch) while staying tractable on a desktop CPU; full-scale presets
// carry the original dimensions.
struct Setting {
  std::string name;
  int img_h = 24, img_w = 32;
  int batch_size = 32;
  CostProfile virtual_costs;      // measured-profile-shaped component costs
  std::uint64_t update_cap = 0;   // baseline caps updates at 1 per step

  static Setting named(const std::string& name, bool full_scale = false);
};

// Assembles a full RunConfig (plus clock mode and output dir) from the flat
// key=value config. Unknown keys are rejected to catch typos.
struct ExperimentPlan {
  exec::RunConfig run;
  ClockMode clock_mode = ClockMode::Virtual;
  std::string out_dir;
  std::string setting_name;
};

ExperimentPlan build_plan(const Config& cfg);

// Runs one experiment end to end and writes runlog.csv, updates.csv,
// curve.csv and summary.json under the plan's output directory (if set).
// Returns the filled log through `log`.
void run_experiment(const ExperimentPlan& plan, RunLog& log);

std::string summary_json(const RunLog& log);

void write_outputs(const RunLog& log, const std::string& out_dir);

}  // namespace rtsac::harness
