#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rtsac/harness.hpp"

using namespace rtsac;

int main(int argc, char** argv) {
  CLI::App app{"rtsac: real-time SAC with sequential and asynchronous execution"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run one training experiment");
  std::string config_path, arch, setting, task, clock, out;
  long long seed = -1, budget = -1;
  std::vector<std::string> overrides;
  std::string load_params, save_params, dump_frames;
  long long dump_every = -1;
  run->add_option("--config", config_path, "flat key=value config file");
  run->add_option("--arch", arch, "seq | async1 | async2");
  run->add_option("--setting", setting, "baseline | highres | largebatch");
  run->add_option("--task", task, "reaching | tracking");
  run->add_option("--clock", clock, "wall | virtual");
  run->add_option("--seed", seed, "run seed");
  run->add_option("--budget", budget, "training budget in seconds");
  run->add_option("--out", out, "output directory for CSV/JSON results");
  run->add_option("--set", overrides, "extra key=value override (repeatable)");
  run->add_option("--load-params", load_params, "start from this checkpoint");
  run->add_option("--save-params", save_params, "write final weights here");
  run->add_option("--dump-frames", dump_frames, "dump camera frames (PPM) to this dir");
  run->add_option("--dump-every", dump_every, "dump every Nth step");

  CLI11_PARSE(app, argc, argv);

  try {
    harness::Config cfg = config_path.empty()
                              ? harness::Config{}
                              : harness::Config::from_file(config_path);
    if (!arch.empty()) cfg.set("arch", arch);
    if (!setting.empty()) cfg.set("setting", setting);
    if (!task.empty()) cfg.set("task", task);
    if (!clock.empty()) cfg.set("clock", clock);
    if (seed >= 0) cfg.set("seed", std::to_string(seed));
    if (budget >= 0) cfg.set("budget_s", std::to_string(budget));
    if (!out.empty()) cfg.set("out", out);
    if (!load_params.empty()) cfg.set("load_params", load_params);
    if (!save_params.empty()) cfg.set("save_params", save_params);
    if (!dump_frames.empty()) cfg.set("dump_frames", dump_frames);
    if (dump_every >= 0) cfg.set("dump_every", std::to_string(dump_every));
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument("--set expects key=value, got: " + kv);
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }

    const auto plan = harness::build_plan(cfg);
    std::printf("rtsac run: arch=%s setting=%s clock=%s seed=%llu cycle=%lldms budget=%llds\n",
                exec::arch_name(plan.run.arch).c_str(), plan.setting_name.c_str(),
                plan.clock_mode == ClockMode::Wall ? "wall" : "virtual",
                static_cast<unsigned long long>(plan.run.seed),
                static_cast<long long>(plan.run.resolved_action_cycle() / 1000),
                static_cast<long long>(plan.run.budget / 1000000));

    harness::RunLog log;
    harness::run_experiment(plan, log);

    std::printf("episodes=%zu steps=%zu updates=%zu overruns=%llu\n",
                log.episodes.size(), log.steps.size(), log.updates.size(),
                static_cast<unsigned long long>(log.overruns));
    if (!log.episodes.empty())
      std::printf("overall performance (mean episode return): %.3f\n",
                  harness::overall_performance(log));
    if (!plan.out_dir.empty())
      std::printf("results written to %s\n", plan.out_dir.c_str());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
