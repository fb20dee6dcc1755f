#include "rtsac/exec.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <stdexcept>

namespace rtsac::exec {

std::string arch_name(Architecture a) {
  switch (a) {
    case Architecture::SeqSAC: return "seq";
    case Architecture::AsyncSAC1: return "async1";
    case Architecture::AsyncSAC2: return "async2";
  }
  return "?";
}

Micros min_action_cycle(Architecture arch, const CostProfile& costs,
                        Micros margin, Micros camera_cadence) {
  const Micros need =
      arch == Architecture::SeqSAC
          ? costs.interaction_us + costs.sample_us + costs.update_us + margin
          : costs.interaction_us + margin;
  const Micros aligned =
      ((need + camera_cadence - 1) / camera_cadence) * camera_cadence;
  return std::max(aligned, camera_cadence);
}

namespace {

struct RunState {
  const RunConfig* cfg;
  Clock* clk;
  sim::Env* env;
  replay::ReplayBuffer* buffer;
  harness::RunLog* log;

  ParamChannel params;
  ThrottleGate gate;
  Handoff<replay::Batch> handoff;
  StopFlag stop;
  sac::Learner learner;

  Rng actor_rng, sampler_rng, update_rng;
  Micros cycle = 0;
  std::int64_t global_step = 0;
  std::int64_t episode_id = 0;
  std::int64_t update_id = 0;

  RunState(const RunConfig& c, Clock& k, sim::Env& e, replay::ReplayBuffer& b,
           harness::RunLog& l, const Rng& base)
      : cfg(&c),
        clk(&k),
        env(&e),
        buffer(&b),
        log(&l),
        gate(k, c.update_cap),
        handoff(k),
        learner(c.net, c.sac, base.split(1)),
        actor_rng(base.split(2)),
        sampler_rng(base.split(3)),
        update_rng(base.split(4)),
        cycle(c.resolved_action_cycle()) {}
};

nn::Tensor center_crop(const nn::Tensor& images, int out_h, int out_w) {
  const int h = images.dim(2), w = images.dim(3);
  if (h == out_h && w == out_w) return images;
  replay::CropOffset off{(h - out_h) / 2, (w - out_w) / 2};
  return replay::crop_with_offsets(images, {off}, out_h, out_w);
}

sim::Vec5 select_action(RunState& st, const nn::ParameterSet& ps,
                        const sim::Observation& obs, bool warmup) {
  const auto& net = st.cfg->net;
  sim::Vec5 a{};
  if (warmup) {
    for (int d = 0; d < sim::kJoints; ++d)
      a[d] = st.actor_rng.uniform(-net.action_scale, net.action_scale);
    return a;
  }
  auto images = center_crop(sim::observation_images(obs), net.img_h, net.img_w);
  nn::Tensor proprio({1, 15});
  const auto raw = sim::observation_proprio(obs);
  for (int i = 0; i < 15; ++i) proprio.at2(0, i) = raw[static_cast<std::size_t>(i)];
  const auto feat = nn::features_nograd(net, ps.enc, images, proprio);
  auto [mean, log_std] = nn::policy_forward_nograd(net, ps.policy, feat);
  const auto smp =
      nn::sample_action_row(net, mean, log_std, 0, st.actor_rng, true);
  for (int d = 0; d < sim::kJoints; ++d)
    a[d] = static_cast<double>(smp.action[static_cast<std::size_t>(d)]);
  return a;
}

// Update the learner on one batch, publish the new snapshot, log the record.
void do_update(RunState& st, replay::Batch b) {
  const Micros u0 = st.clk->now();
  const std::uint64_t steps_seen = st.gate.steps();
  const auto m = st.learner.update(b, st.update_rng);
  st.clk->charge(Component::Update, st.clk->now() - u0);
  const Micros u1 = st.clk->now();
  if (!m.aborted) st.params.publish(st.learner.params());
  ++st.update_id;
  harness::UpdateRecord rec;
  rec.update = st.update_id;
  rec.sample_start = b.sample_start;
  rec.sample_end = b.sample_end;
  rec.update_start = u0;
  rec.update_end = u1;
  rec.q_loss = static_cast<double>(m.q_loss);
  rec.policy_loss = static_cast<double>(m.policy_loss);
  rec.entropy = static_cast<double>(m.entropy);
  rec.steps_seen = steps_seen;
  rec.batch_version = b.sampled_at_version;
  rec.version_after = st.learner.params().version;
  rec.checksum = nn::params_checksum(st.learner.params());
  st.log->updates.push_back(rec);
}

// Sample one batch with timing stamps. Returns nullopt if the buffer is not
// ready or a stop arrived.
std::optional<replay::Batch> sample_one(RunState& st) {
  const Micros s0 = st.clk->now();
  auto b = st.buffer->try_sample<float>(st.cfg->batch_size, st.sampler_rng,
                                        st.params.latest_version());
  if (!b) return std::nullopt;
  st.clk->charge(Component::Sample, st.clk->now() - s0);
  b->sample_start = s0;
  b->sample_end = st.clk->now();
  return b;
}

void seq_inline_update(RunState& st) {
  auto b = sample_one(st);
  if (!b) return;  // not enough data yet; skip this cycle
  do_update(st, std::move(*b));
}

void async1_learner_body(RunState& st) {
  while (!st.stop.stop_requested()) {
    if (!st.gate.acquire_update(st.stop)) break;
    if (!st.buffer->wait_for_size(static_cast<std::size_t>(st.cfg->batch_size),
                                  st.stop))
      break;
    auto b = sample_one(st);
    if (!b) continue;
    do_update(st, std::move(*b));
  }
}

void async2_sampler_body(RunState& st) {
  while (!st.stop.stop_requested()) {
    if (!st.gate.acquire_update(st.stop)) break;
    if (!st.buffer->wait_for_size(static_cast<std::size_t>(st.cfg->batch_size),
                                  st.stop))
      break;
    auto b = sample_one(st);
    if (!b) continue;
    if (!st.handoff.put(std::move(*b), st.stop)) break;
  }
}

void async2_updater_body(RunState& st) {
  while (!st.stop.stop_requested()) {
    auto b = st.handoff.take(st.stop);
    if (!b) break;
    do_update(st, std::move(*b));
  }
}

void dump_frame(const RunConfig& cfg, const sim::Observation& obs,
                std::int64_t step) {
  if (cfg.dump_frames_dir.empty() || cfg.dump_every <= 0) return;
  if (step % cfg.dump_every != 0) return;
  char name[64];
  std::snprintf(name, sizeof(name), "step%08lld.ppm",
                static_cast<long long>(step));
  sim::write_ppm(*obs.frames[2],
                 cfg.dump_frames_dir + "/" + name);
}

// One episode: reset, then `steps` action cycles on absolute deadlines, plus
// a final observation at the episode boundary that closes the last
// transition. Warmup episodes stop early once the push quota is reached.
int run_episode(RunState& st, bool warmup, int max_pushes) {
  const RunConfig& cfg = *st.cfg;
  Clock& clk = *st.clk;
  st.env->reset();
  const Micros ep_start = clk.now();
  const Micros cycle = st.cycle;
  const int steps = static_cast<int>(cfg.episode_length / cycle);
  const std::int64_t episode = warmup ? -1 : st.episode_id;

  replay::StoredObsPtr prev_stored;
  std::array<float, 5> prev_action{};
  std::uint64_t acting_version = 0;
  Micros prev_t = 0;
  Micros acting_interaction_us = 0;
  double ep_return = 0;
  int pushes = 0;

  int k = 0;
  while (k <= steps) {
    const Micros deadline = ep_start + k * cycle;
    clk.wait_until(deadline);
    const Micros t_obs = clk.now();
    const bool overrun = t_obs > deadline + cfg.overrun_tolerance;
    if (overrun) {
      ++st.log->overruns;
      // Deadlines are absolute multiples of the cycle from episode start:
      // when more than a full cycle late, fall forward to the next boundary.
      while (k < steps && ep_start + (k + 1) * cycle <= t_obs) ++k;
    }

    auto obs = st.env->assemble_observation();
    if (!warmup && cfg.obs_probe) cfg.obs_probe(k, obs);
    if (!warmup) dump_frame(cfg, obs, st.global_step);
    auto stored = replay::quantize_observation(obs);
    const double raw = st.env->reward_for(obs);
    const double scaled = harness::scale_reward(raw, cycle);

    if (k > 0 && prev_stored) {
      // Episodes end at the 4s time limit, not by failure: done stays 0 so
      // the critic keeps bootstrapping through the boundary.
      const replay::Transition tr{prev_stored, stored, prev_action,
                                  static_cast<float>(scaled), false};
      st.buffer->push(tr);
      if (cfg.transition_probe) cfg.transition_probe(tr, warmup);
      ++pushes;
      if (!warmup) {
        ++st.global_step;
        st.gate.tick_step();
        ep_return += scaled;
        harness::StepRecord rec;
        rec.step = st.global_step;
        rec.episode = episode;
        rec.k = k;
        rec.t = t_obs;
        rec.cycle_us = t_obs - prev_t;
        rec.interaction_us = acting_interaction_us;
        rec.raw_reward = raw;
        rec.scaled_reward = scaled;
        rec.param_version = acting_version;
        rec.overrun = overrun;
        st.log->steps.push_back(rec);
      }
    }

    if (k < steps) {
      const auto ps = st.params.fetch_latest();
      acting_version = ps.version;
      const auto action = select_action(st, ps, obs, warmup);
      st.env->actuate(action);
      for (int d = 0; d < sim::kJoints; ++d)
        prev_action[static_cast<std::size_t>(d)] = static_cast<float>(action[d]);
      clk.charge(Component::Interaction, clk.now() - t_obs);
      acting_interaction_us = clk.now() - t_obs;
      if (cfg.arch == Architecture::SeqSAC && !warmup) seq_inline_update(st);
      prev_stored = std::move(stored);
    }

    prev_t = t_obs;
    if (warmup && pushes >= max_pushes) break;
    ++k;
  }

  if (!warmup) {
    harness::EpisodeRecord er;
    er.episode = episode;
    er.t_start = ep_start;
    er.t_end = clk.now();
    er.steps = pushes;
    er.ret = ep_return;
    st.log->episodes.push_back(er);
    ++st.episode_id;
  }
  return pushes;
}

void interaction_body(RunState& st) {
  const RunConfig& cfg = *st.cfg;

  int warmup_left = cfg.warmup_steps;
  while (warmup_left > 0 && !st.stop.stop_requested())
    warmup_left -= run_episode(st, true, warmup_left);
  st.log->warmup_pushes = st.buffer->size();

  // Learner stages begin once the buffer is seeded.
  std::unique_ptr<Process> stage1, stage2;
  if (cfg.arch == Architecture::AsyncSAC1) {
    stage1 = std::make_unique<Process>(*st.clk, "learner",
                                       proc_priority::kSampler,
                                       [&st] { async1_learner_body(st); });
  } else if (cfg.arch == Architecture::AsyncSAC2) {
    stage1 = std::make_unique<Process>(*st.clk, "sampler",
                                       proc_priority::kSampler,
                                       [&st] { async2_sampler_body(st); });
    stage2 = std::make_unique<Process>(*st.clk, "updater",
                                       proc_priority::kUpdater,
                                       [&st] { async2_updater_body(st); });
  }

  const Micros train_start = st.clk->now();
  while (!st.stop.stop_requested() &&
         (st.clk->now() - train_start) + cfg.env.reset_duration < cfg.budget) {
    run_episode(st, false, 0);
  }

  st.stop.request_stop();
  st.buffer->poke();
  st.handoff.poke();
  st.gate.poke();
  if (stage1) stage1->join();
  if (stage2) stage2->join();
}

}  // namespace

void run(const RunConfig& cfg, Clock& clk, harness::RunLog& log) {
  const int eff_h = cfg.replay.crop_h > 0 ? cfg.replay.crop_h : cfg.env.img_h;
  const int eff_w = cfg.replay.crop_w > 0 ? cfg.replay.crop_w : cfg.env.img_w;
  if (cfg.net.img_h != eff_h || cfg.net.img_w != eff_w)
    throw std::invalid_argument("run: net input dims must match cropped image dims");
  cfg.net.validate();
  const CycleConfig cycles = cfg.cycle_config();
  if (cycles.action_cycle <= 0 ||
      cycles.action_cycle % cycles.camera_cadence != 0)
    throw std::invalid_argument("run: action cycle must be a positive multiple of the camera cadence");
  if (!cfg.dump_frames_dir.empty())
    std::filesystem::create_directories(cfg.dump_frames_dir);

  log.meta.arch = arch_name(cfg.arch);
  log.meta.clock = clk.mode() == ClockMode::Virtual ? "virtual" : "wall";
  log.meta.task = cfg.env.task == sim::Task::Reaching ? "reaching" : "tracking";
  log.meta.seed = cfg.seed;
  log.meta.budget = cfg.budget;
  log.meta.action_cycle = cfg.resolved_action_cycle();
  log.meta.margin = cfg.margin;
  log.meta.costs = cfg.costs;
  log.meta.warmup_steps = cfg.warmup_steps;
  log.meta.batch_size = cfg.batch_size;
  log.meta.img_h = cfg.env.img_h;
  log.meta.img_w = cfg.env.img_w;

  const Rng base(cfg.seed);
  sim::Env env(cfg.env, clk, base.split(0));
  replay::ReplayBuffer buffer(cfg.replay, clk);
  RunState st(cfg, clk, env, buffer, log, base);
  if (!cfg.load_params_path.empty())
    st.learner.set_params(nn::load_checkpoint(cfg.load_params_path));
  st.params.publish(st.learner.params());  // version-0 snapshot

  env.start();
  {
    Process interaction(clk, "interaction", proc_priority::kInteraction,
                        [&st] { interaction_body(st); });
    interaction.join();
  }
  log.env_elapsed = clk.now();
  env.stop();
  log.arm_ticks = env.arm_ticks();
  log.camera_ticks = env.camera_ticks();
  if (!cfg.save_params_path.empty())
    nn::save_checkpoint(cfg.save_params_path, st.learner.params());
  log.env_faults += env.faults() + buffer.faults() + st.learner.faults();
}

}  // namespace rtsac::exec
