#include "rtsac/runlog.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace rtsac::harness {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::string RunLog::steps_csv() const {
  std::string out =
      "step,episode,k,t_us,cycle_us,interaction_us,raw_reward,scaled_reward,"
      "param_version,overrun\n";
  for (const auto& s : steps) {
    out += std::to_string(s.step) + ',' + std::to_string(s.episode) + ',' +
           std::to_string(s.k) + ',' + std::to_string(s.t) + ',' +
           std::to_string(s.cycle_us) + ',' + std::to_string(s.interaction_us) +
           ',' + fmt_double(s.raw_reward) + ',' + fmt_double(s.scaled_reward) +
           ',' + std::to_string(s.param_version) + ',' +
           (s.overrun ? "1" : "0") + '\n';
  }
  return out;
}

std::string RunLog::updates_csv() const {
  std::string out =
      "update,sample_start_us,sample_end_us,update_start_us,update_end_us,"
      "q_loss,policy_loss,entropy,steps_seen,batch_version,version_after,"
      "checksum\n";
  for (const auto& u : updates) {
    out += std::to_string(u.update) + ',' + std::to_string(u.sample_start) +
           ',' + std::to_string(u.sample_end) + ',' +
           std::to_string(u.update_start) + ',' + std::to_string(u.update_end) +
           ',' + fmt_double(u.q_loss) + ',' + fmt_double(u.policy_loss) + ',' +
           fmt_double(u.entropy) + ',' + std::to_string(u.steps_seen) + ',' +
           std::to_string(u.batch_version) + ',' +
           std::to_string(u.version_after) + ',' + std::to_string(u.checksum) +
           '\n';
  }
  return out;
}

std::string RunLog::curve_csv() const {
  std::string out = "episode,t_start_us,t_end_us,steps,return\n";
  for (const auto& e : episodes) {
    out += std::to_string(e.episode) + ',' + std::to_string(e.t_start) + ',' +
           std::to_string(e.t_end) + ',' + std::to_string(e.steps) + ',' +
           fmt_double(e.ret) + '\n';
  }
  return out;
}

double overall_performance(const RunLog& log) {
  if (log.episodes.empty())
    throw std::invalid_argument("overall_performance: empty run log");
  double acc = 0;
  for (const auto& e : log.episodes) acc += e.ret;
  return acc / static_cast<double>(log.episodes.size());
}

ComponentProfile profile_components(const RunLog& log) {
  std::vector<double> inter, sample, update;
  inter.reserve(log.steps.size());
  for (const auto& s : log.steps)
    inter.push_back(static_cast<double>(s.interaction_us) / 1000.0);
  sample.reserve(log.updates.size());
  update.reserve(log.updates.size());
  for (const auto& u : log.updates) {
    sample.push_back(static_cast<double>(u.sample_end - u.sample_start) / 1000.0);
    update.push_back(static_cast<double>(u.update_end - u.update_start) / 1000.0);
  }
  ComponentProfile p;
  p.interaction_ms = median(std::move(inter));
  p.sample_ms = median(std::move(sample));
  p.update_ms = median(std::move(update));
  return p;
}

Aggregate aggregate_runs(const std::vector<double>& per_run_values) {
  Aggregate a;
  a.n = static_cast<int>(per_run_values.size());
  if (a.n == 0) return a;
  double sum = 0;
  for (double v : per_run_values) sum += v;
  a.mean = sum / a.n;
  if (a.n > 1) {
    double ss = 0;
    for (double v : per_run_values) ss += (v - a.mean) * (v - a.mean);
    const double var = ss / (a.n - 1);
    a.standard_error = std::sqrt(var / a.n);
  }
  return a;
}

}  // namespace rtsac::harness
