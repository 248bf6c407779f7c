#include "ranknet/bench.hpp"

#include <algorithm>
#include <chrono>
#include <thread>

#include "ranknet/errors.hpp"

namespace ranknet {

const char* const kLargeBatchCaveat =
    "throughput only: large batches need more epochs to reach the same validation loss, "
    "so a faster step is not a faster route to a given accuracy";

double BenchReport::speedup() const {
  if (points.size() < 2 || points.back().us_per_sample <= 0.0) return 0.0;
  return points.front().us_per_sample / points.back().us_per_sample;
}

nlohmann::json BenchReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& p : points) {
    rows.push_back({{"batch_size", p.batch_size},
                    {"steps", p.steps},
                    {"samples", p.samples},
                    {"us_per_sample", p.us_per_sample},
                    {"profile", p.profile.to_json()}});
  }
  return {{"points", std::move(rows)},
          {"speedup_first_to_last", speedup()},
          {"wallclock_seconds", wallclock_seconds},
          {"hardware_cores", hardware_cores},
          {"threads", threads},
          {"windows", windows},
          {"replicated", replicated},
          {"caveat", kLargeBatchCaveat}};
}

nlohmann::json OpBreakdown::to_json() const {
  return {{"batch_size", batch_size},
          {"steps", steps},
          {"samples", samples},
          {"kernel_percent", profile.kernel_percent()},
          {"profile", profile.to_json()}};
}

EncodedWindows bench_windows(const RankNetConfig& cfg, const Scaler& scaler,
                             std::span<const TrainingWindow> windows, std::size_t min_count,
                             bool& replicated) {
  if (windows.empty()) throw DataError("benchmark needs at least one training window");
  replicated = windows.size() < min_count;
  if (!replicated) return encode_windows(cfg, scaler, windows);
  std::vector<TrainingWindow> grown;
  grown.reserve(min_count);
  while (grown.size() < min_count) {
    const std::size_t take = std::min(windows.size(), min_count - grown.size());
    grown.insert(grown.end(), windows.begin(), windows.begin() + static_cast<std::ptrdiff_t>(take));
  }
  return encode_windows(cfg, scaler, grown);
}

namespace {

struct ProfilingOff {
  bool was = profiling_enabled();
  ProfilingOff() { set_profiling_enabled(false); }
  ~ProfilingOff() { set_profiling_enabled(was); }
};

OpProfile profiled_steps(const RankNetConfig& cfg, RankParams& params, const EncodedWindows& data,
                         std::size_t batch, std::size_t steps) {
  reset_profile();
  set_profiling_enabled(true);
  run_training_steps(cfg, params, data, batch, 0, steps);
  set_profiling_enabled(false);
  auto p = collect_profile();
  reset_profile();
  return p;
}

}  // namespace

BenchReport bench_throughput(const RankNetConfig& cfg, std::span<const TrainingWindow> windows,
                             const BenchOptions& opts) {
  cfg.validate();
  if (windows.empty()) throw DataError("benchmark needs at least one training window");
  if (opts.batch_sizes.empty()) throw ConfigError("benchmark needs at least one batch size");
  if (opts.timed_steps == 0) throw ConfigError("benchmark needs at least one timed step");
  const auto start = std::chrono::steady_clock::now();
  ProfilingOff guard;

  const Scaler scaler = fit_scaler(windows);
  const std::size_t largest = *std::max_element(opts.batch_sizes.begin(), opts.batch_sizes.end());
  BenchReport report;
  const EncodedWindows data = bench_windows(cfg, scaler, windows, largest, report.replicated);
  report.windows = data.size();
  report.hardware_cores = std::thread::hardware_concurrency();

  const RankParams initial = RankParams::init(cfg, cfg.seed);
  for (const std::size_t b : opts.batch_sizes) {
    if (b == 0) throw ConfigError("batch sizes must be positive");
    RankParams params = initial;
    const auto t = run_training_steps(cfg, params, data, b, opts.warmup_steps, opts.timed_steps);
    BenchPoint p;
    p.batch_size = b;
    p.steps = t.steps;
    p.samples = t.samples;
    p.us_per_sample = static_cast<double>(t.timed_ns) / 1e3 / static_cast<double>(t.samples);
    if (opts.profile_steps > 0) p.profile = profiled_steps(cfg, params, data, b, opts.profile_steps);
    report.points.push_back(std::move(p));
  }
  report.wallclock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

OpBreakdown bench_opbreakdown(const RankNetConfig& cfg, std::span<const TrainingWindow> windows,
                              std::size_t batch_size, std::size_t samples,
                              std::size_t warmup_steps) {
  cfg.validate();
  if (batch_size == 0 || samples == 0) throw ConfigError("op breakdown needs a batch and samples");
  if (windows.empty()) throw DataError("benchmark needs at least one training window");
  ProfilingOff guard;
  const Scaler scaler = fit_scaler(windows);
  bool replicated = false;
  const EncodedWindows data = bench_windows(cfg, scaler, windows, batch_size, replicated);
  RankParams params = RankParams::init(cfg, cfg.seed);
  run_training_steps(cfg, params, data, batch_size, warmup_steps, 0);
  OpBreakdown out;
  out.batch_size = batch_size;
  out.steps = (samples + batch_size - 1) / batch_size;
  out.samples = out.steps * batch_size;
  out.profile = profiled_steps(cfg, params, data, batch_size, out.steps);
  return out;
}

}  // namespace ranknet
