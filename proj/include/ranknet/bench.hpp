#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ranknet/profile.hpp"
#include "ranknet/ranknet.hpp"

namespace ranknet {

/// Batch sizes of the throughput sweep.
inline const std::vector<std::size_t> kBenchBatchSizes = {32, 64, 128, 256, 640, 1600, 3200};

struct BenchOptions {
  std::vector<std::size_t> batch_sizes = kBenchBatchSizes;
  std::size_t warmup_steps = 3;
  std::size_t timed_steps = 10;
  /// Instrumented steps per batch size for the op breakdown, run after the
  /// timed steps so instrumentation never touches the timing.
  std::size_t profile_steps = 2;
};

struct BenchPoint {
  std::size_t batch_size = 0;
  std::size_t steps = 0;
  std::size_t samples = 0;
  double us_per_sample = 0.0;
  OpProfile profile;
};

struct BenchReport {
  std::vector<BenchPoint> points;
  double wallclock_seconds = 0.0;
  unsigned hardware_cores = 0;
  unsigned threads = 1;
  std::size_t windows = 0;
  bool replicated = false;

  /// us/sample at the first batch size over that at the last.
  double speedup() const;
  nlohmann::json to_json() const;
};

extern const char* const kLargeBatchCaveat;

/// Encodes `windows` for benchmarking, repeating them until at least
/// `min_count` are available. Sets `replicated` when repetition was needed.
EncodedWindows bench_windows(const RankNetConfig& cfg, const Scaler& scaler,
                             std::span<const TrainingWindow> windows, std::size_t min_count,
                             bool& replicated);

/// Training-speed sweep over the batch sizes, from the same initial
/// parameters for every size. Throws DataError when `windows` is empty.
BenchReport bench_throughput(const RankNetConfig& cfg, std::span<const TrainingWindow> windows,
                             const BenchOptions& opts);

struct OpBreakdown {
  std::size_t batch_size = 0;
  std::size_t steps = 0;
  std::size_t samples = 0;
  OpProfile profile;

  nlohmann::json to_json() const;
};

/// Instrumented training over `samples` windows (rounded up to whole
/// batches) after `warmup_steps` uninstrumented steps.
OpBreakdown bench_opbreakdown(const RankNetConfig& cfg, std::span<const TrainingWindow> windows,
                              std::size_t batch_size, std::size_t samples,
                              std::size_t warmup_steps = 3);

}  // namespace ranknet
