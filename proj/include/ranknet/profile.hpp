#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string_view>

#include <nlohmann/json_fwd.hpp>

namespace ranknet {

/// Kernel classes tracked by the profiler. The first five are the LSTM kernel
/// classes; everything else (copies, gathers, optimizer, bookkeeping) is Other.
enum class OpClass : std::size_t { MatMul = 0, Mul, Add, Sigmoid, Tanh, Other };

inline constexpr std::size_t kOpClassCount = 6;
inline constexpr std::array<OpClass, kOpClassCount> kAllOpClasses = {
    OpClass::MatMul, OpClass::Mul, OpClass::Add, OpClass::Sigmoid, OpClass::Tanh, OpClass::Other};

std::string_view op_class_name(OpClass c);

struct OpStats {
  std::uint64_t walltime_ns = 0;
  std::uint64_t calls = 0;
};

/// Per-class walltime (exclusive of nested scopes) and call counts.
struct OpProfile {
  std::array<OpStats, kOpClassCount> stats{};

  OpStats& operator[](OpClass c) { return stats[static_cast<std::size_t>(c)]; }
  const OpStats& operator[](OpClass c) const { return stats[static_cast<std::size_t>(c)]; }

  std::uint64_t total_ns() const;
  /// Share of total walltime in percent; 0 when nothing was recorded.
  double percent(OpClass c) const;
  /// Combined share of MatMul, Mul, Add, Sigmoid and Tanh.
  double kernel_percent() const;
  void merge(const OpProfile& other);

  /// `{"MatMul": {"walltime_ns": u64, "calls": u64, "pct": f64}, ...}`
  nlohmann::json to_json() const;
  static OpProfile from_json(const nlohmann::json& j);
};

void set_profiling_enabled(bool enabled);
bool profiling_enabled();

/// Merges the accumulators of every thread (live and exited). Call while no
/// instrumented compute is running.
OpProfile collect_profile();
void reset_profile();

/// Scope guard that adds its elapsed monotonic time to `cls` on destruction.
/// Time spent in nested scopes is charged to the nested class only.
class ProfileScope {
 public:
  explicit ProfileScope(OpClass cls);
  ~ProfileScope();
  ProfileScope(const ProfileScope&) = delete;
  ProfileScope& operator=(const ProfileScope&) = delete;

 private:
  OpClass cls_;
  bool active_;
  std::int64_t start_ns_ = 0;
};

[[nodiscard]] inline ProfileScope profile_scope(OpClass cls) { return ProfileScope(cls); }

}  // namespace ranknet
