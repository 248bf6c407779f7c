#include "ranknet/profile.hpp"

#include <atomic>
#include <chrono>
#include <mutex>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

namespace ranknet {
namespace {

std::atomic<bool> g_enabled{false};

struct ThreadAccumulator {
  std::array<std::atomic<std::uint64_t>, kOpClassCount> ns{};
  std::array<std::atomic<std::uint64_t>, kOpClassCount> calls{};
  std::vector<std::int64_t> child_ns;

  ThreadAccumulator();
  ~ThreadAccumulator();

  OpProfile snapshot() const {
    OpProfile p;
    for (std::size_t i = 0; i < kOpClassCount; ++i) {
      p.stats[i].walltime_ns = ns[i].load(std::memory_order_relaxed);
      p.stats[i].calls = calls[i].load(std::memory_order_relaxed);
    }
    return p;
  }
  void clear() {
    for (std::size_t i = 0; i < kOpClassCount; ++i) {
      ns[i].store(0, std::memory_order_relaxed);
      calls[i].store(0, std::memory_order_relaxed);
    }
  }
};

struct Registry {
  std::mutex mu;
  std::unordered_set<ThreadAccumulator*> live;
  OpProfile retired;
};

Registry& registry() {
  static Registry* r = new Registry();  // outlives thread_local destructors
  return *r;
}

ThreadAccumulator::ThreadAccumulator() {
  child_ns.reserve(16);
  auto& r = registry();
  std::lock_guard lock(r.mu);
  r.live.insert(this);
}

ThreadAccumulator::~ThreadAccumulator() {
  auto& r = registry();
  std::lock_guard lock(r.mu);
  r.retired.merge(snapshot());
  r.live.erase(this);
}

ThreadAccumulator& local() {
  thread_local ThreadAccumulator acc;
  return acc;
}

std::int64_t now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

std::string_view op_class_name(OpClass c) {
  switch (c) {
    case OpClass::MatMul: return "MatMul";
    case OpClass::Mul: return "Mul";
    case OpClass::Add: return "Add";
    case OpClass::Sigmoid: return "Sigmoid";
    case OpClass::Tanh: return "Tanh";
    case OpClass::Other: return "Other";
  }
  return "Other";
}

std::uint64_t OpProfile::total_ns() const {
  std::uint64_t t = 0;
  for (const auto& s : stats) t += s.walltime_ns;
  return t;
}

double OpProfile::percent(OpClass c) const {
  const auto total = total_ns();
  if (total == 0) return 0.0;
  return 100.0 * static_cast<double>((*this)[c].walltime_ns) / static_cast<double>(total);
}

double OpProfile::kernel_percent() const {
  return percent(OpClass::MatMul) + percent(OpClass::Mul) + percent(OpClass::Add) +
         percent(OpClass::Sigmoid) + percent(OpClass::Tanh);
}

void OpProfile::merge(const OpProfile& other) {
  for (std::size_t i = 0; i < kOpClassCount; ++i) {
    stats[i].walltime_ns += other.stats[i].walltime_ns;
    stats[i].calls += other.stats[i].calls;
  }
}

nlohmann::json OpProfile::to_json() const {
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  for (auto c : kAllOpClasses) {
    out[std::string(op_class_name(c))] = {
        {"walltime_ns", (*this)[c].walltime_ns}, {"calls", (*this)[c].calls}, {"pct", percent(c)}};
  }
  return nlohmann::json(out);
}

OpProfile OpProfile::from_json(const nlohmann::json& j) {
  OpProfile p;
  for (auto c : kAllOpClasses) {
    const auto name = std::string(op_class_name(c));
    if (!j.contains(name)) continue;
    p[c].walltime_ns = j.at(name).at("walltime_ns").get<std::uint64_t>();
    p[c].calls = j.at(name).at("calls").get<std::uint64_t>();
  }
  return p;
}

void set_profiling_enabled(bool enabled) { g_enabled.store(enabled, std::memory_order_relaxed); }
bool profiling_enabled() { return g_enabled.load(std::memory_order_relaxed); }

OpProfile collect_profile() {
  auto& r = registry();
  std::lock_guard lock(r.mu);
  OpProfile total = r.retired;
  for (const auto* acc : r.live) total.merge(acc->snapshot());
  return total;
}

void reset_profile() {
  auto& r = registry();
  std::lock_guard lock(r.mu);
  r.retired = OpProfile{};
  for (auto* acc : r.live) acc->clear();
}

ProfileScope::ProfileScope(OpClass cls) : cls_(cls), active_(profiling_enabled()) {
  if (!active_) return;
  local().child_ns.push_back(0);
  start_ns_ = now_ns();
}

ProfileScope::~ProfileScope() {
  if (!active_) return;
  const std::int64_t elapsed = now_ns() - start_ns_;
  auto& acc = local();
  const std::int64_t self = elapsed - acc.child_ns.back();
  acc.child_ns.pop_back();
  if (!acc.child_ns.empty()) acc.child_ns.back() += elapsed;
  const auto i = static_cast<std::size_t>(cls_);
  acc.ns[i].fetch_add(static_cast<std::uint64_t>(self > 0 ? self : 0), std::memory_order_relaxed);
  acc.calls[i].fetch_add(1, std::memory_order_relaxed);
}

}  // namespace ranknet
