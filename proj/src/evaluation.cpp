#include "ranknet/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "ranknet/errors.hpp"
#include "ranknet/quantile.hpp"

namespace ranknet {

namespace {

void require_points(std::size_t n, const char* metric) {
  if (n == 0) throw MetricError(std::string(metric) + " is undefined on an empty set");
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

int sign(double v) { return (v > 0) - (v < 0); }

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double mae(std::span<const EvalPoint> points) {
  require_points(points.size(), "MAE");
  double s = 0.0;
  for (const auto& p : points) s += std::abs(p.forecast - p.actual);
  return s / static_cast<double>(points.size());
}

double top1_accuracy(std::span<const EvalPoint> points) {
  require_points(points.size(), "Top1Acc");
  std::map<std::pair<std::string, int>, std::vector<const EvalPoint*>> groups;
  for (const auto& p : points) groups[{p.race_id, p.lap}].push_back(&p);
  std::map<std::string, std::size_t> full;
  for (const auto& [key, g] : groups) full[key.first] = std::max(full[key.first], g.size());

  std::size_t hits = 0;
  for (const auto& [key, g] : groups) {
    std::set<int> cars;
    for (const auto* p : g) {
      if (!cars.insert(p->car_id).second) {
        throw MetricError("car " + std::to_string(p->car_id) + " appears twice in race '" +
                          key.first + "', lap " + std::to_string(key.second));
      }
    }
    if (g.size() != full[key.first]) {
      throw MetricError("race '" + key.first + "', lap " + std::to_string(key.second) + " has " +
                        std::to_string(g.size()) + " of " + std::to_string(full[key.first]) +
                        " cars");
    }
    auto better = [](auto value) {
      return [value](const EvalPoint* a, const EvalPoint* b) {
        return value(a) < value(b) || (value(a) == value(b) && a->car_id < b->car_id);
      };
    };
    const auto* predicted =
        *std::min_element(g.begin(), g.end(), better([](const EvalPoint* p) { return p->forecast; }));
    const auto* actual =
        *std::min_element(g.begin(), g.end(), better([](const EvalPoint* p) { return p->actual; }));
    if (predicted->car_id == actual->car_id) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(groups.size());
}

double rho_risk(std::span<const EvalPoint> points, double rho) {
  require_points(points.size(), "rho-risk");
  if (!(rho > 0.0 && rho < 1.0)) throw DomainError("rho-risk level must lie in (0, 1)");
  double num = 0.0, den = 0.0;
  for (const auto& p : points) {
    if (p.samples.empty()) {
      throw MetricError("rho-risk needs samples (race '" + p.race_id + "', car " +
                        std::to_string(p.car_id) + ", lap " + std::to_string(p.lap) + ")");
    }
    const double q = quantile_nearest_rank(p.samples, rho);
    num += 2.0 * (q - p.actual) * ((p.actual < q ? 1.0 : 0.0) - rho);
    den += p.actual;
  }
  if (den == 0.0) throw MetricError("rho-risk normalizer (sum of actuals) is zero");
  return num / den;
}

double sign_accuracy(std::span<const StintPoint> points) {
  require_points(points.size(), "SignAcc");
  std::size_t hits = 0;
  for (const auto& p : points) {
    const bool ok = p.actual_change == 0.0 ? p.predicted_change == 0.0
                                           : sign(p.predicted_change) == sign(p.actual_change);
    if (ok) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(points.size());
}

const char* slice_name(Slice s) {
  switch (s) {
    case Slice::AllLaps: return "AllLaps";
    case Slice::NormalLaps: return "NormalLaps";
    case Slice::PitStopCovered: return "PitStopCovered";
  }
  return "?";
}

PitLaps pit_laps_by_race(std::span<const LapRecord> records) {
  PitLaps out;
  for (const auto& r : records) {
    auto& v = out[r.race_id];
    if (r.lap_status) v.push_back(r.lap);
  }
  for (auto& [id, v] : out) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  return out;
}

PitLaps pit_laps_by_race(std::span<const RaceFrame> frames) {
  PitLaps out;
  for (const auto& f : frames) {
    auto& v = out[f.race_id];
    for (const auto& c : f.cars)
      for (std::size_t i = 0; i < c.laps.size(); ++i)
        if (c.laps[i].lap_status > 0.5) v.push_back(static_cast<int>(i) + 1);
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  return out;
}

LapSlices slice_laps(std::span<const EvalPoint> points, const PitLaps& pits) {
  LapSlices s;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    s.all.push_back(i);
    bool covered = false;
    if (auto it = pits.find(p.race_id); it != pits.end()) {
      const auto& laps = it->second;
      auto lo = std::lower_bound(laps.begin(), laps.end(), p.lap - 1);
      covered = lo != laps.end() && *lo <= p.lap + 1;
    }
    (covered ? s.pit_covered : s.normal).push_back(i);
  }
  return s;
}

std::vector<EvalPoint> select(std::span<const EvalPoint> points, std::span<const std::size_t> idx) {
  std::vector<EvalPoint> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(points[i]);
  return out;
}

std::vector<CarRanks> currank_forecast(const RaceFrame& race, int origin, int horizon) {
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  std::vector<CarRanks> out;
  for (const auto& c : race.cars) {
    if (origin < 1 || static_cast<int>(c.laps.size()) < origin) continue;
    out.push_back({c.car_id, std::vector<double>(static_cast<std::size_t>(horizon),
                                                 c.laps[static_cast<std::size_t>(origin - 1)].rank)});
  }
  return out;
}

namespace {

ForecastOptions options_for(const EvalMethod& m, const RaceFrame& race, int origin) {
  ForecastOptions o;
  o.mode = *m.mode;
  o.num_samples = m.num_samples;
  o.seed = derive_seed(m.seed, {fnv1a(race.race_id), static_cast<std::uint64_t>(origin)});
  return o;
}

void require_model(const EvalMethod& m) {
  if (m.mode && m.model == nullptr) {
    throw ModeError(std::string(forecast_mode_name(*m.mode)) + " evaluation needs a trained model");
  }
}

}  // namespace

std::vector<EvalPoint> rolling_points(const RaceFrame& race, const EvalMethod& method,
                                      int first_origin, int horizon, int stride) {
  if (horizon < 1 || stride < 1) throw ConfigError("horizon and stride must be >= 1");
  require_model(method);
  std::vector<EvalPoint> out;
  for (int origin = std::max(first_origin, 1); origin + horizon <= race.num_laps; origin += stride) {
    const int lap = origin + horizon;
    auto truth = [&](int car_id) -> const CarSeries* {
      const auto* c = race.find_car(car_id);
      return c && static_cast<int>(c->laps.size()) >= lap ? c : nullptr;
    };
    if (!method.mode) {
      for (const auto& f : currank_forecast(race, origin, horizon)) {
        const auto* c = truth(f.car_id);
        if (!c) continue;
        const double r = f.ranks.back();
        out.push_back({race.race_id, f.car_id, lap, horizon,
                       c->laps[static_cast<std::size_t>(lap - 1)].rank, r, {r}});
      }
      continue;
    }
    const auto fc = forecast(*method.model, method.pit, race, origin, lap,
                             options_for(method, race, origin));
    const auto h = static_cast<std::size_t>(horizon - 1);
    for (const auto& car : fc.cars) {
      const auto* c = truth(car.car_id);
      if (!c) continue;
      EvalPoint p{race.race_id, car.car_id, lap, horizon,
                  c->laps[static_cast<std::size_t>(lap - 1)].rank,
                  static_cast<double>(car.rank[h]),
                  {}};
      p.samples.assign(car.sample_ranks[h].begin(), car.sample_ranks[h].end());
      out.push_back(std::move(p));
    }
  }
  return out;
}

std::vector<StintPoint> stint_task(const RaceFrame& race, const RankRollout& rollout,
                                   int min_origin) {
  // (origin pit lap) -> [(car, next pit lap)]
  std::map<int, std::vector<std::pair<const CarSeries*, int>>> by_origin;
  for (const auto& c : race.cars) {
    int prev = 0;
    for (std::size_t i = 0; i < c.laps.size(); ++i) {
      if (c.laps[i].lap_status < 0.5) continue;
      const int lap = static_cast<int>(i) + 1;
      if (prev >= min_origin && prev > 0) by_origin[prev].push_back({&c, lap});
      prev = lap;
    }
  }
  std::vector<StintPoint> out;
  for (const auto& [origin, stints] : by_origin) {
    int end = origin + 1;
    for (const auto& s : stints) end = std::max(end, s.second);
    const auto predicted = rollout(race, origin, end);
    for (const auto& [car, next] : stints) {
      auto it = predicted.find(car->car_id);
      const auto k = static_cast<std::size_t>(next - origin - 1);
      if (it == predicted.end() || it->second.size() <= k) {
        throw RangeError("forecast from lap " + std::to_string(origin) + " does not reach lap " +
                         std::to_string(next) + " for car " + std::to_string(car->car_id));
      }
      const double start_rank = car->laps[static_cast<std::size_t>(origin - 1)].rank;
      out.push_back({race.race_id, car->car_id, origin, next,
                     car->laps[static_cast<std::size_t>(next - 1)].rank - start_rank,
                     it->second[k] - start_rank});
    }
  }
  return out;
}

RankRollout currank_rollout() {
  return [](const RaceFrame& race, int origin, int end) {
    std::map<int, std::vector<double>> out;
    for (auto& f : currank_forecast(race, origin, end - origin)) out[f.car_id] = std::move(f.ranks);
    return out;
  };
}

RankRollout model_rollout(const EvalMethod& method) {
  require_model(method);
  if (!method.mode) return currank_rollout();
  return [method](const RaceFrame& race, int origin, int end) {
    const auto fc = forecast(*method.model, method.pit, race, origin, end,
                             options_for(method, race, origin));
    std::map<int, std::vector<double>> out;
    for (const auto& c : fc.cars) out[c.car_id] = {c.rank.begin(), c.rank.end()};
    return out;
  };
}

std::optional<double> SliceMetrics::get(const std::string& name) const {
  for (const auto& [k, v] : metrics)
    if (k == name) return v;
  return std::nullopt;
}

MetricsReport build_report(std::span<const EvalPoint> points, const PitLaps& pits,
                           std::span<const StintPoint> stints, const nlohmann::json& meta,
                           const ReportOptions& opts) {
  MetricsReport r;
  r.meta = meta;
  const auto slices = slice_laps(points, pits);
  const std::pair<Slice, const std::vector<std::size_t>*> parts[] = {
      {Slice::AllLaps, &slices.all},
      {Slice::NormalLaps, &slices.normal},
      {Slice::PitStopCovered, &slices.pit_covered}};
  for (const auto& [slice, idx] : parts) {
    const auto sub = select(points, *idx);
    SliceMetrics m;
    m.slice = slice_name(slice);
    m.points = sub.size();
    auto metric = [&](const std::string& name, auto fn) {
      std::optional<double> v;
      if (!sub.empty()) v = fn();
      m.metrics.emplace_back(name, v);
    };
    metric("top1acc", [&] { return top1_accuracy(sub); });
    metric("mae", [&] { return mae(sub); });
    if (opts.rho10) metric("rho_risk_10", [&] { return rho_risk(sub, 0.1); });
    metric("rho_risk_50", [&] { return rho_risk(sub, 0.5); });
    metric("rho_risk_90", [&] { return rho_risk(sub, 0.9); });
    r.slices.push_back(std::move(m));
  }
  if (!stints.empty()) {
    SliceMetrics m;
    m.slice = "StintChange";
    m.points = stints.size();
    double err = 0.0;
    for (const auto& s : stints) err += std::abs(s.predicted_change - s.actual_change);
    m.metrics.emplace_back("signacc", sign_accuracy(stints));
    m.metrics.emplace_back("mae", err / static_cast<double>(stints.size()));
    r.slices.push_back(std::move(m));
  }
  return r;
}

nlohmann::json report_to_json(const MetricsReport& r) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& s : r.slices) {
    nlohmann::json m = nlohmann::json::object();
    m["points"] = s.points;
    for (const auto& [name, v] : s.metrics) m[name] = v ? nlohmann::json(*v) : nlohmann::json();
    j[s.slice] = std::move(m);
  }
  j["meta"] = r.meta;
  return j;
}

std::string report_to_csv(const MetricsReport& r) {
  std::string out = "slice,metric,value\n";
  for (const auto& s : r.slices) {
    for (const auto& [name, v] : s.metrics) {
      out += s.slice + "," + name + "," + (v ? format_double(*v) : std::string("NA")) + "\n";
    }
  }
  return out;
}

void emit_report(const MetricsReport& r, const std::filesystem::path& path, ReportFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write report '" + path.string() + "'");
  if (format == ReportFormat::Json) {
    out << report_to_json(r).dump(2) << '\n';
  } else {
    out << report_to_csv(r);
  }
  if (!out) throw IoError("failed writing report '" + path.string() + "'");
}

}  // namespace ranknet
