#include "ranknet/race_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ranknet/errors.hpp"
#include "ranknet/random.hpp"

namespace ranknet {
namespace {

std::string race_lap(const std::string& race, int lap) {
  return "race '" + race + "', lap " + std::to_string(lap);
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? line.npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view s, const char* field, std::size_t line) {
  s = trim(s);
  T v{};
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc() || ptr != end) {
    throw ParseError(std::string("bad ") + field + " value '" + std::string(s) + "'", line);
  }
  return v;
}

int parse_flag(std::string_view s, const char* field, std::size_t line) {
  const int v = parse_number<int>(s, field, line);
  if (v != 0 && v != 1) throw ParseError(std::string(field) + " must be 0 or 1", line);
  return v;
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

// --- CSV ---------------------------------------------------------------------

std::vector<LapRecord> parse_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError("missing header", 1);
  ++line_no;
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);
  if (trim(line) != kCsvHeader) throw ParseError("unexpected header '" + line + "'", line_no);

  std::vector<LapRecord> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != 8) {
      throw ParseError("expected 8 fields, found " + std::to_string(f.size()), line_no);
    }
    LapRecord r;
    r.race_id = std::string(trim(f[0]));
    if (r.race_id.empty()) throw ParseError("empty race_id", line_no);
    r.car_id = parse_number<int>(f[1], "car_id", line_no);
    r.lap = parse_number<int>(f[2], "lap", line_no);
    r.rank = parse_number<int>(f[3], "rank", line_no);
    r.lap_time = parse_number<double>(f[4], "lap_time", line_no);
    r.time_behind_leader = parse_number<double>(f[5], "time_behind_leader", line_no);
    r.track_status = parse_flag(f[6], "track_status", line_no);
    r.lap_status = parse_flag(f[7], "lap_status", line_no);
    if (r.car_id < 0) throw ParseError("car_id must be non-negative", line_no);
    if (r.lap < 1) throw ParseError("lap must be >= 1", line_no);
    if (r.rank < 1) throw ParseError("rank must be >= 1", line_no);
    if (!std::isfinite(r.lap_time) || !std::isfinite(r.time_behind_leader)) {
      throw ParseError("non-finite time value", line_no);
    }
    out.push_back(std::move(r));
  }
  validate_records(out);
  return out;
}

std::vector<LapRecord> ingest_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_csv(in);
}

void write_csv(std::ostream& out, std::span<const LapRecord> records) {
  out << kCsvHeader << '\n';
  for (const auto& r : records) {
    out << r.race_id << ',' << r.car_id << ',' << r.lap << ',' << r.rank << ','
        << format_double(r.lap_time) << ',' << format_double(r.time_behind_leader) << ','
        << r.track_status << ',' << r.lap_status << '\n';
  }
}

void write_csv(const std::filesystem::path& path, std::span<const LapRecord> records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_csv(out, records);
  if (!out) throw IoError("write failed for " + path.string());
}

void validate_records(std::span<const LapRecord> records) {
  std::map<std::pair<std::string, int>, std::vector<const LapRecord*>> by_lap;
  std::map<std::tuple<std::string, int, int>, bool> seen;
  for (const auto& r : records) {
    if (!(r.lap_time > 0.0)) {
      throw DataError("non-positive lap_time for car " + std::to_string(r.car_id) + " at " +
                      race_lap(r.race_id, r.lap));
    }
    if (!seen.emplace(std::make_tuple(r.race_id, r.car_id, r.lap), true).second) {
      throw DataError("duplicate record for car " + std::to_string(r.car_id) + " at " +
                      race_lap(r.race_id, r.lap));
    }
    by_lap[{r.race_id, r.lap}].push_back(&r);
  }
  for (auto& [key, rows] : by_lap) {
    std::vector<int> ranks;
    ranks.reserve(rows.size());
    for (const auto* r : rows) ranks.push_back(r->rank);
    std::sort(ranks.begin(), ranks.end());
    for (std::size_t i = 0; i < ranks.size(); ++i) {
      if (ranks[i] != static_cast<int>(i) + 1) {
        throw DataError("ranks are not a permutation of 1.." + std::to_string(ranks.size()) +
                        " at " + race_lap(key.first, key.second));
      }
    }
    for (const auto* r : rows) {
      if (r->rank == 1 && r->time_behind_leader != 0.0) {
        throw DataError("leader has non-zero time_behind_leader at " +
                        race_lap(key.first, key.second));
      }
    }
  }
}

std::vector<std::string> race_ids(std::span<const LapRecord> records) {
  std::vector<std::string> ids;
  for (const auto& r : records) {
    if (ids.empty() || ids.back() != r.race_id) {
      if (std::find(ids.begin(), ids.end(), r.race_id) == ids.end()) ids.push_back(r.race_id);
    }
  }
  return ids;
}

std::vector<LapRecord> filter_races(std::span<const LapRecord> records,
                                    std::span<const std::string> ids) {
  std::vector<LapRecord> out;
  for (const auto& r : records) {
    if (std::find(ids.begin(), ids.end(), r.race_id) != ids.end()) out.push_back(r);
  }
  return out;
}

// --- Features ----------------------------------------------------------------

const CarSeries* RaceFrame::find_car(int car_id) const {
  for (const auto& c : cars) {
    if (c.car_id == car_id) return &c;
  }
  return nullptr;
}

std::vector<int> pit_age_series(std::span<const int> lap_status) {
  std::vector<int> out(lap_status.size());
  int age = 0;
  for (std::size_t i = 0; i < lap_status.size(); ++i) {
    age = lap_status[i] ? 0 : age + 1;
    out[i] = age;
  }
  return out;
}

std::vector<int> caution_laps_series(std::span<const int> track_status,
                                     std::span<const int> lap_status) {
  if (track_status.size() != lap_status.size()) {
    throw ShapeError("caution_laps_series: status lengths differ");
  }
  std::vector<int> out(track_status.size());
  int count = 0;
  for (std::size_t i = 0; i < track_status.size(); ++i) {
    count = lap_status[i] ? 0 : count + track_status[i];
    out[i] = count;
  }
  return out;
}

void recompute_derived(RaceFrame& frame, int shift) {
  if (shift < 0) throw ConfigError("shift must be non-negative");
  const int n = frame.num_laps;

  std::vector<int> track, pits;
  for (auto& car : frame.cars) {
    track.resize(car.laps.size());
    pits.resize(car.laps.size());
    for (std::size_t i = 0; i < car.laps.size(); ++i) {
      track[i] = car.laps[i].track_status != 0.0;
      pits[i] = car.laps[i].lap_status != 0.0;
    }
    const auto age = pit_age_series(pits);
    const auto caution = caution_laps_series(track, pits);
    for (std::size_t i = 0; i < car.laps.size(); ++i) {
      car.laps[i].pit_age = age[i];
      car.laps[i].caution_laps = caution[i];
    }
  }

  std::vector<double> total(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<double> leaders(static_cast<std::size_t>(n) + 1, 0.0);
  for (int lap = 1; lap <= n; ++lap) {
    const auto idx = static_cast<std::size_t>(lap - 1);
    const auto ref = static_cast<std::size_t>(std::max(lap - 2, 1) - 1);
    for (const auto& car : frame.cars) {
      if (idx >= car.laps.size() || car.laps[idx].lap_status == 0.0) continue;
      total[lap] += 1.0;
      if (ref < car.laps.size() && car.laps[ref].rank <= kLeaderSetSize) leaders[lap] += 1.0;
    }
  }

  for (auto& car : frame.cars) {
    const int len = static_cast<int>(car.laps.size());
    for (int lap = 1; lap <= len; ++lap) {
      auto& f = car.laps[static_cast<std::size_t>(lap - 1)];
      f.total_pit_count = total[lap];
      f.leader_pit_count = leaders[lap];
      const int ahead = lap + shift;
      if (ahead <= len) {
        const auto& g = car.laps[static_cast<std::size_t>(ahead - 1)];
        f.shift_track_status = g.track_status;
        f.shift_lap_status = g.lap_status;
        f.shift_total_pit_count = total[ahead];
      } else {
        f.shift_track_status = f.shift_lap_status = f.shift_total_pit_count = 0.0;
      }
    }
  }
}

std::vector<RaceFrame> derive_features(std::span<const LapRecord> records, int shift) {
  std::vector<RaceFrame> frames;
  for (const auto& id : race_ids(records)) {
    std::map<int, std::vector<const LapRecord*>> per_car;
    for (const auto& r : records) {
      if (r.race_id == id) per_car[r.car_id].push_back(&r);
    }
    RaceFrame frame;
    frame.race_id = id;
    for (auto& [car_id, rows] : per_car) {
      std::sort(rows.begin(), rows.end(),
                [](const LapRecord* a, const LapRecord* b) { return a->lap < b->lap; });
      CarSeries series;
      series.car_id = car_id;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = *rows[i];
        if (r.lap != static_cast<int>(i) + 1) {
          throw DataError("missing lap " + std::to_string(i + 1) + " for car " +
                          std::to_string(car_id) + " in " +
                          race_lap(id, static_cast<int>(i) + 1));
        }
        LapFeatures f;
        f.rank = r.rank;
        f.lap_time = r.lap_time;
        f.time_behind_leader = r.time_behind_leader;
        f.track_status = r.track_status;
        f.lap_status = r.lap_status;
        series.laps.push_back(f);
      }
      frame.num_laps = std::max(frame.num_laps, static_cast<int>(series.laps.size()));
      frame.cars.push_back(std::move(series));
    }
    recompute_derived(frame, shift);
    frames.push_back(std::move(frame));
  }
  return frames;
}

const LapFeatures& lag_features(const CarSeries& car, int start_lap) {
  if (start_lap < 1 || start_lap > static_cast<int>(car.laps.size())) {
    throw RangeError("lag_features: start lap outside the series");
  }
  return car.laps[static_cast<std::size_t>(std::max(start_lap - 2, 0))];
}

// --- Windows -----------------------------------------------------------------

std::size_t window_count(int len, int context_length, int prediction_length, int stride) {
  if (stride < 1) throw ConfigError("stride must be >= 1");
  const int span = len - context_length - prediction_length;
  return span < 0 ? 0 : static_cast<std::size_t>(span / stride + 1);
}

std::vector<TrainingWindow> build_windows(std::span<const RaceFrame> frames, int context_length,
                                          int prediction_length, int stride,
                                          double rank_change_weight) {
  if (context_length < 1 || prediction_length < 1) {
    throw ConfigError("context and prediction lengths must be >= 1");
  }
  const int total = context_length + prediction_length;
  std::vector<TrainingWindow> out;
  for (const auto& frame : frames) {
    for (const auto& car : frame.cars) {
      const int len = static_cast<int>(car.laps.size());
      const auto count = window_count(len, context_length, prediction_length, stride);
      for (std::size_t w = 0; w < count; ++w) {
        const int start = 1 + static_cast<int>(w) * stride;
        TrainingWindow win;
        win.race_id = frame.race_id;
        win.car_id = car.car_id;
        win.start_lap = start;
        win.context_length = context_length;
        win.prediction_length = prediction_length;
        win.lag0 = lag_features(car, start);
        const auto first = car.laps.begin() + (start - 1);
        win.steps.assign(first, first + total);
        for (int j = 0; j < prediction_length; ++j) {
          const auto idx = static_cast<std::size_t>(context_length + j);
          win.weights.push_back(win.steps[idx].rank != win.steps[idx - 1].rank ? rank_change_weight
                                                                               : 1.0);
        }
        out.push_back(std::move(win));
      }
    }
  }
  return out;
}

// --- Scaler ------------------------------------------------------------------

const char* feature_name(Feature f) {
  switch (f) {
    case Feature::Rank: return "rank";
    case Feature::LapTime: return "lap_time";
    case Feature::TimeBehindLeader: return "time_behind_leader";
    case Feature::CautionLaps: return "caution_laps";
    case Feature::PitAge: return "pit_age";
    case Feature::LeaderPitCount: return "leader_pit_count";
    case Feature::TotalPitCount: return "total_pit_count";
    case Feature::ShiftTotalPitCount: return "shift_total_pit_count";
  }
  return "?";
}

double& feature_ref(LapFeatures& f, Feature which) {
  switch (which) {
    case Feature::Rank: return f.rank;
    case Feature::LapTime: return f.lap_time;
    case Feature::TimeBehindLeader: return f.time_behind_leader;
    case Feature::CautionLaps: return f.caution_laps;
    case Feature::PitAge: return f.pit_age;
    case Feature::LeaderPitCount: return f.leader_pit_count;
    case Feature::TotalPitCount: return f.total_pit_count;
    case Feature::ShiftTotalPitCount: return f.shift_total_pit_count;
  }
  throw RangeError("unknown feature");
}

double feature_value(const LapFeatures& f, Feature which) {
  return feature_ref(const_cast<LapFeatures&>(f), which);
}

double Scaler::apply(Feature f, double v) const {
  const auto i = static_cast<std::size_t>(f);
  return (v - mean[i]) / stddev[i];
}

double Scaler::invert(Feature f, double v) const {
  const auto i = static_cast<std::size_t>(f);
  return v * stddev[i] + mean[i];
}

nlohmann::json Scaler::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t i = 0; i < kScaledFeatureCount; ++i) {
    j[feature_name(static_cast<Feature>(i))] = {{"mean", mean[i]}, {"std", stddev[i]}};
  }
  return j;
}

Scaler Scaler::from_json(const nlohmann::json& j) {
  Scaler s;
  for (std::size_t i = 0; i < kScaledFeatureCount; ++i) {
    const char* name = feature_name(static_cast<Feature>(i));
    if (!j.contains(name)) throw ParseError(std::string("scaler missing feature ") + name, 0);
    s.mean[i] = j.at(name).at("mean").get<double>();
    s.stddev[i] = j.at(name).at("std").get<double>();
    if (!(s.stddev[i] > 0.0)) throw ParseError(std::string("scaler std <= 0 for ") + name, 0);
  }
  return s;
}

Scaler fit_scaler(std::span<const TrainingWindow> windows) {
  if (windows.empty()) throw ConfigError("fit_scaler: no training windows");
  std::array<double, kScaledFeatureCount> mean{}, m2{};
  double n = 0.0;
  for (const auto& w : windows) {
    for (const auto& step : w.steps) {
      n += 1.0;
      for (std::size_t i = 0; i < kScaledFeatureCount; ++i) {
        const double x = feature_value(step, static_cast<Feature>(i));
        const double delta = x - mean[i];
        mean[i] += delta / n;
        m2[i] += delta * (x - mean[i]);
      }
    }
  }
  Scaler s;
  for (std::size_t i = 0; i < kScaledFeatureCount; ++i) {
    s.mean[i] = mean[i];
    const double sd = std::sqrt(m2[i] / n);
    s.stddev[i] = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

LapFeatures apply_scaler(const Scaler& s, const LapFeatures& raw) {
  LapFeatures out = raw;
  for (std::size_t i = 0; i < kScaledFeatureCount; ++i) {
    auto& v = feature_ref(out, static_cast<Feature>(i));
    v = s.apply(static_cast<Feature>(i), v);
  }
  return out;
}

LapFeatures invert_scaler(const Scaler& s, const LapFeatures& scaled) {
  LapFeatures out = scaled;
  for (std::size_t i = 0; i < kScaledFeatureCount; ++i) {
    auto& v = feature_ref(out, static_cast<Feature>(i));
    v = s.invert(static_cast<Feature>(i), v);
  }
  return out;
}

// --- Synthetic races -----------------------------------------------------------

void validate(const SynthConfig& c) {
  auto fail = [](const std::string& m) { throw ConfigError("synth config: " + m); };
  if (c.num_races < 1) fail("num_races must be >= 1");
  if (c.num_cars < 2) fail("num_cars must be >= 2");
  if (c.num_laps < c.min_laps) {
    fail("num_laps " + std::to_string(c.num_laps) + " is below the minimum " +
         std::to_string(c.min_laps));
  }
  if (!(c.base_lap_time > 0.0)) fail("base_lap_time must be positive");
  if (c.speed_spread < 0.0 || c.lap_time_noise < 0.0 || c.pit_penalty < 0.0) {
    fail("speed_spread, lap_time_noise and pit_penalty must be non-negative");
  }
  if (!(c.caution_slowdown >= 1.0)) fail("caution_slowdown must be >= 1");
  if (c.caution_rate < 0.0) fail("caution_rate must be non-negative");
  if (c.caution_min_laps < 1 || c.caution_max_laps < c.caution_min_laps) {
    fail("caution lap range is empty");
  }
  if (c.caution_pit_prob < 0.0 || c.caution_pit_prob > 1.0) fail("caution_pit_prob not in [0,1]");
  if (c.short_stint_prob < 0.0 || c.short_stint_prob > 1.0) fail("short_stint_prob not in [0,1]");
  if (c.stint_min < 1 || c.stint_max < c.stint_min || c.stint_max > kStintCap) {
    fail("stint range must satisfy 1 <= stint_min <= stint_max <= 50");
  }
  if (c.short_stint_min < 1 || c.short_stint_min >= c.stint_min) {
    fail("short_stint_min must lie in [1, stint_min)");
  }
  if (c.stint_sd < 0.0) fail("stint_sd must be non-negative");
  for (const auto& [car, lap] : c.scheduled_pits) {
    if (car < 0 || car >= c.num_cars || lap < 1 || lap > c.num_laps) {
      fail("scheduled pit (" + std::to_string(car) + ", " + std::to_string(lap) +
           ") out of range");
    }
  }
}

namespace {

int uniform_int(Rng& rng, int lo, int hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo + 1);
  return lo + static_cast<int>(rng() % span);
}

int poisson(Rng& rng, double rate) {
  const double limit = std::exp(-rate);
  int k = 0;
  double p = uniform01(rng);
  while (p > limit) {
    ++k;
    p *= uniform01(rng);
  }
  return k;
}

int draw_stint(const SynthConfig& c, Rng& rng) {
  if (uniform01(rng) < c.short_stint_prob) return uniform_int(rng, c.short_stint_min, c.stint_min - 1);
  const double x = c.stint_mean + c.stint_sd * standard_normal(rng);
  return std::clamp(static_cast<int>(std::lround(x)), c.stint_min, c.stint_max);
}

}  // namespace

std::vector<LapRecord> synth_generate(const SynthConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  const int n = cfg.num_cars;
  const int laps = cfg.num_laps;
  std::vector<LapRecord> out;
  out.reserve(static_cast<std::size_t>(cfg.num_races) * n * laps);

  for (int race = 0; race < cfg.num_races; ++race) {
    Rng rng = make_rng(seed, Stream::Synth, {static_cast<std::uint64_t>(race)});
    const std::string race_id = cfg.race_prefix + "-" + std::to_string(race + 1);

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (int i = n - 1; i > 0; --i) std::swap(order[i], order[uniform_int(rng, 0, i)]);
    std::vector<double> base(n);
    for (int i = 0; i < n; ++i) {
      base[i] = cfg.base_lap_time + cfg.speed_spread * order[i] / static_cast<double>(n - 1);
    }

    std::vector<int> caution(laps + 1, 0);
    std::vector<std::pair<int, int>> events;
    const int num_events = poisson(rng, cfg.caution_rate);
    for (int e = 0; e < num_events; ++e) {
      const int start = uniform_int(rng, 2, laps);
      const int len = uniform_int(rng, cfg.caution_min_laps, cfg.caution_max_laps);
      const int end = std::min(laps, start + len - 1);
      for (int l = start; l <= end; ++l) caution[l] = 1;
      events.emplace_back(start, end);
    }
    // lap on which each car would take a stop during each caution, or 0
    std::vector<std::vector<int>> caution_stop(n, std::vector<int>(events.size(), 0));
    for (int i = 0; i < n; ++i) {
      for (std::size_t e = 0; e < events.size(); ++e) {
        if (uniform01(rng) < cfg.caution_pit_prob) {
          caution_stop[i][e] = uniform_int(rng, events[e].first, events[e].second);
        }
      }
    }
    std::vector<int> target(n);
    for (int i = 0; i < n; ++i) target[i] = draw_stint(cfg, rng);

    std::vector<std::vector<int>> scheduled(n);
    for (const auto& [car, lap] : cfg.scheduled_pits) scheduled[car].push_back(lap);

    std::vector<double> elapsed(n, 0.0);
    std::vector<int> last_pit(n, 0);
    std::vector<double> lap_time(n);
    std::vector<int> pitted(n);
    std::vector<int> idx(n);
    for (int lap = 1; lap <= laps; ++lap) {
      for (int i = 0; i < n; ++i) {
        const int age = lap - last_pit[i];
        bool pit = std::find(scheduled[i].begin(), scheduled[i].end(), lap) != scheduled[i].end();
        if (cfg.auto_pits) {
          if (age >= target[i]) pit = true;
          if (caution[lap] && age >= cfg.caution_pit_min_age &&
              std::find(caution_stop[i].begin(), caution_stop[i].end(), lap) !=
                  caution_stop[i].end()) {
            pit = true;
          }
        }
        double t = base[i] + cfg.lap_time_noise * standard_normal(rng);
        t = std::max(t, 0.5 * cfg.base_lap_time);
        if (caution[lap]) t *= cfg.caution_slowdown;
        if (pit) {
          t += cfg.pit_penalty;
          last_pit[i] = lap;
          if (cfg.auto_pits) target[i] = draw_stint(cfg, rng);
        }
        lap_time[i] = t;
        pitted[i] = pit;
        elapsed[i] += t;
      }
      std::iota(idx.begin(), idx.end(), 0);
      std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        return elapsed[a] != elapsed[b] ? elapsed[a] < elapsed[b] : a < b;
      });
      const double lead = elapsed[idx[0]];
      std::vector<int> rank(n);
      for (int r = 0; r < n; ++r) rank[idx[r]] = r + 1;
      for (int i = 0; i < n; ++i) {
        out.push_back({race_id, i + 1, lap, rank[i], lap_time[i], elapsed[i] - lead, caution[lap],
                       pitted[i]});
      }
    }
  }
  return out;
}

// --- Stints --------------------------------------------------------------------

const char* stint_category_name(StintCategory c) {
  switch (c) {
    case StintCategory::CautionPit: return "caution_pit";
    case StintCategory::ShortNormal: return "short_normal";
    case StintCategory::LongNormal: return "long_normal";
  }
  return "?";
}

StintStats stint_stats(std::span<const LapRecord> records) {
  std::map<std::pair<std::string, int>, std::vector<const LapRecord*>> per_car;
  std::vector<std::pair<std::string, int>> order;
  for (const auto& r : records) {
    auto key = std::make_pair(r.race_id, r.car_id);
    auto [it, inserted] = per_car.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.push_back(&r);
  }
  StintStats stats;
  for (const auto& key : order) {
    auto rows = per_car[key];
    std::sort(rows.begin(), rows.end(),
              [](const LapRecord* a, const LapRecord* b) { return a->lap < b->lap; });
    int last_pit = 0;
    for (const auto* r : rows) {
      if (!r->lap_status) continue;
      StintSummary s;
      s.race_id = key.first;
      s.car_id = key.second;
      s.start_lap = last_pit;
      s.end_lap = r->lap;
      s.length = r->lap - last_pit;
      if (r->track_status) {
        s.category = StintCategory::CautionPit;
      } else {
        s.category = s.length <= kShortStintMax ? StintCategory::ShortNormal
                                                : StintCategory::LongNormal;
      }
      ++stats.histogram[static_cast<std::size_t>(s.category)];
      stats.stints.push_back(std::move(s));
      last_pit = r->lap;
    }
  }
  return stats;
}

}  // namespace ranknet
