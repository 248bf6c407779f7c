#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace ranknet {

/// One car's observed state at the end of one lap.
struct LapRecord {
  std::string race_id;
  int car_id = 0;
  int lap = 0;   // 1-based
  int rank = 0;  // 1-based
  double lap_time = 0.0;
  double time_behind_leader = 0.0;
  int track_status = 0;  // 1 = caution lap
  int lap_status = 0;    // 1 = pit lap

  bool operator==(const LapRecord&) const = default;
};

inline constexpr const char* kCsvHeader =
    "race_id,car_id,lap,rank,lap_time,time_behind_leader,track_status,lap_status";

/// Parses and validates the race-log CSV. Malformed rows raise ParseError with
/// the line number; invariant violations raise DataError naming (race, lap).
std::vector<LapRecord> parse_csv(std::istream& in);
std::vector<LapRecord> ingest_csv(const std::filesystem::path& path);
void write_csv(std::ostream& out, std::span<const LapRecord> records);
void write_csv(const std::filesystem::path& path, std::span<const LapRecord> records);

/// Checks per-(race, lap) invariants: ranks form 1..n, the leader has zero
/// time behind, lap times are positive.
void validate_records(std::span<const LapRecord> records);

/// Race ids in order of first appearance.
std::vector<std::string> race_ids(std::span<const LapRecord> records);
std::vector<LapRecord> filter_races(std::span<const LapRecord> records,
                                    std::span<const std::string> ids);

// ---------------------------------------------------------------------------
// Features

/// Per-lap model inputs for one car. Counts are kept as reals so the scaler
/// can work on them in place.
struct LapFeatures {
  double rank = 0.0;
  double lap_time = 0.0;
  double time_behind_leader = 0.0;
  double track_status = 0.0;
  double lap_status = 0.0;
  double caution_laps = 0.0;
  double pit_age = 0.0;
  double leader_pit_count = 0.0;
  double total_pit_count = 0.0;
  double shift_track_status = 0.0;
  double shift_lap_status = 0.0;
  double shift_total_pit_count = 0.0;

  bool operator==(const LapFeatures&) const = default;
};

struct CarSeries {
  int car_id = 0;
  std::vector<LapFeatures> laps;  // laps[i] is lap i+1
};

struct RaceFrame {
  std::string race_id;
  std::vector<CarSeries> cars;  // ascending car_id
  int num_laps = 0;

  const CarSeries* find_car(int car_id) const;
};

/// Number of top-ranked cars (at lap A-2) that count as leaders for
/// LeaderPitCount at lap A.
inline constexpr int kLeaderSetSize = 5;

/// Laps since the last pit lap; 0 on a pit lap. Before the first pit the
/// count starts from the race start (lap 1 -> 1).
std::vector<int> pit_age_series(std::span<const int> lap_status);
/// Caution laps since the last pit lap (a pit lap resets the count to 0).
std::vector<int> caution_laps_series(std::span<const int> track_status,
                                     std::span<const int> lap_status);

/// Groups records into per-race frames and derives every feature. `shift`
/// is the look-ahead of the shift features. Missing laps raise DataError.
std::vector<RaceFrame> derive_features(std::span<const LapRecord> records, int shift = 2);

/// Recomputes the per-car counters (caution_laps, pit_age) and the
/// cross-car counters (leader/total pit counts, shift features) of `frame`
/// from its status and rank columns.
void recompute_derived(RaceFrame& frame, int shift);

/// Encoder input preceding `start_lap`: the previous lap, or the start lap
/// itself when the series begins there.
const LapFeatures& lag_features(const CarSeries& car, int start_lap);

// ---------------------------------------------------------------------------
// Windows

struct TrainingWindow {
  std::string race_id;
  int car_id = 0;
  int start_lap = 0;  // first encoder lap
  int context_length = 0;
  int prediction_length = 0;
  LapFeatures lag0;                // lap start_lap-1, or start_lap itself at race start
  std::vector<LapFeatures> steps;  // context_length + prediction_length laps
  std::vector<double> weights;     // one per decoder step

  int decoder_lap(int j) const { return start_lap + context_length + j; }
};

/// Sliding windows per car; histories shorter than C+k are skipped, never
/// padded. Decoder steps whose rank differs from the previous lap get
/// `rank_change_weight`, others weight 1.
std::vector<TrainingWindow> build_windows(std::span<const RaceFrame> frames, int context_length,
                                          int prediction_length, int stride = 1,
                                          double rank_change_weight = 9.0);

/// Windows per car for a series of `len` laps.
std::size_t window_count(int len, int context_length, int prediction_length, int stride);

// ---------------------------------------------------------------------------
// Scaler

enum class Feature : std::size_t {
  Rank = 0,
  LapTime,
  TimeBehindLeader,
  CautionLaps,
  PitAge,
  LeaderPitCount,
  TotalPitCount,
  ShiftTotalPitCount,
};
inline constexpr std::size_t kScaledFeatureCount = 8;

const char* feature_name(Feature f);
double& feature_ref(LapFeatures& f, Feature which);
double feature_value(const LapFeatures& f, Feature which);

/// Z-score parameters per real-valued feature; binary status columns pass
/// through unchanged.
struct Scaler {
  std::array<double, kScaledFeatureCount> mean{};
  std::array<double, kScaledFeatureCount> stddev{1, 1, 1, 1, 1, 1, 1, 1};

  double apply(Feature f, double v) const;
  double invert(Feature f, double v) const;
  bool operator==(const Scaler&) const = default;

  nlohmann::json to_json() const;
  static Scaler from_json(const nlohmann::json& j);
};

/// Fits on every step of every window. Zero-variance features get stddev 1.
Scaler fit_scaler(std::span<const TrainingWindow> windows);
LapFeatures apply_scaler(const Scaler& s, const LapFeatures& raw);
LapFeatures invert_scaler(const Scaler& s, const LapFeatures& scaled);

// ---------------------------------------------------------------------------
// Synthetic races

struct SynthConfig {
  int num_races = 1;
  int num_cars = 16;
  int num_laps = 80;
  /// Races shorter than this are rejected (encoder + decoder length).
  int min_laps = 62;
  std::string race_prefix = "synth";

  double base_lap_time = 40.0;
  /// Spread of per-car base lap times across the field, seconds per lap.
  double speed_spread = 1.0;
  double lap_time_noise = 0.3;
  double pit_penalty = 25.0;
  double caution_slowdown = 1.6;

  /// Expected caution periods per race (Poisson).
  double caution_rate = 1.5;
  int caution_min_laps = 3;
  int caution_max_laps = 8;
  /// Probability that a car pits during a given caution period.
  double caution_pit_prob = 0.5;
  /// Minimum laps since the last stop before a caution stop is taken.
  int caution_pit_min_age = 10;

  /// Normal stints ~ N(stint_mean, stint_sd) clipped to [stint_min, stint_max].
  double stint_mean = 35.0;
  double stint_sd = 5.0;
  int stint_min = 24;
  int stint_max = 50;
  /// Chance that a stint ends early (mechanical), length U[short_min, stint_min-1].
  double short_stint_prob = 0.05;
  int short_stint_min = 5;

  bool auto_pits = true;
  /// Extra stops as (car index, lap), applied in every generated race.
  std::vector<std::pair<int, int>> scheduled_pits;
};

void validate(const SynthConfig& cfg);
/// Deterministic in (cfg, seed). Ranks follow cumulative elapsed time with
/// ties broken by car index; car ids are 1..num_cars.
std::vector<LapRecord> synth_generate(const SynthConfig& cfg, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Stints

enum class StintCategory { CautionPit = 0, ShortNormal = 1, LongNormal = 2 };
inline constexpr int kShortStintMax = 23;
inline constexpr int kStintCap = 50;

const char* stint_category_name(StintCategory c);

struct StintSummary {
  std::string race_id;
  int car_id = 0;
  int start_lap = 0;  // previous pit lap, 0 for the race start
  int end_lap = 0;    // pit lap closing the stint
  int length = 0;
  StintCategory category = StintCategory::LongNormal;
};

struct StintStats {
  std::vector<StintSummary> stints;  // complete stints only; final partial stints are censored
  std::array<std::size_t, 3> histogram{};  // indexed by StintCategory
};

StintStats stint_stats(std::span<const LapRecord> records);

}  // namespace ranknet
