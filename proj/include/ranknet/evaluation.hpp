#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ranknet/race_data.hpp"
#include "ranknet/ranknet.hpp"

namespace ranknet {

/// One scored forecast: the rank of `car_id` at `lap`, forecast `horizon`
/// laps ahead.
struct EvalPoint {
  std::string race_id;
  int car_id = 0;
  int lap = 0;
  int horizon = 0;
  double actual = 0.0;
  double forecast = 0.0;
  std::vector<double> samples;
};

// ---------------------------------------------------------------------------
// Metrics. All throw MetricError on an empty input.

/// Mean |forecast - actual|.
double mae(std::span<const EvalPoint> points);

/// Share of (race, lap) groups whose smallest forecast belongs to the actual
/// leader (ties: lower car id). A car listed twice in a group, or a group
/// with fewer cars than the largest group of its race, raises MetricError.
double top1_accuracy(std::span<const EvalPoint> points);

/// Sum of 2(q - z)(1[z < q] - rho) over sum of z, where q is the nearest-rank
/// rho-quantile of each point's samples. rho must lie in (0, 1).
double rho_risk(std::span<const EvalPoint> points, double rho);

/// Rank change of one car between consecutive pit stops.
struct StintPoint {
  std::string race_id;
  int car_id = 0;
  int start_lap = 0;  // pit lap the forecast is issued from
  int end_lap = 0;    // next pit lap
  double actual_change = 0.0;
  double predicted_change = 0.0;
};

/// Share of stints whose predicted change has the sign of the actual one. A
/// zero actual change counts only when the prediction is exactly zero.
double sign_accuracy(std::span<const StintPoint> points);

// ---------------------------------------------------------------------------
// Slices

enum class Slice { AllLaps, NormalLaps, PitStopCovered };
const char* slice_name(Slice s);

/// Pit laps of any car, per race, ascending and unique.
using PitLaps = std::map<std::string, std::vector<int>>;
PitLaps pit_laps_by_race(std::span<const LapRecord> records);
PitLaps pit_laps_by_race(std::span<const RaceFrame> frames);

struct LapSlices {
  std::vector<std::size_t> all, normal, pit_covered;  // indices into the points
};

/// A point is pit-covered when some car of its race pits within one lap of
/// the scored lap. NormalLaps is the complement.
LapSlices slice_laps(std::span<const EvalPoint> points, const PitLaps& pits);

std::vector<EvalPoint> select(std::span<const EvalPoint> points, std::span<const std::size_t> idx);

// ---------------------------------------------------------------------------
// Forecast producers

/// Every car keeps its rank at `origin` for laps origin+1 .. origin+horizon.
struct CarRanks {
  int car_id = 0;
  std::vector<double> ranks;
};
std::vector<CarRanks> currank_forecast(const RaceFrame& race, int origin, int horizon);

/// Forecast method for rolling evaluation: a model mode, or CurRank when
/// `mode` is empty.
struct EvalMethod {
  const RankModel* model = nullptr;
  const PitModel* pit = nullptr;
  std::optional<ForecastMode> mode;
  int num_samples = 100;
  std::uint64_t seed = 1;
};

/// Forecasts from every origin first_origin, first_origin+stride, ... that
/// leaves `horizon` laps of truth, scoring lap origin+horizon. Model
/// forecasts contribute the aggregate rank as point forecast and the
/// per-sample ranks as samples.
std::vector<EvalPoint> rolling_points(const RaceFrame& race, const EvalMethod& method,
                                      int first_origin, int horizon, int stride = 1);

/// Predicted ranks for laps origin+1 .. end, per car id.
using RankRollout =
    std::function<std::map<int, std::vector<double>>(const RaceFrame&, int origin, int end)>;

/// Rank change between consecutive pit stops of every car, for stints that
/// start at or after `min_origin`. Throws RangeError when the rollout does
/// not reach a stint's end for that car.
std::vector<StintPoint> stint_task(const RaceFrame& race, const RankRollout& rollout,
                                   int min_origin);

RankRollout currank_rollout();
RankRollout model_rollout(const EvalMethod& method);

// ---------------------------------------------------------------------------
// Reports

struct SliceMetrics {
  std::string slice;
  std::size_t points = 0;
  /// metric name -> value; empty optional when undefined on the slice.
  std::vector<std::pair<std::string, std::optional<double>>> metrics;

  std::optional<double> get(const std::string& name) const;
};

struct MetricsReport {
  std::vector<SliceMetrics> slices;
  nlohmann::json meta = nlohmann::json::object();
};

struct ReportOptions {
  bool rho10 = false;
};

/// Top1Acc, MAE, 50-risk and 90-risk per lap slice; SignAcc and change MAE
/// for the stint task when `stints` is non-empty.
MetricsReport build_report(std::span<const EvalPoint> points, const PitLaps& pits,
                           std::span<const StintPoint> stints, const nlohmann::json& meta,
                           const ReportOptions& opts = {});

enum class ReportFormat { Json, Csv };

nlohmann::json report_to_json(const MetricsReport& r);
std::string report_to_csv(const MetricsReport& r);
/// Writes the report; IoError when the path cannot be written.
void emit_report(const MetricsReport& r, const std::filesystem::path& path, ReportFormat format);

}  // namespace ranknet
