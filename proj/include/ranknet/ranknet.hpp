#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ranknet/nn.hpp"
#include "ranknet/race_data.hpp"

namespace ranknet {

// ---------------------------------------------------------------------------
// Configuration

struct RankNetConfig {
  int context_length = 60;
  int prediction_length = 2;
  int lstm_layers = 2;
  int hidden = 40;
  int embedding_dim = 4;
  /// Car ids must lie in [0, num_car_ids).
  int num_car_ids = 64;
  int batch_size = 32;
  double loss_weight = 9.0;
  double learning_rate = 1e-3;
  double lr_decay = 0.5;
  int lr_patience = 10;
  double min_learning_rate = 1e-6;
  int max_epochs = 100;
  int window_stride = 1;

  bool context_features = true;
  bool shift_features = false;
  int shift_laps = 2;
  /// Race-status covariates are zeroed at train and inference time.
  bool covariate_free = false;

  std::vector<int> pit_hidden = {10, 5, 5};
  int pit_epochs = 60;
  int pit_batch_size = 64;
  double pit_learning_rate = 5e-3;

  int num_samples = 100;
  std::uint64_t seed = 1;

  void validate() const;
  /// Width of the per-step covariate block (without the car embedding).
  std::size_t feature_dim() const;
  std::size_t input_dim() const { return feature_dim() + static_cast<std::size_t>(embedding_dim); }

  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys raise ConfigError.
  static RankNetConfig from_json(const nlohmann::json& j);
  bool operator==(const RankNetConfig&) const = default;
};

enum class ForecastMode { Mlp, Oracle, CovariateFree };
const char* forecast_mode_name(ForecastMode m);
ForecastMode parse_forecast_mode(const std::string& s);

// ---------------------------------------------------------------------------
// Rank model

struct RankParams {
  EmbeddingTable embedding;
  std::vector<LstmLayerParams> layers;
  GaussianHeadParams head;

  static RankParams init(const RankNetConfig& cfg, std::uint64_t seed);
  RankParams zeros_like() const;
  ParamRefs refs();
  std::size_t count() const;
};

struct RankModel {
  RankNetConfig config;
  Scaler scaler;
  RankParams params;
};

/// Writes the covariate block for lap `lap` whose lagged observation is
/// `lag`. Lagged lap time and time-behind-leader are masked to 0 when
/// `lag_observed` is false (lags of forecast laps).
void encode_step(const RankNetConfig& cfg, const Scaler& scaler, const LapFeatures& lap,
                 const LapFeatures& lag, bool lag_observed, std::span<double> out);

/// Covariates for a window set, laid out for minibatch assembly.
struct EncodedWindows {
  std::size_t steps = 0;
  std::size_t feature_dim = 0;
  std::size_t context_length = 0;
  std::vector<double> features;      // [window][step][feature]
  std::vector<double> targets;       // [window][decoder step], scaled rank
  std::vector<double> weights;       // [window][decoder step]
  std::vector<std::size_t> car_index;

  std::size_t size() const { return car_index.size(); }
};

EncodedWindows encode_windows(const RankNetConfig& cfg, const Scaler& scaler,
                              std::span<const TrainingWindow> windows);

/// Weighted Gaussian NLL summed over the decoder steps of the selected
/// windows. When `grads` is given, adds gradients of `grad_scale` times that
/// sum into it (full BPTT through both layers and the embedding rows used).
double window_loss(const RankNetConfig& cfg, const RankParams& p, const EncodedWindows& data,
                   std::span<const std::size_t> selection, RankParams* grads,
                   double grad_scale = 1.0);

/// Mean per-window loss over every window, evaluated in chunks.
double mean_window_loss(const RankNetConfig& cfg, const RankParams& p, const EncodedWindows& data);

/// Point forecasts (mu, in raw rank units) for each decoder step with teacher
/// forcing, [window][decoder step].
std::vector<std::vector<double>> window_point_forecasts(const RankModel& m,
                                                        std::span<const TrainingWindow> windows);

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
  double learning_rate = 0.0;
  bool improved = false;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  int best_epoch = 0;
  double best_validation_loss = 0.0;
};

struct RankTrainResult {
  RankModel model;
  TrainHistory history;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Minibatch training with teacher forcing, ADAM and the plateau schedule.
/// Returns the parameters of the best validation epoch (training loss when
/// `validation` is empty).
RankTrainResult train_rank_model(std::span<const TrainingWindow> train,
                                 std::span<const TrainingWindow> validation,
                                 const RankNetConfig& cfg, const EpochCallback& on_epoch = {});

/// Fixed-count training steps on pre-encoded data, for benchmarks. Returns
/// the total walltime of the timed steps in nanoseconds.
struct StepTiming {
  std::uint64_t timed_ns = 0;
  std::size_t samples = 0;
  std::size_t steps = 0;
};
StepTiming run_training_steps(const RankNetConfig& cfg, RankParams& params,
                              const EncodedWindows& data, std::size_t batch_size,
                              std::size_t warmup_steps, std::size_t timed_steps);

// ---------------------------------------------------------------------------
// Pit model

struct PitSample {
  double caution_laps = 0.0;
  double pit_age = 0.0;
  double stint_length = 0.0;
};

/// One row per lap of every complete long-normal stint: the state after that
/// lap (ages 0 .. length-1, the first stint counted from lap 0) and the
/// stint length as the target.
std::vector<PitSample> pit_training_set(std::span<const LapRecord> records);

struct PitModel {
  MlpParams mlp;
  double input_mean[2] = {0, 0};
  double input_std[2] = {1, 1};
  double target_mean = 0.0;
  double target_std = 1.0;

  struct Prediction {
    double mu;
    double sigma;
  };
  /// Predictive stint length (laps since the last pit) in raw lap units.
  std::vector<Prediction> predict(std::span<const double> caution_laps,
                                  std::span<const double> pit_age) const;
  Prediction predict(double caution_laps, double pit_age) const;
};

/// Next-pit offset from a stint-length draw: rounded and clamped to [1, 50].
int pit_offset(double stint_length_draw);

PitModel train_pit_model(std::span<const PitSample> samples, const RankNetConfig& cfg);

struct PitEvaluation {
  double mean_prediction = 0.0;  // mean predicted stint length over probe inputs
  /// "Pit within the next two laps", classified on every lap of a stint.
  double recall_2laps = 0.0;
  double f1_2laps = 0.0;
  /// Same, classified from the mean prediction alone.
  double point_recall_2laps = 0.0;
  double point_f1_2laps = 0.0;
  std::size_t pits = 0;
  std::size_t laps = 0;
};

/// Held-out check on complete long-normal stints. mean_prediction averages
/// the predicted stint length over states with pit age <= 23. A lap is
/// flagged when the predicted probability of a pit within two laps reaches
/// `band` (0.1: the lower edge of the 80% interval is inside the window).
PitEvaluation evaluate_pit_model(const PitModel& model, std::span<const LapRecord> records,
                                 double band = 0.1);

// ---------------------------------------------------------------------------
// Forecasting

struct ForecastOptions {
  ForecastMode mode = ForecastMode::Mlp;
  int num_samples = 100;
  std::uint64_t seed = 1;
  /// Samples equal mu (degenerate head).
  bool force_zero_sigma = false;
};

struct CarForecast {
  int car_id = 0;
  /// [lap][sample] in raw rank units, laps origin+1 .. end.
  std::vector<std::vector<double>> samples;
  /// [lap][sample] integer rank of this car within each sample.
  std::vector<std::vector<int>> sample_ranks;
  std::vector<double> q10, q50, q90;
  /// Aggregate rank per lap (rank of the median across cars).
  std::vector<int> rank;
};

struct ForecastResult {
  std::string race_id;
  int origin_lap = 0;
  int end_lap = 0;
  ForecastMode mode = ForecastMode::Mlp;
  std::vector<CarForecast> cars;

  int lap(std::size_t i) const { return origin_lap + 1 + static_cast<int>(i); }
  std::size_t horizon() const { return static_cast<std::size_t>(end_lap - origin_lap); }
};

/// Probabilistic forecast of laps origin+1 .. end for every car with at least
/// `origin` laps of history. The decoder runs k laps per pass and carries its
/// state into the next pass, feeding sampled ranks back as inputs.
ForecastResult forecast(const RankModel& model, const PitModel* pit, const RaceFrame& race,
                        int origin, int end, const ForecastOptions& opts);

struct RankDerivation {
  std::vector<std::vector<int>> sample_ranks;  // [car][sample]
  std::vector<double> medians;
  std::vector<int> aggregate;
};

/// Within each sample, cars sorted by value ascending (ties: lower car index
/// first); the aggregate rank sorts the per-car medians the same way.
RankDerivation ranks_from_samples(const std::vector<std::vector<double>>& samples);

nlohmann::json forecast_to_json(const ForecastResult& r);

// ---------------------------------------------------------------------------
// Data split

struct DataSplit {
  std::vector<std::string> train, validation, test;
};

/// By race order: the last `test_races` are the test set and the last
/// `validation_races` of the remainder validate.
DataSplit split_races(std::span<const std::string> ids, int test_races, int validation_races);

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr int kCheckpointSchemaVersion = 1;

struct Checkpoint {
  RankModel rank;
  std::optional<PitModel> pit;
  TrainHistory history;
};

nlohmann::json checkpoint_to_json(const Checkpoint& c);
/// ParseError on malformed content, MigrationError on a schema mismatch.
Checkpoint checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ranknet
