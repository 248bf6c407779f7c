#include <algorithm>
#include <chrono>
#include <limits>
#include <cmath>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "ranknet/errors.hpp"
#include "ranknet/profile.hpp"
#include "ranknet/ranknet.hpp"

namespace ranknet {

// --- Config ------------------------------------------------------------------

void RankNetConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (prediction_length < 1) fail("prediction_length must be >= 1");
  if (context_length < prediction_length) fail("context_length must be >= prediction_length");
  if (lstm_layers < 1) fail("lstm_layers must be >= 1");
  if (hidden < 1) fail("hidden must be >= 1");
  if (embedding_dim < 0) fail("embedding_dim must be >= 0");
  if (num_car_ids < 1) fail("num_car_ids must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(loss_weight >= 1.0)) fail("loss_weight must be >= 1");
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
  if (!(lr_decay > 0.0 && lr_decay < 1.0)) fail("lr_decay must lie in (0, 1)");
  if (lr_patience < 1) fail("lr_patience must be >= 1");
  if (!(min_learning_rate > 0.0)) fail("min_learning_rate must be positive");
  if (max_epochs < 1) fail("max_epochs must be >= 1");
  if (window_stride < 1) fail("window_stride must be >= 1");
  if (shift_laps < 1) fail("shift_laps must be >= 1");
  if (pit_hidden.empty()) fail("pit_hidden needs at least one layer");
  for (int h : pit_hidden)
    if (h < 1) fail("pit_hidden sizes must be >= 1");
  if (pit_epochs < 1 || pit_batch_size < 1) fail("pit_epochs and pit_batch_size must be >= 1");
  if (!(pit_learning_rate > 0.0)) fail("pit_learning_rate must be positive");
  if (num_samples < 1) fail("num_samples must be >= 1");
}

std::size_t RankNetConfig::feature_dim() const {
  return 7 + (context_features ? 2 : 0) + (shift_features ? 3 : 0);
}

nlohmann::json RankNetConfig::to_json() const {
  nlohmann::ordered_json j;
  j["context_length"] = context_length;
  j["prediction_length"] = prediction_length;
  j["lstm_layers"] = lstm_layers;
  j["hidden"] = hidden;
  j["embedding_dim"] = embedding_dim;
  j["num_car_ids"] = num_car_ids;
  j["batch_size"] = batch_size;
  j["loss_weight"] = loss_weight;
  j["learning_rate"] = learning_rate;
  j["lr_decay"] = lr_decay;
  j["lr_patience"] = lr_patience;
  j["min_learning_rate"] = min_learning_rate;
  j["max_epochs"] = max_epochs;
  j["window_stride"] = window_stride;
  j["context_features"] = context_features;
  j["shift_features"] = shift_features;
  j["shift_laps"] = shift_laps;
  j["covariate_free"] = covariate_free;
  j["pit_hidden"] = pit_hidden;
  j["pit_epochs"] = pit_epochs;
  j["pit_batch_size"] = pit_batch_size;
  j["pit_learning_rate"] = pit_learning_rate;
  j["num_samples"] = num_samples;
  j["seed"] = seed;
  return nlohmann::json::parse(j.dump());
}

RankNetConfig RankNetConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RankNetConfig c;
  const nlohmann::json defaults = c.to_json();
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(std::string("config key '") + key + "' has the wrong type");
    }
  };
  get("context_length", c.context_length);
  get("prediction_length", c.prediction_length);
  get("lstm_layers", c.lstm_layers);
  get("hidden", c.hidden);
  get("embedding_dim", c.embedding_dim);
  get("num_car_ids", c.num_car_ids);
  get("batch_size", c.batch_size);
  get("loss_weight", c.loss_weight);
  get("learning_rate", c.learning_rate);
  get("lr_decay", c.lr_decay);
  get("lr_patience", c.lr_patience);
  get("min_learning_rate", c.min_learning_rate);
  get("max_epochs", c.max_epochs);
  get("window_stride", c.window_stride);
  get("context_features", c.context_features);
  get("shift_features", c.shift_features);
  get("shift_laps", c.shift_laps);
  get("covariate_free", c.covariate_free);
  get("pit_hidden", c.pit_hidden);
  get("pit_epochs", c.pit_epochs);
  get("pit_batch_size", c.pit_batch_size);
  get("pit_learning_rate", c.pit_learning_rate);
  get("num_samples", c.num_samples);
  get("seed", c.seed);
  return c;
}

const char* forecast_mode_name(ForecastMode m) {
  switch (m) {
    case ForecastMode::Mlp: return "mlp";
    case ForecastMode::Oracle: return "oracle";
    case ForecastMode::CovariateFree: return "covariate-free";
  }
  return "?";
}

ForecastMode parse_forecast_mode(const std::string& s) {
  if (s == "mlp") return ForecastMode::Mlp;
  if (s == "oracle") return ForecastMode::Oracle;
  if (s == "covariate-free") return ForecastMode::CovariateFree;
  throw ConfigError("unknown forecast mode '" + s + "'");
}

// --- Parameters --------------------------------------------------------------

RankParams RankParams::init(const RankNetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng = make_rng(seed, Stream::Init);
  RankParams p;
  const auto hidden = static_cast<std::size_t>(cfg.hidden);
  p.embedding = EmbeddingTable::init(static_cast<std::size_t>(cfg.num_car_ids),
                                     static_cast<std::size_t>(cfg.embedding_dim), rng);
  std::size_t in = cfg.input_dim();
  for (int l = 0; l < cfg.lstm_layers; ++l) {
    p.layers.push_back(LstmLayerParams::init(in, hidden, rng));
    in = hidden;
  }
  p.head = GaussianHeadParams::init(hidden, rng);
  return p;
}

RankParams RankParams::zeros_like() const {
  RankParams g;
  g.embedding = embedding.zeros_like();
  for (const auto& l : layers) g.layers.push_back(l.zeros_like());
  g.head = head.zeros_like();
  return g;
}

ParamRefs RankParams::refs() {
  ParamRefs out;
  embedding.append_params("embedding", out);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].append_params("lstm" + std::to_string(l), out);
  }
  head.append_params("head", out);
  return out;
}

std::size_t RankParams::count() const { return parameter_count(const_cast<RankParams*>(this)->refs()); }

// --- Inputs ------------------------------------------------------------------

void encode_step(const RankNetConfig& cfg, const Scaler& s, const LapFeatures& lap,
                 const LapFeatures& lag, bool lag_observed, std::span<double> out) {
  if (out.size() != cfg.feature_dim()) throw ShapeError("encode_step: output width");
  const bool cov = !cfg.covariate_free;
  std::size_t k = 0;
  out[k++] = s.apply(Feature::Rank, lag.rank);
  out[k++] = lag_observed ? s.apply(Feature::LapTime, lag.lap_time) : 0.0;
  out[k++] = lag_observed ? s.apply(Feature::TimeBehindLeader, lag.time_behind_leader) : 0.0;
  out[k++] = cov ? lap.track_status : 0.0;
  out[k++] = cov ? lap.lap_status : 0.0;
  out[k++] = cov ? s.apply(Feature::CautionLaps, lap.caution_laps) : 0.0;
  out[k++] = cov ? s.apply(Feature::PitAge, lap.pit_age) : 0.0;
  if (cfg.context_features) {
    out[k++] = cov ? s.apply(Feature::LeaderPitCount, lap.leader_pit_count) : 0.0;
    out[k++] = cov ? s.apply(Feature::TotalPitCount, lap.total_pit_count) : 0.0;
  }
  if (cfg.shift_features) {
    out[k++] = cov ? lap.shift_track_status : 0.0;
    out[k++] = cov ? lap.shift_lap_status : 0.0;
    out[k++] = cov ? s.apply(Feature::ShiftTotalPitCount, lap.shift_total_pit_count) : 0.0;
  }
}

EncodedWindows encode_windows(const RankNetConfig& cfg, const Scaler& scaler,
                              std::span<const TrainingWindow> windows) {
  EncodedWindows e;
  const auto C = static_cast<std::size_t>(cfg.context_length);
  const auto k = static_cast<std::size_t>(cfg.prediction_length);
  e.steps = C + k;
  e.feature_dim = cfg.feature_dim();
  e.context_length = C;
  e.features.resize(windows.size() * e.steps * e.feature_dim);
  e.targets.reserve(windows.size() * k);
  e.weights.reserve(windows.size() * k);
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const auto& win = windows[w];
    if (win.context_length != cfg.context_length || win.prediction_length != cfg.prediction_length ||
        win.steps.size() != e.steps || win.weights.size() != k) {
      throw ShapeError("encode_windows: window lengths differ from the configuration");
    }
    if (win.car_id < 0 || win.car_id >= cfg.num_car_ids) {
      throw ConfigError("car id " + std::to_string(win.car_id) + " outside [0, num_car_ids)");
    }
    for (std::size_t t = 0; t < e.steps; ++t) {
      const LapFeatures& lag = t == 0 ? win.lag0 : win.steps[t - 1];
      std::span<double> out(e.features.data() + (w * e.steps + t) * e.feature_dim, e.feature_dim);
      encode_step(cfg, scaler, win.steps[t], lag, t <= C, out);
    }
    for (std::size_t j = 0; j < k; ++j) {
      e.targets.push_back(scaler.apply(Feature::Rank, win.steps[C + j].rank));
      e.weights.push_back(win.weights[j]);
    }
    e.car_index.push_back(static_cast<std::size_t>(win.car_id));
  }
  return e;
}

// --- Loss and gradients ------------------------------------------------------

namespace {

std::vector<Matrix> assemble_inputs(const RankParams& p, const EncodedWindows& data,
                                    std::span<const std::size_t> sel,
                                    std::vector<std::size_t>& car_rows) {
  const std::size_t B = sel.size();
  const std::size_t Df = data.feature_dim;
  const std::size_t E = p.embedding.dim();
  car_rows.resize(B);
  for (std::size_t b = 0; b < B; ++b) car_rows[b] = data.car_index[sel[b]];
  const Matrix emb = p.embedding.lookup(car_rows);

  auto scope = profile_scope(OpClass::Other);
  std::vector<Matrix> inputs(data.steps, Matrix(B, Df + E));
  for (std::size_t t = 0; t < data.steps; ++t) {
    Matrix& x = inputs[t];
    for (std::size_t b = 0; b < B; ++b) {
      const double* src = data.features.data() + (sel[b] * data.steps + t) * Df;
      auto row = x.row(b);
      std::copy(src, src + Df, row.begin());
      const auto e = emb.row(b);
      std::copy(e.begin(), e.end(), row.begin() + static_cast<std::ptrdiff_t>(Df));
    }
  }
  return inputs;
}

}  // namespace

double window_loss(const RankNetConfig& cfg, const RankParams& p, const EncodedWindows& data,
                   std::span<const std::size_t> sel, RankParams* grads, double grad_scale) {
  if (sel.empty()) return 0.0;
  const std::size_t B = sel.size();
  const std::size_t C = data.context_length;
  const std::size_t k = data.steps - C;
  if (data.feature_dim + p.embedding.dim() != p.layers.front().input_dim()) {
    throw ShapeError("window_loss: encoded width does not match the model");
  }
  (void)cfg;

  std::vector<std::size_t> car_rows;
  const auto inputs = assemble_inputs(p, data, sel, car_rows);
  const auto run = lstm_stack_forward(p.layers, inputs, {}, grads != nullptr);

  std::vector<double> z(B), w(B), d_mu_v(B), d_sigma_v(B);
  std::vector<Matrix> d_top(grads ? data.steps : 0);
  double total = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    const std::size_t t = C + j;
    const auto out = gaussian_head(p.head, run.top_h[t]);
    for (std::size_t b = 0; b < B; ++b) {
      z[b] = data.targets[sel[b] * k + j];
      w[b] = data.weights[sel[b] * k + j];
    }
    total += gaussian_nll(z, out.mu.values(), out.sigma.values(), w);
    if (grads) {
      for (double& v : w) v *= grad_scale;
      Matrix d_mu(B, 1), d_sigma(B, 1);
      gaussian_nll_grad(z, out.mu.values(), out.sigma.values(), w, d_mu.values(),
                        d_sigma.values());
      d_top[t] = gaussian_head_backward(p.head, run.top_h[t], out, d_mu, d_sigma, grads->head);
    }
  }
  if (grads) {
    const auto dx = lstm_stack_backward(p.layers, run, d_top, grads->layers);
    const std::size_t E = p.embedding.dim();
    if (E > 0) {
      const std::size_t Df = data.feature_dim;
      Matrix d_emb(B, E);
      {
        auto scope = profile_scope(OpClass::Add);
        for (const Matrix& d : dx) {
          for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t e = 0; e < E; ++e) d_emb(b, e) += d(b, Df + e);
          }
        }
      }
      scatter_add_rows(grads->embedding.table, car_rows, d_emb);
    }
  }
  return total;
}

double mean_window_loss(const RankNetConfig& cfg, const RankParams& p, const EncodedWindows& data) {
  if (data.size() == 0) throw ConfigError("mean_window_loss: no windows");
  constexpr std::size_t kChunk = 256;
  std::vector<std::size_t> sel;
  double total = 0.0;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    sel.clear();
    for (std::size_t i = start; i < std::min(data.size(), start + kChunk); ++i) sel.push_back(i);
    total += window_loss(cfg, p, data, sel, nullptr);
  }
  return total / static_cast<double>(data.size());
}

std::vector<std::vector<double>> window_point_forecasts(const RankModel& m,
                                                        std::span<const TrainingWindow> windows) {
  const auto data = encode_windows(m.config, m.scaler, windows);
  const std::size_t C = data.context_length;
  const std::size_t k = data.steps - C;
  std::vector<std::vector<double>> out(windows.size(), std::vector<double>(k));
  std::vector<std::size_t> sel(windows.size());
  std::iota(sel.begin(), sel.end(), 0);
  std::vector<std::size_t> rows;
  const auto inputs = assemble_inputs(m.params, data, sel, rows);
  const auto run = lstm_stack_forward(m.params.layers, inputs, {}, false);
  for (std::size_t j = 0; j < k; ++j) {
    const auto o = gaussian_head(m.params.head, run.top_h[C + j]);
    for (std::size_t w = 0; w < windows.size(); ++w) {
      out[w][j] = m.scaler.invert(Feature::Rank, o.mu(w, 0));
    }
  }
  return out;
}

// --- Training ------------------------------------------------------------------

namespace {

void zero(RankParams& g) {
  for (auto& r : g.refs()) r.value->fill(0.0);
}

bool finite_params(RankParams& g) {
  for (auto& r : g.refs())
    if (!all_finite(*r.value)) return false;
  return true;
}

}  // namespace

RankTrainResult train_rank_model(std::span<const TrainingWindow> train,
                                 std::span<const TrainingWindow> validation,
                                 const RankNetConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train.empty()) throw ConfigError("train_rank_model: empty training set");
  const Scaler scaler = fit_scaler(train);
  const auto enc_train = encode_windows(cfg, scaler, train);
  const auto enc_val = encode_windows(cfg, scaler, validation);

  RankParams params = RankParams::init(cfg, cfg.seed);
  RankParams grads = params.zeros_like();
  const ParamRefs p_refs = params.refs();
  const ParamRefs g_refs = grads.refs();
  AdamState adam;
  adam.learning_rate = cfg.learning_rate;
  LrSchedule schedule(cfg.learning_rate, cfg.lr_decay, cfg.lr_patience, cfg.min_learning_rate);

  RankTrainResult result;
  result.model.config = cfg;
  result.model.scaler = scaler;
  result.model.params = params;

  const std::size_t n = enc_train.size();
  const auto B = static_cast<std::size_t>(cfg.batch_size);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    Rng rng = make_rng(cfg.seed, Stream::Shuffle, {static_cast<std::uint64_t>(epoch)});
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

    double total = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += B, ++batch_index) {
      const std::span<const std::size_t> sel(order.data() + start, std::min(B, n - start));
      zero(grads);
      double loss = std::numeric_limits<double>::quiet_NaN();
      try {
        loss = window_loss(cfg, params, enc_train, sel, &grads,
                           1.0 / static_cast<double>(sel.size()));
      } catch (const DomainError&) {
        // sigma collapsed to zero or NaN
      }
      if (!std::isfinite(loss) || !finite_params(grads)) {
        throw DivergenceError("non-finite training loss in epoch " + std::to_string(epoch),
                              derive_seed(cfg.seed, {static_cast<std::uint64_t>(epoch), batch_index}));
      }
      adam_step(p_refs, g_refs, adam);
      total += loss;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = total / static_cast<double>(n);
    stats.validation_loss = stats.train_loss;
    if (enc_val.size()) {
      try {
        stats.validation_loss = mean_window_loss(cfg, params, enc_val);
      } catch (const DomainError&) {
        stats.validation_loss = std::numeric_limits<double>::quiet_NaN();
      }
    }
    if (!std::isfinite(stats.validation_loss)) {
      throw DivergenceError("non-finite validation loss in epoch " + std::to_string(epoch),
                            derive_seed(cfg.seed, {static_cast<std::uint64_t>(epoch)}));
    }
    const auto decision = schedule.observe(stats.validation_loss);
    adam.learning_rate = decision.learning_rate;
    stats.learning_rate = decision.learning_rate;
    stats.improved = decision.improved;
    if (decision.improved) {
      result.model.params = params;
      result.history.best_epoch = epoch;
      result.history.best_validation_loss = stats.validation_loss;
    }
    result.history.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);
    if (decision.stop) break;
  }
  return result;
}

StepTiming run_training_steps(const RankNetConfig& cfg, RankParams& params,
                              const EncodedWindows& data, std::size_t batch_size,
                              std::size_t warmup_steps, std::size_t timed_steps) {
  if (data.size() == 0 || batch_size == 0) throw ConfigError("run_training_steps: no data");
  RankParams grads = params.zeros_like();
  const ParamRefs p_refs = params.refs();
  const ParamRefs g_refs = grads.refs();
  AdamState adam;
  adam.learning_rate = cfg.learning_rate;
  std::vector<std::size_t> sel(batch_size);
  std::size_t cursor = 0;
  StepTiming timing;
  for (std::size_t step = 0; step < warmup_steps + timed_steps; ++step) {
    for (auto& s : sel) s = cursor++ % data.size();
    const auto start = std::chrono::steady_clock::now();
    zero(grads);
    window_loss(cfg, params, data, sel, &grads, 1.0 / static_cast<double>(batch_size));
    adam_step(p_refs, g_refs, adam);
    const auto stop = std::chrono::steady_clock::now();
    if (step >= warmup_steps) {
      timing.timed_ns += static_cast<std::uint64_t>(
          std::chrono::duration_cast<std::chrono::nanoseconds>(stop - start).count());
      timing.samples += batch_size;
      ++timing.steps;
    }
  }
  return timing;
}

// --- Split ---------------------------------------------------------------------

DataSplit split_races(std::span<const std::string> ids, int test_races, int validation_races) {
  if (test_races < 0 || validation_races < 0) throw ConfigError("race counts must be >= 0");
  const auto n = static_cast<int>(ids.size());
  if (test_races + validation_races >= n) {
    throw ConfigError("split needs at least one training race: " + std::to_string(n) +
                      " races for " + std::to_string(test_races) + " test and " +
                      std::to_string(validation_races) + " validation");
  }
  DataSplit s;
  const int train_end = n - test_races - validation_races;
  for (int i = 0; i < n; ++i) {
    auto& dst = i < train_end ? s.train : i < n - test_races ? s.validation : s.test;
    dst.push_back(ids[static_cast<std::size_t>(i)]);
  }
  return s;
}

}  // namespace ranknet
