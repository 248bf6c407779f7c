#include <algorithm>
#include <numeric>

#include <nlohmann/json.hpp>

#include "ranknet/errors.hpp"
#include "ranknet/quantile.hpp"
#include "ranknet/ranknet.hpp"

namespace ranknet {

namespace {

std::vector<int> ranks_of(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<int> rank(values.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) rank[order[pos]] = static_cast<int>(pos) + 1;
  return rank;
}

// Writes one model input row: covariates followed by the car embedding.
void write_row(const RankModel& m, const LapFeatures& lap, const LapFeatures& lag, bool observed,
               std::span<const double> emb, std::span<double> row) {
  const std::size_t Df = m.config.feature_dim();
  encode_step(m.config, m.scaler, lap, lag, observed, row.first(Df));
  std::copy(emb.begin(), emb.end(), row.begin() + static_cast<std::ptrdiff_t>(Df));
}

constexpr std::uint64_t kPitRedraws = 32;

void sample_pits(const PitModel& pit, std::vector<RaceFrame>& frames, int origin, int end,
                 const ForecastOptions& opts) {
  struct Row {
    std::size_t sample, car;
    int last_pit, current;
    double caution, age;
    std::uint64_t index;
  };
  std::vector<Row> active;
  for (std::size_t s = 0; s < frames.size(); ++s) {
    for (std::size_t c = 0; c < frames[s].cars.size(); ++c) {
      const auto& at = frames[s].cars[c].laps[static_cast<std::size_t>(origin - 1)];
      active.push_back({s, c, origin - static_cast<int>(at.pit_age), origin, at.caution_laps,
                        at.pit_age, 0});
    }
  }
  std::vector<double> caution, age;
  while (!active.empty()) {
    caution.clear();
    age.clear();
    for (const auto& r : active) {
      caution.push_back(r.caution);
      age.push_back(r.age);
    }
    const auto pred = pit.predict(caution, age);
    std::vector<Row> next_active;
    for (std::size_t i = 0; i < active.size(); ++i) {
      Row r = active[i];
      auto& car = frames[r.sample].cars[r.car];
      // Redraw offsets that land at or before the current lap.
      int next = 0;
      for (std::uint64_t attempt = 0;; ++attempt) {
        double draw = pred[i].mu;
        if (!opts.force_zero_sigma) {
          draw += pred[i].sigma *
                  keyed_normal(derive_seed(opts.seed, {static_cast<std::uint64_t>(Stream::Pit), r.sample,
                                                       static_cast<std::uint64_t>(car.car_id), r.index, attempt}));
        }
        next = r.last_pit + pit_offset(draw);
        if (next > r.current || opts.force_zero_sigma || attempt + 1 >= kPitRedraws) break;
      }
      next = std::max(next, r.current + 1);
      if (next > end) continue;
      car.laps[static_cast<std::size_t>(next - 1)].lap_status = 1.0;
      r.last_pit = r.current = next;
      r.caution = r.age = 0.0;
      ++r.index;
      next_active.push_back(r);
    }
    active = std::move(next_active);
  }
}

}  // namespace

RankDerivation ranks_from_samples(const std::vector<std::vector<double>>& samples) {
  if (samples.empty()) throw MetricError("ranks_from_samples: no cars");
  const std::size_t n = samples.size();
  const std::size_t S = samples.front().size();
  if (S == 0) throw MetricError("ranks_from_samples: no samples");
  for (const auto& s : samples)
    if (s.size() != S) throw ShapeError("ranks_from_samples: cars have different sample counts");

  RankDerivation d;
  d.sample_ranks.assign(n, std::vector<int>(S));
  std::vector<double> column(n);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t c = 0; c < n; ++c) column[c] = samples[c][s];
    const auto r = ranks_of(column);
    for (std::size_t c = 0; c < n; ++c) d.sample_ranks[c][s] = r[c];
  }
  for (const auto& s : samples) d.medians.push_back(quantile_nearest_rank(s, 0.5));
  d.aggregate = ranks_of(d.medians);
  return d;
}

ForecastResult forecast(const RankModel& model, const PitModel* pit, const RaceFrame& race,
                        int origin, int end, const ForecastOptions& opts) {
  const auto& cfg = model.config;
  const int C = cfg.context_length;
  if (opts.num_samples < 1) throw ConfigError("num_samples must be >= 1");
  if (end <= origin) {
    throw RangeError("forecast end lap " + std::to_string(end) + " must exceed origin lap " +
                     std::to_string(origin));
  }
  if (origin < C) {
    throw ContextError("origin lap " + std::to_string(origin) + " leaves fewer than " +
                       std::to_string(C) + " laps of history");
  }
  const bool covariate_free = opts.mode == ForecastMode::CovariateFree;
  if (cfg.covariate_free && !covariate_free) {
    throw ModeError("model was trained without race-status covariates; use covariate-free mode");
  }
  if (!cfg.covariate_free && covariate_free) {
    throw ModeError("covariate-free mode needs a model trained without race-status covariates");
  }
  if (opts.mode == ForecastMode::Mlp && pit == nullptr) throw ModeError("mlp mode needs a pit model");

  std::vector<const CarSeries*> cars;
  for (const auto& c : race.cars) {
    if (static_cast<int>(c.laps.size()) < origin) continue;
    if (c.car_id < 0 || c.car_id >= cfg.num_car_ids) {
      throw ConfigError("car id " + std::to_string(c.car_id) + " outside [0, num_car_ids)");
    }
    if (opts.mode == ForecastMode::Oracle && static_cast<int>(c.laps.size()) < end) {
      throw ModeError("oracle mode needs race status through lap " + std::to_string(end) +
                      " for car " + std::to_string(c.car_id));
    }
    cars.push_back(&c);
  }
  if (cars.empty()) {
    throw ContextError("no car in race '" + race.race_id + "' has " + std::to_string(origin) +
                       " laps of history");
  }

  const std::size_t N = cars.size();
  const auto S = static_cast<std::size_t>(opts.num_samples);
  const auto H = static_cast<std::size_t>(end - origin);

  // History up to the origin, then placeholder laps whose status is either
  // the truth (oracle) or filled in by the pit model.
  RaceFrame base{race.race_id, {}, end};
  for (const auto* c : cars) {
    CarSeries s{c->car_id, {c->laps.begin(), c->laps.begin() + origin}};
    for (int lap = origin + 1; lap <= end; ++lap) {
      LapFeatures f;
      f.rank = s.laps.back().rank;
      if (opts.mode == ForecastMode::Oracle) {
        f.track_status = c->laps[static_cast<std::size_t>(lap - 1)].track_status;
        f.lap_status = c->laps[static_cast<std::size_t>(lap - 1)].lap_status;
      }
      s.laps.push_back(f);
    }
    base.cars.push_back(std::move(s));
  }
  std::vector<RaceFrame> frames(opts.mode == ForecastMode::Mlp ? S : 1, base);
  for (auto& f : frames) recompute_derived(f, cfg.shift_laps);
  if (opts.mode == ForecastMode::Mlp) {
    sample_pits(*pit, frames, origin, end, opts);
    for (auto& f : frames) recompute_derived(f, cfg.shift_laps);
  }
  auto frame_of = [&](std::size_t s) -> const RaceFrame& {
    return frames[frames.size() == 1 ? 0 : s];
  };

  const std::size_t D = cfg.input_dim();
  std::vector<std::size_t> ids(N);
  for (std::size_t c = 0; c < N; ++c) ids[c] = static_cast<std::size_t>(cars[c]->car_id);
  const Matrix emb = model.params.embedding.lookup(ids);
  const auto& layers = model.params.layers;
  const auto hidden = static_cast<std::size_t>(cfg.hidden);
  const int first = origin - C + 1;

  // Encoder laps whose inputs do not depend on the sample run once per car.
  int shared = C;
  if (frames.size() > 1 && cfg.shift_features) shared = std::max(0, C - cfg.shift_laps);
  std::vector<LstmState> car_states;
  if (shared > 0) {
    std::vector<Matrix> inputs;
    for (int t = 0; t < shared; ++t) {
      const int lap = first + t;
      Matrix x(N, D);
      for (std::size_t c = 0; c < N; ++c) {
        const auto& series = frames[0].cars[c];
        const LapFeatures& lag = t == 0 ? lag_features(series, first)
                                        : series.laps[static_cast<std::size_t>(lap - 2)];
        write_row(model, series.laps[static_cast<std::size_t>(lap - 1)], lag, true, emb.row(c),
                  x.row(c));
      }
      inputs.push_back(std::move(x));
    }
    car_states = lstm_stack_forward(layers, inputs, {}, false).final_states;
  } else {
    car_states.assign(layers.size(), LstmState::zeros(N, hidden));
  }

  const std::size_t R = S * N;
  std::vector<LstmState> states;
  for (const auto& st : car_states) {
    LstmState rep = LstmState::zeros(R, hidden);
    for (std::size_t r = 0; r < R; ++r) {
      std::copy_n(st.h.row(r % N).begin(), hidden, rep.h.row(r).begin());
      std::copy_n(st.c.row(r % N).begin(), hidden, rep.c.row(r).begin());
    }
    states.push_back(std::move(rep));
  }

  Matrix x(R, D);
  for (int t = shared; t < C; ++t) {
    const int lap = first + t;
    for (std::size_t r = 0; r < R; ++r) {
      const auto& series = frame_of(r / N).cars[r % N];
      const LapFeatures& lag = t == 0 ? lag_features(series, first)
                                      : series.laps[static_cast<std::size_t>(lap - 2)];
      write_row(model, series.laps[static_cast<std::size_t>(lap - 1)], lag, true, emb.row(r % N),
                x.row(r));
    }
    lstm_stack_step(layers, x, states);
  }

  // values[h][s][c] raw, scaled keeps the last lap's draws for feedback.
  std::vector<std::vector<std::vector<double>>> values(
      H, std::vector<std::vector<double>>(S, std::vector<double>(N)));
  std::vector<std::vector<std::vector<int>>> sampled_rank(
      H, std::vector<std::vector<int>>(S, std::vector<int>(N)));
  std::vector<double> scaled(R);

  for (std::size_t h = 0; h < H; ++h) {
    const int lap = origin + 1 + static_cast<int>(h);
    const bool lag_observed = h == 0;
    for (std::size_t r = 0; r < R; ++r) {
      const std::size_t s = r / N, c = r % N;
      const auto& frame = frame_of(s);
      LapFeatures cur = frame.cars[c].laps[static_cast<std::size_t>(lap - 1)];
      if (h >= 2) {
        int leaders = 0;
        for (std::size_t o = 0; o < N; ++o) {
          if (frame.cars[o].laps[static_cast<std::size_t>(lap - 1)].lap_status > 0.5 &&
              sampled_rank[h - 2][s][o] <= kLeaderSetSize) {
            ++leaders;
          }
        }
        cur.leader_pit_count = leaders;
      }
      const LapFeatures& lag = frame.cars[c].laps[static_cast<std::size_t>(lap - 2)];
      auto row = x.row(r);
      write_row(model, cur, lag, lag_observed, emb.row(c), row);
      if (!lag_observed) row[0] = scaled[r];
    }
    const Matrix top = lstm_stack_step(layers, x, states);
    const auto out = gaussian_head(model.params.head, top);
    for (std::size_t r = 0; r < R; ++r) {
      const std::size_t s = r / N, c = r % N;
      double z = out.mu(r, 0);
      if (!opts.force_zero_sigma) {
        z += out.sigma(r, 0) *
             keyed_normal(derive_seed(opts.seed, {static_cast<std::uint64_t>(Stream::Sample), s,
                                                  ids[c], static_cast<std::uint64_t>(lap)}));
      }
      scaled[r] = z;
      values[h][s][c] = model.scaler.invert(Feature::Rank, z);
    }
    for (std::size_t s = 0; s < S; ++s) sampled_rank[h][s] = ranks_of(values[h][s]);
  }

  ForecastResult result;
  result.race_id = race.race_id;
  result.origin_lap = origin;
  result.end_lap = end;
  result.mode = opts.mode;
  result.cars.resize(N);
  for (std::size_t c = 0; c < N; ++c) {
    auto& cf = result.cars[c];
    cf.car_id = cars[c]->car_id;
    cf.samples.assign(H, std::vector<double>(S));
    cf.sample_ranks.assign(H, std::vector<int>(S));
  }
  std::vector<std::vector<double>> per_car(N, std::vector<double>(S));
  for (std::size_t h = 0; h < H; ++h) {
    for (std::size_t c = 0; c < N; ++c) {
      auto& cf = result.cars[c];
      for (std::size_t s = 0; s < S; ++s) {
        per_car[c][s] = values[h][s][c];
        cf.samples[h][s] = values[h][s][c];
        cf.sample_ranks[h][s] = sampled_rank[h][s][c];
      }
      cf.q10.push_back(quantile_nearest_rank(per_car[c], 0.1));
      cf.q50.push_back(quantile_nearest_rank(per_car[c], 0.5));
      cf.q90.push_back(quantile_nearest_rank(per_car[c], 0.9));
    }
    const auto agg = ranks_of([&] {
      std::vector<double> med(N);
      for (std::size_t c = 0; c < N; ++c) med[c] = result.cars[c].q50[h];
      return med;
    }());
    for (std::size_t c = 0; c < N; ++c) result.cars[c].rank.push_back(agg[c]);
  }
  return result;
}

nlohmann::json forecast_to_json(const ForecastResult& r) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& c : r.cars) {
    for (std::size_t h = 0; h < c.samples.size(); ++h) {
      out.push_back({{"race_id", r.race_id},
                     {"car_id", c.car_id},
                     {"lap", r.lap(h)},
                     {"samples", c.samples[h]},
                     {"q10", c.q10[h]},
                     {"q50", c.q50[h]},
                     {"q90", c.q90[h]},
                     {"rank", c.rank[h]}});
    }
  }
  return out;
}

}  // namespace ranknet
