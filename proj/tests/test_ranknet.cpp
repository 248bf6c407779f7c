#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "ranknet/errors.hpp"
#include "ranknet/profile.hpp"
#include "ranknet/ranknet.hpp"

using namespace ranknet;

namespace {

RankNetConfig small_config() {
  RankNetConfig c;
  c.context_length = 5;
  c.prediction_length = 2;
  c.hidden = 6;
  c.embedding_dim = 2;
  c.num_car_ids = 10;
  c.batch_size = 8;
  c.max_epochs = 3;
  c.pit_epochs = 5;
  c.num_samples = 8;
  return c;
}

SynthConfig small_synth(int races = 2) {
  SynthConfig s;
  s.num_races = races;
  s.num_cars = 6;
  s.num_laps = 60;
  s.min_laps = 10;
  s.stint_mean = 26;
  s.stint_sd = 2;
  s.stint_min = 24;
  s.stint_max = 30;
  s.caution_pit_min_age = 4;
  return s;
}

struct Fixture {
  RankNetConfig cfg = small_config();
  std::vector<LapRecord> records;
  std::vector<RaceFrame> frames;
  std::vector<TrainingWindow> windows;
  RankModel model;
  PitModel pit;

  explicit Fixture(RankNetConfig c = small_config()) : cfg(c) {
    records = synth_generate(small_synth(), 7);
    frames = derive_features(records, cfg.shift_laps);
    windows = build_windows(frames, cfg.context_length, cfg.prediction_length, 3, cfg.loss_weight);
    model.config = cfg;
    model.scaler = fit_scaler(windows);
    model.params = RankParams::init(cfg, 11);
    pit = train_pit_model(pit_training_set(records), cfg);
  }
};

std::size_t expected_params(const RankNetConfig& c) {
  const std::size_t H = static_cast<std::size_t>(c.hidden);
  std::size_t n = static_cast<std::size_t>(c.num_car_ids * c.embedding_dim);
  std::size_t in = c.input_dim();
  for (int l = 0; l < c.lstm_layers; ++l) {
    n += (in + H + 1) * 4 * H;
    in = H;
  }
  return n + 2 * (H + 1);
}

}  // namespace

TEST_CASE("config defaults, JSON round trip and validation") {
  RankNetConfig c;
  CHECK(c.feature_dim() == 9);
  CHECK(c.input_dim() == 13);
  CHECK(RankNetConfig::from_json(c.to_json()) == c);

  auto j = c.to_json();
  j["hidden"] = 12;
  CHECK(RankNetConfig::from_json(j).hidden == 12);
  j["bogus"] = 1;
  CHECK_THROWS_AS(RankNetConfig::from_json(j), ConfigError);
  CHECK_THROWS_AS(RankNetConfig::from_json(nlohmann::json{{"hidden", "wide"}}), ConfigError);

  RankNetConfig bad;
  bad.context_length = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = RankNetConfig{};
  bad.lr_decay = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  c.shift_features = true;
  CHECK(c.feature_dim() == 12);
  CHECK(parse_forecast_mode("oracle") == ForecastMode::Oracle);
  CHECK(std::string(forecast_mode_name(ForecastMode::CovariateFree)) == "covariate-free");
  CHECK_THROWS_AS(parse_forecast_mode("magic"), ConfigError);
}

TEST_CASE("parameter count stays under 30K for the default model") {
  RankNetConfig c;
  const auto p = RankParams::init(c, 1);
  CHECK(p.count() == expected_params(c));
  CHECK(p.count() == 21938);
  CHECK(p.count() < 30000);
  c.shift_features = true;
  CHECK(RankParams::init(c, 1).count() == expected_params(c));
}

TEST_CASE("encode_step layout, lag masking and covariate-free zeroing") {
  RankNetConfig c;
  c.shift_features = true;
  Scaler s;
  for (std::size_t i = 0; i < kScaledFeatureCount; ++i) {
    s.mean[i] = static_cast<double>(i);
    s.stddev[i] = 2.0;
  }
  LapFeatures lap{3, 41, 5, 1, 1, 4, 7, 2, 3, 1, 0, 6};
  LapFeatures lag{4, 40, 2, 0, 0, 0, 0, 0, 0, 0, 0, 0};
  std::vector<double> out(c.feature_dim());
  encode_step(c, s, lap, lag, true, out);
  const std::vector<double> expect = {(4 - 0) / 2.0, (40 - 1) / 2.0, (2 - 2) / 2.0, 1, 1,
                                      (4 - 3) / 2.0, (7 - 4) / 2.0,  (2 - 5) / 2.0, (3 - 6) / 2.0,
                                      1, 0, (6 - 7) / 2.0};
  CHECK(out == expect);

  encode_step(c, s, lap, lag, false, out);
  CHECK(out[0] == expect[0]);
  CHECK(out[1] == 0.0);
  CHECK(out[2] == 0.0);

  c.covariate_free = true;
  encode_step(c, s, lap, lag, true, out);
  CHECK(out[0] == expect[0]);
  CHECK(out[1] == expect[1]);
  for (std::size_t i = 3; i < out.size(); ++i) CHECK(out[i] == 0.0);

  std::vector<double> wrong(3);
  CHECK_THROWS_AS(encode_step(c, s, lap, lag, true, wrong), ShapeError);
}

TEST_CASE("encoded windows mask lags of decoder laps after the first") {
  Fixture f;
  const auto e = encode_windows(f.cfg, f.model.scaler, f.windows);
  REQUIRE(e.size() == f.windows.size());
  const std::size_t C = e.context_length;
  for (std::size_t w = 0; w < e.size(); ++w) {
    const double* at = e.features.data() + w * e.steps * e.feature_dim;
    CHECK(at[C * e.feature_dim + 1] != 0.0);
    CHECK(at[(C + 1) * e.feature_dim + 1] == 0.0);
    CHECK(at[(C + 1) * e.feature_dim + 2] == 0.0);
    CHECK(e.targets[w * 2] == f.model.scaler.apply(Feature::Rank, f.windows[w].steps[C].rank));
  }
  auto bad = f.windows;
  bad[0].car_id = 99;
  CHECK_THROWS_AS(encode_windows(f.cfg, f.model.scaler, bad), ConfigError);
}

TEST_CASE("one training step issues 12T + 6k matrix products") {
  Fixture f;
  const auto data = encode_windows(f.cfg, f.model.scaler, f.windows);
  RankParams grads = f.model.params.zeros_like();
  const std::vector<std::size_t> sel = {0, 1, 2, 3};
  reset_profile();
  set_profiling_enabled(true);
  window_loss(f.cfg, f.model.params, data, sel, &grads, 0.25);
  set_profiling_enabled(false);
  const auto prof = collect_profile();
  const std::size_t T = data.steps, k = data.steps - data.context_length;
  CHECK(prof[OpClass::MatMul].calls == 12 * T + 6 * k);

  reset_profile();
  set_profiling_enabled(true);
  window_loss(f.cfg, f.model.params, data, sel, nullptr);
  set_profiling_enabled(false);
  CHECK(collect_profile()[OpClass::MatMul].calls == 4 * T + 2 * k);
  reset_profile();
}

TEST_CASE("window loss is linear in the step weights") {
  Fixture f;
  auto data = encode_windows(f.cfg, f.model.scaler, f.windows);
  std::fill(data.weights.begin(), data.weights.end(), 1.0);
  std::vector<std::size_t> sel(data.size());
  std::iota(sel.begin(), sel.end(), 0);
  RankParams g1 = f.model.params.zeros_like();
  const double l1 = window_loss(f.cfg, f.model.params, data, sel, &g1);
  std::fill(data.weights.begin(), data.weights.end(), 9.0);
  RankParams g9 = f.model.params.zeros_like();
  const double l9 = window_loss(f.cfg, f.model.params, data, sel, &g9);
  CHECK(l9 == doctest::Approx(9.0 * l1).epsilon(1e-12));
  const auto r1 = g1.refs();
  const auto r9 = g9.refs();
  for (std::size_t i = 0; i < r1.size(); ++i) {
    for (std::size_t e = 0; e < r1[i].value->size(); ++e) {
      CHECK((*r9[i].value)[e] == doctest::Approx(9.0 * (*r1[i].value)[e]).epsilon(1e-10));
    }
  }
}

TEST_CASE("window gradients match finite differences through the embedding") {
  RankNetConfig cfg = small_config();
  cfg.hidden = 3;
  cfg.context_length = 3;
  Fixture f(cfg);
  const auto data = encode_windows(cfg, f.model.scaler, f.windows);
  const std::vector<std::size_t> sel = {0, 5, 9};
  RankParams p = f.model.params;
  RankParams g = p.zeros_like();
  window_loss(cfg, p, data, sel, &g);
  const auto report = finite_diff_check(p.refs(), g.refs(),
                                        [&] { return window_loss(cfg, p, data, sel, nullptr); },
                                        1e-4, 1e-5, 400, 3);
  INFO(report.worst_param << "[" << report.worst_index << "] " << report.worst_analytic << " vs "
                          << report.worst_numeric);
  CHECK(report.passed);
}

TEST_CASE("training is deterministic and keeps the best validation epoch") {
  Fixture f;
  const std::span<const TrainingWindow> all(f.windows);
  const auto train = all.first(all.size() - 10);
  const auto val = all.last(10);
  std::vector<EpochStats> seen;
  const auto a = train_rank_model(train, val, f.cfg, [&](const EpochStats& e) { seen.push_back(e); });
  const auto b = train_rank_model(train, val, f.cfg);
  CHECK(seen.size() == 3);
  CHECK(a.history.epochs.size() == 3);
  const Checkpoint ca{a.model, std::nullopt, a.history};
  const Checkpoint cb{b.model, std::nullopt, b.history};
  CHECK(checkpoint_to_json(ca).dump() == checkpoint_to_json(cb).dump());

  double best = a.history.epochs.front().validation_loss;
  int best_epoch = 1;
  for (const auto& e : a.history.epochs) {
    if (e.validation_loss < best) {
      best = e.validation_loss;
      best_epoch = e.epoch;
    }
  }
  CHECK(a.history.best_epoch == best_epoch);
  const auto enc_val = encode_windows(f.cfg, a.model.scaler, val);
  CHECK(mean_window_loss(f.cfg, a.model.params, enc_val) == best);

  RankNetConfig other = f.cfg;
  other.seed = 2;
  const auto c = train_rank_model(train, val, other);
  CHECK(checkpoint_to_json({c.model, std::nullopt, c.history}).dump() !=
        checkpoint_to_json(ca).dump());
}

TEST_CASE("training on a few windows drives the loss down") {
  Fixture f;
  RankNetConfig cfg = f.cfg;
  cfg.max_epochs = 300;
  cfg.learning_rate = 1e-2;
  const std::span<const TrainingWindow> few(f.windows.data(), 8);
  const auto r = train_rank_model(few, {}, cfg);
  CHECK(r.history.best_validation_loss < 0.5 * r.history.epochs.front().train_loss);
}

TEST_CASE("non-finite inputs raise DivergenceError with the batch seed") {
  Fixture f;
  auto bad = f.windows;
  for (auto& w : bad)
    for (auto& s : w.steps) s.lap_time = std::numeric_limits<double>::quiet_NaN();
  try {
    train_rank_model(bad, {}, f.cfg);
    FAIL("expected DivergenceError");
  } catch (const DivergenceError& e) {
    CHECK(e.batch_seed() == derive_seed(f.cfg.seed, {1, 0}));
  }
  CHECK_THROWS_AS(train_rank_model({}, {}, f.cfg), ConfigError);
}

TEST_CASE("pit training rows cover every age of complete long stints") {
  std::vector<LapRecord> recs;
  const std::vector<int> pits = {10, 40, 70};
  for (int lap = 1; lap <= 75; ++lap) {
    const int track = lap >= 20 && lap <= 22 ? 1 : 0;
    const int pit = std::find(pits.begin(), pits.end(), lap) != pits.end() ? 1 : 0;
    recs.push_back({"r", 1, lap, 1, 40.0, 0.0, track, pit});
    recs.push_back({"r", 2, lap, 2, 40.0, 1.0, track, 0});
  }
  const auto rows = pit_training_set(recs);
  // stints: 0-10 short, 10-40 long (30), 40-70 long (30); car 2 never pits
  REQUIRE(rows.size() == 60);
  for (int i = 0; i < 30; ++i) {
    CHECK(rows[static_cast<std::size_t>(i)].pit_age == i);
    CHECK(rows[static_cast<std::size_t>(i)].stint_length == 30);
    const int lap = 10 + i;
    const double caution = lap < 20 ? 0 : std::min(lap, 22) - 19;
    CHECK(rows[static_cast<std::size_t>(i)].caution_laps == caution);
  }
  CHECK(rows[30].pit_age == 0);
  CHECK(rows[30].caution_laps == 0);
}

TEST_CASE("pit offsets round and clamp") {
  CHECK(pit_offset(0.2) == 1);
  CHECK(pit_offset(-7) == 1);
  CHECK(pit_offset(24.4) == 24);
  CHECK(pit_offset(24.5) == 25);
  CHECK(pit_offset(80) == 50);
  CHECK_THROWS_AS(pit_offset(std::nan("")), DomainError);
}

TEST_CASE("pit model fits a constant stint length") {
  std::vector<PitSample> rows;
  for (int rep = 0; rep < 4; ++rep)
    for (int age = 0; age < 30; ++age) rows.push_back({static_cast<double>(age % 3), double(age), 30});
  RankNetConfig cfg;
  cfg.pit_epochs = 40;
  const auto m = train_pit_model(rows, cfg);
  for (double age : {0.0, 10.0, 25.0}) CHECK(std::abs(m.predict(0, age).mu - 30.0) < 0.5);
  CHECK(m.predict(0, 5).sigma > 0);
  CHECK_THROWS_AS(train_pit_model({}, cfg), DataError);
}

TEST_CASE("short-only stint data has nothing to fit") {
  SynthConfig s = small_synth(1);
  s.short_stint_prob = 1.0;
  s.caution_rate = 0;
  const auto recs = synth_generate(s, 3);
  CHECK(pit_training_set(recs).empty());
  CHECK_THROWS_AS(train_pit_model(pit_training_set(recs), small_config()), DataError);
  CHECK_THROWS_AS(evaluate_pit_model(PitModel{}, recs), MetricError);
}

TEST_CASE("ranks_from_samples sorts ascending with index tie-break") {
  const std::vector<std::vector<double>> s = {{3.0, 1.0, 2.0}, {1.0, 1.0, 5.0}, {2.0, 0.5, 2.0}};
  const auto d = ranks_from_samples(s);
  CHECK(d.sample_ranks[0] == std::vector<int>{3, 2, 1});
  CHECK(d.sample_ranks[1] == std::vector<int>{1, 3, 3});
  CHECK(d.sample_ranks[2] == std::vector<int>{2, 1, 2});
  CHECK(d.medians == std::vector<double>{2.0, 1.0, 2.0});
  CHECK(d.aggregate == std::vector<int>{2, 1, 3});
  CHECK_THROWS_AS(ranks_from_samples({}), MetricError);
  CHECK_THROWS_AS(ranks_from_samples({{1.0}, {1.0, 2.0}}), ShapeError);
}

TEST_CASE("forecast argument and mode errors") {
  Fixture f;
  const auto& race = f.frames[0];
  ForecastOptions o;
  CHECK_THROWS_AS(forecast(f.model, &f.pit, race, 3, 6, o), ContextError);
  CHECK_THROWS_AS(forecast(f.model, &f.pit, race, 20, 20, o), RangeError);
  CHECK_THROWS_AS(forecast(f.model, nullptr, race, 20, 22, o), ModeError);
  o.mode = ForecastMode::Oracle;
  CHECK_THROWS_AS(forecast(f.model, nullptr, race, 20, 65, o), ModeError);
  CHECK_NOTHROW(forecast(f.model, nullptr, race, 20, 40, o));
  o.mode = ForecastMode::CovariateFree;
  CHECK_THROWS_AS(forecast(f.model, nullptr, race, 20, 22, o), ModeError);
  RankModel cf = f.model;
  cf.config.covariate_free = true;
  o.mode = ForecastMode::Oracle;
  CHECK_THROWS_AS(forecast(cf, nullptr, race, 20, 22, o), ModeError);
  o.num_samples = 0;
  o.mode = ForecastMode::CovariateFree;
  CHECK_THROWS_AS(forecast(cf, nullptr, race, 20, 22, o), ConfigError);
}

TEST_CASE("zero-sigma forecasts collapse to one trajectory") {
  Fixture f;
  ForecastOptions o;
  o.num_samples = 100;
  o.force_zero_sigma = true;
  const auto r = forecast(f.model, &f.pit, f.frames[0], 20, 26, o);
  REQUIRE(r.horizon() == 6);
  for (std::size_t h = 0; h < r.horizon(); ++h) {
    std::vector<std::vector<double>> per_car;
    for (const auto& c : r.cars) {
      for (double v : c.samples[h]) CHECK(v == c.samples[h][0]);
      CHECK(c.q10[h] == c.q90[h]);
      per_car.push_back(c.samples[h]);
    }
    const auto d = ranks_from_samples(per_car);
    std::vector<std::size_t> order(r.cars.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
      return r.cars[a].samples[h][0] < r.cars[b].samples[h][0];
    });
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      CHECK(d.aggregate[order[pos]] == static_cast<int>(pos) + 1);
      CHECK(r.cars[order[pos]].rank[h] == static_cast<int>(pos) + 1);
    }
  }
}

TEST_CASE("first forecast lap matches the teacher-forced window output") {
  Fixture f;
  const auto& race = f.frames[1];
  const int origin = 18;
  ForecastOptions o;
  o.mode = ForecastMode::Oracle;
  o.force_zero_sigma = true;
  o.num_samples = 3;
  const auto r = forecast(f.model, nullptr, race, origin, origin + 2, o);
  const int start = origin - f.cfg.context_length + 1;
  const auto all = build_windows(f.frames, f.cfg.context_length, f.cfg.prediction_length, 1,
                                 f.cfg.loss_weight);
  std::vector<TrainingWindow> mine;
  for (const auto& w : all)
    if (w.race_id == race.race_id && w.start_lap == start) mine.push_back(w);
  REQUIRE(mine.size() == r.cars.size());
  const auto mu = window_point_forecasts(f.model, mine);
  for (std::size_t c = 0; c < mine.size(); ++c) {
    CHECK(mine[c].car_id == r.cars[c].car_id);
    CHECK(r.cars[c].samples[0][0] == mu[c][0]);
  }
}

TEST_CASE("sample mean of the first forecast lap stays within the Monte Carlo bound") {
  Fixture f;
  ForecastOptions o;
  o.mode = ForecastMode::Oracle;
  o.num_samples = 400;
  const auto r = forecast(f.model, nullptr, f.frames[0], 20, 21, o);
  o.force_zero_sigma = true;
  o.num_samples = 1;
  const auto mu = forecast(f.model, nullptr, f.frames[0], 20, 21, o);
  for (std::size_t c = 0; c < r.cars.size(); ++c) {
    const auto& v = r.cars[c].samples[0];
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / static_cast<double>(v.size() - 1));
    CHECK(sd > 0.0);
    CHECK(std::abs(mean - mu.cars[c].samples[0][0]) < 4.0 * sd / std::sqrt(400.0));
  }
}

TEST_CASE("forecast horizons chain: a longer horizon extends a shorter one") {
  Fixture f;
  ForecastOptions o;
  o.num_samples = 5;
  const auto shortr = forecast(f.model, &f.pit, f.frames[0], 20, 22, o);
  const auto longr = forecast(f.model, &f.pit, f.frames[0], 20, 30, o);
  for (std::size_t c = 0; c < shortr.cars.size(); ++c) {
    for (std::size_t h = 0; h < 2; ++h) CHECK(shortr.cars[c].samples[h] == longr.cars[c].samples[h]);
  }
}

TEST_CASE("per-sample ranks are permutations and forecasts are seed-deterministic") {
  Fixture f;
  ForecastOptions o;
  o.num_samples = 6;
  const auto a = forecast(f.model, &f.pit, f.frames[0], 20, 28, o);
  const auto b = forecast(f.model, &f.pit, f.frames[0], 20, 28, o);
  CHECK(forecast_to_json(a).dump() == forecast_to_json(b).dump());
  o.seed = 2;
  const auto c = forecast(f.model, &f.pit, f.frames[0], 20, 28, o);
  CHECK(forecast_to_json(a).dump() != forecast_to_json(c).dump());
  const std::size_t N = a.cars.size();
  for (std::size_t h = 0; h < a.horizon(); ++h) {
    for (int s = 0; s < o.num_samples; ++s) {
      std::vector<int> seen;
      for (const auto& car : a.cars) seen.push_back(car.sample_ranks[h][static_cast<std::size_t>(s)]);
      std::sort(seen.begin(), seen.end());
      for (std::size_t i = 0; i < N; ++i) CHECK(seen[i] == static_cast<int>(i) + 1);
    }
  }
  const auto j = forecast_to_json(a);
  REQUIRE(j.size() == N * 8);
  CHECK(j[0]["lap"] == 21);
  CHECK(j[7]["lap"] == 28);
  CHECK(j[8]["car_id"] == a.cars[1].car_id);
  CHECK(j[0]["samples"].size() == 6);
  CHECK(j[0]["race_id"] == f.frames[0].race_id);
}

TEST_CASE("covariate-free forecasts ignore pit history") {
  RankNetConfig cfg = small_config();
  cfg.covariate_free = true;
  Fixture f(cfg);
  ForecastOptions o;
  o.mode = ForecastMode::CovariateFree;
  o.num_samples = 4;
  const auto a = forecast(f.model, nullptr, f.frames[0], 20, 24, o);
  RaceFrame moved = f.frames[0];
  for (auto& car : moved.cars) {
    for (std::size_t i = 0; i < car.laps.size(); ++i) car.laps[i].lap_status = i % 7 == 3 ? 1 : 0;
  }
  recompute_derived(moved, cfg.shift_laps);
  const auto b = forecast(f.model, nullptr, moved, 20, 24, o);
  CHECK(forecast_to_json(a).dump() == forecast_to_json(b).dump());
}

TEST_CASE("checkpoint round trip reproduces forecasts bit for bit") {
  Fixture f;
  const Checkpoint ck{f.model, f.pit, {}};
  const auto path = std::filesystem::temp_directory_path() / "ranknet_test_ck.json";
  save_checkpoint(path, ck);
  const auto back = load_checkpoint(path);
  REQUIRE(back.pit.has_value());
  CHECK(back.rank.config == f.cfg);
  CHECK(back.rank.scaler == f.model.scaler);
  ForecastOptions o;
  o.num_samples = 5;
  const auto a = forecast(f.model, &f.pit, f.frames[0], 20, 25, o);
  const auto b = forecast(back.rank, &*back.pit, f.frames[0], 20, 25, o);
  CHECK(forecast_to_json(a).dump() == forecast_to_json(b).dump());
  CHECK(checkpoint_to_json(back).dump() == checkpoint_to_json(ck).dump());

  auto j = checkpoint_to_json(ck);
  j["schema_version"] = 2;
  CHECK_THROWS_AS(checkpoint_from_json(j), MigrationError);
  j = checkpoint_to_json(ck);
  j["params"].erase("head.w_mu");
  CHECK_THROWS_AS(checkpoint_from_json(j), ParseError);
  j = checkpoint_to_json(ck);
  j["params"]["head.w_mu"]["shape"] = {1, 1};
  CHECK_THROWS_AS(checkpoint_from_json(j), ParseError);

  const std::string text = checkpoint_to_json(ck).dump();
  {
    std::ofstream out(path);
    out << text.substr(0, text.size() / 2);
  }
  CHECK_THROWS_AS(load_checkpoint(path), ParseError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
}

TEST_CASE("race split keeps order") {
  const std::vector<std::string> ids = {"a", "b", "c", "d", "e"};
  const auto s = split_races(ids, 2, 1);
  CHECK(s.train == std::vector<std::string>{"a", "b"});
  CHECK(s.validation == std::vector<std::string>{"c"});
  CHECK(s.test == std::vector<std::string>{"d", "e"});
  CHECK_THROWS_AS(split_races(ids, 4, 1), ConfigError);
}

TEST_CASE("pit evaluation on the generator's own stints") {
  SynthConfig s = small_synth(6);
  s.stint_mean = 35;
  s.stint_sd = 5;
  s.stint_min = 24;
  s.stint_max = 50;
  s.num_laps = 120;
  s.caution_rate = 0.5;
  const auto recs = synth_generate(s, 5);
  RankNetConfig cfg;
  cfg.pit_epochs = 30;
  const auto m = train_pit_model(pit_training_set(recs), cfg);
  const auto ev = evaluate_pit_model(m, recs);
  CHECK(ev.pits > 10);
  CHECK(ev.mean_prediction > 30);
  CHECK(ev.mean_prediction < 40);
  CHECK(ev.recall_2laps >= 0.0);
  CHECK(ev.recall_2laps <= 1.0);
}

TEST_CASE("pit recall classifies every stint lap against the predictive band") {
  // One car pitting on laps 30 and 60: two 30-lap stints, positives at ages 28 and 29.
  std::vector<LapRecord> recs;
  for (int lap = 1; lap <= 70; ++lap) {
    recs.push_back({"r", 1, lap, 1, 40.0, 0.0, 0, lap == 30 || lap == 60 ? 1 : 0});
    recs.push_back({"r", 2, lap, 2, 40.0, 1.0, 0, 0});
  }
  PitModel m;
  Rng rng(1);
  const std::size_t hidden[] = {3};
  m.mlp = MlpParams::init(2, hidden, rng);
  ParamRefs refs;
  m.mlp.append_params("pit", refs);
  for (auto& p : refs) p.value->fill(0.0);
  const double raw_sigma = m.predict(0.0, 0.0).sigma;
  m.target_mean = 32.0;
  m.target_std = 2.0 / raw_sigma;  // constant N(32, 2^2) stint length

  // Flag when Phi((age + 2.5 - 32) / 2) >= band: band 0.1 -> ages 27..29,
  // band 0.4 -> age 29 only; the mean alone (32 > age + 2) never flags.
  const auto ev = evaluate_pit_model(m, recs);
  CHECK(ev.pits == 2);
  CHECK(ev.laps == 60);
  CHECK(ev.mean_prediction == doctest::Approx(32.0).epsilon(1e-12));
  CHECK(ev.recall_2laps == 1.0);
  CHECK(ev.f1_2laps == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(ev.point_recall_2laps == 0.0);
  CHECK(ev.point_f1_2laps == 0.0);
  const auto tight = evaluate_pit_model(m, recs, 0.4);
  CHECK(tight.recall_2laps == 0.5);
  CHECK(tight.f1_2laps == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK_THROWS_AS(evaluate_pit_model(m, recs, 1.0), DomainError);
}
