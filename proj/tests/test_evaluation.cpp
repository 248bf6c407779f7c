#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "ranknet/errors.hpp"
#include "ranknet/evaluation.hpp"
#include "ranknet/random.hpp"
#include "support/rho_fixtures.hpp"

using namespace ranknet;
using namespace ranknet::testing;

namespace {

EvalPoint pt(double actual, double forecast, std::vector<double> samples = {},
             std::string race = "r", int car = 1, int lap = 1) {
  return {std::move(race), car, lap, 2, actual, forecast, std::move(samples)};
}

// Race where car i holds rank i on every lap (no pits unless listed).
std::vector<LapRecord> static_race(const std::string& id, int cars, int laps,
                                   std::vector<std::pair<int, int>> pits = {}) {
  std::vector<LapRecord> out;
  for (int lap = 1; lap <= laps; ++lap) {
    for (int c = 1; c <= cars; ++c) {
      const bool pit = std::find(pits.begin(), pits.end(), std::pair{c, lap}) != pits.end();
      out.push_back({id, c, lap, c, 40.0, c - 1.0, 0, pit ? 1 : 0});
    }
  }
  return out;
}

}  // namespace

TEST_CASE("MAE hand values and ordering invariance") {
  std::vector<EvalPoint> p = {pt(1, 2), pt(2, 4)};
  CHECK(mae(p) == 1.5);
  std::reverse(p.begin(), p.end());
  CHECK(mae(p) == 1.5);
  CHECK(mae(std::vector<EvalPoint>{pt(3, 3), pt(4, 4)}) == 0.0);
  CHECK_THROWS_AS(mae({}), MetricError);
}

TEST_CASE("Top1Acc counts correct leaders per race and lap") {
  auto group = [](int lap, bool swap) {
    std::vector<EvalPoint> g;
    for (int c = 1; c <= 3; ++c) {
      double f = c;
      if (swap && c <= 2) f = 3 - c;
      g.push_back(pt(c, f, {}, "r", c, lap));
    }
    return g;
  };
  std::vector<EvalPoint> all;
  for (int lap = 1; lap <= 4; ++lap) {
    auto g = group(lap, false);
    all.insert(all.end(), g.begin(), g.end());
  }
  CHECK(top1_accuracy(all) == 1.0);

  std::vector<EvalPoint> swapped;
  for (int lap = 1; lap <= 4; ++lap) {
    auto g = group(lap, true);
    swapped.insert(swapped.end(), g.begin(), g.end());
  }
  CHECK(top1_accuracy(swapped) == 0.0);

  std::vector<EvalPoint> three;
  for (int lap = 1; lap <= 4; ++lap) {
    auto g = group(lap, lap == 2);
    three.insert(three.end(), g.begin(), g.end());
  }
  CHECK(top1_accuracy(three) == 0.75);
  std::reverse(three.begin(), three.end());
  CHECK(top1_accuracy(three) == 0.75);

  auto broken = all;
  broken.pop_back();
  CHECK_THROWS_AS(top1_accuracy(broken), MetricError);
  auto dup = all;
  dup.back().car_id = 1;
  CHECK_THROWS_AS(top1_accuracy(dup), MetricError);
}

TEST_CASE("rho-risk matches hand-evaluated fixtures") {
  const auto cases = rho_fixtures();
  for (std::size_t i = 0; i < cases.size(); ++i) {
    INFO("case " << i);
    CHECK(std::abs(rho_risk(cases[i].points, cases[i].rho) - cases[i].expect) < 1e-12);
  }
  CHECK(std::abs(rho_risk(cases[1].points, 0.5) - 0.2) < 1e-12);
  CHECK(std::abs(rho_risk(cases[2].points, 0.9) - 0.36) < 1e-12);

  CHECK_THROWS_AS(rho_risk(cases[1].points, 0.0), DomainError);
  CHECK_THROWS_AS(rho_risk(cases[1].points, 1.0), DomainError);
  CHECK_THROWS_AS(rho_risk(std::vector<EvalPoint>{pt(0, 0, {1})}, 0.5), MetricError);
  CHECK_THROWS_AS(rho_risk(std::vector<EvalPoint>{pt(1, 0, {})}, 0.5), MetricError);
  CHECK_THROWS_AS(rho_risk({}, 0.5), MetricError);
}

TEST_CASE("rho-risk at 0.5 equals normalized absolute deviation from the median") {
  Rng rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<EvalPoint> pts;
    const int n = 1 + static_cast<int>(rng() % 20);
    for (int i = 0; i < n; ++i) {
      const int s = 1 + static_cast<int>(rng() % 100);
      std::vector<double> samples;
      for (int k = 0; k < s; ++k) samples.push_back(1 + 30 * uniform01(rng));
      pts.push_back(pt(1 + static_cast<double>(rng() % 33), 0, samples));
    }
    double dev = 0.0, total = 0.0;
    for (auto& p : pts) {
      auto sorted = p.samples;
      std::sort(sorted.begin(), sorted.end());
      const double median = sorted[(sorted.size() + 1) / 2 - 1];
      dev += std::abs(median - p.actual);
      total += p.actual;
    }
    CHECK(rho_risk(pts, 0.5) == doctest::Approx(dev / total).epsilon(1e-12));
    std::reverse(pts.begin(), pts.end());
    CHECK(rho_risk(pts, 0.5) == doctest::Approx(dev / total).epsilon(1e-12));
  }
}

TEST_CASE("SignAcc with the strict zero convention") {
  auto sp = [](double pred, double actual) { return StintPoint{"r", 1, 10, 40, actual, pred}; };
  CHECK(sign_accuracy(std::vector{sp(-3, -1)}) == 1.0);
  CHECK(sign_accuracy(std::vector{sp(2, -2)}) == 0.0);
  CHECK(sign_accuracy(std::vector{sp(0, 0)}) == 1.0);
  CHECK(sign_accuracy(std::vector{sp(0.5, 0)}) == 0.0);
  CHECK(sign_accuracy(std::vector{sp(0, 2)}) == 0.0);
  CHECK(sign_accuracy(std::vector{sp(1, 1), sp(-1, -4), sp(1, -1)}) ==
        doctest::Approx(2.0 / 3.0));
  CHECK_THROWS_AS(sign_accuracy({}), MetricError);
}

TEST_CASE("lap slices use a one-lap band around any pit and partition the points") {
  std::vector<EvalPoint> pts;
  for (int lap = 25; lap <= 35; ++lap) pts.push_back(pt(1, 1, {1}, "r", 1, lap));
  pts.push_back(pt(1, 1, {1}, "quiet", 1, 30));
  const PitLaps pits = {{"r", {30}}, {"quiet", {}}};
  const auto s = slice_laps(pts, pits);
  std::vector<int> covered;
  for (auto i : s.pit_covered) covered.push_back(pts[i].lap);
  CHECK(covered == std::vector<int>{29, 30, 31});
  CHECK(s.all.size() == pts.size());
  CHECK(s.normal.size() + s.pit_covered.size() == s.all.size());
  std::vector<std::size_t> merged = s.normal;
  merged.insert(merged.end(), s.pit_covered.begin(), s.pit_covered.end());
  std::sort(merged.begin(), merged.end());
  CHECK(merged == s.all);

  const auto none = slice_laps(pts, PitLaps{});
  CHECK(none.pit_covered.empty());
}

TEST_CASE("pit laps are collected from records and frames alike") {
  auto recs = static_race("a", 3, 20, {{1, 5}, {2, 5}, {3, 12}});
  const auto frames = derive_features(recs);
  CHECK(pit_laps_by_race(recs).at("a") == std::vector<int>{5, 12});
  CHECK(pit_laps_by_race(frames) == pit_laps_by_race(recs));
}

TEST_CASE("CurRank on a static race is perfect on every slice") {
  const auto recs = static_race("s", 4, 30, {{2, 20}});
  const auto frames = derive_features(recs);
  EvalMethod m;
  const auto pts = rolling_points(frames[0], m, 10, 2);
  CHECK(pts.size() == 4 * (30 - 2 - 10 + 1));
  for (const auto& p : pts) CHECK(p.lap - p.horizon >= 10);
  CHECK(mae(pts) == 0.0);
  CHECK(top1_accuracy(pts) == 1.0);
  const auto s = slice_laps(pts, pit_laps_by_race(recs));
  CHECK(mae(select(pts, s.normal)) == 0.0);
  CHECK(rho_risk(pts, 0.5) == 0.0);

  const auto f = currank_forecast(frames[0], 12, 3);
  REQUIRE(f.size() == 4);
  CHECK(f[2].ranks == std::vector<double>{3, 3, 3});
  CHECK_THROWS_AS(currank_forecast(frames[0], 12, 0), ConfigError);

  EvalMethod needs_model;
  needs_model.mode = ForecastMode::Oracle;
  CHECK_THROWS_AS(rolling_points(frames[0], needs_model, 10, 2), ModeError);
}

TEST_CASE("CurRank misses a swap on the lap it happens") {
  auto recs = static_race("s", 3, 12);
  for (auto& r : recs) {
    if (r.lap >= 6 && r.car_id <= 2) r.rank = 3 - r.car_id;
    r.time_behind_leader = r.rank - 1.0;
  }
  const auto frames = derive_features(recs);
  const auto pts = rolling_points(frames[0], EvalMethod{}, 4, 1);
  std::vector<EvalPoint> at6;
  for (const auto& p : pts)
    if (p.lap == 6) at6.push_back(p);
  CHECK(mae(at6) > 0.0);
  CHECK(top1_accuracy(at6) == 0.0);
}

TEST_CASE("stint task: static race, engineered overtake, conservation") {
  // every car pits on laps 10 and 30
  std::vector<std::pair<int, int>> pits;
  for (int c = 1; c <= 4; ++c) {
    pits.emplace_back(c, 10);
    pits.emplace_back(c, 30);
  }
  auto recs = static_race("s", 4, 40, pits);
  {
    const auto frames = derive_features(recs);
    const auto st = stint_task(frames[0], currank_rollout(), 5);
    REQUIRE(st.size() == 4);
    for (const auto& s : st) {
      CHECK(s.start_lap == 10);
      CHECK(s.end_lap == 30);
      CHECK(s.actual_change == 0.0);
      CHECK(s.predicted_change == 0.0);
    }
    CHECK(sign_accuracy(st) == 1.0);
  }
  // cars 2 and 3 swap from lap 20 on
  for (auto& r : recs) {
    if (r.lap >= 20 && (r.car_id == 2 || r.car_id == 3)) r.rank = 5 - r.car_id;
    r.time_behind_leader = r.rank - 1.0;
  }
  const auto frames = derive_features(recs);
  const auto st = stint_task(frames[0], currank_rollout(), 5);
  double total = 0.0;
  for (const auto& s : st) {
    total += s.actual_change;
    if (s.car_id == 2) CHECK(s.actual_change == 1.0);
    if (s.car_id == 3) CHECK(s.actual_change == -1.0);
    if (s.car_id == 1 || s.car_id == 4) CHECK(s.actual_change == 0.0);
  }
  CHECK(total == 0.0);
  CHECK(sign_accuracy(st) == 0.5);
  CHECK(stint_task(frames[0], currank_rollout(), 11).empty());

  const RankRollout short_rollout = [](const RaceFrame& race, int origin, int) {
    return currank_rollout()(race, origin, origin + 3);
  };
  CHECK_THROWS_AS(stint_task(frames[0], short_rollout, 5), RangeError);
}

TEST_CASE("reports: JSON round trip, CSV shape and determinism") {
  const auto recs = static_race("s", 4, 30, {{2, 20}});
  const auto frames = derive_features(recs);
  const auto pts = rolling_points(frames[0], EvalMethod{}, 10, 2);
  const std::vector<StintPoint> stints = {{"s", 1, 10, 30, -1, 0}, {"s", 2, 10, 30, 1, 2}};
  const nlohmann::json meta = {{"seed", 3}, {"dataset", "unit"}};
  const auto r = build_report(pts, pit_laps_by_race(recs), stints, meta);
  REQUIRE(r.slices.size() == 4);
  CHECK(r.slices[0].slice == "AllLaps");
  CHECK(r.slices[2].slice == "PitStopCovered");
  CHECK(r.slices[2].points == 12);
  CHECK(*r.slices[0].get("mae") == 0.0);
  CHECK(*r.slices[3].get("signacc") == 0.5);

  const auto j = report_to_json(r);
  const auto back = nlohmann::json::parse(j.dump());
  CHECK(back == j);
  CHECK(back["meta"]["seed"] == 3);
  CHECK(back["StintChange"]["mae"].get<double>() == 1.0);

  const std::string csv = report_to_csv(r);
  std::size_t rows = 0, metrics = 0;
  for (char c : csv) rows += c == '\n';
  for (const auto& s : r.slices) metrics += s.metrics.size();
  CHECK(rows == 1 + metrics);
  CHECK(csv.rfind("slice,metric,value\n", 0) == 0);

  const auto with10 = build_report(pts, pit_laps_by_race(recs), {}, meta, {true});
  CHECK(with10.slices.size() == 3);
  CHECK(with10.slices[0].get("rho_risk_10").has_value());

  const auto none = build_report(pts, PitLaps{}, {}, meta);
  CHECK(none.slices[2].points == 0);
  CHECK(!none.slices[2].get("mae").has_value());
  CHECK(report_to_json(none)["PitStopCovered"]["mae"].is_null());
  CHECK(report_to_csv(none).find("PitStopCovered,mae,NA") != std::string::npos);

  const auto dir = std::filesystem::temp_directory_path();
  for (auto fmt : {ReportFormat::Json, ReportFormat::Csv}) {
    emit_report(r, dir / "rn_rep_a", fmt);
    emit_report(r, dir / "rn_rep_b", fmt);
    std::ifstream a(dir / "rn_rep_a"), b(dir / "rn_rep_b");
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    CHECK(sa.str() == sb.str());
    CHECK(!sa.str().empty());
  }
  std::filesystem::remove(dir / "rn_rep_a");
  std::filesystem::remove(dir / "rn_rep_b");
  CHECK_THROWS_AS(emit_report(r, dir / "no_such_dir" / "x.json", ReportFormat::Json), IoError);
}
