#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <tuple>

#include "ranknet/errors.hpp"
#include "ranknet/ranknet.hpp"

namespace ranknet {

namespace {

struct CarStatus {
  std::vector<int> track;
  std::vector<int> pits;
};

using CarKey = std::pair<std::string, int>;

std::map<CarKey, CarStatus> status_by_car(std::span<const LapRecord> records) {
  std::map<CarKey, std::vector<const LapRecord*>> rows;
  for (const auto& r : records) rows[{r.race_id, r.car_id}].push_back(&r);
  std::map<CarKey, CarStatus> out;
  for (auto& [key, list] : rows) {
    std::sort(list.begin(), list.end(), [](auto* a, auto* b) { return a->lap < b->lap; });
    CarStatus s;
    for (const auto* r : list) {
      s.track.push_back(r->track_status);
      s.pits.push_back(r->lap_status);
    }
    out.emplace(key, std::move(s));
  }
  return out;
}

/// Caution laps since the last pit, at lap `lap` (0 is the virtual start).
double caution_at(const std::vector<int>& caution, int lap) {
  return lap <= 0 ? 0.0 : caution[static_cast<std::size_t>(lap - 1)];
}

template <typename Fn>
void for_each_long_stint(std::span<const LapRecord> records, Fn&& fn) {
  const auto stats = stint_stats(records);
  const auto cars = status_by_car(records);
  std::map<CarKey, std::vector<int>> caution;
  for (const auto& [key, s] : cars) caution[key] = caution_laps_series(s.track, s.pits);
  for (const auto& st : stats.stints) {
    if (st.category != StintCategory::LongNormal) continue;
    fn(st, caution.at({st.race_id, st.car_id}));
  }
}

}  // namespace

std::vector<PitSample> pit_training_set(std::span<const LapRecord> records) {
  std::vector<PitSample> out;
  for_each_long_stint(records, [&](const StintSummary& st, const std::vector<int>& caution) {
    for (int age = 0; age < st.length; ++age) {
      out.push_back({caution_at(caution, st.start_lap + age), static_cast<double>(age),
                     static_cast<double>(st.length)});
    }
  });
  return out;
}

int pit_offset(double draw) {
  if (std::isnan(draw)) throw DomainError("pit_offset: NaN stint length");
  return static_cast<int>(std::lround(std::clamp(draw, 1.0, static_cast<double>(kStintCap))));
}

std::vector<PitModel::Prediction> PitModel::predict(std::span<const double> caution_laps,
                                                    std::span<const double> pit_age) const {
  if (caution_laps.size() != pit_age.size()) throw ShapeError("PitModel::predict: input lengths");
  Matrix x(caution_laps.size(), 2);
  for (std::size_t i = 0; i < caution_laps.size(); ++i) {
    x(i, 0) = (caution_laps[i] - input_mean[0]) / input_std[0];
    x(i, 1) = (pit_age[i] - input_mean[1]) / input_std[1];
  }
  const auto run = mlp_forward(mlp, x);
  std::vector<Prediction> out(x.rows());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = {target_mean + target_std * run.out.mu(i, 0), target_std * run.out.sigma(i, 0)};
  }
  return out;
}

PitModel::Prediction PitModel::predict(double caution_laps, double pit_age) const {
  const double c[1] = {caution_laps};
  const double a[1] = {pit_age};
  return predict(c, a).front();
}

PitModel train_pit_model(std::span<const PitSample> samples, const RankNetConfig& cfg) {
  cfg.validate();
  if (samples.empty()) throw DataError("no complete long-normal stints to fit the pit model on");
  const std::size_t n = samples.size();

  PitModel m;
  auto moments = [&](auto get, double& mean, double& sd) {
    double s = 0.0;
    for (const auto& p : samples) s += get(p);
    mean = s / static_cast<double>(n);
    double v = 0.0;
    for (const auto& p : samples) v += (get(p) - mean) * (get(p) - mean);
    sd = std::sqrt(v / static_cast<double>(n));
    if (sd <= 1e-12) sd = 1.0;
  };
  moments([](const PitSample& p) { return p.caution_laps; }, m.input_mean[0], m.input_std[0]);
  moments([](const PitSample& p) { return p.pit_age; }, m.input_mean[1], m.input_std[1]);
  moments([](const PitSample& p) { return p.stint_length; }, m.target_mean, m.target_std);

  std::vector<std::size_t> hidden(cfg.pit_hidden.begin(), cfg.pit_hidden.end());
  Rng init = make_rng(cfg.seed, Stream::Init, {2});
  m.mlp = MlpParams::init(2, hidden, init);
  MlpParams grads = m.mlp.zeros_like();
  ParamRefs p_refs, g_refs;
  m.mlp.append_params("pit", p_refs);
  grads.append_params("pit", g_refs);
  AdamState adam;
  adam.learning_rate = cfg.pit_learning_rate;

  const auto B = static_cast<std::size_t>(cfg.pit_batch_size);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 1; epoch <= cfg.pit_epochs; ++epoch) {
    Rng rng = make_rng(cfg.seed, Stream::Pit, {static_cast<std::uint64_t>(epoch)});
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    for (std::size_t start = 0; start < n; start += B) {
      const std::size_t b = std::min(B, n - start);
      Matrix x(b, 2);
      std::vector<double> z(b), w(b, 1.0 / static_cast<double>(b));
      for (std::size_t r = 0; r < b; ++r) {
        const auto& s = samples[order[start + r]];
        x(r, 0) = (s.caution_laps - m.input_mean[0]) / m.input_std[0];
        x(r, 1) = (s.pit_age - m.input_mean[1]) / m.input_std[1];
        z[r] = (s.stint_length - m.target_mean) / m.target_std;
      }
      for (auto& g : g_refs) g.value->fill(0.0);
      const auto run = mlp_forward(m.mlp, x);
      const double loss = gaussian_nll(z, run.out.mu.values(), run.out.sigma.values(), w);
      if (!std::isfinite(loss)) {
        throw DivergenceError("non-finite pit model loss in epoch " + std::to_string(epoch),
                              derive_seed(cfg.seed, {static_cast<std::uint64_t>(epoch), start}));
      }
      Matrix d_mu(b, 1), d_sigma(b, 1);
      gaussian_nll_grad(z, run.out.mu.values(), run.out.sigma.values(), w, d_mu.values(),
                        d_sigma.values());
      mlp_backward(m.mlp, run, d_mu, d_sigma, grads);
      adam_step(p_refs, g_refs, adam);
    }
  }
  return m;
}

namespace {

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0;

  void add(bool predicted, bool actual) {
    if (predicted && actual) ++tp;
    if (predicted && !actual) ++fp;
    if (!predicted && actual) ++fn;
  }
  double recall() const { return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn); }
  double f1() const {
    const auto d = 2 * tp + fp + fn;
    return d == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(d);
  }
};

}  // namespace

PitEvaluation evaluate_pit_model(const PitModel& model, std::span<const LapRecord> records,
                                 double band) {
  if (!(band > 0.0 && band < 1.0)) throw DomainError("pit evaluation band must lie in (0, 1)");
  std::vector<double> probe_c, probe_a;
  std::vector<double> lap_c, lap_a;
  std::vector<std::tuple<int, int, int>> laps;  // last pit, issue lap, actual pit
  std::size_t stints = 0;
  for_each_long_stint(records, [&](const StintSummary& st, const std::vector<int>& caution) {
    ++stints;
    for (int age = 0; age < st.length; ++age) {
      const int lap = st.start_lap + age;
      if (age <= kShortStintMax) {
        probe_c.push_back(caution_at(caution, lap));
        probe_a.push_back(age);
      }
      lap_c.push_back(caution_at(caution, lap));
      lap_a.push_back(age);
      laps.emplace_back(st.start_lap, lap, st.end_lap);
    }
  });
  if (stints == 0) throw MetricError("no complete long-normal stints to evaluate");

  PitEvaluation ev;
  ev.pits = stints;
  ev.laps = laps.size();
  const auto probe = model.predict(probe_c, probe_a);
  double s = 0.0;
  for (const auto& p : probe) s += p.mu;
  ev.mean_prediction = s / static_cast<double>(probe.size());

  // P(next pit <= A + 2) under the Gaussian offset; offsets that fall at or
  // before A count as a pit at A + 1.
  const auto predicted = model.predict(lap_c, lap_a);
  Confusion with_band, point;
  for (std::size_t i = 0; i < laps.size(); ++i) {
    const auto [last, issue, actual] = laps[i];
    const bool truth = actual - issue <= 2;
    const double limit = issue + 2.5 - last;
    const auto& p = predicted[i];
    const double prob = limit >= 50.0 ? 1.0 : 0.5 * std::erfc(-(limit - p.mu) / (p.sigma * std::sqrt(2.0)));
    with_band.add(prob >= band, truth);
    point.add(std::max(last + pit_offset(p.mu), issue + 1) <= issue + 2, truth);
  }
  ev.recall_2laps = with_band.recall();
  ev.f1_2laps = with_band.f1();
  ev.point_recall_2laps = point.recall();
  ev.point_f1_2laps = point.f1();
  return ev;
}

}  // namespace ranknet
