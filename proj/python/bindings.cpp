#include <sstream>
#include <string>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "commands.hpp"
#include "ranknet/errors.hpp"
#include "ranknet/evaluation.hpp"
#include "ranknet/quantile.hpp"
#include "ranknet/race_data.hpp"
#include "ranknet/ranknet.hpp"
#include "run_config.hpp"

namespace py = pybind11;
using namespace ranknet;

namespace {

py::tuple run_cli(const std::vector<std::string>& args) {
  std::vector<std::string> owned{"ranknet"};
  owned.insert(owned.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : owned) argv.push_back(a.data());
  std::ostringstream out, err;
  int code = 0;
  {
    py::gil_scoped_release release;
    code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  }
  return py::make_tuple(code, out.str(), err.str());
}

std::string simulate_csv(std::uint64_t seed, const std::map<std::string, std::string>& overrides) {
  cli::RunConfig c;
  for (const auto& [k, v] : overrides) c.set(k, v);
  const auto records = synth_generate(c.synth, seed);
  std::ostringstream s;
  write_csv(s, records);
  return s.str();
}

std::vector<EvalPoint> points_of(const std::vector<double>& actual,
                                 const std::vector<std::vector<double>>& samples) {
  if (actual.size() != samples.size())
    throw DomainError("actual and samples differ in length");
  std::vector<EvalPoint> pts(actual.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    pts[i].actual = actual[i];
    pts[i].samples = samples[i];
  }
  return pts;
}

struct Model {
  Checkpoint checkpoint;

  std::size_t parameter_count() { return ranknet::parameter_count(checkpoint.rank.params.refs()); }

  std::string forecast(const std::string& csv_path, const std::string& race_id, int origin,
                       int end, const std::string& mode, int num_samples, std::uint64_t seed) {
    const auto records = ingest_csv(csv_path);
    const std::string ids[] = {race_id};
    const auto frames =
        derive_features(filter_races(records, ids), checkpoint.rank.config.shift_laps);
    if (frames.empty()) throw ConfigError("race '" + race_id + "' is not in the data");
    ForecastOptions o;
    o.mode = parse_forecast_mode(mode);
    o.num_samples = num_samples;
    o.seed = seed;
    const PitModel* pit = checkpoint.pit ? &*checkpoint.pit : nullptr;
    ForecastResult r;
    {
      py::gil_scoped_release release;
      r = ranknet::forecast(checkpoint.rank, pit, frames[0], origin, end, o);
    }
    return forecast_to_json(r).dump();
  }
};

}  // namespace

PYBIND11_MODULE(_ranknet, m) {
  m.doc() = "Rank forecasting for multi-car races";

  py::register_exception<Error>(m, "RankNetError", PyExc_RuntimeError);

  m.def("run_cli", &run_cli, py::arg("args"),
        "Runs the command-line tool in process; returns (exit code, stdout, stderr).");
  m.def("simulate_csv", &simulate_csv, py::arg("seed"),
        py::arg("overrides") = std::map<std::string, std::string>{},
        "Synthetic race log as CSV text. Overrides use the configuration keys.");

  m.def("quantile", [](const std::vector<double>& v, double rho) {
    if (v.empty()) throw DomainError("quantile of an empty sample");
    return quantile_nearest_rank(v, rho);
  }, py::arg("values"), py::arg("rho"));
  m.def("rho_risk", [](const std::vector<double>& actual,
                       const std::vector<std::vector<double>>& samples, double rho) {
    const auto pts = points_of(actual, samples);
    return rho_risk(pts, rho);
  }, py::arg("actual"), py::arg("samples"), py::arg("rho"));
  m.def("mae", [](const std::vector<double>& actual, const std::vector<double>& forecast) {
    if (actual.size() != forecast.size()) throw DomainError("actual and forecast differ in length");
    std::vector<EvalPoint> pts(actual.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      pts[i].actual = actual[i];
      pts[i].forecast = forecast[i];
    }
    return mae(pts);
  }, py::arg("actual"), py::arg("forecast"));

  py::class_<Model>(m, "Model")
      .def_static("load", [](const std::string& path) { return Model{load_checkpoint(path)}; },
                  py::arg("path"))
      .def_property_readonly("parameter_count", &Model::parameter_count)
      .def_property_readonly("config_json",
                             [](const Model& s) { return s.checkpoint.rank.config.to_json().dump(); })
      .def_property_readonly("has_pit_model", [](const Model& s) { return s.checkpoint.pit.has_value(); })
      .def("forecast_json", &Model::forecast, py::arg("csv_path"), py::arg("race_id"),
           py::arg("origin"), py::arg("end"), py::arg("mode") = "mlp", py::arg("num_samples") = 100,
           py::arg("seed") = 1);
}
