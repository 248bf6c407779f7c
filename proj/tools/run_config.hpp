#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ranknet/race_data.hpp"
#include "ranknet/ranknet.hpp"

namespace ranknet::cli {

/// Everything a command reads: model, generator and run options in one flat
/// key space. Keys are the field names.
struct RunConfig {
  RankNetConfig model;
  SynthConfig synth;

  std::string data;
  std::string checkpoint;
  std::string out;
  std::string mode = "mlp";  // mlp | oracle | covariate-free | currank
  bool profile = false;

  int test_races = 4;
  int validation_races = 2;

  int eval_horizon = 2;
  int eval_stride = 1;
  int eval_first_origin = 0;  // 0: the context length
  bool stint_task = false;
  bool rho10 = false;
  std::string report_format = "json";

  std::string forecast_race;  // empty: first test race
  int forecast_origin = 0;    // 0: the context length
  int forecast_end = 0;       // 0: origin + prediction length

  std::vector<int> bench_batches = {32, 64, 128, 256, 640, 1600, 3200};
  int bench_warmup = 3;
  int bench_steps = 10;
  int bench_profile_steps = 2;
  int bench_samples = 640;

  RunConfig();

  nlohmann::json to_json() const;
  /// Unknown keys and mistyped values raise ConfigError.
  static RunConfig from_json(const nlohmann::json& j);

  /// Parses `value` with the type of the key's current value.
  void set(const std::string& key, const std::string& value);
  /// `key = value` lines; blank lines and lines starting with '#' are skipped.
  void apply_file(const std::filesystem::path& path);
  /// The effective configuration as `key = value` lines, sorted by key.
  std::string to_text() const;
};

}  // namespace ranknet::cli
