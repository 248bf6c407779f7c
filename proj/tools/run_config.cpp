#include "run_config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "ranknet/errors.hpp"

namespace ranknet::cli {

namespace {

using json = nlohmann::json;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_integral(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': '" + v + "' is not an integer");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (v.empty() || used != v.size()) {
    throw ConfigError("config key '" + key + "': '" + v + "' is not a number");
  }
  return out;
}

json parse_like(const std::string& key, const json& current, const std::string& raw) {
  const std::string v = trim(raw);
  switch (current.type()) {
    case json::value_t::boolean:
      if (v == "true" || v == "1") return true;
      if (v == "false" || v == "0") return false;
      throw ConfigError("config key '" + key + "': '" + v + "' is not a boolean");
    case json::value_t::number_unsigned:
      return parse_integral<std::uint64_t>(key, v);
    case json::value_t::number_integer:
      return parse_integral<std::int64_t>(key, v);
    case json::value_t::number_float:
      return parse_double(key, v);
    case json::value_t::array: {
      json out = json::array();
      std::stringstream ss(v);
      std::string item;
      while (std::getline(ss, item, ',')) out.push_back(parse_integral<std::int64_t>(key, trim(item)));
      return out;
    }
    default:
      return v;
  }
}

json synth_to_json(const SynthConfig& s) {
  return {{"num_races", s.num_races},
          {"num_cars", s.num_cars},
          {"num_laps", s.num_laps},
          {"race_prefix", s.race_prefix},
          {"base_lap_time", s.base_lap_time},
          {"speed_spread", s.speed_spread},
          {"lap_time_noise", s.lap_time_noise},
          {"pit_penalty", s.pit_penalty},
          {"caution_slowdown", s.caution_slowdown},
          {"caution_rate", s.caution_rate},
          {"caution_min_laps", s.caution_min_laps},
          {"caution_max_laps", s.caution_max_laps},
          {"caution_pit_prob", s.caution_pit_prob},
          {"caution_pit_min_age", s.caution_pit_min_age},
          {"stint_mean", s.stint_mean},
          {"stint_sd", s.stint_sd},
          {"stint_min", s.stint_min},
          {"stint_max", s.stint_max},
          {"short_stint_prob", s.short_stint_prob},
          {"short_stint_min", s.short_stint_min},
          {"auto_pits", s.auto_pits}};
}

template <typename T>
void read(const json& j, const char* key, T& field) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  const bool ok = std::is_same_v<T, bool>          ? v.is_boolean()
                  : std::is_same_v<T, std::string> ? v.is_string()
                  : std::is_floating_point_v<T>    ? v.is_number()
                  : std::is_integral_v<T>          ? v.is_number_integer()
                                                   : v.is_array();
  if (!ok) throw ConfigError(std::string("config key '") + key + "' has the wrong type");
  v.get_to(field);
}

}  // namespace

RunConfig::RunConfig() { synth.num_races = 20; }

json RunConfig::to_json() const {
  json j = model.to_json();
  j.update(synth_to_json(synth));
  j.update(json{{"data", data},
                {"checkpoint", checkpoint},
                {"out", out},
                {"mode", mode},
                {"profile", profile},
                {"test_races", test_races},
                {"validation_races", validation_races},
                {"eval_horizon", eval_horizon},
                {"eval_stride", eval_stride},
                {"eval_first_origin", eval_first_origin},
                {"stint_task", stint_task},
                {"rho10", rho10},
                {"report_format", report_format},
                {"forecast_race", forecast_race},
                {"forecast_origin", forecast_origin},
                {"forecast_end", forecast_end},
                {"bench_batches", bench_batches},
                {"bench_warmup", bench_warmup},
                {"bench_steps", bench_steps},
                {"bench_profile_steps", bench_profile_steps},
                {"bench_samples", bench_samples}});
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("run config must be an object");
  RunConfig c;
  const json defaults = c.to_json();
  const json model_keys = RankNetConfig{}.to_json();
  json model = json::object();
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw ConfigError("unknown config key '" + key + "'");
    if (model_keys.contains(key)) model[key] = value;
  }
  c.model = RankNetConfig::from_json(model);

  auto& s = c.synth;
  read(j, "num_races", s.num_races);
  read(j, "num_cars", s.num_cars);
  read(j, "num_laps", s.num_laps);
  read(j, "race_prefix", s.race_prefix);
  read(j, "base_lap_time", s.base_lap_time);
  read(j, "speed_spread", s.speed_spread);
  read(j, "lap_time_noise", s.lap_time_noise);
  read(j, "pit_penalty", s.pit_penalty);
  read(j, "caution_slowdown", s.caution_slowdown);
  read(j, "caution_rate", s.caution_rate);
  read(j, "caution_min_laps", s.caution_min_laps);
  read(j, "caution_max_laps", s.caution_max_laps);
  read(j, "caution_pit_prob", s.caution_pit_prob);
  read(j, "caution_pit_min_age", s.caution_pit_min_age);
  read(j, "stint_mean", s.stint_mean);
  read(j, "stint_sd", s.stint_sd);
  read(j, "stint_min", s.stint_min);
  read(j, "stint_max", s.stint_max);
  read(j, "short_stint_prob", s.short_stint_prob);
  read(j, "short_stint_min", s.short_stint_min);
  read(j, "auto_pits", s.auto_pits);
  s.min_laps = c.model.context_length + c.model.prediction_length;

  read(j, "data", c.data);
  read(j, "checkpoint", c.checkpoint);
  read(j, "out", c.out);
  read(j, "mode", c.mode);
  read(j, "profile", c.profile);
  read(j, "test_races", c.test_races);
  read(j, "validation_races", c.validation_races);
  read(j, "eval_horizon", c.eval_horizon);
  read(j, "eval_stride", c.eval_stride);
  read(j, "eval_first_origin", c.eval_first_origin);
  read(j, "stint_task", c.stint_task);
  read(j, "rho10", c.rho10);
  read(j, "report_format", c.report_format);
  read(j, "forecast_race", c.forecast_race);
  read(j, "forecast_origin", c.forecast_origin);
  read(j, "forecast_end", c.forecast_end);
  read(j, "bench_batches", c.bench_batches);
  read(j, "bench_warmup", c.bench_warmup);
  read(j, "bench_steps", c.bench_steps);
  read(j, "bench_profile_steps", c.bench_profile_steps);
  read(j, "bench_samples", c.bench_samples);

  if (c.mode != "mlp" && c.mode != "oracle" && c.mode != "covariate-free" && c.mode != "currank") {
    throw ConfigError("mode must be mlp, oracle, covariate-free or currank, got '" + c.mode + "'");
  }
  if (c.report_format != "json" && c.report_format != "csv") {
    throw ConfigError("report_format must be json or csv");
  }
  if (c.eval_horizon < 1 || c.eval_stride < 1) throw ConfigError("eval_horizon and eval_stride must be >= 1");
  if (c.bench_batches.empty()) throw ConfigError("bench_batches must not be empty");
  for (int b : c.bench_batches)
    if (b < 1) throw ConfigError("bench_batches entries must be >= 1");
  if (c.bench_warmup < 0 || c.bench_steps < 1 || c.bench_profile_steps < 0 || c.bench_samples < 1) {
    throw ConfigError("bench step counts out of range");
  }
  return c;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  json j = to_json();
  if (!j.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  j[key] = parse_like(key, j[key], value);
  *this = from_json(j);
}

void RunConfig::apply_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(n) + ": expected 'key = value'");
    }
    set(trim(t.substr(0, eq)), t.substr(eq + 1));
  }
}

std::string RunConfig::to_text() const {
  std::string out;
  const json j = to_json();
  for (const auto& [key, value] : j.items()) {
    out += key + " = ";
    if (value.is_string()) {
      out += value.get<std::string>();
    } else if (value.is_array()) {
      for (std::size_t i = 0; i < value.size(); ++i) out += (i ? "," : "") + value[i].dump();
    } else {
      out += value.dump();
    }
    out += '\n';
  }
  return out;
}

}  // namespace ranknet::cli
