#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ranknet/errors.hpp"
#include "ranknet/ranknet.hpp"

namespace ranknet {

namespace {

using json = nlohmann::json;

json matrix_to_json(const Matrix& m) {
  return {{"shape", {m.rows(), m.cols()}}, {"data", m.storage()}};
}

void matrix_from_json(const json& j, const std::string& name, Matrix& into) {
  if (!j.contains(name)) throw ParseError("checkpoint is missing parameter '" + name + "'");
  const auto& e = j.at(name);
  std::vector<std::size_t> shape;
  std::vector<double> data;
  try {
    shape = e.at("shape").get<std::vector<std::size_t>>();
    data = e.at("data").get<std::vector<double>>();
  } catch (const json::exception& ex) {
    throw ParseError("checkpoint parameter '" + name + "': " + ex.what());
  }
  if (shape.size() != 2 || shape[0] != into.rows() || shape[1] != into.cols()) {
    throw ParseError("checkpoint parameter '" + name + "' has the wrong shape");
  }
  into = Matrix(shape[0], shape[1], std::move(data));
}

PitModel pit_skeleton(const RankNetConfig& cfg) {
  PitModel m;
  std::vector<std::size_t> hidden(cfg.pit_hidden.begin(), cfg.pit_hidden.end());
  Rng rng(0);
  m.mlp = MlpParams::init(2, hidden, rng);
  return m;
}

}  // namespace

json checkpoint_to_json(const Checkpoint& c) {
  json j;
  j["schema_version"] = kCheckpointSchemaVersion;
  j["config"] = c.rank.config.to_json();
  j["scaler"] = c.rank.scaler.to_json();
  json params = json::object();
  RankParams rank = c.rank.params;
  for (const auto& p : rank.refs()) params[p.name] = matrix_to_json(*p.value);
  if (c.pit) {
    PitModel pit = *c.pit;
    ParamRefs refs;
    pit.mlp.append_params("pit", refs);
    for (const auto& p : refs) params[p.name] = matrix_to_json(*p.value);
    j["pit_scaling"] = {{"input_mean", {pit.input_mean[0], pit.input_mean[1]}},
                        {"input_std", {pit.input_std[0], pit.input_std[1]}},
                        {"target_mean", pit.target_mean},
                        {"target_std", pit.target_std}};
  }
  j["params"] = std::move(params);
  json epochs = json::array();
  for (const auto& e : c.history.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"validation_loss", e.validation_loss},
                      {"learning_rate", e.learning_rate},
                      {"improved", e.improved}});
  }
  j["history"] = {{"best_epoch", c.history.best_epoch},
                  {"best_validation_loss", c.history.best_validation_loss},
                  {"epochs", std::move(epochs)}};
  return j;
}

Checkpoint checkpoint_from_json(const json& j) {
  if (!j.is_object() || !j.contains("schema_version")) {
    throw ParseError("checkpoint has no schema_version");
  }
  if (!j.at("schema_version").is_number_integer()) throw ParseError("schema_version must be an integer");
  const int version = j.at("schema_version").get<int>();
  if (version != kCheckpointSchemaVersion) {
    throw MigrationError("checkpoint schema version " + std::to_string(version) +
                         " is not supported (expected " +
                         std::to_string(kCheckpointSchemaVersion) + ")");
  }
  for (const char* key : {"config", "scaler", "params"}) {
    if (!j.contains(key)) throw ParseError(std::string("checkpoint is missing '") + key + "'");
  }
  Checkpoint c;
  try {
    c.rank.config = RankNetConfig::from_json(j.at("config"));
    c.rank.config.validate();
  } catch (const ConfigError& e) {
    throw ParseError(std::string("checkpoint config: ") + e.what());
  }
  c.rank.scaler = Scaler::from_json(j.at("scaler"));
  const auto& params = j.at("params");
  c.rank.params = RankParams::init(c.rank.config, 0);
  for (auto& p : c.rank.params.refs()) matrix_from_json(params, p.name, *p.value);

  try {
    if (j.contains("pit_scaling")) {
      PitModel pit = pit_skeleton(c.rank.config);
      ParamRefs refs;
      pit.mlp.append_params("pit", refs);
      for (auto& p : refs) matrix_from_json(params, p.name, *p.value);
      const auto& s = j.at("pit_scaling");
      const auto mean = s.at("input_mean").get<std::vector<double>>();
      const auto sd = s.at("input_std").get<std::vector<double>>();
      if (mean.size() != 2 || sd.size() != 2) throw ParseError("pit_scaling needs two inputs");
      pit.input_mean[0] = mean[0];
      pit.input_mean[1] = mean[1];
      pit.input_std[0] = sd[0];
      pit.input_std[1] = sd[1];
      pit.target_mean = s.at("target_mean").get<double>();
      pit.target_std = s.at("target_std").get<double>();
      c.pit = std::move(pit);
    }
    if (j.contains("history")) {
      const auto& h = j.at("history");
      c.history.best_epoch = h.at("best_epoch").get<int>();
      c.history.best_validation_loss = h.at("best_validation_loss").get<double>();
      for (const auto& e : h.at("epochs")) {
        c.history.epochs.push_back({e.at("epoch").get<int>(), e.at("train_loss").get<double>(),
                                    e.at("validation_loss").get<double>(),
                                    e.at("learning_rate").get<double>(),
                                    e.at("improved").get<bool>()});
      }
    }
  } catch (const json::exception& ex) {
    throw ParseError(std::string("checkpoint: ") + ex.what());
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
  out << checkpoint_to_json(c).dump() << '\n';
  if (!out) throw IoError("failed writing checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read checkpoint '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  json j;
  try {
    j = json::parse(buffer.str());
  } catch (const json::parse_error& e) {
    throw ParseError("checkpoint '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace ranknet
