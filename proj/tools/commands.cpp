#include "commands.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>

#include "ranknet/bench.hpp"
#include "ranknet/errors.hpp"
#include "ranknet/evaluation.hpp"
#include "ranknet/profile.hpp"
#include "run_config.hpp"

namespace ranknet::cli {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string out_path(const RunConfig& c, const char* fallback) {
  return c.out.empty() ? fallback : c.out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  f << text;
  if (!f) throw IoError("failed writing '" + path.string() + "'");
}

/// Every artifact gets the effective configuration next to it.
void echo_config(const RunConfig& c, const fs::path& artifact) {
  write_text(artifact.string() + ".config", c.to_text());
}

std::vector<LapRecord> load_data(const RunConfig& c) {
  if (c.data.empty()) throw ConfigError("--data is required");
  return ingest_csv(c.data);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// --- simulate ------------------------------------------------------------------

int cmd_simulate(const RunConfig& c, std::ostream& out) {
  const int need = c.model.context_length + c.model.prediction_length;
  if (c.synth.num_laps < need) {
    throw ConfigError("num_laps " + std::to_string(c.synth.num_laps) +
                      " is shorter than context_length + prediction_length = " +
                      std::to_string(need));
  }
  validate(c.synth);
  const auto records = synth_generate(c.synth, c.model.seed);
  const std::string path = out_path(c, "races.csv");
  write_csv(fs::path(path), records);
  echo_config(c, path);

  const auto stats = stint_stats(records);
  out << "wrote " << records.size() << " lap records for " << c.synth.num_races << " races to "
      << path << "\n";
  out << "stints by category:\n";
  for (auto cat : {StintCategory::CautionPit, StintCategory::ShortNormal, StintCategory::LongNormal}) {
    out << "  " << stint_category_name(cat) << ": " << stats.histogram[static_cast<std::size_t>(cat)]
        << "\n";
  }
  std::map<int, std::array<std::size_t, 3>> bins;
  for (const auto& st : stats.stints) ++bins[st.length / 5 * 5][static_cast<std::size_t>(st.category)];
  std::size_t widest = 1;
  for (const auto& [lo, n] : bins) widest = std::max(widest, n[0] + n[1] + n[2]);
  out << "stint length histogram (caution / short / long):\n";
  for (const auto& [lo, n] : bins) {
    char line[96];
    std::snprintf(line, sizeof line, "  %3d-%-3d %4zu %4zu %4zu  ", lo, lo + 4, n[0], n[1], n[2]);
    out << line << std::string((n[0] + n[1] + n[2]) * 50 / widest, '#') << "\n";
  }
  return kOk;
}

// --- train ---------------------------------------------------------------------

int cmd_train(RunConfig c, std::ostream& out) {
  if (c.mode == "currank") throw ModeError("currank has no trainable model");
  if (c.mode == "covariate-free") c.model.covariate_free = true;
  c.model.validate();
  const auto records = load_data(c);
  const auto ids = race_ids(records);
  const auto split = split_races(ids, c.test_races, c.validation_races);
  const auto train_records = filter_races(records, split.train);
  const auto train_frames = derive_features(train_records, c.model.shift_laps);
  const auto val_frames = derive_features(filter_races(records, split.validation), c.model.shift_laps);
  const auto& m = c.model;
  const auto train_w =
      build_windows(train_frames, m.context_length, m.prediction_length, m.window_stride, m.loss_weight);
  const auto val_w = build_windows(val_frames, m.context_length, m.prediction_length, 1, m.loss_weight);
  if (train_w.empty()) throw DataError("training races are too short for a single window");
  out << "training on " << split.train.size() << " races (" << train_w.size() << " windows), "
      << "validating on " << split.validation.size() << " (" << val_w.size() << " windows)\n";

  reset_profile();
  set_profiling_enabled(c.profile);
  const PitModel pit = train_pit_model(pit_training_set(train_records), m);
  const auto result = train_rank_model(train_w, val_w, m, [&](const EpochStats& e) {
    out << "epoch " << e.epoch << " train " << fmt(e.train_loss) << " validation "
        << fmt(e.validation_loss) << " lr " << e.learning_rate << (e.improved ? " *" : "") << "\n";
  });
  set_profiling_enabled(false);

  const std::string path = out_path(c, "model.json");
  save_checkpoint(path, Checkpoint{result.model, pit, result.history});
  echo_config(c, path);
  std::string csv = "epoch,train_loss,validation_loss,learning_rate,improved\n";
  for (const auto& e : result.history.epochs) {
    csv += std::to_string(e.epoch) + "," + fmt(e.train_loss) + "," + fmt(e.validation_loss) + "," +
           fmt(e.learning_rate) + "," + (e.improved ? "1" : "0") + "\n";
  }
  write_text(path + ".history.csv", csv);
  if (c.profile) {
    json p = collect_profile().to_json();
    write_text(path + ".profile.json", json{{"profile", p}, {"config", c.to_json()}}.dump(2) + "\n");
  }
  out << "best epoch " << result.history.best_epoch << ", checkpoint " << path << "\n";
  return kOk;
}

// --- forecast / evaluate ---------------------------------------------------------

struct Loaded {
  std::optional<Checkpoint> checkpoint;
  std::optional<ForecastMode> mode;  // empty: currank
};

Loaded load_model(const RunConfig& c) {
  Loaded l;
  if (c.mode == "currank") return l;
  if (c.checkpoint.empty()) throw ConfigError("--checkpoint is required for mode " + c.mode);
  l.checkpoint = load_checkpoint(c.checkpoint);
  l.mode = parse_forecast_mode(c.mode);
  return l;
}

int shift_laps_of(const RunConfig& c, const Loaded& l) {
  return l.checkpoint ? l.checkpoint->rank.config.shift_laps : c.model.shift_laps;
}

const RankNetConfig& model_config(const RunConfig& c, const Loaded& l) {
  return l.checkpoint ? l.checkpoint->rank.config : c.model;
}

std::vector<LapRecord> test_records(const RunConfig& c, const std::vector<LapRecord>& records) {
  const auto ids = race_ids(records);
  return filter_races(records, split_races(ids, c.test_races, c.validation_races).test);
}

int cmd_forecast(const RunConfig& c, std::ostream& out) {
  const Loaded l = load_model(c);
  const auto records = load_data(c);
  const auto tests = test_records(c, records);
  const std::string race_id = c.forecast_race.empty() ? race_ids(tests).front() : c.forecast_race;
  const std::string ids[] = {race_id};
  const auto frames = derive_features(filter_races(records, ids), shift_laps_of(c, l));
  if (frames.empty()) throw ConfigError("race '" + race_id + "' is not in the data");
  const auto& cfg = model_config(c, l);
  const int origin = c.forecast_origin > 0 ? c.forecast_origin : cfg.context_length;
  const int end = c.forecast_end > 0 ? c.forecast_end : origin + cfg.prediction_length;

  json rows;
  if (!l.mode) {
    if (end <= origin) throw RangeError("forecast end must lie after the origin");
    rows = json::array();
    for (const auto& f : currank_forecast(frames[0], origin, end - origin)) {
      for (std::size_t h = 0; h < f.ranks.size(); ++h) {
        const double r = f.ranks[h];
        rows.push_back({{"race_id", race_id},
                        {"car_id", f.car_id},
                        {"lap", origin + 1 + static_cast<int>(h)},
                        {"samples", {r}},
                        {"q10", r},
                        {"q50", r},
                        {"q90", r},
                        {"rank", static_cast<int>(r)}});
      }
    }
  } else {
    ForecastOptions o;
    o.mode = *l.mode;
    o.num_samples = c.model.num_samples;
    o.seed = c.model.seed;
    const PitModel* pit = l.checkpoint->pit ? &*l.checkpoint->pit : nullptr;
    rows = forecast_to_json(forecast(l.checkpoint->rank, pit, frames[0], origin, end, o));
  }
  const std::string path = out_path(c, "forecast.json");
  write_text(path, rows.dump() + "\n");
  echo_config(c, path);
  out << "forecast " << race_id << " laps " << origin + 1 << ".." << end << " (" << c.mode
      << ", " << rows.size() << " rows) -> " << path << "\n";
  return kOk;
}

int cmd_evaluate(const RunConfig& c, std::ostream& out) {
  const Loaded l = load_model(c);
  const auto records = load_data(c);
  const auto frames = derive_features(test_records(c, records), shift_laps_of(c, l));
  const auto& cfg = model_config(c, l);
  const int first = c.eval_first_origin > 0 ? c.eval_first_origin : cfg.context_length;

  EvalMethod method;
  if (l.checkpoint) {
    method.model = &l.checkpoint->rank;
    method.pit = l.checkpoint->pit ? &*l.checkpoint->pit : nullptr;
  }
  method.mode = l.mode;
  method.num_samples = c.model.num_samples;
  method.seed = c.model.seed;

  std::vector<EvalPoint> points;
  std::vector<StintPoint> stints;
  const RankRollout rollout = l.mode ? model_rollout(method) : currank_rollout();
  for (const auto& f : frames) {
    const auto p = rolling_points(f, method, first, c.eval_horizon, c.eval_stride);
    points.insert(points.end(), p.begin(), p.end());
    if (c.stint_task) {
      const auto s = stint_task(f, rollout, first);
      stints.insert(stints.end(), s.begin(), s.end());
    }
  }
  if (points.empty()) throw DataError("test races are too short for any forecast origin");

  json meta = {{"mode", c.mode},
               {"races", frames.size()},
               {"horizon", c.eval_horizon},
               {"stride", c.eval_stride},
               {"first_origin", first},
               {"config", c.to_json()}};
  const auto report = build_report(points, pit_laps_by_race(frames), stints, meta, {c.rho10});
  const bool csv = c.report_format == "csv";
  const std::string path = out_path(c, csv ? "report.csv" : "report.json");
  emit_report(report, path, csv ? ReportFormat::Csv : ReportFormat::Json);
  echo_config(c, path);
  for (const auto& s : report.slices) {
    out << s.slice << " (" << s.points << " points)";
    for (const auto& [name, v] : s.metrics) out << " " << name << "=" << (v ? fmt(*v) : "NA");
    out << "\n";
  }
  return kOk;
}

// --- benchmarks ------------------------------------------------------------------

std::vector<TrainingWindow> bench_data(const RunConfig& c) {
  std::vector<LapRecord> records;
  if (c.data.empty()) {
    validate(c.synth);
    records = synth_generate(c.synth, c.model.seed);
  } else {
    records = ingest_csv(c.data);
  }
  const auto frames = derive_features(records, c.model.shift_laps);
  auto w = build_windows(frames, c.model.context_length, c.model.prediction_length,
                         c.model.window_stride, c.model.loss_weight);
  if (w.empty()) throw DataError("no training windows for the benchmark");
  return w;
}

int cmd_bench_throughput(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const auto windows = bench_data(c);
  BenchOptions o;
  o.batch_sizes.assign(c.bench_batches.begin(), c.bench_batches.end());
  o.warmup_steps = static_cast<std::size_t>(c.bench_warmup);
  o.timed_steps = static_cast<std::size_t>(c.bench_steps);
  o.profile_steps = static_cast<std::size_t>(c.bench_profile_steps);
  const auto report = bench_throughput(c.model, windows, o);
  if (report.replicated) {
    err << "warning: " << windows.size() << " windows replicated to " << report.windows
        << " to fill the largest batch\n";
  }
  out << "batch  us/sample  MatMul%  kernels%\n";
  for (const auto& p : report.points) {
    char line[96];
    std::snprintf(line, sizeof line, "%5zu  %9.1f  %7.1f  %8.1f\n", p.batch_size, p.us_per_sample,
                  p.profile.percent(OpClass::MatMul), p.profile.kernel_percent());
    out << line;
  }
  out << "speedup " << report.points.front().batch_size << " -> " << report.points.back().batch_size
      << ": " << report.speedup() << "x on " << report.threads << " thread(s), "
      << report.hardware_cores << " hardware core(s), " << report.wallclock_seconds << " s\n";
  out << "note: " << kLargeBatchCaveat << "\n";
  json j = report.to_json();
  j["config"] = c.to_json();
  const std::string path = out_path(c, "bench_throughput.json");
  write_text(path, j.dump(2) + "\n");
  echo_config(c, path);
  return kOk;
}

int cmd_bench_opbreakdown(const RunConfig& c, std::ostream& out) {
  const auto windows = bench_data(c);
  const auto b = bench_opbreakdown(c.model, windows, static_cast<std::size_t>(c.model.batch_size),
                                   static_cast<std::size_t>(c.bench_samples),
                                   static_cast<std::size_t>(c.bench_warmup));
  out << "batch " << b.batch_size << ", " << b.steps << " steps, " << b.samples << " samples\n";
  out << "class     calls       ms      %\n";
  for (auto cls : kAllOpClasses) {
    const auto& s = b.profile[cls];
    char line[96];
    std::snprintf(line, sizeof line, "%-7s %8llu %9.2f %6.1f\n", std::string(op_class_name(cls)).c_str(),
                  static_cast<unsigned long long>(s.calls), static_cast<double>(s.walltime_ns) / 1e6,
                  b.profile.percent(cls));
    out << line;
  }
  out << "kernel classes " << b.profile.kernel_percent() << "%\n";
  json j = b.to_json();
  j["config"] = c.to_json();
  const std::string path = out_path(c, "bench_opbreakdown.json");
  write_text(path, j.dump(2) + "\n");
  echo_config(c, path);
  return kOk;
}

}  // namespace

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Probabilistic rank-position forecasting for lap-based races"};
  app.require_subcommand(1);

  std::string config_file, data, out_file, mode, checkpoint;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  bool profile = false;
  std::vector<std::string> sets;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_file, "key = value config file");
    sub->add_option("--seed", seed, "master seed");
    sub->add_option("--data", data, "race-data CSV");
    sub->add_option("--out", out_file, "output path");
    sub->add_option("--mode", mode, "mlp | oracle | covariate-free | currank");
    sub->add_option("--checkpoint", checkpoint, "checkpoint JSON");
    sub->add_option("--epochs", epochs, "maximum training epochs");
    sub->add_flag("--profile", profile, "record per-kernel walltime");
    sub->add_option("--set", sets, "override a config key (key=value)");
  };
  std::map<std::string, CLI::App*> subs;
  for (const char* name : {"simulate", "train", "forecast", "evaluate", "bench-throughput",
                           "bench-opbreakdown"}) {
    subs[name] = app.add_subcommand(name);
    common(subs[name]);
  }
  subs["simulate"]->description("generate synthetic races as CSV");
  subs["train"]->description("train the pit and rank models, write a checkpoint");
  subs["forecast"]->description("forecast one race from a checkpoint");
  subs["evaluate"]->description("rolling forecasts over the test races, scored per lap slice");
  subs["bench-throughput"]->description("training speed per sample across batch sizes");
  subs["bench-opbreakdown"]->description("instrumented walltime per kernel class");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  }

  try {
    RunConfig c;
    if (!config_file.empty()) c.apply_file(config_file);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      c.set(s.substr(0, eq), s.substr(eq + 1));
    }
    if (seed) c.set("seed", std::to_string(*seed));
    if (epochs) c.set("max_epochs", std::to_string(*epochs));
    if (!data.empty()) c.data = data;
    if (!out_file.empty()) c.out = out_file;
    if (!checkpoint.empty()) c.checkpoint = checkpoint;
    if (!mode.empty()) c.set("mode", mode);
    if (profile) c.profile = true;

    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "simulate") return cmd_simulate(c, out);
    if (name == "train") return cmd_train(c, out);
    if (name == "forecast") return cmd_forecast(c, out);
    if (name == "evaluate") return cmd_evaluate(c, out);
    if (name == "bench-throughput") return cmd_bench_throughput(c, out, err);
    return cmd_bench_opbreakdown(c, out);
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    return kDivergence;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << "\n";
    return kDivergence;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  } catch (const MigrationError& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  } catch (const MetricError& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
}

}  // namespace ranknet::cli
