/* Copyright 2026 The rtdetr-desk Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "rtdetr/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rtdetr/checkpoint.hpp"
#include "rtdetr/errors.hpp"
#include "rtdetr/selfcheck.hpp"

namespace rtdetr::cli {

using json = nlohmann::json;

namespace {

json parse_object(std::string_view text, const std::string& what) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(what + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError(what + " must be a JSON object");
  return j;
}

// Calls fn(key, value) for each member; wraps JSON type errors with the
// dotted key.
template <typename Fn>
void for_each_key(const json& j, const std::string& section, Fn fn) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string dotted = section + "." + it.key();
    try {
      if (!fn(it.key(), *it)) throw ConfigError("unknown key '" + dotted + "'");
    } catch (const json::exception& e) {
      throw ConfigError("bad value for '" + dotted + "': " + e.what());
    }
  }
}

void merge_train(TrainConfig& c, const json& j) {
  for_each_key(j, "train", [&](const std::string& key, const json& v) {
    if (key == "epochs") c.epochs = v.get<std::size_t>();
    else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
    else if (key == "learning_rate") c.learning_rate = v.get<double>();
    else if (key == "optimizer") c.optimizer = optimizer_from_string(v.get<std::string>());
    else if (key == "momentum") c.momentum = v.get<double>();
    else if (key == "beta1") c.beta1 = v.get<double>();
    else if (key == "beta2") c.beta2 = v.get<double>();
    else if (key == "epsilon") c.epsilon = v.get<double>();
    else if (key == "grad_clip_norm") c.grad_clip_norm = v.get<double>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else if (key == "loss") {
      if (!v.is_object()) throw ConfigError("'train.loss' must be an object");
      for_each_key(v, "train.loss", [&](const std::string& k, const json& x) {
        if (k == "lambda_cls") c.loss.lambda_cls = x.get<double>();
        else if (k == "lambda_l1") c.loss.lambda_l1 = x.get<double>();
        else if (k == "lambda_giou") c.loss.lambda_giou = x.get<double>();
        else if (k == "noobj_weight") c.loss.noobj_weight = x.get<double>();
        else return false;
        return true;
      });
    } else if (key == "match") {
      if (!v.is_object()) throw ConfigError("'train.match' must be an object");
      for_each_key(v, "train.match", [&](const std::string& k, const json& x) {
        if (k == "alpha") c.match.alpha = x.get<double>();
        else if (k == "beta") c.match.beta = x.get<double>();
        else return false;
        return true;
      });
    } else {
      return false;
    }
    return true;
  });
}

void merge_paths(Paths& p, const json& j) {
  for_each_key(j, "paths", [&](const std::string& key, const json& v) {
    if (key == "data_dir") p.data_dir = v.get<std::string>();
    else if (key == "out_dir") p.out_dir = v.get<std::string>();
    else if (key == "checkpoint") p.checkpoint = v.get<std::string>();
    else return false;
    return true;
  });
}

json train_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"optimizer", to_string(c.optimizer)},
          {"momentum", c.momentum},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"epsilon", c.epsilon},
          {"grad_clip_norm", c.grad_clip_norm},
          {"seed", c.seed},
          {"loss",
           {{"lambda_cls", c.loss.lambda_cls},
            {"lambda_l1", c.loss.lambda_l1},
            {"lambda_giou", c.loss.lambda_giou},
            {"noobj_weight", c.loss.noobj_weight}}},
          {"match", {{"alpha", c.match.alpha}, {"beta", c.match.beta}}}};
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

}  // namespace

std::filesystem::path Paths::checkpoint_path() const {
  if (!checkpoint.empty()) return checkpoint;
  return std::filesystem::path(out_dir) / "model.rtdk";
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  scene.validate();
  if (model.image_size != scene.image_size) {
    throw ConfigError("model.image_size (" + std::to_string(model.image_size) +
                      ") must equal scene.image_size (" + std::to_string(scene.image_size) + ")");
  }
  if (model.num_classes != scene.num_classes) {
    throw ConfigError("model.num_classes (" + std::to_string(model.num_classes) +
                      ") must equal scene.num_classes (" + std::to_string(scene.num_classes) + ")");
  }
  if (paths.data_dir.empty() || paths.out_dir.empty()) {
    throw ConfigError("paths.data_dir and paths.out_dir must be non-empty");
  }
}

TrainConfig train_config_from_json(std::string_view text) {
  TrainConfig c;
  merge_train(c, parse_object(text, "train config"));
  c.validate();
  return c;
}

std::string train_config_to_json(const TrainConfig& config) { return train_json(config).dump(); }

RunConfig config_from_json(std::string_view text) {
  const json j = parse_object(text, "config");
  RunConfig c;
  for_each_key(j, "config", [&](const std::string& key, const json& v) {
    if (!v.is_object()) throw ConfigError("section '" + key + "' must be an object");
    if (key == "model") c.model = model_config_from_json(v.dump());
    else if (key == "train") merge_train(c.train, v);
    else if (key == "scene") c.scene = scene_spec_from_json(v.dump());
    else if (key == "paths") merge_paths(c.paths, v);
    else throw ConfigError("unknown key '" + key + "'");
    return true;
  });
  return c;
}

std::string config_to_json(const RunConfig& config) {
  const json j = {{"model", json::parse(model_config_to_json(config.model))},
                  {"train", train_json(config.train)},
                  {"scene", json::parse(scene_spec_to_json(config.scene))},
                  {"paths",
                   {{"data_dir", config.paths.data_dir},
                    {"out_dir", config.paths.out_dir},
                    {"checkpoint", config.paths.checkpoint}}}};
  return j.dump(2) + "\n";
}

RunConfig parse_config(const std::optional<std::filesystem::path>& file,
                       const Overrides& overrides) {
  RunConfig c = file ? config_from_json(read_text(*file)) : RunConfig{};
  if (overrides.learning_rate) c.train.learning_rate = *overrides.learning_rate;
  if (overrides.epochs) c.train.epochs = *overrides.epochs;
  if (overrides.train_seed) c.train.seed = *overrides.train_seed;
  if (overrides.scene_seed) c.scene.seed = *overrides.scene_seed;
  if (overrides.data_dir) c.paths.data_dir = *overrides.data_dir;
  if (overrides.out_dir) c.paths.out_dir = *overrides.out_dir;
  if (overrides.checkpoint) c.paths.checkpoint = *overrides.checkpoint;
  c.validate();
  return c;
}

ReportStyle style_from_string(const std::string& name) {
  if (name == "table") return ReportStyle::kTable;
  if (name == "json") return ReportStyle::kJson;
  throw ConfigError("unknown report style '" + name + "' (expected table or json)");
}

std::string format_report(const MetricsReport& report, ReportStyle style) {
  if (style == ReportStyle::kJson) return report_to_json(report) + "\n";
  static constexpr const char* kHeaders[] = {"Precision", "Recall", "mAP50", "mAP50-95"};
  const double values[] = {report.precision, report.recall, report.map50, report.map50_95};
  std::ostringstream head, row;
  for (std::size_t i = 0; i < 4; ++i) {
    char cell[32];
    std::snprintf(cell, sizeof cell, "%.2f", values[i]);
    const int width = static_cast<int>(std::string_view(kHeaders[i]).size());
    const char* sep = i + 1 < 4 ? " " : "";
    head << std::left << std::setw(width) << kHeaders[i] << sep;
    row << std::left << std::setw(width) << cell << sep;
  }
  // Trailing padding is not data.
  auto trim = [](std::string s) {
    while (!s.empty() && s.back() == ' ') s.pop_back();
    return s;
  };
  return trim(head.str()) + "\n" + trim(row.str()) + "\n";
}

// ---------------------------------------------------------------------------
// Subcommands

namespace {

struct Options {
  std::string config;
  std::string out;
  std::string data;
  std::string checkpoint;
  std::string report;
  std::string style = "table";
  std::string lrs = "0.025,0.03,0.005,0.02,0.01";
  std::uint64_t seed = 0;
  std::uint64_t check_seed = 1;  // gradcheck / selftest
  std::size_t count = 16;
  std::size_t epochs = 0;
  double lr = 0.0;
  double eval_conf = 0.0;
  double predict_conf = 0.5;
};

std::optional<std::filesystem::path> config_file(const Options& o) {
  if (o.config.empty()) return std::nullopt;
  return std::filesystem::path(o.config);
}

template <typename T>
std::optional<T> if_set(const CLI::App* sub, const char* flag, const T& value) {
  if (sub->count(flag) == 0) return std::nullopt;
  return value;
}

std::vector<double> parse_lrs(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw ConfigError("bad learning rate '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw InputError("--lrs lists no learning rates");
  return out;
}

void check_dataset_fits(const Dataset& ds, const ModelConfig& model) {
  if (ds.spec.image_size != model.image_size || ds.spec.num_classes != model.num_classes) {
    throw ConfigError("dataset (image " + std::to_string(ds.spec.image_size) + ", " +
                      std::to_string(ds.spec.num_classes) + " classes) does not fit model (image " +
                      std::to_string(model.image_size) + ", " +
                      std::to_string(model.num_classes) + " classes)");
  }
  if (ds.scenes.empty()) throw InputError("dataset is empty");
}

int cmd_generate(const CLI::App* sub, const Options& o, std::ostream& out) {
  Overrides ov;
  ov.scene_seed = if_set(sub, "--seed", o.seed);
  ov.data_dir = if_set(sub, "--out", o.out);
  const RunConfig rc = parse_config(config_file(o), ov);
  if (o.count == 0) throw ConfigError("--count must be >= 1");
  const auto scenes = generate_dataset(rc.scene, o.count);
  write_dataset(rc.paths.data_dir, rc.scene, scenes);
  std::uint64_t combined = 0xcbf29ce484222325ULL;
  for (const auto& s : scenes) combined = (combined ^ scene_checksum(s)) * 0x100000001b3ULL;
  char line[96];
  std::snprintf(line, sizeof line, "scenes %zu checksum %016llx\n", scenes.size(),
                static_cast<unsigned long long>(combined));
  out << line;
  return kExitOk;
}

int cmd_train(const CLI::App* sub, const Options& o, std::ostream& out, std::ostream& err) {
  Overrides ov;
  ov.data_dir = if_set(sub, "--data", o.data);
  ov.out_dir = if_set(sub, "--out", o.out);
  ov.checkpoint = if_set(sub, "--checkpoint", o.checkpoint);
  ov.epochs = if_set(sub, "--epochs", o.epochs);
  ov.learning_rate = if_set(sub, "--lr", o.lr);
  ov.train_seed = if_set(sub, "--seed", o.seed);
  const RunConfig rc = parse_config(config_file(o), ov);
  const Dataset ds = read_dataset(rc.paths.data_dir);
  check_dataset_fits(ds, rc.model);

  const std::filesystem::path out_dir = rc.paths.out_dir;
  ensure_dir(out_dir);
  DetectionModel model(rc.model, rc.train.seed);
  const auto records = train(model, ds.scenes, rc.train, [&](const EpochRecord& r) {
    char line[128];
    std::snprintf(line, sizeof line, "epoch %zu/%zu loss %.6f (%.2fs)\n", r.epoch,
                  rc.train.epochs, r.loss.total, r.seconds);
    err << line;
  });
  const std::filesystem::path ckpt = rc.paths.checkpoint_path();
  if (ckpt.has_parent_path()) ensure_dir(ckpt.parent_path());
  save_checkpoint(ckpt, model);
  emit_loss_curve(records, out_dir / "loss_curve.csv");
  write_text(out_dir / "config.json", config_to_json(rc));
  char line[96];
  std::snprintf(line, sizeof line, "final loss %.6f\n", records.back().loss.total);
  out << line;
  return kExitOk;
}

int cmd_eval(const CLI::App* sub, const Options& o, std::ostream& out) {
  Overrides ov;
  ov.data_dir = if_set(sub, "--data", o.data);
  ov.checkpoint = if_set(sub, "--checkpoint", o.checkpoint);
  const RunConfig rc = parse_config(config_file(o), ov);
  const ReportStyle style = style_from_string(o.style);
  const DetectionModel model = load_checkpoint(rc.paths.checkpoint_path());
  const Dataset ds = read_dataset(rc.paths.data_dir);
  check_dataset_fits(ds, model.config());
  EvalOptions opts;
  if (sub->count("--conf-threshold") > 0) opts.fixed_threshold = o.eval_conf;
  const MetricsReport report = evaluate_model(model, ds.scenes, opts);
  if (!o.report.empty()) write_text(o.report, report_to_json(report) + "\n");
  out << format_report(report, style);
  return kExitOk;
}

int cmd_predict(const CLI::App* sub, const Options& o, std::ostream& out) {
  Overrides ov;
  ov.data_dir = if_set(sub, "--data", o.data);
  ov.out_dir = if_set(sub, "--out", o.out);
  ov.checkpoint = if_set(sub, "--checkpoint", o.checkpoint);
  const RunConfig rc = parse_config(config_file(o), ov);
  if (!(o.predict_conf >= 0.0 && o.predict_conf <= 1.0)) {
    throw ConfigError("--conf-threshold must be in [0, 1]");
  }
  const DetectionModel model = load_checkpoint(rc.paths.checkpoint_path());
  const Dataset ds = read_dataset(rc.paths.data_dir);
  check_dataset_fits(ds, model.config());
  const auto samples = predict_samples(model, ds.scenes, o.predict_conf);
  ensure_dir(rc.paths.out_dir);
  const std::filesystem::path path = std::filesystem::path(rc.paths.out_dir) / "detections.jsonl";
  write_detections(path, samples);
  std::size_t n = 0;
  for (const auto& s : samples) n += s.detections.size();
  out << "detections " << n << " images " << samples.size() << "\n";
  return kExitOk;
}

int cmd_sweep(const CLI::App* sub, const Options& o, std::ostream& out, std::ostream& err) {
  Overrides ov;
  ov.data_dir = if_set(sub, "--data", o.data);
  ov.out_dir = if_set(sub, "--out", o.out);
  ov.epochs = if_set(sub, "--epochs", o.epochs);
  ov.train_seed = if_set(sub, "--seed", o.seed);
  const RunConfig rc = parse_config(config_file(o), ov);
  const std::vector<double> lrs = parse_lrs(o.lrs);
  const Dataset ds = read_dataset(rc.paths.data_dir);
  check_dataset_fits(ds, rc.model);
  // Held-out scenes continue the dataset's index sequence.
  const std::size_t held_out = std::max<std::size_t>(1, ds.scenes.size() / 4);
  const auto eval_set = generate_dataset(ds.spec, held_out, ds.scenes.size());
  err << "sweep: " << lrs.size() << " learning rates, " << ds.scenes.size() << " train / "
      << eval_set.size() << " eval scenes, " << rc.train.epochs << " epochs\n";
  const SweepReport report = lr_sweep(lrs, rc.train, rc.model, ds.scenes, eval_set);
  const std::filesystem::path out_dir = rc.paths.out_dir;
  ensure_dir(out_dir);
  const std::string csv = sweep_to_csv(report);
  write_text(out_dir / "sweep.csv", csv);
  write_text(out_dir / "sweep.json", sweep_to_json(report));
  out << csv;
  return kExitOk;
}

int cmd_gradcheck(const Options& o, std::ostream& out) {
  bool ops_ok = true;
  for (const auto& c : op_gradchecks(o.check_seed)) {
    char line[160];
    std::snprintf(line, sizeof line, "op %-30s %.3e\n", c.op.c_str(), c.report.max_rel_error);
    out << line;
    ops_ok = ops_ok && c.report.passed(1e-4);
  }
  const GradReport r = model_gradcheck(o.check_seed);
  for (const auto& p : r.per_parameter) {
    char line[160];
    std::snprintf(line, sizeof line, "%-36s %.3e\n", p.name.c_str(), p.max_rel_error);
    out << line;
  }
  char line[256];
  std::snprintf(line, sizeof line,
                "checked %zu refined %zu skipped %zu max_rel_error %.3e "
                "(raw %.3e, roundoff floor %.3e)\n",
                r.checked, r.refined, r.skipped, r.max_rel_error, r.max_raw_rel_error,
                r.roundoff_floor);
  out << line;
  const bool ok = ops_ok && r.passed(1e-4);
  out << (ok ? "PASS" : "FAIL") << "\n";
  return ok ? kExitOk : kExitRuntime;
}

int cmd_selftest(const Options& o, std::ostream& out) {
  const ConformanceResult m = matching_conformance(1000, o.check_seed);
  const ConformanceResult e = metrics_conformance(200, o.check_seed);
  auto print = [&](const char* name, const ConformanceResult& r) {
    char line[256];
    std::snprintf(line, sizeof line, "%-8s trials %zu mismatches %zu max_abs_diff %.3e %s\n", name,
                  r.trials, r.mismatches, r.max_abs_diff, r.passed() ? "PASS" : "FAIL");
    out << line;
    if (!r.passed()) out << "  first failure: " << r.first_failure << "\n";
  };
  print("matching", m);
  print("metrics", e);
  return m.passed() && e.passed() ? kExitOk : kExitRuntime;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"NMS-free set-prediction lesion detector on synthetic fundus scenes", "rtdetr"};
  app.require_subcommand(1);
  Options o;

  auto add_config = [&](CLI::App* s) {
    s->add_option("--config", o.config, "JSON run configuration");
  };
  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset");
  gen->add_option("--out", o.out, "Dataset directory");
  gen->add_option("--seed", o.seed, "Scene seed");
  gen->add_option("--count", o.count, "Number of scenes")->capture_default_str();
  add_config(gen);

  auto* tr = app.add_subcommand("train", "Train a model; writes checkpoint and loss curve");
  tr->add_option("--data", o.data, "Dataset directory");
  tr->add_option("--out", o.out, "Output directory");
  tr->add_option("--checkpoint", o.checkpoint, "Checkpoint path (default <out>/model.rtdk)");
  tr->add_option("--epochs", o.epochs, "Epochs");
  tr->add_option("--lr", o.lr, "Learning rate");
  tr->add_option("--seed", o.seed, "Initialization and shuffle seed");
  add_config(tr);

  auto* ev = app.add_subcommand("eval", "Score a checkpoint on a dataset");
  ev->add_option("--data", o.data, "Dataset directory");
  ev->add_option("--checkpoint", o.checkpoint, "Checkpoint path");
  ev->add_option("--report", o.report, "Also write the metrics JSON here");
  ev->add_option("--style", o.style, "table or json")
      ->check(CLI::IsMember({"table", "json"}))
      ->capture_default_str();
  ev->add_option("--conf-threshold", o.eval_conf,
                 "Report precision/recall at this confidence (default: best F1)");
  add_config(ev);

  auto* pr = app.add_subcommand("predict", "Write detections.jsonl for a dataset");
  pr->add_option("--data", o.data, "Dataset directory");
  pr->add_option("--checkpoint", o.checkpoint, "Checkpoint path");
  pr->add_option("--out", o.out, "Output directory");
  pr->add_option("--conf-threshold", o.predict_conf, "Minimum confidence")
      ->capture_default_str();
  add_config(pr);

  auto* sw = app.add_subcommand("sweep", "Learning-rate sweep; writes sweep.csv and sweep.json");
  sw->add_option("--data", o.data, "Training dataset directory");
  sw->add_option("--out", o.out, "Output directory");
  sw->add_option("--lrs", o.lrs, "Comma-separated learning rates")->capture_default_str();
  sw->add_option("--epochs", o.epochs, "Epochs per learning rate");
  sw->add_option("--seed", o.seed, "Initialization and shuffle seed");
  add_config(sw);

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every op and the full model");
  gc->add_option("--seed", o.check_seed, "Model and input seed")->capture_default_str();

  auto* st = app.add_subcommand("selftest", "Matcher and metrics against exhaustive oracles");
  st->add_option("--seed", o.check_seed, "Trial seed")->capture_default_str();

  try {
    // CLI11 expects the program name first.
    std::vector<std::string> args;
    for (int i = argc - 1; i >= 1; --i) args.emplace_back(argv[i]);
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_generate(gen, o, out);
    if (tr->parsed()) return cmd_train(tr, o, out, err);
    if (ev->parsed()) return cmd_eval(ev, o, out);
    if (pr->parsed()) return cmd_predict(pr, o, out);
    if (sw->parsed()) return cmd_sweep(sw, o, out, err);
    if (gc->parsed()) return cmd_gradcheck(o, out);
    if (st->parsed()) return cmd_selftest(o, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace rtdetr::cli
