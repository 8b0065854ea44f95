#include "cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>

#include "cumix/config.hpp"
#include "cumix/data.hpp"
#include "cumix/error.hpp"
#include "cumix/model.hpp"
#include "cumix/rng.hpp"
#include "cumix/synthetic.hpp"
#include "cumix/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cumix::cli {
namespace {

/// Error carrying the exit code it maps to.
struct Failure {
  int code;
  std::string message;
};

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Failure{kConfigError, "cannot read config file " + path};
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw Failure{kConfigError, "config file " + path + " is not valid JSON"};
  if (!doc.is_object()) throw Failure{kConfigError, "config file " + path + " must hold a JSON object"};
  return doc;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Failure{kRuntimeError, "cannot write " + path.string()};
  out << text;
}

LoadedBundle load_data(const std::string& dir) {
  try {
    return load_bundle(dir);
  } catch (const Error& e) {
    throw Failure{kDataError, e.what()};
  }
}

/// Options shared by train and ablate.
struct RunOptions {
  std::string config_path;
  std::string data_dir;
  std::string out_dir;
  std::string preset;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string mode;
  bool deterministic = false;
};

void add_run_options(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("--config", o.config_path, "JSON run configuration (keys mirror the report's \"config\")");
  cmd->add_option("--data", o.data_dir, "Dataset directory (overrides the config file's \"data\")");
  cmd->add_option("--out", o.out_dir, "Output directory");
  cmd->add_option("--preset", o.preset,
                  "Start from a named preset: cub, flo, awa, sun, pacs, domainnet, synthetic");
  cmd->add_option("--set", o.overrides, "Override a config key, e.g. --set loss.eta_img=0")
      ->allow_extra_args(false);
  cmd->add_option("--seed", o.seed, "Master seed (overrides config 'seed')");
  cmd->add_option("--mode", o.mode,
                  "agg | mixup | cumix | cumix_no_curriculum | cumix_input_only | cumix_feature_only");
  cmd->add_flag("--deterministic", o.deterministic,
                "Omit timestamp, hostname and wall-clock time from reports");
}

/// Merges preset < config file < --set < dedicated flags into a RunConfig.
/// Returns the config and the resolved dataset directory.
std::pair<RunConfig, std::string> resolve_run(const RunOptions& o) {
  json doc = default_run_config_json();
  std::string data_dir;
  try {
    if (!o.preset.empty()) merge_strict(doc, preset_json(o.preset));
    if (!o.config_path.empty()) {
      json file = read_json_file(o.config_path);
      if (file.contains("data")) {
        if (!file["data"].is_string()) throw ConfigError("config key 'data' must be a string");
        data_dir = file["data"].get<std::string>();
        // Relative to the config file's directory.
        if (fs::path(data_dir).is_relative()) {
          data_dir = (fs::path(o.config_path).parent_path() / data_dir).lexically_normal().string();
        }
        file.erase("data");
      }
      merge_strict(doc, file);
    }
    for (const std::string& ov : o.overrides) apply_override(doc, ov);
    if (o.seed) doc["seed"] = *o.seed;
    if (!o.mode.empty()) doc["mode"] = o.mode;
    if (!o.data_dir.empty()) data_dir = o.data_dir;
    return {run_config_from_json(doc), data_dir};
  } catch (const ConfigError& e) {
    throw Failure{kConfigError, e.what()};
  }
}

TrainResult train_checked(const LoadedBundle& data, const RunConfig& cfg) {
  try {
    return train_run(data.bundle, data.split, cfg);
  } catch (const ConfigError& e) {
    throw Failure{kConfigError, e.what()};
  } catch (const ValidationError& e) {
    throw Failure{kDataError, e.what()};
  }
}

void print_eval(std::ostream& out, const EvalResult& r) {
  out << r.name << ": per-class accuracy " << std::fixed << std::setprecision(4)
      << r.per_class_accuracy << ", top-1 " << r.top1 << " over " << r.num_samples
      << " samples\n";
  for (const ClassAccuracy& c : r.per_class) {
    out << "  " << std::setw(4) << c.class_id << "  " << std::left << std::setw(16) << c.name
        << std::right << c.correct << "/" << c.count << "  " << c.accuracy << '\n';
  }
  out << std::defaultfloat;
}

int cmd_train(const RunOptions& o, std::ostream& out) {
  auto [cfg, data_dir] = resolve_run(o);
  if (data_dir.empty()) throw Failure{kDataError, "missing --data (dataset directory)"};
  if (o.out_dir.empty()) throw Failure{kConfigError, "missing --out (output directory)"};
  const LoadedBundle data = load_data(data_dir);
  TrainResult result = train_checked(data, cfg);

  const fs::path dir = o.out_dir;
  fs::create_directories(dir);
  save_checkpoint(result.model, dir / "model.cmxm");
  json report = to_json(result.report, o.deterministic);
  report["data"] = data_dir;
  write_text(dir / "report.json", report.dump(2) + "\n");
  write_text(dir / "epochs.csv", epochs_csv(result.report));

  out << "mode " << mode_name(cfg.mode) << ", setting " << setting_name(result.report.setting)
      << ", seed " << cfg.seed << ", " << cfg.optim.epochs << " epochs\n";
  for (const EvalResult& r : result.report.evals) print_eval(out, r);
  out << "wrote " << (dir / "model.cmxm").string() << ", report.json, epochs.csv\n";
  return kOk;
}

struct EvalOptions {
  std::string model_path;
  std::string data_dir;
  std::string classes;
  std::string domains;
  std::string out_path;
};

int cmd_eval(const EvalOptions& o, std::ostream& out) {
  if (o.data_dir.empty()) throw Failure{kDataError, "missing --data (dataset directory)"};
  if (o.model_path.empty()) throw Failure{kDataError, "missing --model (checkpoint path)"};
  const LoadedBundle data = load_data(o.data_dir);
  Model model;
  try {
    model = load_checkpoint(o.model_path);
  } catch (const Error& e) {
    throw Failure{kDataError, e.what()};
  }
  if (model.config.input_dim != data.bundle.features.cols()) {
    throw Failure{kConfigError, "checkpoint expects " + std::to_string(model.config.input_dim) +
                                    "-dimensional inputs, dataset has " +
                                    std::to_string(data.bundle.features.cols())};
  }
  if (!model.config.omega_trainable && model.config.embed_dim != data.bundle.embeddings.cols()) {
    throw Failure{kConfigError, "checkpoint embed_dim " + std::to_string(model.config.embed_dim) +
                                    " does not match the dataset's embeddings (" +
                                    std::to_string(data.bundle.embeddings.cols()) + ")"};
  }
  if (model.config.num_classes != data.split.seen_classes.size()) {
    throw Failure{kConfigError, "checkpoint was trained on " +
                                    std::to_string(model.config.num_classes) +
                                    " seen classes, dataset split lists " +
                                    std::to_string(data.split.seen_classes.size())};
  }
  EvalSpec spec = default_eval_spec(infer_setting(data.split));
  try {
    if (!o.classes.empty() || !o.domains.empty()) {
      spec = parse_eval_spec(o.classes.empty() ? (spec.classes == EvalSpec::Classes::Seen ? "seen" : "unseen")
                                               : o.classes,
                             o.domains.empty() ? (spec.domains == EvalSpec::Domains::Train ? "train" : "test")
                                               : o.domains);
    }
  } catch (const ConfigError& e) {
    throw Failure{kConfigError, e.what()};
  }
  EvalResult r;
  try {
    r = evaluate(model, data.bundle, data.split, spec);
  } catch (const DimensionError& e) {
    throw Failure{kConfigError, e.what()};
  } catch (const ValidationError& e) {
    throw Failure{kDataError, e.what()};
  }
  print_eval(out, r);
  if (!o.out_path.empty()) write_text(o.out_path, to_json(r).dump(2) + "\n");
  return kOk;
}

struct SynthOptions {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  bool force = false;
};

int cmd_synth(const SynthOptions& o, std::ostream& out) {
  if (o.out_dir.empty()) throw Failure{kConfigError, "missing --out (dataset directory)"};
  SynthConfig cfg;
  try {
    json doc = default_synth_config_json();
    if (!o.config_path.empty()) merge_strict(doc, read_json_file(o.config_path));
    for (const std::string& ov : o.overrides) apply_override(doc, ov);
    if (o.seed) doc["seed"] = *o.seed;
    cfg = synth_config_from_json(doc);
  } catch (const ConfigError& e) {
    throw Failure{kConfigError, e.what()};
  }
  const LoadedBundle data = generate_synthetic(cfg);
  try {
    write_bundle(data.bundle, data.split, o.out_dir, o.force);
  } catch (const IoError& e) {
    throw Failure{kRuntimeError, e.what()};
  }
  write_text(fs::path(o.out_dir) / "synth_config.json", to_json(cfg).dump(2) + "\n");
  out << "wrote " << data.bundle.num_samples() << " samples (" << data.bundle.class_names.size()
      << " classes, " << data.bundle.domain_names.size() << " domains) to " << o.out_dir << '\n';
  return kOk;
}

struct AblateOptions {
  RunOptions run;
  std::size_t seeds = 3;
};

struct Stats {
  double mean = 0.0;
  double std = 0.0;
};

Stats stats(const std::vector<double>& v) {
  Stats s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double sq = 0.0;
    for (double x : v) sq += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(sq / static_cast<double>(v.size() - 1));
  }
  return s;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

int cmd_ablate(const AblateOptions& o, std::ostream& out) {
  if (o.seeds < 1) throw Failure{kConfigError, "--seeds must be at least 1"};
  auto [base, data_dir] = resolve_run(o.run);
  if (data_dir.empty()) throw Failure{kDataError, "missing --data (dataset directory)"};
  if (o.run.out_dir.empty()) throw Failure{kConfigError, "missing --out (output directory)"};
  const LoadedBundle data = load_data(data_dir);
  const fs::path dir = o.run.out_dir;
  fs::create_directories(dir);

  struct Row {
    Mode mode;
    std::map<std::string, std::vector<double>> accuracy;  // eval name -> per seed
    std::uint64_t batch_hash = 0;
  };
  std::vector<Row> rows;
  std::vector<std::string> eval_names;
  std::string runs_csv = "mode,seed,eval,per_class_accuracy,top1,batch_hash\n";

  for (Mode mode : all_modes()) {
    Row row{mode, {}, 0};
    for (std::size_t s = 0; s < o.seeds; ++s) {
      RunConfig cfg = base;
      cfg.mode = mode;
      cfg.seed = base.seed + s;
      const TrainResult result = train_checked(data, cfg);
      row.batch_hash = mix64(row.batch_hash ^ result.report.batch_hash);
      char hash[17];
      std::snprintf(hash, sizeof hash, "%016llx",
                    static_cast<unsigned long long>(result.report.batch_hash));
      for (const EvalResult& r : result.report.evals) {
        if (rows.empty() && s == 0) eval_names.push_back(r.name);
        row.accuracy[r.name].push_back(r.per_class_accuracy);
        runs_csv += std::string(mode_name(mode)) + "," + std::to_string(cfg.seed) + "," + r.name +
                    "," + fmt(r.per_class_accuracy) + "," + fmt(r.top1) + "," + hash + "\n";
      }
      out << mode_name(mode) << " seed " << cfg.seed << " done\n";
    }
    rows.push_back(std::move(row));
  }

  std::string table = "mode,L_agg,L_mix_img,L_mix_feat,curriculum";
  for (const std::string& name : eval_names) table += "," + name + "_mean," + name + "_std";
  table += ",seeds,batch_hash\n";
  json summary = json::array();
  for (const Row& row : rows) {
    const Mode m = row.mode;
    const bool img = m == Mode::Mixup || m == Mode::Cumix || m == Mode::CumixNoCurriculum ||
                     m == Mode::CumixInputOnly;
    const bool feat = m == Mode::Cumix || m == Mode::CumixNoCurriculum || m == Mode::CumixFeatureOnly;
    const bool curriculum = m == Mode::Cumix || m == Mode::CumixInputOnly || m == Mode::CumixFeatureOnly;
    char hash[17];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(row.batch_hash));
    table += std::string(mode_name(m)) + ",x," + (img ? "x" : "") + "," + (feat ? "x" : "") + "," +
             (curriculum ? "x" : "");
    json entry = {{"mode", mode_name(m)}, {"batch_hash", hash}};
    for (const std::string& name : eval_names) {
      const Stats st = stats(row.accuracy.at(name));
      table += "," + fmt(st.mean) + "," + fmt(st.std);
      entry[name] = {{"mean", st.mean}, {"std", st.std}, {"per_seed", row.accuracy.at(name)}};
    }
    table += "," + std::to_string(o.seeds) + "," + hash + "\n";
    summary.push_back(entry);
  }
  write_text(dir / "ablation.csv", table);
  write_text(dir / "ablation_runs.csv", runs_csv);
  json doc = {{"config", to_json(base)}, {"seeds", o.seeds}, {"data", data_dir}, {"rows", summary}};
  write_text(dir / "ablation.json", doc.dump(2) + "\n");
  out << table;
  return kOk;
}

int cmd_presets(const std::string& name, std::ostream& out) {
  try {
    if (!name.empty()) {
      json doc = default_run_config_json();
      merge_strict(doc, preset_json(name));
      out << doc.dump(2) << '\n';
      return kOk;
    }
  } catch (const ConfigError& e) {
    throw Failure{kConfigError, e.what()};
  }
  for (const std::string& p : preset_names()) out << p << '\n';
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"cumix: curriculum mixup for unseen classes in unseen domains"};
  app.require_subcommand(1);

  RunOptions train_opts;
  CLI::App* train = app.add_subcommand("train", "Train one model and write checkpoint, report and epoch CSV");
  add_run_options(train, train_opts);

  EvalOptions eval_opts;
  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  eval->add_option("--model", eval_opts.model_path, "Checkpoint written by 'train'");
  eval->add_option("--data", eval_opts.data_dir, "Dataset directory");
  eval->add_option("--classes", eval_opts.classes, "seen | unseen (default from the split)");
  eval->add_option("--domains", eval_opts.domains, "train | test (default from the split)");
  eval->add_option("--out", eval_opts.out_path, "Also write the result as JSON to this file");

  SynthOptions synth_opts;
  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic ZSL+DG dataset directory");
  synth->add_option("--config", synth_opts.config_path, "JSON generator configuration");
  synth->add_option("--out", synth_opts.out_dir, "Dataset directory to create");
  synth->add_option("--seed", synth_opts.seed, "Generator seed (overrides config 'seed')");
  synth->add_option("--set", synth_opts.overrides, "Override a generator key, e.g. --set noise_sigma=0.2");
  synth->add_flag("--force", synth_opts.force, "Overwrite a non-empty output directory");

  AblateOptions ablate_opts;
  CLI::App* ablate = app.add_subcommand("ablate", "Run every training mode over several seeds");
  add_run_options(ablate, ablate_opts.run);
  ablate->add_option("--seeds", ablate_opts.seeds, "Number of seeds per mode (seed, seed+1, ...)");

  std::string preset_name;
  CLI::App* presets = app.add_subcommand("presets", "List presets, or print one merged with defaults");
  presets->add_option("name", preset_name, "Preset to print");

  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kConfigError;
  }

  try {
    if (*train) return cmd_train(train_opts, out);
    if (*eval) return cmd_eval(eval_opts, out);
    if (*synth) return cmd_synth(synth_opts, out);
    if (*ablate) return cmd_ablate(ablate_opts, out);
    if (*presets) return cmd_presets(preset_name, out);
  } catch (const Failure& f) {
    err << "cumix: error: " << f.message << '\n';
    return f.code;
  } catch (const ConfigError& e) {
    err << "cumix: config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    err << "cumix: error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kRuntimeError;
}

}  // namespace cumix::cli
