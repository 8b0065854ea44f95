#include "cumix/config.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <sstream>
#include <unistd.h>

#include "cumix/error.hpp"

using nlohmann::json;

namespace cumix {
namespace {

template <typename T>
T get(const json& doc, const char* key, const std::string& path) {
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + path + key + "' has the wrong type (" +
                      doc.at(key).dump() + ")");
  }
}

std::size_t get_count(const json& doc, const char* key, const std::string& path) {
  const json& v = doc.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError("config key '" + path + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

double get_real(const json& doc, const char* key, const std::string& path) {
  const json& v = doc.at(key);
  if (!v.is_number()) throw ConfigError("config key '" + path + key + "' must be a number");
  return v.get<double>();
}

json domain_list(const std::vector<DomainParams>& ds) {
  json out = json::array();
  for (const auto& d : ds) out.push_back({{"angle_deg", d.angle_deg}, {"bias_scale", d.bias_scale}});
  return out;
}

std::vector<DomainParams> parse_domains(const json& doc, const char* key) {
  const json& arr = doc.at(key);
  if (!arr.is_array()) throw ConfigError(std::string("synth key '") + key + "' must be an array");
  std::vector<DomainParams> out;
  for (const json& d : arr) {
    if (!d.is_object()) throw ConfigError(std::string("synth key '") + key + "' entries must be objects");
    for (const auto& [k, v] : d.items()) {
      if (k != "angle_deg" && k != "bias_scale") {
        throw ConfigError(std::string("unknown config key '") + key + "[]." + k + "'");
      }
    }
    DomainParams p;
    if (d.contains("angle_deg")) p.angle_deg = get_real(d, "angle_deg", std::string(key) + "[].");
    if (d.contains("bias_scale")) p.bias_scale = get_real(d, "bias_scale", std::string(key) + "[].");
    out.push_back(p);
  }
  return out;
}

std::string iso_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string hostname() {
  char buf[256] = {};
  if (gethostname(buf, sizeof buf - 1) != 0) return "unknown";
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

json default_run_config_json() {
  return to_json(RunConfig{});
}

json default_synth_config_json() { return to_json(SynthConfig{}); }

void merge_strict(json& base, const json& overlay, const std::string& prefix) {
  if (!overlay.is_object()) throw ConfigError("config document must be a JSON object");
  for (const auto& [key, value] : overlay.items()) {
    const std::string path = prefix + key;
    if (!base.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    json& slot = base[key];
    if (slot.is_object()) {
      if (!value.is_object()) throw ConfigError("config key '" + path + "' must be an object");
      merge_strict(slot, value, path + ".");
    } else {
      slot = value;
    }
  }
}

void apply_override(json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override '" + std::string(assignment) + "' is not of the form key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &doc;
  std::string walked;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    walked += (walked.empty() ? "" : ".") + part;
    if (!node->is_object() || !node->contains(part)) {
      throw ConfigError("unknown config key '" + walked + "'");
    }
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (node->is_object()) throw ConfigError("config key '" + key + "' names a section, not a value");
  *node = std::move(value);
}

json to_json(const RunConfig& c) {
  json evals = json::array();
  for (const EvalSpec& e : c.evals) {
    evals.push_back({{"classes", e.classes == EvalSpec::Classes::Seen ? "seen" : "unseen"},
                     {"domains", e.domains == EvalSpec::Domains::Train ? "train" : "test"}});
  }
  json decay = c.optim.decay_epoch ? json(*c.optim.decay_epoch) : json(nullptr);
  return {{"mode", mode_name(c.mode)},
          {"seed", c.seed},
          {"batch_size", c.batch_size},
          {"model",
           {{"hidden_dims", c.model.hidden_dims},
            {"omega_trainable", c.model.omega_trainable},
            {"embed_dim", c.model.embed_dim}}},
          {"optim",
           {{"lr", c.optim.lr},
            {"momentum", c.optim.momentum},
            {"weight_decay", c.optim.weight_decay},
            {"epochs", c.optim.epochs},
            {"decay_factor", c.optim.decay_factor},
            {"decay_epoch", decay}}},
          {"mix", {{"warmup_epochs", c.mix.warmup_epochs}, {"beta_max", c.mix.beta_max}}},
          {"loss", {{"eta_img", c.loss.eta_img}, {"eta_feat", c.loss.eta_feat}}},
          {"eval", evals}};
}

RunConfig run_config_from_json(const json& input) {
  json doc = default_run_config_json();
  merge_strict(doc, input);

  RunConfig c;
  c.mode = parse_mode(get<std::string>(doc, "mode", ""));
  const json& seed = doc.at("seed");
  if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<long long>() >= 0)) {
    throw ConfigError("config key 'seed' must be a non-negative integer");
  }
  c.seed = seed.get<std::uint64_t>();
  c.batch_size = get_count(doc, "batch_size", "");

  const json& m = doc.at("model");
  const json& hidden = m.at("hidden_dims");
  if (!hidden.is_array()) throw ConfigError("config key 'model.hidden_dims' must be an array");
  for (const json& h : hidden) {
    if (!h.is_number_integer() || h.get<long long>() <= 0) {
      throw ConfigError("config key 'model.hidden_dims' must hold positive integers");
    }
    c.model.hidden_dims.push_back(h.get<std::size_t>());
  }
  c.model.omega_trainable = get<bool>(m, "omega_trainable", "model.");
  c.model.embed_dim = get_count(m, "embed_dim", "model.");

  const json& o = doc.at("optim");
  c.optim.lr = get_real(o, "lr", "optim.");
  c.optim.momentum = get_real(o, "momentum", "optim.");
  c.optim.weight_decay = get_real(o, "weight_decay", "optim.");
  c.optim.epochs = get_count(o, "epochs", "optim.");
  c.optim.decay_factor = get_real(o, "decay_factor", "optim.");
  if (!o.at("decay_epoch").is_null()) c.optim.decay_epoch = get_count(o, "decay_epoch", "optim.");

  const json& mix = doc.at("mix");
  c.mix.warmup_epochs = get_count(mix, "warmup_epochs", "mix.");
  c.mix.beta_max = get_real(mix, "beta_max", "mix.");

  const json& loss = doc.at("loss");
  c.loss.eta_img = get_real(loss, "eta_img", "loss.");
  c.loss.eta_feat = get_real(loss, "eta_feat", "loss.");

  const json& evals = doc.at("eval");
  if (!evals.is_array()) throw ConfigError("config key 'eval' must be an array");
  for (const json& e : evals) {
    if (!e.is_object() || !e.contains("classes") || !e.contains("domains") || e.size() != 2) {
      throw ConfigError("config key 'eval' entries must be {\"classes\": ..., \"domains\": ...}");
    }
    c.evals.push_back(parse_eval_spec(get<std::string>(e, "classes", "eval[]."),
                                      get<std::string>(e, "domains", "eval[].")));
  }
  c.validate();
  return c;
}

json to_json(const SynthConfig& c) {
  return {{"attr_dim", c.attr_dim},
          {"input_dim", c.input_dim},
          {"n_seen_classes", c.n_seen_classes},
          {"n_unseen_classes", c.n_unseen_classes},
          {"train_domains", domain_list(c.train_domains)},
          {"test_domains", domain_list(c.test_domains)},
          {"samples_per_class_per_domain", c.samples_per_class_per_domain},
          {"noise_sigma", c.noise_sigma},
          {"map_scale", c.map_scale},
          {"seed", c.seed}};
}

SynthConfig synth_config_from_json(const json& input) {
  json doc = default_synth_config_json();
  merge_strict(doc, input);
  SynthConfig c;
  c.attr_dim = get_count(doc, "attr_dim", "");
  c.input_dim = get_count(doc, "input_dim", "");
  c.n_seen_classes = get_count(doc, "n_seen_classes", "");
  c.n_unseen_classes = get_count(doc, "n_unseen_classes", "");
  c.train_domains = parse_domains(doc, "train_domains");
  c.test_domains = parse_domains(doc, "test_domains");
  c.samples_per_class_per_domain = get_count(doc, "samples_per_class_per_domain", "");
  c.noise_sigma = get_real(doc, "noise_sigma", "");
  c.map_scale = get_real(doc, "map_scale", "");
  c.seed = get<std::uint64_t>(doc, "seed", "");
  c.validate();
  return c;
}

std::vector<std::string> preset_names() {
  return {"cub", "flo", "awa", "sun", "pacs", "domainnet", "synthetic"};
}

json preset_json(std::string_view name) {
  // Zero-shot presets: identity f, linear g, frozen embeddings, SGD 0.1 /
  // momentum 0.9, step decay after 2/3 of training, warm-up 30, batch 128.
  auto zsl = [](std::size_t epochs, double beta_max, double eta, double wd) {
    return json{{"mode", "cumix"},
                {"batch_size", 128},
                {"model", {{"hidden_dims", json::array()}, {"omega_trainable", false}}},
                {"optim", {{"lr", 0.1}, {"momentum", 0.9}, {"weight_decay", wd}, {"epochs", epochs}}},
                {"mix", {{"warmup_epochs", 30}, {"beta_max", beta_max}}},
                {"loss", {{"eta_img", eta}, {"eta_feat", eta}}}};
  };
  if (name == "cub") return zsl(90, 0.8, 10.0, 0.001);
  if (name == "flo") return zsl(90, 0.4, 4.0, 0.001);
  if (name == "awa") return zsl(30, 0.2, 1.0, 0.0);
  if (name == "sun") return zsl(60, 0.8, 10.0, 0.001);
  if (name == "pacs") {
    return {{"mode", "cumix"},
            {"model", {{"omega_trainable", true}}},
            {"mix", {{"warmup_epochs", 10}, {"beta_max", 0.6}}},
            {"loss", {{"eta_img", 0.1}, {"eta_feat", 3.0}}}};
  }
  if (name == "domainnet") {
    return {{"mode", "cumix"},
            {"optim",
             {{"lr", 0.001}, {"momentum", 0.9}, {"weight_decay", 5e-5}, {"epochs", 8},
              {"decay_epoch", 6}}},
            {"mix", {{"warmup_epochs", 2}, {"beta_max", 1.0}}},
            {"loss", {{"eta_img", 0.001}, {"eta_feat", 1.0}}}};
  }
  if (name == "synthetic") {
    return {{"mode", "cumix"},
            {"batch_size", 48},
            {"model", {{"hidden_dims", {64}}, {"omega_trainable", false}}},
            {"optim", {{"lr", 0.05}, {"momentum", 0.9}, {"weight_decay", 0.001}, {"epochs", 30}}},
            {"mix", {{"warmup_epochs", 5}, {"beta_max", 0.6}}},
            {"loss", {{"eta_img", 1.0}, {"eta_feat", 1.0}}}};
  }
  throw ConfigError("unknown preset '" + std::string(name) + "'");
}

json to_json(const EvalResult& r) {
  json per_class = json::array();
  for (const ClassAccuracy& c : r.per_class) {
    per_class.push_back({{"class_id", c.class_id},
                         {"name", c.name},
                         {"correct", c.correct},
                         {"count", c.count},
                         {"accuracy", c.accuracy}});
  }
  return {{"name", r.name},
          {"per_class_accuracy", r.per_class_accuracy},
          {"top1", r.top1},
          {"num_samples", r.num_samples},
          {"per_class", per_class}};
}

json to_json(const RunReport& report, bool deterministic) {
  json epochs = json::array();
  for (const EpochRecord& e : report.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"lr", e.lr},
                      {"alpha", e.alpha},
                      {"beta", e.beta},
                      {"loss_agg", e.loss_agg},
                      {"loss_mix_img", e.loss_mix_img},
                      {"loss_mix_feat", e.loss_mix_feat},
                      {"total", e.total},
                      {"cross_mixes", e.cross_mixes},
                      {"intra_mixes", e.intra_mixes}});
  }
  json evals = json::array();
  for (const EvalResult& r : report.evals) evals.push_back(to_json(r));
  json out = {{"schema", "cumix.run_report/1"},
              {"mode", mode_name(report.config.mode)},
              {"setting", setting_name(report.setting)},
              {"seed", report.config.seed},
              {"config", to_json(report.config)},
              {"batch_hash", hex64(report.batch_hash)},
              {"epochs", epochs},
              {"evaluations", evals},
              {"deterministic", deterministic}};
  if (!deterministic) {
    out["wall_clock_seconds"] = report.wall_clock_seconds;
    out["timestamp"] = iso_timestamp();
    out["hostname"] = hostname();
  }
  return out;
}

std::string epochs_csv(const RunReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,loss_agg,loss_mix_img,loss_mix_feat,total,lr,alpha,beta\n";
  for (const EpochRecord& e : report.epochs) {
    out << e.epoch << ',' << e.loss_agg << ',' << e.loss_mix_img << ',' << e.loss_mix_feat << ','
        << e.total << ',' << e.lr << ',' << e.alpha << ',' << e.beta << '\n';
  }
  return out.str();
}

}  // namespace cumix
