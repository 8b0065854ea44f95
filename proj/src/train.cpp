#include "cumix/train.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <map>
#include <set>

#include "cumix/error.hpp"
#include "cumix/log.hpp"
#include "cumix/rng.hpp"

namespace cumix {
namespace {

struct BatchOutcome {
  BatchLossReport report;
  ModelGrads grads;
};

BatchOutcome run_batch(const Model& model, const Batch& batch, const RunConfig& cfg,
                       const CurriculumCoeffs& coeffs, std::size_t epoch,
                       std::size_t batch_index) {
  switch (cfg.mode) {
    case Mode::Agg: {
      LossResult agg = loss_agg(model, batch);
      BatchOutcome out{{}, std::move(agg.grads)};
      out.report.loss_agg = agg.loss;
      out.report.total = agg.loss;
      return out;
    }
    case Mode::Mixup: {
      LossResult agg = loss_agg(model, batch);
      RngStream rng(cfg.seed, "mixup", {epoch, batch_index});
      const LossResult mix = loss_mixup_baseline(model, batch, cfg.mix.beta_max, rng);
      BatchOutcome out{{}, std::move(agg.grads)};
      out.report.loss_agg = agg.loss;
      out.report.loss_mix_img = mix.loss;
      out.report.total = agg.loss + cfg.loss.eta_img * mix.loss;
      out.report.intra_mixes = batch.size();
      add_scaled(out.grads, mix.grads, cfg.loss.eta_img);
      return out;
    }
    case Mode::Cumix:
    case Mode::CumixNoCurriculum:
    case Mode::CumixInputOnly:
    case Mode::CumixFeatureOnly: {
      LossWeights w = cfg.loss;
      if (cfg.mode == Mode::CumixInputOnly) w.eta_feat = 0.0;
      if (cfg.mode == Mode::CumixFeatureOnly) w.eta_img = 0.0;
      const CumixDraws draws = draw_cumix(batch.domains, coeffs, cfg.seed, epoch, batch_index);
      CumixResult r = loss_cumix(model, batch, draws, w);
      return {r.report, std::move(r.grads)};
    }
  }
  throw ConfigError("unknown mode");
}

CurriculumCoeffs coeffs_for(const RunConfig& cfg, std::size_t epoch) {
  switch (cfg.mode) {
    case Mode::Agg:
      return {0.0, 0.0};
    case Mode::Mixup:
      return {0.0, cfg.mix.beta_max};
    case Mode::CumixNoCurriculum:
      return {1.0, cfg.mix.beta_max};
    default:
      return schedule_coeffs(epoch, cfg.mix);
  }
}

std::vector<std::uint32_t> domains_for(const SplitSpec& split, EvalSpec::Domains d) {
  if (d == EvalSpec::Domains::Train || split.test_domains.empty()) return split.train_domains;
  return split.test_domains;
}

}  // namespace

std::size_t OptimConfig::resolved_decay_epoch() const {
  if (decay_epoch) return *decay_epoch;
  return (2 * epochs + 2) / 3;  // ceil(2/3 * epochs)
}

void OptimConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("optim.lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("optim.momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    throw ConfigError("optim.weight_decay must be non-negative");
  }
  if (epochs < 1) throw ConfigError("optim.epochs must be at least 1");
  if (!(decay_factor > 0.0) || !std::isfinite(decay_factor)) {
    throw ConfigError("optim.decay_factor must be positive");
  }
}

double lr_at_epoch(const OptimConfig& cfg, std::size_t epoch) {
  return epoch < cfg.resolved_decay_epoch() ? cfg.lr : cfg.lr * cfg.decay_factor;
}

void sgd_step(Model& model, const ModelGrads& grads, ModelGrads& velocity,
              const OptimConfig& cfg, std::size_t epoch) {
  auto params = trainable_tensors(model);
  const auto g = tensors(grads);
  auto v = tensors(velocity);
  if (params.size() != g.size() || params.size() != v.size()) {
    throw DimensionError("sgd_step: " + std::to_string(params.size()) + " parameter tensors, " +
                         std::to_string(g.size()) + " gradients, " + std::to_string(v.size()) +
                         " velocities");
  }
  const double lr = lr_at_epoch(cfg, epoch);
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (params[t].size() != g[t].size() || params[t].size() != v[t].size()) {
      throw DimensionError("sgd_step: tensor " + std::to_string(t) + " has mismatched sizes");
    }
    for (std::size_t i = 0; i < params[t].size(); ++i) {
      v[t][i] = cfg.momentum * v[t][i] + (g[t][i] + cfg.weight_decay * params[t][i]);
      params[t][i] -= lr * v[t][i];
    }
  }
}

const char* mode_name(Mode mode) {
  switch (mode) {
    case Mode::Agg: return "agg";
    case Mode::Mixup: return "mixup";
    case Mode::Cumix: return "cumix";
    case Mode::CumixNoCurriculum: return "cumix_no_curriculum";
    case Mode::CumixInputOnly: return "cumix_input_only";
    case Mode::CumixFeatureOnly: return "cumix_feature_only";
  }
  return "?";
}

Mode parse_mode(std::string_view name) {
  std::string lower(name);
  for (char& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  for (Mode m : all_modes()) {
    if (lower == mode_name(m)) return m;
  }
  throw ConfigError("unknown mode '" + std::string(name) +
                    "' (expected agg, mixup, cumix, cumix_no_curriculum, cumix_input_only or "
                    "cumix_feature_only)");
}

std::vector<Mode> all_modes() {
  return {Mode::Agg,           Mode::Mixup,          Mode::CumixInputOnly,
          Mode::CumixFeatureOnly, Mode::CumixNoCurriculum, Mode::Cumix};
}

std::string EvalSpec::name() const {
  return std::string(classes == Classes::Seen ? "seen" : "unseen") + "@" +
         (domains == Domains::Train ? "train" : "test");
}

EvalSpec parse_eval_spec(std::string_view classes, std::string_view domains) {
  EvalSpec s;
  if (classes == "seen") {
    s.classes = EvalSpec::Classes::Seen;
  } else if (classes == "unseen") {
    s.classes = EvalSpec::Classes::Unseen;
  } else {
    throw ConfigError("eval classes must be 'seen' or 'unseen', got '" + std::string(classes) + "'");
  }
  if (domains == "train") {
    s.domains = EvalSpec::Domains::Train;
  } else if (domains == "test") {
    s.domains = EvalSpec::Domains::Test;
  } else {
    throw ConfigError("eval domains must be 'train' or 'test', got '" + std::string(domains) + "'");
  }
  return s;
}

EvalSpec default_eval_spec(Setting setting) {
  switch (setting) {
    case Setting::ZslDg: return {EvalSpec::Classes::Unseen, EvalSpec::Domains::Test};
    case Setting::Dg: return {EvalSpec::Classes::Seen, EvalSpec::Domains::Test};
    case Setting::Zsl: return {EvalSpec::Classes::Unseen, EvalSpec::Domains::Train};
  }
  return {};
}

void RunConfig::validate() const {
  optim.validate();
  loss.validate();
  if (batch_size < 4) throw ConfigError("batch_size must be at least 4");
  if (mode != Mode::Agg) mix.validate();
  for (std::size_t h : model.hidden_dims) {
    if (h == 0) throw ConfigError("model.hidden_dims entries must be positive");
  }
}

TrainResult train_run(const DatasetBundle& bundle, const SplitSpec& split, const RunConfig& cfg) {
  const auto started = std::chrono::steady_clock::now();
  cfg.validate();
  if (const auto problems = validate_bundle(bundle, split); !problems.empty()) {
    throw ValidationError("train_run: " + problems.front());
  }

  ModelConfig mc;
  mc.input_dim = bundle.features.cols();
  mc.hidden_dims = cfg.model.hidden_dims;
  mc.num_classes = split.seen_classes.size();
  mc.omega_trainable = cfg.model.omega_trainable;
  mc.init_seed = cfg.seed;
  mc.embed_dim = cfg.model.embed_dim ? cfg.model.embed_dim : bundle.embeddings.cols();
  std::optional<Matrix> frozen;
  if (!mc.omega_trainable) {
    if (mc.embed_dim != bundle.embeddings.cols()) {
      throw ConfigError("model.embed_dim " + std::to_string(mc.embed_dim) +
                        " must equal the dataset's embedding width " +
                        std::to_string(bundle.embeddings.cols()) + " when omega is frozen");
    }
    frozen = class_embeddings(bundle, split.seen_classes);
  }

  TrainResult result{init_model(mc, std::move(frozen)), {}};
  RunReport& report = result.report;
  report.config = cfg;
  report.setting = infer_setting(split);
  std::vector<EvalSpec> evals = cfg.evals;
  if (evals.empty()) evals.push_back(default_eval_spec(report.setting));
  report.config.evals = evals;
  for (const EvalSpec& spec : evals) {
    const auto& classes = spec.classes == EvalSpec::Classes::Seen ? split.seen_classes
                                                                  : split.unseen_classes;
    const auto domains = domains_for(split, spec.domains);
    if (classes.empty() || domains.empty()) {
      throw ConfigError("eval " + spec.name() + ": the split has no such classes or domains");
    }
    if (spec.classes == EvalSpec::Classes::Unseen && mc.omega_trainable) {
      throw ConfigError("eval " + spec.name() +
                        ": unseen classes need a frozen embedding table (model.omega_trainable)");
    }
  }

  const std::vector<std::size_t> seen_pos = seen_index(bundle, split);
  ModelGrads velocity = zero_grads(result.model);
  std::uint64_t hash = mix64(cfg.seed);

  for (std::size_t epoch = 0; epoch < cfg.optim.epochs; ++epoch) {
    const auto batches = make_batches(bundle, split, cfg.batch_size, epoch, cfg.seed);
    const CurriculumCoeffs coeffs = coeffs_for(cfg, epoch);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr_at_epoch(cfg.optim, epoch);
    rec.alpha = coeffs.alpha;
    rec.beta = coeffs.beta;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      for (std::size_t r : batches[b]) hash = mix64(hash ^ (r + 0x9e3779b97f4a7c15ULL * (b + 1)));
      const Batch batch = gather_batch(bundle, seen_pos, batches[b]);
      BatchOutcome out = run_batch(result.model, batch, cfg, coeffs, epoch, b);
      if (!std::isfinite(out.report.total)) {
        throw Error("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                    std::to_string(b) + " (non-finite loss)");
      }
      rec.loss_agg += out.report.loss_agg;
      rec.loss_mix_img += out.report.loss_mix_img;
      rec.loss_mix_feat += out.report.loss_mix_feat;
      rec.total += out.report.total;
      rec.cross_mixes += out.report.cross_mixes;
      rec.intra_mixes += out.report.intra_mixes;
      sgd_step(result.model, out.grads, velocity, cfg.optim, epoch);
    }
    const double inv = 1.0 / static_cast<double>(batches.size());
    rec.loss_agg *= inv;
    rec.loss_mix_img *= inv;
    rec.loss_mix_feat *= inv;
    rec.total *= inv;
    report.epochs.push_back(rec);
  }
  report.batch_hash = hash;

  for (const EvalSpec& spec : evals) {
    report.evals.push_back(evaluate(result.model, bundle, split, spec));
  }
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

EvalResult summarize_predictions(std::span<const std::uint32_t> truth,
                                 std::span<const std::uint32_t> predicted,
                                 std::span<const std::uint32_t> class_subset,
                                 std::span<const std::string> class_names) {
  if (truth.size() != predicted.size()) {
    throw DimensionError("evaluate: " + std::to_string(truth.size()) + " labels vs " +
                         std::to_string(predicted.size()) + " predictions");
  }
  if (truth.empty()) throw ValidationError("evaluate: empty evaluation set");
  std::map<std::uint32_t, std::pair<std::size_t, std::size_t>> tally;  // correct, count
  for (std::uint32_t c : class_subset) tally[c];
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    auto it = tally.find(truth[i]);
    if (it == tally.end()) {
      throw ValidationError("evaluate: sample " + std::to_string(i) + " has class " +
                            std::to_string(truth[i]) + " outside the evaluated class set");
    }
    ++it->second.second;
    if (truth[i] == predicted[i]) {
      ++it->second.first;
      ++correct;
    }
  }
  EvalResult out;
  out.num_samples = truth.size();
  out.top1 = static_cast<double>(correct) / static_cast<double>(truth.size());
  double sum = 0.0;
  for (std::uint32_t c : class_subset) {
    const auto [ok, count] = tally.at(c);
    if (count == 0) {
      warn("evaluate: class " + std::to_string(c) + " has no samples; excluded from the mean");
      continue;
    }
    ClassAccuracy ca;
    ca.class_id = c;
    ca.name = c < class_names.size() ? class_names[c] : std::to_string(c);
    ca.correct = ok;
    ca.count = count;
    ca.accuracy = static_cast<double>(ok) / static_cast<double>(count);
    sum += ca.accuracy;
    out.per_class.push_back(std::move(ca));
  }
  out.per_class_accuracy = sum / static_cast<double>(out.per_class.size());
  return out;
}

EvalResult evaluate(const Model& model, const DatasetBundle& bundle, const SplitSpec& split,
                    std::span<const std::uint32_t> class_subset,
                    std::span<const std::uint32_t> domain_subset) {
  if (class_subset.empty()) throw ValidationError("evaluate: empty class subset");
  if (bundle.features.cols() != model.config.input_dim) {
    throw DimensionError("evaluate: dataset features have " +
                         std::to_string(bundle.features.cols()) + " columns, model expects " +
                         std::to_string(model.config.input_dim));
  }

  Matrix table;
  if (model.config.omega_trainable) {
    const auto pos = seen_index(bundle, split);
    std::vector<std::size_t> rows;
    for (std::uint32_t c : class_subset) {
      if (c >= pos.size() || pos[c] >= model.params.embeddings.rows()) {
        throw ValidationError("evaluate: class " + std::to_string(c) +
                              " has no learned classifier row (not a seen class)");
      }
      rows.push_back(pos[c]);
    }
    table = gather_rows(model.params.embeddings, rows);
  } else {
    if (bundle.embeddings.cols() != model.config.embed_dim) {
      throw DimensionError("evaluate: dataset embeddings have width " +
                           std::to_string(bundle.embeddings.cols()) + ", model expects " +
                           std::to_string(model.config.embed_dim));
    }
    table = class_embeddings(bundle, class_subset);
  }

  const std::set<std::uint32_t> classes(class_subset.begin(), class_subset.end());
  const std::set<std::uint32_t> domains(domain_subset.begin(), domain_subset.end());
  std::vector<std::size_t> rows;
  std::vector<std::uint32_t> truth;
  for (std::size_t i = 0; i < bundle.num_samples(); ++i) {
    if (classes.contains(bundle.labels[i]) && domains.contains(bundle.domains[i])) {
      rows.push_back(i);
      truth.push_back(bundle.labels[i]);
    }
  }
  if (rows.empty()) throw ValidationError("evaluate: empty evaluation set");

  const auto local = predict(model, gather_rows(bundle.features, rows), table);
  std::vector<std::uint32_t> predicted(local.size());
  for (std::size_t i = 0; i < local.size(); ++i) predicted[i] = class_subset[local[i]];
  return summarize_predictions(truth, predicted, class_subset, bundle.class_names);
}

EvalResult evaluate(const Model& model, const DatasetBundle& bundle, const SplitSpec& split,
                    const EvalSpec& spec) {
  const auto& classes = spec.classes == EvalSpec::Classes::Seen ? split.seen_classes
                                                                : split.unseen_classes;
  EvalResult r = evaluate(model, bundle, split, classes, domains_for(split, spec.domains));
  r.name = spec.name();
  return r;
}

}  // namespace cumix
