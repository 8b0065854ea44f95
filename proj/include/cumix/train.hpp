#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cumix/data.hpp"
#include "cumix/losses.hpp"
#include "cumix/mixing.hpp"
#include "cumix/model.hpp"

namespace cumix {

/// SGD with momentum and a single step decay of the learning rate.
struct OptimConfig {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.001;
  std::size_t epochs = 30;
  double decay_factor = 0.1;
  std::optional<std::size_t> decay_epoch;  // default: ceil(2/3 * epochs)

  std::size_t resolved_decay_epoch() const;
  void validate() const;
};

double lr_at_epoch(const OptimConfig& cfg, std::size_t epoch);

/// v <- momentum * v + (grad + weight_decay * w);  w <- w - lr(epoch) * v.
/// Only trainable tensors move; a frozen embedding table is never touched.
void sgd_step(Model& model, const ModelGrads& grads, ModelGrads& velocity,
              const OptimConfig& cfg, std::size_t epoch);

enum class Mode {
  Agg,
  Mixup,
  Cumix,
  CumixNoCurriculum,
  CumixInputOnly,
  CumixFeatureOnly,
};

const char* mode_name(Mode mode);
/// Accepts the lower-case names ("cumix_no_curriculum") and the upper-case
/// enumerator spelling ("CUMIX_NO_CURRICULUM").
Mode parse_mode(std::string_view name);
std::vector<Mode> all_modes();

/// Which classes and domains an evaluation covers.
struct EvalSpec {
  enum class Classes { Seen, Unseen } classes = Classes::Unseen;
  enum class Domains { Train, Test } domains = Domains::Test;

  std::string name() const;  // e.g. "unseen@test"
  bool operator==(const EvalSpec&) const = default;
};

EvalSpec parse_eval_spec(std::string_view classes, std::string_view domains);
/// ZSL+DG: unseen@test, DG: seen@test, ZSL: unseen@train.
EvalSpec default_eval_spec(Setting setting);

struct ModelSpec {
  std::vector<std::size_t> hidden_dims;
  bool omega_trainable = false;
  std::size_t embed_dim = 0;  // 0: width of the dataset's embedding table
};

struct RunConfig {
  Mode mode = Mode::Cumix;
  ModelSpec model;
  OptimConfig optim;
  MixSchedule mix;
  LossWeights loss{1.0, 1.0};
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  std::vector<EvalSpec> evals;  // empty: default for the dataset's setting

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double loss_agg = 0.0;
  double loss_mix_img = 0.0;
  double loss_mix_feat = 0.0;
  double total = 0.0;
  std::size_t cross_mixes = 0;
  std::size_t intra_mixes = 0;
};

struct ClassAccuracy {
  std::uint32_t class_id = 0;
  std::string name;
  std::size_t correct = 0;
  std::size_t count = 0;
  double accuracy = 0.0;
};

struct EvalResult {
  std::string name;
  double per_class_accuracy = 0.0;
  double top1 = 0.0;
  std::size_t num_samples = 0;
  std::vector<ClassAccuracy> per_class;
};

struct RunReport {
  RunConfig config;
  Setting setting = Setting::ZslDg;
  std::vector<EpochRecord> epochs;
  std::vector<EvalResult> evals;
  std::uint64_t batch_hash = 0;
  double wall_clock_seconds = 0.0;
};

struct TrainResult {
  Model model;
  RunReport report;
};

/// Trains one model on the seen classes of the training domains and
/// evaluates it on the configured splits.
TrainResult train_run(const DatasetBundle& bundle, const SplitSpec& split,
                      const RunConfig& cfg);

/// Per-class and overall accuracy of `predicted` against `truth`. Classes in
/// `class_subset` without samples are excluded (with a warning).
EvalResult summarize_predictions(std::span<const std::uint32_t> truth,
                                 std::span<const std::uint32_t> predicted,
                                 std::span<const std::uint32_t> class_subset,
                                 std::span<const std::string> class_names);

/// Scores every sample whose class is in `class_subset` and whose domain is in
/// `domain_subset`, predicting only among `class_subset`.
EvalResult evaluate(const Model& model, const DatasetBundle& bundle, const SplitSpec& split,
                    std::span<const std::uint32_t> class_subset,
                    std::span<const std::uint32_t> domain_subset);
EvalResult evaluate(const Model& model, const DatasetBundle& bundle, const SplitSpec& split,
                    const EvalSpec& spec);

}  // namespace cumix
