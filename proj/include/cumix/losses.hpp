#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cumix/mixing.hpp"
#include "cumix/model.hpp"
#include "cumix/numerics.hpp"
#include "cumix/rng.hpp"

namespace cumix {

/// A training minibatch. Labels index rows of the model's class table.
struct Batch {
  Matrix inputs;
  std::vector<std::size_t> labels;
  std::vector<std::uint32_t> domains;

  std::size_t size() const { return labels.size(); }
};

struct LossWeights {
  double eta_img = 0.0;
  double eta_feat = 0.0;

  void validate() const;
};

struct LossResult {
  double loss = 0.0;
  ModelGrads grads;
};

/// One-hot rows; throws ValidationError for labels outside [0, num_classes).
Matrix one_hot(std::span<const std::size_t> labels, std::size_t num_classes);

/// Mean cross-entropy of the clean batch against one-hot labels.
LossResult loss_agg(const Model& model, const Batch& batch);

/// Mixes raw inputs and their one-hot labels with one draw per anchor, then
/// scores the mixed inputs through the whole network.
LossResult loss_mix_input(const Model& model, const Batch& batch,
                          std::span<const MixDraw> draws);

/// Extracts features of the clean batch, mixes them (and the labels) with one
/// draw per anchor, then scores the mixed features with g and omega.
/// Gradients reach f through all three branches of every mix.
LossResult loss_mix_feature(const Model& model, const Batch& batch,
                            std::span<const MixDraw> draws);

struct MixPair {
  std::size_t anchor = 0;
  std::size_t partner = 0;
  double lambda = 1.0;
};

/// Plain two-sample mixup at the input level with explicit pairs.
LossResult loss_mixup_pairs(const Model& model, const Batch& batch,
                            std::span<const MixPair> pairs);
/// Plain mixup: partners from a random permutation of the batch (domain
/// agnostic), one lambda ~ Beta(beta, beta) per anchor.
LossResult loss_mixup_baseline(const Model& model, const Batch& batch, double beta,
                               RngStream& rng);
std::vector<MixPair> draw_mixup_pairs(std::size_t batch_size, double beta, RngStream& rng);

/// Input-level and feature-level draws for one batch. The two sets come from
/// independent substreams.
struct CumixDraws {
  std::vector<MixDraw> input;
  std::vector<MixDraw> feature;
};

CumixDraws draw_cumix(std::span<const std::uint32_t> domains, const CurriculumCoeffs& coeffs,
                      std::uint64_t seed, std::uint64_t epoch, std::uint64_t batch);

struct BatchLossReport {
  double loss_agg = 0.0;
  double loss_mix_img = 0.0;
  double loss_mix_feat = 0.0;
  double total = 0.0;
  std::size_t cross_mixes = 0;
  std::size_t intra_mixes = 0;
};

struct CumixResult {
  BatchLossReport report;
  ModelGrads grads;
};

/// loss_agg + eta_img * loss_mix_input + eta_feat * loss_mix_feature on
/// pre-drawn mixes.
///
/// When the feature extractor is the identity the two mixing terms are the
/// same function of their draws, so only the input-level term is evaluated
/// and it is weighted by eta_img + eta_feat. Both report fields then carry
/// that single value.
CumixResult loss_cumix(const Model& model, const Batch& batch, const CumixDraws& draws,
                       const LossWeights& weights);

/// Same, drawing mixes from the curriculum at 0-based `epoch`.
CumixResult loss_cumix(const Model& model, const Batch& batch, std::size_t epoch,
                       const MixSchedule& schedule, const LossWeights& weights,
                       std::uint64_t seed, std::uint64_t batch_index);

}  // namespace cumix
