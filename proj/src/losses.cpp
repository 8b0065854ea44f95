#include "cumix/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "cumix/error.hpp"

namespace cumix {
namespace {

void check_batch(const Model& model, const Batch& batch) {
  if (batch.size() == 0) throw ValidationError("loss: empty batch");
  if (batch.inputs.rows() != batch.size()) {
    throw DimensionError("loss: " + std::to_string(batch.inputs.rows()) +
                         " input rows vs " + std::to_string(batch.size()) + " labels");
  }
  if (!batch.domains.empty() && batch.domains.size() != batch.size()) {
    throw DimensionError("loss: " + std::to_string(batch.domains.size()) +
                         " domain ids vs " + std::to_string(batch.size()) + " labels");
  }
  if (batch.inputs.cols() != model.config.input_dim) {
    throw DimensionError("loss: inputs " + batch.inputs.shape() + " vs input_dim " +
                         std::to_string(model.config.input_dim));
  }
}

void check_draws(const Batch& batch, std::span<const MixDraw> draws) {
  if (draws.size() != batch.size()) {
    throw DimensionError("loss: " + std::to_string(draws.size()) + " mix draws for a batch of " +
                         std::to_string(batch.size()));
  }
  for (const MixDraw& d : draws) {
    const Triplet& t = d.triplet;
    if (t.anchor >= batch.size() || t.cross >= batch.size() || t.intra >= batch.size()) {
      throw DimensionError("loss: triplet index outside the batch");
    }
  }
}

Matrix mix_rows(const Matrix& source, std::span<const MixDraw> draws) {
  Matrix out(draws.size(), source.cols());
  for (std::size_t n = 0; n < draws.size(); ++n) {
    const Triplet& t = draws[n].triplet;
    const auto mixed =
        mix3(source.row(t.anchor), source.row(t.cross), source.row(t.intra), draws[n].coeffs);
    std::ranges::copy(mixed, out.row(n).begin());
  }
  return out;
}

LossResult score(const Model& model, const Matrix& inputs, const Matrix& targets) {
  const ForwardPass pass = forward(model, inputs);
  BatchCrossEntropy ce = soft_cross_entropy_rows(pass.logits(), targets);
  return {ce.loss, backward(model, pass, ce.grad)};
}

}  // namespace

void LossWeights::validate() const {
  if (!(std::isfinite(eta_img) && eta_img >= 0.0)) {
    throw ConfigError("loss.eta_img must be finite and non-negative");
  }
  if (!(std::isfinite(eta_feat) && eta_feat >= 0.0)) {
    throw ConfigError("loss.eta_feat must be finite and non-negative");
  }
}

Matrix one_hot(std::span<const std::size_t> labels, std::size_t num_classes) {
  Matrix out(labels.size(), num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) {
      throw ValidationError("label " + std::to_string(labels[i]) + " at batch row " +
                            std::to_string(i) + " is outside the " +
                            std::to_string(num_classes) + " seen classes");
    }
    out(i, labels[i]) = 1.0;
  }
  return out;
}

LossResult loss_agg(const Model& model, const Batch& batch) {
  check_batch(model, batch);
  return score(model, batch.inputs, one_hot(batch.labels, model.config.num_classes));
}

LossResult loss_mix_input(const Model& model, const Batch& batch,
                          std::span<const MixDraw> draws) {
  check_batch(model, batch);
  check_draws(batch, draws);
  const Matrix targets = one_hot(batch.labels, model.config.num_classes);
  return score(model, mix_rows(batch.inputs, draws), mix_rows(targets, draws));
}

LossResult loss_mix_feature(const Model& model, const Batch& batch,
                            std::span<const MixDraw> draws) {
  check_batch(model, batch);
  check_draws(batch, draws);
  const Matrix targets = one_hot(batch.labels, model.config.num_classes);
  const ExtractorPass pass = extract(model, batch.inputs);
  const Matrix mixed = mix_rows(pass.features, draws);
  const HeadPass head = head_forward(model, mixed);
  BatchCrossEntropy ce = soft_cross_entropy_rows(head.logits, mix_rows(targets, draws));

  LossResult out{ce.loss, zero_grads(model)};
  const Matrix grad_mixed = head_backward(model, mixed, head, ce.grad, out.grads);
  Matrix grad_features(pass.features.rows(), pass.features.cols());
  for (std::size_t n = 0; n < draws.size(); ++n) {
    const Triplet& t = draws[n].triplet;
    const double lam = draws[n].coeffs.lambda;
    const double g = static_cast<double>(draws[n].coeffs.gamma);
    const double w_anchor = lam;
    const double w_cross = (1.0 - lam) * g;
    const double w_intra = (1.0 - lam) * (1.0 - g);
    const auto up = grad_mixed.row(n);
    auto ga = grad_features.row(t.anchor);
    auto gc = grad_features.row(t.cross);
    auto gi = grad_features.row(t.intra);
    for (std::size_t c = 0; c < up.size(); ++c) {
      ga[c] += w_anchor * up[c];
      gc[c] += w_cross * up[c];
      gi[c] += w_intra * up[c];
    }
  }
  extractor_backward(model, pass, grad_features, out.grads);
  return out;
}

LossResult loss_mixup_pairs(const Model& model, const Batch& batch,
                            std::span<const MixPair> pairs) {
  check_batch(model, batch);
  if (pairs.size() != batch.size()) {
    throw DimensionError("loss_mixup: " + std::to_string(pairs.size()) +
                         " pairs for a batch of " + std::to_string(batch.size()));
  }
  const Matrix targets = one_hot(batch.labels, model.config.num_classes);
  Matrix inputs(pairs.size(), batch.inputs.cols());
  Matrix mixed_targets(pairs.size(), targets.cols());
  for (std::size_t n = 0; n < pairs.size(); ++n) {
    const MixPair& p = pairs[n];
    if (p.anchor >= batch.size() || p.partner >= batch.size()) {
      throw DimensionError("loss_mixup: pair index outside the batch");
    }
    std::ranges::copy(mix2(batch.inputs.row(p.anchor), batch.inputs.row(p.partner), p.lambda),
                      inputs.row(n).begin());
    std::ranges::copy(mix2(targets.row(p.anchor), targets.row(p.partner), p.lambda),
                      mixed_targets.row(n).begin());
  }
  return score(model, inputs, mixed_targets);
}

std::vector<MixPair> draw_mixup_pairs(std::size_t batch_size, double beta, RngStream& rng) {
  std::vector<std::size_t> perm(batch_size);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = batch_size; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  std::vector<MixPair> pairs(batch_size);
  for (std::size_t n = 0; n < batch_size; ++n) {
    pairs[n] = {n, perm[n], sample_lambda(beta, rng)};
  }
  return pairs;
}

LossResult loss_mixup_baseline(const Model& model, const Batch& batch, double beta,
                               RngStream& rng) {
  if (!(beta > 0.0)) throw ConfigError("loss_mixup: beta must be positive");
  const auto pairs = draw_mixup_pairs(batch.size(), beta, rng);
  return loss_mixup_pairs(model, batch, pairs);
}

CumixDraws draw_cumix(std::span<const std::uint32_t> domains, const CurriculumCoeffs& coeffs,
                      std::uint64_t seed, std::uint64_t epoch, std::uint64_t batch) {
  return {draw_mixes(domains, coeffs, MixLevel::Input, seed, epoch, batch),
          draw_mixes(domains, coeffs, MixLevel::Feature, seed, epoch, batch)};
}

CumixResult loss_cumix(const Model& model, const Batch& batch, const CumixDraws& draws,
                       const LossWeights& weights) {
  weights.validate();
  CumixResult out;
  LossResult agg = loss_agg(model, batch);
  out.report.loss_agg = agg.loss;
  out.grads = std::move(agg.grads);

  auto count = [&](std::span<const MixDraw> ds) {
    for (const MixDraw& d : ds) {
      if (d.coeffs.gamma == 1) {
        ++out.report.cross_mixes;
      } else {
        ++out.report.intra_mixes;
      }
    }
  };

  if (model.config.extractor_is_identity()) {
    const LossResult mix = loss_mix_input(model, batch, draws.input);
    const double w = weights.eta_img + weights.eta_feat;
    out.report.loss_mix_img = mix.loss;
    out.report.loss_mix_feat = mix.loss;
    out.report.total = out.report.loss_agg + w * mix.loss;
    add_scaled(out.grads, mix.grads, w);
    count(draws.input);
    return out;
  }

  const LossResult img = loss_mix_input(model, batch, draws.input);
  const LossResult feat = loss_mix_feature(model, batch, draws.feature);
  out.report.loss_mix_img = img.loss;
  out.report.loss_mix_feat = feat.loss;
  out.report.total = out.report.loss_agg + weights.eta_img * img.loss +
                     weights.eta_feat * feat.loss;
  add_scaled(out.grads, img.grads, weights.eta_img);
  add_scaled(out.grads, feat.grads, weights.eta_feat);
  count(draws.input);
  count(draws.feature);
  return out;
}

CumixResult loss_cumix(const Model& model, const Batch& batch, std::size_t epoch,
                       const MixSchedule& schedule, const LossWeights& weights,
                       std::uint64_t seed, std::uint64_t batch_index) {
  schedule.validate();
  const CurriculumCoeffs coeffs = schedule_coeffs(epoch, schedule);
  return loss_cumix(model, batch, draw_cumix(batch.domains, coeffs, seed, epoch, batch_index),
                    weights);
}

}  // namespace cumix
