#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "cumix/numerics.hpp"

namespace cumix {

/// Shape and initialization of h = omega . g . f.
///
/// An empty `hidden_dims` makes the feature extractor f the identity. With
/// `omega_trainable == false` the class embedding table is frozen and must
/// be supplied at construction (zero-shot setting); otherwise it is a learned
/// classifier initialized like any other weight.
struct ModelConfig {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  std::size_t embed_dim = 0;
  std::size_t num_classes = 0;  // rows of the embedding table (seen classes)
  bool omega_trainable = false;
  std::uint64_t init_seed = 0;

  std::size_t feature_dim() const {
    return hidden_dims.empty() ? input_dim : hidden_dims.back();
  }
  bool extractor_is_identity() const { return hidden_dims.empty(); }

  bool operator==(const ModelConfig&) const = default;
};

struct Dense {
  Matrix weight;  // fan_in x fan_out
  std::vector<double> bias;

  bool operator==(const Dense&) const = default;
};

struct ModelParams {
  std::vector<Dense> extractor;  // ReLU after every layer
  Dense projection;              // g, no nonlinearity
  Matrix embeddings;             // num_classes x embed_dim

  bool operator==(const ModelParams&) const = default;
};

struct Model {
  ModelConfig config;
  ModelParams params;
};

/// Gradient set mirroring ModelParams. `embeddings` is empty when the table
/// is frozen.
struct ModelGrads {
  std::vector<Dense> extractor;
  Dense projection;
  std::optional<Matrix> embeddings;
};

Model init_model(const ModelConfig& config,
                 std::optional<Matrix> embeddings = std::nullopt);

ModelGrads zero_grads(const Model& model);
/// acc += scale * g
void add_scaled(ModelGrads& acc, const ModelGrads& g, double scale);

/// Trainable tensors in declaration order: extractor layers (weight, bias),
/// projection (weight, bias), then the embedding table when trainable.
std::vector<std::span<double>> trainable_tensors(Model& model);
std::vector<std::span<double>> tensors(ModelGrads& grads);
std::vector<std::span<const double>> tensors(const ModelGrads& grads);

struct ExtractorPass {
  std::vector<Matrix> layer_inputs;
  std::vector<Matrix> pre_activations;
  Matrix features;
};

struct HeadPass {
  Matrix projections;
  Matrix logits;
};

struct ForwardPass {
  ExtractorPass extractor;
  HeadPass head;

  const Matrix& features() const { return extractor.features; }
  const Matrix& projections() const { return head.projections; }
  const Matrix& logits() const { return head.logits; }
};

ExtractorPass extract(const Model& model, const Matrix& inputs);
/// Projects features with g and scores them against `class_embeddings`.
HeadPass head_forward(const Model& model, const Matrix& features,
                      const Matrix& class_embeddings);
HeadPass head_forward(const Model& model, const Matrix& features);
ForwardPass forward(const Model& model, const Matrix& inputs);

/// Accumulates head gradients into `grads` and returns d loss / d features.
Matrix head_backward(const Model& model, const Matrix& features,
                     const HeadPass& head, const Matrix& grad_logits,
                     ModelGrads& grads);
/// Accumulates extractor gradients into `grads`.
void extractor_backward(const Model& model, const ExtractorPass& pass,
                        const Matrix& grad_features, ModelGrads& grads);
ModelGrads backward(const Model& model, const ForwardPass& pass,
                    const Matrix& grad_logits);

/// Row-wise argmax, ties to the lowest index.
std::vector<std::size_t> argmax_rows(const Matrix& logits);
std::vector<std::size_t> predict(const Model& model, const Matrix& inputs);
/// Prediction over an explicit class set (e.g. unseen-class embeddings).
/// Indices refer to rows of `class_embeddings`.
std::vector<std::size_t> predict(const Model& model, const Matrix& inputs,
                                 const Matrix& class_embeddings);

/// Binary checkpoint plus a ".meta.json" sidecar with the same stem.
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);
std::filesystem::path checkpoint_sidecar(const std::filesystem::path& path);

}  // namespace cumix
