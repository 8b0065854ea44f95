#include "cumix/model.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "cumix/error.hpp"
#include "cumix/rng.hpp"

namespace cumix {
namespace {

constexpr std::uint16_t kCheckpointVersion = 1;

Dense init_dense(std::size_t fan_in, std::size_t fan_out, std::uint64_t seed,
                 std::uint64_t layer) {
  Dense d{Matrix(fan_in, fan_out), std::vector<double>(fan_out, 0.0)};
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  RngStream rng(seed, "init", {layer});
  for (double& w : d.weight.data()) w = bound * (2.0 * rng.uniform() - 1.0);
  return d;
}

Dense zeros_like(const Dense& d) {
  return {Matrix(d.weight.rows(), d.weight.cols()), std::vector<double>(d.bias.size())};
}

void add_scaled(Dense& acc, const Dense& g, double s) {
  for (std::size_t i = 0; i < acc.weight.size(); ++i) {
    acc.weight.data()[i] += s * g.weight.data()[i];
  }
  for (std::size_t i = 0; i < acc.bias.size(); ++i) acc.bias[i] += s * g.bias[i];
}

void add_into(Matrix& acc, const Matrix& g) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc.data()[i] += g.data()[i];
}

void add_into(std::vector<double>& acc, const std::vector<double>& g) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
}

void validate_config(const ModelConfig& c) {
  if (c.input_dim == 0) throw ConfigError("model: input_dim must be positive");
  if (c.embed_dim == 0) throw ConfigError("model: embed_dim must be positive");
  if (c.num_classes == 0) throw ConfigError("model: num_classes must be positive");
  for (std::size_t h : c.hidden_dims) {
    if (h == 0) throw ConfigError("model: hidden layer widths must be positive");
  }
}

std::uint32_t narrow32(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint32_t>::max()) {
    throw ConfigError(std::string("checkpoint: ") + what + " exceeds 32 bits");
  }
  return static_cast<std::uint32_t>(v);
}

nlohmann::json config_json(const ModelConfig& c) {
  return {{"format", "CMXM"},
          {"version", kCheckpointVersion},
          {"input_dim", c.input_dim},
          {"hidden_dims", c.hidden_dims},
          {"embed_dim", c.embed_dim},
          {"num_classes", c.num_classes},
          {"omega_trainable", c.omega_trainable},
          {"init_seed", c.init_seed}};
}

}  // namespace

Model init_model(const ModelConfig& config, std::optional<Matrix> embeddings) {
  validate_config(config);
  Model m{config, {}};
  std::size_t fan_in = config.input_dim;
  std::uint64_t layer = 0;
  for (std::size_t width : config.hidden_dims) {
    m.params.extractor.push_back(init_dense(fan_in, width, config.init_seed, layer++));
    fan_in = width;
  }
  m.params.projection = init_dense(fan_in, config.embed_dim, config.init_seed, layer++);

  if (embeddings) {
    if (embeddings->rows() != config.num_classes ||
        embeddings->cols() != config.embed_dim) {
      throw DimensionError("init_model: embeddings " + embeddings->shape() +
                           " do not match num_classes x embed_dim " +
                           std::to_string(config.num_classes) + "x" +
                           std::to_string(config.embed_dim));
    }
    m.params.embeddings = std::move(*embeddings);
  } else if (!config.omega_trainable) {
    throw ConfigError("init_model: a frozen embedding table must be supplied");
  } else {
    // Learned classifier: rows are class vectors, fan_in = embed_dim.
    Dense w = init_dense(config.embed_dim, config.num_classes, config.init_seed, layer);
    m.params.embeddings = Matrix(config.num_classes, config.embed_dim);
    for (std::size_t c = 0; c < config.num_classes; ++c) {
      for (std::size_t e = 0; e < config.embed_dim; ++e) {
        m.params.embeddings(c, e) = w.weight(e, c);
      }
    }
  }
  return m;
}

ModelGrads zero_grads(const Model& model) {
  ModelGrads g;
  for (const Dense& d : model.params.extractor) g.extractor.push_back(zeros_like(d));
  g.projection = zeros_like(model.params.projection);
  if (model.config.omega_trainable) {
    g.embeddings = Matrix(model.params.embeddings.rows(), model.params.embeddings.cols());
  }
  return g;
}

void add_scaled(ModelGrads& acc, const ModelGrads& g, double scale) {
  if (acc.extractor.size() != g.extractor.size() ||
      acc.embeddings.has_value() != g.embeddings.has_value()) {
    throw DimensionError("add_scaled: gradient sets have different layouts");
  }
  for (std::size_t i = 0; i < acc.extractor.size(); ++i) {
    add_scaled(acc.extractor[i], g.extractor[i], scale);
  }
  add_scaled(acc.projection, g.projection, scale);
  if (acc.embeddings) {
    for (std::size_t i = 0; i < acc.embeddings->size(); ++i) {
      acc.embeddings->data()[i] += scale * g.embeddings->data()[i];
    }
  }
}

std::vector<std::span<double>> trainable_tensors(Model& model) {
  std::vector<std::span<double>> out;
  for (Dense& d : model.params.extractor) {
    out.emplace_back(d.weight.data());
    out.emplace_back(d.bias);
  }
  out.emplace_back(model.params.projection.weight.data());
  out.emplace_back(model.params.projection.bias);
  if (model.config.omega_trainable) out.emplace_back(model.params.embeddings.data());
  return out;
}

std::vector<std::span<double>> tensors(ModelGrads& grads) {
  std::vector<std::span<double>> out;
  for (Dense& d : grads.extractor) {
    out.emplace_back(d.weight.data());
    out.emplace_back(d.bias);
  }
  out.emplace_back(grads.projection.weight.data());
  out.emplace_back(grads.projection.bias);
  if (grads.embeddings) out.emplace_back(grads.embeddings->data());
  return out;
}

std::vector<std::span<const double>> tensors(const ModelGrads& grads) {
  auto mutable_view = tensors(const_cast<ModelGrads&>(grads));
  return {mutable_view.begin(), mutable_view.end()};
}

ExtractorPass extract(const Model& model, const Matrix& inputs) {
  if (inputs.cols() != model.config.input_dim) {
    throw DimensionError("forward: input " + inputs.shape() + " but model expects " +
                         std::to_string(model.config.input_dim) + " columns");
  }
  ExtractorPass pass;
  Matrix x = inputs;
  for (const Dense& layer : model.params.extractor) {
    Matrix pre = affine_forward(x, layer.weight, layer.bias);
    pass.layer_inputs.push_back(std::move(x));
    x = relu(pre);
    pass.pre_activations.push_back(std::move(pre));
  }
  pass.features = std::move(x);
  return pass;
}

HeadPass head_forward(const Model& model, const Matrix& features,
                      const Matrix& class_embeddings) {
  HeadPass head;
  head.projections =
      affine_forward(features, model.params.projection.weight, model.params.projection.bias);
  head.logits = matmul_nt(head.projections, class_embeddings);
  return head;
}

HeadPass head_forward(const Model& model, const Matrix& features) {
  return head_forward(model, features, model.params.embeddings);
}

ForwardPass forward(const Model& model, const Matrix& inputs) {
  ForwardPass pass;
  pass.extractor = extract(model, inputs);
  pass.head = head_forward(model, pass.extractor.features);
  return pass;
}

Matrix head_backward(const Model& model, const Matrix& features, const HeadPass& head,
                     const Matrix& grad_logits, ModelGrads& grads) {
  if (grad_logits.rows() != head.logits.rows() ||
      grad_logits.cols() != head.logits.cols()) {
    throw DimensionError("backward: grad_logits " + grad_logits.shape() +
                         " vs logits " + head.logits.shape());
  }
  const Matrix& w = model.params.embeddings;
  if (grads.embeddings) add_into(*grads.embeddings, matmul_tn(grad_logits, head.projections));
  const Matrix grad_proj = matmul(grad_logits, w);
  AffineGrads g = affine_backward(features, model.params.projection.weight, grad_proj);
  add_into(grads.projection.weight, g.weight);
  add_into(grads.projection.bias, g.bias);
  return std::move(g.input);
}

void extractor_backward(const Model& model, const ExtractorPass& pass,
                        const Matrix& grad_features, ModelGrads& grads) {
  Matrix upstream = grad_features;
  for (std::size_t l = model.params.extractor.size(); l-- > 0;) {
    const Matrix grad_pre = relu_backward(pass.pre_activations[l], upstream);
    AffineGrads g =
        affine_backward(pass.layer_inputs[l], model.params.extractor[l].weight, grad_pre);
    add_into(grads.extractor[l].weight, g.weight);
    add_into(grads.extractor[l].bias, g.bias);
    upstream = std::move(g.input);
  }
}

ModelGrads backward(const Model& model, const ForwardPass& pass,
                    const Matrix& grad_logits) {
  ModelGrads grads = zero_grads(model);
  const Matrix grad_features =
      head_backward(model, pass.features(), pass.head, grad_logits, grads);
  extractor_backward(model, pass.extractor, grad_features, grads);
  return grads;
}

std::vector<std::size_t> argmax_rows(const Matrix& logits) {
  if (logits.cols() == 0) throw ValidationError("predict: empty active class set");
  std::vector<std::size_t> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto r = logits.row(i);
    std::size_t best = 0;
    for (std::size_t c = 1; c < r.size(); ++c) {
      if (r[c] > r[best]) best = c;
    }
    out[i] = best;
  }
  return out;
}

std::vector<std::size_t> predict(const Model& model, const Matrix& inputs) {
  return argmax_rows(forward(model, inputs).logits());
}

std::vector<std::size_t> predict(const Model& model, const Matrix& inputs,
                                 const Matrix& class_embeddings) {
  if (class_embeddings.rows() == 0) {
    throw ValidationError("predict: empty active class set");
  }
  if (class_embeddings.cols() != model.config.embed_dim) {
    throw DimensionError("predict: class embeddings " + class_embeddings.shape() +
                         " vs embed_dim " + std::to_string(model.config.embed_dim));
  }
  const ExtractorPass pass = extract(model, inputs);
  return argmax_rows(head_forward(model, pass.features, class_embeddings).logits);
}

std::filesystem::path checkpoint_sidecar(const std::filesystem::path& path) {
  std::filesystem::path p = path;
  p.replace_extension(".meta.json");
  return p;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  const ModelConfig& c = model.config;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("save_checkpoint: cannot open " + path.string());
  out.write("CMXM", 4);
  detail::put_le<std::uint16_t>(out, kCheckpointVersion);
  detail::put_le<std::uint32_t>(out, narrow32(c.input_dim, "input_dim"));
  detail::put_le<std::uint32_t>(out, narrow32(c.hidden_dims.size(), "depth"));
  for (std::size_t h : c.hidden_dims) detail::put_le<std::uint32_t>(out, narrow32(h, "width"));
  detail::put_le<std::uint32_t>(out, narrow32(c.embed_dim, "embed_dim"));
  detail::put_le<std::uint32_t>(out, narrow32(c.num_classes, "num_classes"));
  detail::put_le<std::uint32_t>(out, c.omega_trainable ? 1u : 0u);
  detail::put_le<std::uint64_t>(out, c.init_seed);
  auto put_all = [&](std::span<const double> values) {
    for (double v : values) detail::put_f32(out, v);
  };
  for (const Dense& d : model.params.extractor) {
    put_all(d.weight.data());
    put_all(d.bias);
  }
  put_all(model.params.projection.weight.data());
  put_all(model.params.projection.bias);
  put_all(model.params.embeddings.data());
  if (!out) throw IoError("save_checkpoint: write failed for " + path.string());

  std::ofstream meta(checkpoint_sidecar(path), std::ios::trunc);
  if (!meta) throw IoError("save_checkpoint: cannot write sidecar for " + path.string());
  meta << config_json(c).dump(2) << '\n';
}

Model load_checkpoint(const std::filesystem::path& path) {
  const std::string what = "checkpoint " + path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_checkpoint: cannot open " + path.string());
  detail::expect_magic(in, "CMXM", what);
  const auto version = detail::get_le<std::uint16_t>(in, what);
  if (version != kCheckpointVersion) {
    throw FormatError(what + ": unsupported version " + std::to_string(version));
  }
  ModelConfig c;
  c.input_dim = detail::get_le<std::uint32_t>(in, what);
  const auto depth = detail::get_le<std::uint32_t>(in, what);
  if (depth > 1024) throw FormatError(what + ": implausible depth " + std::to_string(depth));
  for (std::uint32_t i = 0; i < depth; ++i) {
    c.hidden_dims.push_back(detail::get_le<std::uint32_t>(in, what));
  }
  c.embed_dim = detail::get_le<std::uint32_t>(in, what);
  c.num_classes = detail::get_le<std::uint32_t>(in, what);
  const auto trainable = detail::get_le<std::uint32_t>(in, what);
  if (trainable > 1) throw FormatError(what + ": bad omega_trainable flag");
  c.omega_trainable = trainable == 1;
  c.init_seed = detail::get_le<std::uint64_t>(in, what);
  try {
    validate_config(c);
  } catch (const ConfigError& e) {
    throw ValidationError(what + ": " + e.what());
  }

  Model m{c, {}};
  auto get_all = [&](std::span<double> values) {
    for (double& v : values) v = detail::get_f32(in, what);
  };
  std::size_t fan_in = c.input_dim;
  for (std::size_t width : c.hidden_dims) {
    Dense d{Matrix(fan_in, width), std::vector<double>(width)};
    get_all(d.weight.data());
    get_all(d.bias);
    m.params.extractor.push_back(std::move(d));
    fan_in = width;
  }
  m.params.projection = {Matrix(fan_in, c.embed_dim), std::vector<double>(c.embed_dim)};
  get_all(m.params.projection.weight.data());
  get_all(m.params.projection.bias);
  m.params.embeddings = Matrix(c.num_classes, c.embed_dim);
  get_all(m.params.embeddings.data());
  detail::expect_eof(in, what);

  const auto sidecar = checkpoint_sidecar(path);
  if (std::filesystem::exists(sidecar)) {
    std::ifstream meta_in(sidecar);
    nlohmann::json meta;
    try {
      meta = nlohmann::json::parse(meta_in);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("checkpoint sidecar " + sidecar.string() + ": " + e.what());
    }
    const nlohmann::json expected = config_json(c);
    for (const auto& [key, value] : expected.items()) {
      if (!meta.contains(key) || meta.at(key) != value) {
        throw ValidationError("checkpoint sidecar " + sidecar.string() + ": '" + key +
                              "' disagrees with the binary (binary has " +
                              value.dump() + ")");
      }
    }
  }
  return m;
}

}  // namespace cumix
