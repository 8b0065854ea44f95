#include "cumix/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cumix/error.hpp"

namespace cumix {
namespace {

[[noreturn]] void shape_error(const char* op, const Matrix& a, const Matrix& b) {
  throw DimensionError(std::string(op) + ": shape mismatch " + a.shape() + " vs " +
                       b.shape());
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw DimensionError("Matrix: " + std::to_string(data_.size()) +
                         " values do not fill " + shape());
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0) {
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DimensionError("Matrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

std::string Matrix::shape() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> indices) {
  Matrix out(indices.size(), m.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= m.rows()) {
      throw DimensionError("gather_rows: row " + std::to_string(indices[i]) +
                           " out of range for " + m.shape());
    }
    std::ranges::copy(m.row(indices[i]), out.row(i).begin());
  }
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a, b);
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto o = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double s = a(i, k);
      const auto br = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) o[j] += s * br[j];
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) shape_error("matmul_nt", a, b);
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto ar = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const auto br = b.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += ar[k] * br[k];
      out(i, j) = s;
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) shape_error("matmul_tn", a, b);
  Matrix out(a.cols(), b.cols());
  for (std::size_t n = 0; n < a.rows(); ++n) {
    const auto ar = a.row(n);
    const auto br = b.row(n);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      auto o = out.row(i);
      const double s = ar[i];
      for (std::size_t j = 0; j < b.cols(); ++j) o[j] += s * br[j];
    }
  }
  return out;
}

Matrix affine_forward(const Matrix& input, const Matrix& weight,
                      std::span<const double> bias) {
  if (input.cols() != weight.rows()) shape_error("affine_forward", input, weight);
  if (bias.size() != weight.cols()) {
    throw DimensionError("affine_forward: bias of length " +
                         std::to_string(bias.size()) + " vs weight " + weight.shape());
  }
  Matrix out = matmul(input, weight);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto o = out.row(i);
    for (std::size_t j = 0; j < o.size(); ++j) o[j] += bias[j];
  }
  return out;
}

AffineGrads affine_backward(const Matrix& input, const Matrix& weight,
                            const Matrix& upstream) {
  if (input.cols() != weight.rows()) shape_error("affine_backward", input, weight);
  if (upstream.rows() != input.rows() || upstream.cols() != weight.cols()) {
    throw DimensionError("affine_backward: upstream " + upstream.shape() +
                         " does not match input " + input.shape() + " and weight " +
                         weight.shape());
  }
  AffineGrads g;
  g.weight = matmul_tn(input, upstream);
  g.bias.assign(upstream.cols(), 0.0);
  for (std::size_t i = 0; i < upstream.rows(); ++i) {
    const auto u = upstream.row(i);
    for (std::size_t j = 0; j < u.size(); ++j) g.bias[j] += u[j];
  }
  g.input = matmul_nt(upstream, weight);
  return g;
}

Matrix relu(const Matrix& x) {
  Matrix out = x;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

Matrix relu_backward(const Matrix& x, const Matrix& upstream) {
  if (x.rows() != upstream.rows() || x.cols() != upstream.cols()) {
    shape_error("relu_backward", x, upstream);
  }
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out.data()[i] = x.data()[i] > 0.0 ? upstream.data()[i] : 0.0;
  }
  return out;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto in = logits.row(i);
    auto o = out.row(i);
    if (in.empty()) continue;
    const double mx = *std::ranges::max_element(in);
    double sum = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    for (double& v : o) v /= sum;
  }
  return out;
}

CrossEntropy soft_cross_entropy(std::span<const double> logits,
                                std::span<const double> target) {
  if (logits.size() != target.size()) {
    throw DimensionError("soft_cross_entropy: " + std::to_string(logits.size()) +
                         " logits vs " + std::to_string(target.size()) +
                         " target entries");
  }
  if (logits.empty()) throw DimensionError("soft_cross_entropy: no classes");
  double total = 0.0;
  for (double t : target) {
    if (!(t >= 0.0)) throw ValidationError("soft_cross_entropy: negative target entry");
    total += t;
  }
  if (std::abs(total - 1.0) > 1e-6) {
    std::ostringstream msg;
    msg << "soft_cross_entropy: target sums to " << total << ", expected 1";
    throw ValidationError(msg.str());
  }

  const double mx = *std::ranges::max_element(logits);
  double sum = 0.0;
  for (double x : logits) sum += std::exp(x - mx);
  const double log_z = mx + std::log(sum);

  CrossEntropy ce;
  ce.grad.resize(logits.size());
  for (std::size_t c = 0; c < logits.size(); ++c) {
    const double log_p = logits[c] - log_z;
    if (target[c] > 0.0) ce.loss -= target[c] * log_p;
    ce.grad[c] = std::exp(log_p) - target[c];
  }
  return ce;
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

BatchCrossEntropy soft_cross_entropy_rows(const Matrix& logits,
                                          const Matrix& targets) {
  if (logits.rows() != targets.rows() || logits.cols() != targets.cols()) {
    shape_error("soft_cross_entropy_rows", logits, targets);
  }
  if (logits.rows() == 0) throw DimensionError("soft_cross_entropy_rows: empty batch");
  const double inv_n = 1.0 / static_cast<double>(logits.rows());
  BatchCrossEntropy out{0.0, Matrix(logits.rows(), logits.cols())};
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const CrossEntropy ce = soft_cross_entropy(logits.row(i), targets.row(i));
    out.loss += ce.loss;
    auto g = out.grad.row(i);
    for (std::size_t c = 0; c < g.size(); ++c) g[c] = ce.grad[c] * inv_n;
  }
  out.loss *= inv_n;
  return out;
}

}  // namespace cumix
