#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace cumix {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  /// "RxC" for error messages.
  std::string shape() const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Rows of `m` picked by `indices`, in that order.
Matrix gather_rows(const Matrix& m, std::span<const std::size_t> indices);

/// a * b
Matrix matmul(const Matrix& a, const Matrix& b);
/// a * b^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// a^T * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);

/// out[i,j] = sum_k input[i,k] * weight[k,j] + bias[j]
Matrix affine_forward(const Matrix& input, const Matrix& weight,
                      std::span<const double> bias);

struct AffineGrads {
  Matrix input;
  Matrix weight;
  std::vector<double> bias;
};

AffineGrads affine_backward(const Matrix& input, const Matrix& weight,
                            const Matrix& upstream);

Matrix relu(const Matrix& x);
/// Passes upstream where x > 0; the derivative at exactly 0 is taken as 0.
Matrix relu_backward(const Matrix& x, const Matrix& upstream);

/// Row-wise softmax with row-max subtraction.
Matrix softmax_rows(const Matrix& logits);

struct CrossEntropy {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d logits
};

/// -sum_c target[c] * log softmax(logits)[c]. The target must be a
/// probability vector (non-negative, summing to 1 within 1e-6).
CrossEntropy soft_cross_entropy(std::span<const double> logits,
                                std::span<const double> target);

/// Shannon entropy in nats; 0 log 0 is taken as 0.
double entropy(std::span<const double> p);

/// Mean soft cross-entropy over rows and its gradient w.r.t. the logits
/// (already divided by the row count).
struct BatchCrossEntropy {
  double loss = 0.0;
  Matrix grad;
};

BatchCrossEntropy soft_cross_entropy_rows(const Matrix& logits,
                                          const Matrix& targets);

}  // namespace cumix
