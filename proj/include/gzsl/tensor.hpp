#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace gzsl {

// Dense row-major matrix of doubles. Value semantics; rows of a batch are
// samples and columns are features.
class Tensor2 {
 public:
  Tensor2() = default;
  Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Tensor2 row(std::span<const double> values);
  static Tensor2 scalar(double v) { return Tensor2(1, 1, v); }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row_span(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row_span(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  // Only valid for 1x1 tensors.
  double item() const;

  bool same_shape(const Tensor2& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool all_finite() const;
  void fill(double v);

  Tensor2& operator+=(const Tensor2& other);

  friend bool operator==(const Tensor2& a, const Tensor2& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

std::string shape_string(const Tensor2& t);

// Throws ShapeError unless the shapes agree.
void require_same_shape(const Tensor2& a, const Tensor2& b, const char* what);

// Throws NumericalError naming `what` if any entry is NaN or infinite.
void require_finite(const Tensor2& t, const char* what);

// Plain (untaped) dense algebra. All of these route through the active SIMD
// kernel table, so the taped and untaped paths produce identical bits.
Tensor2 matmul(const Tensor2& a, const Tensor2& b);
Tensor2 matmul_nt(const Tensor2& a, const Tensor2& b);  // a * b^T
Tensor2 matmul_tn(const Tensor2& a, const Tensor2& b);  // a^T * b

// out = input * weight + bias, bias broadcast over rows.
Tensor2 affine(const Tensor2& input, const Tensor2& weight, std::span<const double> bias);

Tensor2 transpose(const Tensor2& a);
Tensor2 concat_cols(const Tensor2& a, const Tensor2& b);
Tensor2 gather_rows(const Tensor2& a, std::span<const std::size_t> rows);

}  // namespace gzsl
