#include "gzsl/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "gzsl/error.hpp"
#include "gzsl/kernels.hpp"

namespace gzsl {

Tensor2::Tensor2(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor2::Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Tensor2 Tensor2::row(std::span<const double> values) {
  return Tensor2(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

double Tensor2::item() const {
  if (rows_ != 1 || cols_ != 1) throw ShapeError("item() on non-scalar tensor " + shape_string(*this));
  return data_[0];
}

bool Tensor2::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor2::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor2& Tensor2::operator+=(const Tensor2& other) {
  require_same_shape(*this, other, "tensor +=");
  kernels::active().add(other.data(), data(), size());
  return *this;
}

std::string shape_string(const Tensor2& t) {
  return "[" + std::to_string(t.rows()) + "x" + std::to_string(t.cols()) + "]";
}

void require_same_shape(const Tensor2& a, const Tensor2& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shape " + shape_string(a) + " vs " + shape_string(b));
  }
}

void require_finite(const Tensor2& t, const char* what) {
  if (!t.all_finite()) throw NumericalError(std::string(what) + ": non-finite value");
}

Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_string(a) + " * " + shape_string(b));
  }
  Tensor2 out(a.rows(), b.cols());
  kernels::gemm_nn(kernels::active(), a.data(), b.data(), out.data(), a.rows(), a.cols(), b.cols());
  return out;
}

Tensor2 matmul_nt(const Tensor2& a, const Tensor2& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: " + shape_string(a) + " * " + shape_string(b) + "^T");
  }
  Tensor2 out(a.rows(), b.rows());
  kernels::gemm_nt(kernels::active(), a.data(), b.data(), out.data(), a.rows(), a.cols(), b.rows());
  return out;
}

Tensor2 matmul_tn(const Tensor2& a, const Tensor2& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn: " + shape_string(a) + "^T * " + shape_string(b));
  }
  Tensor2 out(a.cols(), b.cols());
  kernels::gemm_tn(kernels::active(), a.data(), b.data(), out.data(), a.cols(), a.rows(), b.cols());
  return out;
}

Tensor2 affine(const Tensor2& input, const Tensor2& weight, std::span<const double> bias) {
  if (input.cols() != weight.rows() || bias.size() != weight.cols()) {
    throw ShapeError("affine: input " + shape_string(input) + ", weight " + shape_string(weight) +
                     ", bias length " + std::to_string(bias.size()));
  }
  Tensor2 out = matmul(input, weight);
  const auto& kt = kernels::active();
  for (std::size_t r = 0; r < out.rows(); ++r) kt.add(bias.data(), out.row_span(r).data(), bias.size());
  return out;
}

Tensor2 transpose(const Tensor2& a) {
  Tensor2 out(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
  return out;
}

Tensor2 concat_cols(const Tensor2& a, const Tensor2& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("concat_cols: " + shape_string(a) + " and " + shape_string(b));
  }
  Tensor2 out(a.rows(), a.cols() + b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto dst = out.row_span(r);
    std::copy(a.row_span(r).begin(), a.row_span(r).end(), dst.begin());
    std::copy(b.row_span(r).begin(), b.row_span(r).end(), dst.begin() + a.cols());
  }
  return out;
}

Tensor2 gather_rows(const Tensor2& a, std::span<const std::size_t> rows) {
  Tensor2 out(rows.size(), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= a.rows()) throw ShapeError("gather_rows: row index out of range");
    std::copy(a.row_span(rows[i]).begin(), a.row_span(rows[i]).end(), out.row_span(i).begin());
  }
  return out;
}

}  // namespace gzsl
