#include "moc/matrix.hpp"

#include <algorithm>
#include <cmath>

namespace moc {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("Matrix: data length " + std::to_string(data_.size()) +
                     " does not match " + shape_string());
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("Matrix: ragged literal");
    for (double v : r) {
      if (!std::isfinite(v)) throw std::invalid_argument("Matrix: non-finite literal entry");
      data_.push_back(v);
    }
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Matrix::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ, " + a.shape_string() + " * " +
                     b.shape_string());
  }
  Matrix c(a.rows(), b.cols());
  // i-k-j order: every C[i][j] accumulates over k in increasing order.
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out[j] += aik * brow[j];
    }
  }
  return c;
}

namespace {

template <typename Op>
Matrix elementwise(const Matrix& a, const Matrix& b, const char* name, Op op) {
  require_same_shape(a, b, name);
  Matrix c(a.rows(), a.cols());
  auto x = a.data();
  auto y = b.data();
  auto z = c.data();
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = op(x[i], y[i]);
  return c;
}

template <typename Op>
Matrix map(const Matrix& a, Op op) {
  Matrix c(a.rows(), a.cols());
  auto x = a.data();
  auto z = c.data();
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = op(x[i]);
  return c;
}

}  // namespace

Matrix hadamard(const Matrix& a, const Matrix& b) {
  return elementwise(a, b, "hadamard", [](double x, double y) { return x * y; });
}

Matrix add(const Matrix& a, const Matrix& b) {
  return elementwise(a, b, "add", [](double x, double y) { return x + y; });
}

Matrix subtract(const Matrix& a, const Matrix& b) {
  return elementwise(a, b, "subtract", [](double x, double y) { return x - y; });
}

Matrix scale(const Matrix& a, double factor) {
  return map(a, [factor](double x) { return x * factor; });
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

double max_abs(const Matrix& a) noexcept {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
  return m;
}

double max_rel_diff(const Matrix& a, const Matrix& b, double floor) {
  const double diff = max_abs_diff(a, b);
  if (diff == 0.0) return 0.0;
  return diff / std::max(max_abs(b), floor);
}

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double silu(double x) noexcept { return x * sigmoid(x); }

double silu_grad(double x) noexcept {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

Matrix silu(const Matrix& a) { return map(a, [](double x) { return silu(x); }); }

Matrix silu_grad(const Matrix& a) { return map(a, [](double x) { return silu_grad(x); }); }

}  // namespace moc
