#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tailnet/errors.hpp"
#include "tailnet/rng.hpp"

namespace tailnet {

// Dense 64-bit tensor, either a vector (len) or a row-major matrix
// (rows x cols). Values are immutable through the public surface except for
// mutable_data(), which exists for gradient accumulation and the optimizer.
class Tensor {
 public:
  Tensor() = default;

  static Tensor vector(int64_t len) { return Tensor(len, 0, true); }
  static Tensor matrix(int64_t rows, int64_t cols) { return Tensor(rows, cols, false); }

  static Tensor from(std::vector<double> values) {
    Tensor t(static_cast<int64_t>(values.size()), 0, true);
    t.data_ = std::move(values);
    t.check_finite();
    return t;
  }

  static Tensor from(std::vector<double> values, int64_t rows, int64_t cols) {
    if (static_cast<int64_t>(values.size()) != rows * cols)
      throw ShapeError("matrix data length " + std::to_string(values.size()) +
                       " does not match " + std::to_string(rows) + "x" + std::to_string(cols));
    Tensor t(rows, cols, false);
    t.data_ = std::move(values);
    t.check_finite();
    return t;
  }

  static Tensor uniform(int64_t rows, int64_t cols, double lo, double hi, Rng& rng) {
    Tensor t = (cols == 0) ? vector(rows) : matrix(rows, cols);
    for (double& x : t.data_) x = rng.uniform(lo, hi);
    return t;
  }

  bool is_vector() const { return cols_ == 0; }
  int64_t rows() const { return rows_; }
  int64_t cols() const { return cols_; }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }

  // Vector length; shape error when called on a matrix.
  int64_t len() const {
    if (!is_vector()) throw ShapeError("len() on matrix " + shape_str());
    return rows_;
  }

  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }
  double at(int64_t r, int64_t c) const { return data_[static_cast<size_t>(r * cols_ + c)]; }

  const double* data() const { return data_.data(); }
  double* mutable_data() { return data_.data(); }
  std::span<const double> values() const { return data_; }

  std::string shape_str() const {
    if (is_vector()) return "(" + std::to_string(rows_) + ")";
    return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
  }

  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  void fill(double v) {
    for (double& x : data_) x = v;
  }

  bool all_finite() const {
    for (double x : data_)
      if (!std::isfinite(x)) return false;
    return true;
  }

 private:
  Tensor(int64_t rows, int64_t cols, bool vec)
      : rows_(rows), cols_(vec ? 0 : cols), data_(static_cast<size_t>(rows * (vec ? 1 : cols)), 0.0) {
    if (rows < 0 || (!vec && cols <= 0)) throw ShapeError("bad tensor shape");
  }

  void check_finite() const {
#ifndef NDEBUG
    if (!all_finite()) throw UsageError("non-finite value in tensor " + shape_str());
#endif
  }

  int64_t rows_ = 0;
  int64_t cols_ = 0;  // 0 means 1-D
  std::vector<double> data_;
};

inline Tensor zeros_like(const Tensor& t) {
  return t.is_vector() ? Tensor::vector(t.rows()) : Tensor::matrix(t.rows(), t.cols());
}

}  // namespace tailnet
