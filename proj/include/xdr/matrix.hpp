#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "xdr/kernels.hpp"
#include "xdr/rng.hpp"

namespace xdr {

// Dense row-major matrix of doubles. Value-semantic; every matrix produced
// by the training paths is expected to stay finite.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double value = 0.0)
      : rows(r), cols(c), data(r * c, value) {}

  static Matrix randn(std::size_t r, std::size_t c, double stddev,
                      SplitRng& rng) {
    Matrix out(r, c);
    for (double& x : out.data) x = rng.next_gaussian(stddev);
    return out;
  }

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) {
    return {data.data() + r * cols, cols};
  }
  std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }

  std::size_t size() const { return rows * cols; }
  bool same_shape(const Matrix& other) const {
    return rows == other.rows && cols == other.cols;
  }

  void fill(double value) { data.assign(rows * cols, value); }

  double frobenius_sq() const {
    return kernels::squared_norm(data.data(), data.size());
  }

  bool all_finite() const {
    for (double x : data)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

inline bool bitwise_equal(const Matrix& a, const Matrix& b) {
  return a.rows == b.rows && a.cols == b.cols && a.data == b.data;
}

inline void require_same_shape(const Matrix& a, const Matrix& b,
                               const char* what) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

}  // namespace xdr
