#pragma once

#include <functional>
#include <span>
#include <vector>

#include "xdr/matrix.hpp"

namespace xdr {

// Predictions are clamped into [kProbClip, 1-kProbClip] before any log.
inline constexpr double kProbClip = 1e-7;

// Numerically stable logistic; saturates instead of overflowing.
double sigmoid(double x);

// Max-subtracted softmax. Throws on empty input ("empty attention support").
void stable_softmax(std::span<const double> logits, std::span<double> out);
std::vector<double> stable_softmax(std::span<const double> logits);

// -weight * (label*log(pred) + (1-label)*log(1-pred)), pred clamped.
double binary_cross_entropy(double pred, double label, double weight);

struct AdamState {
  Matrix m;
  Matrix v;
  long long t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  AdamState(std::size_t rows, std::size_t cols) : m(rows, cols), v(rows, cols) {}
  static AdamState like(const Matrix& param) {
    return AdamState(param.rows, param.cols);
  }
};

// One bias-corrected Adam step; increments state.t.
void adam_step(Matrix& param, const Matrix& grad, AdamState& state, double lr);

// Plain gradient-descent step (used by tests that need first-order behaviour
// without Adam's normalization).
void sgd_step(Matrix& param, const Matrix& grad, double lr);

struct FdOptions {
  double h = 1e-5;
  std::size_t max_coords_per_param = 0;  // 0 = check every coordinate
  SplitRng* rng = nullptr;               // required when subsampling
};

// Central-difference check of analytic gradients against loss(). The loss
// closure must be deterministic; the checker evaluates it twice up front and
// refuses to run if the values differ. Returns the max relative error
// max |analytic - numeric| / max(1, |numeric|) over checked coordinates.
double finite_difference_check(const std::function<double()>& loss,
                               std::span<Matrix* const> params,
                               std::span<const Matrix> analytic,
                               const FdOptions& options = {});

}  // namespace xdr
