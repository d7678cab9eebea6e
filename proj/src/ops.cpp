#include "xdr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace xdr {

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void stable_softmax(std::span<const double> logits, std::span<double> out) {
  if (logits.empty()) throw std::invalid_argument("empty attention support");
  const double shift = kernels::max_value(logits.data(), logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - shift);
    total += out[i];
  }
  kernels::scale(out.data(), 1.0 / total, out.size());
}

std::vector<double> stable_softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  stable_softmax(logits, out);
  return out;
}

double binary_cross_entropy(double pred, double label, double weight) {
  const double p = std::clamp(pred, kProbClip, 1.0 - kProbClip);
  return -weight * (label * std::log(p) + (1.0 - label) * std::log(1.0 - p));
}

void adam_step(Matrix& param, const Matrix& grad, AdamState& state,
               double lr) {
  require_same_shape(param, grad, "adam_step");
  require_same_shape(param, state.m, "adam_step state");
  state.t += 1;
  const double bias1 = 1.0 / (1.0 - std::pow(state.beta1, state.t));
  const double bias2 = 1.0 / (1.0 - std::pow(state.beta2, state.t));
  kernels::adam_update(param.data.data(), grad.data.data(),
                       state.m.data.data(), state.v.data.data(), param.size(),
                       lr, state.beta1, state.beta2, state.epsilon, bias1,
                       bias2);
}

void sgd_step(Matrix& param, const Matrix& grad, double lr) {
  require_same_shape(param, grad, "sgd_step");
  kernels::axpy(-lr, grad.data.data(), param.data.data(), param.size());
}

double finite_difference_check(const std::function<double()>& loss,
                               std::span<Matrix* const> params,
                               std::span<const Matrix> analytic,
                               const FdOptions& options) {
  if (params.size() != analytic.size())
    throw std::invalid_argument("finite_difference_check: param/grad count");
  const double first = loss();
  const double second = loss();
  if (first != second)
    throw std::runtime_error(
        "finite_difference_check: loss function is not deterministic");

  double max_rel_err = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Matrix& param = *params[p];
    require_same_shape(param, analytic[p], "finite_difference_check");

    std::vector<std::size_t> coords(param.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (options.max_coords_per_param > 0 &&
        options.max_coords_per_param < coords.size()) {
      if (options.rng == nullptr)
        throw std::invalid_argument(
            "finite_difference_check: subsampling needs an rng");
      options.rng->shuffle(coords);
      coords.resize(options.max_coords_per_param);
    }

    for (std::size_t c : coords) {
      const double saved = param.data[c];
      param.data[c] = saved + options.h;
      const double up = loss();
      param.data[c] = saved - options.h;
      const double down = loss();
      param.data[c] = saved;
      const double numeric = (up - down) / (2.0 * options.h);
      const double rel = std::abs(analytic[p].data[c] - numeric) /
                         std::max(1.0, std::abs(numeric));
      max_rel_err = std::max(max_rel_err, rel);
    }
  }
  return max_rel_err;
}

}  // namespace xdr
