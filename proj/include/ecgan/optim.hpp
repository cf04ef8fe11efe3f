#pragma once

#include <cmath>
#include <string>

#include "ecgan/errors.hpp"
#include "ecgan/tensor.hpp"

// Bias-corrected Adam. One AdamMoments mirrors one parameter tensor; the step
// counter lives with the caller because all blocks of a model share it.

namespace ecgan {

struct AdamMoments {
  Tensor m, v;
};

inline AdamMoments make_moments(const Tensor& param) {
  return AdamMoments{Tensor(param.shape()), Tensor(param.shape())};
}

constexpr double kAdamEps = 1e-8;

inline void adam_step(Tensor& param, const Tensor& grad, AdamMoments& mom,
                      long step, double lr, double beta1, double beta2,
                      double eps = kAdamEps) {
  require_same_shape(param, grad, "adam_step");
  require_same_shape(param, mom.m, "adam_step moments");
  if (step < 1) throw std::invalid_argument("adam_step: step counter must be >= 1");
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    if (!std::isfinite(g))
      throw NumericalInstabilityError("adam_step: non-finite gradient at element " +
                                      std::to_string(i));
    mom.m[i] = beta1 * mom.m[i] + (1.0 - beta1) * g;
    mom.v[i] = beta2 * mom.v[i] + (1.0 - beta2) * g * g;
    const double m_hat = mom.m[i] / bc1;
    const double v_hat = mom.v[i] / bc2;
    param[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

}  // namespace ecgan
