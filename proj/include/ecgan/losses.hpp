#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>

#include "ecgan/errors.hpp"
#include "ecgan/mask.hpp"
#include "ecgan/tensor.hpp"

// The five training objective terms plus their weighted combination. All
// reductions are means over elements, so the weight defaults are
// resolution-independent. Each term has the analytic gradient the training
// loop consumes; the gradient suite checks every one against finite
// differences.

namespace ecgan {

struct LossWeights {
  double lambda1 = 10.0;  // cycle consistency
  double lambda2 = 1.0;   // content (feature) preservation
  double lambda3 = 5.0;   // identity preservation
  double lambda4 = 10.0;  // masked-face reconstruction
};

struct LossBreakdown {
  double adversarial_g = 0.0;
  double adversarial_d = 0.0;
  double cycle = 0.0;
  double content = 0.0;
  double identity = 0.0;
  double mask = 0.0;
  double total = 0.0;  // generator side: adv_g + l1*cyc + l2*cont + l3*id + l4*mask
};

// Activations at a named extractor layer. layer_id (i, j) = j-th convolution
// of the i-th stage, taken after the nonlinearity and before pooling.
struct FeatureMap {
  Tensor grid;  // {channels, height, width}
  std::pair<int, int> layer_id{1, 1};
};

using RoundTripFn = std::function<Tensor(const Tensor&)>;

// ---------------------------------------------------------------------------
// Elementary reductions
// ---------------------------------------------------------------------------

inline double mean_sq(const Tensor& t, double target) {
  double s = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double d = t[i] - target;
    s += d * d;
  }
  return t.size() ? s / static_cast<double>(t.size()) : 0.0;
}

// d/da of mean|a - b|
inline Tensor l1_mean_grad(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "l1_mean_grad");
  Tensor g(a.shape());
  const double inv_n = 1.0 / static_cast<double>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    g[i] = d > 0.0 ? inv_n : (d < 0.0 ? -inv_n : 0.0);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Adversarial (least squares)
// ---------------------------------------------------------------------------

// mean((d_real - 1)^2) + mean(d_fake^2)
inline double lsgan_d_loss(const Tensor& d_real, const Tensor& d_fake) {
  require_same_shape(d_real, d_fake, "lsgan_d_loss");
  return mean_sq(d_real, 1.0) + mean_sq(d_fake, 0.0);
}

inline std::pair<Tensor, Tensor> lsgan_d_loss_grads(const Tensor& d_real,
                                                    const Tensor& d_fake) {
  Tensor gr(d_real.shape()), gf(d_fake.shape());
  const double inv_n = 1.0 / static_cast<double>(d_real.size());
  for (std::size_t i = 0; i < d_real.size(); ++i) {
    gr[i] = 2.0 * (d_real[i] - 1.0) * inv_n;
    gf[i] = 2.0 * d_fake[i] * inv_n;
  }
  return {std::move(gr), std::move(gf)};
}

// mean((d_fake - 1)^2)
inline double lsgan_g_loss(const Tensor& d_fake) { return mean_sq(d_fake, 1.0); }

inline Tensor lsgan_g_loss_grad(const Tensor& d_fake) {
  Tensor g(d_fake.shape());
  const double inv_n = 1.0 / static_cast<double>(d_fake.size());
  for (std::size_t i = 0; i < d_fake.size(); ++i)
    g[i] = 2.0 * (d_fake[i] - 1.0) * inv_n;
  return g;
}

// ---------------------------------------------------------------------------
// Cycle consistency: mean|x_rec - x| + mean|y_rec - y|. The reconstructions
// are computed by the caller (round trips through both generators).
// ---------------------------------------------------------------------------

inline double cycle_loss(const Tensor& x, const Tensor& x_rec, const Tensor& y,
                         const Tensor& y_rec) {
  require_same_shape(x, x_rec, "cycle_loss");
  require_same_shape(y, y_rec, "cycle_loss");
  return mean_abs_diff(x_rec, x) + mean_abs_diff(y_rec, y);
}

// ---------------------------------------------------------------------------
// Content (perceptual feature) loss: mean squared feature difference at a
// named extractor layer, normalized over spatial extent and channels.
// ---------------------------------------------------------------------------

inline double content_loss(const FeatureMap& feat_ref, const FeatureMap& feat_gen) {
  if (feat_ref.layer_id != feat_gen.layer_id)
    throw std::invalid_argument("content_loss: feature maps from different layers");
  require_same_shape(feat_ref.grid, feat_gen.grid, "content_loss");
  double s = 0.0;
  for (std::size_t i = 0; i < feat_ref.grid.size(); ++i) {
    const double d = feat_ref.grid[i] - feat_gen.grid[i];
    s += d * d;
  }
  return s / static_cast<double>(feat_ref.grid.size());
}

// d(content_loss)/d(feat_gen.grid)
inline Tensor content_loss_grad_gen(const FeatureMap& feat_ref,
                                    const FeatureMap& feat_gen) {
  Tensor g(feat_gen.grid.shape());
  const double inv_n = 2.0 / static_cast<double>(feat_gen.grid.size());
  for (std::size_t i = 0; i < g.size(); ++i)
    g[i] = inv_n * (feat_gen.grid[i] - feat_ref.grid[i]);
  return g;
}

// ---------------------------------------------------------------------------
// Identity preservation: a generator fed a same-domain image should return it.
// ---------------------------------------------------------------------------

inline double identity_loss(const Tensor& g_yx_of_x, const Tensor& x,
                            const Tensor& g_xy_of_y, const Tensor& y) {
  require_same_shape(g_yx_of_x, x, "identity_loss");
  require_same_shape(g_xy_of_y, y, "identity_loss");
  return mean_abs_diff(g_yx_of_x, x) + mean_abs_diff(g_xy_of_y, y);
}

// ---------------------------------------------------------------------------
// Face mask loss, one direction: mean|round_trip(x ⊙ m) - x ⊙ m|. The full
// objective sums this over both translation directions.
// ---------------------------------------------------------------------------

inline double mask_loss(const Tensor& x, const FaceMask& m,
                        const RoundTripFn& round_trip,
                        double background_weight = 0.0) {
  const Tensor masked = apply_mask(x, m, background_weight);
  const Tensor rt = round_trip(masked);
  require_same_shape(rt, masked, "mask_loss");
  return mean_abs_diff(rt, masked);
}

// ---------------------------------------------------------------------------
// Weighted combination
// ---------------------------------------------------------------------------

inline void require_finite(double v, const char* term) {
  if (!std::isfinite(v))
    throw NumericalInstabilityError(std::string("non-finite loss term: ") + term);
}

inline LossBreakdown total_loss(double adversarial_g, double adversarial_d,
                                double cycle, double content, double identity,
                                double mask, const LossWeights& weights) {
  require_finite(adversarial_g, "adversarial_g");
  require_finite(adversarial_d, "adversarial_d");
  require_finite(cycle, "cycle");
  require_finite(content, "content");
  require_finite(identity, "identity");
  require_finite(mask, "mask");
  LossBreakdown b;
  b.adversarial_g = adversarial_g;
  b.adversarial_d = adversarial_d;
  b.cycle = cycle;
  b.content = content;
  b.identity = identity;
  b.mask = mask;
  b.total = adversarial_g + weights.lambda1 * cycle + weights.lambda2 * content +
            weights.lambda3 * identity + weights.lambda4 * mask;
  require_finite(b.total, "total");
  return b;
}

}  // namespace ecgan
