#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "ecgan/tensor.hpp"

// Differentiable primitives. Every forward has an explicit analytic backward;
// the gradient test suite holds each of them against central finite
// differences. Heavy lifting (conv, affine) goes through Eigen GEMM on
// im2col buffers.

namespace ecgan {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapCM = Eigen::Map<const MatRM>;

// ---------------------------------------------------------------------------
// im2col / col2im
//
// col has shape {in_ch*kh*kw, oh*ow}; entry ((c*kh+i)*kw+j, r*ow+s) is the
// input pixel under kernel offset (i,j) for output position (r,s), zero when
// the offset lands in padding.
// ---------------------------------------------------------------------------

inline void im2col(const Tensor& x, int kh, int kw, int stride, int pad,
                   Tensor& col, int oh, int ow) {
  const int in_ch = static_cast<int>(x.dim(0));
  const int h = static_cast<int>(x.dim(1));
  const int w = static_cast<int>(x.dim(2));
  col.fill(0.0);
  double* cd = col.data();
  const double* xd = x.data();
  const int ohw = oh * ow;
  for (int c = 0; c < in_ch; ++c) {
    for (int i = 0; i < kh; ++i) {
      for (int j = 0; j < kw; ++j) {
        double* crow = cd + static_cast<std::size_t>((c * kh + i) * kw + j) * ohw;
        for (int r = 0; r < oh; ++r) {
          const int ir = r * stride + i - pad;
          if (ir < 0 || ir >= h) continue;
          const double* xrow = xd + (static_cast<std::size_t>(c) * h + ir) * w;
          double* cpos = crow + r * ow;
          for (int s = 0; s < ow; ++s) {
            const int ic = s * stride + j - pad;
            if (ic >= 0 && ic < w) cpos[s] = xrow[ic];
          }
        }
      }
    }
  }
}

// Scatter-add inverse of im2col.
inline void col2im(const Tensor& col, int kh, int kw, int stride, int pad,
                   Tensor& x, int oh, int ow) {
  const int in_ch = static_cast<int>(x.dim(0));
  const int h = static_cast<int>(x.dim(1));
  const int w = static_cast<int>(x.dim(2));
  x.fill(0.0);
  const double* cd = col.data();
  double* xd = x.data();
  const int ohw = oh * ow;
  for (int c = 0; c < in_ch; ++c) {
    for (int i = 0; i < kh; ++i) {
      for (int j = 0; j < kw; ++j) {
        const double* crow = cd + static_cast<std::size_t>((c * kh + i) * kw + j) * ohw;
        for (int r = 0; r < oh; ++r) {
          const int ir = r * stride + i - pad;
          if (ir < 0 || ir >= h) continue;
          double* xrow = xd + (static_cast<std::size_t>(c) * h + ir) * w;
          const double* cpos = crow + r * ow;
          for (int s = 0; s < ow; ++s) {
            const int ic = s * stride + j - pad;
            if (ic >= 0 && ic < w) xrow[ic] += cpos[s];
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

struct Conv2D {
  Tensor w;  // {out_ch, in_ch, kh, kw}
  Tensor b;  // {out_ch}
  int stride = 1;
  int pad = 0;

  int out_ch() const { return static_cast<int>(w.dim(0)); }
  int in_ch() const { return static_cast<int>(w.dim(1)); }
  int kh() const { return static_cast<int>(w.dim(2)); }
  int kw() const { return static_cast<int>(w.dim(3)); }
};

struct ConvCache {
  Tensor col;  // im2col of the input
  std::vector<std::size_t> x_shape;
  int oh = 0, ow = 0;
};

inline std::pair<int, int> conv_out_hw(const Conv2D& p, const Tensor& x) {
  const int h = static_cast<int>(x.dim(1));
  const int w = static_cast<int>(x.dim(2));
  const int oh = (h + 2 * p.pad - p.kh()) / p.stride + 1;
  const int ow = (w + 2 * p.pad - p.kw()) / p.stride + 1;
  if (oh < 1 || ow < 1)
    throw std::invalid_argument("conv2d: input smaller than kernel");
  return {oh, ow};
}

inline Tensor conv2d(const Conv2D& p, const Tensor& x, ConvCache* cache = nullptr) {
  if (static_cast<int>(x.dim(0)) != p.in_ch())
    throw std::invalid_argument("conv2d: channel mismatch");
  auto [oh, ow] = conv_out_hw(p, x);
  const int k = p.in_ch() * p.kh() * p.kw();
  Tensor col({static_cast<std::size_t>(k), static_cast<std::size_t>(oh * ow)});
  im2col(x, p.kh(), p.kw(), p.stride, p.pad, col, oh, ow);

  Tensor out({static_cast<std::size_t>(p.out_ch()), static_cast<std::size_t>(oh),
              static_cast<std::size_t>(ow)});
  MapCM wm(p.w.data(), p.out_ch(), k);
  MapCM cm(col.data(), k, oh * ow);
  MapM om(out.data(), p.out_ch(), oh * ow);
  om.noalias() = wm * cm;
  for (int o = 0; o < p.out_ch(); ++o) om.row(o).array() += p.b[o];

  if (cache) {
    cache->col = std::move(col);
    cache->x_shape = x.shape();
    cache->oh = oh;
    cache->ow = ow;
  }
  return out;
}

// grad_x and/or grad_p may be null when that gradient is not needed.
// grad_p accumulates (so multiple passes can share one gradient buffer).
inline void conv2d_backward(const Conv2D& p, const ConvCache& cache,
                            const Tensor& grad_out, Tensor* grad_x,
                            Conv2D* grad_p) {
  const int k = p.in_ch() * p.kh() * p.kw();
  const int ohw = cache.oh * cache.ow;
  MapCM gym(grad_out.data(), p.out_ch(), ohw);
  if (grad_p) {
    MapM gwm(grad_p->w.data(), p.out_ch(), k);
    MapCM cm(cache.col.data(), k, ohw);
    gwm.noalias() += gym * cm.transpose();
    for (int o = 0; o < p.out_ch(); ++o) grad_p->b[o] += gym.row(o).sum();
  }
  if (grad_x) {
    Tensor gcol({static_cast<std::size_t>(k), static_cast<std::size_t>(ohw)});
    MapM gcm(gcol.data(), k, ohw);
    MapCM wm(p.w.data(), p.out_ch(), k);
    gcm.noalias() = wm.transpose() * gym;
    *grad_x = Tensor(cache.x_shape);
    col2im(gcol, p.kh(), p.kw(), p.stride, p.pad, *grad_x, cache.oh, cache.ow);
  }
}

// ---------------------------------------------------------------------------
// Transposed convolution (fractionally strided). Weight layout
// {in_ch, out_ch, kh, kw}; output size (h-1)*stride - 2*pad + kh.
// ---------------------------------------------------------------------------

struct ConvTranspose2D {
  Tensor w;  // {in_ch, out_ch, kh, kw}
  Tensor b;  // {out_ch}
  int stride = 1;
  int pad = 0;

  int in_ch() const { return static_cast<int>(w.dim(0)); }
  int out_ch() const { return static_cast<int>(w.dim(1)); }
  int kh() const { return static_cast<int>(w.dim(2)); }
  int kw() const { return static_cast<int>(w.dim(3)); }
};

struct ConvTransposeCache {
  Tensor x;  // input activations (needed for weight grads)
  int oh = 0, ow = 0;
};

inline Tensor conv_transpose2d(const ConvTranspose2D& p, const Tensor& x,
                               ConvTransposeCache* cache = nullptr) {
  if (static_cast<int>(x.dim(0)) != p.in_ch())
    throw std::invalid_argument("conv_transpose2d: channel mismatch");
  const int h = static_cast<int>(x.dim(1));
  const int w = static_cast<int>(x.dim(2));
  const int oh = (h - 1) * p.stride - 2 * p.pad + p.kh();
  const int ow = (w - 1) * p.stride - 2 * p.pad + p.kw();
  if (oh < 1 || ow < 1)
    throw std::invalid_argument("conv_transpose2d: degenerate output size");

  const int k = p.out_ch() * p.kh() * p.kw();
  Tensor col({static_cast<std::size_t>(k), static_cast<std::size_t>(h * w)});
  MapCM wm(p.w.data(), p.in_ch(), k);
  MapCM xm(x.data(), p.in_ch(), h * w);
  MapM cm(col.data(), k, h * w);
  cm.noalias() = wm.transpose() * xm;

  Tensor out({static_cast<std::size_t>(p.out_ch()), static_cast<std::size_t>(oh),
              static_cast<std::size_t>(ow)});
  // col2im over the *output* grid: kernel positions are indexed by the input.
  col2im(col, p.kh(), p.kw(), p.stride, p.pad, out, h, w);
  for (int o = 0; o < p.out_ch(); ++o) {
    double* od = out.data() + static_cast<std::size_t>(o) * oh * ow;
    for (int i = 0; i < oh * ow; ++i) od[i] += p.b[o];
  }
  if (cache) {
    cache->x = x;
    cache->oh = oh;
    cache->ow = ow;
  }
  return out;
}

inline void conv_transpose2d_backward(const ConvTranspose2D& p,
                                      const ConvTransposeCache& cache,
                                      const Tensor& grad_out, Tensor* grad_x,
                                      ConvTranspose2D* grad_p) {
  const int h = static_cast<int>(cache.x.dim(1));
  const int w = static_cast<int>(cache.x.dim(2));
  const int k = p.out_ch() * p.kh() * p.kw();
  // Gather pass over grad_out mirrors the forward scatter.
  Tensor gcol({static_cast<std::size_t>(k), static_cast<std::size_t>(h * w)});
  im2col(grad_out, p.kh(), p.kw(), p.stride, p.pad, gcol, h, w);
  MapCM gcm(gcol.data(), k, h * w);
  if (grad_p) {
    MapM gwm(grad_p->w.data(), p.in_ch(), k);
    MapCM xm(cache.x.data(), p.in_ch(), h * w);
    gwm.noalias() += xm * gcm.transpose();
    for (int o = 0; o < p.out_ch(); ++o) {
      const double* gd = grad_out.data() + static_cast<std::size_t>(o) * cache.oh * cache.ow;
      double s = 0.0;
      for (int i = 0; i < cache.oh * cache.ow; ++i) s += gd[i];
      grad_p->b[o] += s;
    }
  }
  if (grad_x) {
    *grad_x = Tensor({cache.x.dim(0), cache.x.dim(1), cache.x.dim(2)});
    MapM gxm(grad_x->data(), p.in_ch(), h * w);
    MapCM wm(p.w.data(), p.in_ch(), k);
    gxm.noalias() = wm * gcm;
  }
}

// ---------------------------------------------------------------------------
// Affine (fully connected): y = W x + b, W {out, in}.
// ---------------------------------------------------------------------------

struct Affine {
  Tensor w;  // {out, in}
  Tensor b;  // {out}

  int out_dim() const { return static_cast<int>(w.dim(0)); }
  int in_dim() const { return static_cast<int>(w.dim(1)); }
};

struct AffineCache {
  Tensor x;
};

inline Tensor affine(const Affine& p, const Tensor& x, AffineCache* cache = nullptr) {
  if (static_cast<int>(x.size()) != p.in_dim())
    throw std::invalid_argument("affine: input width mismatch, got " +
                                std::to_string(x.size()) + " want " +
                                std::to_string(p.in_dim()));
  Tensor out({static_cast<std::size_t>(p.out_dim())});
  MapCM wm(p.w.data(), p.out_dim(), p.in_dim());
  Eigen::Map<const Eigen::VectorXd> xv(x.data(), x.size());
  Eigen::Map<Eigen::VectorXd> ov(out.data(), out.size());
  Eigen::Map<const Eigen::VectorXd> bv(p.b.data(), p.b.size());
  ov.noalias() = wm * xv + bv;
  if (cache) cache->x = x;
  return out;
}

inline void affine_backward(const Affine& p, const AffineCache& cache,
                            const Tensor& grad_out, Tensor* grad_x, Affine* grad_p) {
  Eigen::Map<const Eigen::VectorXd> gy(grad_out.data(), grad_out.size());
  if (grad_p) {
    MapM gwm(grad_p->w.data(), p.out_dim(), p.in_dim());
    Eigen::Map<const Eigen::VectorXd> xv(cache.x.data(), cache.x.size());
    gwm.noalias() += gy * xv.transpose();
    Eigen::Map<Eigen::VectorXd> gbv(grad_p->b.data(), grad_p->b.size());
    gbv.noalias() += gy;
  }
  if (grad_x) {
    *grad_x = Tensor(cache.x.shape());
    MapCM wm(p.w.data(), p.out_dim(), p.in_dim());
    Eigen::Map<Eigen::VectorXd> gxv(grad_x->data(), grad_x->size());
    gxv.noalias() = wm.transpose() * gy;
  }
}

// ---------------------------------------------------------------------------
// Instance normalization (no learnable affine): each channel's spatial map is
// normalized to zero mean, unit variance.
// ---------------------------------------------------------------------------

constexpr double kInstanceNormEps = 1e-5;

struct InstanceNormCache {
  Tensor x_hat;        // normalized activations
  std::vector<double> inv_std;  // per channel
};

inline Tensor instance_norm(const Tensor& x, InstanceNormCache* cache = nullptr) {
  const std::size_t ch = x.dim(0);
  const std::size_t n = x.dim(1) * x.dim(2);
  // A single-pixel plane would always normalize to zero, silently erasing the
  // signal; reject it so misconfigured architectures fail loudly.
  if (n < 2)
    throw std::invalid_argument("instance_norm: spatial plane has fewer than 2 elements");
  Tensor out(x.shape());
  if (cache) {
    cache->x_hat = Tensor(x.shape());
    cache->inv_std.assign(ch, 0.0);
  }
  for (std::size_t c = 0; c < ch; ++c) {
    const double* xd = x.data() + c * n;
    double* od = out.data() + c * n;
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += xd[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = xd[i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double inv_std = 1.0 / std::sqrt(var + kInstanceNormEps);
    for (std::size_t i = 0; i < n; ++i) od[i] = (xd[i] - mean) * inv_std;
    if (cache) {
      std::copy(od, od + n, cache->x_hat.data() + c * n);
      cache->inv_std[c] = inv_std;
    }
  }
  return out;
}

inline Tensor instance_norm_backward(const InstanceNormCache& cache,
                                     const Tensor& grad_out) {
  const std::size_t ch = grad_out.dim(0);
  const std::size_t n = grad_out.dim(1) * grad_out.dim(2);
  Tensor grad_x(grad_out.shape());
  for (std::size_t c = 0; c < ch; ++c) {
    const double* gy = grad_out.data() + c * n;
    const double* xh = cache.x_hat.data() + c * n;
    double* gx = grad_x.data() + c * n;
    double sum_gy = 0.0, sum_gy_xh = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sum_gy += gy[i];
      sum_gy_xh += gy[i] * xh[i];
    }
    const double mg = sum_gy / static_cast<double>(n);
    const double mgx = sum_gy_xh / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      gx[i] = cache.inv_std[c] * (gy[i] - mg - xh[i] * mgx);
  }
  return grad_x;
}

// ---------------------------------------------------------------------------
// Elementwise activations
// ---------------------------------------------------------------------------

inline Tensor relu(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return out;
}

inline Tensor relu_backward(const Tensor& x, const Tensor& grad_out) {
  Tensor gx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) gx[i] = x[i] > 0.0 ? grad_out[i] : 0.0;
  return gx;
}

inline Tensor leaky_relu(const Tensor& x, double alpha = 0.2) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : alpha * x[i];
  return out;
}

inline Tensor leaky_relu_backward(const Tensor& x, const Tensor& grad_out,
                                  double alpha = 0.2) {
  Tensor gx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i)
    gx[i] = x[i] > 0.0 ? grad_out[i] : alpha * grad_out[i];
  return gx;
}

inline Tensor tanh_op(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::tanh(x[i]);
  return out;
}

// takes the forward *output* y = tanh(x)
inline Tensor tanh_backward(const Tensor& y, const Tensor& grad_out) {
  Tensor gx(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) gx[i] = (1.0 - y[i] * y[i]) * grad_out[i];
  return gx;
}

// ---------------------------------------------------------------------------
// 2x2 max pooling, stride 2. Odd trailing rows/cols are dropped.
// ---------------------------------------------------------------------------

struct MaxPoolCache {
  std::vector<std::size_t> argmax;  // flat input index per output element
  std::vector<std::size_t> x_shape;
};

inline Tensor max_pool2(const Tensor& x, MaxPoolCache* cache = nullptr) {
  const std::size_t ch = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t oh = h / 2, ow = w / 2;
  Tensor out({ch, oh, ow});
  if (cache) {
    cache->argmax.assign(out.size(), 0);
    cache->x_shape = x.shape();
  }
  for (std::size_t c = 0; c < ch; ++c)
    for (std::size_t r = 0; r < oh; ++r)
      for (std::size_t s = 0; s < ow; ++s) {
        std::size_t best = (c * h + 2 * r) * w + 2 * s;
        double bv = x[best];
        const std::size_t cand[3] = {(c * h + 2 * r) * w + 2 * s + 1,
                                     (c * h + 2 * r + 1) * w + 2 * s,
                                     (c * h + 2 * r + 1) * w + 2 * s + 1};
        for (std::size_t idx : cand)
          if (x[idx] > bv) {
            bv = x[idx];
            best = idx;
          }
        out.at(c, r, s) = bv;
        if (cache) cache->argmax[(c * oh + r) * ow + s] = best;
      }
  return out;
}

inline Tensor max_pool2_backward(const MaxPoolCache& cache, const Tensor& grad_out) {
  Tensor gx(cache.x_shape);
  for (std::size_t i = 0; i < grad_out.size(); ++i)
    gx[cache.argmax[i]] += grad_out[i];
  return gx;
}

// ---------------------------------------------------------------------------
// Softmax + cross entropy
// ---------------------------------------------------------------------------

inline Tensor softmax(const Tensor& logits) {
  Tensor p(logits.shape());
  double mx = logits[0];
  for (std::size_t i = 1; i < logits.size(); ++i) mx = std::max(mx, logits[i]);
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (std::size_t i = 0; i < p.size(); ++i) p[i] /= z;
  return p;
}

inline double cross_entropy(const Tensor& probs, std::size_t target) {
  return -std::log(std::max(probs[target], 1e-300));
}

// d(cross_entropy)/d(logits) for probs = softmax(logits)
inline Tensor cross_entropy_logits_grad(const Tensor& probs, std::size_t target) {
  Tensor g = probs;
  g[target] -= 1.0;
  return g;
}

}  // namespace ecgan
