#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ecgan/expression.hpp"
#include "ecgan/ops.hpp"
#include "ecgan/rng.hpp"
#include "ecgan/tensor.hpp"

// Conditional generator and patch discriminator. The generator encodes the
// image, concatenates the one-hot attribute vector with the flattened
// features at a fully connected bottleneck, and decodes back to image space
// through a tanh. The discriminator emits an h x w patch realness map;
// conditioning it (tiled one-hot channels appended to the input) is optional
// and off by default.

namespace ecgan {

// ---------------------------------------------------------------------------
// Attribute vectors
// ---------------------------------------------------------------------------

using AttributeVector = Tensor;  // {K}, one-hot

inline bool is_one_hot(const AttributeVector& z) {
  int ones = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (z[i] == 1.0)
      ++ones;
    else if (z[i] != 0.0)
      return false;
  }
  return ones == 1;
}

inline AttributeVector encode_attribute(const ExpressionLabel& label, int k) {
  if (label.index < 0 || label.index >= k)
    throw std::invalid_argument("encode_attribute: label index " +
                                std::to_string(label.index) + " outside [0," +
                                std::to_string(k) + ")");
  AttributeVector z({static_cast<std::size_t>(k)});
  z[static_cast<std::size_t>(label.index)] = 1.0;
  return z;
}

inline AttributeVector swap_attribute(const AttributeVector& z,
                                      const ExpressionLabel& a,
                                      const ExpressionLabel& b) {
  if (!is_one_hot(z))
    throw std::invalid_argument("swap_attribute: input is not one-hot");
  if (a.index == b.index)
    throw std::invalid_argument("swap_attribute: labels must differ");
  const auto k = static_cast<int>(z.size());
  if (a.index < 0 || a.index >= k || b.index < 0 || b.index >= k)
    throw std::invalid_argument("swap_attribute: label index out of range");
  AttributeVector out = z;
  std::swap(out[static_cast<std::size_t>(a.index)],
            out[static_cast<std::size_t>(b.index)]);
  return out;
}

// ---------------------------------------------------------------------------
// Architecture configuration
// ---------------------------------------------------------------------------

enum class DiscriminatorCondition { kNone, kTiledConcat };

struct ArchConfig {
  int image_size = 64;
  int image_channels = 3;
  int num_classes = 4;  // K
  int enc_ch1 = 32;
  int enc_ch2 = 64;
  int bottleneck_width = 256;
  int disc_ch1 = 32;
  int disc_ch2 = 64;
  int disc_ch3 = 128;
  bool condition_bottleneck = true;
  DiscriminatorCondition d_condition = DiscriminatorCondition::kNone;

  int encoded_hw() const { return image_size / 4; }
  int flat_count() const { return encoded_hw() * encoded_hw() * enc_ch2; }

  void validate() const {
    if (image_size < 8 || image_size % 4 != 0)
      throw std::invalid_argument("arch: image size must be a multiple of 4, >= 8");
    if (num_classes < 2) throw std::invalid_argument("arch: need at least 2 classes");
    if (enc_ch1 < 1 || enc_ch2 < 1 || bottleneck_width < 1)
      throw std::invalid_argument("arch: non-positive width");
  }
};

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

struct GeneratorParams {
  Conv2D enc1, enc2;            // 4x4, stride 2, pad 1
  Affine fc_in, fc_out;         // (flat [+K]) -> bottleneck -> flat
  ConvTranspose2D dec1, dec2;   // 4x4, stride 2, pad 1
  int cond_width = 0;           // K when conditioned, 0 otherwise
  int image_size = 0;
  int image_channels = 0;
  int enc_ch2 = 0;
};

struct GeneratorTape {
  ConvCache enc1c, enc2c;
  InstanceNormCache in1c, in2c, in3c;
  Tensor a1, a2;           // instance-norm outputs feeding the encoder relus
  AffineCache fc_in_c, fc_out_c;
  Tensor fc_in_pre, fc_out_pre;
  ConvTransposeCache dec1c, dec2c;
  Tensor a3;               // instance-norm output feeding the decoder relu
  Tensor y;                // tanh output
};

inline void check_generator_input(const GeneratorParams& p, const Tensor& image,
                                  const AttributeVector& z) {
  if (image.ndim() != 3 ||
      static_cast<int>(image.dim(0)) != p.image_channels ||
      static_cast<int>(image.dim(1)) != p.image_size ||
      static_cast<int>(image.dim(2)) != p.image_size)
    throw std::invalid_argument("generator: image shape " + shape_string(image) +
                                " does not match params");
  if (p.cond_width > 0 && static_cast<int>(z.size()) != p.cond_width)
    throw std::invalid_argument("generator: attribute width " +
                                std::to_string(z.size()) + " != K=" +
                                std::to_string(p.cond_width));
}

inline Tensor generator_forward(const GeneratorParams& p, const Tensor& image,
                                const AttributeVector& z,
                                GeneratorTape* tape = nullptr) {
  check_generator_input(p, image, z);
  GeneratorTape local;
  GeneratorTape& t = tape ? *tape : local;

  Tensor h = conv2d(p.enc1, image, &t.enc1c);
  t.a1 = instance_norm(h, &t.in1c);
  Tensor r1 = relu(t.a1);
  h = conv2d(p.enc2, r1, &t.enc2c);
  t.a2 = instance_norm(h, &t.in2c);
  Tensor r2 = relu(t.a2);

  const std::size_t flat = r2.size();
  Tensor joined({flat + static_cast<std::size_t>(p.cond_width)});
  std::copy(r2.begin(), r2.end(), joined.begin());
  for (int i = 0; i < p.cond_width; ++i) joined[flat + i] = z[i];

  t.fc_in_pre = affine(p.fc_in, joined, &t.fc_in_c);
  Tensor bneck = relu(t.fc_in_pre);
  t.fc_out_pre = affine(p.fc_out, bneck, &t.fc_out_c);
  Tensor expanded = relu(t.fc_out_pre).reshaped(
      {r2.dim(0), r2.dim(1), r2.dim(2)});

  h = conv_transpose2d(p.dec1, expanded, &t.dec1c);
  t.a3 = instance_norm(h, &t.in3c);
  Tensor r3 = relu(t.a3);
  h = conv_transpose2d(p.dec2, r3, &t.dec2c);
  t.y = tanh_op(h);
  return t.y;
}

// Accumulates parameter gradients into grad_p (same layout as the params);
// optionally returns the gradient with respect to the input image and the
// attribute vector.
inline void generator_backward(const GeneratorParams& p, const GeneratorTape& t,
                               const Tensor& grad_out, GeneratorParams* grad_p,
                               Tensor* grad_input = nullptr,
                               Tensor* grad_z = nullptr) {
  Tensor g = tanh_backward(t.y, grad_out);
  Tensor g_r3;
  conv_transpose2d_backward(p.dec2, t.dec2c, g, &g_r3, grad_p ? &grad_p->dec2 : nullptr);
  g = relu_backward(t.a3, g_r3);
  g = instance_norm_backward(t.in3c, g);
  Tensor g_expanded;
  conv_transpose2d_backward(p.dec1, t.dec1c, g, &g_expanded,
                            grad_p ? &grad_p->dec1 : nullptr);

  Tensor g_fc_out_pre = relu_backward(t.fc_out_pre,
                                      g_expanded.reshaped({g_expanded.size()}));
  Tensor g_bneck;
  affine_backward(p.fc_out, t.fc_out_c, g_fc_out_pre, &g_bneck,
                  grad_p ? &grad_p->fc_out : nullptr);
  Tensor g_fc_in_pre = relu_backward(t.fc_in_pre, g_bneck);
  Tensor g_joined;
  affine_backward(p.fc_in, t.fc_in_c, g_fc_in_pre, &g_joined,
                  grad_p ? &grad_p->fc_in : nullptr);

  const std::size_t flat = g_joined.size() - static_cast<std::size_t>(p.cond_width);
  if (grad_z) {
    *grad_z = Tensor({static_cast<std::size_t>(p.cond_width)});
    for (int i = 0; i < p.cond_width; ++i) (*grad_z)[i] = g_joined[flat + i];
  }
  if (!grad_input && !grad_p) return;

  const std::size_t hw = static_cast<std::size_t>(p.image_size / 4);
  Tensor g_r2({static_cast<std::size_t>(p.enc_ch2), hw, hw});
  std::copy(g_joined.begin(), g_joined.begin() + flat, g_r2.begin());

  Tensor g2 = relu_backward(t.a2, g_r2);
  g2 = instance_norm_backward(t.in2c, g2);
  Tensor g_r1;
  conv2d_backward(p.enc2, t.enc2c, g2, &g_r1, grad_p ? &grad_p->enc2 : nullptr);
  Tensor g1 = relu_backward(t.a1, g_r1);
  g1 = instance_norm_backward(t.in1c, g1);
  conv2d_backward(p.enc1, t.enc1c, g1, grad_input, grad_p ? &grad_p->enc1 : nullptr);
}

// ---------------------------------------------------------------------------
// Discriminator
// ---------------------------------------------------------------------------

struct DiscriminatorParams {
  Conv2D conv1, conv2, conv3;  // 4x4, stride 2, pad 1
  Conv2D head;                 // 3x3, stride 1, pad 1, single channel
  DiscriminatorCondition condition_mode = DiscriminatorCondition::kNone;
  int cond_width = 0;
  int image_channels = 0;
};

struct DiscriminatorTape {
  Tensor x_aug;  // input after optional tile-concat
  ConvCache c1, c2, c3, ch;
  InstanceNormCache in2c, in3c;
  Tensor p1, a2, a3;  // leaky-relu inputs
};

using PatchMap = Tensor;  // {h, w}

inline Tensor tile_concat(const Tensor& image, const AttributeVector& z) {
  Tensor out({image.dim(0) + z.size(), image.dim(1), image.dim(2)});
  std::copy(image.begin(), image.end(), out.begin());
  const std::size_t plane = image.dim(1) * image.dim(2);
  for (std::size_t k = 0; k < z.size(); ++k) {
    double* dst = out.data() + (image.dim(0) + k) * plane;
    for (std::size_t i = 0; i < plane; ++i) dst[i] = z[k];
  }
  return out;
}

inline PatchMap discriminator_forward(const DiscriminatorParams& p,
                                      const Tensor& image,
                                      const AttributeVector* z = nullptr,
                                      DiscriminatorTape* tape = nullptr) {
  DiscriminatorTape local;
  DiscriminatorTape& t = tape ? *tape : local;
  if (image.ndim() != 3 || static_cast<int>(image.dim(0)) != p.image_channels)
    throw std::invalid_argument("discriminator: bad image shape " +
                                shape_string(image));
  if (p.condition_mode == DiscriminatorCondition::kTiledConcat) {
    if (!z)
      throw std::invalid_argument("discriminator: conditioned mode needs z");
    if (static_cast<int>(z->size()) != p.cond_width)
      throw std::invalid_argument("discriminator: attribute width mismatch");
    t.x_aug = tile_concat(image, *z);
  } else {
    t.x_aug = image;
  }
  t.p1 = conv2d(p.conv1, t.x_aug, &t.c1);
  Tensor h = leaky_relu(t.p1);
  h = conv2d(p.conv2, h, &t.c2);
  t.a2 = instance_norm(h, &t.in2c);
  h = leaky_relu(t.a2);
  h = conv2d(p.conv3, h, &t.c3);
  t.a3 = instance_norm(h, &t.in3c);
  h = leaky_relu(t.a3);
  Tensor out = conv2d(p.head, h, &t.ch);
  return out.reshaped({out.dim(1), out.dim(2)});
}

inline void discriminator_backward(const DiscriminatorParams& p,
                                   const DiscriminatorTape& t,
                                   const PatchMap& grad_out,
                                   DiscriminatorParams* grad_p,
                                   Tensor* grad_input = nullptr) {
  Tensor g = grad_out.reshaped({std::size_t{1}, grad_out.dim(0), grad_out.dim(1)});
  Tensor g_h3;
  conv2d_backward(p.head, t.ch, g, &g_h3, grad_p ? &grad_p->head : nullptr);
  g = leaky_relu_backward(t.a3, g_h3);
  g = instance_norm_backward(t.in3c, g);
  Tensor g_h2;
  conv2d_backward(p.conv3, t.c3, g, &g_h2, grad_p ? &grad_p->conv3 : nullptr);
  g = leaky_relu_backward(t.a2, g_h2);
  g = instance_norm_backward(t.in2c, g);
  Tensor g_h1;
  conv2d_backward(p.conv2, t.c2, g, &g_h1, grad_p ? &grad_p->conv2 : nullptr);
  g = leaky_relu_backward(t.p1, g_h1);
  if (!grad_input && !grad_p) return;
  Tensor g_aug;
  conv2d_backward(p.conv1, t.c1, g, grad_input ? &g_aug : nullptr,
                  grad_p ? &grad_p->conv1 : nullptr);
  if (grad_input) {
    if (p.condition_mode == DiscriminatorCondition::kTiledConcat) {
      *grad_input = Tensor({static_cast<std::size_t>(p.image_channels),
                            g_aug.dim(1), g_aug.dim(2)});
      std::copy(g_aug.begin(), g_aug.begin() + grad_input->size(),
                grad_input->begin());
    } else {
      *grad_input = std::move(g_aug);
    }
  }
}

// ---------------------------------------------------------------------------
// Initialization: weights N(0, 0.02), biases zero.
// ---------------------------------------------------------------------------

constexpr double kWeightInitStd = 0.02;

namespace detail {

inline Tensor normal_tensor(std::vector<std::size_t> shape, Rng& rng, double stddev) {
  Tensor t(std::move(shape));
  for (auto& v : t) v = rng.normal(0.0, stddev);
  return t;
}

inline Conv2D init_conv(int out_ch, int in_ch, int k, int stride, int pad, Rng& rng,
                        double stddev = kWeightInitStd) {
  Conv2D c;
  c.w = normal_tensor({(std::size_t)out_ch, (std::size_t)in_ch, (std::size_t)k,
                       (std::size_t)k}, rng, stddev);
  c.b = Tensor({(std::size_t)out_ch});
  c.stride = stride;
  c.pad = pad;
  return c;
}

inline ConvTranspose2D init_deconv(int in_ch, int out_ch, int k, int stride,
                                   int pad, Rng& rng,
                                   double stddev = kWeightInitStd) {
  ConvTranspose2D c;
  c.w = normal_tensor({(std::size_t)in_ch, (std::size_t)out_ch, (std::size_t)k,
                       (std::size_t)k}, rng, stddev);
  c.b = Tensor({(std::size_t)out_ch});
  c.stride = stride;
  c.pad = pad;
  return c;
}

inline Affine init_affine(int out_dim, int in_dim, Rng& rng,
                          double stddev = kWeightInitStd) {
  Affine a;
  a.w = normal_tensor({(std::size_t)out_dim, (std::size_t)in_dim}, rng, stddev);
  a.b = Tensor({(std::size_t)out_dim});
  return a;
}

}  // namespace detail

inline GeneratorParams init_generator(const ArchConfig& arch, Rng& rng) {
  arch.validate();
  GeneratorParams g;
  g.cond_width = arch.condition_bottleneck ? arch.num_classes : 0;
  g.image_size = arch.image_size;
  g.image_channels = arch.image_channels;
  g.enc_ch2 = arch.enc_ch2;
  g.enc1 = detail::init_conv(arch.enc_ch1, arch.image_channels, 4, 2, 1, rng);
  g.enc2 = detail::init_conv(arch.enc_ch2, arch.enc_ch1, 4, 2, 1, rng);
  g.fc_in = detail::init_affine(arch.bottleneck_width,
                                arch.flat_count() + g.cond_width, rng);
  g.fc_out = detail::init_affine(arch.flat_count(), arch.bottleneck_width, rng);
  g.dec1 = detail::init_deconv(arch.enc_ch2, arch.enc_ch1, 4, 2, 1, rng);
  g.dec2 = detail::init_deconv(arch.enc_ch1, arch.image_channels, 4, 2, 1, rng);
  return g;
}

inline DiscriminatorParams init_discriminator(const ArchConfig& arch, Rng& rng) {
  arch.validate();
  // Three stride-2 stages: the last normalized plane is (size/8)^2, which must
  // hold at least 2 elements for instance norm to be meaningful.
  if (arch.image_size < 16)
    throw std::invalid_argument("discriminator: image size must be >= 16");
  DiscriminatorParams d;
  d.condition_mode = arch.d_condition;
  d.cond_width =
      arch.d_condition == DiscriminatorCondition::kTiledConcat ? arch.num_classes : 0;
  d.image_channels = arch.image_channels;
  const int in_ch = arch.image_channels + d.cond_width;
  d.conv1 = detail::init_conv(arch.disc_ch1, in_ch, 4, 2, 1, rng);
  d.conv2 = detail::init_conv(arch.disc_ch2, arch.disc_ch1, 4, 2, 1, rng);
  d.conv3 = detail::init_conv(arch.disc_ch3, arch.disc_ch2, 4, 2, 1, rng);
  d.head = detail::init_conv(1, arch.disc_ch3, 3, 1, 1, rng);
  return d;
}

struct Models {
  GeneratorParams g_xy, g_yx;
  DiscriminatorParams d_x, d_y;
};

// Weights drawn from N(0, 0.02), biases zero; fully determined by the seed.
inline Models init_params(const ArchConfig& arch, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0xECC0DE));
  Models m;
  m.g_xy = init_generator(arch, rng);
  m.g_yx = init_generator(arch, rng);
  m.d_x = init_discriminator(arch, rng);
  m.d_y = init_discriminator(arch, rng);
  return m;
}

// Zero-filled gradient buffers shaped like the parameters.

inline GeneratorParams zeros_like(const GeneratorParams& p) {
  GeneratorParams z = p;
  z.enc1.w.fill(0.0); z.enc1.b.fill(0.0);
  z.enc2.w.fill(0.0); z.enc2.b.fill(0.0);
  z.fc_in.w.fill(0.0); z.fc_in.b.fill(0.0);
  z.fc_out.w.fill(0.0); z.fc_out.b.fill(0.0);
  z.dec1.w.fill(0.0); z.dec1.b.fill(0.0);
  z.dec2.w.fill(0.0); z.dec2.b.fill(0.0);
  return z;
}

inline DiscriminatorParams zeros_like(const DiscriminatorParams& p) {
  DiscriminatorParams z = p;
  z.conv1.w.fill(0.0); z.conv1.b.fill(0.0);
  z.conv2.w.fill(0.0); z.conv2.b.fill(0.0);
  z.conv3.w.fill(0.0); z.conv3.b.fill(0.0);
  z.head.w.fill(0.0); z.head.b.fill(0.0);
  return z;
}

}  // namespace ecgan
