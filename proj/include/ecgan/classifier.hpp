#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ecgan/errors.hpp"
#include "ecgan/expression.hpp"
#include "ecgan/losses.hpp"
#include "ecgan/nets.hpp"
#include "ecgan/ops.hpp"
#include "ecgan/optim.hpp"
#include "ecgan/rng.hpp"
#include "ecgan/tensor.hpp"

// Small convolutional expression classifier. It is the project's perceptual
// feature extractor (named conv layers feed the content loss), its embedding
// model (penultimate vector feeds the cluster plot), and its scorer (softmax
// posterior feeds the generation score and the augmentation study).

namespace ecgan {

struct ClassifierArch {
  int image_size = 64;
  int image_channels = 3;
  int num_classes = 4;
  std::array<int, 3> stage_channels{8, 16, 32};
  int feature_dim = 128;

  void validate() const {
    if (image_size < 8 || image_size % 8 != 0)
      throw std::invalid_argument("classifier: image size must be a multiple of 8");
    if (num_classes < 2)
      throw std::invalid_argument("classifier: need at least 2 classes");
    for (int c : stage_channels)
      if (c < 1) throw std::invalid_argument("classifier: non-positive stage width");
    if (feature_dim < 1)
      throw std::invalid_argument("classifier: non-positive feature dim");
  }

  int flat_count() const {
    const int s = image_size / 8;
    return s * s * stage_channels[2];
  }
};

// Each stage: two 3x3 stride-1 pad-1 convolutions (relu after each), then a
// 2x2 max pool. Layer id (i, j) names the post-relu output of the j-th
// convolution in the i-th stage, before that stage's pool; both indices are
// 1-based.
struct ConvStage {
  Conv2D conv1, conv2;
};

struct ClassifierParams {
  std::array<ConvStage, 3> stages;
  Affine fc1;   // flattened final stage -> feature_dim
  Affine head;  // feature_dim -> K logits
  int image_size = 0;
  int image_channels = 0;
  int num_classes = 0;
  int feature_dim = 0;
};

struct ClassifierTape {
  struct StageTape {
    ConvCache c1, c2;
    Tensor p1, p2;  // pre-relu activations
    MaxPoolCache pool;
  };
  std::array<StageTape, 3> stages;
  AffineCache fc1c;
  Tensor fc1_pre;
  AffineCache headc;
};

inline void check_classifier_input(const ClassifierParams& p, const Tensor& image) {
  if (image.ndim() != 3 ||
      static_cast<int>(image.dim(0)) != p.image_channels ||
      static_cast<int>(image.dim(1)) != p.image_size ||
      static_cast<int>(image.dim(2)) != p.image_size)
    throw std::invalid_argument("classifier: image shape " + shape_string(image) +
                                " does not match trained size " +
                                std::to_string(p.image_size));
}

inline void check_layer_id(std::pair<int, int> layer_id) {
  if (layer_id.first < 1 || layer_id.first > 3 || layer_id.second < 1 ||
      layer_id.second > 2)
    throw std::invalid_argument("classifier: unknown layer id (" +
                                std::to_string(layer_id.first) + "," +
                                std::to_string(layer_id.second) + ")");
}

// Forward up to and including the named layer; {3, 2} plus pooling reaches the
// head. Returns the post-relu activation of the named layer.
inline Tensor classifier_stages_forward(const ClassifierParams& p, const Tensor& image,
                                        std::pair<int, int> stop_after,
                                        ClassifierTape* tape) {
  check_classifier_input(p, image);
  check_layer_id(stop_after);
  Tensor h = image;
  for (int i = 0; i < 3; ++i) {
    auto& st = tape->stages[static_cast<std::size_t>(i)];
    st.p1 = conv2d(p.stages[static_cast<std::size_t>(i)].conv1, h, &st.c1);
    h = relu(st.p1);
    if (stop_after.first == i + 1 && stop_after.second == 1) return h;
    st.p2 = conv2d(p.stages[static_cast<std::size_t>(i)].conv2, h, &st.c2);
    h = relu(st.p2);
    if (stop_after.first == i + 1 && stop_after.second == 2) return h;
    h = max_pool2(h, &st.pool);
  }
  return h;
}

inline Tensor classifier_logits(const ClassifierParams& p, const Tensor& image,
                                ClassifierTape* tape = nullptr) {
  ClassifierTape local;
  ClassifierTape& t = tape ? *tape : local;
  Tensor h = classifier_stages_forward(p, image, {3, 2}, &t);
  h = max_pool2(h, &t.stages[2].pool);
  t.fc1_pre = affine(p.fc1, h.reshaped({h.size()}), &t.fc1c);
  Tensor feat = relu(t.fc1_pre);
  return affine(p.head, feat, &t.headc);
}

inline Tensor classify(const ClassifierParams& p, const Tensor& image) {
  return softmax(classifier_logits(p, image));
}

inline Tensor embed(const ClassifierParams& p, const Tensor& image) {
  ClassifierTape t;
  Tensor h = classifier_stages_forward(p, image, {3, 2}, &t);
  h = max_pool2(h, &t.stages[2].pool);
  Tensor pre = affine(p.fc1, h.reshaped({h.size()}));
  return relu(pre);
}

inline FeatureMap extract_features(const ClassifierParams& p, const Tensor& image,
                                   std::pair<int, int> layer_id,
                                   ClassifierTape* tape = nullptr) {
  ClassifierTape local;
  ClassifierTape& t = tape ? *tape : local;
  FeatureMap f;
  f.grid = classifier_stages_forward(p, image, layer_id, &t);
  f.layer_id = layer_id;
  return f;
}

// Backward from a feature-map gradient to the input image; parameters are
// treated as constants (the extractor is frozen while the generator trains).
inline Tensor features_backward(const ClassifierParams& p, const ClassifierTape& t,
                                std::pair<int, int> layer_id,
                                const Tensor& grad_feat) {
  check_layer_id(layer_id);
  Tensor g = grad_feat;
  for (int i = layer_id.first - 1; i >= 0; --i) {
    const auto& st = t.stages[static_cast<std::size_t>(i)];
    const auto& ps = p.stages[static_cast<std::size_t>(i)];
    const bool top_stage = (i == layer_id.first - 1);
    if (!top_stage) g = max_pool2_backward(st.pool, g);
    if (!top_stage || layer_id.second == 2) {
      g = relu_backward(st.p2, g);
      Tensor gx;
      conv2d_backward(ps.conv2, st.c2, g, &gx, nullptr);
      g = std::move(gx);
    }
    g = relu_backward(st.p1, g);
    Tensor gx;
    conv2d_backward(ps.conv1, st.c1, g, &gx, nullptr);
    g = std::move(gx);
  }
  return g;
}

// Full backward from a logits gradient; parameter gradients accumulate into
// grad_p, the image gradient is optional.
inline void classifier_backward(const ClassifierParams& p, const ClassifierTape& t,
                                const Tensor& grad_logits, ClassifierParams* grad_p,
                                Tensor* grad_image = nullptr) {
  Tensor g_feat;
  affine_backward(p.head, t.headc, grad_logits, &g_feat,
                  grad_p ? &grad_p->head : nullptr);
  Tensor g_fc1_pre = relu_backward(t.fc1_pre, g_feat);
  Tensor g_flat;
  affine_backward(p.fc1, t.fc1c, g_fc1_pre, &g_flat, grad_p ? &grad_p->fc1 : nullptr);

  const auto& xs = t.stages[2].pool.x_shape;
  Tensor g = max_pool2_backward(t.stages[2].pool,
                                g_flat.reshaped({xs[0], xs[1] / 2, xs[2] / 2}));

  for (int i = 2; i >= 0; --i) {
    const auto& st = t.stages[static_cast<std::size_t>(i)];
    const auto& ps = p.stages[static_cast<std::size_t>(i)];
    if (i != 2) g = max_pool2_backward(st.pool, g);
    g = relu_backward(st.p2, g);
    Tensor gx;
    conv2d_backward(ps.conv2, st.c2, g, &gx, grad_p ? &grad_p->stages[i].conv2 : nullptr);
    g = relu_backward(st.p1, gx);
    const bool need_input = (i > 0) || grad_image;
    conv2d_backward(ps.conv1, st.c1, g, need_input ? &gx : nullptr,
                    grad_p ? &grad_p->stages[i].conv1 : nullptr);
    if (i > 0)
      g = std::move(gx);
    else if (grad_image)
      *grad_image = std::move(gx);
  }
}

// Unlike the translation nets, whose instance norms rescale every layer, the
// classifier has no normalization, so its init must preserve activation scale
// across depth: fan-in-scaled normal weights (He et al.).
inline double he_stddev(int fan_in) { return std::sqrt(2.0 / fan_in); }

inline ClassifierParams init_classifier(const ClassifierArch& arch, Rng& rng) {
  arch.validate();
  ClassifierParams p;
  p.image_size = arch.image_size;
  p.image_channels = arch.image_channels;
  p.num_classes = arch.num_classes;
  p.feature_dim = arch.feature_dim;
  int in_ch = arch.image_channels;
  for (std::size_t i = 0; i < 3; ++i) {
    const int out_ch = arch.stage_channels[i];
    p.stages[i].conv1 =
        detail::init_conv(out_ch, in_ch, 3, 1, 1, rng, he_stddev(in_ch * 9));
    p.stages[i].conv2 =
        detail::init_conv(out_ch, out_ch, 3, 1, 1, rng, he_stddev(out_ch * 9));
    in_ch = out_ch;
  }
  p.fc1 = detail::init_affine(arch.feature_dim, arch.flat_count(), rng,
                              he_stddev(arch.flat_count()));
  p.head = detail::init_affine(arch.num_classes, arch.feature_dim, rng,
                               he_stddev(arch.feature_dim));
  return p;
}

inline ClassifierParams zeros_like(const ClassifierParams& p) {
  ClassifierParams z = p;
  for (auto& st : z.stages) {
    st.conv1.w.fill(0.0);
    st.conv1.b.fill(0.0);
    st.conv2.w.fill(0.0);
    st.conv2.b.fill(0.0);
  }
  z.fc1.w.fill(0.0);
  z.fc1.b.fill(0.0);
  z.head.w.fill(0.0);
  z.head.b.fill(0.0);
  return z;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct ClassifierTrainConfig {
  ClassifierArch arch;
  int steps = 500;
  int batch_size = 8;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double validation_fraction = 0.2;
};

struct ClassifierTrainReport {
  double train_accuracy = 0.0;
  double validation_accuracy = 0.0;
  int steps = 0;
};

using LabeledImage = std::pair<Tensor, ExpressionLabel>;

inline double accuracy(const ClassifierParams& p,
                       const std::vector<LabeledImage>& data) {
  if (data.empty()) return 0.0;
  int hits = 0;
  for (const auto& [img, label] : data) {
    Tensor probs = classify(p, img);
    std::size_t arg = 0;
    for (std::size_t i = 1; i < probs.size(); ++i)
      if (probs[i] > probs[arg]) arg = i;
    if (static_cast<int>(arg) == label.index) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

struct ClassifierMoments {
  std::vector<AdamMoments> blocks;
};

namespace detail {

inline std::vector<Tensor*> param_blocks(ClassifierParams& p) {
  std::vector<Tensor*> out;
  for (auto& st : p.stages) {
    out.push_back(&st.conv1.w);
    out.push_back(&st.conv1.b);
    out.push_back(&st.conv2.w);
    out.push_back(&st.conv2.b);
  }
  out.push_back(&p.fc1.w);
  out.push_back(&p.fc1.b);
  out.push_back(&p.head.w);
  out.push_back(&p.head.b);
  return out;
}

}  // namespace detail

inline ClassifierParams train_classifier(const std::vector<LabeledImage>& data,
                                         const ClassifierTrainConfig& cfg,
                                         std::uint64_t seed,
                                         ClassifierTrainReport* report = nullptr) {
  cfg.arch.validate();
  if (data.empty()) throw std::invalid_argument("train_classifier: empty data");
  std::vector<bool> seen(static_cast<std::size_t>(cfg.arch.num_classes), false);
  for (const auto& [img, label] : data) {
    if (label.index < 0 || label.index >= cfg.arch.num_classes)
      throw std::invalid_argument("train_classifier: label index " +
                                  std::to_string(label.index) + " out of range");
    seen[static_cast<std::size_t>(label.index)] = true;
  }
  if (std::count(seen.begin(), seen.end(), true) < 2)
    throw std::invalid_argument("train_classifier: need at least 2 classes present");

  Rng init_rng(mix_seed(seed, 1));
  ClassifierParams p = init_classifier(cfg.arch, init_rng);

  // Deterministic validation split.
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng split_rng(mix_seed(seed, 2));
  split_rng.shuffle(order.begin(), order.end());
  auto n_val = static_cast<std::size_t>(
      cfg.validation_fraction * static_cast<double>(data.size()));
  if (n_val >= data.size()) n_val = data.size() - 1;
  std::vector<std::size_t> val_idx(order.begin(), order.begin() + n_val);
  std::vector<std::size_t> train_idx(order.begin() + n_val, order.end());

  ClassifierMoments mom;
  {
    std::vector<Tensor*> blocks = detail::param_blocks(p);
    for (Tensor* b : blocks) mom.blocks.push_back(make_moments(*b));
  }

  Rng batch_rng(mix_seed(seed, 3));
  std::size_t cursor = train_idx.size();  // force an initial shuffle
  long step = 0;
  while (step < cfg.steps) {
    ++step;
    ClassifierParams grads = zeros_like(p);
    const int bs = std::min<int>(cfg.batch_size, static_cast<int>(train_idx.size()));
    for (int b = 0; b < bs; ++b) {
      if (cursor >= train_idx.size()) {
        batch_rng.shuffle(train_idx.begin(), train_idx.end());
        cursor = 0;
      }
      const auto& [img, label] = data[train_idx[cursor++]];
      ClassifierTape tape;
      Tensor logits = classifier_logits(p, img, &tape);
      Tensor probs = softmax(logits);
      Tensor g_logits = cross_entropy_logits_grad(probs, label.index);
      g_logits *= 1.0 / static_cast<double>(bs);
      classifier_backward(p, tape, g_logits, &grads, nullptr);
    }
    std::vector<Tensor*> pb = detail::param_blocks(p);
    std::vector<Tensor*> gb = detail::param_blocks(grads);
    for (std::size_t i = 0; i < pb.size(); ++i)
      adam_step(*pb[i], *gb[i], mom.blocks[i], step, cfg.learning_rate, cfg.beta1,
                cfg.beta2);
  }

  if (report) {
    std::vector<LabeledImage> tr, va;
    for (std::size_t i : train_idx) tr.push_back(data[i]);
    for (std::size_t i : val_idx) va.push_back(data[i]);
    report->train_accuracy = accuracy(p, tr);
    report->validation_accuracy = va.empty() ? accuracy(p, tr) : accuracy(p, va);
    report->steps = static_cast<int>(step);
  }
  return p;
}

}  // namespace ecgan
