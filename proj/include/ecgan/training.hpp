#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ecgan/checkpoint.hpp"
#include "ecgan/classifier.hpp"
#include "ecgan/dataset.hpp"
#include "ecgan/losses.hpp"
#include "ecgan/mask.hpp"
#include "ecgan/nets.hpp"
#include "ecgan/optim.hpp"

// The adversarial training loop. Each iteration updates the discriminators
// first (one Adam step on the least-squares loss, generated images detached),
// then both generators jointly (one Adam step on the five-term objective).
// The X->Y pass is conditioned on the target expression; the Y->X pass gets
// the vector with target and neutral swapped.

namespace ecgan {

enum class MaskSource { kAnalytic, kLandmarks };
enum class Direction { kXToY, kYToX };

struct TrainConfig {
  ArchConfig arch;
  LossWeights weights;
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int batch_size = 1;
  long iterations = 2000;
  std::uint64_t seed = 0;
  bool lr_decay = true;  // linear to zero over the second half
  long checkpoint_every = 500;
  MaskSource mask_source = MaskSource::kAnalytic;
  int mask_dilation_radius = 3;
  std::pair<int, int> content_layer{2, 2};
  // Feature extractor for the content term. When absent and lambda2 > 0,
  // train() fits one on the labeled training images before the loop.
  std::optional<ClassifierParams> content_extractor;
  long content_extractor_steps = 300;

  void validate() const {
    arch.validate();
    if (learning_rate <= 0.0)
      throw std::invalid_argument("train config: learning rate must be > 0");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
      throw std::invalid_argument("train config: betas must lie in [0, 1)");
    if (batch_size < 1)
      throw std::invalid_argument("train config: batch size must be >= 1");
    if (iterations < 0)
      throw std::invalid_argument("train config: negative iteration count");
    if (checkpoint_every < 1)
      throw std::invalid_argument("train config: checkpoint interval must be >= 1");
    if (mask_dilation_radius < 0)
      throw std::invalid_argument("train config: negative dilation radius");
    if (weights.lambda1 < 0 || weights.lambda2 < 0 || weights.lambda3 < 0 ||
        weights.lambda4 < 0)
      throw std::invalid_argument("train config: loss weights must be >= 0");
    if (content_extractor) {
      const ClassifierParams& c = *content_extractor;
      if (c.image_size != arch.image_size ||
          c.image_channels != arch.image_channels)
        throw std::invalid_argument(
            "train config: content extractor input shape does not match arch");
    }
  }
};

struct ModelState {
  Models models;
  std::vector<AdamMoments> moments;  // parallel to named_blocks(models)
  long iteration = 0;
  long g_step = 0, d_step = 0;  // Adam step counters, one per player side
  Rng rng{0};
};

inline ModelState init_state(const ArchConfig& arch, std::uint64_t seed) {
  ModelState s;
  s.models = init_params(arch, seed);
  for (const auto& [name, t] : named_blocks(s.models))
    s.moments.push_back(make_moments(*t));
  s.rng = Rng(mix_seed(seed, 0xBA7C4));
  return s;
}

struct MetricRecord {
  long iteration = 0;
  LossBreakdown g;  // generator-side terms; adversarial_d carries the D total
  double d_x_loss = 0.0, d_y_loss = 0.0;
  double grad_norm_g_xy = 0.0, grad_norm_g_yx = 0.0;
  double grad_norm_d_x = 0.0, grad_norm_d_y = 0.0;
  double learning_rate = 0.0;
  double seconds = 0.0;  // wall clock; measurement metadata, not compared
};

// One (x, y) pairing presented to a train step. Masks may be null only when
// the mask weight is zero.
struct TrainItem {
  const Tensor* x_image = nullptr;
  const Tensor* y_image = nullptr;
  const Tensor* x_mask = nullptr;
  const Tensor* y_mask = nullptr;
  ExpressionLabel target;   // the y sample's expression
  ExpressionLabel neutral;  // index 0 of the expression set
};

namespace detail {

inline void scale_inplace(Tensor& t, double c) {
  for (auto& v : t) v *= c;
}

inline void add_scaled(Tensor& dst, const Tensor& src, double c) {
  require_same_shape(dst, src, "add_scaled");
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += c * src[i];
}

inline double block_sq_sum(const NamedBlocks& blocks) {
  double s = 0.0;
  for (const auto& [name, t] : blocks)
    for (const double v : *t) s += v * v;
  return s;
}

inline void check_finite_blocks(const NamedBlocks& blocks, const char* who) {
  for (const auto& [name, t] : blocks)
    for (const double v : *t)
      if (!std::isfinite(v))
        throw NumericalInstabilityError(std::string("non-finite gradient in ") +
                                        who + " block " + name);
}

}  // namespace detail

// Runs one optimization step over the batch and appends the losses to the
// record. Parameter gradients are averaged over batch items.
inline MetricRecord train_step(ModelState& state,
                               const std::vector<TrainItem>& batch,
                               const TrainConfig& cfg, double lr) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  const auto t0 = std::chrono::steady_clock::now();
  const LossWeights& w = cfg.weights;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  Models& m = state.models;
  const int k = cfg.arch.num_classes;
  const bool cond_d = cfg.arch.d_condition == DiscriminatorCondition::kTiledConcat;

  if (w.lambda2 > 0.0 && !cfg.content_extractor)
    throw std::invalid_argument(
        "train_step: content weight is positive but no feature extractor is set");

  struct PerItem {
    AttributeVector z_t, z_n;
    GeneratorTape a1, a3;       // fake_y = g_xy(x), fake_x = g_yx(y)
    Tensor fake_y, fake_x;
  };
  std::vector<PerItem> items(batch.size());

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const TrainItem& it = batch[i];
    PerItem& pi = items[i];
    pi.z_t = encode_attribute(it.target, k);
    pi.z_n = it.target.index == it.neutral.index
                 ? pi.z_t
                 : swap_attribute(pi.z_t, it.target, it.neutral);
    pi.fake_y = generator_forward(m.g_xy, *it.x_image, pi.z_t, &pi.a1);
    pi.fake_x = generator_forward(m.g_yx, *it.y_image, pi.z_n, &pi.a3);
  }

  MetricRecord rec;
  rec.iteration = state.iteration + 1;
  rec.learning_rate = lr;

  // --- Discriminator update (generated images detached) ---
  {
    Models grads;
    grads.d_x = zeros_like(m.d_x);
    grads.d_y = zeros_like(m.d_y);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const TrainItem& it = batch[i];
      PerItem& pi = items[i];
      DiscriminatorTape tr, tf;
      const AttributeVector* zy = cond_d ? &pi.z_t : nullptr;
      const AttributeVector* zx = cond_d ? &pi.z_n : nullptr;

      const PatchMap dy_real = discriminator_forward(m.d_y, *it.y_image, zy, &tr);
      const PatchMap dy_fake = discriminator_forward(m.d_y, pi.fake_y, zy, &tf);
      rec.d_y_loss += lsgan_d_loss(dy_real, dy_fake) * inv_b;
      auto [gyr, gyf] = lsgan_d_loss_grads(dy_real, dy_fake);
      detail::scale_inplace(gyr, inv_b);
      detail::scale_inplace(gyf, inv_b);
      discriminator_backward(m.d_y, tr, gyr, &grads.d_y);
      discriminator_backward(m.d_y, tf, gyf, &grads.d_y);

      const PatchMap dx_real = discriminator_forward(m.d_x, *it.x_image, zx, &tr);
      const PatchMap dx_fake = discriminator_forward(m.d_x, pi.fake_x, zx, &tf);
      rec.d_x_loss += lsgan_d_loss(dx_real, dx_fake) * inv_b;
      auto [gxr, gxf] = lsgan_d_loss_grads(dx_real, dx_fake);
      detail::scale_inplace(gxr, inv_b);
      detail::scale_inplace(gxf, inv_b);
      discriminator_backward(m.d_x, tr, gxr, &grads.d_x);
      discriminator_backward(m.d_x, tf, gxf, &grads.d_x);
    }
    const NamedBlocks gx = named_blocks(grads.d_x, "d_x");
    const NamedBlocks gy = named_blocks(grads.d_y, "d_y");
    detail::check_finite_blocks(gx, "d_x");
    detail::check_finite_blocks(gy, "d_y");
    rec.grad_norm_d_x = std::sqrt(detail::block_sq_sum(gx));
    rec.grad_norm_d_y = std::sqrt(detail::block_sq_sum(gy));

    ++state.d_step;
    const NamedBlocks px = named_blocks(m.d_x, "d_x");
    const NamedBlocks py = named_blocks(m.d_y, "d_y");
    // Moment slots follow named_blocks(models) order: g_xy, g_yx, d_x, d_y.
    const std::size_t d_base = 24;
    for (std::size_t i = 0; i < px.size(); ++i)
      adam_step(*px[i].second, *gx[i].second, state.moments[d_base + i],
                state.d_step, lr, cfg.beta1, cfg.beta2);
    for (std::size_t i = 0; i < py.size(); ++i)
      adam_step(*py[i].second, *gy[i].second, state.moments[d_base + 8 + i],
                state.d_step, lr, cfg.beta1, cfg.beta2);
  }

  // --- Generator update (discriminators frozen, already updated) ---
  {
    Models grads;
    grads.g_xy = zeros_like(m.g_xy);
    grads.g_yx = zeros_like(m.g_yx);
    double adv_g = 0.0, cyc = 0.0, cont = 0.0, idt = 0.0, msk = 0.0;

    for (std::size_t i = 0; i < batch.size(); ++i) {
      const TrainItem& it = batch[i];
      PerItem& pi = items[i];
      const AttributeVector* zy = cond_d ? &pi.z_t : nullptr;
      const AttributeVector* zx = cond_d ? &pi.z_n : nullptr;

      // Adversarial terms against the updated discriminators.
      DiscriminatorTape tb1, tb2;
      const PatchMap df_y = discriminator_forward(m.d_y, pi.fake_y, zy, &tb1);
      const PatchMap df_x = discriminator_forward(m.d_x, pi.fake_x, zx, &tb2);
      adv_g += (lsgan_g_loss(df_y) + lsgan_g_loss(df_x)) * inv_b;

      Tensor grad_fake_y, grad_fake_x;
      {
        Tensor gp = lsgan_g_loss_grad(df_y);
        detail::scale_inplace(gp, inv_b);
        discriminator_backward(m.d_y, tb1, gp, nullptr, &grad_fake_y);
        gp = lsgan_g_loss_grad(df_x);
        detail::scale_inplace(gp, inv_b);
        discriminator_backward(m.d_x, tb2, gp, nullptr, &grad_fake_x);
      }

      // Cycle reconstructions.
      GeneratorTape a2, a4;
      const Tensor cyc_x = generator_forward(m.g_yx, pi.fake_y, pi.z_n, &a2);
      const Tensor cyc_y = generator_forward(m.g_xy, pi.fake_x, pi.z_t, &a4);
      cyc += cycle_loss(*it.x_image, cyc_x, *it.y_image, cyc_y) * inv_b;
      {
        Tensor g_cyc_x = l1_mean_grad(cyc_x, *it.x_image);
        detail::scale_inplace(g_cyc_x, w.lambda1 * inv_b);
        Tensor into_fake_y;
        generator_backward(m.g_yx, a2, g_cyc_x, &grads.g_yx, &into_fake_y);
        detail::add_scaled(grad_fake_y, into_fake_y, 1.0);

        Tensor g_cyc_y = l1_mean_grad(cyc_y, *it.y_image);
        detail::scale_inplace(g_cyc_y, w.lambda1 * inv_b);
        Tensor into_fake_x;
        generator_backward(m.g_xy, a4, g_cyc_y, &grads.g_xy, &into_fake_x);
        detail::add_scaled(grad_fake_x, into_fake_x, 1.0);
      }

      // Content preservation in extractor feature space.
      if (w.lambda2 > 0.0) {
        const ClassifierParams& phi = *cfg.content_extractor;
        const FeatureMap ref_x = extract_features(phi, *it.x_image, cfg.content_layer);
        const FeatureMap ref_y = extract_features(phi, *it.y_image, cfg.content_layer);
        ClassifierTape ct1, ct2;
        const FeatureMap gen_y =
            extract_features(phi, pi.fake_y, cfg.content_layer, &ct1);
        const FeatureMap gen_x =
            extract_features(phi, pi.fake_x, cfg.content_layer, &ct2);
        cont += (content_loss(ref_x, gen_y) + content_loss(ref_y, gen_x)) * inv_b;

        Tensor g_feat = content_loss_grad_gen(ref_x, gen_y);
        detail::scale_inplace(g_feat, w.lambda2 * inv_b);
        detail::add_scaled(grad_fake_y,
                           features_backward(phi, ct1, cfg.content_layer, g_feat),
                           1.0);
        g_feat = content_loss_grad_gen(ref_y, gen_x);
        detail::scale_inplace(g_feat, w.lambda2 * inv_b);
        detail::add_scaled(grad_fake_x,
                           features_backward(phi, ct2, cfg.content_layer, g_feat),
                           1.0);
      }

      // All fake-image gradients collected; push through the primary passes.
      generator_backward(m.g_xy, pi.a1, grad_fake_y, &grads.g_xy);
      generator_backward(m.g_yx, pi.a3, grad_fake_x, &grads.g_yx);

      // Identity mapping on same-domain inputs.
      if (w.lambda3 > 0.0) {
        GeneratorTape a5, a6;
        const Tensor idt_x = generator_forward(m.g_yx, *it.x_image, pi.z_n, &a5);
        const Tensor idt_y = generator_forward(m.g_xy, *it.y_image, pi.z_t, &a6);
        idt += identity_loss(idt_x, *it.x_image, idt_y, *it.y_image) * inv_b;
        Tensor g_idt = l1_mean_grad(idt_x, *it.x_image);
        detail::scale_inplace(g_idt, w.lambda3 * inv_b);
        generator_backward(m.g_yx, a5, g_idt, &grads.g_yx);
        g_idt = l1_mean_grad(idt_y, *it.y_image);
        detail::scale_inplace(g_idt, w.lambda3 * inv_b);
        generator_backward(m.g_xy, a6, g_idt, &grads.g_xy);
      }

      // Masked-face round trips, both directions.
      if (w.lambda4 > 0.0) {
        if (!it.x_mask || !it.y_mask)
          throw std::invalid_argument("train_step: mask weight set but masks missing");
        const Tensor xm = apply_mask(*it.x_image, *it.x_mask);
        const Tensor ym = apply_mask(*it.y_image, *it.y_mask);
        GeneratorTape m1, m2, m3, m4;
        const Tensor x_mid = generator_forward(m.g_xy, xm, pi.z_t, &m1);
        const Tensor x_rt = generator_forward(m.g_yx, x_mid, pi.z_n, &m2);
        const Tensor y_mid = generator_forward(m.g_yx, ym, pi.z_n, &m3);
        const Tensor y_rt = generator_forward(m.g_xy, y_mid, pi.z_t, &m4);
        msk += (mean_abs_diff(x_rt, xm) + mean_abs_diff(y_rt, ym)) * inv_b;

        Tensor g_rt = l1_mean_grad(x_rt, xm);
        detail::scale_inplace(g_rt, w.lambda4 * inv_b);
        Tensor g_mid;
        generator_backward(m.g_yx, m2, g_rt, &grads.g_yx, &g_mid);
        generator_backward(m.g_xy, m1, g_mid, &grads.g_xy);

        g_rt = l1_mean_grad(y_rt, ym);
        detail::scale_inplace(g_rt, w.lambda4 * inv_b);
        generator_backward(m.g_xy, m4, g_rt, &grads.g_xy, &g_mid);
        generator_backward(m.g_yx, m3, g_mid, &grads.g_yx);
      }
    }

    rec.g = total_loss(adv_g, rec.d_x_loss + rec.d_y_loss, cyc, cont, idt, msk,
                       w);

    const NamedBlocks gxy = named_blocks(grads.g_xy, "g_xy");
    const NamedBlocks gyx = named_blocks(grads.g_yx, "g_yx");
    detail::check_finite_blocks(gxy, "g_xy");
    detail::check_finite_blocks(gyx, "g_yx");
    rec.grad_norm_g_xy = std::sqrt(detail::block_sq_sum(gxy));
    rec.grad_norm_g_yx = std::sqrt(detail::block_sq_sum(gyx));

    ++state.g_step;
    const NamedBlocks pxy = named_blocks(m.g_xy, "g_xy");
    const NamedBlocks pyx = named_blocks(m.g_yx, "g_yx");
    for (std::size_t i = 0; i < pxy.size(); ++i)
      adam_step(*pxy[i].second, *gxy[i].second, state.moments[i], state.g_step,
                lr, cfg.beta1, cfg.beta2);
    for (std::size_t i = 0; i < pyx.size(); ++i)
      adam_step(*pyx[i].second, *gyx[i].second, state.moments[12 + i],
                state.g_step, lr, cfg.beta1, cfg.beta2);
  }

  ++state.iteration;
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                    .count();
  return rec;
}

// Constant for the first half, then linear decay; the last iteration keeps a
// nonzero rate.
inline double scheduled_lr(const TrainConfig& cfg, long t) {
  if (!cfg.lr_decay || cfg.iterations <= 1) return cfg.learning_rate;
  const long half = cfg.iterations / 2;
  if (t <= half) return cfg.learning_rate;
  return cfg.learning_rate * static_cast<double>(cfg.iterations - t + 1) /
         static_cast<double>(cfg.iterations - half);
}

// ---------------------------------------------------------------------------
// Metric log
// ---------------------------------------------------------------------------

inline nlohmann::json metric_record_to_json(const MetricRecord& r) {
  return {{"type", "record"},
          {"iteration", r.iteration},
          {"adversarial_g", r.g.adversarial_g},
          {"adversarial_d", r.g.adversarial_d},
          {"cycle", r.g.cycle},
          {"content", r.g.content},
          {"identity", r.g.identity},
          {"mask", r.g.mask},
          {"g_total", r.g.total},
          {"d_x_loss", r.d_x_loss},
          {"d_y_loss", r.d_y_loss},
          {"grad_norm_g_xy", r.grad_norm_g_xy},
          {"grad_norm_g_yx", r.grad_norm_g_yx},
          {"grad_norm_d_x", r.grad_norm_d_x},
          {"grad_norm_d_y", r.grad_norm_d_y},
          {"learning_rate", r.learning_rate},
          {"seconds", r.seconds}};
}

inline MetricRecord metric_record_from_json(const nlohmann::json& j) {
  MetricRecord r;
  try {
    r.iteration = j.at("iteration").get<long>();
    r.g.adversarial_g = j.at("adversarial_g").get<double>();
    r.g.adversarial_d = j.at("adversarial_d").get<double>();
    r.g.cycle = j.at("cycle").get<double>();
    r.g.content = j.at("content").get<double>();
    r.g.identity = j.at("identity").get<double>();
    r.g.mask = j.at("mask").get<double>();
    r.g.total = j.at("g_total").get<double>();
    r.d_x_loss = j.at("d_x_loss").get<double>();
    r.d_y_loss = j.at("d_y_loss").get<double>();
    r.grad_norm_g_xy = j.at("grad_norm_g_xy").get<double>();
    r.grad_norm_g_yx = j.at("grad_norm_g_yx").get<double>();
    r.grad_norm_d_x = j.at("grad_norm_d_x").get<double>();
    r.grad_norm_d_y = j.at("grad_norm_d_y").get<double>();
    r.learning_rate = j.at("learning_rate").get<double>();
    r.seconds = j.at("seconds").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad metric record: ") + e.what());
  }
  return r;
}

inline nlohmann::json train_config_to_json(const TrainConfig& cfg,
                                           const char* extractor_source) {
  return {{"arch", arch_to_json(cfg.arch)},
          {"lambda1", cfg.weights.lambda1},
          {"lambda2", cfg.weights.lambda2},
          {"lambda3", cfg.weights.lambda3},
          {"lambda4", cfg.weights.lambda4},
          {"learning_rate", cfg.learning_rate},
          {"beta1", cfg.beta1},
          {"beta2", cfg.beta2},
          {"batch_size", cfg.batch_size},
          {"iterations", cfg.iterations},
          {"seed", cfg.seed},
          {"lr_decay", cfg.lr_decay},
          {"checkpoint_every", cfg.checkpoint_every},
          {"mask_source",
           cfg.mask_source == MaskSource::kAnalytic ? "analytic" : "landmarks"},
          {"mask_dilation_radius", cfg.mask_dilation_radius},
          {"content_layer", {cfg.content_layer.first, cfg.content_layer.second}},
          {"content_extractor", extractor_source},
          {"content_extractor_steps", cfg.content_extractor_steps}};
}

struct MetricLog {
  nlohmann::json header;
  std::vector<MetricRecord> records;
};

inline MetricLog read_metric_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open metric log " + path);
  MetricLog log;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    const std::string type = j.value("type", "");
    if (type == "header") {
      log.header = j;
    } else if (type == "record") {
      log.records.push_back(metric_record_from_json(j));
    } else {
      throw FormatError(path + ":" + std::to_string(line_no) +
                        ": unknown line type '" + type + "'");
    }
  }
  if (log.header.is_null())
    throw FormatError(path + ": metric log has no header line");
  return log;
}

// ---------------------------------------------------------------------------
// Full run
// ---------------------------------------------------------------------------

struct TrainResult {
  std::string checkpoint_path;
  std::string metric_log_path;
  long iterations_run = 0;
};

namespace detail {

struct PreparedDomain {
  std::vector<const Tensor*> images;
  std::vector<Tensor> masks;  // empty when the mask term is off
  std::vector<ExpressionLabel> labels;
};

inline PreparedDomain prepare_domain(const std::vector<Sample>& samples,
                                     const TrainConfig& cfg) {
  PreparedDomain d;
  for (const Sample& s : samples) {
    d.images.push_back(&s.image);
    d.labels.push_back(s.label);
    if (cfg.weights.lambda4 > 0.0) {
      if (cfg.mask_source == MaskSource::kAnalytic) {
        if (!s.mask)
          throw std::invalid_argument(
              "train: sample lacks a stored mask; provide masks or switch the "
              "mask source to landmarks");
        d.masks.push_back(*s.mask);
      } else {
        d.masks.push_back(landmarks_to_mask(s.landmarks, s.image.dim(1),
                                            s.image.dim(2),
                                            cfg.mask_dilation_radius));
      }
    }
  }
  return d;
}

inline Checkpoint training_checkpoint(const ModelState& state,
                                      const TrainConfig& cfg,
                                      const std::vector<ExpressionLabel>& exprs) {
  Checkpoint ckpt = make_translation_checkpoint(state.models, cfg.arch, exprs,
                                                cfg.seed, state.iteration);
  ckpt.metadata["g_step"] = state.g_step;
  ckpt.metadata["d_step"] = state.d_step;
  ckpt.metadata["rng_state"] = state.rng.state_string();
  const NamedBlocks blocks = named_blocks(const_cast<Models&>(state.models));
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    ckpt.blocks.emplace_back("adam." + blocks[i].first + ".m", state.moments[i].m);
    ckpt.blocks.emplace_back("adam." + blocks[i].first + ".v", state.moments[i].v);
  }
  return ckpt;
}

}  // namespace detail

inline ClassifierParams train_content_extractor(const TrainConfig& cfg,
                                                const DatasetSplit& data) {
  std::vector<LabeledImage> labeled;
  for (const Sample& s : data.domain_x) labeled.push_back({s.image, s.label});
  for (const Sample& s : data.domain_y) labeled.push_back({s.image, s.label});
  Rng pick(mix_seed(cfg.seed, 0xC0FFEE));
  pick.shuffle(labeled.begin(), labeled.end());
  if (labeled.size() > 200) labeled.resize(200);

  ClassifierTrainConfig ccfg;
  ccfg.arch.image_size = cfg.arch.image_size;
  ccfg.arch.image_channels = cfg.arch.image_channels;
  ccfg.arch.num_classes = cfg.arch.num_classes;
  ccfg.steps = static_cast<int>(cfg.content_extractor_steps);
  return train_classifier(labeled, ccfg, mix_seed(cfg.seed, 0xFEA7), nullptr);
}

inline TrainResult train(TrainConfig cfg, const DatasetSplit& data,
                         const std::string& out_dir) {
  cfg.validate();
  if (data.expressions.size() != static_cast<std::size_t>(cfg.arch.num_classes))
    throw std::invalid_argument(
        "train: dataset has " + std::to_string(data.expressions.size()) +
        " expressions but the arch expects " +
        std::to_string(cfg.arch.num_classes));
  if (data.height != cfg.arch.image_size || data.width != cfg.arch.image_size)
    throw std::invalid_argument("train: dataset size does not match arch");
  if (data.domain_x.empty() || data.domain_y.empty())
    throw std::invalid_argument("train: both training domains must be nonempty");

  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  const char* extractor_source = "none";
  if (cfg.weights.lambda2 > 0.0) {
    if (cfg.content_extractor) {
      extractor_source = "external";
    } else {
      extractor_source = "trained-in-run";
      cfg.content_extractor = train_content_extractor(cfg, data);
    }
    if (cfg.content_extractor->image_size != cfg.arch.image_size)
      throw std::invalid_argument("train: content extractor size mismatch");
  }

  const detail::PreparedDomain dx = detail::prepare_domain(data.domain_x, cfg);
  const detail::PreparedDomain dy = detail::prepare_domain(data.domain_y, cfg);

  const std::string log_path = (fs::path(out_dir) / "metrics.jsonl").string();
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw std::runtime_error("train: cannot write " + log_path);
  nlohmann::json header{
      {"type", "header"},
      {"format", "ecgan-metrics"},
      {"version", 1},
      {"config", train_config_to_json(cfg, extractor_source)},
      {"expressions", [&] {
         nlohmann::json names = nlohmann::json::array();
         for (const auto& e : data.expressions) names.push_back(e.name);
         return names;
       }()},
      {"n_domain_x", data.domain_x.size()},
      {"n_domain_y", data.domain_y.size()},
      {"deviation_notices",
       {"perceptual features come from the task-trained expression classifier; "
        "no pretrained VGG network is involved",
        "the content term compares each generator's input features against its "
        "own output features",
        "all L1/L2 loss reductions are means over elements, making the loss "
        "weights resolution-independent",
        "the seconds field is wall-clock measurement metadata and is excluded "
        "from determinism comparisons"}}};
  log << header.dump() << "\n";
  log.flush();

  ModelState state = init_state(cfg.arch, cfg.seed);

  auto checkpoint_name = [&](long iter) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "checkpoint-%06ld.ckpt", iter);
    return (fs::path(out_dir) / buf).string();
  };
  std::string last_good = checkpoint_name(0);
  save_checkpoint(last_good,
                  detail::training_checkpoint(state, cfg, data.expressions));

  const ExpressionLabel neutral = data.expressions[0];
  for (long t = 1; t <= cfg.iterations; ++t) {
    std::vector<TrainItem> batch(static_cast<std::size_t>(cfg.batch_size));
    for (auto& item : batch) {
      const auto xi = static_cast<std::size_t>(
          state.rng.uniform_int(static_cast<int>(dx.images.size())));
      const auto yi = static_cast<std::size_t>(
          state.rng.uniform_int(static_cast<int>(dy.images.size())));
      item.x_image = dx.images[xi];
      item.y_image = dy.images[yi];
      item.target = dy.labels[yi];
      item.neutral = neutral;
      if (cfg.weights.lambda4 > 0.0) {
        item.x_mask = &dx.masks[xi];
        item.y_mask = &dy.masks[yi];
      }
    }
    MetricRecord rec;
    try {
      rec = train_step(state, batch, cfg, scheduled_lr(cfg, t));
    } catch (const NumericalInstabilityError& e) {
      throw TrainingAborted(std::string(e.what()) + " at iteration " +
                                std::to_string(t) + "; last good checkpoint: " +
                                last_good,
                            last_good, t - 1);
    }
    log << metric_record_to_json(rec).dump() << "\n";
    log.flush();
    if (t % cfg.checkpoint_every == 0 && t != cfg.iterations) {
      const std::string path = checkpoint_name(t);
      save_checkpoint(path,
                      detail::training_checkpoint(state, cfg, data.expressions));
      last_good = path;
    }
  }

  const std::string final_path = (fs::path(out_dir) / "checkpoint-final.ckpt").string();
  save_checkpoint(final_path,
                  detail::training_checkpoint(state, cfg, data.expressions));
  return {final_path, log_path, cfg.iterations};
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

inline Tensor translate(const TranslationCheckpoint& ckpt, const Tensor& image,
                        const ExpressionLabel& target, Direction direction) {
  const int k = ckpt.arch.num_classes;
  if (target.index < 0 || target.index >= k)
    throw std::invalid_argument(
        "translate: target index " + std::to_string(target.index) +
        " outside the checkpoint's " + std::to_string(k) + " classes");
  const AttributeVector z = encode_attribute(target, k);
  const GeneratorParams& g =
      direction == Direction::kXToY ? ckpt.models.g_xy : ckpt.models.g_yx;
  return generator_forward(g, image, z);
}

}  // namespace ecgan
