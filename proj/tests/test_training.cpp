#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ecgan/training.hpp"

namespace ecgan {
namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("ecgan_train_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string str(const std::string& leaf = "") const {
    return leaf.empty() ? path.string() : (path / leaf).string();
  }
};

Tensor random_image(Rng& rng, std::size_t ch, std::size_t hw) {
  Tensor t({ch, hw, hw});
  for (auto& v : t) v = rng.uniform(-1.0, 1.0);
  return t;
}

Tensor block_mask(std::size_t hw, std::size_t lo, std::size_t hi) {
  Tensor m({hw, hw});
  for (std::size_t r = lo; r < hi; ++r)
    for (std::size_t c = lo; c < hi; ++c) m.at(r, c) = 1.0;
  return m;
}

void scale(Tensor& t, double c) {
  for (auto& v : t) v *= c;
}

void axpy(Tensor& dst, const Tensor& src) {
  ASSERT_EQ(dst.shape(), src.shape());
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

ArchConfig toy_arch() {
  ArchConfig a;
  a.image_size = 16;
  a.image_channels = 1;
  a.num_classes = 3;
  a.enc_ch1 = 3;
  a.enc_ch2 = 5;
  a.bottleneck_width = 11;
  a.disc_ch1 = 4;
  a.disc_ch2 = 6;
  a.disc_ch3 = 8;
  a.condition_bottleneck = true;
  a.d_condition = DiscriminatorCondition::kTiledConcat;
  return a;
}

ClassifierParams toy_extractor() {
  ClassifierArch ca;
  ca.image_size = 16;
  ca.image_channels = 1;
  ca.num_classes = 3;
  ca.stage_channels = {4, 8, 16};
  ca.feature_dim = 16;
  Rng rng(99);
  return init_classifier(ca, rng);
}

void expect_models_close(Models& got, Models& want, double tol) {
  const NamedBlocks bg = named_blocks(got);
  const NamedBlocks bw = named_blocks(want);
  ASSERT_EQ(bg.size(), bw.size());
  for (std::size_t i = 0; i < bg.size(); ++i) {
    ASSERT_EQ(bg[i].first, bw[i].first);
    EXPECT_LE(max_abs_diff(*bg[i].second, *bw[i].second), tol)
        << "block " << bg[i].first;
  }
}

// The first optimization step on a fixed two-pair batch, recomputed here as a
// single straight-line pass with no batching loop: every loss term, every
// gradient path, and both Adam applications are written out longhand. The
// trained step must agree with this composition in every reported loss field
// and every parameter block.
TEST(TrainStep, SingleStepMatchesManualComposition) {
  const ArchConfig arch = toy_arch();
  const auto exprs = make_expression_set({"neutral", "happy", "anger"});

  TrainConfig cfg;
  cfg.arch = arch;
  cfg.content_extractor = toy_extractor();
  cfg.content_layer = {2, 2};
  const LossWeights w = cfg.weights;  // 10, 1, 5, 10
  const double lr = 2e-4;

  Rng data_rng(123);
  const Tensor x0 = random_image(data_rng, 1, 16);
  const Tensor x1 = random_image(data_rng, 1, 16);
  const Tensor y0 = random_image(data_rng, 1, 16);
  const Tensor y1 = random_image(data_rng, 1, 16);
  const Tensor mx0 = block_mask(16, 3, 12), mx1 = block_mask(16, 2, 10);
  const Tensor my0 = block_mask(16, 4, 13), my1 = block_mask(16, 5, 14);

  std::vector<TrainItem> batch(2);
  batch[0] = {&x0, &y0, &mx0, &my0, exprs[1], exprs[0]};
  batch[1] = {&x1, &y1, &mx1, &my1, exprs[2], exprs[0]};

  ModelState state = init_state(arch, 7);
  const MetricRecord rec = train_step(state, batch, cfg, lr);

  // ---- manual recomputation from the same starting point ----
  Models mm = init_params(arch, 7);
  const ClassifierParams& phi = *cfg.content_extractor;
  const double h = 0.5;  // one over the batch size

  const AttributeVector zat = encode_attribute(exprs[1], 3);
  const AttributeVector zan = swap_attribute(zat, exprs[1], exprs[0]);
  const AttributeVector zbt = encode_attribute(exprs[2], 3);
  const AttributeVector zbn = swap_attribute(zbt, exprs[2], exprs[0]);

  GeneratorTape a1A, a3A, a1B, a3B;
  const Tensor fyA = generator_forward(mm.g_xy, x0, zat, &a1A);
  const Tensor fxA = generator_forward(mm.g_yx, y0, zan, &a3A);
  const Tensor fyB = generator_forward(mm.g_xy, x1, zbt, &a1B);
  const Tensor fxB = generator_forward(mm.g_yx, y1, zbn, &a3B);

  // Discriminator side first, generated images detached.
  DiscriminatorParams gdx = zeros_like(mm.d_x), gdy = zeros_like(mm.d_y);
  double d_x_loss = 0.0, d_y_loss = 0.0;
  {
    DiscriminatorTape tr, tf;
    const PatchMap ryA = discriminator_forward(mm.d_y, y0, &zat, &tr);
    const PatchMap fyA_d = discriminator_forward(mm.d_y, fyA, &zat, &tf);
    d_y_loss += lsgan_d_loss(ryA, fyA_d) * h;
    auto [gr, gf] = lsgan_d_loss_grads(ryA, fyA_d);
    scale(gr, h);
    scale(gf, h);
    discriminator_backward(mm.d_y, tr, gr, &gdy);
    discriminator_backward(mm.d_y, tf, gf, &gdy);

    const PatchMap rxA = discriminator_forward(mm.d_x, x0, &zan, &tr);
    const PatchMap fxA_d = discriminator_forward(mm.d_x, fxA, &zan, &tf);
    d_x_loss += lsgan_d_loss(rxA, fxA_d) * h;
    auto [gr2, gf2] = lsgan_d_loss_grads(rxA, fxA_d);
    scale(gr2, h);
    scale(gf2, h);
    discriminator_backward(mm.d_x, tr, gr2, &gdx);
    discriminator_backward(mm.d_x, tf, gf2, &gdx);

    const PatchMap ryB = discriminator_forward(mm.d_y, y1, &zbt, &tr);
    const PatchMap fyB_d = discriminator_forward(mm.d_y, fyB, &zbt, &tf);
    d_y_loss += lsgan_d_loss(ryB, fyB_d) * h;
    auto [gr3, gf3] = lsgan_d_loss_grads(ryB, fyB_d);
    scale(gr3, h);
    scale(gf3, h);
    discriminator_backward(mm.d_y, tr, gr3, &gdy);
    discriminator_backward(mm.d_y, tf, gf3, &gdy);

    const PatchMap rxB = discriminator_forward(mm.d_x, x1, &zbn, &tr);
    const PatchMap fxB_d = discriminator_forward(mm.d_x, fxB, &zbn, &tf);
    d_x_loss += lsgan_d_loss(rxB, fxB_d) * h;
    auto [gr4, gf4] = lsgan_d_loss_grads(rxB, fxB_d);
    scale(gr4, h);
    scale(gf4, h);
    discriminator_backward(mm.d_x, tr, gr4, &gdx);
    discriminator_backward(mm.d_x, tf, gf4, &gdx);
  }
  {
    const NamedBlocks px = named_blocks(mm.d_x, "d_x");
    const NamedBlocks py = named_blocks(mm.d_y, "d_y");
    const NamedBlocks gx = named_blocks(gdx, "d_x");
    const NamedBlocks gy = named_blocks(gdy, "d_y");
    for (std::size_t i = 0; i < px.size(); ++i) {
      AdamMoments mom = make_moments(*px[i].second);
      adam_step(*px[i].second, *gx[i].second, mom, 1, lr, cfg.beta1, cfg.beta2);
    }
    for (std::size_t i = 0; i < py.size(); ++i) {
      AdamMoments mom = make_moments(*py[i].second);
      adam_step(*py[i].second, *gy[i].second, mom, 1, lr, cfg.beta1, cfg.beta2);
    }
  }

  // Generator side against the freshly updated discriminators.
  GeneratorParams ggxy = zeros_like(mm.g_xy), ggyx = zeros_like(mm.g_yx);
  double adv = 0.0, cyc = 0.0, cont = 0.0, idt = 0.0, msk = 0.0;

  // Item A adversarial.
  Tensor gfyA, gfxA;
  {
    DiscriminatorTape tb1, tb2;
    const PatchMap dfy = discriminator_forward(mm.d_y, fyA, &zat, &tb1);
    const PatchMap dfx = discriminator_forward(mm.d_x, fxA, &zan, &tb2);
    adv += (lsgan_g_loss(dfy) + lsgan_g_loss(dfx)) * h;
    Tensor gp = lsgan_g_loss_grad(dfy);
    scale(gp, h);
    discriminator_backward(mm.d_y, tb1, gp, nullptr, &gfyA);
    gp = lsgan_g_loss_grad(dfx);
    scale(gp, h);
    discriminator_backward(mm.d_x, tb2, gp, nullptr, &gfxA);
  }
  // Item A cycle.
  {
    GeneratorTape a2, a4;
    const Tensor cx = generator_forward(mm.g_yx, fyA, zan, &a2);
    const Tensor cy = generator_forward(mm.g_xy, fxA, zat, &a4);
    cyc += cycle_loss(x0, cx, y0, cy) * h;
    Tensor g = l1_mean_grad(cx, x0);
    scale(g, w.lambda1 * h);
    Tensor into;
    generator_backward(mm.g_yx, a2, g, &ggyx, &into);
    axpy(gfyA, into);
    g = l1_mean_grad(cy, y0);
    scale(g, w.lambda1 * h);
    generator_backward(mm.g_xy, a4, g, &ggxy, &into);
    axpy(gfxA, into);
  }
  // Item A content.
  {
    const FeatureMap rx = extract_features(phi, x0, cfg.content_layer);
    const FeatureMap ry = extract_features(phi, y0, cfg.content_layer);
    ClassifierTape ct1, ct2;
    const FeatureMap gy = extract_features(phi, fyA, cfg.content_layer, &ct1);
    const FeatureMap gx = extract_features(phi, fxA, cfg.content_layer, &ct2);
    cont += (content_loss(rx, gy) + content_loss(ry, gx)) * h;
    Tensor g = content_loss_grad_gen(rx, gy);
    scale(g, w.lambda2 * h);
    Tensor gi = features_backward(phi, ct1, cfg.content_layer, g);
    axpy(gfyA, gi);
    g = content_loss_grad_gen(ry, gx);
    scale(g, w.lambda2 * h);
    gi = features_backward(phi, ct2, cfg.content_layer, g);
    axpy(gfxA, gi);
  }
  generator_backward(mm.g_xy, a1A, gfyA, &ggxy);
  generator_backward(mm.g_yx, a3A, gfxA, &ggyx);
  // Item A identity.
  {
    GeneratorTape a5, a6;
    const Tensor ix = generator_forward(mm.g_yx, x0, zan, &a5);
    const Tensor iy = generator_forward(mm.g_xy, y0, zat, &a6);
    idt += identity_loss(ix, x0, iy, y0) * h;
    Tensor g = l1_mean_grad(ix, x0);
    scale(g, w.lambda3 * h);
    generator_backward(mm.g_yx, a5, g, &ggyx);
    g = l1_mean_grad(iy, y0);
    scale(g, w.lambda3 * h);
    generator_backward(mm.g_xy, a6, g, &ggxy);
  }
  // Item A mask round trips.
  {
    const Tensor xm = apply_mask(x0, mx0);
    const Tensor ym = apply_mask(y0, my0);
    GeneratorTape m1, m2, m3, m4;
    const Tensor xmid = generator_forward(mm.g_xy, xm, zat, &m1);
    const Tensor xrt = generator_forward(mm.g_yx, xmid, zan, &m2);
    const Tensor ymid = generator_forward(mm.g_yx, ym, zan, &m3);
    const Tensor yrt = generator_forward(mm.g_xy, ymid, zat, &m4);
    msk += (mean_abs_diff(xrt, xm) + mean_abs_diff(yrt, ym)) * h;
    Tensor g = l1_mean_grad(xrt, xm);
    scale(g, w.lambda4 * h);
    Tensor gmid;
    generator_backward(mm.g_yx, m2, g, &ggyx, &gmid);
    generator_backward(mm.g_xy, m1, gmid, &ggxy);
    g = l1_mean_grad(yrt, ym);
    scale(g, w.lambda4 * h);
    generator_backward(mm.g_xy, m4, g, &ggxy, &gmid);
    generator_backward(mm.g_yx, m3, gmid, &ggyx);
  }

  // Item B, same sequence.
  Tensor gfyB, gfxB;
  {
    DiscriminatorTape tb1, tb2;
    const PatchMap dfy = discriminator_forward(mm.d_y, fyB, &zbt, &tb1);
    const PatchMap dfx = discriminator_forward(mm.d_x, fxB, &zbn, &tb2);
    adv += (lsgan_g_loss(dfy) + lsgan_g_loss(dfx)) * h;
    Tensor gp = lsgan_g_loss_grad(dfy);
    scale(gp, h);
    discriminator_backward(mm.d_y, tb1, gp, nullptr, &gfyB);
    gp = lsgan_g_loss_grad(dfx);
    scale(gp, h);
    discriminator_backward(mm.d_x, tb2, gp, nullptr, &gfxB);
  }
  {
    GeneratorTape a2, a4;
    const Tensor cx = generator_forward(mm.g_yx, fyB, zbn, &a2);
    const Tensor cy = generator_forward(mm.g_xy, fxB, zbt, &a4);
    cyc += cycle_loss(x1, cx, y1, cy) * h;
    Tensor g = l1_mean_grad(cx, x1);
    scale(g, w.lambda1 * h);
    Tensor into;
    generator_backward(mm.g_yx, a2, g, &ggyx, &into);
    axpy(gfyB, into);
    g = l1_mean_grad(cy, y1);
    scale(g, w.lambda1 * h);
    generator_backward(mm.g_xy, a4, g, &ggxy, &into);
    axpy(gfxB, into);
  }
  {
    const FeatureMap rx = extract_features(phi, x1, cfg.content_layer);
    const FeatureMap ry = extract_features(phi, y1, cfg.content_layer);
    ClassifierTape ct1, ct2;
    const FeatureMap gy = extract_features(phi, fyB, cfg.content_layer, &ct1);
    const FeatureMap gx = extract_features(phi, fxB, cfg.content_layer, &ct2);
    cont += (content_loss(rx, gy) + content_loss(ry, gx)) * h;
    Tensor g = content_loss_grad_gen(rx, gy);
    scale(g, w.lambda2 * h);
    Tensor gi = features_backward(phi, ct1, cfg.content_layer, g);
    axpy(gfyB, gi);
    g = content_loss_grad_gen(ry, gx);
    scale(g, w.lambda2 * h);
    gi = features_backward(phi, ct2, cfg.content_layer, g);
    axpy(gfxB, gi);
  }
  generator_backward(mm.g_xy, a1B, gfyB, &ggxy);
  generator_backward(mm.g_yx, a3B, gfxB, &ggyx);
  {
    GeneratorTape a5, a6;
    const Tensor ix = generator_forward(mm.g_yx, x1, zbn, &a5);
    const Tensor iy = generator_forward(mm.g_xy, y1, zbt, &a6);
    idt += identity_loss(ix, x1, iy, y1) * h;
    Tensor g = l1_mean_grad(ix, x1);
    scale(g, w.lambda3 * h);
    generator_backward(mm.g_yx, a5, g, &ggyx);
    g = l1_mean_grad(iy, y1);
    scale(g, w.lambda3 * h);
    generator_backward(mm.g_xy, a6, g, &ggxy);
  }
  {
    const Tensor xm = apply_mask(x1, mx1);
    const Tensor ym = apply_mask(y1, my1);
    GeneratorTape m1, m2, m3, m4;
    const Tensor xmid = generator_forward(mm.g_xy, xm, zbt, &m1);
    const Tensor xrt = generator_forward(mm.g_yx, xmid, zbn, &m2);
    const Tensor ymid = generator_forward(mm.g_yx, ym, zbn, &m3);
    const Tensor yrt = generator_forward(mm.g_xy, ymid, zbt, &m4);
    msk += (mean_abs_diff(xrt, xm) + mean_abs_diff(yrt, ym)) * h;
    Tensor g = l1_mean_grad(xrt, xm);
    scale(g, w.lambda4 * h);
    Tensor gmid;
    generator_backward(mm.g_yx, m2, g, &ggyx, &gmid);
    generator_backward(mm.g_xy, m1, gmid, &ggxy);
    g = l1_mean_grad(yrt, ym);
    scale(g, w.lambda4 * h);
    generator_backward(mm.g_xy, m4, g, &ggxy, &gmid);
    generator_backward(mm.g_yx, m3, gmid, &ggyx);
  }

  {
    const NamedBlocks pxy = named_blocks(mm.g_xy, "g_xy");
    const NamedBlocks pyx = named_blocks(mm.g_yx, "g_yx");
    const NamedBlocks gxy = named_blocks(ggxy, "g_xy");
    const NamedBlocks gyx = named_blocks(ggyx, "g_yx");
    for (std::size_t i = 0; i < pxy.size(); ++i) {
      AdamMoments mom = make_moments(*pxy[i].second);
      adam_step(*pxy[i].second, *gxy[i].second, mom, 1, lr, cfg.beta1, cfg.beta2);
    }
    for (std::size_t i = 0; i < pyx.size(); ++i) {
      AdamMoments mom = make_moments(*pyx[i].second);
      adam_step(*pyx[i].second, *gyx[i].second, mom, 1, lr, cfg.beta1, cfg.beta2);
    }
  }

  const double tol = 1e-6;
  EXPECT_NEAR(rec.d_x_loss, d_x_loss, tol);
  EXPECT_NEAR(rec.d_y_loss, d_y_loss, tol);
  EXPECT_NEAR(rec.g.adversarial_g, adv, tol);
  EXPECT_NEAR(rec.g.adversarial_d, d_x_loss + d_y_loss, tol);
  EXPECT_NEAR(rec.g.cycle, cyc, tol);
  EXPECT_NEAR(rec.g.content, cont, tol);
  EXPECT_NEAR(rec.g.identity, idt, tol);
  EXPECT_NEAR(rec.g.mask, msk, tol);
  EXPECT_NEAR(rec.g.total,
              adv + w.lambda1 * cyc + w.lambda2 * cont + w.lambda3 * idt +
                  w.lambda4 * msk,
              tol);
  EXPECT_EQ(rec.iteration, 1);
  EXPECT_EQ(state.iteration, 1);
  EXPECT_EQ(state.g_step, 1);
  EXPECT_EQ(state.d_step, 1);
  EXPECT_GT(rec.grad_norm_g_xy, 0.0);
  EXPECT_GT(rec.grad_norm_d_y, 0.0);

  expect_models_close(state.models, mm, tol);
}

// With the condition paths disabled and the content and mask weights at zero,
// the step must coincide with a plain two-generator cycle objective; the
// manual composition below contains no conditioning, content, or mask code.
TEST(TrainStep, ReducesToPlainCycleObjective) {
  ArchConfig arch = toy_arch();
  arch.condition_bottleneck = false;
  arch.d_condition = DiscriminatorCondition::kNone;
  const auto exprs = make_expression_set({"neutral", "happy", "anger"});

  TrainConfig cfg;
  cfg.arch = arch;
  cfg.weights.lambda2 = 0.0;
  cfg.weights.lambda4 = 0.0;
  const LossWeights w = cfg.weights;
  const double lr = 1e-3;

  Rng data_rng(321);
  const Tensor x0 = random_image(data_rng, 1, 16);
  const Tensor y0 = random_image(data_rng, 1, 16);

  std::vector<TrainItem> batch(1);
  batch[0] = {&x0, &y0, nullptr, nullptr, exprs[1], exprs[0]};

  ModelState state = init_state(arch, 11);
  const MetricRecord rec = train_step(state, batch, cfg, lr);

  Models mm = init_params(arch, 11);
  const AttributeVector z = encode_attribute(exprs[1], 3);  // ignored by nets

  GeneratorTape a1, a3;
  const Tensor fy = generator_forward(mm.g_xy, x0, z, &a1);
  const Tensor fx = generator_forward(mm.g_yx, y0, z, &a3);

  DiscriminatorParams gdx = zeros_like(mm.d_x), gdy = zeros_like(mm.d_y);
  double d_x_loss, d_y_loss;
  {
    DiscriminatorTape tr, tf;
    const PatchMap ry = discriminator_forward(mm.d_y, y0, nullptr, &tr);
    const PatchMap fy_d = discriminator_forward(mm.d_y, fy, nullptr, &tf);
    d_y_loss = lsgan_d_loss(ry, fy_d);
    auto [gr, gf] = lsgan_d_loss_grads(ry, fy_d);
    discriminator_backward(mm.d_y, tr, gr, &gdy);
    discriminator_backward(mm.d_y, tf, gf, &gdy);
    const PatchMap rx = discriminator_forward(mm.d_x, x0, nullptr, &tr);
    const PatchMap fx_d = discriminator_forward(mm.d_x, fx, nullptr, &tf);
    d_x_loss = lsgan_d_loss(rx, fx_d);
    auto [gr2, gf2] = lsgan_d_loss_grads(rx, fx_d);
    discriminator_backward(mm.d_x, tr, gr2, &gdx);
    discriminator_backward(mm.d_x, tf, gf2, &gdx);
  }
  for (auto side : {std::pair{&mm.d_x, &gdx}, std::pair{&mm.d_y, &gdy}}) {
    const NamedBlocks p = named_blocks(*side.first, "d");
    const NamedBlocks g = named_blocks(*side.second, "d");
    for (std::size_t i = 0; i < p.size(); ++i) {
      AdamMoments mom = make_moments(*p[i].second);
      adam_step(*p[i].second, *g[i].second, mom, 1, lr, cfg.beta1, cfg.beta2);
    }
  }

  GeneratorParams ggxy = zeros_like(mm.g_xy), ggyx = zeros_like(mm.g_yx);
  double adv, cyc, idt;
  Tensor gfy, gfx;
  {
    DiscriminatorTape tb1, tb2;
    const PatchMap dfy = discriminator_forward(mm.d_y, fy, nullptr, &tb1);
    const PatchMap dfx = discriminator_forward(mm.d_x, fx, nullptr, &tb2);
    adv = lsgan_g_loss(dfy) + lsgan_g_loss(dfx);
    Tensor gp = lsgan_g_loss_grad(dfy);
    discriminator_backward(mm.d_y, tb1, gp, nullptr, &gfy);
    gp = lsgan_g_loss_grad(dfx);
    discriminator_backward(mm.d_x, tb2, gp, nullptr, &gfx);
  }
  {
    GeneratorTape a2, a4;
    const Tensor cx = generator_forward(mm.g_yx, fy, z, &a2);
    const Tensor cy = generator_forward(mm.g_xy, fx, z, &a4);
    cyc = cycle_loss(x0, cx, y0, cy);
    Tensor g = l1_mean_grad(cx, x0);
    scale(g, w.lambda1);
    Tensor into;
    generator_backward(mm.g_yx, a2, g, &ggyx, &into);
    axpy(gfy, into);
    g = l1_mean_grad(cy, y0);
    scale(g, w.lambda1);
    generator_backward(mm.g_xy, a4, g, &ggxy, &into);
    axpy(gfx, into);
  }
  generator_backward(mm.g_xy, a1, gfy, &ggxy);
  generator_backward(mm.g_yx, a3, gfx, &ggyx);
  {
    GeneratorTape a5, a6;
    const Tensor ix = generator_forward(mm.g_yx, x0, z, &a5);
    const Tensor iy = generator_forward(mm.g_xy, y0, z, &a6);
    idt = identity_loss(ix, x0, iy, y0);
    Tensor g = l1_mean_grad(ix, x0);
    scale(g, w.lambda3);
    generator_backward(mm.g_yx, a5, g, &ggyx);
    g = l1_mean_grad(iy, y0);
    scale(g, w.lambda3);
    generator_backward(mm.g_xy, a6, g, &ggxy);
  }
  for (auto side : {std::pair{&mm.g_xy, &ggxy}, std::pair{&mm.g_yx, &ggyx}}) {
    const NamedBlocks p = named_blocks(*side.first, "g");
    const NamedBlocks g = named_blocks(*side.second, "g");
    for (std::size_t i = 0; i < p.size(); ++i) {
      AdamMoments mom = make_moments(*p[i].second);
      adam_step(*p[i].second, *g[i].second, mom, 1, lr, cfg.beta1, cfg.beta2);
    }
  }

  const double tol = 1e-6;
  EXPECT_NEAR(rec.d_x_loss, d_x_loss, tol);
  EXPECT_NEAR(rec.d_y_loss, d_y_loss, tol);
  EXPECT_NEAR(rec.g.adversarial_g, adv, tol);
  EXPECT_NEAR(rec.g.cycle, cyc, tol);
  EXPECT_NEAR(rec.g.identity, idt, tol);
  EXPECT_EQ(rec.g.content, 0.0);
  EXPECT_EQ(rec.g.mask, 0.0);
  EXPECT_NEAR(rec.g.total, adv + w.lambda1 * cyc + w.lambda3 * idt, tol);
  expect_models_close(state.models, mm, tol);
}

TEST(TrainStep, ZeroRateStepLeavesParamsButFillsRecord) {
  const ArchConfig arch = toy_arch();
  const auto exprs = make_expression_set({"neutral", "happy", "anger"});
  TrainConfig cfg;
  cfg.arch = arch;
  cfg.weights.lambda2 = 0.0;
  cfg.weights.lambda4 = 0.0;

  Rng data_rng(5);
  const Tensor x0 = random_image(data_rng, 1, 16);
  const Tensor y0 = random_image(data_rng, 1, 16);
  std::vector<TrainItem> batch(1);
  batch[0] = {&x0, &y0, nullptr, nullptr, exprs[2], exprs[0]};

  ModelState state = init_state(arch, 3);
  Models before = state.models;
  const MetricRecord rec = train_step(state, batch, cfg, 0.0);

  expect_models_close(state.models, before, 0.0);
  EXPECT_GT(rec.g.total, 0.0);
  EXPECT_GT(rec.d_x_loss + rec.d_y_loss, 0.0);
  EXPECT_GT(rec.grad_norm_g_xy, 0.0);
  EXPECT_EQ(state.iteration, 1);
}

TEST(TrainStep, RejectsBadInputs) {
  const ArchConfig arch = toy_arch();
  const auto exprs = make_expression_set({"neutral", "happy", "anger"});
  TrainConfig cfg;
  cfg.arch = arch;
  ModelState state = init_state(arch, 1);

  std::vector<TrainItem> empty;
  EXPECT_THROW(train_step(state, empty, cfg, 1e-3), std::invalid_argument);

  Rng data_rng(5);
  const Tensor x0 = random_image(data_rng, 1, 16);
  const Tensor y0 = random_image(data_rng, 1, 16);
  std::vector<TrainItem> batch(1);
  batch[0] = {&x0, &y0, nullptr, nullptr, exprs[1], exprs[0]};
  // Mask weight on but masks missing; content weight on but no extractor.
  TrainConfig no_phi = cfg;
  no_phi.weights.lambda4 = 0.0;
  EXPECT_THROW(train_step(state, batch, no_phi, 1e-3), std::invalid_argument);
  TrainConfig no_mask = cfg;
  no_mask.weights.lambda2 = 0.0;
  EXPECT_THROW(train_step(state, batch, no_mask, 1e-3), std::invalid_argument);
}

TEST(TrainConfig, ValidationCatchesBadSettings) {
  TrainConfig cfg;
  cfg.arch = toy_arch();
  cfg.validate();

  TrainConfig c1 = cfg;
  c1.learning_rate = 0.0;
  EXPECT_THROW(c1.validate(), std::invalid_argument);
  TrainConfig c2 = cfg;
  c2.batch_size = 0;
  EXPECT_THROW(c2.validate(), std::invalid_argument);
  TrainConfig c3 = cfg;
  c3.checkpoint_every = 0;
  EXPECT_THROW(c3.validate(), std::invalid_argument);
  TrainConfig c4 = cfg;
  c4.weights.lambda3 = -1.0;
  EXPECT_THROW(c4.validate(), std::invalid_argument);
  TrainConfig c5 = cfg;
  c5.beta1 = 1.0;
  EXPECT_THROW(c5.validate(), std::invalid_argument);
  TrainConfig c6 = cfg;
  ClassifierArch ca;
  ca.image_size = 32;
  ca.image_channels = 1;
  ca.num_classes = 3;
  Rng rng(1);
  c6.content_extractor = init_classifier(ca, rng);
  EXPECT_THROW(c6.validate(), std::invalid_argument);  // 32 != arch's 16
}

TEST(Schedule, ConstantThenLinearNeverZero) {
  TrainConfig cfg;
  cfg.learning_rate = 1.0;
  cfg.iterations = 10;
  cfg.lr_decay = true;
  EXPECT_DOUBLE_EQ(scheduled_lr(cfg, 1), 1.0);
  EXPECT_DOUBLE_EQ(scheduled_lr(cfg, 5), 1.0);
  EXPECT_DOUBLE_EQ(scheduled_lr(cfg, 6), 1.0);  // continuous at the joint
  EXPECT_DOUBLE_EQ(scheduled_lr(cfg, 7), 0.8);
  EXPECT_DOUBLE_EQ(scheduled_lr(cfg, 10), 0.2);
  for (long t = 1; t <= 10; ++t) EXPECT_GT(scheduled_lr(cfg, t), 0.0);
  cfg.lr_decay = false;
  EXPECT_DOUBLE_EQ(scheduled_lr(cfg, 10), 1.0);
  cfg.lr_decay = true;
  cfg.iterations = 1;
  EXPECT_DOUBLE_EQ(scheduled_lr(cfg, 1), 1.0);
}

TEST(Adam, FirstStepOracle) {
  Tensor w({1});
  Tensor g({1});
  g[0] = 1.0;
  AdamMoments mom = make_moments(w);
  adam_step(w, g, mom, 1, 0.1, 0.5, 0.999);
  EXPECT_NEAR(w[0], -0.1 / (1.0 + 1e-8), 1e-15);
}

// ---------------------------------------------------------------------------
// Full runs on a small generated dataset
// ---------------------------------------------------------------------------

TrainConfig smoke_config() {
  TrainConfig cfg;
  cfg.arch.image_size = 32;
  cfg.arch.image_channels = 3;
  cfg.arch.num_classes = 3;
  cfg.arch.enc_ch1 = 4;
  cfg.arch.enc_ch2 = 8;
  cfg.arch.bottleneck_width = 16;
  cfg.arch.disc_ch1 = 4;
  cfg.arch.disc_ch2 = 6;
  cfg.arch.disc_ch3 = 8;
  cfg.arch.d_condition = DiscriminatorCondition::kTiledConcat;
  cfg.iterations = 3;
  cfg.checkpoint_every = 2;
  cfg.seed = 42;
  cfg.content_extractor_steps = 10;
  return cfg;
}

DatasetSplit smoke_data() {
  return generate_dataset(4, make_expression_set({"neutral", "happy", "anger"}),
                          32, 32, 77, 0.25);
}

TEST(Train, EndToEndLogCheckpointsAndDeterminism) {
  const TrainConfig cfg = smoke_config();
  const DatasetSplit data = smoke_data();

  TempDir dir_a, dir_b;
  const TrainResult ra = train(cfg, data, dir_a.str());
  const TrainResult rb = train(cfg, data, dir_b.str());

  EXPECT_EQ(ra.iterations_run, 3);
  EXPECT_TRUE(fs::exists(dir_a.str("checkpoint-000000.ckpt")));
  EXPECT_TRUE(fs::exists(dir_a.str("checkpoint-000002.ckpt")));
  EXPECT_TRUE(fs::exists(ra.checkpoint_path));
  EXPECT_EQ(fs::path(ra.checkpoint_path).filename(), "checkpoint-final.ckpt");

  const MetricLog log_a = read_metric_log(ra.metric_log_path);
  const MetricLog log_b = read_metric_log(rb.metric_log_path);
  ASSERT_EQ(log_a.records.size(), 3u);
  ASSERT_EQ(log_b.records.size(), 3u);
  EXPECT_EQ(log_a.header.at("format"), "ecgan-metrics");
  EXPECT_EQ(log_a.header.at("config").at("content_extractor"), "trained-in-run");
  EXPECT_FALSE(log_a.header.at("deviation_notices").empty());

  for (std::size_t i = 0; i < 3; ++i) {
    const MetricRecord& a = log_a.records[i];
    const MetricRecord& b = log_b.records[i];
    EXPECT_EQ(a.iteration, static_cast<long>(i) + 1);
    for (double v : {a.g.adversarial_g, a.g.adversarial_d, a.g.cycle,
                     a.g.content, a.g.identity, a.g.mask, a.g.total, a.d_x_loss,
                     a.d_y_loss, a.grad_norm_g_xy, a.grad_norm_g_yx,
                     a.grad_norm_d_x, a.grad_norm_d_y, a.learning_rate})
      EXPECT_TRUE(std::isfinite(v));
    EXPECT_GT(a.g.mask, 0.0);     // mask term active
    EXPECT_GT(a.g.content, 0.0);  // content term active
    EXPECT_NEAR(a.g.adversarial_g, b.g.adversarial_g, 1e-6);
    EXPECT_NEAR(a.g.total, b.g.total, 1e-6);
    EXPECT_NEAR(a.d_x_loss, b.d_x_loss, 1e-6);
    EXPECT_NEAR(a.grad_norm_g_xy, b.grad_norm_g_xy, 1e-6);
  }

  // Same seed, same data: final checkpoints must be byte-identical.
  std::ifstream fa(ra.checkpoint_path, std::ios::binary);
  std::ifstream fb(rb.checkpoint_path, std::ios::binary);
  std::stringstream sa, sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  EXPECT_EQ(sa.str(), sb.str());

  // The final checkpoint drives translation.
  const TranslationCheckpoint ckpt =
      translation_from_checkpoint(load_checkpoint(ra.checkpoint_path));
  EXPECT_EQ(ckpt.iteration, 3);
  const Tensor out = translate(ckpt, data.domain_x[0].image, data.expressions[1],
                               Direction::kXToY);
  EXPECT_EQ(out.shape(), data.domain_x[0].image.shape());
  for (double v : out) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_THROW(
      translate(ckpt, data.domain_x[0].image, ExpressionLabel{7, "bogus"},
                Direction::kXToY),
      std::invalid_argument);

  // Training state rides along for resumption.
  const Checkpoint raw = load_checkpoint(ra.checkpoint_path);
  EXPECT_TRUE(raw.has_block("adam.g_xy.enc1.w.m"));
  EXPECT_TRUE(raw.has_block("adam.d_y.head.b.v"));
  EXPECT_EQ(raw.metadata.at("g_step").get<long>(), 3);
  EXPECT_EQ(raw.metadata.at("d_step").get<long>(), 3);
  EXPECT_FALSE(raw.metadata.at("rng_state").get<std::string>().empty());
}

TEST(Train, ZeroIterationsWritesHeaderAndCheckpoints) {
  TrainConfig cfg = smoke_config();
  cfg.iterations = 0;
  cfg.weights.lambda2 = 0.0;  // no extractor needed
  const DatasetSplit data = smoke_data();

  TempDir dir;
  const TrainResult r = train(cfg, data, dir.str());

  EXPECT_EQ(r.iterations_run, 0);
  const MetricLog log = read_metric_log(r.metric_log_path);
  EXPECT_TRUE(log.records.empty());
  EXPECT_EQ(log.header.at("config").at("content_extractor"), "none");
  EXPECT_TRUE(fs::exists(dir.str("checkpoint-000000.ckpt")));
  const TranslationCheckpoint ckpt =
      translation_from_checkpoint(load_checkpoint(r.checkpoint_path));
  EXPECT_EQ(ckpt.iteration, 0);
}

TEST(Train, MismatchedDatasetIsRejected) {
  TrainConfig cfg = smoke_config();
  const DatasetSplit data = smoke_data();
  TempDir dir;

  TrainConfig wrong_k = cfg;
  wrong_k.arch.num_classes = 4;
  EXPECT_THROW(train(wrong_k, data, dir.str()), std::invalid_argument);

  TrainConfig wrong_size = cfg;
  wrong_size.arch.image_size = 64;
  EXPECT_THROW(train(wrong_size, data, dir.str()), std::invalid_argument);
}

TEST(Train, InstabilityAbortsWithLastCheckpoint) {
  const auto exprs = make_expression_set({"neutral", "happy"});
  DatasetSplit data;
  data.expressions = exprs;
  data.height = data.width = 16;
  data.seed = 0;
  data.n_identities = 2;
  data.test_fraction = 0.0;

  Sample sx;
  sx.image = Tensor({1, 16, 16});
  sx.image[5] = std::numeric_limits<double>::quiet_NaN();
  sx.label = exprs[0];
  sx.identity_id = 0;
  Sample sy;
  sy.image = Tensor({1, 16, 16});
  sy.label = exprs[1];
  sy.identity_id = 1;
  data.domain_x.push_back(sx);
  data.domain_y.push_back(sy);

  TrainConfig cfg;
  cfg.arch = toy_arch();
  cfg.arch.num_classes = 2;
  cfg.weights.lambda2 = 0.0;
  cfg.weights.lambda4 = 0.0;
  cfg.iterations = 4;
  cfg.seed = 9;

  TempDir dir;
  try {
    train(cfg, data, dir.str());
    FAIL() << "expected TrainingAborted";
  } catch (const TrainingAborted& e) {
    EXPECT_EQ(e.aborted_at_iteration, 0);
    EXPECT_TRUE(fs::exists(e.last_checkpoint_path));
    EXPECT_NE(std::string(e.what()).find("checkpoint-000000"), std::string::npos);
    const TranslationCheckpoint ckpt =
        translation_from_checkpoint(load_checkpoint(e.last_checkpoint_path));
    EXPECT_EQ(ckpt.iteration, 0);
  }
}

TEST(MetricLog, RoundTripAndErrors) {
  MetricRecord r;
  r.iteration = 17;
  r.g.adversarial_g = 0.25;
  r.g.total = 3.5;
  r.d_x_loss = 0.125;
  r.grad_norm_d_y = 2.0;
  r.learning_rate = 2e-4;
  r.seconds = 0.75;
  const MetricRecord back = metric_record_from_json(metric_record_to_json(r));
  EXPECT_EQ(back.iteration, 17);
  EXPECT_DOUBLE_EQ(back.g.adversarial_g, 0.25);
  EXPECT_DOUBLE_EQ(back.g.total, 3.5);
  EXPECT_DOUBLE_EQ(back.d_x_loss, 0.125);
  EXPECT_DOUBLE_EQ(back.grad_norm_d_y, 2.0);
  EXPECT_DOUBLE_EQ(back.seconds, 0.75);

  TempDir dir;
  {
    std::ofstream out(dir.str("no_header.jsonl"));
    out << metric_record_to_json(r).dump() << "\n";
  }
  EXPECT_THROW(read_metric_log(dir.str("no_header.jsonl")), FormatError);
  {
    std::ofstream out(dir.str("bad_type.jsonl"));
    out << R"({"type":"header","format":"ecgan-metrics"})" << "\n";
    out << R"({"type":"mystery"})" << "\n";
  }
  EXPECT_THROW(read_metric_log(dir.str("bad_type.jsonl")), FormatError);
  EXPECT_THROW(read_metric_log(dir.str("missing.jsonl")), FormatError);
}

}  // namespace
}  // namespace ecgan
