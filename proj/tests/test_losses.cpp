#include <cmath>
#include <gtest/gtest.h>

#include "ecgan/losses.hpp"
#include "ecgan/rng.hpp"
#include "grad_check.hpp"

using namespace ecgan;
using ecgan::test::check_gradient;
using ecgan::test::random_tensor;

namespace {

Tensor scalar_map(double v) {
  Tensor t({1, 1});
  t[0] = v;
  return t;
}

Tensor vec(std::initializer_list<double> vals) {
  Tensor t({vals.size()});
  std::size_t i = 0;
  for (double v : vals) t[i++] = v;
  return t;
}

}  // namespace

// --------------------------------------------------------------------------
// Frozen arithmetic oracles: each expected value is recomputed in straight
// line arithmetic here, independent of the implementation.
// --------------------------------------------------------------------------

TEST(Losses, LsganDiscriminatorOracle) {
  // (0.8 - 1)^2 + 0.3^2
  const double expected = (0.8 - 1.0) * (0.8 - 1.0) + 0.3 * 0.3;
  EXPECT_NEAR(expected, 0.13, 1e-12);
  EXPECT_NEAR(lsgan_d_loss(scalar_map(0.8), scalar_map(0.3)), expected, 1e-6);

  // perfect discriminator
  EXPECT_DOUBLE_EQ(lsgan_d_loss(scalar_map(1.0), scalar_map(0.0)), 0.0);
  // maximally fooled
  EXPECT_DOUBLE_EQ(lsgan_d_loss(scalar_map(0.0), scalar_map(1.0)), 2.0);
}

TEST(Losses, LsganDiscriminatorPatchMean) {
  Tensor real({2, 2}, 0.8), fake({2, 2}, 0.3);
  EXPECT_NEAR(lsgan_d_loss(real, fake), 0.13, 1e-6);
  Tensor bad({3, 1});
  EXPECT_THROW(lsgan_d_loss(real, bad), std::invalid_argument);
}

TEST(Losses, LsganGeneratorOracle) {
  const double expected = (0.3 - 1.0) * (0.3 - 1.0);
  EXPECT_NEAR(expected, 0.49, 1e-12);
  EXPECT_NEAR(lsgan_g_loss(scalar_map(0.3)), expected, 1e-6);
  EXPECT_DOUBLE_EQ(lsgan_g_loss(scalar_map(1.0)), 0.0);
  EXPECT_DOUBLE_EQ(lsgan_g_loss(scalar_map(0.0)), 1.0);
}

TEST(Losses, CycleOracle) {
  const double expected = std::abs(0.5 - 0.2) + std::abs(0.1 - 0.1);
  EXPECT_NEAR(expected, 0.3, 1e-12);
  EXPECT_NEAR(cycle_loss(vec({0.2}), vec({0.5}), vec({0.1}), vec({0.1})), expected,
              1e-6);
  // perfect reconstruction
  Rng rng(2);
  Tensor x = random_tensor({3, 4, 4}, rng), y = random_tensor({3, 4, 4}, rng);
  EXPECT_DOUBLE_EQ(cycle_loss(x, x, y, y), 0.0);
  // symmetric under swapping the two pairs
  Tensor xr = random_tensor({3, 4, 4}, rng), yr = random_tensor({3, 4, 4}, rng);
  EXPECT_DOUBLE_EQ(cycle_loss(x, xr, y, yr), cycle_loss(y, yr, x, xr));
}

TEST(Losses, ContentOracle) {
  FeatureMap ref, gen;
  ref.grid = Tensor({1, 2, 1});
  ref.grid[0] = 1.0;
  ref.grid[1] = 3.0;
  gen.grid = Tensor({1, 2, 1});
  gen.grid[0] = 0.0;
  gen.grid[1] = 1.0;
  const double expected = ((1.0 - 0.0) * (1.0 - 0.0) + (3.0 - 1.0) * (3.0 - 1.0)) / 2.0;
  EXPECT_NEAR(expected, 2.5, 1e-12);
  EXPECT_NEAR(content_loss(ref, gen), expected, 1e-6);

  EXPECT_DOUBLE_EQ(content_loss(ref, ref), 0.0);

  // quadratic homogeneity
  FeatureMap ref2 = ref, gen2 = gen;
  for (auto& v : ref2.grid) v *= 3.0;
  for (auto& v : gen2.grid) v *= 3.0;
  EXPECT_NEAR(content_loss(ref2, gen2), 9.0 * content_loss(ref, gen), 1e-9);

  FeatureMap other = gen;
  other.layer_id = {2, 1};
  EXPECT_THROW(content_loss(ref, other), std::invalid_argument);
}

TEST(Losses, IdentityOracle) {
  const double expected = std::abs(0.4 - 0.1) + std::abs(0.2 - 0.2);
  EXPECT_NEAR(expected, 0.3, 1e-12);
  EXPECT_NEAR(identity_loss(vec({0.4}), vec({0.1}), vec({0.2}), vec({0.2})),
              expected, 1e-6);
  Rng rng(3);
  Tensor x = random_tensor({3, 4, 4}, rng), y = random_tensor({3, 4, 4}, rng);
  EXPECT_DOUBLE_EQ(identity_loss(x, x, y, y), 0.0);
  Tensor gx = random_tensor({3, 4, 4}, rng), gy = random_tensor({3, 4, 4}, rng);
  EXPECT_GE(identity_loss(gx, x, gy, y), 0.0);
}

TEST(Losses, MaskOracle) {
  Tensor x({1, 2, 2});
  x[0] = 1.0;
  x[1] = 2.0;
  x[2] = 3.0;
  x[3] = 4.0;
  FaceMask m({2, 2});
  m[0] = 1.0;
  m[1] = 0.0;
  m[2] = 0.0;
  m[3] = 1.0;
  Tensor rt_out({1, 2, 2});
  rt_out[0] = 0.5;
  rt_out[1] = 0.1;
  rt_out[2] = 0.2;
  rt_out[3] = 3.0;
  auto round_trip = [&](const Tensor&) { return rt_out; };
  // masked x = [[1,0],[0,4]]
  const double expected =
      (std::abs(0.5 - 1.0) + std::abs(0.1 - 0.0) + std::abs(0.2 - 0.0) +
       std::abs(3.0 - 4.0)) /
      4.0;
  EXPECT_NEAR(expected, 0.45, 1e-12);
  EXPECT_NEAR(mask_loss(x, m, round_trip), expected, 1e-6);
}

TEST(Losses, MaskTrivialCases) {
  Rng rng(5);
  Tensor x = random_tensor({3, 4, 4}, rng);
  FaceMask ones({4, 4}, 1.0);
  auto identity_fn = [](const Tensor& t) { return t; };
  EXPECT_DOUBLE_EQ(mask_loss(x, ones, identity_fn), 0.0);

  // all-zeros mask with a zero-output round trip
  FaceMask zeros({4, 4}, 0.0);
  auto zero_net = [](const Tensor& t) { return Tensor(t.shape()); };
  EXPECT_DOUBLE_EQ(mask_loss(x, zeros, zero_net), 0.0);

  FaceMask nonbinary({4, 4}, 0.5);
  EXPECT_THROW(mask_loss(x, nonbinary, identity_fn), std::invalid_argument);
}

// With an all-ones mask the mask term is exactly the one-directional cycle
// reconstruction L1 for the same round trip.
TEST(Losses, MaskEqualsCycleUnderFullMask) {
  Rng rng(7);
  Tensor x = random_tensor({3, 6, 6}, rng);
  Tensor rt_out = random_tensor({3, 6, 6}, rng);
  auto round_trip = [&](const Tensor&) { return rt_out; };
  FaceMask ones({6, 6}, 1.0);
  const double one_directional_cycle = mean_abs_diff(rt_out, x);
  EXPECT_DOUBLE_EQ(mask_loss(x, ones, round_trip), one_directional_cycle);
}

TEST(Losses, TotalOracle) {
  LossWeights w;
  w.lambda1 = 10.0;
  w.lambda2 = 1.0;
  w.lambda3 = 5.0;
  w.lambda4 = 10.0;
  const double expected = 1.0 + 10.0 * 2.0 + 1.0 * 3.0 + 5.0 * 4.0 + 10.0 * 5.0;
  EXPECT_NEAR(expected, 94.0, 1e-12);
  LossBreakdown b = total_loss(1.0, 0.7, 2.0, 3.0, 4.0, 5.0, w);
  EXPECT_NEAR(b.total, expected, 1e-6);
  EXPECT_DOUBLE_EQ(b.adversarial_g, 1.0);
  EXPECT_DOUBLE_EQ(b.adversarial_d, 0.7);
  EXPECT_DOUBLE_EQ(b.cycle, 2.0);
  EXPECT_DOUBLE_EQ(b.content, 3.0);
  EXPECT_DOUBLE_EQ(b.identity, 4.0);
  EXPECT_DOUBLE_EQ(b.mask, 5.0);
}

TEST(Losses, TotalReductions) {
  LossWeights zero{0.0, 0.0, 0.0, 0.0};
  LossBreakdown b = total_loss(0.37, 0.5, 2.0, 3.0, 4.0, 5.0, zero);
  EXPECT_DOUBLE_EQ(b.total, 0.37);

  LossWeights w;
  LossBreakdown all_zero = total_loss(0, 0, 0, 0, 0, 0, w);
  EXPECT_DOUBLE_EQ(all_zero.total, 0.0);

  EXPECT_THROW(total_loss(std::nan(""), 0, 0, 0, 0, 0, w), NumericalInstabilityError);
  try {
    total_loss(0, 0, 0, std::numeric_limits<double>::infinity(), 0, 0, w);
    FAIL() << "expected NumericalInstabilityError";
  } catch (const NumericalInstabilityError& e) {
    EXPECT_NE(std::string(e.what()).find("content"), std::string::npos);
  }
}

// With the content and mask terms disabled the assembled generator objective
// is the plain unpaired-translation objective, term for term.
TEST(Losses, PlainCycleGanReduction) {
  Rng rng(11);
  Tensor d_fake_y = random_tensor({1, 3, 3}, rng);
  Tensor d_fake_x = random_tensor({1, 3, 3}, rng);
  Tensor x = random_tensor({3, 4, 4}, rng), x_rec = random_tensor({3, 4, 4}, rng);
  Tensor y = random_tensor({3, 4, 4}, rng), y_rec = random_tensor({3, 4, 4}, rng);
  Tensor id_x = random_tensor({3, 4, 4}, rng), id_y = random_tensor({3, 4, 4}, rng);

  LossWeights w;
  w.lambda2 = 0.0;
  w.lambda4 = 0.0;

  const double adv_g = lsgan_g_loss(d_fake_y) + lsgan_g_loss(d_fake_x);
  const double cyc = cycle_loss(x, x_rec, y, y_rec);
  const double idl = identity_loss(id_x, x, id_y, y);
  LossBreakdown b = total_loss(adv_g, 0.0, cyc, /*content=*/123.0, idl,
                               /*mask=*/456.0, w);

  // straight-line CycleGAN objective on the same tensors
  double cyclegan = 0.0;
  cyclegan += mean_sq(d_fake_y, 1.0) + mean_sq(d_fake_x, 1.0);
  cyclegan += w.lambda1 * (mean_abs_diff(x_rec, x) + mean_abs_diff(y_rec, y));
  cyclegan += w.lambda3 * (mean_abs_diff(id_x, x) + mean_abs_diff(id_y, y));
  EXPECT_DOUBLE_EQ(b.total, cyclegan);
}

// --------------------------------------------------------------------------
// Analytic gradients vs central finite differences
// --------------------------------------------------------------------------

TEST(Losses, LsganGradients) {
  Rng rng(13);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor d_real = random_tensor({4, 4}, rng), d_fake = random_tensor({4, 4}, rng);
    auto [gr, gf] = lsgan_d_loss_grads(d_real, d_fake);
    auto f = [&]() { return lsgan_d_loss(d_real, d_fake); };
    check_gradient(f, d_real, gr, "lsgan_d/real");
    check_gradient(f, d_fake, gf, "lsgan_d/fake");

    Tensor gg = lsgan_g_loss_grad(d_fake);
    auto fg = [&]() { return lsgan_g_loss(d_fake); };
    check_gradient(fg, d_fake, gg, "lsgan_g");
  }
}

TEST(Losses, L1AndContentGradients) {
  Rng rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor a = random_tensor({3, 4, 4}, rng), b = random_tensor({3, 4, 4}, rng);
    Tensor ga = l1_mean_grad(a, b);
    auto f = [&]() { return mean_abs_diff(a, b); };
    check_gradient(f, a, ga, "l1_mean");

    FeatureMap ref, gen;
    ref.grid = random_tensor({2, 5, 5}, rng);
    gen.grid = random_tensor({2, 5, 5}, rng);
    Tensor gc = content_loss_grad_gen(ref, gen);
    auto fc = [&]() { return content_loss(ref, gen); };
    check_gradient(fc, gen.grid, gc, "content_loss");
  }
}
