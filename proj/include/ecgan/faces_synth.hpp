#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ecgan/expression.hpp"
#include "ecgan/landmarks.hpp"
#include "ecgan/png_io.hpp"
#include "ecgan/rng.hpp"
#include "ecgan/tensor.hpp"

// Procedural face renderer. Faces are elliptical sprites over a cluttered
// background: per-identity skin tone, proportions, and placement; per-class
// mouth and brow geometry chosen to be far apart so a small classifier can
// separate the classes after minutes, not days, of training. Every sample
// carries analytic landmarks and the exact foreground mask (the filled face
// ellipse). Pixels are quantized to the 8-bit grid during rendering, so saved
// images reload bit-identically.

namespace ecgan {

struct IdentitySpec {
  int id = 0;
  std::array<double, 3> skin_tone{};  // rgb in [0,1]
  double axis_a = 0.0, axis_b = 0.0;  // ellipse semi-axes, px
  double eye_spacing = 0.0;           // distance between eye centers, px
  std::uint64_t background_seed = 0;
  double jitter_dx = 0.0, jitter_dy = 0.0;  // face center offset from image center
};

inline IdentitySpec make_identity(std::uint64_t dataset_seed, int identity_id,
                                  int height, int width) {
  Rng rng(mix_seed(dataset_seed, 0x1D000000ULL + static_cast<std::uint64_t>(identity_id)));
  IdentitySpec s;
  s.id = identity_id;
  s.axis_a = width * rng.uniform(0.26, 0.34);
  s.axis_b = height * rng.uniform(0.30, 0.36);
  s.jitter_dx = width * rng.uniform(-0.02, 0.02);
  s.jitter_dy = height * rng.uniform(-0.02, 0.02);
  s.eye_spacing = 2.0 * s.axis_a * rng.uniform(0.42, 0.52);
  const double r = rng.uniform(0.55, 0.95);
  const double g = r * rng.uniform(0.72, 0.88);
  const double b = g * rng.uniform(0.65, 0.85);
  s.skin_tone = {r, g, b};
  s.background_seed = rng.next_u64();
  return s;
}

// ---------------------------------------------------------------------------
// Expression geometry
// ---------------------------------------------------------------------------

struct ExpressionRecipe {
  double mouth_curve = 0.0;  // -1 frown .. +1 smile
  double mouth_open = 0.0;   // 0 closed .. 1 wide open
  double mouth_round = 0.0;  // 0 wide slit .. 1 circular (open mouths)
  double brow_angle = 0.0;   // + raises the inner brow ends, - lowers them
  double brow_raise = 0.0;   // vertical brow shift, + up
};

inline ExpressionRecipe expression_recipe(const std::string& name) {
  if (name == "neutral") return {};
  if (name == "happy") return {1.0, 0.0, 0.0, 0.1, 0.2};
  if (name == "anger" || name == "angry") return {-1.0, 0.55, 0.15, -0.6, -0.15};
  if (name == "surprise" || name == "surprised") return {0.0, 1.0, 1.0, 0.0, 0.6};
  if (name == "sad") return {-0.9, 0.0, 0.0, 0.5, 0.1};
  if (name == "fear") return {0.0, 0.7, 0.6, 0.3, 0.5};
  if (name == "disgust") return {-0.5, 0.25, 0.0, -0.3, -0.05};
  throw std::invalid_argument(
      "unknown expression '" + name +
      "' (known: neutral, happy, anger, surprise, sad, fear, disgust)");
}

struct Sample {
  Tensor image;  // {3, H, W} in [-1, 1], on the 8-bit grid
  ExpressionLabel label;
  std::optional<Tensor> mask;  // {H, W} binary; absent for external data
  Landmarks landmarks;
  int identity_id = 0;
};

inline bool operator==(const Point2& a, const Point2& b) {
  return a.row == b.row && a.col == b.col;
}
inline bool operator==(const Landmarks& a, const Landmarks& b) {
  return a.points == b.points;
}
inline bool operator==(const Sample& a, const Sample& b) {
  return a.image == b.image && a.label == b.label && a.mask == b.mask &&
         a.landmarks == b.landmarks && a.identity_id == b.identity_id;
}

// Outline landmarks trace a contour slightly inside the skin ellipse, placed
// so the standard mask recipe (convex hull + dilation radius 3 at 64x64)
// reconstructs the true face ellipse closely.
constexpr double kOutlineInset = 2.0;

namespace detail {

struct FaceFrame {
  double cr, cc;  // face center
  double a, b;    // semi-axes
  int h, w;
};

inline bool inside_ellipse(const FaceFrame& f, double r, double c) {
  const double dr = (r - f.cr) / f.b;
  const double dc = (c - f.cc) / f.a;
  return dr * dr + dc * dc <= 1.0;
}

inline void put(ByteImage& img, std::size_t r, std::size_t c, double red,
                double green, double blue) {
  const std::size_t h = img.dim(1), w = img.dim(2);
  auto q = [](double v) {
    double x = std::lround(v * 255.0);
    if (x < 0.0) x = 0.0;
    if (x > 255.0) x = 255.0;
    return static_cast<std::uint8_t>(x);
  };
  img[(0 * h + r) * w + c] = q(red);
  img[(1 * h + r) * w + c] = q(green);
  img[(2 * h + r) * w + c] = q(blue);
}

}  // namespace detail

inline Sample render_face(const IdentitySpec& identity, const ExpressionLabel& label,
                          int height, int width) {
  if (height < 32 || width < 32)
    throw std::invalid_argument("render_face: size below 32x32");
  const ExpressionRecipe rec = expression_recipe(label.name);

  detail::FaceFrame f;
  f.h = height;
  f.w = width;
  f.cr = height / 2.0 + identity.jitter_dy;
  f.cc = width / 2.0 + identity.jitter_dx;
  f.a = identity.axis_a;
  f.b = identity.axis_b;
  if (f.cr - f.b < 2.0 || f.cr + f.b > height - 3.0 || f.cc - f.a < 2.0 ||
      f.cc + f.a > width - 3.0)
    throw std::invalid_argument("render_face: face ellipse does not fit with margin");

  ByteImage canvas({3, static_cast<std::size_t>(height), static_cast<std::size_t>(width)});

  // Background clutter depends only on background_seed, never on the
  // expression, so renders of one identity are bit-identical outside the mask.
  {
    Rng bg(identity.background_seed);
    std::array<double, 3> base{bg.uniform(0.08, 0.22), bg.uniform(0.08, 0.22),
                               bg.uniform(0.08, 0.25)};
    std::vector<std::array<double, 7>> rects(12);
    for (auto& rc : rects)
      rc = {bg.uniform(0, height), bg.uniform(0, width),
            bg.uniform(height * 0.08, height * 0.35),
            bg.uniform(width * 0.08, width * 0.35),
            bg.uniform(0.10, 0.50), bg.uniform(0.10, 0.50), bg.uniform(0.10, 0.50)};
    for (int r = 0; r < height; ++r)
      for (int c = 0; c < width; ++c) {
        std::array<double, 3> col = base;
        for (const auto& rc : rects)
          if (r >= rc[0] && r < rc[0] + rc[2] && c >= rc[1] && c < rc[1] + rc[3])
            col = {rc[4], rc[5], rc[6]};
        const double noise = bg.uniform(-0.04, 0.04);
        detail::put(canvas, r, c, col[0] + noise, col[1] + noise, col[2] + noise);
      }
  }

  Tensor mask({static_cast<std::size_t>(height), static_cast<std::size_t>(width)});

  // Feature geometry, all in pixels.
  const double eye_row = f.cr - 0.22 * f.b;
  const double eye_dc = identity.eye_spacing / 2.0;
  const double ea = 0.16 * f.a, eb = 0.10 * f.b;   // sclera semi-axes
  const double pupil = 0.45 * ea;
  const double brow_half = 0.22 * f.a;
  const double brow_row0 = eye_row - 0.18 * f.b - rec.brow_raise * 0.08 * f.b;
  const double brow_th = std::max(1.2, 0.035 * height);
  const double mouth_row = f.cr + 0.42 * f.b;
  const double mouth_w = 0.42 * f.a * (1.0 - 0.35 * rec.mouth_round);
  const double mouth_amp = 0.22 * f.b;
  const double mouth_th = std::max(1.2, 0.045 * height);
  const double open_h = rec.mouth_open * (0.16 + 0.14 * rec.mouth_round) * f.b;
  const bool open_mouth = rec.mouth_open >= 0.05;
  const bool draw_stroke = !open_mouth || std::abs(rec.mouth_curve) >= 0.05;

  auto mouth_center_row = [&](double c) {
    const double t = (c - f.cc) / mouth_w;
    return mouth_row + rec.mouth_curve * mouth_amp * (0.5 - t * t);
  };

  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) {
      if (!detail::inside_ellipse(f, r, c)) continue;
      mask.at(r, c) = 1.0;
      const double dr = (r - f.cr) / f.b, dc = (c - f.cc) / f.a;
      const double rho = dr * dr + dc * dc;
      std::array<double, 3> col = {identity.skin_tone[0] * (1.0 - 0.18 * rho),
                                   identity.skin_tone[1] * (1.0 - 0.18 * rho),
                                   identity.skin_tone[2] * (1.0 - 0.18 * rho)};

      for (double s : {-1.0, 1.0}) {
        const double ec = f.cc + s * eye_dc;
        const double er = (r - eye_row) / eb, ecn = (c - ec) / ea;
        if (er * er + ecn * ecn <= 1.0) {
          col = {0.93, 0.93, 0.90};
          const double pr = r - eye_row, pc = c - ec;
          if (pr * pr + pc * pc <= pupil * pupil) col = {0.08, 0.06, 0.06};
        }
        // Brow: thick segment from inner to outer end, tilted by the recipe.
        const double t = s * (c - ec) / brow_half;  // -1 inner .. +1 outer
        if (t >= -1.0 && t <= 1.0) {
          const double brow_r = brow_row0 - rec.brow_angle * 0.5 * brow_half * (-t);
          if (std::abs(r - brow_r) <= brow_th) col = {0.12, 0.08, 0.06};
        }
      }

      if (open_mouth) {
        const double mr = (r - mouth_row) / open_h, mc = (c - f.cc) / mouth_w;
        if (mr * mr + mc * mc <= 1.0) col = {0.18, 0.05, 0.05};
      }
      if (draw_stroke && std::abs(c - f.cc) <= mouth_w) {
        if (std::abs(r - mouth_center_row(c)) <= mouth_th) col = {0.45, 0.12, 0.12};
      }

      detail::put(canvas, r, c, col[0], col[1], col[2]);
    }

  // Landmarks: 8 outline, then per eye {outer corner, inner corner, brow
  // inner, brow outer}, then mouth {left corner, right corner, top, bottom}.
  Landmarks lm;
  lm.points.resize(kLandmarkCount);
  for (int k = 0; k < 8; ++k) {
    const double th = k * (M_PI / 4.0);
    lm.points[k] = {f.cr - (f.b - kOutlineInset) * std::cos(th),
                    f.cc + (f.a - kOutlineInset) * std::sin(th)};
  }
  int idx = 8;
  for (double s : {-1.0, 1.0}) {
    const double ec = f.cc + s * eye_dc;
    lm.points[idx++] = {eye_row, ec - ea};
    lm.points[idx++] = {eye_row, ec + ea};
    const double inner_c = ec - s * brow_half, outer_c = ec + s * brow_half;
    lm.points[idx++] = {brow_row0 - rec.brow_angle * 0.5 * brow_half, inner_c};
    lm.points[idx++] = {brow_row0 + rec.brow_angle * 0.5 * brow_half, outer_c};
  }
  const double corner_row = mouth_row + rec.mouth_curve * mouth_amp * -0.5;
  lm.points[idx++] = {corner_row, f.cc - mouth_w};
  lm.points[idx++] = {corner_row, f.cc + mouth_w};
  const double mid_row = open_mouth ? mouth_row : mouth_center_row(f.cc);
  const double half_h = open_mouth ? open_h : mouth_th;
  lm.points[idx++] = {mid_row - half_h, f.cc};
  lm.points[idx++] = {mid_row + half_h, f.cc};

  Sample out;
  out.image = bytes_to_image(canvas);
  out.label = label;
  out.mask = std::move(mask);
  out.landmarks = std::move(lm);
  out.identity_id = identity.id;
  return out;
}

}  // namespace ecgan
