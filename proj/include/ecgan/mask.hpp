#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "ecgan/errors.hpp"
#include "ecgan/landmarks.hpp"
#include "ecgan/tensor.hpp"

// Binary face masks from landmarks: convex hull fill plus dilation by a
// Euclidean disk. A pixel is the lattice point at its cell center; fill is
// boundary-inclusive (a center exactly on a hull edge counts as inside).

namespace ecgan {

// {H, W}, values strictly 0 or 1.
using FaceMask = Tensor;

inline void require_binary_mask(const FaceMask& m, const char* where) {
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i] != 0.0 && m[i] != 1.0)
      throw std::invalid_argument(std::string(where) + ": mask is not binary");
}

namespace detail {

inline double cross(const Point2& o, const Point2& a, const Point2& b) {
  return (a.col - o.col) * (b.row - o.row) - (a.row - o.row) * (b.col - o.col);
}

}  // namespace detail

// Monotone chain. Returns hull vertices in counter-clockwise order in (col,
// row) convention; throws DegenerateLandmarksError when the points span no
// area.
inline std::vector<Point2> convex_hull(std::vector<Point2> pts) {
  if (pts.size() < 3)
    throw DegenerateLandmarksError("convex_hull: need at least 3 points");
  std::sort(pts.begin(), pts.end(), [](const Point2& a, const Point2& b) {
    return a.col < b.col || (a.col == b.col && a.row < b.row);
  });
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](const Point2& a, const Point2& b) {
                          return a.col == b.col && a.row == b.row;
                        }),
            pts.end());
  const std::size_t n = pts.size();
  if (n < 3) throw DegenerateLandmarksError("convex_hull: fewer than 3 distinct points");

  std::vector<Point2> hull(2 * n);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    while (k >= 2 && detail::cross(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
    hull[k++] = pts[i];
  }
  const std::size_t lower = k + 1;
  for (std::size_t i = n - 1; i-- > 0;) {
    while (k >= lower && detail::cross(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  if (hull.size() < 3)
    throw DegenerateLandmarksError("convex_hull: all points collinear");
  return hull;
}

// Closed-hull membership: p satisfies every edge half-plane with a small
// inclusive tolerance.
inline bool point_in_hull(const std::vector<Point2>& hull, const Point2& p) {
  constexpr double eps = 1e-9;
  const std::size_t n = hull.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (detail::cross(hull[i], hull[(i + 1) % n], p) < -eps) return false;
  }
  return true;
}

// Pixel is 1 iff an input 1-pixel lies within Euclidean distance <= radius.
inline FaceMask dilate(const FaceMask& mask, int radius) {
  if (radius < 0) throw std::invalid_argument("dilate: negative radius");
  if (radius == 0) return mask;
  const int h = static_cast<int>(mask.dim(0));
  const int w = static_cast<int>(mask.dim(1));
  std::vector<std::pair<int, int>> disk;
  for (int dr = -radius; dr <= radius; ++dr)
    for (int dc = -radius; dc <= radius; ++dc)
      if (dr * dr + dc * dc <= radius * radius) disk.emplace_back(dr, dc);

  FaceMask out({static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      if (mask.at(r, c) != 1.0) continue;
      for (auto [dr, dc] : disk) {
        const int rr = r + dr, cc = c + dc;
        if (rr >= 0 && rr < h && cc >= 0 && cc < w) out.at(rr, cc) = 1.0;
      }
    }
  return out;
}

inline FaceMask landmarks_to_mask(const Landmarks& landmarks, std::size_t height,
                                  std::size_t width, int dilation_radius) {
  if (dilation_radius < 0)
    throw std::invalid_argument("landmarks_to_mask: negative dilation radius");
  auto hull = convex_hull(landmarks.points);
  FaceMask mask({height, width});
  for (std::size_t r = 0; r < height; ++r)
    for (std::size_t c = 0; c < width; ++c)
      if (point_in_hull(hull, {static_cast<double>(r), static_cast<double>(c)}))
        mask.at(r, c) = 1.0;
  return dilate(mask, dilation_radius);
}

// out = image * (mask + background_weight * (1 - mask)), mask broadcast
// across channels. background_weight 0 reproduces plain foreground masking.
inline Tensor apply_mask(const Tensor& image, const FaceMask& mask,
                         double background_weight = 0.0) {
  require_binary_mask(mask, "apply_mask");
  if (background_weight < 0.0 || background_weight >= 1.0)
    throw std::invalid_argument("apply_mask: background weight outside [0,1)");
  if (image.ndim() != 3 || mask.ndim() != 2 || image.dim(1) != mask.dim(0) ||
      image.dim(2) != mask.dim(1))
    throw std::invalid_argument("apply_mask: image " + shape_string(image) +
                                " does not match mask " + shape_string(mask));
  Tensor out(image.shape());
  const std::size_t plane = mask.size();
  for (std::size_t ch = 0; ch < image.dim(0); ++ch)
    for (std::size_t i = 0; i < plane; ++i) {
      const double m = mask[i] + background_weight * (1.0 - mask[i]);
      out[ch * plane + i] = image[ch * plane + i] * m;
    }
  return out;
}

// Default dilation radius used by the pipeline: 3 at height 64, scaled
// proportionally for other resolutions.
inline int default_dilation_radius(std::size_t height) {
  return std::max(1, static_cast<int>(std::lround(3.0 * static_cast<double>(height) / 64.0)));
}

}  // namespace ecgan
