#pragma once

#include <cstddef>
#include <vector>

namespace ecgan {

struct Point2 {
  double row = 0.0;
  double col = 0.0;
};

// Ordered landmark schema, 20 points:
//   [0..7]   face outline, clockwise from the top
//   [8..11]  left eye region (two eye corners, brow inner, brow outer)
//   [12..15] right eye region (same order)
//   [16..19] mouth (left corner, right corner, top center, bottom center)
struct Landmarks {
  std::vector<Point2> points;

  std::size_t count() const { return points.size(); }
};

constexpr std::size_t kLandmarkCount = 20;
constexpr std::size_t kOutlineBegin = 0, kOutlineEnd = 8;
constexpr std::size_t kLeftEyeBegin = 8, kRightEyeBegin = 12;
constexpr std::size_t kMouthBegin = 16;

}  // namespace ecgan
