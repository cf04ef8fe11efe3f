#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <vector>

#include "ecgan/png_io.hpp"

// Chart rendering for the run artifacts: multi-series line charts for the
// metric curves and a labeled scatter for the embedding projection. Pure
// functions of their inputs, so rendered bytes are reproducible.

namespace ecgan {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
};

// Categorical palette, one slot per series or class.
inline const std::array<Rgb, 8>& chart_palette() {
  static const std::array<Rgb, 8> p = {{{31, 119, 180},
                                        {255, 127, 14},
                                        {44, 160, 44},
                                        {214, 39, 40},
                                        {148, 103, 189},
                                        {140, 86, 75},
                                        {227, 119, 194},
                                        {127, 127, 127}}};
  return p;
}

namespace detail {

// 5x7 glyphs, one byte per row, low five bits, bit 4 leftmost. Uppercase
// falls back to lowercase; anything unknown renders as a hollow box.
struct Glyph {
  char ch;
  std::uint8_t rows[7];
};

inline const Glyph* find_glyph(char c) {
  static const Glyph table[] = {
      {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
      {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
      {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
      {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
      {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
      {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
      {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
      {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
      {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
      {'a', {0x00, 0x00, 0x0E, 0x01, 0x0F, 0x11, 0x0F}},
      {'b', {0x10, 0x10, 0x1E, 0x11, 0x11, 0x11, 0x1E}},
      {'c', {0x00, 0x00, 0x0E, 0x10, 0x10, 0x11, 0x0E}},
      {'d', {0x01, 0x01, 0x0F, 0x11, 0x11, 0x11, 0x0F}},
      {'e', {0x00, 0x00, 0x0E, 0x11, 0x1F, 0x10, 0x0E}},
      {'f', {0x06, 0x09, 0x08, 0x1C, 0x08, 0x08, 0x08}},
      {'g', {0x00, 0x0F, 0x11, 0x11, 0x0F, 0x01, 0x0E}},
      {'h', {0x10, 0x10, 0x1E, 0x11, 0x11, 0x11, 0x11}},
      {'i', {0x04, 0x00, 0x0C, 0x04, 0x04, 0x04, 0x0E}},
      {'j', {0x02, 0x00, 0x06, 0x02, 0x02, 0x12, 0x0C}},
      {'k', {0x10, 0x10, 0x12, 0x14, 0x18, 0x14, 0x12}},
      {'l', {0x0C, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'m', {0x00, 0x00, 0x1A, 0x15, 0x15, 0x15, 0x15}},
      {'n', {0x00, 0x00, 0x1E, 0x11, 0x11, 0x11, 0x11}},
      {'o', {0x00, 0x00, 0x0E, 0x11, 0x11, 0x11, 0x0E}},
      {'p', {0x00, 0x00, 0x1E, 0x11, 0x1E, 0x10, 0x10}},
      {'q', {0x00, 0x00, 0x0F, 0x11, 0x0F, 0x01, 0x01}},
      {'r', {0x00, 0x00, 0x16, 0x19, 0x10, 0x10, 0x10}},
      {'s', {0x00, 0x00, 0x0F, 0x10, 0x0E, 0x01, 0x1E}},
      {'t', {0x08, 0x08, 0x1C, 0x08, 0x08, 0x09, 0x06}},
      {'u', {0x00, 0x00, 0x11, 0x11, 0x11, 0x13, 0x0D}},
      {'v', {0x00, 0x00, 0x11, 0x11, 0x11, 0x0A, 0x04}},
      {'w', {0x00, 0x00, 0x11, 0x15, 0x15, 0x15, 0x0A}},
      {'x', {0x00, 0x00, 0x11, 0x0A, 0x04, 0x0A, 0x11}},
      {'y', {0x00, 0x00, 0x11, 0x11, 0x0F, 0x01, 0x0E}},
      {'z', {0x00, 0x00, 0x1F, 0x02, 0x04, 0x08, 0x1F}},
      {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
      {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
      {',', {0x00, 0x00, 0x00, 0x00, 0x00, 0x04, 0x08}},
      {':', {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00}},
      {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
      {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F}},
      {'/', {0x00, 0x01, 0x02, 0x04, 0x08, 0x10, 0x00}},
      {'%', {0x19, 0x1A, 0x02, 0x04, 0x08, 0x0B, 0x13}},
      {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
      {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
      {'+', {0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00}},
      {'=', {0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00}},
  };
  if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  for (const Glyph& g : table)
    if (g.ch == c) return &g;
  return nullptr;
}

}  // namespace detail

class Canvas {
 public:
  Canvas(std::size_t width, std::size_t height, Rgb background = {255, 255, 255})
      : img_({3, height, width}) {
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x) set(x, y, background);
  }

  std::size_t width() const { return img_.dim(2); }
  std::size_t height() const { return img_.dim(1); }

  void set(std::size_t x, std::size_t y, Rgb c) {
    if (x >= width() || y >= height()) return;
    img_.at(std::size_t{0}, y, x) = c.r;
    img_.at(std::size_t{1}, y, x) = c.g;
    img_.at(std::size_t{2}, y, x) = c.b;
  }

  Rgb get(std::size_t x, std::size_t y) const {
    return {img_.at(std::size_t{0}, y, x), img_.at(std::size_t{1}, y, x),
            img_.at(std::size_t{2}, y, x)};
  }

  void line(long x0, long y0, long x1, long y1, Rgb c) {
    const long dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const long sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    long err = dx + dy;
    for (;;) {
      if (x0 >= 0 && y0 >= 0)
        set(static_cast<std::size_t>(x0), static_cast<std::size_t>(y0), c);
      if (x0 == x1 && y0 == y1) break;
      const long e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }

  void marker(long x, long y, Rgb c) {
    for (long dy = -1; dy <= 1; ++dy)
      for (long dx = -1; dx <= 1; ++dx)
        if (x + dx >= 0 && y + dy >= 0)
          set(static_cast<std::size_t>(x + dx), static_cast<std::size_t>(y + dy), c);
  }

  // 5x7 font with one column of spacing; returns the x just past the text.
  long text(long x, long y, const std::string& s, Rgb c) {
    for (const char ch : s) {
      const detail::Glyph* g = detail::find_glyph(ch);
      for (int row = 0; row < 7; ++row) {
        const std::uint8_t bits =
            g ? g->rows[row]
              : (row == 0 || row == 6 ? 0x1F : 0x11);  // hollow box
        for (int col = 0; col < 5; ++col)
          if (bits & (1u << (4 - col)))
            if (x + col >= 0 && y + row >= 0)
              set(static_cast<std::size_t>(x + col),
                  static_cast<std::size_t>(y + row), c);
      }
      x += 6;
    }
    return x;
  }

  const ByteImage& image() const { return img_; }

 private:
  ByteImage img_;
};

inline long text_width(const std::string& s) {
  return static_cast<long>(s.size()) * 6;
}

struct Series {
  std::string name;
  std::vector<double> xs, ys;
};

namespace detail {

struct Range {
  double lo = 0.0, hi = 1.0;
  double span() const { return hi - lo; }
};

inline Range pad_range(double lo, double hi) {
  if (lo > hi) std::swap(lo, hi);
  if (lo == hi) {
    const double bump = lo == 0.0 ? 1.0 : std::abs(lo) * 0.1;
    return {lo - bump, hi + bump};
  }
  const double pad = (hi - lo) * 0.05;
  return {lo - pad, hi + pad};
}

inline std::string format_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

}  // namespace detail

// Multi-series line chart with axes, ticks, grid, and a legend. Throws if no
// series carries a point or any coordinate is non-finite.
inline ByteImage render_line_chart(const std::string& title,
                                   const std::vector<Series>& series,
                                   std::size_t width = 640,
                                   std::size_t height = 400) {
  double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
  bool any = false;
  for (const Series& s : series) {
    if (s.xs.size() != s.ys.size())
      throw std::invalid_argument("render_line_chart: series '" + s.name +
                                  "' has mismatched x/y lengths");
    for (std::size_t i = 0; i < s.xs.size(); ++i) {
      if (!std::isfinite(s.xs[i]) || !std::isfinite(s.ys[i]))
        throw std::invalid_argument("render_line_chart: non-finite point in '" +
                                    s.name + "'");
      if (!any) {
        xmin = xmax = s.xs[i];
        ymin = ymax = s.ys[i];
        any = true;
      } else {
        xmin = std::min(xmin, s.xs[i]);
        xmax = std::max(xmax, s.xs[i]);
        ymin = std::min(ymin, s.ys[i]);
        ymax = std::max(ymax, s.ys[i]);
      }
    }
  }
  if (!any)
    throw std::invalid_argument("render_line_chart: no points to draw");

  const detail::Range xr = detail::pad_range(xmin, xmax);
  const detail::Range yr = detail::pad_range(ymin, ymax);

  const long left = 56, right = 12, top = 24, bottom = 32;
  const long pw = static_cast<long>(width) - left - right;
  const long ph = static_cast<long>(height) - top - bottom;
  if (pw < 16 || ph < 16)
    throw std::invalid_argument("render_line_chart: canvas too small");

  Canvas cv(width, height);
  const Rgb black{0, 0, 0}, grid{225, 225, 225}, axis{80, 80, 80};

  auto px = [&](double x) {
    return left + static_cast<long>(std::lround((x - xr.lo) / xr.span() *
                                                static_cast<double>(pw)));
  };
  auto py = [&](double y) {
    return top + ph - static_cast<long>(std::lround((y - yr.lo) / yr.span() *
                                                    static_cast<double>(ph)));
  };

  cv.text(left, 8, title, black);

  const int ticks = 5;
  for (int t = 0; t < ticks; ++t) {
    const double fy = yr.lo + yr.span() * t / (ticks - 1);
    const long y = py(fy);
    cv.line(left, y, left + pw, y, grid);
    const std::string lab = detail::format_tick(fy);
    cv.text(left - 4 - text_width(lab), y - 3, lab, axis);
    const double fx = xr.lo + xr.span() * t / (ticks - 1);
    const long x = px(fx);
    cv.line(x, top, x, top + ph, grid);
    const std::string labx = detail::format_tick(fx);
    cv.text(x - text_width(labx) / 2, top + ph + 6, labx, axis);
  }
  cv.line(left, top, left, top + ph, axis);
  cv.line(left, top + ph, left + pw, top + ph, axis);

  long legend_y = top + 4;
  for (std::size_t si = 0; si < series.size(); ++si) {
    const Series& s = series[si];
    const Rgb c = chart_palette()[si % chart_palette().size()];
    for (std::size_t i = 1; i < s.xs.size(); ++i)
      cv.line(px(s.xs[i - 1]), py(s.ys[i - 1]), px(s.xs[i]), py(s.ys[i]), c);
    if (s.xs.size() == 1) cv.marker(px(s.xs[0]), py(s.ys[0]), c);
    if (!s.name.empty()) {
      const long lx = left + pw - text_width(s.name) - 18;
      cv.line(lx, legend_y + 3, lx + 12, legend_y + 3, c);
      cv.text(lx + 16, legend_y, s.name, black);
      legend_y += 10;
    }
  }
  return cv.image();
}

// Scatter of 2-D points colored by class label, with a legend naming each
// class. label_names[i] names class i; labels outside the list still draw.
inline ByteImage render_scatter(const std::string& title,
                                const std::vector<std::array<double, 2>>& points,
                                const std::vector<int>& labels,
                                const std::vector<std::string>& label_names,
                                std::size_t width = 520,
                                std::size_t height = 480) {
  if (points.empty())
    throw std::invalid_argument("render_scatter: no points to draw");
  if (points.size() != labels.size())
    throw std::invalid_argument("render_scatter: points/labels size mismatch");
  for (const auto& p : points)
    if (!std::isfinite(p[0]) || !std::isfinite(p[1]))
      throw std::invalid_argument("render_scatter: non-finite point");

  double xmin = points[0][0], xmax = xmin, ymin = points[0][1], ymax = ymin;
  for (const auto& p : points) {
    xmin = std::min(xmin, p[0]);
    xmax = std::max(xmax, p[0]);
    ymin = std::min(ymin, p[1]);
    ymax = std::max(ymax, p[1]);
  }
  const detail::Range xr = detail::pad_range(xmin, xmax);
  const detail::Range yr = detail::pad_range(ymin, ymax);

  const long left = 48, right = 12, top = 24, bottom = 28;
  const long pw = static_cast<long>(width) - left - right;
  const long ph = static_cast<long>(height) - top - bottom;
  if (pw < 16 || ph < 16)
    throw std::invalid_argument("render_scatter: canvas too small");

  Canvas cv(width, height);
  const Rgb black{0, 0, 0}, axis{80, 80, 80};
  cv.text(left, 8, title, black);
  cv.line(left, top, left, top + ph, axis);
  cv.line(left, top + ph, left + pw, top + ph, axis);

  auto px = [&](double x) {
    return left + static_cast<long>(std::lround((x - xr.lo) / xr.span() *
                                                static_cast<double>(pw)));
  };
  auto py = [&](double y) {
    return top + ph - static_cast<long>(std::lround((y - yr.lo) / yr.span() *
                                                    static_cast<double>(ph)));
  };

  for (std::size_t i = 0; i < points.size(); ++i) {
    const int l = labels[i];
    const Rgb c = chart_palette()[static_cast<std::size_t>(l < 0 ? 0 : l) %
                                  chart_palette().size()];
    cv.marker(px(points[i][0]), py(points[i][1]), c);
  }

  long legend_y = top + 4;
  for (std::size_t i = 0; i < label_names.size(); ++i) {
    const Rgb c = chart_palette()[i % chart_palette().size()];
    const long lx = left + pw - text_width(label_names[i]) - 18;
    cv.marker(lx + 6, legend_y + 3, c);
    cv.text(lx + 16, legend_y, label_names[i], black);
    legend_y += 10;
  }
  return cv.image();
}

}  // namespace ecgan
