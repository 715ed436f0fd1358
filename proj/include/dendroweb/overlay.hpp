#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <vector>

#include "dendroweb/raster.hpp"

namespace dendroweb {

using Rgb = std::array<std::uint8_t, 3>;

inline constexpr Rgb kRingBlue{0, 0, 255};

/// Bresenham line between rounded endpoints, clipped to the image.
inline void draw_line(Image& img, Point a, Point b, Rgb color) {
  int x0 = static_cast<int>(std::lround(a.x)), y0 = static_cast<int>(std::lround(a.y));
  const int x1 = static_cast<int>(std::lround(b.x)), y1 = static_cast<int>(std::lround(b.y));
  const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
  const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  for (;;) {
    if (img.contains(x0, y0)) {
      if (img.channels() == 3) {
        for (int c = 0; c < 3; ++c) img.at(x0, y0, c) = color[static_cast<std::size_t>(c)];
      } else {
        img.at(x0, y0) = color[2];
      }
    }
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
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

inline void draw_polyline(Image& img, const std::vector<Point>& pts, bool closed, Rgb color = kRingBlue) {
  if (pts.empty()) return;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) draw_line(img, pts[i], pts[i + 1], color);
  if (closed && pts.size() > 2) draw_line(img, pts.back(), pts.front(), color);
  if (pts.size() == 1) draw_line(img, pts[0], pts[0], color);
}

/// RGB copy of `base` with every ring drawn 1 px wide.
inline Image render_overlay(const Image& base, const std::vector<std::vector<Point>>& rings,
                            Rgb color = kRingBlue) {
  Image out(base.width(), base.height(), 3);
  for (int y = 0; y < base.height(); ++y) {
    for (int x = 0; x < base.width(); ++x) {
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = base.at(x, y, base.channels() == 3 ? c : 0);
    }
  }
  for (const auto& ring : rings) draw_polyline(out, ring, true, color);
  return out;
}

}  // namespace dendroweb
