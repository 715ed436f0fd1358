#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "dendroweb/contour.hpp"
#include "dendroweb/raster.hpp"

namespace dendroweb {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

/// Unit normal per curve pixel, N = (-T.y, T.x) with T the difference of the
/// neighbours along the curve (one-sided at the ends). Pixels whose tangent
/// vanishes get no normal.
inline std::vector<std::optional<Vec2>> curve_normals(const std::vector<Pixel>& curve) {
  if (curve.size() < 3) throw std::invalid_argument("curve_normals: curve needs at least 3 pixels");
  const std::size_t n = curve.size();
  std::vector<std::optional<Vec2>> normals(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Pixel& before = curve[i == 0 ? 0 : i - 1];
    const Pixel& after = curve[i + 1 == n ? n - 1 : i + 1];
    const double tx = after.x - before.x;
    const double ty = after.y - before.y;
    const double len = std::hypot(tx, ty);
    if (len == 0.0) continue;
    normals[i] = Vec2{-ty / len, tx / len};
  }
  return normals;
}

/// Angle in degrees, within [0,180], between the ray pith->p0 and normal n.
inline double angle_delta(const Pith& pith, Point p0, Vec2 n) {
  const double rx = p0.x - pith.cx;
  const double ry = p0.y - pith.cy;
  const double rlen = std::hypot(rx, ry);
  const double nlen = std::hypot(n.x, n.y);
  if (rlen == 0.0) throw std::invalid_argument("angle_delta: point coincides with the pith");
  if (nlen == 0.0) throw std::invalid_argument("angle_delta: zero normal");
  const double c = std::clamp((rx * n.x + ry * n.y) / (rlen * nlen), -1.0, 1.0);
  return rad_to_deg(std::acos(c));
}

namespace detail {

inline CurveSet filter_once(const CurveSet& curves, const Pith& pith, double alpha, bool& removed_any) {
  std::vector<Pixel> coords;
  for (const auto& curve : curves.curves()) {
    if (curve.size() < 3) {
      removed_any = true;
      continue;
    }
    if (!coords.empty()) coords.push_back(kCurveSeparator);
    const auto normals = curve_normals(curve);
    for (std::size_t i = 0; i < curve.size(); ++i) {
      const Point p{static_cast<double>(curve[i].x), static_cast<double>(curve[i].y)};
      bool keep = false;
      if (normals[i] && (p.x != pith.cx || p.y != pith.cy)) {
        const double delta = angle_delta(pith, p, *normals[i]);
        keep = delta < alpha || delta > 180.0 - alpha;
      }
      if (keep) {
        coords.push_back(curve[i]);
      } else {
        coords.push_back(kCurveSeparator);
        removed_any = true;
      }
    }
  }
  CurveSet out{std::move(coords)};
  out.normalize(3);
  return out;
}

}  // namespace detail

/// Removes every pixel whose normal makes an angle within [alpha, 180-alpha]
/// with the pith ray, splitting its curve there, and drops fragments shorter
/// than three pixels. Fragment ends get new one-sided normals, so the pass is
/// repeated until nothing changes; the result is a fixed point.
inline CurveSet filter_by_normal(const CurveSet& curves, const Pith& pith, double alpha = 45.0) {
  if (!(alpha > 0.0 && alpha < 90.0)) throw std::invalid_argument("filter_by_normal: alpha must lie in (0,90)");
  CurveSet current = curves;
  current.normalize();
  for (;;) {
    bool removed = false;
    CurveSet next = detail::filter_once(current, pith, alpha, removed);
    if (!removed) return next;
    current = std::move(next);
  }
}

/// Intersection of a curve with ray `ray_index`.
struct Node {
  int ray_index = 0;
  double radius = 0.0;
  double x = 0.0;
  double y = 0.0;
  int chain_id = 0;
};

/// A curve fragment resampled at its ray crossings, at most one node per ray.
struct Chain {
  int id = 0;
  std::vector<Node> nodes;
  int source_curve = 0;
};

/// Direction of ray k out of n: angle 360*k/n measured from +x toward +y in
/// image coordinates.
inline Vec2 ray_direction(int k, int num_rays) {
  const double a = deg_to_rad(360.0 * k / num_rays);
  return {std::cos(a), std::sin(a)};
}

/// Resamples each curve at its crossings with num_rays rays from the pith.
/// A node sits where the pixel segment straddling the ray meets it. When a
/// curve crosses a ray already present in its current chain, a new chain
/// starts. Curves whose ends are 8-neighbours are treated as closed.
inline std::vector<Chain> sample_chains(const CurveSet& curves, const Pith& pith, int num_rays = 360) {
  if (num_rays < 4) throw std::invalid_argument("sample_chains: num_rays must be >= 4");
  const double step = 360.0 / num_rays;
  std::vector<Chain> chains;
  int curve_index = -1;
  for (const auto& curve : curves.curves()) {
    ++curve_index;
    if (curve.size() < 2) continue;
    std::vector<Point> pts;
    for (const Pixel& p : curve) pts.push_back({static_cast<double>(p.x), static_cast<double>(p.y)});
    const Pixel& first = curve.front();
    const Pixel& last = curve.back();
    if (curve.size() >= 4 && eight_adjacent(first, last)) pts.push_back(pts.front());

    std::vector<Node> current;
    std::vector<char> seen(static_cast<std::size_t>(num_rays), 0);
    auto flush = [&] {
      if (current.size() >= 2) {
        Chain c;
        c.id = static_cast<int>(chains.size());
        c.source_curve = curve_index;
        c.nodes = std::move(current);
        for (Node& nd : c.nodes) nd.chain_id = c.id;
        chains.push_back(std::move(c));
      }
      current.clear();
      std::fill(seen.begin(), seen.end(), 0);
    };
    auto add_crossing = [&](Point a, Point b, int k) {
      const Vec2 dir = ray_direction(k, num_rays);
      const double ax = a.x - pith.cx, ay = a.y - pith.cy;
      const double sx = b.x - a.x, sy = b.y - a.y;
      const double denom = dir.x * sy - dir.y * sx;
      double t = denom != 0.0 ? -(dir.x * ay - dir.y * ax) / denom : 0.5;
      t = std::clamp(t, 0.0, 1.0);
      const double radius = (ax + t * sx) * dir.x + (ay + t * sy) * dir.y;
      if (!(radius > 0.0)) return;
      if (seen[static_cast<std::size_t>(k)]) flush();
      seen[static_cast<std::size_t>(k)] = 1;
      current.push_back({k, radius, pith.cx + radius * dir.x, pith.cy + radius * dir.y, 0});
    };

    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
      const Point a = pts[i];
      const Point b = pts[i + 1];
      if ((a.x == pith.cx && a.y == pith.cy) || (b.x == pith.cx && b.y == pith.cy)) continue;
      const double ta = wrap_degrees(rad_to_deg(std::atan2(a.y - pith.cy, a.x - pith.cx)));
      const double tb = wrap_degrees(rad_to_deg(std::atan2(b.y - pith.cy, b.x - pith.cx)));
      double sweep = tb - ta;
      if (sweep > 180.0) sweep -= 360.0;
      if (sweep <= -180.0) sweep += 360.0;
      if (sweep == 0.0) continue;
      const double u = ta / step;
      const double v = u + sweep / step;
      if (sweep > 0.0) {
        // rays with u < m <= v
        for (long m = static_cast<long>(std::floor(u)) + 1; m <= static_cast<long>(std::floor(v)); ++m) {
          add_crossing(a, b, static_cast<int>(((m % num_rays) + num_rays) % num_rays));
        }
      } else {
        // rays with v <= m < u, visited in the direction of travel
        for (long m = static_cast<long>(std::ceil(u)) - 1; m >= static_cast<long>(std::ceil(v)); --m) {
          add_crossing(a, b, static_cast<int>(((m % num_rays) + num_rays) % num_rays));
        }
      }
    }
    flush();
  }
  return chains;
}

}  // namespace dendroweb
