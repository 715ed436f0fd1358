#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "dendroweb/errors.hpp"
#include "dendroweb/raster.hpp"
#include "dendroweb/spiderweb.hpp"

namespace dendroweb {

using Polygon = std::vector<Point>;

inline std::vector<Polygon> ring_polygons(const RingSet& rs) {
  std::vector<Polygon> out;
  for (std::size_t i = 0; i < rs.size(); ++i) out.push_back(rs.vertices(i));
  return out;
}

namespace detail {

inline double orient(Point a, Point b, Point c) {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

// Proper crossing: each segment's endpoints lie strictly on opposite sides
// of the other segment's line.
inline bool segments_cross(Point a, Point b, Point c, Point d) {
  const double o1 = orient(a, b, c), o2 = orient(a, b, d);
  const double o3 = orient(c, d, a), o4 = orient(c, d, b);
  return ((o1 > 0 && o2 < 0) || (o1 < 0 && o2 > 0)) && ((o3 > 0 && o4 < 0) || (o3 < 0 && o4 > 0));
}

struct Bounds {
  double x0, y0, x1, y1;
};

inline Bounds bounds_of(Point a, Point b) {
  return {std::min(a.x, b.x), std::min(a.y, b.y), std::max(a.x, b.x), std::max(a.y, b.y)};
}

inline bool overlap(const Bounds& p, const Bounds& q) {
  return p.x0 <= q.x1 && q.x0 <= p.x1 && p.y0 <= q.y1 && q.y0 <= p.y1;
}

}  // namespace detail

/// True when any edge of closed polygon a properly crosses an edge of b.
inline bool polygons_cross(const Polygon& a, const Polygon& b) {
  if (a.size() < 2 || b.size() < 2) return false;
  std::vector<detail::Bounds> eb;
  eb.reserve(b.size());
  for (std::size_t j = 0; j < b.size(); ++j) eb.push_back(detail::bounds_of(b[j], b[(j + 1) % b.size()]));
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Point p = a[i], q = a[(i + 1) % a.size()];
    const auto ea = detail::bounds_of(p, q);
    for (std::size_t j = 0; j < b.size(); ++j) {
      if (!detail::overlap(ea, eb[j])) continue;
      if (detail::segments_cross(p, q, b[j], b[(j + 1) % b.size()])) return true;
    }
  }
  return false;
}

/// Throws CrossingError naming the first crossing pair.
inline void require_noncrossing(const std::vector<Polygon>& rings, const std::string& source) {
  for (std::size_t i = 0; i < rings.size(); ++i) {
    for (std::size_t j = i + 1; j < rings.size(); ++j) {
      if (polygons_cross(rings[i], rings[j])) {
        throw CrossingError(source + ": rings " + std::to_string(i) + " and " +
                            std::to_string(j) + " cross");
      }
    }
  }
}

/// Labels each disc pixel by the annulus it falls in: K+1 minus the number
/// of ring polygons containing it, clipped to [1, K+1], so the region around
/// the pith is 1 and the band outside the last ring is K+1. Pixels outside
/// the disc are 0. Containment is sampled at pixel centers, even-odd.
inline LabelMap rasterize_regions(const std::vector<Polygon>& rings, const BinaryMask& disc_mask) {
  require_noncrossing(rings, "rasterize_regions");
  const int w = disc_mask.width();
  const int h = disc_mask.height();
  std::vector<int> inside(static_cast<std::size_t>(w) * h, 0);
  std::vector<double> xs;
  for (const Polygon& poly : rings) {
    if (poly.size() < 3) continue;
    for (int y = 0; y < h; ++y) {
      xs.clear();
      for (std::size_t i = 0; i < poly.size(); ++i) {
        const Point a = poly[i], b = poly[(i + 1) % poly.size()];
        if ((a.y <= y && y < b.y) || (b.y <= y && y < a.y)) {
          xs.push_back(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
        }
      }
      std::sort(xs.begin(), xs.end());
      for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
        const int from = std::max(0, static_cast<int>(std::ceil(xs[k])));
        const int to = std::min(w, static_cast<int>(std::ceil(xs[k + 1])));
        for (int x = from; x < to; ++x) ++inside[static_cast<std::size_t>(y) * w + x];
      }
    }
  }
  const int k = static_cast<int>(rings.size());
  LabelMap labels(w, h, 1, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!disc_mask.at(x, y)) continue;
      labels.at(x, y) = std::clamp(k + 1 - inside[static_cast<std::size_t>(y) * w + x], 1, k + 1);
    }
  }
  return labels;
}

inline LabelMap rasterize_regions(const RingSet& rings, const BinaryMask& disc_mask) {
  if (!check_noncrossing(rings).empty()) throw CrossingError("rasterize_regions: ring set crosses");
  return rasterize_regions(ring_polygons(rings), disc_mask);
}

namespace detail {

inline void require_same_size(const LabelMap& a, const LabelMap& b, const char* what) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw DimensionError(std::string(what) + ": label maps differ in size (" +
                         std::to_string(a.width()) + "x" + std::to_string(a.height()) + " vs " +
                         std::to_string(b.width()) + "x" + std::to_string(b.height()) + ")");
  }
}

}  // namespace detail

/// IoU thresholds 0.50, 0.55, ..., 0.95.
inline std::vector<double> recall_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back((50.0 + 5.0 * i) / 100.0);
  return t;
}

/// Fraction of ground-truth regions matched at one IoU threshold, using a
/// greedy one-to-one assignment by descending IoU. Label 0 is ignored.
inline std::vector<double> recall_curve(const LabelMap& pred, const LabelMap& gt) {
  detail::require_same_size(pred, gt, "mean_average_recall");
  std::map<int, std::int64_t> pred_area, gt_area;
  std::map<std::pair<int, int>, std::int64_t> inter;  // (gt, pred)
  auto pv = pred.values();
  auto gv = gt.values();
  for (std::size_t i = 0; i < pv.size(); ++i) {
    if (pv[i] > 0) ++pred_area[pv[i]];
    if (gv[i] > 0) ++gt_area[gv[i]];
    if (pv[i] > 0 && gv[i] > 0) ++inter[{gv[i], pv[i]}];
  }
  struct Pair {
    double iou;
    int g;
    int p;
  };
  std::vector<Pair> pairs;
  for (const auto& [key, n] : inter) {
    const auto [g, p] = key;
    const double uni = static_cast<double>(gt_area[g] + pred_area[p] - n);
    pairs.push_back({static_cast<double>(n) / uni, g, p});
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    return std::make_tuple(-a.iou, a.g, a.p) < std::make_tuple(-b.iou, b.g, b.p);
  });

  std::vector<double> curve;
  for (double t : recall_thresholds()) {
    if (gt_area.empty()) {
      curve.push_back(1.0);
      continue;
    }
    std::map<int, bool> g_used, p_used;
    int matched = 0;
    for (const Pair& pr : pairs) {
      if (pr.iou < t) break;
      if (g_used[pr.g] || p_used[pr.p]) continue;
      g_used[pr.g] = p_used[pr.p] = true;
      ++matched;
    }
    curve.push_back(static_cast<double>(matched) / gt_area.size());
  }
  return curve;
}

/// Mean of the recall curve over the ten IoU thresholds. With no ground
/// truth regions there is nothing to miss and the result is 1.
inline double mean_average_recall(const LabelMap& pred, const LabelMap& gt) {
  const auto curve = recall_curve(pred, gt);
  double total = 0.0;
  for (double r : curve) total += r;
  return total / curve.size();
}

struct RandScores {
  double precision = 1.0;
  double recall = 1.0;
  double error = 0.0;
};

/// Adapted Rand scores over pixels where both maps are nonzero.
/// precision = sum n_ij^2 / sum a_i^2 (pred marginals), recall uses the gt
/// marginals, error = 1 - F1.
inline RandScores adapted_rand(const LabelMap& pred, const LabelMap& gt) {
  detail::require_same_size(pred, gt, "adapted_rand_error");
  std::map<std::pair<int, int>, std::int64_t> joint;
  std::map<int, std::int64_t> a, b;
  auto pv = pred.values();
  auto gv = gt.values();
  for (std::size_t i = 0; i < pv.size(); ++i) {
    if (pv[i] == 0 || gv[i] == 0) continue;
    ++joint[{pv[i], gv[i]}];
    ++a[pv[i]];
    ++b[gv[i]];
  }
  RandScores s;
  if (joint.empty()) return s;
  std::int64_t sum_joint = 0, sum_a = 0, sum_b = 0;
  for (const auto& [k, n] : joint) sum_joint += n * n;
  for (const auto& [k, n] : a) sum_a += n * n;
  for (const auto& [k, n] : b) sum_b += n * n;
  s.precision = static_cast<double>(sum_joint) / static_cast<double>(sum_a);
  s.recall = static_cast<double>(sum_joint) / static_cast<double>(sum_b);
  s.error = 1.0 - 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

inline double adapted_rand_error(const LabelMap& pred, const LabelMap& gt) {
  return adapted_rand(pred, gt).error;
}

}  // namespace dendroweb
