#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "dendroweb/backend.hpp"
#include "dendroweb/raster.hpp"

namespace dendroweb {

struct DetectorConfig {
  int tile_size = 256;
  int total_rotations = 5;
  double threshold = 0.2;
  double alpha = 45.0;  // degrees
  int num_rays = 360;

  void validate() const {
    if (tile_size < 0) throw std::invalid_argument("tile_size must be >= 0");
    if (total_rotations < 1) throw std::invalid_argument("total_rotations must be >= 1");
    if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("threshold must lie in (0,1)");
    if (!(alpha > 0.0 && alpha < 90.0)) throw std::invalid_argument("alpha must lie in (0,90)");
    if (num_rays < 4) throw std::invalid_argument("num_rays must be >= 4");
  }
};

/// k * 360 / total_rotations for k = 0 .. total_rotations-1.
inline std::vector<double> rotation_angles(int total_rotations) {
  if (total_rotations < 1) throw std::invalid_argument("rotation_angles: need at least one rotation");
  std::vector<double> angles;
  angles.reserve(static_cast<std::size_t>(total_rotations));
  const double step = 360.0 / total_rotations;
  for (int k = 0; k < total_rotations; ++k) angles.push_back(k * step);
  return angles;
}

/// Test-time-augmented probability map: for every rotation angle the image is
/// rotated about the pith, run through the tiled backend, rotated back, and
/// the per-angle maps are averaged in angle order.
inline ProbabilityMap detect_probability(const Image& image, const Pith& pith,
                                         const DetectorConfig& cfg, const Backend& backend,
                                         int jobs = 1) {
  cfg.validate();
  if (!pith_inside(image, pith)) throw std::invalid_argument("detect_probability: pith outside image");
  const TilePlan plan = plan_tiles(image.width(), image.height(), cfg.tile_size);
  std::vector<ProbabilityMap> maps;
  for (double theta : rotation_angles(cfg.total_rotations)) {
    const Image rotated = rotate_about<std::uint8_t>(image, pith, theta, 255);
    const ProbabilityMap p = infer_map(rotated, plan, backend, jobs, theta, pith);
    maps.push_back(rotate_about<float>(p, pith, -theta, 0.0f));
  }
  if (maps.size() == 1) return std::move(maps.front());
  return accumulate_mean(maps);
}

/// Foreground where P >= threshold.
inline BinaryMask binarize(const ProbabilityMap& p, double threshold) {
  BinaryMask m(p.width(), p.height());
  auto src = p.values();
  auto dst = m.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<double>(src[i]) >= threshold;
  return m;
}

struct Pixel {
  int x = 0;
  int y = 0;

  friend bool operator==(const Pixel&, const Pixel&) = default;
};

inline constexpr Pixel kCurveSeparator{-1, -1};

inline bool eight_adjacent(Pixel a, Pixel b) noexcept {
  return a != b && std::abs(a.x - b.x) <= 1 && std::abs(a.y - b.y) <= 1;
}

/// Curves packed as an N x 2 coordinate list, consecutive curves separated
/// by a (-1,-1) row.
struct CurveSet {
  std::vector<Pixel> coords;

  static CurveSet from_curves(const std::vector<std::vector<Pixel>>& curves) {
    CurveSet cs;
    for (const auto& c : curves) {
      if (c.empty()) continue;
      if (!cs.coords.empty()) cs.coords.push_back(kCurveSeparator);
      cs.coords.insert(cs.coords.end(), c.begin(), c.end());
    }
    return cs;
  }

  std::vector<std::vector<Pixel>> curves() const {
    std::vector<std::vector<Pixel>> out;
    std::vector<Pixel> cur;
    for (const Pixel& p : coords) {
      if (p == kCurveSeparator) {
        if (!cur.empty()) out.push_back(std::move(cur));
        cur.clear();
      } else {
        cur.push_back(p);
      }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
  }

  /// Drops leading, trailing and repeated separators, and curves shorter
  /// than `min_length` pixels.
  void normalize(std::size_t min_length = 1) {
    auto cs = curves();
    std::erase_if(cs, [&](const auto& c) { return c.size() < min_length; });
    *this = from_curves(cs);
  }

  std::size_t curve_count() const { return curves().size(); }
  bool empty() const noexcept { return coords.empty(); }
};

namespace detail {

// Neighbour offsets in the order P2..P9 (N, NE, E, SE, S, SW, W, NW).
inline constexpr std::array<std::array<int, 2>, 8> kRing{
    {{0, -1}, {1, -1}, {1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}}};

inline std::array<bool, 8> ring_of(const BinaryMask& m, int x, int y) {
  std::array<bool, 8> r{};
  for (std::size_t i = 0; i < 8; ++i) {
    const int nx = x + kRing[i][0];
    const int ny = y + kRing[i][1];
    r[i] = m.contains(nx, ny) && m.at(nx, ny);
  }
  return r;
}

inline int neighbour_count(const BinaryMask& m, int x, int y) {
  const auto r = ring_of(m, x, y);
  return static_cast<int>(std::count(r.begin(), r.end(), true));
}

// Removing the pixel keeps foreground 8-connectivity and background
// 4-connectivity intact iff its foreground neighbours form one 8-component
// and the background 4-neighbours share one 4-component within the 3x3 ring.
inline bool is_simple(const BinaryMask& m, int x, int y) {
  const auto r = ring_of(m, x, y);
  auto cell = [](std::size_t i) { return kRing[i]; };
  auto components = [&](bool foreground, bool four_connected, bool only_edge_seeds) {
    std::array<int, 8> label{};
    label.fill(-1);
    int count = 0;
    for (std::size_t s = 0; s < 8; ++s) {
      if (r[s] != foreground || label[s] != -1) continue;
      const bool edge_seed = s % 2 == 0;
      std::array<std::size_t, 8> stack{};
      std::size_t top = 0;
      stack[top++] = s;
      label[s] = count;
      bool touches_edge = edge_seed;
      while (top > 0) {
        const std::size_t a = stack[--top];
        for (std::size_t b = 0; b < 8; ++b) {
          if (r[b] != foreground || label[b] != -1) continue;
          const int dx = std::abs(cell(a)[0] - cell(b)[0]);
          const int dy = std::abs(cell(a)[1] - cell(b)[1]);
          const bool adjacent = four_connected ? dx + dy == 1 : std::max(dx, dy) == 1;
          if (!adjacent) continue;
          label[b] = count;
          touches_edge = touches_edge || b % 2 == 0;
          stack[top++] = b;
        }
      }
      if (!only_edge_seeds || touches_edge) ++count;
    }
    return count;
  };
  return components(true, false, false) == 1 && components(false, true, true) == 1;
}

inline void zhang_suen(BinaryMask& m) {
  std::vector<Pixel> fg;
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      if (m.at(x, y)) fg.push_back({x, y});
    }
  }
  std::vector<Pixel> doomed;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int sub = 0; sub < 2; ++sub) {
      doomed.clear();
      for (const Pixel& p : fg) {
        const auto r = ring_of(m, p.x, p.y);
        const int b = static_cast<int>(std::count(r.begin(), r.end(), true));
        if (b < 2 || b > 6) continue;
        int a = 0;
        for (std::size_t i = 0; i < 8; ++i) a += !r[i] && r[(i + 1) % 8];
        if (a != 1) continue;
        // r[0]=P2 (N), r[2]=P4 (E), r[4]=P6 (S), r[6]=P8 (W)
        if (sub == 0) {
          if (r[0] && r[2] && r[4]) continue;
          if (r[2] && r[4] && r[6]) continue;
        } else {
          if (r[0] && r[2] && r[6]) continue;
          if (r[0] && r[4] && r[6]) continue;
        }
        doomed.push_back(p);
      }
      // Candidates go one at a time, each re-checked against the current mask.
      bool removed = false;
      for (const Pixel& p : doomed) {
        if (neighbour_count(m, p.x, p.y) < 2 || !is_simple(m, p.x, p.y)) continue;
        m.at(p.x, p.y) = 0;
        removed = true;
      }
      if (removed) {
        changed = true;
        std::erase_if(fg, [&](const Pixel& p) { return m.at(p.x, p.y) == 0; });
      }
    }
  }
}

inline bool in_full_block(const BinaryMask& m, int x, int y) {
  for (int oy = -1; oy <= 0; ++oy) {
    for (int ox = -1; ox <= 0; ++ox) {
      bool full = true;
      for (int j = 0; j < 2 && full; ++j) {
        for (int i = 0; i < 2 && full; ++i) {
          const int px = x + ox + i;
          const int py = y + oy + j;
          full = m.contains(px, py) && m.at(px, py);
        }
      }
      if (full) return true;
    }
  }
  return false;
}

// Deletes redundant simple pixels (corners of 4-connected staircases, 2x2
// blocks) so every remaining non-junction pixel has at most two neighbours.
// Blocks whose pixels are all non-simple are broken at their least connected
// pixel.
inline void minimal_thin(BinaryMask& m) {
  bool changed = true;
  while (changed) {
    changed = false;
    for (int y = 0; y < m.height(); ++y) {
      for (int x = 0; x < m.width(); ++x) {
        if (!m.at(x, y)) continue;
        if (neighbour_count(m, x, y) < 2) continue;
        if (is_simple(m, x, y)) {
          m.at(x, y) = 0;
          changed = true;
        }
      }
    }
    if (changed) continue;
    for (int y = 0; y + 1 < m.height() && !changed; ++y) {
      for (int x = 0; x + 1 < m.width() && !changed; ++x) {
        if (!(m.at(x, y) && m.at(x + 1, y) && m.at(x, y + 1) && m.at(x + 1, y + 1))) continue;
        std::array<Pixel, 4> block{{{x, y}, {x + 1, y}, {x, y + 1}, {x + 1, y + 1}}};
        Pixel victim = block[0];
        int fewest = 9;
        for (const Pixel& p : block) {
          const int n = neighbour_count(m, p.x, p.y);
          if (n < fewest) {
            fewest = n;
            victim = p;
          }
        }
        m.at(victim.x, victim.y) = 0;
        changed = true;
      }
    }
  }
}

}  // namespace detail

/// Zhang-Suen thinning followed by removal of redundant simple pixels,
/// giving a one-pixel-wide 8-connected skeleton contained in the mask.
inline BinaryMask skeletonize(const BinaryMask& mask) {
  BinaryMask s = mask;
  for (auto& v : s.values()) v = v ? 1 : 0;
  detail::zhang_suen(s);
  detail::minimal_thin(s);
  return s;
}

/// Walks the skeleton's pixel graph into ordered curves.
///
/// Paths run between endpoints and junctions (pixels with more than two
/// neighbours); junction pixels may start or end several curves. Closed
/// loops without junctions are opened at their first pixel in raster order,
/// so their first and last pixels are 8-neighbours. Curves shorter than
/// three pixels are dropped.
inline CurveSet trace_curves(const BinaryMask& skeleton) {
  const int w = skeleton.width();
  const int h = skeleton.height();
  auto id = [w](Pixel p) { return static_cast<std::uint64_t>(p.y) * w + p.x; };
  auto edge_key = [&](Pixel a, Pixel b) {
    std::uint64_t ia = id(a), ib = id(b);
    if (ia > ib) std::swap(ia, ib);
    return ia * (static_cast<std::uint64_t>(w) * h) + ib;
  };
  auto on = [&](int x, int y) { return skeleton.contains(x, y) && skeleton.at(x, y) != 0; };
  auto neighbours = [&](Pixel p) {
    std::vector<Pixel> out;
    for (const auto& d : detail::kRing) {
      if (on(p.x + d[0], p.y + d[1])) out.push_back({p.x + d[0], p.y + d[1]});
    }
    return out;
  };
  auto degree = [&](Pixel p) { return detail::neighbour_count(skeleton, p.x, p.y); };

  std::unordered_set<std::uint64_t> visited;
  std::vector<std::vector<Pixel>> curves;

  auto walk = [&](Pixel start, Pixel first_step, bool stop_at_start) {
    std::vector<Pixel> path{start, first_step};
    visited.insert(edge_key(start, first_step));
    Pixel cur = first_step;
    while (degree(cur) == 2 && !(stop_at_start && cur == start)) {
      bool advanced = false;
      for (const Pixel& nb : neighbours(cur)) {
        if (visited.contains(edge_key(cur, nb))) continue;
        visited.insert(edge_key(cur, nb));
        if (stop_at_start && nb == start) {
          advanced = false;
          cur = start;
          break;
        }
        path.push_back(nb);
        cur = nb;
        advanced = true;
        break;
      }
      if (!advanced) break;
    }
    return path;
  };

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Pixel p{x, y};
      if (!on(x, y)) continue;
      const int d = degree(p);
      if (d == 2 || d == 0) continue;
      for (const Pixel& nb : neighbours(p)) {
        if (visited.contains(edge_key(p, nb))) continue;
        curves.push_back(walk(p, nb, false));
      }
    }
  }
  // Whatever is left consists of junction-free loops.
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Pixel p{x, y};
      if (!on(x, y) || degree(p) != 2) continue;
      for (const Pixel& nb : neighbours(p)) {
        if (visited.contains(edge_key(p, nb))) continue;
        curves.push_back(walk(p, nb, true));
        break;
      }
    }
  }
  std::erase_if(curves, [](const auto& c) { return c.size() < 3; });
  return CurveSet::from_curves(curves);
}

}  // namespace dendroweb
