#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <tuple>
#include <vector>

#include "dendroweb/curve_geometry.hpp"
#include "dendroweb/raster.hpp"

namespace dendroweb {

/// Closed ring in polar form: one radius per ray.
struct Ring {
  std::vector<double> radii;
  double coverage = 0.0;  // fraction of rays carrying an observed node
  int source_chain = 0;

  double mean_radius() const {
    return radii.empty() ? 0.0 : std::accumulate(radii.begin(), radii.end(), 0.0) / radii.size();
  }
};

/// Rings ordered from the pith outwards.
struct RingSet {
  std::vector<Ring> rings;
  Pith pith;
  int num_rays = 360;

  std::size_t size() const noexcept { return rings.size(); }

  /// Working-frame polyline of ring i, vertex k on ray k.
  std::vector<Point> vertices(std::size_t i) const {
    std::vector<Point> pts;
    pts.reserve(static_cast<std::size_t>(num_rays));
    for (int k = 0; k < num_rays; ++k) {
      const Vec2 d = ray_direction(k, num_rays);
      const double r = rings[i].radii[static_cast<std::size_t>(k)];
      pts.push_back({pith.cx + r * d.x, pith.cy + r * d.y});
    }
    return pts;
  }
};

struct SpiderwebConfig {
  double smooth_thr = 2.0;    // max radial change per ray across a bridged gap, px
  double min_coverage = 0.9;  // observed-ray fraction a chain needs to become a ring
};

struct CrossingViolation {
  int ray = 0;
  int ring_i = 0;
  int ring_j = 0;

  friend bool operator==(const CrossingViolation&, const CrossingViolation&) = default;
};

/// Rays on which consecutive rings fail to have strictly increasing radii.
inline std::vector<CrossingViolation> check_noncrossing(const RingSet& rs) {
  std::vector<CrossingViolation> out;
  for (int k = 0; k < rs.num_rays; ++k) {
    for (std::size_t i = 0; i + 1 < rs.rings.size(); ++i) {
      const auto kk = static_cast<std::size_t>(k);
      if (!(rs.rings[i].radii[kk] < rs.rings[i + 1].radii[kk])) {
        out.push_back({k, static_cast<int>(i), static_cast<int>(i + 1)});
      }
    }
  }
  return out;
}

namespace detail {

// Chain laid out over consecutive rays start, start+1, ... (mod n).
struct Arc {
  int id = 0;
  int start = 0;
  std::vector<double> radius;
  std::vector<char> observed;
  int observed_count = 0;

  int length() const noexcept { return static_cast<int>(radius.size()); }
  int end(int n) const noexcept { return (start + length() - 1) % n; }

  std::optional<double> at(int ray, int n) const {
    const int off = ((ray - start) % n + n) % n;
    if (off >= length()) return std::nullopt;
    return radius[static_cast<std::size_t>(off)];
  }
};

inline Arc arc_from_chain(const Chain& chain, int n) {
  std::vector<Node> nodes = chain.nodes;
  if (nodes.size() >= 2) {
    const int d = ((nodes[1].ray_index - nodes[0].ray_index) % n + n) % n;
    if (d > n / 2) std::reverse(nodes.begin(), nodes.end());
  }
  Arc arc;
  arc.id = chain.id;
  arc.start = nodes.front().ray_index;
  // Offsets relative to the first node; later nodes must move forward.
  std::vector<std::pair<int, double>> placed;
  int last = -1;
  for (const Node& nd : nodes) {
    const int off = ((nd.ray_index - arc.start) % n + n) % n;
    if (off <= last) continue;
    placed.emplace_back(off, nd.radius);
    last = off;
  }
  arc.radius.assign(static_cast<std::size_t>(last + 1), 0.0);
  arc.observed.assign(arc.radius.size(), 0);
  for (std::size_t i = 0; i < placed.size(); ++i) {
    const auto [off, r] = placed[i];
    arc.radius[static_cast<std::size_t>(off)] = r;
    arc.observed[static_cast<std::size_t>(off)] = 1;
    if (i + 1 < placed.size()) {
      const auto [off2, r2] = placed[i + 1];
      for (int j = off + 1; j < off2; ++j) {
        arc.radius[static_cast<std::size_t>(j)] = r + (r2 - r) * (j - off) / (off2 - off);
      }
    }
  }
  arc.observed_count = static_cast<int>(placed.size());
  return arc;
}

// a, then linear bridge over the gap, then b.
inline Arc bridge(const Arc& a, const Arc& b, int n) {
  const int gap = ((b.start - a.end(n)) % n + n) % n;
  Arc m;
  m.id = a.id;
  m.start = a.start;
  m.radius = a.radius;
  m.observed = a.observed;
  const double r0 = a.radius.back();
  const double r1 = b.radius.front();
  for (int j = 1; j < gap; ++j) {
    m.radius.push_back(r0 + (r1 - r0) * j / gap);
    m.observed.push_back(0);
  }
  m.radius.insert(m.radius.end(), b.radius.begin(), b.radius.end());
  m.observed.insert(m.observed.end(), b.observed.begin(), b.observed.end());
  m.observed_count = a.observed_count + b.observed_count;
  return m;
}

// True when the two arcs keep one strict radial order on every shared ray.
inline bool ordered(const Arc& a, const Arc& b, int n) {
  int sign = 0;
  for (int off = 0; off < a.length(); ++off) {
    const int ray = (a.start + off) % n;
    const auto rb = b.at(ray, n);
    if (!rb) continue;
    const double diff = a.radius[static_cast<std::size_t>(off)] - *rb;
    const int s = diff > 0.0 ? 1 : (diff < 0.0 ? -1 : 0);
    if (s == 0) return false;
    if (sign == 0) sign = s;
    if (s != sign) return false;
  }
  return true;
}

inline bool rings_ordered(const Ring& a, const Ring& b) {
  int sign = 0;
  for (std::size_t k = 0; k < a.radii.size(); ++k) {
    const double diff = a.radii[k] - b.radii[k];
    const int s = diff > 0.0 ? 1 : (diff < 0.0 ? -1 : 0);
    if (s == 0) return false;
    if (sign == 0) sign = s;
    if (s != sign) return false;
  }
  return true;
}

}  // namespace detail

/// Greedy spider-web grouping of chains into closed, non-crossing rings.
///
/// Repeatedly bridges the ordered chain pair (a end -> b start) with the
/// smallest per-ray radial change across its gap, provided that change is at
/// most smooth_thr and the bridged chain keeps a strict radial order with
/// every other chain. Ties prefer more nodes, then lower chain ids. Chains
/// whose observed nodes cover at least min_coverage of the rays are closed by
/// linear interpolation; the rest are dropped. Remaining crossings are
/// resolved by dropping the ring with lower coverage.
inline RingSet connect_chains(const std::vector<Chain>& chains, const Pith& pith, int num_rays,
                              double smooth_thr = 2.0, double min_coverage = 0.9) {
  const int n = num_rays;
  RingSet out;
  out.pith = pith;
  out.num_rays = n;

  std::vector<detail::Arc> arcs;
  for (const Chain& c : chains) {
    if (c.nodes.size() < 2) continue;
    arcs.push_back(detail::arc_from_chain(c, n));
  }

  struct Candidate {
    double cost;
    int nodes;
    int id_a;
    int id_b;
    std::size_t a;
    std::size_t b;
  };
  for (;;) {
    std::vector<Candidate> cands;
    for (std::size_t i = 0; i < arcs.size(); ++i) {
      for (std::size_t j = 0; j < arcs.size(); ++j) {
        if (i == j) continue;
        const auto& a = arcs[i];
        const auto& b = arcs[j];
        const int gap = ((b.start - a.end(n)) % n + n) % n;
        if (gap == 0 || a.length() + gap - 1 + b.length() > n) continue;
        const double cost = std::abs(a.radius.back() - b.radius.front()) / gap;
        if (cost > smooth_thr) continue;
        cands.push_back({cost, a.observed_count + b.observed_count, a.id, b.id, i, j});
      }
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& x, const Candidate& y) {
      return std::tie(x.cost, y.nodes, x.id_a, x.id_b) < std::tie(y.cost, x.nodes, y.id_a, y.id_b);
    });
    bool merged = false;
    for (const Candidate& c : cands) {
      detail::Arc m = detail::bridge(arcs[c.a], arcs[c.b], n);
      bool clear = true;
      for (std::size_t k = 0; k < arcs.size() && clear; ++k) {
        if (k == c.a || k == c.b) continue;
        clear = detail::ordered(m, arcs[k], n);
      }
      if (!clear) continue;
      const std::size_t hi = std::max(c.a, c.b);
      const std::size_t lo = std::min(c.a, c.b);
      arcs.erase(arcs.begin() + static_cast<std::ptrdiff_t>(hi));
      arcs.erase(arcs.begin() + static_cast<std::ptrdiff_t>(lo));
      arcs.push_back(std::move(m));
      merged = true;
      break;
    }
    if (!merged) break;
  }

  std::vector<Ring> rings;
  for (const auto& a : arcs) {
    const double coverage = static_cast<double>(a.observed_count) / n;
    if (coverage < min_coverage) continue;
    Ring ring;
    ring.coverage = coverage;
    ring.source_chain = a.id;
    ring.radii.assign(static_cast<std::size_t>(n), 0.0);
    for (int off = 0; off < a.length(); ++off) {
      ring.radii[static_cast<std::size_t>((a.start + off) % n)] = a.radius[static_cast<std::size_t>(off)];
    }
    const int gap = n - a.length() + 1;  // steps from the last ray back to the first
    const double r0 = a.radius.back();
    const double r1 = a.radius.front();
    for (int j = 1; j < gap; ++j) {
      ring.radii[static_cast<std::size_t>((a.end(n) + j) % n)] = r0 + (r1 - r0) * j / gap;
    }
    rings.push_back(std::move(ring));
  }

  auto by_radius = [](const Ring& x, const Ring& y) {
    return std::make_tuple(x.mean_radius(), x.source_chain) < std::make_tuple(y.mean_radius(), y.source_chain);
  };
  std::sort(rings.begin(), rings.end(), by_radius);
  for (bool dropped = true; dropped;) {
    dropped = false;
    for (std::size_t i = 0; i < rings.size() && !dropped; ++i) {
      for (std::size_t j = i + 1; j < rings.size() && !dropped; ++j) {
        if (detail::rings_ordered(rings[i], rings[j])) continue;
        const std::size_t victim = rings[i].coverage < rings[j].coverage ? i : j;
        rings.erase(rings.begin() + static_cast<std::ptrdiff_t>(victim));
        dropped = true;
      }
    }
  }
  out.rings = std::move(rings);
  return out;
}

inline RingSet connect_chains(const std::vector<Chain>& chains, const Pith& pith, int num_rays,
                              const SpiderwebConfig& cfg) {
  return connect_chains(chains, pith, num_rays, cfg.smooth_thr, cfg.min_coverage);
}

}  // namespace dendroweb
