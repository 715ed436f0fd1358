#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dendroweb/backend.hpp"
#include "dendroweb/contour.hpp"
#include "dendroweb/curve_geometry.hpp"
#include "dendroweb/metrics.hpp"
#include "dendroweb/raster.hpp"

namespace testing_support {

using namespace dendroweb;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / ("dendroweb_" + tag + "_" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<Point> circle_polygon(double cx, double cy, double r, int n = 360) {
  std::vector<Point> pts;
  for (int k = 0; k < n; ++k) {
    const double a = 2.0 * std::numbers::pi * k / n;
    pts.push_back({cx + r * std::cos(a), cy + r * std::sin(a)});
  }
  return pts;
}

/// Synthetic disc: concentric ring boundaries, a disc mask, a probability
/// map of 3-px annuli blurred with sigma 1, and analytic ground truth.
struct SyntheticDisc {
  Image image;
  BinaryMask mask;
  ProbabilityMap pmap;
  std::vector<Polygon> truth;
  Pith pith;
  std::vector<double> radii;
};

inline SyntheticDisc make_synthetic_disc(int size = 512, double disc_radius = 230.0,
                                         std::vector<double> radii = {25, 50, 75, 100, 125, 150, 175, 200}) {
  SyntheticDisc s;
  s.pith = {size / 2.0, size / 2.0};
  s.radii = radii;
  s.image = Image(size, size, 3, 255);
  s.mask = BinaryMask(size, size, 1, 0);
  std::vector<double> raw(static_cast<std::size_t>(size) * size, 0.0);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double d = std::hypot(x - s.pith.cx, y - s.pith.cy);
      bool on_ring = false;
      for (double r : radii) on_ring = on_ring || std::abs(d - r) <= 1.5;
      if (on_ring) raw[static_cast<std::size_t>(y) * size + x] = 1.0;
      if (d <= disc_radius) {
        s.mask.at(x, y) = 1;
        const std::uint8_t tone = on_ring ? 90 : 190;
        s.image.at(x, y, 0) = tone;
        s.image.at(x, y, 1) = static_cast<std::uint8_t>(tone * 0.8);
        s.image.at(x, y, 2) = static_cast<std::uint8_t>(tone * 0.6);
      }
    }
  }
  const auto blurred = detail::blur(raw, size, size, 1.0);
  s.pmap = ProbabilityMap(size, size);
  auto v = s.pmap.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(std::clamp(blurred[i], 0.0, 1.0));
  for (double r : radii) s.truth.push_back(circle_polygon(s.pith.cx, s.pith.cy, r));
  return s;
}

/// Random union of discs and rectangles.
inline BinaryMask random_blob(std::mt19937_64& rng, int w = 64, int h = 64) {
  BinaryMask m(w, h, 1, 0);
  std::uniform_int_distribution<int> count(1, 5);
  std::uniform_real_distribution<double> ux(0.0, w), uy(0.0, h), ur(2.0, 14.0);
  std::bernoulli_distribution rect(0.4);
  const int shapes = count(rng);
  for (int s = 0; s < shapes; ++s) {
    const double cx = ux(rng), cy = uy(rng), r = ur(rng), r2 = ur(rng);
    const bool is_rect = rect(rng);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const bool in = is_rect ? (std::abs(x - cx) <= r && std::abs(y - cy) <= r2 * 0.5)
                                : std::hypot(x - cx, y - cy) <= r;
        if (in) m.at(x, y) = 1;
      }
    }
  }
  return m;
}

/// Pixel-pair adapted Rand error: counts ordered pixel pairs (self-pairs
/// included) that share a label, over pixels labelled in both maps.
inline RandScores brute_force_rand(const LabelMap& pred, const LabelMap& gt) {
  std::vector<std::pair<int, int>> px;
  for (std::size_t i = 0; i < pred.values().size(); ++i) {
    const int p = pred.values()[i], g = gt.values()[i];
    if (p != 0 && g != 0) px.emplace_back(p, g);
  }
  std::int64_t both = 0, same_pred = 0, same_gt = 0;
  for (const auto& a : px) {
    for (const auto& b : px) {
      const bool sp = a.first == b.first, sg = a.second == b.second;
      both += sp && sg;
      same_pred += sp;
      same_gt += sg;
    }
  }
  RandScores s;
  if (px.empty()) return s;
  s.precision = static_cast<double>(both) / static_cast<double>(same_pred);
  s.recall = static_cast<double>(both) / static_cast<double>(same_gt);
  s.error = 1.0 - 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

/// Chain sampled from an analytic polar curve r(ray) over rays [first, first+count).
inline Chain polar_chain(int id, int first, int count, int num_rays, const Pith& pith,
                         const std::function<double(int)>& radius) {
  Chain c;
  c.id = id;
  c.source_curve = id;
  for (int j = 0; j < count; ++j) {
    const int k = (first + j) % num_rays;
    const double r = radius(k);
    const Vec2 d = ray_direction(k, num_rays);
    c.nodes.push_back({k, r, pith.cx + r * d.x, pith.cy + r * d.y, id});
  }
  return c;
}

/// Rasterized circle as an ordered 8-connected pixel loop.
inline std::vector<Pixel> pixel_circle(int cx, int cy, double r) {
  BinaryMask m(static_cast<int>(2 * cx + 1), static_cast<int>(2 * cy + 1), 1, 0);
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      if (std::abs(std::hypot(x - cx, y - cy) - r) <= 1.5) m.at(x, y) = 1;
    }
  }
  const auto curves = trace_curves(skeletonize(m)).curves();
  return curves.empty() ? std::vector<Pixel>{} : curves.front();
}

}  // namespace testing_support
