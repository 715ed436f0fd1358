#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "dendroweb/errors.hpp"
#include "dendroweb/parallel.hpp"
#include "dendroweb/raster.hpp"

namespace dendroweb {

/// Overlapping square tiles over a zero-padded image.
struct TilePlan {
  int image_width = 0;
  int image_height = 0;
  int tile_size = 0;  // 0: single full-image tile
  int overlap = 0;
  int stride_x = 0;   // distance between consecutive origins; equals the tile
  int stride_y = 0;   // extent when the axis holds a single tile
  int tile_width = 0;
  int tile_height = 0;
  int pad_right = 0;
  int pad_bottom = 0;
  std::vector<int> origins_x;
  std::vector<int> origins_y;

  std::size_t tile_count() const noexcept { return origins_x.size() * origins_y.size(); }
  int padded_width() const noexcept { return image_width + pad_right; }
  int padded_height() const noexcept { return image_height + pad_bottom; }

  /// Tile origins in row-major order (the canonical fusion order).
  std::pair<int, int> origin(std::size_t index) const {
    return {origins_x[index % origins_x.size()], origins_y[index / origins_x.size()]};
  }
};

inline int tile_overlap(int tile_size) {
  return static_cast<int>(std::lround(0.10 * tile_size));
}

namespace detail {

inline std::vector<int> axis_origins(int length, int tile, int stride, int& pad) {
  if (length <= tile) {
    pad = tile - length;
    return {0};
  }
  const int steps = (length - tile + stride - 1) / stride;  // ceil
  std::vector<int> origins;
  for (int k = 0; k <= steps; ++k) origins.push_back(k * stride);
  pad = steps * stride + tile - length;
  return origins;
}

}  // namespace detail

/// Lays out tiles of `tile_size` with a per-seam overlap of
/// round(0.1 * tile_size). tile_size 0 yields one tile covering the image.
inline TilePlan plan_tiles(int width, int height, int tile_size) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("plan_tiles: empty image");
  if (tile_size < 0) throw std::invalid_argument("plan_tiles: negative tile size");
  TilePlan plan;
  plan.image_width = width;
  plan.image_height = height;
  plan.tile_size = tile_size;
  if (tile_size == 0) {
    plan.tile_width = width;
    plan.tile_height = height;
    plan.stride_x = width;
    plan.stride_y = height;
    plan.origins_x = {0};
    plan.origins_y = {0};
    return plan;
  }
  if (tile_size < 32 || tile_size > std::max(width, height)) {
    throw std::invalid_argument("plan_tiles: tile size " + std::to_string(tile_size) +
                                " outside [32, " + std::to_string(std::max(width, height)) + "]");
  }
  plan.overlap = tile_overlap(tile_size);
  const int stride = tile_size - plan.overlap;
  plan.tile_width = tile_size;
  plan.tile_height = tile_size;
  plan.origins_x = detail::axis_origins(width, tile_size, stride, plan.pad_right);
  plan.origins_y = detail::axis_origins(height, tile_size, stride, plan.pad_bottom);
  plan.stride_x = plan.origins_x.size() > 1 ? stride : tile_size;
  plan.stride_y = plan.origins_y.size() > 1 ? stride : tile_size;
  return plan;
}

/// Where a tile sits: its origin in the (rotated) working image and the TTA
/// rotation it belongs to.
struct TileContext {
  int origin_x = 0;
  int origin_y = 0;
  int image_width = 0;
  int image_height = 0;
  double angle = 0.0;
  Pith pith;
};

/// Ring-boundary probability model applied to one RGB tile.
///
/// predict must return a single-channel map of the tile's size with values in
/// [0,1] and be deterministic. Backends reporting concurrent_safe() == false
/// are driven from one thread.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual ProbabilityMap predict(const Image& tile, const TileContext& ctx) const = 0;
  virtual bool concurrent_safe() const { return true; }
  virtual std::string name() const = 0;
};

/// Tiles `image` per `plan`, predicts every tile, and averages the
/// predictions where tiles overlap. Fusion walks tiles in row-major order so
/// the result does not depend on `jobs`.
inline ProbabilityMap infer_map(const Image& image, const TilePlan& plan, const Backend& backend,
                                int jobs = 1, double angle = 0.0, Pith pith = {}) {
  if (image.width() != plan.image_width || image.height() != plan.image_height) {
    throw std::invalid_argument("infer_map: plan was built for " +
                                std::to_string(plan.image_width) + "x" +
                                std::to_string(plan.image_height) + ", image is " +
                                std::to_string(image.width()) + "x" +
                                std::to_string(image.height()));
  }
  const std::size_t n = plan.tile_count();
  std::vector<ProbabilityMap> predictions(n);
  const int workers = backend.concurrent_safe() ? jobs : 1;

  parallel_for(n, workers, [&](std::size_t i) {
    const auto [ox, oy] = plan.origin(i);
    Image tile(plan.tile_width, plan.tile_height, image.channels(), 0);
    for (int y = 0; y < plan.tile_height; ++y) {
      const int sy = oy + y;
      if (sy >= image.height()) break;
      for (int x = 0; x < plan.tile_width; ++x) {
        const int sx = ox + x;
        if (sx >= image.width()) break;
        for (int c = 0; c < image.channels(); ++c) tile.at(x, y, c) = image.at(sx, sy, c);
      }
    }
    const TileContext ctx{ox, oy, image.width(), image.height(), angle, pith};
    ProbabilityMap p = backend.predict(tile, ctx);
    const std::string where = "tile " + std::to_string(i) + " at (" + std::to_string(ox) + "," +
                              std::to_string(oy) + ")";
    if (p.width() != tile.width() || p.height() != tile.height() || p.channels() != 1) {
      throw BackendError(backend.name() + ": " + where + " returned a " +
                         std::to_string(p.width()) + "x" + std::to_string(p.height()) + "x" +
                         std::to_string(p.channels()) + " map, expected " +
                         std::to_string(tile.width()) + "x" + std::to_string(tile.height()) +
                         "x1");
    }
    for (float v : p.values()) {
      if (!(v >= 0.0f && v <= 1.0f)) {
        throw BackendError(backend.name() + ": " + where + " produced value " +
                           std::to_string(v) + " outside [0,1]");
      }
    }
    predictions[i] = std::move(p);
  });

  const int pw = plan.padded_width();
  const int ph = plan.padded_height();
  std::vector<double> sum(static_cast<std::size_t>(pw) * ph, 0.0);
  std::vector<int> hits(sum.size(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto [ox, oy] = plan.origin(i);
    const ProbabilityMap& p = predictions[i];
    for (int y = 0; y < plan.tile_height; ++y) {
      for (int x = 0; x < plan.tile_width; ++x) {
        const std::size_t k = static_cast<std::size_t>(oy + y) * pw + (ox + x);
        sum[k] += p.at(x, y);
        ++hits[k];
      }
    }
  }
  ProbabilityMap out(image.width(), image.height());
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      const std::size_t k = static_cast<std::size_t>(y) * pw + x;
      out.at(x, y) = static_cast<float>(sum[k] / hits[k]);
    }
  }
  return out;
}

/// Wraps a callable as a backend; handy for synthetic and analytic models.
class FunctionBackend final : public Backend {
 public:
  using Fn = std::function<ProbabilityMap(const Image&, const TileContext&)>;

  FunctionBackend(std::string name, Fn fn, bool concurrent_safe = true)
      : name_(std::move(name)), fn_(std::move(fn)), concurrent_safe_(concurrent_safe) {}

  ProbabilityMap predict(const Image& tile, const TileContext& ctx) const override {
    return fn_(tile, ctx);
  }
  bool concurrent_safe() const override { return concurrent_safe_; }
  std::string name() const override { return name_; }

 private:
  std::string name_;
  Fn fn_;
  bool concurrent_safe_;
};

/// Serves a precomputed working-frame probability map. For a TTA pass at
/// angle theta it returns the map rotated about the pith by theta (an
/// equivariant model's answer for the rotated image), cropped to the tile.
class PmapBackend final : public Backend {
 public:
  explicit PmapBackend(ProbabilityMap map) : map_(std::move(map)) {
    for (float v : map_.values()) {
      if (!(v >= 0.0f && v <= 1.0f)) throw BackendError("pmap: values must lie in [0,1]");
    }
  }

  ProbabilityMap predict(const Image& tile, const TileContext& ctx) const override {
    if (ctx.image_width != map_.width() || ctx.image_height != map_.height()) {
      throw BackendError("pmap: map is " + std::to_string(map_.width()) + "x" +
                         std::to_string(map_.height()) + " but the image is " +
                         std::to_string(ctx.image_width) + "x" +
                         std::to_string(ctx.image_height));
    }
    const ProbabilityMap& source = rotated(ctx.angle, ctx.pith);
    ProbabilityMap out(tile.width(), tile.height(), 1, 0.0f);
    for (int y = 0; y < tile.height(); ++y) {
      for (int x = 0; x < tile.width(); ++x) {
        const int sx = ctx.origin_x + x;
        const int sy = ctx.origin_y + y;
        if (source.contains(sx, sy)) out.at(x, y) = source.at(sx, sy);
      }
    }
    return out;
  }

  std::string name() const override { return "pmap"; }
  const ProbabilityMap& map() const noexcept { return map_; }

 private:
  const ProbabilityMap& rotated(double angle, const Pith& pith) const {
    const double a = wrap_degrees(angle);
    if (a == 0.0) return map_;
    std::lock_guard lock(mutex_);
    auto key = std::make_tuple(a, pith.cx, pith.cy);
    auto it = cache_.find(key);
    if (it == cache_.end()) {
      it = cache_.emplace(key, rotate_about<float>(map_, pith, a, 0.0f)).first;
    }
    return it->second;
  }

  ProbabilityMap map_;
  mutable std::mutex mutex_;
  mutable std::map<std::tuple<double, double, double>, ProbabilityMap> cache_;
};

namespace detail {

inline std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    total += v;
  }
  for (double& v : k) v /= total;
  return k;
}

// Separable convolution with replicated borders.
inline std::vector<double> blur(const std::vector<double>& src, int w, int h, double sigma) {
  const auto k = gaussian_kernel(sigma);
  const int r = static_cast<int>(k.size() / 2);
  std::vector<double> tmp(src.size()), out(src.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) {
        const int sx = std::clamp(x + i, 0, w - 1);
        acc += k[static_cast<std::size_t>(i + r)] * src[static_cast<std::size_t>(y) * w + sx];
      }
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) {
        const int sy = std::clamp(y + i, 0, h - 1);
        acc += k[static_cast<std::size_t>(i + r)] * tmp[static_cast<std::size_t>(sy) * w + x];
      }
      out[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  return out;
}

}  // namespace detail

/// Classical stand-in model: gradient magnitude of the Gaussian-smoothed
/// grayscale tile, divided by its 99th percentile and clipped to [0,1].
class GradientBackend final : public Backend {
 public:
  explicit GradientBackend(double sigma = 2.0) : sigma_(sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("gradient backend: sigma must be positive");
  }

  ProbabilityMap predict(const Image& tile, const TileContext&) const override {
    const int w = tile.width();
    const int h = tile.height();
    const auto smooth = detail::blur(grayscale(tile), w, h, sigma_);
    auto at = [&](int x, int y) {
      return smooth[static_cast<std::size_t>(std::clamp(y, 0, h - 1)) * w + std::clamp(x, 0, w - 1)];
    };
    std::vector<double> mag(smooth.size());
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double gx = 0.5 * (at(x + 1, y) - at(x - 1, y));
        const double gy = 0.5 * (at(x, y + 1) - at(x, y - 1));
        mag[static_cast<std::size_t>(y) * w + x] = std::hypot(gx, gy);
      }
    }
    std::vector<double> sorted = mag;
    const std::size_t k = std::min(sorted.size() - 1,
                                   static_cast<std::size_t>(std::floor(0.99 * (sorted.size() - 1))));
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k), sorted.end());
    const double p99 = sorted[k];
    ProbabilityMap out(w, h, 1, 0.0f);
    // Gradients below this are floating-point noise on flat input.
    if (p99 <= 1e-9) return out;
    auto v = out.values();
    for (std::size_t i = 0; i < mag.size(); ++i) {
      v[i] = static_cast<float>(std::clamp(mag[i] / p99, 0.0, 1.0));
    }
    return out;
  }

  std::string name() const override { return "gradient"; }

 private:
  double sigma_;
};

inline std::unique_ptr<Backend> gradient_fallback_backend(double sigma = 2.0) {
  return std::make_unique<GradientBackend>(sigma);
}

}  // namespace dendroweb
