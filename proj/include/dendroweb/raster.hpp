#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace dendroweb {

/// Dense row-major raster with interleaved channels.
///
/// Used for 8-bit RGB images, unit-interval probability maps, {0,1} masks
/// and integer region labels. Width and height are always positive.
template <typename T>
class Raster {
 public:
  using value_type = T;

  Raster() = default;

  Raster(int width, int height, int channels = 1, T fill = T{})
      : width_(width), height_(height), channels_(channels) {
    if (width <= 0 || height <= 0) {
      throw std::invalid_argument("raster dimensions must be positive, got " +
                                  std::to_string(width) + "x" + std::to_string(height));
    }
    if (channels != 1 && channels != 3) {
      throw std::invalid_argument("raster must have 1 or 3 channels, got " +
                                  std::to_string(channels));
    }
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  bool empty() const noexcept { return data_.empty(); }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width_) * height_;
  }

  bool contains(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  T& at(int x, int y, int c = 0) noexcept { return data_[index(x, y, c)]; }
  const T& at(int x, int y, int c = 0) const noexcept { return data_[index(x, y, c)]; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  bool same_shape(const Raster& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
  }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  std::size_t index(int x, int y, int c) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<T> data_;
};

using Image = Raster<std::uint8_t>;           // 1 or 3 channels, 0..255
using ProbabilityMap = Raster<float>;         // single channel, [0,1]
using BinaryMask = Raster<std::uint8_t>;      // single channel, {0,1}
using LabelMap = Raster<std::int32_t>;

/// Sub-pixel location in raster coordinates; integer values are pixel centers.
struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

/// Pith location. Origin of every ray and of the TTA rotations.
struct Pith {
  double cx = 0.0;
  double cy = 0.0;

  Point point() const noexcept { return {cx, cy}; }
};

template <typename T>
bool pith_inside(const Raster<T>& r, const Pith& pith) noexcept {
  return pith.cx >= 0.0 && pith.cy >= 0.0 && pith.cx < r.width() && pith.cy < r.height();
}

inline double deg_to_rad(double deg) noexcept { return deg * std::numbers::pi / 180.0; }
inline double rad_to_deg(double rad) noexcept { return rad * 180.0 / std::numbers::pi; }

/// Reduces an angle in degrees to [0, 360).
inline double wrap_degrees(double deg) noexcept {
  double w = std::fmod(deg, 360.0);
  if (w < 0.0) w += 360.0;
  if (w >= 360.0) w -= 360.0;
  return w;
}

namespace detail {

template <typename T>
T store_sample(double v) {
  if constexpr (std::is_integral_v<T>) {
    v = std::round(v);
    v = std::clamp(v, static_cast<double>(std::numeric_limits<T>::lowest()),
                   static_cast<double>(std::numeric_limits<T>::max()));
    return static_cast<T>(v);
  } else {
    return static_cast<T>(v);
  }
}

}  // namespace detail

/// Rotates `r` about `pith` by `theta` degrees, counter-clockwise as seen on
/// screen (image y axis points down). Output keeps the input dimensions; each
/// output pixel is the bilinear sample of the input at the inverse-rotated
/// location, with taps that fall outside the raster reading `fill`.
template <typename T>
Raster<T> rotate_about(const Raster<T>& r, const Pith& pith, double theta, T fill) {
  if (r.empty()) throw std::invalid_argument("rotate_about: empty raster");
  const double reduced = wrap_degrees(theta);
  if (reduced == 0.0) return r;

  const double rad = deg_to_rad(reduced);
  const double cs = std::cos(rad);
  const double sn = std::sin(rad);
  const int w = r.width();
  const int h = r.height();
  const int nc = r.channels();
  Raster<T> out(w, h, nc, fill);

  auto tap = [&](int x, int y, int c) -> double {
    return r.contains(x, y) ? static_cast<double>(r.at(x, y, c)) : static_cast<double>(fill);
  };

  for (int y = 0; y < h; ++y) {
    const double dy = y - pith.cy;
    for (int x = 0; x < w; ++x) {
      const double dx = x - pith.cx;
      const double sx = pith.cx + dx * cs - dy * sn;
      const double sy = pith.cy + dx * sn + dy * cs;
      const double fx = std::floor(sx);
      const double fy = std::floor(sy);
      if (fx < -1.0 || fy < -1.0 || fx > w || fy > h) continue;  // all taps outside
      const int x0 = static_cast<int>(fx);
      const int y0 = static_cast<int>(fy);
      const double ax = sx - fx;
      const double ay = sy - fy;
      for (int c = 0; c < nc; ++c) {
        const double top = tap(x0, y0, c) * (1.0 - ax) + tap(x0 + 1, y0, c) * ax;
        const double bottom = tap(x0, y0 + 1, c) * (1.0 - ax) + tap(x0 + 1, y0 + 1, c) * ax;
        out.at(x, y, c) = detail::store_sample<T>(top * (1.0 - ay) + bottom * ay);
      }
    }
  }
  return out;
}

/// Pointwise arithmetic mean, summed in input order.
template <typename T>
Raster<T> accumulate_mean(std::span<const Raster<T>> maps) {
  if (maps.empty()) throw std::invalid_argument("accumulate_mean: no maps");
  const Raster<T>& first = maps.front();
  for (std::size_t i = 1; i < maps.size(); ++i) {
    if (!maps[i].same_shape(first)) {
      throw std::invalid_argument("accumulate_mean: map " + std::to_string(i) +
                                  " has different dimensions");
    }
  }
  std::vector<double> sum(first.values().size(), 0.0);
  for (const auto& m : maps) {
    auto v = m.values();
    for (std::size_t i = 0; i < v.size(); ++i) sum[i] += static_cast<double>(v[i]);
  }
  Raster<T> out(first.width(), first.height(), first.channels());
  auto o = out.values();
  const double n = static_cast<double>(maps.size());
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = detail::store_sample<T>(sum[i] / n);
  return out;
}

template <typename T>
Raster<T> accumulate_mean(const std::vector<Raster<T>>& maps) {
  return accumulate_mean(std::span<const Raster<T>>(maps));
}

/// Luma of an RGB image (or the single channel of a gray image) as doubles.
inline std::vector<double> grayscale(const Image& img) {
  std::vector<double> g(img.pixel_count());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * img.width() + x;
      if (img.channels() == 1) {
        g[i] = img.at(x, y);
      } else {
        g[i] = 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
      }
    }
  }
  return g;
}

}  // namespace dendroweb
