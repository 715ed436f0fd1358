#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

#include "dendroweb/errors.hpp"
#include "dendroweb/raster.hpp"

namespace dendroweb {

/// Maps between the original image frame and the working frame produced by
/// crop_to_disc followed by resize_pad.
///
/// forward(p) = (p - crop_offset + 0.5) * scale - 0.5 per axis, i.e. pixel
/// centers map to pixel centers. Padding sits right/bottom so it does not
/// shift coordinates; it is recorded so the working size is recoverable.
struct PreprocessTransform {
  int crop_offset_x = 0;
  int crop_offset_y = 0;
  int crop_width = 0;    // size of the cropped region (original size when uncropped)
  int crop_height = 0;
  double scale = 1.0;
  int resized_width = 0;  // crop size times scale, before padding
  int resized_height = 0;
  int pad_right = 0;
  int pad_bottom = 0;

  int output_width() const noexcept { return resized_width + pad_right; }
  int output_height() const noexcept { return resized_height + pad_bottom; }

  static PreprocessTransform identity(int width, int height) {
    return {0, 0, width, height, 1.0, width, height, 0, 0};
  }
};

enum class MapDirection { forward, inverse };

inline Point map_point(const PreprocessTransform& t, Point p, MapDirection dir) {
  if (!(t.scale > 0.0)) throw std::invalid_argument("map_point: transform scale must be positive");
  if (dir == MapDirection::forward) {
    if (t.scale == 1.0) return {p.x - t.crop_offset_x, p.y - t.crop_offset_y};
    return {(p.x - t.crop_offset_x + 0.5) * t.scale - 0.5,
            (p.y - t.crop_offset_y + 0.5) * t.scale - 0.5};
  }
  if (t.scale == 1.0) return {p.x + t.crop_offset_x, p.y + t.crop_offset_y};
  return {(p.x + 0.5) / t.scale - 0.5 + t.crop_offset_x,
          (p.y + 0.5) / t.scale - 0.5 + t.crop_offset_y};
}

inline std::vector<Point> map_coords(const PreprocessTransform& t, const std::vector<Point>& pts,
                                     MapDirection dir) {
  std::vector<Point> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back(map_point(t, p, dir));
  return out;
}

/// Composes a crop-only transform with a following resize transform.
inline PreprocessTransform compose(const PreprocessTransform& crop, const PreprocessTransform& resize) {
  if (crop.scale != 1.0 || crop.pad_right != 0 || crop.pad_bottom != 0) {
    throw std::invalid_argument("compose: first transform must be a pure crop");
  }
  PreprocessTransform t = resize;
  t.crop_offset_x = crop.crop_offset_x + resize.crop_offset_x;
  t.crop_offset_y = crop.crop_offset_y + resize.crop_offset_y;
  t.crop_width = crop.crop_width;
  t.crop_height = crop.crop_height;
  return t;
}

/// Sets every pixel outside the disc mask to white on all channels.
inline Image whiten_background(const Image& image, const BinaryMask& disc_mask) {
  if (image.width() != disc_mask.width() || image.height() != disc_mask.height()) {
    throw DimensionError("whiten_background: mask is " + std::to_string(disc_mask.width()) + "x" +
                         std::to_string(disc_mask.height()) + ", image is " +
                         std::to_string(image.width()) + "x" + std::to_string(image.height()));
  }
  Image out = image;
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      if (disc_mask.at(x, y)) continue;
      for (int c = 0; c < image.channels(); ++c) out.at(x, y, c) = 255;
    }
  }
  return out;
}

/// Extracts the window [x0, x0+w) x [y0, y0+h); pixels beyond `r` take `fill`.
template <typename T>
Raster<T> crop_window(const Raster<T>& r, int x0, int y0, int w, int h, T fill) {
  Raster<T> out(w, h, r.channels(), fill);
  for (int y = 0; y < h; ++y) {
    const int sy = y0 + y;
    if (sy < 0 || sy >= r.height()) continue;
    for (int x = 0; x < w; ++x) {
      const int sx = x0 + x;
      if (sx < 0 || sx >= r.width()) continue;
      for (int c = 0; c < r.channels(); ++c) out.at(x, y, c) = r.at(sx, sy, c);
    }
  }
  return out;
}

struct Box {
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;  // inclusive
  bool empty() const noexcept { return x1 < x0 || y1 < y0; }
};

inline Box foreground_bounds(const BinaryMask& mask) {
  Box b{mask.width(), mask.height(), -1, -1};
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.at(x, y)) continue;
      b.x0 = std::min(b.x0, x);
      b.y0 = std::min(b.y0, y);
      b.x1 = std::max(b.x1, x);
      b.y1 = std::max(b.y1, y);
    }
  }
  return b;
}

/// Crops to the mask's bounding box grown by `margin` on every side, padding
/// with white where the grown box leaves the original image.
inline std::pair<Image, PreprocessTransform> crop_to_disc(const Image& image,
                                                          const BinaryMask& disc_mask,
                                                          int margin = 50) {
  if (image.width() != disc_mask.width() || image.height() != disc_mask.height()) {
    throw DimensionError("crop_to_disc: mask and image dimensions differ");
  }
  if (margin < 0) throw std::invalid_argument("crop_to_disc: negative margin");
  const Box b = foreground_bounds(disc_mask);
  if (b.empty()) throw std::invalid_argument("crop_to_disc: disc mask is empty");

  PreprocessTransform t;
  t.crop_offset_x = b.x0 - margin;
  t.crop_offset_y = b.y0 - margin;
  t.crop_width = b.x1 - b.x0 + 1 + 2 * margin;
  t.crop_height = b.y1 - b.y0 + 1 + 2 * margin;
  t.scale = 1.0;
  t.resized_width = t.crop_width;
  t.resized_height = t.crop_height;
  Image out = crop_window<std::uint8_t>(image, t.crop_offset_x, t.crop_offset_y, t.crop_width,
                                        t.crop_height, 255);
  return {std::move(out), t};
}

namespace detail {

inline double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

inline double lanczos3(double x) {
  x = std::abs(x);
  return x < 3.0 ? sinc(x) * sinc(x / 3.0) : 0.0;
}

struct TapRow {
  int first = 0;
  std::vector<double> weights;
};

// Source taps for each destination index along one axis. Destination pixel
// centers map to src = (i + 0.5) / scale - 0.5; when shrinking, the kernel is
// stretched by 1/scale. Edge taps replicate the border sample.
inline std::vector<TapRow> lanczos_taps(int dst_len, double scale) {
  const double stretch = std::max(1.0, 1.0 / scale);
  const double support = 3.0 * stretch;
  std::vector<TapRow> rows(static_cast<std::size_t>(dst_len));
  for (int i = 0; i < dst_len; ++i) {
    const double center = (i + 0.5) / scale - 0.5;
    const int lo = static_cast<int>(std::ceil(center - support));
    const int hi = static_cast<int>(std::floor(center + support));
    TapRow& row = rows[static_cast<std::size_t>(i)];
    row.first = lo;
    double total = 0.0;
    for (int j = lo; j <= hi; ++j) {
      const double w = lanczos3((j - center) / stretch);
      row.weights.push_back(w);
      total += w;
    }
    if (total != 0.0) {
      for (double& w : row.weights) w /= total;
    }
  }
  return rows;
}

}  // namespace detail

/// Separable 3-lobed Lanczos resampling to (dst_w, dst_h) at the given scale.
template <typename T>
Raster<T> resample_lanczos(const Raster<T>& src, int dst_w, int dst_h, double scale) {
  const auto xtaps = detail::lanczos_taps(dst_w, scale);
  const auto ytaps = detail::lanczos_taps(dst_h, scale);
  const int nc = src.channels();
  const int sw = src.width();
  const int sh = src.height();

  std::vector<double> horiz(static_cast<std::size_t>(dst_w) * sh * nc);
  for (int y = 0; y < sh; ++y) {
    for (int x = 0; x < dst_w; ++x) {
      const auto& tr = xtaps[static_cast<std::size_t>(x)];
      for (int c = 0; c < nc; ++c) {
        double acc = 0.0;
        for (std::size_t k = 0; k < tr.weights.size(); ++k) {
          const int sx = std::clamp(tr.first + static_cast<int>(k), 0, sw - 1);
          acc += tr.weights[k] * static_cast<double>(src.at(sx, y, c));
        }
        horiz[(static_cast<std::size_t>(y) * dst_w + x) * nc + c] = acc;
      }
    }
  }

  Raster<T> out(dst_w, dst_h, nc);
  for (int y = 0; y < dst_h; ++y) {
    const auto& tr = ytaps[static_cast<std::size_t>(y)];
    for (int x = 0; x < dst_w; ++x) {
      for (int c = 0; c < nc; ++c) {
        double acc = 0.0;
        for (std::size_t k = 0; k < tr.weights.size(); ++k) {
          const int sy = std::clamp(tr.first + static_cast<int>(k), 0, sh - 1);
          acc += tr.weights[k] * horiz[(static_cast<std::size_t>(sy) * dst_w + x) * nc + c];
        }
        out.at(x, y, c) = detail::store_sample<T>(acc);
      }
    }
  }
  return out;
}

/// Scale factor and pre-pad size for fitting (w, h) into a target square.
inline PreprocessTransform fit_transform(int width, int height, int target) {
  if (target <= 0) throw std::invalid_argument("resize_pad: target must be positive");
  PreprocessTransform t = PreprocessTransform::identity(width, height);
  const int longest = std::max(width, height);
  t.scale = static_cast<double>(target) / longest;
  auto scaled = [&](int len) {
    if (len == longest) return target;
    return std::clamp(static_cast<int>(std::lround(len * t.scale)), 1, target);
  };
  t.resized_width = scaled(width);
  t.resized_height = scaled(height);
  t.pad_right = target - t.resized_width;
  t.pad_bottom = target - t.resized_height;
  return t;
}

/// Resamples `r` per the resize/pad stages of `t` (no cropping).
template <typename T>
Raster<T> apply_resize(const Raster<T>& r, const PreprocessTransform& t, T pad_fill) {
  Raster<T> resized = (t.scale == 1.0 && t.resized_width == r.width() &&
                       t.resized_height == r.height())
                          ? r
                          : resample_lanczos(r, t.resized_width, t.resized_height, t.scale);
  if (t.pad_right == 0 && t.pad_bottom == 0) return resized;
  return crop_window(resized, 0, 0, t.output_width(), t.output_height(), pad_fill);
}

/// Scales the longer side to `target` with Lanczos-3 and pads the shorter
/// side with white (right/bottom) to a target x target square.
inline std::pair<Image, PreprocessTransform> resize_pad(const Image& image, int target = 1504) {
  if (image.empty()) throw std::invalid_argument("resize_pad: empty image");
  PreprocessTransform t = fit_transform(image.width(), image.height(), target);
  return {apply_resize<std::uint8_t>(image, t, 255), t};
}

/// Brings any raster from the original frame into the working frame of `t`.
template <typename T>
Raster<T> apply_transform(const Raster<T>& r, const PreprocessTransform& t, T fill) {
  Raster<T> cropped = crop_window(r, t.crop_offset_x, t.crop_offset_y, t.crop_width,
                                  t.crop_height, fill);
  return apply_resize(cropped, t, fill);
}

/// Working-frame copy of a probability map, clamped back into [0,1] after
/// resampling overshoot.
inline ProbabilityMap transform_probability_map(const ProbabilityMap& map,
                                                const PreprocessTransform& t) {
  ProbabilityMap out = apply_transform<float>(map, t, 0.0f);
  for (float& v : out.values()) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

}  // namespace dendroweb
