#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dendroweb/backend.hpp"
#include "dendroweb/contour.hpp"
#include "dendroweb/curve_geometry.hpp"
#include "dendroweb/errors.hpp"
#include "dendroweb/metrics.hpp"
#include "dendroweb/preprocess.hpp"
#include "dendroweb/raster.hpp"
#include "dendroweb/spiderweb.hpp"

namespace dendroweb {

struct PreprocessOptions {
  int margin = 50;
  int target = 1504;
};

struct PipelineConfig {
  DetectorConfig detector;
  SpiderwebConfig spiderweb;
  PreprocessOptions preprocess;
  int jobs = 1;  // tile workers; never changes results

  void validate() const {
    detector.validate();
    if (preprocess.margin < 0) throw std::invalid_argument("margin must be >= 0");
    if (preprocess.target < 32) throw std::invalid_argument("target must be >= 32");
    if (detector.tile_size > preprocess.target) {
      throw std::invalid_argument("tile_size must not exceed target");
    }
    if (!(spiderweb.smooth_thr > 0.0)) throw std::invalid_argument("smooth_thr must be positive");
    if (!(spiderweb.min_coverage > 0.0 && spiderweb.min_coverage <= 1.0)) {
      throw std::invalid_argument("min_coverage must lie in (0,1]");
    }
    if (jobs < 1) throw std::invalid_argument("jobs must be >= 1");
  }
};

/// A disc image brought into the square working frame.
struct WorkingDisc {
  Image image;
  BinaryMask mask;  // working-frame disc mask (all ones without an input mask)
  PreprocessTransform transform;
  Pith pith;  // working-frame pith
  int original_width = 0;
  int original_height = 0;
};

/// Whitens the background, crops to the disc and resizes to the working
/// square. Without a mask the image is taken as already whitened and only
/// resized. Throws PithError when the pith is outside the image or mask.
inline WorkingDisc prepare_disc(const Image& image, const std::optional<BinaryMask>& disc_mask,
                                const Pith& pith, const PreprocessOptions& opt = {}) {
  if (!pith_inside(image, pith)) {
    throw PithError("pith (" + std::to_string(pith.cx) + ", " + std::to_string(pith.cy) +
                    ") lies outside the " + std::to_string(image.width()) + "x" +
                    std::to_string(image.height()) + " image");
  }
  WorkingDisc wd;
  wd.original_width = image.width();
  wd.original_height = image.height();
  if (disc_mask) {
    if (disc_mask->width() != image.width() || disc_mask->height() != image.height()) {
      throw DimensionError("mask is " + std::to_string(disc_mask->width()) + "x" +
                           std::to_string(disc_mask->height()) + ", image is " +
                           std::to_string(image.width()) + "x" + std::to_string(image.height()));
    }
    const int px = static_cast<int>(std::lround(pith.cx));
    const int py = static_cast<int>(std::lround(pith.cy));
    if (!disc_mask->contains(px, py) || !disc_mask->at(px, py)) {
      throw PithError("pith (" + std::to_string(pith.cx) + ", " + std::to_string(pith.cy) +
                      ") lies outside the disc mask");
    }
    auto [cropped, crop_t] = crop_to_disc(whiten_background(image, *disc_mask), *disc_mask, opt.margin);
    auto [resized, resize_t] = resize_pad(cropped, opt.target);
    wd.image = std::move(resized);
    wd.transform = compose(crop_t, resize_t);
    wd.mask = apply_transform<std::uint8_t>(*disc_mask, wd.transform, 0);
  } else {
    auto [resized, resize_t] = resize_pad(image, opt.target);
    wd.image = std::move(resized);
    wd.transform = resize_t;
    wd.mask = BinaryMask(wd.image.width(), wd.image.height(), 1, 0);
    for (int y = 0; y < wd.transform.resized_height; ++y) {
      for (int x = 0; x < wd.transform.resized_width; ++x) wd.mask.at(x, y) = 1;
    }
  }
  for (auto& v : wd.mask.values()) v = v ? 1 : 0;
  const Point wp = map_point(wd.transform, pith.point(), MapDirection::forward);
  wd.pith = {wp.x, wp.y};
  return wd;
}

/// Every intermediate of one detection run, working frame unless noted.
struct Detection {
  ProbabilityMap probability;
  BinaryMask binary;
  BinaryMask skeleton;
  CurveSet curves;
  CurveSet filtered;
  std::vector<Chain> chains;
  RingSet rings;
  std::vector<Polygon> polygons;  // original frame, innermost first
};

/// Ring vertices mapped back to the original frame and clamped to its bounds.
inline std::vector<Polygon> original_polygons(const RingSet& rings, const WorkingDisc& wd) {
  std::vector<Polygon> out;
  for (std::size_t i = 0; i < rings.size(); ++i) {
    Polygon poly = map_coords(wd.transform, rings.vertices(i), MapDirection::inverse);
    for (auto& p : poly) {
      p.x = std::clamp(p.x, 0.0, static_cast<double>(wd.original_width));
      p.y = std::clamp(p.y, 0.0, static_cast<double>(wd.original_height));
    }
    out.push_back(std::move(poly));
  }
  return out;
}

/// Rings from an already computed working-frame probability map.
inline Detection rings_from_probability(ProbabilityMap probability, const WorkingDisc& wd,
                                        const PipelineConfig& cfg) {
  Detection d;
  d.probability = std::move(probability);
  d.binary = binarize(d.probability, cfg.detector.threshold);
  d.skeleton = skeletonize(d.binary);
  d.curves = trace_curves(d.skeleton);
  d.filtered = filter_by_normal(d.curves, wd.pith, cfg.detector.alpha);
  d.chains = sample_chains(d.filtered, wd.pith, cfg.detector.num_rays);
  d.rings = connect_chains(d.chains, wd.pith, cfg.detector.num_rays, cfg.spiderweb);
  d.polygons = original_polygons(d.rings, wd);
  return d;
}

inline Detection detect_rings(const WorkingDisc& wd, const PipelineConfig& cfg, const Backend& backend) {
  cfg.validate();
  return rings_from_probability(detect_probability(wd.image, wd.pith, cfg.detector, backend, cfg.jobs),
                                wd, cfg);
}

/// Reproducibility block stored with a result. Holds every value that can
/// change the output and nothing that cannot.
inline nlohmann::ordered_json config_metadata(const PipelineConfig& cfg, const std::string& backend,
                                              const Pith& pith, const WorkingDisc& wd) {
  nlohmann::ordered_json j;
  j["pith"] = {{"x", pith.cx}, {"y", pith.cy}};
  j["backend"] = backend;
  j["margin"] = cfg.preprocess.margin;
  j["target"] = cfg.preprocess.target;
  j["tile_size"] = cfg.detector.tile_size;
  j["rotations"] = cfg.detector.total_rotations;
  j["threshold"] = cfg.detector.threshold;
  j["alpha"] = cfg.detector.alpha;
  j["rays"] = cfg.detector.num_rays;
  j["smooth_thr"] = cfg.spiderweb.smooth_thr;
  j["min_coverage"] = cfg.spiderweb.min_coverage;
  const auto& t = wd.transform;
  j["working_frame"] = {{"crop_offset", {t.crop_offset_x, t.crop_offset_y}},
                        {"crop_size", {t.crop_width, t.crop_height}},
                        {"scale", t.scale},
                        {"size", {t.output_width(), t.output_height()}}};
  return j;
}

}  // namespace dendroweb
