#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dendroweb/errors.hpp"
#include "dendroweb/metrics.hpp"
#include "dendroweb/raster.hpp"

namespace dendroweb {

// Labelme-compatible documents: {"shapes": [{"label", "points", "shape_type",
// ...}], "imagePath", "imageWidth", "imageHeight", ...}. Polygons are closed
// rings; "linestrip" and "line" shapes are open polylines.

struct Polyline {
  std::string label;
  std::vector<Point> points;
  bool closed = true;
};

struct AnnotationDoc {
  std::string image_name;
  int width = 0;
  int height = 0;
  std::vector<Polyline> polylines;
  nlohmann::ordered_json metadata;  // written under "dendroweb" when not null
};

namespace detail {

inline const nlohmann::json& require_field(const nlohmann::json& obj, const std::string& key,
                                           const std::string& path) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw SchemaError(path.empty() ? "missing field '" + key + "'"
                                   : path + ": missing field '" + key + "'");
  }
  return obj.at(key);
}

inline double round3(double v) { return std::round(v * 1000.0) / 1000.0; }

}  // namespace detail

inline AnnotationDoc parse_annotation(const nlohmann::json& j, const std::string& source = "annotation") {
  AnnotationDoc doc;
  auto fail = [&](const std::string& what) { throw SchemaError(source + ": " + what); };
  try {
    const auto& name = detail::require_field(j, "imagePath", "");
    const auto& w = detail::require_field(j, "imageWidth", "");
    const auto& h = detail::require_field(j, "imageHeight", "");
    if (!name.is_string()) fail("imagePath: expected a string");
    if (!w.is_number_integer() || w.get<int>() <= 0) fail("imageWidth: expected a positive integer");
    if (!h.is_number_integer() || h.get<int>() <= 0) fail("imageHeight: expected a positive integer");
    doc.image_name = name.get<std::string>();
    doc.width = w.get<int>();
    doc.height = h.get<int>();

    const auto& shapes = detail::require_field(j, "shapes", "");
    if (!shapes.is_array()) fail("shapes: expected an array");
    for (std::size_t s = 0; s < shapes.size(); ++s) {
      const std::string at = "shapes[" + std::to_string(s) + "]";
      const auto& shape = shapes[s];
      const auto& label = detail::require_field(shape, "label", at);
      const auto& type = detail::require_field(shape, "shape_type", at);
      const auto& points = detail::require_field(shape, "points", at);
      if (!label.is_string()) fail(at + ".label: expected a string");
      if (!type.is_string()) fail(at + ".shape_type: expected a string");
      if (!points.is_array()) fail(at + ".points: expected an array");
      const std::string kind = type.get<std::string>();
      Polyline line;
      line.label = label.get<std::string>();
      if (kind == "polygon") {
        line.closed = true;
      } else if (kind == "linestrip" || kind == "line") {
        line.closed = false;
      } else {
        continue;  // points, rectangles and circles carry no ring
      }
      for (std::size_t p = 0; p < points.size(); ++p) {
        const std::string pat = at + ".points[" + std::to_string(p) + "]";
        const auto& pt = points[p];
        if (!pt.is_array() || pt.size() != 2 || !pt[0].is_number() || !pt[1].is_number()) {
          fail(pat + ": expected [x, y]");
        }
        const Point q{pt[0].get<double>(), pt[1].get<double>()};
        if (q.x < 0.0 || q.y < 0.0 || q.x > doc.width || q.y > doc.height) {
          fail(pat + ": point (" + std::to_string(q.x) + ", " + std::to_string(q.y) +
               ") outside the " + std::to_string(doc.width) + "x" + std::to_string(doc.height) +
               " image");
        }
        line.points.push_back(q);
      }
      if (line.closed && line.points.size() < 3) fail(at + ".points: a closed ring needs at least 3 points");
      doc.polylines.push_back(std::move(line));
    }
    if (j.contains("dendroweb")) doc.metadata = j.at("dendroweb");
  } catch (const SchemaError& e) {
    const std::string msg = e.what();
    if (msg.rfind(source + ": ", 0) == 0) throw;
    throw SchemaError(source + ": " + msg);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(source + ": " + e.what());
  }
  return doc;
}

inline AnnotationDoc load_annotation(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(path.string() + ": invalid JSON: " + e.what());
  }
  return parse_annotation(j, path.string());
}

/// Serializes with coordinates rounded to three decimals.
inline nlohmann::ordered_json annotation_to_json(const AnnotationDoc& doc) {
  nlohmann::ordered_json j;
  j["version"] = "5.4.1";
  j["flags"] = nlohmann::ordered_json::object();
  j["shapes"] = nlohmann::ordered_json::array();
  for (const auto& line : doc.polylines) {
    nlohmann::ordered_json shape;
    shape["label"] = line.label;
    auto pts = nlohmann::ordered_json::array();
    for (const auto& p : line.points) pts.push_back({detail::round3(p.x), detail::round3(p.y)});
    shape["points"] = std::move(pts);
    shape["group_id"] = nullptr;
    shape["description"] = "";
    shape["shape_type"] = line.closed ? "polygon" : "linestrip";
    shape["flags"] = nlohmann::ordered_json::object();
    j["shapes"].push_back(std::move(shape));
  }
  j["imagePath"] = doc.image_name;
  j["imageData"] = nullptr;
  j["imageHeight"] = doc.height;
  j["imageWidth"] = doc.width;
  if (!doc.metadata.is_null()) j["dendroweb"] = doc.metadata;
  return j;
}

inline void save_annotation(const AnnotationDoc& doc, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << annotation_to_json(doc).dump(2) << '\n';
  if (!out) throw IoError("short write to " + path.string());
}

/// Ring polygons as a document with shapes "ring_1" (innermost) onwards.
inline AnnotationDoc rings_to_annotation(const std::vector<Polygon>& rings, std::string image_name,
                                         int width, int height) {
  AnnotationDoc doc;
  doc.image_name = std::move(image_name);
  doc.width = width;
  doc.height = height;
  for (std::size_t i = 0; i < rings.size(); ++i) {
    doc.polylines.push_back({"ring_" + std::to_string(i + 1), rings[i], true});
  }
  return doc;
}

inline void save_rings(const std::vector<Polygon>& rings, const std::string& image_name, int width,
                       int height, const std::filesystem::path& path,
                       nlohmann::ordered_json metadata = nullptr) {
  AnnotationDoc doc = rings_to_annotation(rings, image_name, width, height);
  doc.metadata = std::move(metadata);
  save_annotation(doc, path);
}

/// Every polyline of the document read as a closed ring.
inline std::vector<Polygon> annotation_polygons(const AnnotationDoc& doc) {
  std::vector<Polygon> out;
  for (const auto& line : doc.polylines) {
    if (line.points.size() >= 3) out.push_back(line.points);
  }
  return out;
}

}  // namespace dendroweb
