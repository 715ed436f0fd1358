#include "commands.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "dendroweb/annotation.hpp"
#include "dendroweb/io.hpp"
#include "dendroweb/neural_backend.hpp"
#include "dendroweb/overlay.hpp"
#include "dendroweb/parallel.hpp"

namespace dendroweb::cli {
namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

int classify(std::exception_ptr ep, std::string& message) {
  try {
    std::rethrow_exception(ep);
  } catch (const UsageError& e) {
    message = e.what();
    return kUsage;
  } catch (const IoError& e) {
    message = e.what();
    return kInput;
  } catch (const SchemaError& e) {
    message = e.what();
    return kInput;
  } catch (const PithError& e) {
    message = e.what();
    return kPith;
  } catch (const BackendError& e) {
    message = e.what();
    return kBackend;
  } catch (const DimensionError& e) {
    message = e.what();
    return kDimension;
  } catch (const CrossingError& e) {
    message = e.what();
    return kCrossing;
  } catch (const std::exception& e) {
    message = std::string("internal error: ") + e.what();
    return kInternal;
  } catch (...) {
    message = "internal error";
    return kInternal;
  }
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(path.string() + ": invalid JSON: " + e.what());
  }
}

Pith pith_from_json(const nlohmann::json& j, const std::string& where) {
  if (j.is_array()) {
    if (j.size() != 2 || !j[0].is_number() || !j[1].is_number()) throw SchemaError(where + ": expected [x, y]");
    return {j[0].get<double>(), j[1].get<double>()};
  }
  if (!j.is_object()) throw SchemaError(where + ": expected a pith object");
  if (j.contains("pith")) return pith_from_json(j.at("pith"), where + ".pith");
  for (const auto& [kx, ky] : {std::pair{"x", "y"}, std::pair{"cx", "cy"}}) {
    if (j.contains(kx) && j.contains(ky)) {
      if (!j.at(kx).is_number() || !j.at(ky).is_number()) throw SchemaError(where + ": coordinates must be numbers");
      return {j.at(kx).get<double>(), j.at(ky).get<double>()};
    }
  }
  throw SchemaError(where + ": missing field 'x'/'y'");
}

std::string text_field(const nlohmann::json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw SchemaError(where + ": missing field '" + key + "'");
  if (!obj.at(key).is_string()) throw SchemaError(where + "." + key + ": expected a string");
  return obj.at(key).get<std::string>();
}

std::optional<std::filesystem::path> optional_path(const nlohmann::json& obj, const char* key,
                                                   const std::string& where, const std::filesystem::path& base) {
  if (!obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
  return base / text_field(obj, key, where);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

struct JobResult {
  int code = kOk;
  std::string message;
};

std::unique_ptr<Backend> fixed_backend(const DetectOptions& opt) {
  if (opt.backend == "gradient") return gradient_fallback_backend();
  if (opt.backend == "neural") return neural_backend(*opt.model, opt.config.detector.tile_size);
  return nullptr;
}

std::string backend_label(const DetectOptions& opt) {
  if (opt.backend == "neural") return "neural:" + opt.model->filename().string();
  return opt.backend;
}

std::string run_detect_job(const DetectOptions& opt, const PipelineConfig& cfg, const DetectJob& job,
                           const Backend* shared) {
  const Image image = read_image(job.image);
  std::optional<BinaryMask> mask;
  if (job.mask) mask = read_mask(*job.mask);
  const Pith pith = job.pith ? *job.pith : load_pith(*job.pith_file);
  const WorkingDisc wd = prepare_disc(image, mask, pith, cfg.preprocess);

  std::unique_ptr<Backend> own;
  const Backend* backend = shared;
  if (opt.backend == "pmap") {
    const ProbabilityMap pm = read_pmap(*job.pmap);
    if (pm.width() != image.width() || pm.height() != image.height()) {
      throw DimensionError(job.pmap->string() + ": map is " + std::to_string(pm.width()) + "x" +
                           std::to_string(pm.height()) + ", image is " + std::to_string(image.width()) + "x" +
                           std::to_string(image.height()));
    }
    own = std::make_unique<PmapBackend>(transform_probability_map(pm, wd.transform));
    backend = own.get();
  }

  const Detection det = detect_rings(wd, cfg, *backend);
  save_rings(det.polygons, job.image.filename().string(), image.width(), image.height(), job.output,
             config_metadata(cfg, backend_label(opt), pith, wd));
  if (job.overlay) write_image(*job.overlay, render_overlay(image, det.polygons));
  if (opt.debug_dir) {
    std::filesystem::create_directories(*opt.debug_dir);
    const std::string stem = job.image.stem().string();
    write_pmap(*opt.debug_dir / (stem + "_probability.pmap"), det.probability);
    write_mask(*opt.debug_dir / (stem + "_binary.png"), det.binary);
    write_mask(*opt.debug_dir / (stem + "_skeleton.png"), det.skeleton);
  }
  return job.output.string() + ": " + std::to_string(det.polygons.size()) + " rings\n";
}

void validate_detect(const DetectOptions& opt) {
  try {
    opt.config.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (opt.jobs.empty()) throw UsageError("detect: no input image");
  if (opt.backend == "neural" && !opt.model) throw UsageError("detect: --backend neural requires --model");
  for (const auto& job : opt.jobs) {
    if (!job.pith && !job.pith_file) throw UsageError(job.image.string() + ": no pith given");
    if (job.pith && job.pith_file) throw UsageError(job.image.string() + ": give the pith by flags or file, not both");
    if (job.output.empty()) throw UsageError(job.image.string() + ": no output path");
    if (opt.backend == "pmap" && !job.pmap) throw UsageError(job.image.string() + ": --backend pmap requires --pmap");
  }
}

}  // namespace

int report_current_exception(std::ostream& err) {
  std::string msg;
  const int code = classify(std::current_exception(), msg);
  err << "error: " << msg << '\n';
  return code;
}

Pith load_pith(const std::filesystem::path& path) { return pith_from_json(read_json(path), path.string()); }

std::vector<DetectJob> load_detect_manifest(const std::filesystem::path& path) {
  const nlohmann::json j = read_json(path);
  if (!j.is_array()) throw SchemaError(path.string() + ": expected an array of jobs");
  const auto base = path.parent_path();
  std::vector<DetectJob> jobs;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string at = path.string() + ": [" + std::to_string(i) + "]";
    const auto& o = j[i];
    if (!o.is_object()) throw SchemaError(at + ": expected an object");
    DetectJob job;
    job.image = base / text_field(o, "image", at);
    job.output = base / text_field(o, "output", at);
    job.mask = optional_path(o, "mask", at, base);
    job.pith_file = optional_path(o, "pith_file", at, base);
    job.overlay = optional_path(o, "overlay", at, base);
    job.pmap = optional_path(o, "pmap", at, base);
    if (o.contains("pith")) job.pith = pith_from_json(o.at("pith"), at + ".pith");
    jobs.push_back(std::move(job));
  }
  return jobs;
}

std::vector<EvalJob> load_eval_manifest(const std::filesystem::path& path) {
  const nlohmann::json j = read_json(path);
  if (!j.is_array()) throw SchemaError(path.string() + ": expected an array of entries");
  const auto base = path.parent_path();
  std::vector<EvalJob> jobs;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string at = path.string() + ": [" + std::to_string(i) + "]";
    const auto& o = j[i];
    if (!o.is_object()) throw SchemaError(at + ": expected an object");
    EvalJob job;
    job.pred = base / text_field(o, "pred", at);
    job.gt = base / text_field(o, "gt", at);
    job.mask = optional_path(o, "mask", at, base);
    job.name = o.contains("name") ? text_field(o, "name", at) : job.gt.stem().string();
    jobs.push_back(std::move(job));
  }
  return jobs;
}

int cmd_detect(const DetectOptions& opt, std::ostream& out, std::ostream& err) {
  std::unique_ptr<Backend> shared;
  try {
    validate_detect(opt);
    shared = fixed_backend(opt);
  } catch (...) {
    return report_current_exception(err);
  }
  // Images run concurrently in batch mode; a single image spends the
  // workers on tiles instead.
  const bool batch = opt.jobs.size() > 1;
  PipelineConfig cfg = opt.config;
  if (batch) cfg.jobs = 1;
  std::vector<JobResult> results(opt.jobs.size());
  parallel_for(opt.jobs.size(), batch ? opt.config.jobs : 1, [&](std::size_t i) {
    try {
      results[i].message = run_detect_job(opt, cfg, opt.jobs[i], shared.get());
    } catch (...) {
      std::string msg;
      results[i].code = classify(std::current_exception(), msg);
      results[i].message = "error: " + msg + '\n';
    }
  });
  int code = kOk;
  for (const auto& r : results) {
    (r.code == kOk ? out : err) << r.message;
    if (code == kOk) code = r.code;
  }
  return code;
}

EvalRow evaluate(const EvalJob& job) {
  const AnnotationDoc pred = load_annotation(job.pred);
  const AnnotationDoc gt = load_annotation(job.gt);
  if (pred.width != gt.width || pred.height != gt.height) {
    throw DimensionError(job.pred.string() + " is " + std::to_string(pred.width) + "x" + std::to_string(pred.height) +
                         " but " + job.gt.string() + " is " + std::to_string(gt.width) + "x" +
                         std::to_string(gt.height));
  }
  BinaryMask mask(gt.width, gt.height, 1, 1);
  if (job.mask) {
    mask = read_mask(*job.mask);
    if (mask.width() != gt.width || mask.height() != gt.height) {
      throw DimensionError(job.mask->string() + " is " + std::to_string(mask.width()) + "x" +
                           std::to_string(mask.height()) + " but " + job.gt.string() + " is " +
                           std::to_string(gt.width) + "x" + std::to_string(gt.height));
    }
  }
  const auto pred_polys = annotation_polygons(pred);
  const auto gt_polys = annotation_polygons(gt);
  require_noncrossing(pred_polys, job.pred.string());
  require_noncrossing(gt_polys, job.gt.string());
  const LabelMap p = rasterize_regions(pred_polys, mask);
  const LabelMap g = rasterize_regions(gt_polys, mask);
  return {job.name, mean_average_recall(p, g), adapted_rand_error(p, g)};
}

int cmd_eval(const EvalOptions& opt, std::ostream& out, std::ostream& err) {
  if (opt.jobs.empty()) {
    err << "error: eval: nothing to evaluate\n";
    return kUsage;
  }
  std::vector<EvalRow> rows(opt.jobs.size());
  std::vector<JobResult> results(opt.jobs.size());
  parallel_for(opt.jobs.size(), opt.workers, [&](std::size_t i) {
    try {
      rows[i] = evaluate(opt.jobs[i]);
    } catch (...) {
      results[i].code = classify(std::current_exception(), results[i].message);
    }
  });
  for (const auto& r : results) {
    if (r.code != kOk) {
      err << "error: " << r.message << '\n';
      return r.code;
    }
  }
  double mar = 0.0, arand = 0.0;
  for (const auto& r : rows) {
    mar += r.mar;
    arand += r.arand;
  }
  mar /= rows.size();
  arand /= rows.size();

  std::ostringstream csv;
  csv << "image,mAR,ARAND\n";
  for (const auto& r : rows) csv << r.name << ',' << fmt(r.mar) << ',' << fmt(r.arand) << '\n';
  csv << "mean," << fmt(mar) << ',' << fmt(arand) << '\n';
  out << csv.str();
  try {
    if (opt.csv) {
      std::ofstream f(*opt.csv);
      if (!(f << csv.str())) throw IoError("cannot write " + opt.csv->string());
    }
    if (opt.json) {
      nlohmann::ordered_json j;
      j["images"] = nlohmann::ordered_json::array();
      for (const auto& r : rows) j["images"].push_back({{"name", r.name}, {"mAR", r.mar}, {"ARAND", r.arand}});
      j["mean"] = {{"mAR", mar}, {"ARAND", arand}};
      std::ofstream f(*opt.json);
      if (!(f << j.dump(2) << '\n')) throw IoError("cannot write " + opt.json->string());
    }
  } catch (...) {
    return report_current_exception(err);
  }
  return kOk;
}

int cmd_overlay(const OverlayOptions& opt, std::ostream& err) {
  try {
    const Image image = read_image(opt.image);
    const AnnotationDoc doc = load_annotation(opt.rings);
    if (doc.width != image.width() || doc.height != image.height()) {
      throw DimensionError(opt.rings.string() + " describes a " + std::to_string(doc.width) + "x" +
                           std::to_string(doc.height) + " image, " + opt.image.string() + " is " +
                           std::to_string(image.width()) + "x" + std::to_string(image.height()));
    }
    write_image(opt.output, render_overlay(image, annotation_polygons(doc)));
  } catch (...) {
    return report_current_exception(err);
  }
  return kOk;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tree-ring delineation for wood cross-section images", "dendroweb"};
  app.require_subcommand(1);

  DetectOptions det;
  DetectJob single;
  double pith_x = 0.0, pith_y = 0.0;
  std::string pith_file, mask, overlay, pmap, model, debug_dir, batch, output;
  auto* d = app.add_subcommand("detect", "Delineate rings in one image or a batch manifest");
  d->add_option("image", single.image, "Disc image (PNG/JPEG)");
  d->add_option("--mask", mask, "Disc mask PNG, white = disc");
  auto* px = d->add_option("--pith-x", pith_x, "Pith column in original pixels");
  auto* py = d->add_option("--pith-y", pith_y, "Pith row in original pixels");
  px->needs(py);
  py->needs(px);
  d->add_option("--pith-file", pith_file, "JSON file holding the pith");
  d->add_option("--output,-o", output, "Result JSON path");
  d->add_option("--overlay", overlay, "Write a PNG with the rings drawn");
  d->add_option("--batch", batch, "JSON manifest of images to process");
  d->add_option("--backend", det.backend, "Probability backend")
      ->check(CLI::IsMember({"pmap", "neural", "gradient"}))
      ->capture_default_str();
  d->add_option("--model", model, "ONNX model for the neural backend");
  d->add_option("--pmap", pmap, "Precomputed probability map in the original frame");
  d->add_option("--margin", det.config.preprocess.margin, "Crop margin around the disc")->capture_default_str();
  d->add_option("--target", det.config.preprocess.target, "Working image side length")->capture_default_str();
  d->add_option("--tile-size", det.config.detector.tile_size, "Tile side, 0 for whole image")->capture_default_str();
  d->add_option("--rotations", det.config.detector.total_rotations, "Test-time rotations")->capture_default_str();
  d->add_option("--threshold", det.config.detector.threshold, "Probability threshold")->capture_default_str();
  d->add_option("--alpha", det.config.detector.alpha, "Normal filter angle, degrees")->capture_default_str();
  d->add_option("--rays", det.config.detector.num_rays, "Number of pith rays")->capture_default_str();
  d->add_option("--smooth-thr", det.config.spiderweb.smooth_thr, "Max radial change per ray across a gap")
      ->capture_default_str();
  d->add_option("--min-coverage", det.config.spiderweb.min_coverage, "Ray coverage needed to close a ring")
      ->capture_default_str();
  d->add_option("--jobs,-j", det.config.jobs, "Worker threads")->capture_default_str();
  d->add_option("--debug-dir", debug_dir, "Dump probability map, binary mask and skeleton here");

  EvalOptions ev;
  EvalJob ev_single;
  std::string ev_mask, ev_csv, ev_json, ev_batch;
  auto* e = app.add_subcommand("eval", "Score predicted rings against ground truth");
  e->add_option("--pred", ev_single.pred, "Predicted result JSON");
  e->add_option("--gt", ev_single.gt, "Ground-truth annotation JSON");
  e->add_option("--mask", ev_mask, "Disc mask PNG");
  e->add_option("--batch", ev_batch, "JSON manifest of pred/gt pairs");
  e->add_option("--csv", ev_csv, "Write the table as CSV");
  e->add_option("--json", ev_json, "Write the table as JSON");
  e->add_option("--jobs,-j", ev.workers, "Worker threads")->capture_default_str();

  OverlayOptions ov;
  auto* o = app.add_subcommand("overlay", "Draw rings from a result JSON onto an image");
  o->add_option("--image", ov.image, "Base image")->required();
  o->add_option("--rings", ov.rings, "Result or annotation JSON")->required();
  o->add_option("--output,-o", ov.output, "Output PNG")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (d->parsed()) {
      if (!batch.empty()) {
        if (!single.image.empty() || !output.empty()) {
          throw UsageError("detect: --batch replaces the image argument and --output");
        }
        det.jobs = load_detect_manifest(batch);
      } else {
        if (single.image.empty()) throw UsageError("detect: no input image");
        if (output.empty()) throw UsageError("detect: --output is required");
        single.output = output;
        det.jobs.push_back(single);
      }
      for (auto& job : det.jobs) {
        if (!mask.empty() && !job.mask) job.mask = mask;
        if (!overlay.empty() && !job.overlay) job.overlay = overlay;
        if (!pmap.empty() && !job.pmap) job.pmap = pmap;
        if (px->count() && !job.pith && !job.pith_file) job.pith = Pith{pith_x, pith_y};
        if (!pith_file.empty() && !job.pith && !job.pith_file) job.pith_file = pith_file;
      }
      if (!model.empty()) det.model = model;
      if (!debug_dir.empty()) det.debug_dir = debug_dir;
      return cmd_detect(det, out, err);
    }
    if (e->parsed()) {
      if (!ev_batch.empty()) {
        ev.jobs = load_eval_manifest(ev_batch);
      } else {
        if (ev_single.pred.empty() || ev_single.gt.empty()) throw UsageError("eval: --pred and --gt are required");
        if (!ev_mask.empty()) ev_single.mask = ev_mask;
        ev_single.name = ev_single.gt.stem().string();
        ev.jobs.push_back(ev_single);
      }
      if (ev.workers < 1) throw UsageError("eval: --jobs must be >= 1");
      if (!ev_csv.empty()) ev.csv = ev_csv;
      if (!ev_json.empty()) ev.json = ev_json;
      return cmd_eval(ev, out, err);
    }
    return cmd_overlay(ov, err);
  } catch (...) {
    return report_current_exception(err);
  }
}

}  // namespace dendroweb::cli
