#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dendroweb/pipeline.hpp"

namespace dendroweb::cli {

enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kInput = 3,      // unreadable file or malformed document
  kPith = 4,
  kBackend = 5,
  kDimension = 6,
  kCrossing = 7,
};

/// Maps the exception in flight to an exit code and prints its message.
int report_current_exception(std::ostream& err);

struct DetectJob {
  std::filesystem::path image;
  std::optional<std::filesystem::path> mask;
  std::optional<Pith> pith;
  std::optional<std::filesystem::path> pith_file;
  std::filesystem::path output;
  std::optional<std::filesystem::path> overlay;
  std::optional<std::filesystem::path> pmap;
};

struct DetectOptions {
  PipelineConfig config;
  std::string backend = "neural";
  std::optional<std::filesystem::path> model;
  std::optional<std::filesystem::path> debug_dir;
  std::vector<DetectJob> jobs;
};

struct EvalJob {
  std::string name;
  std::filesystem::path pred;
  std::filesystem::path gt;
  std::optional<std::filesystem::path> mask;
};

struct EvalOptions {
  std::vector<EvalJob> jobs;
  std::optional<std::filesystem::path> csv;
  std::optional<std::filesystem::path> json;
  int workers = 1;
};

struct EvalRow {
  std::string name;
  double mar = 0.0;
  double arand = 0.0;
};

struct OverlayOptions {
  std::filesystem::path image;
  std::filesystem::path rings;
  std::filesystem::path output;
};

/// Reads {"x","y"} or {"cx","cy"}, optionally nested under "pith".
Pith load_pith(const std::filesystem::path& path);

/// Manifest: JSON array of objects with "image", "output" and optional
/// "mask", "pith" ([x, y] or an object), "pith_file", "overlay", "pmap".
std::vector<DetectJob> load_detect_manifest(const std::filesystem::path& path);

/// Manifest: JSON array of objects with "pred", "gt" and optional "mask",
/// "name".
std::vector<EvalJob> load_eval_manifest(const std::filesystem::path& path);

int cmd_detect(const DetectOptions& opt, std::ostream& out, std::ostream& err);
EvalRow evaluate(const EvalJob& job);
int cmd_eval(const EvalOptions& opt, std::ostream& out, std::ostream& err);
int cmd_overlay(const OverlayOptions& opt, std::ostream& err);

/// Full command line, argv[0] included.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dendroweb::cli
