// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "commands.hpp"
#include "dendroweb/annotation.hpp"
#include "dendroweb/io.hpp"
#include "dendroweb/pipeline.hpp"
#include "support.hpp"

using namespace dendroweb;
using namespace testing_support;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(const std::string& name, const std::function<Outcome()>& check) {
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::cout << (o.pass ? "PASS " : "FAIL ") << name << (o.detail.empty() ? "" : " (" + o.detail + ")") << std::endl;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

int run_cli(const std::vector<std::string>& args, std::string* err_text = nullptr) {
  std::vector<const char*> argv{"dendroweb"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  if (err_text) *err_text = err.str();
  return code;
}

double mean_abs_in_disc(const ProbabilityMap& a, const ProbabilityMap& b, const Pith& c, double radius) {
  double sum = 0.0;
  int n = 0;
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      if (std::hypot(x - c.cx, y - c.cy) > radius) continue;
      sum += std::abs(a.at(x, y) - b.at(x, y));
      ++n;
    }
  }
  return sum / n;
}

bool skeleton_ok(const BinaryMask& mask, const BinaryMask& s) {
  for (std::size_t i = 0; i < s.values().size(); ++i) {
    if (s.values()[i] && !mask.values()[i]) return false;
  }
  for (int y = 0; y + 1 < s.height(); ++y) {
    for (int x = 0; x + 1 < s.width(); ++x) {
      if (s.at(x, y) && s.at(x + 1, y) && s.at(x, y + 1) && s.at(x + 1, y + 1)) return false;
    }
  }
  // Same number of 8-connected components as the mask.
  auto components = [](const BinaryMask& m) {
    BinaryMask seen(m.width(), m.height(), 1, 0);
    int count = 0;
    std::vector<Pixel> stack;
    for (int y = 0; y < m.height(); ++y) {
      for (int x = 0; x < m.width(); ++x) {
        if (!m.at(x, y) || seen.at(x, y)) continue;
        ++count;
        stack.push_back({x, y});
        seen.at(x, y) = 1;
        while (!stack.empty()) {
          const Pixel p = stack.back();
          stack.pop_back();
          for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
              const int nx = p.x + dx, ny = p.y + dy;
              if (m.contains(nx, ny) && m.at(nx, ny) && !seen.at(nx, ny)) {
                seen.at(nx, ny) = 1;
                stack.push_back({nx, ny});
              }
            }
          }
        }
      }
    }
    return count;
  };
  return components(s) == components(mask);
}

}  // namespace

int main() {
  TempDir dir("acceptance");
  const auto disc = make_synthetic_disc();
  write_image(dir / "disc.png", disc.image);
  write_mask(dir / "mask.png", disc.mask);
  write_pmap(dir / "disc.pmap", disc.pmap);
  save_rings(disc.truth, "disc.png", 512, 512, dir / "truth.json");

  const std::vector<std::string> detect{"detect", (dir / "disc.png").string(), "--mask",
                                        (dir / "mask.png").string(), "--pith-x", "256", "--pith-y", "256",
                                        "--backend", "pmap", "--pmap", (dir / "disc.pmap").string(),
                                        "--tile-size", "256", "--rotations", "5", "--alpha", "45",
                                        "--threshold", "0.2"};

  criterion("synthetic disc end to end: 8 rings, mAR >= 0.95, ARAND <= 0.05, under 30 s single-threaded",
            [&]() -> Outcome {
    auto args = detect;
    args.insert(args.end(), {"--jobs", "1", "-o", (dir / "rings.json").string()});
    const auto t0 = std::chrono::steady_clock::now();
    std::string err;
    const int code = run_cli(args, &err);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (code != 0) return {false, "detect exit " + std::to_string(code) + ": " + err};
    const auto rings = annotation_polygons(load_annotation(dir / "rings.json"));
    const auto pred = rasterize_regions(rings, disc.mask);
    const auto gt = rasterize_regions(disc.truth, disc.mask);
    const double mar = mean_average_recall(pred, gt);
    const double arand = adapted_rand_error(pred, gt);
    return {rings.size() == 8 && mar >= 0.95 && arand <= 0.05 && secs <= 30.0,
            std::to_string(rings.size()) + " rings, mAR " + num(mar) + ", ARAND " + num(arand) + ", " +
                num(secs) + " s"};
  });

  criterion("determinism: repeated detect runs with --jobs 1, 1, 2, 4 give byte-identical JSON", [&]() -> Outcome {
    std::string reference;
    int run = 0;
    for (const char* jobs : {"1", "1", "2", "4"}) {
      auto args = detect;
      const auto out = dir / ("det" + std::to_string(run++) + ".json");
      args.insert(args.end(), {"--jobs", jobs, "-o", out.string()});
      if (run_cli(args) != 0) return {false, std::string("detect failed with --jobs ") + jobs};
      const std::string bytes = slurp(out);
      if (reference.empty()) reference = bytes;
      if (bytes != reference) return {false, std::string("differs with --jobs ") + jobs};
    }
    return {true, ""};
  });

  criterion("tile fusion reproduces a coordinate-only model within 1e-6", [&]() -> Outcome {
    const FunctionBackend coords("coords", [](const Image& tile, const TileContext& ctx) {
      ProbabilityMap p(tile.width(), tile.height());
      for (int y = 0; y < tile.height(); ++y) {
        for (int x = 0; x < tile.width(); ++x) {
          p.at(x, y) = static_cast<float>(0.5 + 0.5 * std::cos(0.03 * (ctx.origin_x + x) - 0.07 * (ctx.origin_y + y)));
        }
      }
      return p;
    });
    const Image img(1504, 1504, 3, 128);
    const auto whole = infer_map(img, plan_tiles(1504, 1504, 0), coords);
    const auto tiled = infer_map(img, plan_tiles(1504, 1504, 256), coords, 2);
    float worst = 0.0f;
    for (std::size_t i = 0; i < whole.values().size(); ++i) {
      worst = std::max(worst, std::abs(whole.values()[i] - tiled.values()[i]));
    }
    return {worst <= 1e-6f, "max deviation " + num(worst)};
  });

  criterion("rotation ensemble of an equivariant model: mean deviation <= 0.02 for 1, 3, 5 rotations",
            [&]() -> Outcome {
              const PmapBackend backend(disc.pmap);
              DetectorConfig cfg;
              cfg.tile_size = 128;
              cfg.total_rotations = 1;
              const auto base = detect_probability(disc.image, disc.pith, cfg, backend);
              double worst = 0.0;
              for (int n : {1, 3, 5}) {
                cfg.total_rotations = n;
                worst = std::max(worst, mean_abs_in_disc(base, detect_probability(disc.image, disc.pith, cfg, backend),
                                                         disc.pith, 230.0));
              }
              return {worst <= 0.02, "worst " + num(worst)};
            });

  criterion("skeleton certificates hold on 100 random blobs", [&]() -> Outcome {
    std::mt19937_64 rng(2024);
    for (int i = 0; i < 100; ++i) {
      const auto blob = random_blob(rng);
      if (!skeleton_ok(blob, skeletonize(blob))) return {false, "blob " + std::to_string(i)};
    }
    return {true, ""};
  });

  criterion("normal filter is exhaustive, keeps circles and removes radial segments", [&]() -> Outcome {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> len(3, 40), step(-1, 1), start(0, 127);
    const Pith pith{64, 64};
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<Pixel> c{{start(rng), start(rng)}};
      const int l = len(rng);
      while (static_cast<int>(c.size()) < l) {
        const Pixel p{c.back().x + step(rng), c.back().y + step(rng)};
        if (p != c.back()) c.push_back(p);
      }
      for (const auto& curve : filter_by_normal(CurveSet::from_curves({c}), pith, 45.0).curves()) {
        const auto normals = curve_normals(curve);
        for (std::size_t i = 0; i < curve.size(); ++i) {
          if (!normals[i]) return {false, "pixel without normal survived"};
          const double d = angle_delta(pith, {double(curve[i].x), double(curve[i].y)}, *normals[i]);
          if (d >= 45.0 && d <= 135.0) return {false, "trial " + std::to_string(trial) + " kept delta " + num(d)};
        }
      }
    }
    const auto circle = pixel_circle(60, 60, 40.0);
    const auto kept = filter_by_normal(CurveSet::from_curves({circle}), {60, 60}, 45.0).coords.size();
    std::vector<Pixel> radial;
    for (int r = 5; r <= 40; ++r) radial.push_back({60 + r, 60});
    const bool radial_gone = filter_by_normal(CurveSet::from_curves({radial}), {60, 60}, 45.0).empty();
    const double frac = static_cast<double>(kept) / circle.size();
    return {frac >= 0.95 && radial_gone, "circle kept " + num(frac)};
  });

  criterion("spider web output never crosses (50 random chain sets) and half arcs close within 1 px",
            [&]() -> Outcome {
              std::mt19937_64 rng(99);
              const Pith pith{200, 200};
              std::uniform_int_distribution<int> count(2, 12), first(0, 359), len(20, 360);
              std::uniform_real_distribution<double> base(20.0, 180.0), noise(-1.0, 1.0);
              for (int trial = 0; trial < 50; ++trial) {
                std::vector<Chain> chains;
                const int n = count(rng);
                for (int i = 0; i < n; ++i) {
                  const double r0 = base(rng);
                  std::vector<double> jitter(360);
                  for (double& j : jitter) j = noise(rng);
                  chains.push_back(polar_chain(i, first(rng), len(rng), 360, pith,
                                               [&](int k) { return r0 + jitter[static_cast<std::size_t>(k)]; }));
                }
                const RingSet rs = connect_chains(chains, pith, 360);
                if (!check_noncrossing(rs).empty()) return {false, "set " + std::to_string(trial) + " crosses"};
              }
              const std::vector<Chain> halves{polar_chain(0, 0, 178, 360, pith, [](int) { return 80.0; }),
                                              polar_chain(1, 180, 178, 360, pith, [](int) { return 80.0; })};
              const RingSet rs = connect_chains(halves, pith, 360);
              if (rs.size() != 1) return {false, "half arcs gave " + std::to_string(rs.size()) + " rings"};
              double dev = 0.0;
              for (double r : rs.rings[0].radii) dev = std::max(dev, std::abs(r - 80.0));
              return {dev <= 1.0, "half-arc deviation " + num(dev)};
            });

  criterion("ARAND equals the brute-force pair count on 50 random maps; identical = 0; merge = 1/3",
            [&]() -> Outcome {
              std::mt19937_64 rng(5);
              for (int trial = 0; trial < 50; ++trial) {
                std::uniform_int_distribution<int> u(0, 1 + trial % 5), v(0, 1 + (trial / 5) % 5);
                LabelMap a(8, 8), b(8, 8);
                for (int& x : a.values()) x = u(rng);
                for (int& x : b.values()) x = v(rng);
                const auto fast = adapted_rand(a, b);
                const auto slow = brute_force_rand(a, b);
                if (fast.error != slow.error || fast.precision != slow.precision || fast.recall != slow.recall) {
                  return {false, "map " + std::to_string(trial)};
                }
                if (adapted_rand_error(a, a) != 0.0) return {false, "self score nonzero"};
              }
              LabelMap gt(10, 10), merged(10, 10, 1, 1);
              for (int y = 0; y < 10; ++y) {
                for (int x = 0; x < 10; ++x) gt.at(x, y) = x < 5 ? 1 : 2;
              }
              const double e = adapted_rand_error(merged, gt);
              return {std::abs(e - 1.0 / 3.0) < 1e-12, "merge error " + num(e)};
            });

  criterion("mAR: identical = 1, IoU 0.7 = 0.5, label permutation invariant, one of two = 0.5, missing outer = 0.75",
            [&]() -> Outcome {
              LabelMap gt(10, 10), half(10, 10, 1, 0);
              for (int y = 0; y < 10; ++y) {
                for (int x = 0; x < 10; ++x) {
                  gt.at(x, y) = x < 5 ? 1 : 2;
                  if (x < 5) half.at(x, y) = 3;
                }
              }
              LabelMap one(10, 1, 1, 1), seven(10, 1, 1, 0);
              for (int x = 0; x < 7; ++x) seven.at(x, 0) = 1;
              BinaryMask mask(200, 200, 1, 0);
              for (int y = 0; y < 200; ++y) {
                for (int x = 0; x < 200; ++x) mask.at(x, y) = std::hypot(x - 100, y - 100) <= 91;
              }
              const std::vector<Polygon> rings{circle_polygon(100, 100, 30), circle_polygon(100, 100, 60),
                                               circle_polygon(100, 100, 90)};
              const double a = mean_average_recall(gt, gt);
              const double b = mean_average_recall(half, gt);
              const double c = mean_average_recall(seven, one);
              const double d = mean_average_recall(rasterize_regions({rings[0], rings[1]}, mask),
                                                   rasterize_regions(rings, mask));
              std::mt19937_64 rng(17);
              bool invariant = true;
              for (int trial = 0; trial < 50 && invariant; ++trial) {
                std::uniform_int_distribution<int> u(0, 4);
                LabelMap p(12, 12), g(12, 12);
                for (int& x : p.values()) x = u(rng);
                for (int& x : g.values()) x = u(rng);
                std::vector<int> perm{1, 2, 3, 4};
                std::shuffle(perm.begin(), perm.end(), rng);
                LabelMap q = p;
                for (int& x : q.values()) x = x == 0 ? 0 : 10 + perm[static_cast<std::size_t>(x - 1)];
                invariant = mean_average_recall(p, g) == mean_average_recall(q, g);
              }
              return {a == 1.0 && b == 0.5 && c == 0.5 && d == 0.75 && invariant,
                      num(a) + ", " + num(b) + ", " + num(c) + ", " + num(d) +
                          (invariant ? ", permutation invariant" : ", permutation changed the score")};
            });

  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << std::endl;
  return failures == 0 ? 0 : 1;
}
