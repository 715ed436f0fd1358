#include <gtest/gtest.h>

#include <queue>
#include <random>

#include "dendroweb/contour.hpp"
#include "support.hpp"

using namespace dendroweb;
using testing_support::make_synthetic_disc;
using testing_support::random_blob;

namespace {

int component_count(const BinaryMask& m) {
  BinaryMask seen(m.width(), m.height(), 1, 0);
  int count = 0;
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      if (!m.at(x, y) || seen.at(x, y)) continue;
      ++count;
      std::queue<Pixel> q;
      q.push({x, y});
      seen.at(x, y) = 1;
      while (!q.empty()) {
        const Pixel p = q.front();
        q.pop();
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = p.x + dx, ny = p.y + dy;
            if (m.contains(nx, ny) && m.at(nx, ny) && !seen.at(nx, ny)) {
              seen.at(nx, ny) = 1;
              q.push({nx, ny});
            }
          }
        }
      }
    }
  }
  return count;
}

bool has_full_2x2(const BinaryMask& m) {
  for (int y = 0; y + 1 < m.height(); ++y) {
    for (int x = 0; x + 1 < m.width(); ++x) {
      if (m.at(x, y) && m.at(x + 1, y) && m.at(x, y + 1) && m.at(x + 1, y + 1)) return true;
    }
  }
  return false;
}

// Checks every certificate a skeleton must satisfy; returns a reason or "".
std::string skeleton_violation(const BinaryMask& mask, const BinaryMask& skel) {
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (skel.at(x, y) && !mask.at(x, y)) return "skeleton pixel outside mask";
    }
  }
  if (has_full_2x2(skel)) return "2x2 block in skeleton";
  if (component_count(skel) != component_count(mask)) return "component count changed";
  return "";
}

BinaryMask annulus(int size, double r, double half_width) {
  BinaryMask m(size, size, 1, 0);
  const double c = (size - 1) / 2.0;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) m.at(x, y) = std::abs(std::hypot(x - c, y - c) - r) <= half_width;
  }
  return m;
}

double mean_abs_diff(const ProbabilityMap& a, const ProbabilityMap& b, const Pith& c, double radius) {
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

}  // namespace

TEST(RotationAngles, EvenlySpaced) {
  EXPECT_EQ(rotation_angles(5), (std::vector<double>{0, 72, 144, 216, 288}));
  EXPECT_EQ(rotation_angles(1), (std::vector<double>{0}));
  EXPECT_EQ(rotation_angles(3), (std::vector<double>{0, 120, 240}));
  EXPECT_THROW(rotation_angles(0), std::invalid_argument);
}

TEST(DetectProbability, SingleRotationReproducesPmapExactly) {
  const auto disc = make_synthetic_disc(256, 115, {30, 60, 90});
  const PmapBackend backend(disc.pmap);
  DetectorConfig cfg;
  cfg.total_rotations = 1;
  cfg.tile_size = 64;
  EXPECT_EQ(detect_probability(disc.image, disc.pith, cfg, backend), disc.pmap);
}

TEST(DetectProbability, EquivariantBackendIsStableUnderTta) {
  const auto disc = make_synthetic_disc(256, 115, {30, 60, 90});
  const PmapBackend backend(disc.pmap);
  DetectorConfig cfg;
  cfg.tile_size = 0;
  cfg.total_rotations = 1;
  const auto one = detect_probability(disc.image, disc.pith, cfg, backend);
  for (int n : {3, 5}) {
    cfg.total_rotations = n;
    const auto many = detect_probability(disc.image, disc.pith, cfg, backend);
    EXPECT_LE(mean_abs_diff(one, many, disc.pith, 110.0), 0.02) << n << " rotations";
  }
}

TEST(DetectProbability, ConstantBackendIsConstantInsideInscribedDisc) {
  const FunctionBackend constant("const", [](const Image& t, const TileContext&) {
    return ProbabilityMap(t.width(), t.height(), 1, 0.7f);
  });
  DetectorConfig cfg;
  cfg.tile_size = 64;
  const Pith c{99.5, 99.5};
  const auto out = detect_probability(Image(200, 200, 3, 100), c, cfg, constant);
  for (int y = 0; y < 200; ++y) {
    for (int x = 0; x < 200; ++x) {
      if (std::hypot(x - c.cx, y - c.cy) < 97.0) {
        ASSERT_NEAR(out.at(x, y), 0.7f, 1e-4) << x << "," << y;
      }
    }
  }
}

TEST(DetectProbability, RejectsPithOutsideImage) {
  const FunctionBackend constant("const", [](const Image& t, const TileContext&) {
    return ProbabilityMap(t.width(), t.height(), 1, 0.7f);
  });
  EXPECT_THROW(detect_probability(Image(50, 50, 3), {60, 10}, DetectorConfig{}, constant),
               std::invalid_argument);
}

TEST(Binarize, ThresholdIsInclusive) {
  ProbabilityMap p(3, 1);
  p.at(0, 0) = 0.19f;
  p.at(1, 0) = 0.2f;
  p.at(2, 0) = 0.9f;
  const auto m = binarize(p, static_cast<double>(0.2f));
  EXPECT_EQ(m.at(0, 0), 0);
  EXPECT_EQ(m.at(1, 0), 1);
  EXPECT_EQ(m.at(2, 0), 1);
  const auto empty = binarize(ProbabilityMap(5, 5, 1, 0.0f), 0.2);
  for (auto v : empty.values()) ASSERT_EQ(v, 0);
}

TEST(Binarize, MonotoneInThresholdProperty) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  ProbabilityMap p(40, 30);
  for (float& v : p.values()) v = u(rng);
  for (int trial = 0; trial < 50; ++trial) {
    double t1 = u(rng), t2 = u(rng);
    if (t1 > t2) std::swap(t1, t2);
    const auto lo = binarize(p, t1), hi = binarize(p, t2);
    for (std::size_t i = 0; i < lo.values().size(); ++i) ASSERT_GE(lo.values()[i], hi.values()[i]);
  }
}

TEST(Skeletonize, HorizontalBarBecomesOneLine) {
  BinaryMask bar(40, 11, 1, 0);
  for (int y = 3; y <= 7; ++y) {
    for (int x = 5; x <= 34; ++x) bar.at(x, y) = 1;
  }
  const auto s = skeletonize(bar);
  EXPECT_EQ(skeleton_violation(bar, s), "");
  int rows_with_pixels_in_middle = 0;
  for (int y = 0; y < 11; ++y) rows_with_pixels_in_middle += s.at(20, y);
  EXPECT_EQ(rows_with_pixels_in_middle, 1);
}

TEST(Skeletonize, EmptyMaskStaysEmpty) {
  const auto s = skeletonize(BinaryMask(20, 20, 1, 0));
  for (auto v : s.values()) ASSERT_EQ(v, 0);
}

TEST(Skeletonize, AnnulusBecomesClosedLoopNearMidRadius) {
  const auto ring = annulus(121, 50.0, 2.5);
  const auto s = skeletonize(ring);
  EXPECT_EQ(skeleton_violation(ring, s), "");
  for (int y = 0; y < s.height(); ++y) {
    for (int x = 0; x < s.width(); ++x) {
      if (s.at(x, y)) {
        ASSERT_NEAR(std::hypot(x - 60, y - 60), 50.0, 1.5);
      }
    }
  }
  const auto curves = trace_curves(s).curves();
  ASSERT_EQ(curves.size(), 1u);
  EXPECT_TRUE(eight_adjacent(curves[0].front(), curves[0].back()));
}

TEST(Skeletonize, RandomBlobCertificatesProperty) {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    const auto blob = random_blob(rng);
    const auto s = skeletonize(blob);
    ASSERT_EQ(skeleton_violation(blob, s), "") << "blob " << trial;
    ASSERT_EQ(skeletonize(s), s) << "not idempotent on blob " << trial;
  }
}

TEST(TraceCurves, OpenArcIsOneOrderedCurve) {
  BinaryMask m(60, 5, 1, 0);
  for (int x = 5; x < 55; ++x) m.at(x, 2) = 1;
  const auto curves = trace_curves(m).curves();
  ASSERT_EQ(curves.size(), 1u);
  ASSERT_EQ(curves[0].size(), 50u);
  for (std::size_t i = 1; i < curves[0].size(); ++i) {
    ASSERT_TRUE(eight_adjacent(curves[0][i - 1], curves[0][i]));
  }
  const Pixel a = curves[0].front(), b = curves[0].back();
  EXPECT_EQ(std::min(a.x, b.x), 5);
  EXPECT_EQ(std::max(a.x, b.x), 54);
}

TEST(TraceCurves, YJunctionGivesThreeCurves) {
  BinaryMask m(41, 41, 1, 0);
  for (int k = 0; k <= 15; ++k) {
    m.at(20, 20 + k) = 1;      // stem downwards
    m.at(20 - k, 20 - k) = 1;  // left branch
    m.at(20 + k, 20 - k) = 1;  // right branch
  }
  const auto curves = trace_curves(m).curves();
  EXPECT_EQ(curves.size(), 3u);
}

TEST(TraceCurves, CurveSetInvariantsOnSyntheticDisc) {
  const auto disc = make_synthetic_disc(256, 115, {30, 60, 90});
  const auto skel = skeletonize(binarize(disc.pmap, 0.2));
  const CurveSet cs = trace_curves(skel);
  ASSERT_FALSE(cs.empty());
  EXPECT_NE(cs.coords.front(), kCurveSeparator);
  EXPECT_NE(cs.coords.back(), kCurveSeparator);
  for (std::size_t i = 1; i < cs.coords.size(); ++i) {
    ASSERT_FALSE(cs.coords[i] == kCurveSeparator && cs.coords[i - 1] == kCurveSeparator);
  }
  for (const auto& c : cs.curves()) {
    ASSERT_GE(c.size(), 3u);
    for (std::size_t i = 1; i < c.size(); ++i) ASSERT_TRUE(eight_adjacent(c[i - 1], c[i]));
    for (const Pixel& p : c) ASSERT_TRUE(skel.at(p.x, p.y));
  }
  EXPECT_EQ(cs.curve_count(), 3u);
}

TEST(CurveSet, NormalizeDropsShortCurvesAndStraySeparators) {
  CurveSet cs{{kCurveSeparator, {0, 0}, {1, 0}, kCurveSeparator, kCurveSeparator, {5, 5}, {6, 5}, {7, 5},
               kCurveSeparator}};
  cs.normalize(3);
  EXPECT_EQ(cs.coords, (std::vector<Pixel>{{5, 5}, {6, 5}, {7, 5}}));
}
