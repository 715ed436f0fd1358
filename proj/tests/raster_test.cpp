#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "dendroweb/contour.hpp"
#include "dendroweb/raster.hpp"
#include "support.hpp"

using namespace dendroweb;

namespace {

ProbabilityMap random_map(std::mt19937_64& rng, int w, int h) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  ProbabilityMap m(w, h);
  for (float& v : m.values()) v = u(rng);
  return m;
}

// Rotationally symmetric field about (cx, cy).
ProbabilityMap radial_field(int w, int h, Pith c) {
  ProbabilityMap m(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double r = std::hypot(x - c.cx, y - c.cy);
      m.at(x, y) = static_cast<float>(0.5 + 0.5 * std::cos(r / 4.0));
    }
  }
  return m;
}

}  // namespace

TEST(Raster, RejectsNonPositiveDimensions) {
  EXPECT_THROW(ProbabilityMap(0, 4), std::invalid_argument);
  EXPECT_THROW(ProbabilityMap(4, -1), std::invalid_argument);
  EXPECT_THROW(Image(4, 4, 2), std::invalid_argument);
}

TEST(Raster, InterleavedChannels) {
  Image img(3, 2, 3, 7);
  img.at(2, 1, 1) = 42;
  EXPECT_EQ(img.values()[(1 * 3 + 2) * 3 + 1], 42);
  EXPECT_EQ(img.pixel_count(), 6u);
  EXPECT_TRUE(img.contains(2, 1));
  EXPECT_FALSE(img.contains(3, 1));
}

TEST(RotateAbout, ZeroAngleIsBitExactIdentity) {
  std::mt19937_64 rng(1);
  const auto m = random_map(rng, 37, 23);
  for (double theta : {0.0, 360.0, -720.0}) {
    EXPECT_EQ(rotate_about<float>(m, {11.3, 7.9}, theta, 0.0f), m);
  }
}

TEST(RotateAbout, PreservesDimensionsForAllAngles) {
  std::mt19937_64 rng(2);
  const auto m = random_map(rng, 31, 17);
  for (double theta = -400.0; theta <= 400.0; theta += 37.0) {
    const auto r = rotate_about<float>(m, {5, 9}, theta, 0.0f);
    EXPECT_EQ(r.width(), 31);
    EXPECT_EQ(r.height(), 17);
    for (float v : r.values()) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
  }
}

TEST(RotateAbout, SeventyTwoDegreesMovesPointCounterClockwiseOnScreen) {
  const double step = rotation_angles(5)[1];
  EXPECT_DOUBLE_EQ(step, 72.0);
  ProbabilityMap m(101, 101, 1, 0.0f);
  const Pith c{50, 50};
  m.at(70, 50) = 1.0f;  // 20 px along +x
  const auto r = rotate_about<float>(m, c, step, 0.0f);
  int bx = 0, by = 0;
  float best = -1.0f;
  for (int y = 0; y < 101; ++y) {
    for (int x = 0; x < 101; ++x) {
      if (r.at(x, y) > best) {
        best = r.at(x, y);
        bx = x;
        by = y;
      }
    }
  }
  const double a = deg_to_rad(72.0);
  EXPECT_NEAR(bx, 50 + 20 * std::cos(a), 1.0);
  EXPECT_NEAR(by, 50 - 20 * std::sin(a), 1.0);
}

TEST(RotateAbout, QuarterTurnRoundTrip) {
  std::mt19937_64 rng(3);
  const int n = 64;
  const auto m = random_map(rng, n, n);
  const Pith c{(n - 1) / 2.0, (n - 1) / 2.0};
  const auto back = rotate_about<float>(rotate_about<float>(m, c, 90.0, 0.0f), c, -90.0, 0.0f);
  double sum = 0.0;
  int count = 0;
  for (int y = 2; y < n - 2; ++y) {
    for (int x = 2; x < n - 2; ++x) {
      sum += std::abs(back.at(x, y) - m.at(x, y));
      ++count;
    }
  }
  EXPECT_LE(sum / count, 0.02);
}

TEST(RotateAbout, OutOfBoundsTakesFill) {
  Image img(10, 10, 3, 0);
  const auto r = rotate_about<std::uint8_t>(img, {0, 0}, 180.0, 255);
  EXPECT_EQ(r.at(9, 9, 0), 255);
  EXPECT_EQ(r.at(9, 9, 2), 255);
  EXPECT_EQ(r.at(0, 0, 1), 0);
}

TEST(AccumulateMean, SingleMapUnchanged) {
  std::mt19937_64 rng(4);
  const auto m = random_map(rng, 9, 5);
  EXPECT_EQ(accumulate_mean(std::vector{m}), m);
}

TEST(AccumulateMean, ZeroAndOneGiveHalf) {
  const std::vector maps{ProbabilityMap(4, 4, 1, 0.0f), ProbabilityMap(4, 4, 1, 1.0f)};
  const auto mean = accumulate_mean(maps);
  for (float v : mean.values()) EXPECT_FLOAT_EQ(v, 0.5f);
}

TEST(AccumulateMean, DimensionMismatchThrows) {
  const std::vector maps{ProbabilityMap(4, 4), ProbabilityMap(4, 5)};
  EXPECT_THROW(accumulate_mean(maps), std::invalid_argument);
  EXPECT_THROW(accumulate_mean(std::vector<ProbabilityMap>{}), std::invalid_argument);
}

TEST(AccumulateMean, PermutationInvariantProperty) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<ProbabilityMap> maps;
    const int k = 2 + trial % 6;
    for (int i = 0; i < k; ++i) maps.push_back(random_map(rng, 16, 12));
    const auto ref = accumulate_mean(maps);
    std::shuffle(maps.begin(), maps.end(), rng);
    const auto shuffled = accumulate_mean(maps);
    for (std::size_t i = 0; i < ref.values().size(); ++i) {
      ASSERT_NEAR(ref.values()[i], shuffled.values()[i], 1e-6);
      ASSERT_TRUE(ref.values()[i] >= 0.0f && ref.values()[i] <= 1.0f);
    }
  }
}

TEST(AccumulateMean, EquivariantFieldSurvivesRotationEnsemble) {
  const int n = 96;
  const Pith c{47.5, 47.5};
  const auto field = radial_field(n, n, c);
  std::vector<ProbabilityMap> maps;
  for (double theta : rotation_angles(5)) {
    maps.push_back(rotate_about<float>(rotate_about<float>(field, c, theta, 0.0f), c, -theta, 0.0f));
  }
  const auto mean = accumulate_mean(maps);
  double sum = 0.0;
  int count = 0;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      if (std::hypot(x - c.cx, y - c.cy) > n / 2.0 - 2.0) continue;
      sum += std::abs(mean.at(x, y) - field.at(x, y));
      ++count;
    }
  }
  EXPECT_LE(sum / count, 0.02);
}

TEST(Grayscale, UsesLumaWeights) {
  Image img(1, 1, 3);
  img.at(0, 0, 0) = 100;
  img.at(0, 0, 1) = 200;
  img.at(0, 0, 2) = 50;
  EXPECT_NEAR(grayscale(img)[0], 0.299 * 100 + 0.587 * 200 + 0.114 * 50, 1e-12);
}

TEST(WrapDegrees, ReducesToHalfOpenRange) {
  EXPECT_DOUBLE_EQ(wrap_degrees(360.0), 0.0);
  EXPECT_DOUBLE_EQ(wrap_degrees(-90.0), 270.0);
  EXPECT_DOUBLE_EQ(wrap_degrees(725.0), 5.0);
}
