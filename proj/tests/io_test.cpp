#include <gtest/gtest.h>

#include <random>

#include "dendroweb/io.hpp"
#include "support.hpp"

using namespace dendroweb;
using testing_support::TempDir;

TEST(Pmap, EncodeLayoutIsMagicSizeThenLittleEndianFloats) {
  ProbabilityMap m(2, 1);
  m.at(0, 0) = 1.0f;
  m.at(1, 0) = 0.5f;
  const auto bytes = encode_pmap(m);
  ASSERT_EQ(bytes.size(), 12u + 8u);
  EXPECT_EQ(std::string(bytes.data(), 4), "PMAP");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 2);
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 1);
  // 1.0f = 0x3F800000
  EXPECT_EQ(static_cast<unsigned char>(bytes[15]), 0x3F);
  EXPECT_EQ(static_cast<unsigned char>(bytes[14]), 0x80);
}

TEST(Pmap, RoundTripIsExact) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  ProbabilityMap m(13, 9);
  for (float& v : m.values()) v = u(rng);
  TempDir dir("pmap");
  write_pmap(dir / "m.pmap", m);
  EXPECT_EQ(read_pmap(dir / "m.pmap"), m);
}

TEST(Pmap, RejectsBadMagicAndTruncation) {
  ProbabilityMap m(3, 3, 1, 0.25f);
  auto bytes = encode_pmap(m);
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(decode_pmap(truncated), IoError);
  bytes[0] = 'X';
  EXPECT_THROW(decode_pmap(bytes), IoError);
  EXPECT_THROW(read_pmap("/nonexistent/file.pmap"), IoError);
}

TEST(ImageIo, PngRoundTripKeepsRgbOrder) {
  Image img(4, 3, 3, 0);
  img.at(1, 2, 0) = 255;  // red
  img.at(3, 0, 2) = 200;  // blue
  TempDir dir("png");
  write_image(dir / "a.png", img);
  EXPECT_EQ(read_image(dir / "a.png"), img);
}

TEST(ImageIo, GrayImagesLoadAsRgb) {
  Image gray(5, 5, 1, 77);
  TempDir dir("gray");
  write_image(dir / "g.png", gray);
  const Image rgb = read_image(dir / "g.png");
  ASSERT_EQ(rgb.channels(), 3);
  EXPECT_EQ(rgb.at(2, 2, 0), 77);
  EXPECT_EQ(rgb.at(2, 2, 2), 77);
}

TEST(MaskIo, AnyNonzeroIsForeground) {
  Image gray(3, 1, 1, 0);
  gray.at(1, 0) = 1;
  gray.at(2, 0) = 255;
  TempDir dir("mask");
  write_image(dir / "m.png", gray);
  const BinaryMask m = read_mask(dir / "m.png");
  EXPECT_EQ(m.at(0, 0), 0);
  EXPECT_EQ(m.at(1, 0), 1);
  EXPECT_EQ(m.at(2, 0), 1);
  write_mask(dir / "w.png", m);
  EXPECT_EQ(read_mask(dir / "w.png"), m);
}

TEST(ImageIo, MissingFileIsIoError) {
  EXPECT_THROW(read_image("/nonexistent.png"), IoError);
  EXPECT_THROW(read_mask("/nonexistent.png"), IoError);
}
