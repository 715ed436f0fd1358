#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "dendroweb/errors.hpp"
#include "dendroweb/raster.hpp"

namespace dendroweb {

// PMAP: "PMAP" magic, u32 LE width, u32 LE height, then width*height f32 LE
// samples in row-major order.

namespace detail {

inline void put_u32_le(std::vector<char>& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

inline std::vector<char> encode_pmap(const ProbabilityMap& map) {
  if (map.channels() != 1) throw std::invalid_argument("PMAP holds single-channel maps only");
  std::vector<char> buf{'P', 'M', 'A', 'P'};
  buf.reserve(12 + map.pixel_count() * 4);
  detail::put_u32_le(buf, static_cast<std::uint32_t>(map.width()));
  detail::put_u32_le(buf, static_cast<std::uint32_t>(map.height()));
  for (float v : map.values()) detail::put_u32_le(buf, std::bit_cast<std::uint32_t>(v));
  return buf;
}

inline ProbabilityMap decode_pmap(const std::vector<char>& bytes, const std::string& origin = "PMAP") {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "PMAP", 4) != 0) {
    throw IoError(origin + ": not a PMAP file (bad magic)");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t w = detail::get_u32_le(p + 4);
  const std::uint32_t h = detail::get_u32_le(p + 8);
  if (w == 0 || h == 0) throw IoError(origin + ": zero dimension");
  const std::uint64_t expected = 12 + static_cast<std::uint64_t>(w) * h * 4;
  if (bytes.size() != expected) {
    throw IoError(origin + ": expected " + std::to_string(expected) + " bytes, found " +
                  std::to_string(bytes.size()));
  }
  ProbabilityMap map(static_cast<int>(w), static_cast<int>(h));
  auto v = map.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = std::bit_cast<float>(detail::get_u32_le(p + 12 + 4 * i));
  }
  return map;
}

inline std::vector<char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::filesystem::path& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

inline ProbabilityMap read_pmap(const std::filesystem::path& path) {
  return decode_pmap(read_bytes(path), path.string());
}

inline void write_pmap(const std::filesystem::path& path, const ProbabilityMap& map) {
  write_bytes(path, encode_pmap(map));
}

/// Reads a PNG/JPEG as 8-bit RGB (gray and alpha inputs are converted).
inline Image read_image(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (m.empty()) throw IoError("cannot read image " + path.string());
  Image img(m.cols, m.rows, 3);
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < m.cols; ++x) {
      // OpenCV stores BGR
      img.at(x, y, 0) = row[x][2];
      img.at(x, y, 1) = row[x][1];
      img.at(x, y, 2) = row[x][0];
    }
  }
  return img;
}

/// Reads a binary mask: any nonzero gray value is foreground.
inline BinaryMask read_mask(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw IoError("cannot read mask " + path.string());
  BinaryMask mask(m.cols, m.rows);
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < m.cols; ++x) mask.at(x, y) = row[x] != 0 ? 1 : 0;
  }
  return mask;
}

inline void write_image(const std::filesystem::path& path, const Image& img) {
  cv::Mat m;
  if (img.channels() == 3) {
    m.create(img.height(), img.width(), CV_8UC3);
    for (int y = 0; y < img.height(); ++y) {
      auto* row = m.ptr<cv::Vec3b>(y);
      for (int x = 0; x < img.width(); ++x) {
        row[x] = cv::Vec3b(img.at(x, y, 2), img.at(x, y, 1), img.at(x, y, 0));
      }
    }
  } else {
    m.create(img.height(), img.width(), CV_8UC1);
    for (int y = 0; y < img.height(); ++y) {
      auto* row = m.ptr<std::uint8_t>(y);
      for (int x = 0; x < img.width(); ++x) row[x] = img.at(x, y);
    }
  }
  if (!cv::imwrite(path.string(), m)) throw IoError("cannot write image " + path.string());
}

/// Writes a {0,1} mask as a black/white PNG.
inline void write_mask(const std::filesystem::path& path, const BinaryMask& mask) {
  Image out(mask.width(), mask.height(), 1);
  std::ranges::transform(mask.values(), out.values().begin(),
                         [](std::uint8_t v) -> std::uint8_t { return v ? 255 : 0; });
  write_image(path, out);
}

}  // namespace dendroweb
