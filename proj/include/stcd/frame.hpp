#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "stcd/error.hpp"
#include "stcd/tensor.hpp"

namespace stcd {

// Axis-aligned box, half-open: area = (x1-x0)*(y1-y0).
struct Box {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  double w() const { return x1 - x0; }
  double h() const { return y1 - y0; }
  double area() const { return std::max(0.0, w()) * std::max(0.0, h()); }
  double cx() const { return 0.5 * (x0 + x1); }
  double cy() const { return 0.5 * (y0 + y1); }
  bool valid() const { return x1 > x0 && y1 > y0; }
};

inline double iou(const Box& a, const Box& b) {
  const double ix0 = std::max(a.x0, b.x0), iy0 = std::max(a.y0, b.y0);
  const double ix1 = std::min(a.x1, b.x1), iy1 = std::min(a.y1, b.y1);
  const double iw = ix1 - ix0, ih = iy1 - iy0;
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

// Integer pixel box used for annotations.
struct GroundTruthBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  Box as_box() const {
    return Box{static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x1),
               static_cast<double>(y1)};
  }
  bool operator==(const GroundTruthBox&) const = default;
};

// One grayscale frame, 8-bit pixels, optional annotations.
struct Frame {
  int width = 0, height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
  std::optional<std::vector<GroundTruthBox>> boxes;
  int frame_index = 0;

  std::uint8_t& px(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t px(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

  void check() const {
    require(width > 0 && height > 0, errc::invalid_argument, "frame: empty size");
    require(pixels.size() == static_cast<std::size_t>(width) * height, errc::shape_mismatch,
            "frame: pixel buffer does not match size");
    if (boxes) {
      for (const auto& b : *boxes) {
        require(b.x0 < b.x1 && b.y0 < b.y1, errc::invalid_argument, "frame: degenerate box");
        require(b.x0 >= 0 && b.y0 >= 0 && b.x1 <= width && b.y1 <= height,
                errc::invalid_argument, "frame: box outside frame bounds");
      }
    }
  }
};

// Pixels scaled to [0,1], shape [1,H,W].
template <typename T>
TensorT<T> frame_to_tensor(const Frame& f) {
  TensorT<T> t({1, f.height, f.width});
  for (std::size_t i = 0; i < f.pixels.size(); ++i)
    t[static_cast<std::int64_t>(i)] = static_cast<T>(f.pixels[i]) / T(255);
  return t;
}

// Two frames stacked as a 2-channel tensor (reference first).
template <typename T>
TensorT<T> frame_pair_tensor(const Frame& a, const Frame& b) {
  require(a.width == b.width && a.height == b.height, errc::shape_mismatch,
          "frame pair: sizes differ");
  TensorT<T> t({2, a.height, a.width});
  const std::int64_t n = static_cast<std::int64_t>(a.pixels.size());
  for (std::int64_t i = 0; i < n; ++i) {
    t[i] = static_cast<T>(a.pixels[static_cast<std::size_t>(i)]) / T(255);
    t[n + i] = static_cast<T>(b.pixels[static_cast<std::size_t>(i)]) / T(255);
  }
  return t;
}

// --------------------------------------------------------------------------
// PGM (binary P5, maxval 255) IO.
// --------------------------------------------------------------------------

inline void write_pgm(const std::filesystem::path& path, const Frame& f) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), errc::io_missing_file, "cannot open for write: " + path.string());
  os << "P5\n" << f.width << " " << f.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(f.pixels.data()),
           static_cast<std::streamsize>(f.pixels.size()));
  require(os.good(), errc::io_truncated, "short write: " + path.string());
}

inline Frame read_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), errc::io_missing_file, "missing frame file: " + path.string());
  std::string magic;
  is >> magic;
  require(magic == "P5", errc::io_bad_magic, "not a binary PGM: " + path.string());
  int w = 0, h = 0, maxval = 0;
  is >> w >> h >> maxval;
  require(is.good() && w > 0 && h > 0, errc::io_bad_manifest, "bad PGM header: " + path.string());
  require(maxval == 255, errc::io_bad_manifest, "PGM maxval must be 255: " + path.string());
  is.get();  // single whitespace after header
  Frame f;
  f.width = w;
  f.height = h;
  f.pixels.resize(static_cast<std::size_t>(w) * h);
  is.read(reinterpret_cast<char*>(f.pixels.data()), static_cast<std::streamsize>(f.pixels.size()));
  require(is.gcount() == static_cast<std::streamsize>(f.pixels.size()), errc::io_truncated,
          "truncated frame file: " + path.string());
  return f;
}

}  // namespace stcd
