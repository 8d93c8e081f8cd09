#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "glab/error.hpp"

namespace glab {

/// Row-major grayscale raster. 1 is white background, 0 is black ink.
struct ImageGrid {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  ImageGrid() = default;
  ImageGrid(int w, int h, double fill = 1.0) : width(w), height(h) {
    if (w < 1 || h < 1) throw_invalid("image dimensions must be positive");
    values.assign(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill);
  }

  std::size_t size() const { return values.size(); }
  double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }

  bool same_shape(const ImageGrid& other) const { return width == other.width && height == other.height; }

  friend bool operator==(const ImageGrid&, const ImageGrid&) = default;
};

/// Binary grid; true marks a selected pixel (a known pixel for inpainting
/// masks, a member pixel for regions).
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(int w, int h, bool fill) : width(w), height(h) {
    if (w < 1 || h < 1) throw_invalid("mask dimensions must be positive");
    bits.assign(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill ? 1 : 0);
  }

  /// Axis-aligned rectangle [x0, x0+w) x [y0, y0+h) set to `inside`, rest to !inside.
  static Mask rectangle(int width, int height, int x0, int y0, int w, int h, bool inside = true) {
    Mask m(width, height, !inside);
    for (int y = y0; y < y0 + h; ++y) {
      for (int x = x0; x < x0 + w; ++x) {
        if (x >= 0 && y >= 0 && x < width && y < height) m.set(x, y, inside);
      }
    }
    return m;
  }

  std::size_t size() const { return bits.size(); }
  bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v) { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  bool operator[](std::size_t i) const { return bits[i] != 0; }

  std::size_t count() const { return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 1)); }

  Mask inverted() const {
    Mask m = *this;
    for (auto& b : m.bits) b = b ? 0 : 1;
    return m;
  }

  friend bool operator==(const Mask&, const Mask&) = default;
};

inline std::uint8_t to_gray8(double v) {
  return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
}

/// Binary PGM (P5, maxval 255), byte = round(255 * v).
inline std::string encode_pgm(const ImageGrid& img) {
  std::ostringstream out;
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  std::string bytes(img.size(), '\0');
  for (std::size_t i = 0; i < img.size(); ++i) bytes[i] = static_cast<char>(to_gray8(img.values[i]));
  out << bytes;
  return out.str();
}

inline ImageGrid decode_pgm(const std::string& data) {
  std::istringstream in(data);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  auto skip_comments = [&in] {
    in >> std::ws;
    while (in.peek() == '#') {
      std::string line;
      std::getline(in, line);
      in >> std::ws;
    }
  };
  in >> magic;
  if (magic != "P5") throw_io("not a binary PGM (P5)");
  skip_comments();
  in >> w;
  skip_comments();
  in >> h;
  skip_comments();
  in >> maxval;
  if (!in || w < 1 || h < 1 || maxval != 255) throw_io("unsupported PGM header");
  in.get();  // single whitespace byte before the raster
  ImageGrid img(w, h);
  std::string bytes(img.size(), '\0');
  if (!in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()))) throw_io("PGM raster truncated");
  for (std::size_t i = 0; i < img.size(); ++i) {
    img.values[i] = static_cast<unsigned char>(bytes[i]) / 255.0;
  }
  return img;
}

inline void write_pgm(const std::filesystem::path& path, const ImageGrid& img) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw_io("cannot open " + path.string() + " for writing");
  const std::string data = encode_pgm(img);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw_io("write failed: " + path.string());
}

inline ImageGrid read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_io("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode_pgm(buf.str());
}

}  // namespace glab
