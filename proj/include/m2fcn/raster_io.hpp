#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "m2fcn/fileio.hpp"
#include "m2fcn/label_image.hpp"

namespace m2fcn {

class PgmHeaderError : public IoError {
 public:
  using IoError::IoError;
};
class PgmPayloadError : public IoError {
 public:
  using IoError::IoError;
};
class PgmDepthError : public IoError {
 public:
  using IoError::IoError;
};

/// Raw binary PGM (P5) raster. maxval ≤ 255 stores one byte per pixel,
/// otherwise two big-endian bytes.
struct Pgm {
  std::size_t width = 0;
  std::size_t height = 0;
  std::uint32_t maxval = 255;
  std::vector<std::uint16_t> pixels;
};

inline std::string encode_pgm(const Pgm& img) {
  if (img.maxval == 0 || img.maxval > 65535) throw PgmDepthError("PGM maxval must be in [1, 65535]");
  if (img.pixels.size() != img.width * img.height) throw PgmPayloadError("PGM pixel count does not match size");
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n" +
                    std::to_string(img.maxval) + "\n";
  const bool wide = img.maxval > 255;
  out.reserve(out.size() + img.pixels.size() * (wide ? 2 : 1));
  for (auto v : img.pixels) {
    if (v > img.maxval) throw PgmPayloadError("PGM pixel value exceeds maxval");
    if (wide) out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v & 0xff));
  }
  return out;
}

inline Pgm decode_pgm(const std::string& bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      const char c = bytes[pos];
      if (c == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&](const char* what) {
    skip_space();
    std::uint64_t v = 0;
    std::size_t digits = 0;
    while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
      v = v * 10 + static_cast<std::uint64_t>(bytes[pos] - '0');
      if (v > 1'000'000'000ULL) throw PgmHeaderError(std::string("PGM ") + what + " is too large");
      ++pos;
      ++digits;
    }
    if (digits == 0) throw PgmHeaderError(std::string("PGM header: missing ") + what);
    return v;
  };

  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw PgmHeaderError("not a binary PGM (P5) file");
  pos = 2;
  Pgm img;
  img.width = number("width");
  img.height = number("height");
  const std::uint64_t maxval = number("maxval");
  if (img.width == 0 || img.height == 0) throw PgmHeaderError("PGM has zero width or height");
  if (maxval == 0 || maxval > 65535) throw PgmDepthError("unsupported PGM maxval " + std::to_string(maxval));
  img.maxval = static_cast<std::uint32_t>(maxval);
  if (pos >= bytes.size() || !(bytes[pos] == ' ' || bytes[pos] == '\n' || bytes[pos] == '\r' || bytes[pos] == '\t')) {
    throw PgmHeaderError("PGM header not terminated by whitespace");
  }
  ++pos;
  const std::size_t bpp = img.maxval > 255 ? 2 : 1;
  const std::size_t need = img.width * img.height * bpp;
  if (bytes.size() - pos < need) {
    throw PgmPayloadError("PGM payload truncated: expected " + std::to_string(need) + " bytes, found " +
                          std::to_string(bytes.size() - pos));
  }
  img.pixels.resize(img.width * img.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const auto hi = static_cast<unsigned char>(bytes[pos]);
    if (bpp == 2) {
      const auto lo = static_cast<unsigned char>(bytes[pos + 1]);
      img.pixels[i] = static_cast<std::uint16_t>((hi << 8) | lo);
    } else {
      img.pixels[i] = hi;
    }
    pos += bpp;
  }
  return img;
}

inline Pgm load_pgm(const std::filesystem::path& path) { return decode_pgm(read_file(path)); }
inline void save_pgm(const std::filesystem::path& path, const Pgm& img) { write_file_atomic(path, encode_pgm(img)); }

/// 1×H×W intensities in [0,1], scaled by 1/maxval.
inline Tensor load_image(const std::filesystem::path& path) {
  const Pgm img = load_pgm(path);
  Tensor t({1, img.height, img.width});
  for (std::size_t i = 0; i < img.pixels.size(); ++i) t[i] = static_cast<Real>(img.pixels[i]) / img.maxval;
  return t;
}

/// Quantises a 1×H×W map in [0,1] to `maxval` levels (255 or 65535).
inline void save_image(const std::filesystem::path& path, const Tensor& image, std::uint32_t maxval = 255) {
  if (image.rank() != 3 || image.channels() != 1) throw ShapeError("save_image: expected 1×H×W, got " + shape_string(image.shape()));
  Pgm img{image.width(), image.height(), maxval, std::vector<std::uint16_t>(image.size())};
  for (std::size_t i = 0; i < image.size(); ++i) {
    const Real v = std::clamp(image[i], 0.0, 1.0);
    img.pixels[i] = static_cast<std::uint16_t>(std::lround(v * maxval));
  }
  save_pgm(path, img);
}

/// Segment ids stored as 16-bit pixel values.
inline LabelImage load_labels(const std::filesystem::path& path) {
  const Pgm img = load_pgm(path);
  std::vector<std::uint32_t> ids(img.pixels.begin(), img.pixels.end());
  return LabelImage(img.height, img.width, std::move(ids));
}

inline void save_labels(const std::filesystem::path& path, const LabelImage& labels) {
  Pgm img{labels.width(), labels.height(), 65535, std::vector<std::uint16_t>(labels.size())};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] > 65535) throw PgmDepthError("segment id " + std::to_string(labels[i]) + " does not fit 16 bits");
    img.pixels[i] = static_cast<std::uint16_t>(labels[i]);
  }
  save_pgm(path, img);
}

/// Boundary mask as 8-bit PGM, 255 = boundary; any nonzero pixel loads as boundary.
inline BoundaryLabels load_mask(const std::filesystem::path& path) {
  const Pgm img = load_pgm(path);
  std::vector<std::uint8_t> mask(img.pixels.size());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = img.pixels[i] != 0 ? 1 : 0;
  return BoundaryLabels(img.height, img.width, std::move(mask));
}

inline void save_mask(const std::filesystem::path& path, const BoundaryLabels& labels) {
  Pgm img{labels.width(), labels.height(), 255, std::vector<std::uint16_t>(labels.pixels())};
  for (std::size_t i = 0; i < labels.pixels(); ++i) img.pixels[i] = labels.is_boundary(i) ? 255 : 0;
  save_pgm(path, img);
}

}  // namespace m2fcn
