#pragma once

// 8-bit RGB raster and binary PPM (P6) I/O.

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "themeann/common.hpp"

namespace themeann {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

class Image {
 public:
  Image() = default;
  Image(std::size_t width, std::size_t height, Rgb fill = {})
      : width_(width), height_(height), pixels_(width * height, fill) {}

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }

  Rgb& at(std::size_t x, std::size_t y) { return pixels_[y * width_ + x]; }
  const Rgb& at(std::size_t x, std::size_t y) const { return pixels_[y * width_ + x]; }

  const std::vector<Rgb>& pixels() const noexcept { return pixels_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<Rgb> pixels_;
};

namespace detail {

inline void skip_ppm_space(const std::string& s, std::size_t& pos) {
  for (;;) {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos < s.size() && s[pos] == '#') {
      while (pos < s.size() && s[pos] != '\n') ++pos;
      continue;
    }
    return;
  }
}

inline std::size_t read_ppm_number(const std::string& s, std::size_t& pos, const std::string& path) {
  skip_ppm_space(s, pos);
  std::size_t v = 0;
  bool any = false;
  while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
    v = v * 10 + static_cast<std::size_t>(s[pos] - '0');
    ++pos;
    any = true;
  }
  if (!any) throw DataError("malformed PPM header: " + path);
  return v;
}

}  // namespace detail

inline std::string encode_ppm(const Image& img) {
  std::string out = "P6\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  out.reserve(out.size() + img.pixels().size() * 3);
  for (const auto& p : img.pixels()) {
    out.push_back(static_cast<char>(p.r));
    out.push_back(static_cast<char>(p.g));
    out.push_back(static_cast<char>(p.b));
  }
  return out;
}

inline Image decode_ppm(const std::string& bytes, const std::string& path = "<memory>") {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw DataError("not a binary PPM (P6): " + path);
  std::size_t pos = 2;
  const auto w = detail::read_ppm_number(bytes, pos, path);
  const auto h = detail::read_ppm_number(bytes, pos, path);
  const auto maxval = detail::read_ppm_number(bytes, pos, path);
  if (w == 0 || h == 0) throw DataError("PPM has zero size: " + path);
  if (maxval != 255) throw DataError("only 8-bit PPM (maxval 255) is supported: " + path);
  ++pos;  // single whitespace byte before raster
  if (bytes.size() < pos + w * h * 3) throw DataError("truncated PPM raster: " + path);
  Image img(w, h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t o = pos + (y * w + x) * 3;
      img.at(x, y) = {static_cast<std::uint8_t>(bytes[o]), static_cast<std::uint8_t>(bytes[o + 1]),
                      static_cast<std::uint8_t>(bytes[o + 2])};
    }
  return img;
}

inline Image load_image(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext != ".ppm" && ext != ".PPM") throw DataError("unsupported image format (PPM P6 only): " + path.string());
  return decode_ppm(read_file(path), path.string());
}

inline void save_ppm(const Image& img, const std::filesystem::path& path) { write_file_atomic(path, encode_ppm(img)); }

}  // namespace themeann
