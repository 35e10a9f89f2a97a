#pragma once

// Grid tiling and per-tile visual features: 18 colour statistics (RGB, CIE
// LUV and CIE LAB means and standard deviations) followed by 12 Gabor
// texture energies (3 scales x 4 orientations).

#include <array>
#include <cmath>
#include <complex>
#include <map>
#include <string>
#include <vector>

#include "themeann/common.hpp"
#include "themeann/image.hpp"

namespace themeann {

inline constexpr std::size_t kColorDims = 18;
inline constexpr std::size_t kTextureDims = 12;
inline constexpr std::size_t kFeatureDims = kColorDims + kTextureDims;

struct GridSpec {
  std::size_t rows = 5;
  std::size_t cols = 5;
  std::size_t tiles() const noexcept { return rows * cols; }
  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// Pixel rectangle of one tile.
struct TileRect {
  std::size_t x = 0, y = 0, width = 0, height = 0;
  friend bool operator==(const TileRect&, const TileRect&) = default;
};

/// Row-major tile rectangles. The last row/column absorbs any remainder.
inline std::vector<TileRect> tile(std::size_t width, std::size_t height, const GridSpec& grid) {
  if (grid.rows == 0 || grid.cols == 0) throw ConfigError("grid must have at least one row and column");
  if (width < grid.cols || height < grid.rows)
    throw DataError("image " + std::to_string(width) + "x" + std::to_string(height) + " is smaller than the " +
                    std::to_string(grid.cols) + "x" + std::to_string(grid.rows) + " grid");
  const std::size_t bw = width / grid.cols;
  const std::size_t bh = height / grid.rows;
  std::vector<TileRect> out;
  out.reserve(grid.tiles());
  for (std::size_t r = 0; r < grid.rows; ++r)
    for (std::size_t c = 0; c < grid.cols; ++c) {
      TileRect t{c * bw, r * bh, bw, bh};
      if (c + 1 == grid.cols) t.width = width - t.x;
      if (r + 1 == grid.rows) t.height = height - t.y;
      out.push_back(t);
    }
  return out;
}

inline std::vector<TileRect> tile(const Image& img, const GridSpec& grid) { return tile(img.width(), img.height(), grid); }

// ---------------------------------------------------------------------------
// Colour

namespace color {

// sRGB primaries, D65 reference white.
inline constexpr double kWhiteX = 0.95047, kWhiteY = 1.0, kWhiteZ = 1.08883;

inline double srgb_to_linear(double c) { return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4); }

inline std::array<double, 3> rgb8_to_xyz(Rgb p) {
  const double r = srgb_to_linear(p.r / 255.0);
  const double g = srgb_to_linear(p.g / 255.0);
  const double b = srgb_to_linear(p.b / 255.0);
  return {0.4124564 * r + 0.3575761 * g + 0.1804375 * b, 0.2126729 * r + 0.7151522 * g + 0.0721750 * b,
          0.0193339 * r + 0.1191920 * g + 0.9503041 * b};
}

inline double lab_f(double t) {
  constexpr double d = 6.0 / 29.0;
  return t > d * d * d ? std::cbrt(t) : t / (3.0 * d * d) + 4.0 / 29.0;
}

inline std::array<double, 3> xyz_to_lab(const std::array<double, 3>& xyz) {
  const double fx = lab_f(xyz[0] / kWhiteX), fy = lab_f(xyz[1] / kWhiteY), fz = lab_f(xyz[2] / kWhiteZ);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

inline std::array<double, 3> xyz_to_luv(const std::array<double, 3>& xyz) {
  const double l = 116.0 * lab_f(xyz[1] / kWhiteY) - 16.0;
  const double den = xyz[0] + 15.0 * xyz[1] + 3.0 * xyz[2];
  if (den <= 0.0) return {l, 0.0, 0.0};
  const double wden = kWhiteX + 15.0 * kWhiteY + 3.0 * kWhiteZ;
  const double un = 4.0 * kWhiteX / wden, vn = 9.0 * kWhiteY / wden;
  const double u = 4.0 * xyz[0] / den, v = 9.0 * xyz[1] / den;
  return {l, 13.0 * l * (u - un), 13.0 * l * (v - vn)};
}

}  // namespace color

/// [mean R,G,B, std R,G,B, mean L,U,V, std L,U,V, mean L*,a*,b*, std L*,a*,b*],
/// RGB on the 8-bit scale, population standard deviations.
inline std::array<double, kColorDims> color_features(const Image& img, const TileRect& t) {
  if (t.width == 0 || t.height == 0) throw DataError("empty tile");
  std::array<double, 9> sum{}, sumsq{};
  for (std::size_t y = t.y; y < t.y + t.height; ++y)
    for (std::size_t x = t.x; x < t.x + t.width; ++x) {
      const Rgb p = img.at(x, y);
      const auto xyz = color::rgb8_to_xyz(p);
      const auto luv = color::xyz_to_luv(xyz);
      const auto lab = color::xyz_to_lab(xyz);
      const std::array<double, 9> v = {double(p.r), double(p.g), double(p.b), luv[0], luv[1],
                                       luv[2],      lab[0],      lab[1],      lab[2]};
      for (std::size_t i = 0; i < 9; ++i) {
        sum[i] += v[i];
        sumsq[i] += v[i] * v[i];
      }
    }
  const double n = static_cast<double>(t.width * t.height);
  std::array<double, kColorDims> out{};
  for (std::size_t space = 0; space < 3; ++space)
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const std::size_t i = space * 3 + ch;
      const double mean = sum[i] / n;
      const double var = std::max(0.0, sumsq[i] / n - mean * mean);
      out[space * 6 + ch] = mean;
      out[space * 6 + 3 + ch] = std::sqrt(var);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Texture

struct GaborConfig {
  double base_wavelength = 3.0;  // pixels, finest scale; scales are one octave apart
  std::size_t scales = 3;
  std::size_t orientations = 4;  // evenly spaced over [0, 180) degrees
  double sigma_per_wavelength = 0.5;
  double support_sigmas = 2.0;  // kernel radius = ceil(support_sigmas * sigma)
};

/// One complex Gabor kernel with a zero-mean real part and an envelope that
/// sums to one.
struct GaborKernel {
  std::size_t radius = 0;
  std::vector<double> re, im;  // (2r+1)^2, row-major, row = y offset
};

inline GaborKernel make_gabor_kernel(double wavelength, double theta, const GaborConfig& cfg) {
  const double sigma = cfg.sigma_per_wavelength * wavelength;
  GaborKernel k;
  k.radius = static_cast<std::size_t>(std::ceil(cfg.support_sigmas * sigma));
  const std::size_t side = 2 * k.radius + 1;
  const int r = static_cast<int>(k.radius);
  std::vector<double> env(side * side);
  k.re.resize(side * side);
  k.im.resize(side * side);
  double env_sum = 0.0, re_weighted = 0.0;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) {
      const std::size_t i = static_cast<std::size_t>(dy + r) * side + static_cast<std::size_t>(dx + r);
      const double e = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      const double phase = 2.0 * M_PI * (dx * std::cos(theta) + dy * std::sin(theta)) / wavelength;
      env[i] = e;
      k.re[i] = e * std::cos(phase);
      k.im[i] = e * std::sin(phase);
      env_sum += e;
      re_weighted += k.re[i];
    }
  // Remove the DC component so constant input gives zero response.
  const double dc = re_weighted / env_sum;
  for (std::size_t i = 0; i < env.size(); ++i) {
    k.re[i] = (k.re[i] - dc * env[i]) / env_sum;
    k.im[i] /= env_sum;
  }
  return k;
}

/// Filter bank ordered scale-major: index = scale * orientations + orientation.
inline std::vector<GaborKernel> make_gabor_bank(const GaborConfig& cfg = {}) {
  std::vector<GaborKernel> bank;
  for (std::size_t s = 0; s < cfg.scales; ++s)
    for (std::size_t o = 0; o < cfg.orientations; ++o)
      bank.push_back(make_gabor_kernel(cfg.base_wavelength * std::pow(2.0, double(s)),
                                       M_PI * double(o) / double(cfg.orientations), cfg));
  return bank;
}

inline std::size_t gabor_min_tile_size(const std::vector<GaborKernel>& bank) {
  std::size_t r = 0;
  for (const auto& k : bank) r = std::max(r, k.radius);
  return 2 * r + 1;
}

/// Mean response magnitude of each filter over the positions where the kernel
/// lies entirely inside the tile. Intensity is luma scaled to [0, 1].
inline std::vector<double> gabor_features(const Image& img, const TileRect& t, const std::vector<GaborKernel>& bank) {
  const std::size_t need = gabor_min_tile_size(bank);
  if (t.width < need || t.height < need)
    throw DataError("tile " + std::to_string(t.width) + "x" + std::to_string(t.height) +
                    " is smaller than the Gabor support; minimum tile size is " + std::to_string(need) + "x" +
                    std::to_string(need));
  std::vector<double> gray(t.width * t.height);
  for (std::size_t y = 0; y < t.height; ++y)
    for (std::size_t x = 0; x < t.width; ++x) {
      const Rgb p = img.at(t.x + x, t.y + y);
      gray[y * t.width + x] = (0.299 * p.r + 0.587 * p.g + 0.114 * p.b) / 255.0;
    }
  std::vector<double> out;
  out.reserve(bank.size());
  for (const auto& k : bank) {
    const std::size_t side = 2 * k.radius + 1;
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t cy = k.radius; cy + k.radius < t.height; ++cy)
      for (std::size_t cx = k.radius; cx + k.radius < t.width; ++cx) {
        double re = 0.0, im = 0.0;
        for (std::size_t ky = 0; ky < side; ++ky) {
          const double* row = &gray[(cy + ky - k.radius) * t.width + (cx - k.radius)];
          const double* kre = &k.re[ky * side];
          const double* kim = &k.im[ky * side];
          for (std::size_t kx = 0; kx < side; ++kx) {
            re += kre[kx] * row[kx];
            im += kim[kx] * row[kx];
          }
        }
        total += std::sqrt(re * re + im * im);
        ++count;
      }
    out.push_back(total / static_cast<double>(count));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Feature grids

/// Per-image matrix of n tiles x d features, tiles in row-major grid order.
struct FeatureGrid {
  std::string image_id;
  Matrix values;

  std::size_t tiles() const noexcept { return values.rows(); }
  std::size_t dims() const noexcept { return values.cols(); }
  std::span<const double> tile(std::size_t a) const { return values.row(a); }

  friend bool operator==(const FeatureGrid&, const FeatureGrid&) = default;
};

struct FeatureExtractor {
  GridSpec grid;
  GaborConfig gabor;

  FeatureExtractor() : bank_(make_gabor_bank(gabor)) {}
  FeatureExtractor(GridSpec g, GaborConfig gc = {}) : grid(g), gabor(gc), bank_(make_gabor_bank(gabor)) {}

  const std::vector<GaborKernel>& bank() const noexcept { return bank_; }

  FeatureGrid extract(const Image& img, std::string id = {}) const {
    const auto rects = tile(img, grid);
    FeatureGrid fg{std::move(id), Matrix(rects.size(), kColorDims + bank_.size())};
    for (std::size_t a = 0; a < rects.size(); ++a) {
      const auto c = color_features(img, rects[a]);
      const auto g = gabor_features(img, rects[a], bank_);
      auto row = fg.values.row(a);
      std::copy(c.begin(), c.end(), row.begin());
      std::copy(g.begin(), g.end(), row.begin() + kColorDims);
    }
    return fg;
  }

 private:
  std::vector<GaborKernel> bank_;
};

inline FeatureGrid extract(const Image& img, const GridSpec& grid, std::string id = {}) {
  return FeatureExtractor(grid).extract(img, std::move(id));
}

// ---------------------------------------------------------------------------
// Standardization

struct FeatureStandardizer {
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<bool> constant;

  FeatureGrid apply(const FeatureGrid& g) const {
    if (g.dims() != mean.size()) throw DataError("feature dimension mismatch in standardizer");
    FeatureGrid out = g;
    for (std::size_t a = 0; a < out.tiles(); ++a)
      for (std::size_t d = 0; d < out.dims(); ++d) out.values(a, d) = (g.values(a, d) - mean[d]) / stddev[d];
    return out;
  }
};

/// Per-dimension z-scores pooled over every tile of every training image.
/// Dimensions with zero spread keep stddev 1 and are flagged constant.
inline FeatureStandardizer fit_standardizer(std::span<const FeatureGrid> train) {
  if (train.size() < 2) throw DataError("standardizer needs at least 2 training images");
  const std::size_t d = train.front().dims();
  FeatureStandardizer s{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0), std::vector<bool>(d, false)};
  std::size_t n = 0;
  for (const auto& g : train) {
    if (g.dims() != d) throw DataError("feature dimension mismatch across training grids");
    for (std::size_t a = 0; a < g.tiles(); ++a)
      for (std::size_t j = 0; j < d; ++j) s.mean[j] += g.values(a, j);
    n += g.tiles();
  }
  for (auto& m : s.mean) m /= static_cast<double>(n);
  for (const auto& g : train)
    for (std::size_t a = 0; a < g.tiles(); ++a)
      for (std::size_t j = 0; j < d; ++j) {
        const double dv = g.values(a, j) - s.mean[j];
        s.stddev[j] += dv * dv;
      }
  for (std::size_t j = 0; j < d; ++j) {
    s.stddev[j] = std::sqrt(s.stddev[j] / static_cast<double>(n));
    if (!(s.stddev[j] > 1e-12 * std::max(1.0, std::abs(s.mean[j])))) {
      s.stddev[j] = 1.0;
      s.constant[j] = true;
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Text serialization
//
// Feature file: header line `# image_id<TAB>tile<TAB>f0..f{d-1}` then one row
// per tile: `id<TAB>tile_index<TAB>v0<TAB>...`. Tiles of one image are
// contiguous and in order.

inline std::string render_feature_grids(std::span<const FeatureGrid> grids) {
  std::string out = "# image_id\ttile";
  const std::size_t d = grids.empty() ? kFeatureDims : grids.front().dims();
  for (std::size_t j = 0; j < d; ++j) out += "\tf" + std::to_string(j);
  out += "\n";
  for (const auto& g : grids)
    for (std::size_t a = 0; a < g.tiles(); ++a) {
      out += g.image_id + "\t" + std::to_string(a);
      for (double v : g.tile(a)) out += "\t" + format_double(v);
      out += "\n";
    }
  return out;
}

inline std::vector<FeatureGrid> parse_feature_grids(std::string_view text) {
  std::vector<FeatureGrid> out;
  std::vector<std::vector<double>> rows;
  std::string current;
  auto finish = [&] {
    if (current.empty()) return;
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t a = 0; a < rows.size(); ++a) std::copy(rows[a].begin(), rows[a].end(), m.row(a).begin());
    out.push_back({current, std::move(m)});
    rows.clear();
  };
  std::size_t line_no = 0;
  for (const auto& line : split(text, '\n')) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split(line, '\t');
    if (fields.size() < 3) throw DataError("feature file line " + std::to_string(line_no) + ": too few fields");
    if (fields[0] != current) {
      finish();
      current = fields[0];
    }
    if (parse_int(fields[1], "tile index") != static_cast<long long>(rows.size()))
      throw DataError("feature file line " + std::to_string(line_no) + ": tiles out of order");
    std::vector<double> v;
    for (std::size_t i = 2; i < fields.size(); ++i) v.push_back(parse_double(fields[i], "feature value"));
    if (!rows.empty() && v.size() != rows.front().size())
      throw DataError("feature file line " + std::to_string(line_no) + ": inconsistent dimension");
    rows.push_back(std::move(v));
  }
  finish();
  return out;
}

inline std::string render_standardizer(const FeatureStandardizer& s) {
  std::string out = "# dim\tmean\tstddev\tconstant\n";
  for (std::size_t j = 0; j < s.mean.size(); ++j)
    out += std::to_string(j) + "\t" + format_double(s.mean[j]) + "\t" + format_double(s.stddev[j]) + "\t" +
           (s.constant[j] ? "1" : "0") + "\n";
  return out;
}

inline FeatureStandardizer parse_standardizer(std::string_view text) {
  FeatureStandardizer s;
  for (const auto& line : split(text, '\n')) {
    if (line.empty() || line.front() == '#') continue;
    const auto f = split(line, '\t');
    if (f.size() != 4) throw DataError("malformed standardizer row");
    s.mean.push_back(parse_double(f[1], "mean"));
    s.stddev.push_back(parse_double(f[2], "stddev"));
    s.constant.push_back(f[3] == "1");
  }
  return s;
}

}  // namespace themeann
