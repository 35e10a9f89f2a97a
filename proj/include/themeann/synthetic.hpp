#pragma once

// Synthetic image+text corpora sampled from a known theme model. Each theme
// owns a block of "core" words and a per-grid-cell visual signature (base
// colour plus an oriented stripe grating). A document draws theme
// proportions, samples its words from the themes, and each grid cell of its
// image renders the signature of a theme drawn from the same proportions.
//
// Optional visual groups add cluster structure: every document belongs to one
// group, only uses that group's themes, and all its cells carry the group's
// colour tint.

#include <array>
#include <string>
#include <vector>

#include "themeann/common.hpp"
#include "themeann/corpus.hpp"
#include "themeann/features.hpp"
#include "themeann/image.hpp"

namespace themeann {

struct SynthConfig {
  std::size_t themes = 3;  // per group
  std::size_t groups = 1;
  std::size_t vocab = 30;
  std::size_t docs = 200;
  std::size_t doc_length = 60;
  double alpha = 0.1;        // Dirichlet concentration of per-document theme proportions
  double leak = 0.05;        // phi mass spread uniformly over the whole vocabulary
  bool shared_group_vocabulary = false;  // theme j of every group uses the same core words
  GridSpec grid{5, 5};
  std::size_t tile_size = 28;  // pixels per cell side
  double stripe_amplitude = 40.0;
  double noise = 8.0;
  double group_tint = 60.0;
  std::uint64_t seed = 1;

  std::size_t total_themes() const noexcept { return themes * groups; }

  void validate() const {
    if (themes == 0 || groups == 0) throw ConfigError("synthetic themes and groups must be >= 1");
    if (docs == 0 || doc_length == 0) throw ConfigError("synthetic docs and doc_length must be >= 1");
    const std::size_t blocks = shared_group_vocabulary ? themes : total_themes();
    if (vocab < blocks) throw ConfigError("synthetic vocab must have at least one word per theme block");
    if (!(alpha > 0.0)) throw ConfigError("synthetic alpha must be > 0");
    if (!(leak >= 0.0 && leak < 1.0)) throw ConfigError("synthetic leak must lie in [0, 1)");
    if (grid.rows == 0 || grid.cols == 0 || tile_size == 0) throw ConfigError("synthetic grid must be non-empty");
  }

  static SynthConfig from_keys(const KeyValues& kv, const std::string& prefix = "synth.") {
    SynthConfig c;
    c.themes = static_cast<std::size_t>(kv.get_int(prefix + "themes", static_cast<long long>(c.themes)));
    c.groups = static_cast<std::size_t>(kv.get_int(prefix + "groups", static_cast<long long>(c.groups)));
    c.vocab = static_cast<std::size_t>(kv.get_int(prefix + "vocab", static_cast<long long>(c.vocab)));
    c.docs = static_cast<std::size_t>(kv.get_int(prefix + "docs", static_cast<long long>(c.docs)));
    c.doc_length = static_cast<std::size_t>(kv.get_int(prefix + "doc_length", static_cast<long long>(c.doc_length)));
    c.alpha = kv.get(prefix + "alpha", c.alpha);
    c.leak = kv.get(prefix + "leak", c.leak);
    c.shared_group_vocabulary = kv.get_bool(prefix + "shared_group_vocabulary", c.shared_group_vocabulary);
    c.grid.rows = static_cast<std::size_t>(kv.get_int(prefix + "grid_rows", static_cast<long long>(c.grid.rows)));
    c.grid.cols = static_cast<std::size_t>(kv.get_int(prefix + "grid_cols", static_cast<long long>(c.grid.cols)));
    c.tile_size = static_cast<std::size_t>(kv.get_int(prefix + "tile_size", static_cast<long long>(c.tile_size)));
    c.stripe_amplitude = kv.get(prefix + "stripe_amplitude", c.stripe_amplitude);
    c.noise = kv.get(prefix + "noise", c.noise);
    c.group_tint = kv.get(prefix + "group_tint", c.group_tint);
    c.seed = static_cast<std::uint64_t>(kv.get_int(prefix + "seed", static_cast<long long>(c.seed)));
    c.validate();
    return c;
  }
};

struct CellSignature {
  double r = 0, g = 0, b = 0;
  double orientation = 0;  // radians
  double wavelength = 6;   // pixels
};

struct SyntheticCorpus {
  Corpus corpus;                 // descriptions set, words tokenized, image_ref empty
  std::vector<Image> images;     // one per document
  std::vector<std::string> words;  // word of each vocabulary index
  Matrix phi;                    // total_themes x vocab
  Matrix theta;                  // docs x total_themes
  std::vector<std::size_t> dominant;  // argmax of each theta row
  std::vector<std::size_t> group;     // visual group of each document
};

inline std::string synthetic_word(std::size_t i) {
  // pronounceable, stopword-free tokens: ba, be, bi, ... then two syllables
  static const char* consonants = "bdfgklmnprstvz";
  static const char* vowels = "aeiou";
  std::string w;
  std::size_t x = i;
  do {
    w += consonants[x % 14];
    x /= 14;
    w += vowels[x % 5];
    x /= 5;
  } while (x > 0);
  return w + "o";
}

inline SyntheticCorpus generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const std::size_t T = cfg.total_themes(), V = cfg.vocab, cells = cfg.grid.tiles();
  SyntheticCorpus out;
  for (std::size_t w = 0; w < V; ++w) out.words.push_back(synthetic_word(w));

  // theme-word distributions
  const std::size_t blocks = cfg.shared_group_vocabulary ? cfg.themes : T;
  out.phi = Matrix(T, V);
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t block = cfg.shared_group_vocabulary ? t % cfg.themes : t;
    const std::size_t lo = block * V / blocks, hi = (block + 1) * V / blocks;
    std::vector<double> ones(hi - lo, 1.0);
    const auto core = dirichlet_variate(rng, ones);
    for (std::size_t w = 0; w < V; ++w) out.phi(t, w) = cfg.leak / static_cast<double>(V);
    for (std::size_t w = lo; w < hi; ++w) out.phi(t, w) += (1.0 - cfg.leak) * core[w - lo];
  }

  // visual signatures per theme and cell, tints per group
  static const double kOrientations[] = {0.0, M_PI / 4, M_PI / 2, 3 * M_PI / 4};
  static const double kWavelengths[] = {3.0, 6.0, 12.0};
  std::vector<std::vector<CellSignature>> sig(T, std::vector<CellSignature>(cells));
  for (auto& theme : sig)
    for (auto& s : theme) {
      s.r = 40 + 175 * uniform01(rng);
      s.g = 40 + 175 * uniform01(rng);
      s.b = 40 + 175 * uniform01(rng);
      s.orientation = kOrientations[uniform_index(rng, 4)];
      s.wavelength = kWavelengths[uniform_index(rng, 3)];
    }
  std::vector<std::array<double, 3>> tint(cfg.groups);
  for (auto& t : tint)
    for (auto& c : t) c = cfg.groups > 1 ? cfg.group_tint * (2.0 * uniform01(rng) - 1.0) : 0.0;

  const std::vector<double> alpha(cfg.themes, cfg.alpha);
  const std::size_t width = cfg.grid.cols * cfg.tile_size, height = cfg.grid.rows * cfg.tile_size;
  out.theta = Matrix(cfg.docs, T);
  for (std::size_t d = 0; d < cfg.docs; ++d) {
    const std::size_t g = d % cfg.groups;
    const auto local = dirichlet_variate(rng, alpha);
    for (std::size_t j = 0; j < cfg.themes; ++j) out.theta(d, g * cfg.themes + j) = local[j];
    std::size_t dom = 0;
    for (std::size_t t = 1; t < T; ++t)
      if (out.theta(d, t) > out.theta(d, dom)) dom = t;
    out.dominant.push_back(dom);
    out.group.push_back(g);

    ImageDoc doc;
    char id[32];
    std::snprintf(id, sizeof id, "img%05zu", d);
    doc.id = id;
    for (std::size_t n = 0; n < cfg.doc_length; ++n) {
      const auto t = sample_discrete(rng, out.theta.row(d));
      const auto w = sample_discrete(rng, out.phi.row(t));
      doc.words.push_back(out.words[w]);
      doc.description += (n ? " " : "") + out.words[w];
    }
    out.corpus.push_back(std::move(doc));

    Image img(width, height);
    for (std::size_t c = 0; c < cells; ++c) {
      const auto t = sample_discrete(rng, out.theta.row(d));
      const auto& s = sig[t][c];
      const std::size_t x0 = (c % cfg.grid.cols) * cfg.tile_size, y0 = (c / cfg.grid.cols) * cfg.tile_size;
      for (std::size_t y = y0; y < y0 + cfg.tile_size; ++y)
        for (std::size_t x = x0; x < x0 + cfg.tile_size; ++x) {
          const double wave = cfg.stripe_amplitude *
                              std::sin(2 * M_PI * (x * std::cos(s.orientation) + y * std::sin(s.orientation)) / s.wavelength);
          auto px = [&](double base, double tnt) {
            const double v = base + tnt + wave + cfg.noise * standard_normal(rng);
            return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
          };
          img.at(x, y) = {px(s.r, tint[g][0]), px(s.g, tint[g][1]), px(s.b, tint[g][2])};
        }
    }
    out.images.push_back(std::move(img));
  }
  return out;
}

}  // namespace themeann
