#pragma once

// Image themes: LDA over image descriptions fit by collapsed Gibbs sampling,
// plus theme-presence binarization and ranked theme words.

#include <cmath>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "themeann/common.hpp"
#include "themeann/corpus.hpp"

namespace themeann {

struct LdaConfig {
  std::size_t themes = 10;
  std::optional<double> alpha;  // defaults to 50 / K
  double beta = 0.01;
  std::size_t iterations = 1000;
  std::uint64_t seed = 1;
  std::size_t checkpoints = 10;  // log-likelihood samples over the run

  double resolved_alpha() const { return alpha ? *alpha : 50.0 / static_cast<double>(themes); }
};

/// A tokenized document: indices into a Vocabulary.
struct TokenDoc {
  std::string id;
  std::vector<std::size_t> tokens;
};

struct ThemeModel {
  std::size_t themes = 0;
  double alpha = 0.0;
  double beta = 0.0;
  std::size_t iterations = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> vocabulary;  // V terms
  std::vector<std::string> doc_ids;     // D documents
  Matrix phi;                           // K x V
  Matrix theta;                         // D x K
  std::vector<std::pair<std::size_t, double>> log_likelihood_trace;  // (iteration, log p(w | z))

  std::size_t vocab_size() const noexcept { return vocabulary.size(); }
};

namespace detail {

inline void check_rows_normalized(const Matrix& m, const char* what) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double s = 0.0;
    for (double v : m.row(r)) {
      if (!(v >= 0.0)) throw std::logic_error(std::string(what) + " has a negative or NaN entry");
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-9) throw std::logic_error(std::string(what) + " row does not sum to 1");
  }
}

inline void normalize_row(std::span<double> row) {
  double s = 0.0;
  for (double v : row) s += v;
  for (double& v : row) v /= s;
}

}  // namespace detail

/// log p(w | z) under the collapsed Dirichlet-multinomial for the topic-word counts.
inline double topic_word_log_likelihood(const std::vector<std::size_t>& topic_word, const std::vector<std::size_t>& topic_total,
                                        std::size_t K, std::size_t V, double beta) {
  double ll = 0.0;
  const double vb = static_cast<double>(V) * beta;
  for (std::size_t k = 0; k < K; ++k) {
    ll += std::lgamma(vb) - std::lgamma(static_cast<double>(topic_total[k]) + vb);
    for (std::size_t w = 0; w < V; ++w) ll += std::lgamma(static_cast<double>(topic_word[k * V + w]) + beta);
    ll -= static_cast<double>(V) * std::lgamma(beta);
  }
  return ll;
}

/// Collapsed Gibbs sampling with a single sequential chain. phi and theta are
/// the smoothed point estimates from the final sample.
inline ThemeModel fit_lda(const std::vector<TokenDoc>& docs, const Vocabulary& vocab, const LdaConfig& cfg) {
  if (docs.empty()) throw DataError("cannot fit LDA on an empty document set");
  if (cfg.themes == 0) throw ConfigError("number of themes must be >= 1");
  if (cfg.themes > docs.size())
    throw ConfigError("number of themes (" + std::to_string(cfg.themes) + ") exceeds document count (" +
                      std::to_string(docs.size()) + ")");
  const double alpha = cfg.resolved_alpha();
  if (!(alpha > 0.0) || !(cfg.beta > 0.0)) throw ConfigError("alpha and beta must be positive");
  if (vocab.empty()) throw DataError("empty vocabulary");
  for (const auto& d : docs) {
    if (d.tokens.empty()) throw DataError("document '" + d.id + "' has no in-vocabulary tokens");
    for (auto w : d.tokens)
      if (w >= vocab.size()) throw DataError("document '" + d.id + "' has a token outside the vocabulary");
  }

  const std::size_t K = cfg.themes, V = vocab.size(), D = docs.size();
  std::vector<std::size_t> topic_word(K * V, 0), topic_total(K, 0), doc_topic(D * K, 0);
  std::vector<std::vector<std::size_t>> z(D);
  Rng rng(cfg.seed);

  for (std::size_t d = 0; d < D; ++d) {
    z[d].resize(docs[d].tokens.size());
    for (std::size_t i = 0; i < docs[d].tokens.size(); ++i) {
      const auto k = uniform_index(rng, K);
      z[d][i] = k;
      ++topic_word[k * V + docs[d].tokens[i]];
      ++topic_total[k];
      ++doc_topic[d * K + k];
    }
  }

  ThemeModel model;
  model.themes = K;
  model.alpha = alpha;
  model.beta = cfg.beta;
  model.iterations = cfg.iterations;
  model.seed = cfg.seed;
  model.vocabulary = vocab.terms();

  const double vb = static_cast<double>(V) * cfg.beta;
  const std::size_t every = std::max<std::size_t>(1, cfg.iterations / std::max<std::size_t>(1, cfg.checkpoints));
  std::vector<double> p(K);
  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    for (std::size_t d = 0; d < D; ++d) {
      const auto& tokens = docs[d].tokens;
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        const std::size_t w = tokens[i];
        const std::size_t old = z[d][i];
        --topic_word[old * V + w];
        --topic_total[old];
        --doc_topic[d * K + old];
        for (std::size_t k = 0; k < K; ++k)
          p[k] = (static_cast<double>(doc_topic[d * K + k]) + alpha) *
                 (static_cast<double>(topic_word[k * V + w]) + cfg.beta) /
                 (static_cast<double>(topic_total[k]) + vb);
        const std::size_t k = sample_discrete(rng, p);
        z[d][i] = k;
        ++topic_word[k * V + w];
        ++topic_total[k];
        ++doc_topic[d * K + k];
      }
    }
    if (it % every == 0 || it == cfg.iterations)
      model.log_likelihood_trace.emplace_back(it, topic_word_log_likelihood(topic_word, topic_total, K, V, cfg.beta));
  }

  model.phi = Matrix(K, V);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t w = 0; w < V; ++w)
      model.phi(k, w) = (static_cast<double>(topic_word[k * V + w]) + cfg.beta) / (static_cast<double>(topic_total[k]) + vb);
    detail::normalize_row(model.phi.row(k));
  }
  model.theta = Matrix(D, K);
  for (std::size_t d = 0; d < D; ++d) {
    model.doc_ids.push_back(docs[d].id);
    const double len = static_cast<double>(docs[d].tokens.size());
    for (std::size_t k = 0; k < K; ++k)
      model.theta(d, k) = (static_cast<double>(doc_topic[d * K + k]) + alpha) / (len + static_cast<double>(K) * alpha);
    detail::normalize_row(model.theta.row(d));
  }
  detail::check_rows_normalized(model.phi, "phi");
  detail::check_rows_normalized(model.theta, "theta");
  return model;
}

/// Encode a tokenized corpus against a vocabulary, dropping OOV words.
inline std::vector<TokenDoc> encode_corpus(const Corpus& corpus, const Vocabulary& vocab) {
  std::vector<TokenDoc> out;
  out.reserve(corpus.size());
  for (const auto& d : corpus) out.push_back({d.id, vocab.encode(d.words)});
  return out;
}

/// Theme proportions for an unseen document with phi held fixed (Gibbs fold-in).
inline std::vector<double> infer_theta(const ThemeModel& model, const std::vector<std::size_t>& tokens,
                                       std::size_t iterations = 50, std::uint64_t seed = 1) {
  const std::size_t K = model.themes;
  std::vector<double> theta(K, 1.0 / static_cast<double>(K));
  if (tokens.empty()) return theta;
  Rng rng(seed);
  std::vector<std::size_t> z(tokens.size()), counts(K, 0);
  for (auto& k : z) {
    k = uniform_index(rng, K);
    ++counts[k];
  }
  std::vector<double> p(K);
  for (std::size_t it = 0; it < iterations; ++it)
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      --counts[z[i]];
      for (std::size_t k = 0; k < K; ++k) p[k] = (static_cast<double>(counts[k]) + model.alpha) * model.phi(k, tokens[i]);
      z[i] = sample_discrete(rng, p);
      ++counts[z[i]];
    }
  const double denom = static_cast<double>(tokens.size()) + static_cast<double>(K) * model.alpha;
  for (std::size_t k = 0; k < K; ++k) theta[k] = (static_cast<double>(counts[k]) + model.alpha) / denom;
  return theta;
}

/// Mean per-token log p(w | d) = log sum_k theta_dk phi_kw, with theta folded
/// in per document.
inline double held_out_log_likelihood(const ThemeModel& model, const std::vector<TokenDoc>& docs,
                                      std::size_t fold_in_iterations = 50) {
  if (docs.empty()) throw DataError("held-out log-likelihood needs at least one document");
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    const auto theta = infer_theta(model, docs[d].tokens, fold_in_iterations, model.seed + d);
    for (auto w : docs[d].tokens) {
      if (w >= model.vocab_size()) throw DataError("document '" + docs[d].id + "' has a token outside the vocabulary");
      double p = 0.0;
      for (std::size_t k = 0; k < model.themes; ++k) p += theta[k] * model.phi(k, w);
      total += std::log(p);
      ++n;
    }
  }
  if (n == 0) throw DataError("held-out documents contain no tokens");
  return total / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Presence

struct ThresholdRule {
  double tau = 0.1;
};
struct TopMRule {
  std::size_t m = 1;
};
using PresenceRule = std::variant<ThresholdRule, TopMRule>;

inline std::vector<bool> theme_presence(std::span<const double> theta, const PresenceRule& rule) {
  const std::size_t K = theta.size();
  std::vector<bool> out(K, false);
  if (const auto* t = std::get_if<ThresholdRule>(&rule)) {
    if (!(t->tau > 0.0)) throw ConfigError("presence threshold must be > 0");
    for (std::size_t k = 0; k < K; ++k) out[k] = theta[k] >= t->tau;
    return out;
  }
  const auto m = std::get<TopMRule>(rule).m;
  if (m == 0 || m > K) throw ConfigError("top-m presence rule needs 1 <= m <= K");
  std::vector<std::size_t> order(K);
  for (std::size_t k = 0; k < K; ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return theta[a] > theta[b]; });
  for (std::size_t i = 0; i < m; ++i) out[order[i]] = true;
  return out;
}

struct RankedWord {
  std::string word;
  std::size_t index = 0;
  double probability = 0.0;
};

/// The m most probable words of theme k; ties go to the lower vocabulary index.
inline std::vector<RankedWord> top_words(const ThemeModel& model, std::size_t k, std::size_t m) {
  if (k >= model.themes) throw ConfigError("theme index out of range");
  if (m == 0 || m > model.vocab_size()) throw ConfigError("top_words needs 1 <= m <= V");
  std::vector<std::size_t> order(model.vocab_size());
  for (std::size_t w = 0; w < order.size(); ++w) order[w] = w;
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return model.phi(k, a) > model.phi(k, b); });
  std::vector<RankedWord> out;
  for (std::size_t i = 0; i < m; ++i) out.push_back({model.vocabulary[order[i]], order[i], model.phi(k, order[i])});
  return out;
}

/// "'shorts': 0.1275, 'cyclist': 0.119, ..." with probabilities in shortest form.
inline std::string format_top_words(const std::vector<RankedWord>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", words[i].probability);
    if (i) out += ", ";
    out += "'" + words[i].word + "': " + buf;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization
//
//   themeann-theme-model 1
//   K <k>  V <v>  D <d>            (one key per line)
//   alpha, beta, iterations, seed
//   vocab   then V lines, one term each
//   phi     then K lines of V tab-separated values
//   theta   then D lines: doc_id<TAB>K values

inline std::string render_theme_model(const ThemeModel& m) {
  std::string out = "themeann-theme-model 1\n";
  out += "K " + std::to_string(m.themes) + "\n";
  out += "V " + std::to_string(m.vocab_size()) + "\n";
  out += "D " + std::to_string(m.doc_ids.size()) + "\n";
  out += "alpha " + format_double(m.alpha) + "\n";
  out += "beta " + format_double(m.beta) + "\n";
  out += "iterations " + std::to_string(m.iterations) + "\n";
  out += "seed " + std::to_string(m.seed) + "\n";
  out += "vocab\n";
  for (const auto& w : m.vocabulary) out += w + "\n";
  out += "phi\n";
  for (std::size_t k = 0; k < m.themes; ++k) {
    for (std::size_t w = 0; w < m.vocab_size(); ++w) out += (w ? "\t" : "") + format_double(m.phi(k, w));
    out += "\n";
  }
  out += "theta\n";
  for (std::size_t d = 0; d < m.doc_ids.size(); ++d) {
    out += m.doc_ids[d];
    for (std::size_t k = 0; k < m.themes; ++k) out += "\t" + format_double(m.theta(d, k));
    out += "\n";
  }
  return out;
}

inline ThemeModel parse_theme_model(std::string_view text) {
  const auto lines = split(text, '\n');
  std::size_t i = 0;
  auto next = [&]() -> const std::string& {
    if (i >= lines.size()) throw DataError("theme model file truncated");
    return lines[i++];
  };
  if (next() != "themeann-theme-model 1") throw DataError("not a theme model file");
  auto field = [&](const char* key) {
    const auto f = split(next(), ' ');
    if (f.size() != 2 || f[0] != key) throw DataError(std::string("theme model file: expected ") + key);
    return f[1];
  };
  ThemeModel m;
  m.themes = static_cast<std::size_t>(parse_int(field("K"), "K"));
  const auto V = static_cast<std::size_t>(parse_int(field("V"), "V"));
  const auto D = static_cast<std::size_t>(parse_int(field("D"), "D"));
  m.alpha = parse_double(field("alpha"), "alpha");
  m.beta = parse_double(field("beta"), "beta");
  m.iterations = static_cast<std::size_t>(parse_int(field("iterations"), "iterations"));
  m.seed = static_cast<std::uint64_t>(parse_int(field("seed"), "seed"));
  if (next() != "vocab") throw DataError("theme model file: expected vocab");
  for (std::size_t w = 0; w < V; ++w) m.vocabulary.push_back(next());
  if (next() != "phi") throw DataError("theme model file: expected phi");
  m.phi = Matrix(m.themes, V);
  for (std::size_t k = 0; k < m.themes; ++k) {
    const auto f = split(next(), '\t');
    if (f.size() != V) throw DataError("theme model file: bad phi row");
    for (std::size_t w = 0; w < V; ++w) m.phi(k, w) = parse_double(f[w], "phi");
  }
  if (next() != "theta") throw DataError("theme model file: expected theta");
  m.theta = Matrix(D, m.themes);
  for (std::size_t d = 0; d < D; ++d) {
    const auto f = split(next(), '\t');
    if (f.size() != m.themes + 1) throw DataError("theme model file: bad theta row");
    m.doc_ids.push_back(f[0]);
    for (std::size_t k = 0; k < m.themes; ++k) m.theta(d, k) = parse_double(f[k + 1], "theta");
  }
  return m;
}

}  // namespace themeann
