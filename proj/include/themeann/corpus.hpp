#pragma once

// Image/description corpora: manifest ingestion, tokenization, vocabulary
// construction and reproducible train/test splits.

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "themeann/common.hpp"

namespace themeann {

struct ImageDoc {
  std::string id;
  std::string image_ref;
  std::string description;
  std::vector<std::string> words;  // filled by tokenize_corpus
};

using Corpus = std::vector<ImageDoc>;

// ---------------------------------------------------------------------------
// Tokenization

inline const std::set<std::string>& default_stopwords() {
  static const std::set<std::string> words = {
      "a",    "an",   "and",   "are",  "as",    "at",   "be",   "been", "but",   "by",   "for",
      "from", "has",  "have",  "he",   "her",   "his",  "in",   "into", "is",    "it",   "its",
      "of",   "on",   "or",    "she",  "that",  "the",  "their", "there", "they", "this", "to",
      "was",  "were", "which", "while", "with", "who",  "some", "other", "one",  "two",  "three"};
  return words;
}

struct TokenizerConfig {
  std::set<std::string> stopwords = default_stopwords();
  std::size_t min_length = 1;
};

/// One stopword per line; blank lines and `#` comments ignored.
inline std::set<std::string> load_stopwords(const std::filesystem::path& path) {
  std::set<std::string> out;
  for (const auto& line : split(read_file(path), '\n')) {
    auto w = trim(line);
    if (w.empty() || w.front() == '#') continue;
    for (auto& c : w) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    out.insert(w);
  }
  return out;
}

/// Lowercase, split on ASCII punctuation/whitespace, drop apostrophes inside
/// words, and filter stopwords. Non-ASCII bytes are kept as word characters.
inline std::vector<std::string> tokenize(std::string_view text, const TokenizerConfig& cfg = {}) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (cur.size() >= cfg.min_length && !cur.empty() && !cfg.stopwords.count(cur)) out.push_back(cur);
    cur.clear();
  };
  for (unsigned char c : text) {
    if (c >= 0x80 || std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (c == '\'') {
      continue;
    } else {
      flush();
    }
  }
  flush();
  return out;
}

inline void tokenize_corpus(Corpus& corpus, const TokenizerConfig& cfg = {}) {
  for (auto& doc : corpus) doc.words = tokenize(doc.description, cfg);
}

// ---------------------------------------------------------------------------
// Manifest
//
// Pipe-delimited text with header `id|image|description`. Image paths are
// resolved relative to the manifest's directory. Everything after the second
// delimiter is the description.

inline Corpus parse_manifest(std::string_view text, const std::filesystem::path& base_dir, bool check_images = true) {
  Corpus corpus;
  std::unordered_set<std::string> seen;
  const auto lines = split(text, '\n');
  bool header_seen = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t row = i + 1;
    std::string line = lines[i];
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (!header_seen) {
      if (trim(line) != "id|image|description")
        throw DataError("manifest row " + std::to_string(row) + ": expected header 'id|image|description'");
      header_seen = true;
      continue;
    }
    const auto p1 = line.find('|');
    const auto p2 = p1 == std::string::npos ? std::string::npos : line.find('|', p1 + 1);
    if (p2 == std::string::npos)
      throw DataError("manifest row " + std::to_string(row) + ": malformed row (expected id|image|description)");
    ImageDoc doc;
    doc.id = trim(line.substr(0, p1));
    doc.image_ref = trim(line.substr(p1 + 1, p2 - p1 - 1));
    doc.description = trim(line.substr(p2 + 1));
    if (doc.id.empty()) throw DataError("manifest row " + std::to_string(row) + ": empty id");
    if (doc.image_ref.empty()) throw DataError("manifest row " + std::to_string(row) + ": empty image path");
    if (!seen.insert(doc.id).second)
      throw DataError("manifest row " + std::to_string(row) + ": duplicate id '" + doc.id + "'");
    std::filesystem::path img(doc.image_ref);
    if (img.is_relative()) img = base_dir / img;
    if (check_images && !std::filesystem::exists(img))
      throw DataError("manifest row " + std::to_string(row) + ": missing image file '" + img.string() + "'");
    doc.image_ref = img.lexically_normal().string();
    corpus.push_back(std::move(doc));
  }
  return corpus;
}

inline Corpus load_manifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("manifest not found: " + path.string());
  return parse_manifest(read_file(path), path.parent_path());
}

inline std::string render_manifest(const Corpus& corpus) {
  std::string out = "id|image|description\n";
  for (const auto& d : corpus) out += d.id + "|" + d.image_ref + "|" + d.description + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

class Vocabulary {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  Vocabulary() = default;

  /// Terms in index order with their raw counts; p_v is count / total.
  Vocabulary(std::vector<std::string> terms, std::vector<double> counts) : terms_(std::move(terms)) {
    double total = 0.0;
    for (double c : counts) total += c;
    freq_.resize(terms_.size());
    for (std::size_t i = 0; i < terms_.size(); ++i) {
      freq_[i] = total > 0 ? counts[i] / total : 0.0;
      index_.emplace(terms_[i], i);
    }
  }

  std::size_t size() const noexcept { return terms_.size(); }
  bool empty() const noexcept { return terms_.empty(); }
  const std::string& term(std::size_t i) const { return terms_.at(i); }
  const std::vector<std::string>& terms() const noexcept { return terms_; }
  double frequency(std::size_t i) const { return freq_.at(i); }
  const std::vector<double>& frequencies() const noexcept { return freq_; }

  std::size_t index(const std::string& term) const {
    auto it = index_.find(term);
    return it == index_.end() ? npos : it->second;
  }
  bool contains(const std::string& term) const { return index_.count(term) != 0; }

  /// Map words to indices, dropping out-of-vocabulary words.
  std::vector<std::size_t> encode(const std::vector<std::string>& words, std::size_t* oov = nullptr) const {
    std::vector<std::size_t> out;
    std::size_t missing = 0;
    for (const auto& w : words) {
      const auto i = index(w);
      if (i == npos)
        ++missing;
      else
        out.push_back(i);
    }
    if (oov) *oov = missing;
    return out;
  }

 private:
  std::vector<std::string> terms_;
  std::vector<double> freq_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Terms occurring at least `min_count` times, in order of first occurrence.
/// If `max_terms` is set, only the most frequent terms are kept (ties by first
/// occurrence).
inline Vocabulary build_vocabulary(const Corpus& corpus, std::size_t min_count = 1,
                                   std::optional<std::size_t> max_terms = std::nullopt) {
  std::vector<std::string> order;
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& doc : corpus)
    for (const auto& w : doc.words)
      if (counts[w]++ == 0) order.push_back(w);
  std::vector<std::string> kept;
  for (const auto& w : order)
    if (counts[w] >= min_count) kept.push_back(w);
  if (max_terms && kept.size() > *max_terms) {
    std::stable_sort(kept.begin(), kept.end(), [&](const auto& a, const auto& b) { return counts[a] > counts[b]; });
    kept.resize(*max_terms);
    // restore first-occurrence order
    std::unordered_set<std::string> keep(kept.begin(), kept.end());
    kept.clear();
    for (const auto& w : order)
      if (keep.count(w)) kept.push_back(w);
  }
  if (kept.empty()) throw DataError("empty vocabulary: every term was filtered out (min_count=" +
                                    std::to_string(min_count) + ")");
  std::vector<double> c;
  for (const auto& w : kept) c.push_back(static_cast<double>(counts[w]));
  return Vocabulary(std::move(kept), std::move(c));
}

// ---------------------------------------------------------------------------
// Splits

struct SplitSpec {
  double test_fraction = 0.1;
  std::uint64_t seed = 1;
};

struct Split {
  Corpus train;
  Corpus test;
};

/// Deterministic per (corpus, spec). Both sides keep the corpus order.
inline Split split(const Corpus& corpus, const SplitSpec& spec) {
  if (corpus.empty()) throw DataError("cannot split an empty corpus");
  if (!(spec.test_fraction > 0.0 && spec.test_fraction < 1.0))
    throw ConfigError("test_fraction must lie in (0, 1)");
  const auto n = corpus.size();
  const auto n_test = static_cast<std::size_t>(std::llround(spec.test_fraction * static_cast<double>(n)));
  if (n_test == 0) throw DataError("split leaves the test set empty");
  if (n_test >= n) throw DataError("split leaves the training set empty");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(spec.seed);
  shuffle_in_place(order, rng);
  std::vector<bool> is_test(n, false);
  for (std::size_t i = 0; i < n_test; ++i) is_test[order[i]] = true;
  Split out;
  for (std::size_t i = 0; i < n; ++i) (is_test[i] ? out.test : out.train).push_back(corpus[i]);
  return out;
}

}  // namespace themeann
