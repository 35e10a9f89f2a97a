#pragma once

// Continuous relevance models. The joint probability of a test image's tile
// features and a label set is an expectation over training images J with
// uniform P(J):
//
//   P(A, labels) = sum_J 1/|T| * prod_b P_V(label_b | J) * prod_a P_G(g_a | J)
//
// P_V is either the Dirichlet-smoothed multinomial or the Bernoulli estimate.
// P_G is a Gaussian kernel density: averaged over every tile of J ("full"),
// or evaluated only against J's tile at the same grid position ("spatial").
// Everything is accumulated in log space.

#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "themeann/common.hpp"
#include "themeann/features.hpp"
#include "themeann/theme_model.hpp"

namespace themeann {

enum class VocabModel { dirichlet, bernoulli };
enum class KernelKind { full, spatial };

struct RelevanceConfig {
  double mu = 5.0;
  double bandwidth = 0.5;  // isotropic variance after standardization
  VocabModel vocab = VocabModel::dirichlet;
  KernelKind kernel = KernelKind::spatial;
  std::optional<std::size_t> n_annotations;  // nullopt: training-set average

  void validate() const {
    if (!(mu > 0.0)) throw ConfigError("relevance mu must be > 0");
    if (!(bandwidth > 0.0)) throw ConfigError("relevance bandwidth must be > 0");
    if (n_annotations && *n_annotations == 0) throw ConfigError("n_annotations must be >= 1");
  }
};

inline std::string variant_name(const RelevanceConfig& cfg) {
  std::string k = cfg.kernel == KernelKind::spatial ? "spatial" : "full";
  std::string v = cfg.vocab == VocabModel::dirichlet ? "dirichlet" : "bernoulli";
  return k + "/" + v;
}

inline constexpr double kProbabilityFloor = 1e-12;

/// Counts of each label per training image. For theme labels the counts are
/// theta strengths and `present` follows the theme-presence rule.
struct LabelStats {
  std::vector<std::string> labels;  // V
  Matrix counts;                     // |T| x V, N_{v,J}
  std::vector<std::vector<bool>> present;  // delta_{v,J}
  std::vector<double> totals;              // sum_v N_{v,J}
  std::vector<double> prior;               // p_v, relative frequency over the training set
  std::vector<std::size_t> image_count;    // N_v

  std::size_t images() const noexcept { return counts.rows(); }
  std::size_t size() const noexcept { return labels.size(); }

  static LabelStats build(std::vector<std::string> labels, Matrix counts, std::vector<std::vector<bool>> present) {
    LabelStats s;
    s.labels = std::move(labels);
    s.counts = std::move(counts);
    s.present = std::move(present);
    const std::size_t n = s.counts.rows(), V = s.counts.cols();
    if (s.labels.size() != V || s.present.size() != n) throw DataError("label statistics have inconsistent shapes");
    s.totals.assign(n, 0.0);
    s.prior.assign(V, 0.0);
    s.image_count.assign(V, 0);
    double grand = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (s.present[j].size() != V) throw DataError("label presence row has the wrong length");
      for (std::size_t v = 0; v < V; ++v) {
        const double c = s.counts(j, v);
        if (!(c >= 0.0)) throw DataError("label counts must be non-negative");
        s.totals[j] += c;
        s.prior[v] += c;
        if (s.present[j][v]) ++s.image_count[v];
      }
    }
    for (double t : s.totals) grand += t;
    if (grand > 0.0)
      for (auto& p : s.prior) p /= grand;
    else
      for (auto& p : s.prior) p = 1.0 / static_cast<double>(V);
    return s;
  }

  /// Keyword labels: counts are occurrences of each vocabulary term.
  static LabelStats from_words(const Vocabulary& vocab, const std::vector<std::vector<std::size_t>>& docs) {
    Matrix c(docs.size(), vocab.size());
    std::vector<std::vector<bool>> present(docs.size(), std::vector<bool>(vocab.size(), false));
    for (std::size_t j = 0; j < docs.size(); ++j)
      for (auto w : docs[j]) {
        c(j, w) += 1.0;
        present[j][w] = true;
      }
    return build(vocab.terms(), std::move(c), std::move(present));
  }

  /// Theme labels: theme strength replaces the word count.
  static LabelStats from_themes(std::vector<std::string> names, const Matrix& theta, const PresenceRule& rule) {
    std::vector<std::vector<bool>> present;
    for (std::size_t j = 0; j < theta.rows(); ++j) present.push_back(theme_presence(theta.row(j), rule));
    return build(std::move(names), theta, std::move(present));
  }

  std::size_t index(const std::string& label) const {
    for (std::size_t v = 0; v < labels.size(); ++v)
      if (labels[v] == label) return v;
    throw DataError("label '" + label + "' is not in the vocabulary");
  }

  /// Mean number of present labels per training image.
  double mean_labels_per_image() const {
    double s = 0.0;
    for (const auto& row : present)
      for (bool b : row) s += b ? 1.0 : 0.0;
    return images() ? s / static_cast<double>(images()) : 0.0;
  }
};

/// (mu p_v + N_{v,J}) / (mu + sum_v' N_{v',J}); a label absent from the whole
/// training set gets the floor.
inline double vocab_prob_dirichlet(const LabelStats& s, std::size_t v, std::size_t J, double mu) {
  if (v >= s.size()) throw DataError("label index out of range");
  if (!(mu > 0.0)) throw ConfigError("mu must be > 0");
  return std::max((mu * s.prior[v] + s.counts(J, v)) / (mu + s.totals[J]), kProbabilityFloor);
}

/// (mu delta_{v,J} + N_v) / (mu + N), floored so that log space stays finite.
inline double vocab_prob_bernoulli(const LabelStats& s, std::size_t v, std::size_t J, double mu) {
  if (v >= s.size()) throw DataError("label index out of range");
  if (!(mu > 0.0)) throw ConfigError("mu must be > 0");
  const double delta = s.present[J][v] ? 1.0 : 0.0;
  const double p = (mu * delta + static_cast<double>(s.image_count[v])) / (mu + static_cast<double>(s.images()));
  return std::max(p, kProbabilityFloor);
}

inline double vocab_prob(const LabelStats& s, std::size_t v, std::size_t J, const RelevanceConfig& cfg) {
  return cfg.vocab == VocabModel::dirichlet ? vocab_prob_dirichlet(s, v, J, cfg.mu) : vocab_prob_bernoulli(s, v, J, cfg.mu);
}

// ---------------------------------------------------------------------------
// Kernels

/// Gaussian evaluation counter, plus optionally the set of training images touched.
struct KernelCounter {
  std::uint64_t evaluations = 0;
  bool record_touched = false;
  std::set<std::string> touched;

  void merge(const KernelCounter& o) {
    evaluations += o.evaluations;
    touched.insert(o.touched.begin(), o.touched.end());
  }
};

/// log N(g; center, bandwidth * I)
inline double log_gaussian(std::span<const double> g, std::span<const double> center, double bandwidth,
                           KernelCounter* counter = nullptr) {
  if (g.size() != center.size()) throw DataError("feature dimension mismatch in kernel");
  double q = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double d = g[i] - center[i];
    q += d * d;
  }
  if (counter) ++counter->evaluations;
  const double k = static_cast<double>(g.size());
  return -0.5 * q / bandwidth - 0.5 * k * std::log(2.0 * M_PI * bandwidth);
}

/// log( (1/n) sum_i N(g; G(r_i), Sigma) ) over every tile i of J.
inline double log_kernel_full(std::span<const double> g, const FeatureGrid& J, double bandwidth,
                              KernelCounter* counter = nullptr) {
  const std::size_t n = J.tiles();
  if (n == 0) throw DataError("training grid has no tiles");
  std::vector<double> terms(n);
  for (std::size_t i = 0; i < n; ++i) terms[i] = log_gaussian(g, J.tile(i), bandwidth, counter);
  return log_sum_exp(terms) - std::log(static_cast<double>(n));
}

/// log N(g_a; G(r_a of J), Sigma): only the tile at the same grid position.
inline double log_kernel_spatial(std::span<const double> g_a, std::size_t a, const FeatureGrid& J, double bandwidth,
                                 KernelCounter* counter = nullptr) {
  if (a >= J.tiles()) throw DataError("tile index " + std::to_string(a) + " out of range");
  return log_gaussian(g_a, J.tile(a), bandwidth, counter);
}

inline double kernel_full(std::span<const double> g, const FeatureGrid& J, double bandwidth, KernelCounter* counter = nullptr) {
  return std::exp(log_kernel_full(g, J, bandwidth, counter));
}

inline double kernel_spatial(std::span<const double> g_a, std::size_t a, const FeatureGrid& J, double bandwidth,
                             KernelCounter* counter = nullptr) {
  return std::exp(log_kernel_spatial(g_a, a, J, bandwidth, counter));
}

/// sum_a log P_G(g_a | J) for one training image.
inline double log_visual_likelihood(const FeatureGrid& A, const FeatureGrid& J, const RelevanceConfig& cfg,
                                    KernelCounter* counter = nullptr) {
  if (A.dims() != J.dims()) throw DataError("feature dimension mismatch between test and training grids");
  if (counter && counter->record_touched) counter->touched.insert(J.image_id);
  double s = 0.0;
  if (cfg.kernel == KernelKind::spatial) {
    if (A.tiles() != J.tiles()) throw ConfigError("spatial kernel requires identical grids across images");
    for (std::size_t a = 0; a < A.tiles(); ++a) s += log_kernel_spatial(A.tile(a), a, J, cfg.bandwidth, counter);
  } else {
    for (std::size_t a = 0; a < A.tiles(); ++a) s += log_kernel_full(A.tile(a), J, cfg.bandwidth, counter);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Scoring

struct ScoredLabel {
  std::string label;
  std::size_t index = 0;
  double score = 0.0;  // log joint probability, meaningful only for ranking
};

struct AnnotationResult {
  std::string image_id;
  std::vector<ScoredLabel> labels;  // non-increasing score
  std::string variant;
};

/// Training images with their label statistics (row j of `stats` describes
/// `grids[j]`).
class RelevanceModel {
 public:
  RelevanceModel(std::vector<FeatureGrid> grids, LabelStats stats, RelevanceConfig cfg)
      : grids_(std::move(grids)), stats_(std::move(stats)), cfg_(cfg) {
    cfg_.validate();
    if (grids_.empty()) throw DataError("relevance model needs a non-empty training set");
    if (grids_.size() != stats_.images()) throw DataError("training grids and label statistics differ in size");
    if (cfg_.kernel == KernelKind::spatial)
      for (const auto& g : grids_)
        if (g.tiles() != grids_.front().tiles()) throw ConfigError("spatial kernel requires identical grids across images");
  }

  const std::vector<FeatureGrid>& training() const noexcept { return grids_; }
  const LabelStats& stats() const noexcept { return stats_; }
  const RelevanceConfig& config() const noexcept { return cfg_; }

  /// Per training image: sum_a log P_G(g_a | J). Label independent, so one
  /// pass serves every candidate label.
  std::vector<double> visual_log_likelihoods(const FeatureGrid& A, KernelCounter* counter = nullptr) const {
    std::vector<double> out(grids_.size());
    for (std::size_t j = 0; j < grids_.size(); ++j) out[j] = log_visual_likelihood(A, grids_[j], cfg_, counter);
    return out;
  }

  double score_with(std::span<const double> visual, std::span<const std::size_t> labels) const {
    if (labels.empty()) throw DataError("score_joint needs at least one label");
    const double log_pt = -std::log(static_cast<double>(grids_.size()));
    std::vector<double> terms(grids_.size());
    for (std::size_t j = 0; j < grids_.size(); ++j) {
      double t = log_pt + visual[j];
      for (auto v : labels) t += std::log(vocab_prob(stats_, v, j, cfg_));
      terms[j] = t;
    }
    return log_sum_exp(terms);
  }

  /// log P(A, labels). `labels` is a multiset of label indices.
  double score_joint(const FeatureGrid& A, std::span<const std::size_t> labels, KernelCounter* counter = nullptr) const {
    const auto visual = visual_log_likelihoods(A, counter);
    return score_with(visual, labels);
  }

  std::size_t resolved_annotation_count(std::size_t candidates) const {
    std::size_t n = cfg_.n_annotations ? *cfg_.n_annotations
                                       : static_cast<std::size_t>(std::llround(stats_.mean_labels_per_image()));
    return std::clamp<std::size_t>(n, 1, std::max<std::size_t>(1, candidates));
  }

  /// Score each candidate as a singleton label set and keep the best
  /// n_annotations; ties go to the lower label index.
  AnnotationResult annotate(const FeatureGrid& A, std::span<const std::size_t> candidates,
                            KernelCounter* counter = nullptr) const {
    if (candidates.empty()) throw DataError("annotate needs at least one candidate label");
    const auto visual = visual_log_likelihoods(A, counter);
    AnnotationResult r{A.image_id, {}, variant_name(cfg_)};
    for (auto v : candidates) {
      const std::size_t one[] = {v};
      r.labels.push_back({stats_.labels.at(v), v, score_with(visual, one)});
    }
    std::stable_sort(r.labels.begin(), r.labels.end(), [](const auto& a, const auto& b) {
      return a.score > b.score || (a.score == b.score && a.index < b.index);
    });
    r.labels.resize(resolved_annotation_count(candidates.size()));
    return r;
  }

  AnnotationResult annotate(const FeatureGrid& A, KernelCounter* counter = nullptr) const {
    std::vector<std::size_t> all(stats_.size());
    for (std::size_t v = 0; v < all.size(); ++v) all[v] = v;
    return annotate(A, all, counter);
  }

 private:
  std::vector<FeatureGrid> grids_;
  LabelStats stats_;
  RelevanceConfig cfg_;
};

/// Free-function form of RelevanceModel::score_joint.
inline double score_joint(const FeatureGrid& A, std::span<const std::size_t> labels, std::span<const FeatureGrid> training,
                          const LabelStats& stats, const RelevanceConfig& cfg, KernelCounter* counter = nullptr) {
  RelevanceModel m(std::vector<FeatureGrid>(training.begin(), training.end()), stats, cfg);
  return m.score_joint(A, labels, counter);
}

// ---------------------------------------------------------------------------
// Annotation file
//
//   # themeann-annotations 1
//   id<TAB>variant<TAB>config_hash<TAB>label:score;label:score;...

inline std::string render_annotations(const std::vector<AnnotationResult>& results, const std::string& config_hash) {
  std::string out = "# themeann-annotations 1\n";
  for (const auto& r : results) {
    out += r.image_id + "\t" + r.variant + "\t" + config_hash + "\t";
    for (std::size_t i = 0; i < r.labels.size(); ++i)
      out += (i ? ";" : "") + r.labels[i].label + ":" + format_double(r.labels[i].score);
    out += "\n";
  }
  return out;
}

inline std::vector<AnnotationResult> parse_annotations(std::string_view text) {
  std::vector<AnnotationResult> out;
  std::size_t line_no = 0;
  for (const auto& line : split(text, '\n')) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto f = split(line, '\t');
    if (f.size() != 4) throw DataError("annotation file line " + std::to_string(line_no) + ": expected 4 fields");
    AnnotationResult r{f[0], {}, f[1]};
    if (!f[3].empty())
      for (const auto& item : split(f[3], ';')) {
        const auto colon = item.rfind(':');
        if (colon == std::string::npos)
          throw DataError("annotation file line " + std::to_string(line_no) + ": malformed label entry");
        r.labels.push_back({item.substr(0, colon), r.labels.size(), parse_double(item.substr(colon + 1), "score")});
      }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace themeann
