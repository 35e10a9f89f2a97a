#pragma once

// Independent reference implementations shared by the unit tests and the
// acceptance runner. Everything here works in linear space with plain loops.

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "themeann/evaluation.hpp"
#include "themeann/relevance.hpp"
#include "themeann/semantics.hpp"

namespace oracle {

using namespace themeann;

inline FeatureGrid grid_of(std::vector<std::vector<double>> tiles, std::string id = "J") {
  FeatureGrid g{std::move(id), Matrix(tiles.size(), tiles.front().size())};
  for (std::size_t a = 0; a < tiles.size(); ++a)
    for (std::size_t d = 0; d < tiles[a].size(); ++d) g.values(a, d) = tiles[a][d];
  return g;
}

inline FeatureGrid random_grid(Rng& rng, std::size_t n, std::size_t k, std::string id, double spread = 1.0) {
  FeatureGrid g{std::move(id), Matrix(n, k)};
  for (double& v : g.values.data()) v = spread * standard_normal(rng);
  return g;
}

/// Label statistics from a dense image x label count table.
inline LabelStats counts_stats(const std::vector<std::vector<double>>& rows) {
  const std::size_t V = rows.front().size();
  Matrix c(rows.size(), V);
  std::vector<std::vector<bool>> present(rows.size(), std::vector<bool>(V));
  std::vector<std::string> labels;
  for (std::size_t v = 0; v < V; ++v) labels.push_back("w" + std::to_string(v));
  for (std::size_t j = 0; j < rows.size(); ++j)
    for (std::size_t v = 0; v < V; ++v) {
      c(j, v) = rows[j][v];
      present[j][v] = rows[j][v] > 0;
    }
  return LabelStats::build(labels, std::move(c), std::move(present));
}

inline RelevanceConfig relevance(KernelKind kernel, VocabModel vocab = VocabModel::dirichlet, double mu = 5.0,
                                 double bw = 0.5) {
  RelevanceConfig c;
  c.kernel = kernel;
  c.vocab = vocab;
  c.mu = mu;
  c.bandwidth = bw;
  return c;
}

inline double density(std::span<const double> x, std::span<const double> c, double bw) {
  double q = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) q += (x[i] - c[i]) * (x[i] - c[i]);
  return std::exp(-q / (2.0 * bw)) / std::pow(2.0 * M_PI * bw, 0.5 * double(x.size()));
}

/// log P(A, labels) by direct summation over the training images.
inline double joint_score(const FeatureGrid& A, const std::vector<std::size_t>& labels, const std::vector<FeatureGrid>& T,
                          const std::vector<std::vector<double>>& counts, const RelevanceConfig& cfg) {
  const std::size_t V = counts.front().size();
  double total_all = 0.0;
  std::vector<double> per_label(V, 0.0);
  std::vector<double> images_with(V, 0.0);
  for (const auto& row : counts)
    for (std::size_t v = 0; v < V; ++v) {
      total_all += row[v];
      per_label[v] += row[v];
      images_with[v] += row[v] > 0 ? 1.0 : 0.0;
    }
  double sum = 0.0;
  for (std::size_t j = 0; j < T.size(); ++j) {
    double row_total = 0.0;
    for (double c : counts[j]) row_total += c;
    double p = 1.0 / double(T.size());
    for (auto v : labels) {
      if (cfg.vocab == VocabModel::dirichlet)
        p *= std::max(1e-12, (cfg.mu * per_label[v] / total_all + counts[j][v]) / (cfg.mu + row_total));
      else
        p *= std::max(1e-12, (cfg.mu * (counts[j][v] > 0 ? 1.0 : 0.0) + images_with[v]) / (cfg.mu + double(T.size())));
    }
    for (std::size_t a = 0; a < A.tiles(); ++a) {
      if (cfg.kernel == KernelKind::spatial) {
        p *= density(A.tile(a), T[j].tile(a), cfg.bandwidth);
      } else {
        double s = 0.0;
        for (std::size_t i = 0; i < T[j].tiles(); ++i) s += density(A.tile(a), T[j].tile(i), cfg.bandwidth);
        p *= s / double(T[j].tiles());
      }
    }
    sum += p;
  }
  return std::log(sum);
}

struct JointInstance {
  FeatureGrid query;
  std::vector<std::size_t> labels;
  std::vector<FeatureGrid> training;
  std::vector<std::vector<double>> counts;
  RelevanceConfig cfg;
};

/// Random micro-instance: |T| <= 5, n <= 4 tiles, V <= 6 labels.
inline JointInstance random_joint_instance(Rng& rng) {
  JointInstance in;
  const std::size_t T = 1 + uniform_index(rng, 5), n = 1 + uniform_index(rng, 4), V = 1 + uniform_index(rng, 6);
  const std::size_t k = 1 + uniform_index(rng, 3);
  in.counts.assign(T, std::vector<double>(V));
  for (std::size_t j = 0; j < T; ++j) {
    in.training.push_back(random_grid(rng, n, k, "t" + std::to_string(j), 0.7));
    for (auto& c : in.counts[j]) c = static_cast<double>(uniform_index(rng, 4));
  }
  in.counts[0][0] += 1.0;
  in.query = random_grid(rng, n, k, "A", 0.7);
  in.labels.resize(1 + uniform_index(rng, 3));
  for (auto& v : in.labels) v = uniform_index(rng, V);
  in.cfg = relevance(uniform_index(rng, 2) ? KernelKind::full : KernelKind::spatial,
                     uniform_index(rng, 2) ? VocabModel::dirichlet : VocabModel::bernoulli, 0.5 + 5.0 * uniform01(rng),
                     0.3 + uniform01(rng));
  return in;
}

/// Sum over simple node sequences a..b of at most max_depth hops, with
/// parallel assertions collapsed into one undirected pair weight.
inline double path_strength(const SemanticGraph& g, const std::string& a, const std::string& b,
                            const RelatednessConfig& cfg) {
  std::map<std::pair<std::string, std::string>, double> pair;
  for (const auto& as : g.assertions()) {
    if (!cfg.relations.empty() && !cfg.relations.count(as.relation)) continue;
    const double w = std::min(1.0, as.weight / cfg.reference_weight);
    pair[{as.start, as.end}] += w;
    pair[{as.end, as.start}] += w;
  }
  const auto& nodes = g.nodes();
  double total = 0.0;
  std::vector<std::string> seq{a};
  auto rec = [&](auto&& self, double product) -> void {
    const std::size_t hops = seq.size();
    if (hops > cfg.max_depth) return;
    for (const auto& n : nodes) {
      if (std::find(seq.begin(), seq.end(), n) != seq.end()) continue;
      auto it = pair.find({seq.back(), n});
      if (it == pair.end() || it->second == 0.0) continue;
      const double p = product * it->second;
      if (n == b) {
        total += p * std::pow(cfg.decay, double(hops - 1));
        continue;
      }
      seq.push_back(n);
      self(self, p);
      seq.pop_back();
    }
  };
  rec(rec, 1.0);
  return total;
}

inline SemanticGraph random_graph(Rng& rng, std::size_t nodes, std::size_t edges) {
  SemanticGraph g;
  const std::vector<std::string> rel{"RelatedTo", "IsA", "UsedFor"};
  for (std::size_t e = 0; e < edges; ++e) {
    const auto a = uniform_index(rng, nodes);
    auto b = uniform_index(rng, nodes - 1);
    if (b >= a) ++b;
    g.add("n" + std::to_string(a), rel[uniform_index(rng, rel.size())], "n" + std::to_string(b),
          0.05 + 1.2 * uniform01(rng));
  }
  return g;
}

struct Macro {
  double p = 0, r = 0, f = 0;
  std::size_t positive = 0;
};

/// Macro P/R/F by counting over a dense image x label incidence table.
inline Macro macro_prf(const std::vector<std::string>& images, const std::vector<std::string>& labels,
                       const LabelSets& pred, const LabelSets& truth) {
  Macro b;
  for (const auto& l : labels) {
    int tp = 0, np = 0, nt = 0;
    for (const auto& i : images) {
      const bool p = pred.at(i).count(l) > 0, t = truth.at(i).count(l) > 0;
      tp += p && t;
      np += p;
      nt += t;
    }
    const double pr = np ? double(tp) / np : 0.0, rc = nt ? double(tp) / nt : 0.0;
    b.p += pr;
    b.r += rc;
    b.f += pr + rc > 0 ? 2 * pr * rc / (pr + rc) : 0.0;
    b.positive += rc > 0;
  }
  b.p /= double(labels.size());
  b.r /= double(labels.size());
  b.f /= double(labels.size());
  return b;
}

struct PrfInstance {
  std::vector<std::string> images, labels;
  LabelSets pred, truth;
};

/// Random instance with at most 10 images and 6 labels.
inline PrfInstance random_prf_instance(Rng& rng) {
  PrfInstance in;
  const std::size_t n_img = 1 + uniform_index(rng, 10), n_lab = 1 + uniform_index(rng, 6);
  for (std::size_t i = 0; i < n_img; ++i) in.images.push_back("i" + std::to_string(i));
  for (std::size_t l = 0; l < n_lab; ++l) in.labels.push_back("l" + std::to_string(l));
  for (const auto& i : in.images) {
    in.pred[i];
    in.truth[i];
    for (const auto& l : in.labels) {
      if (uniform01(rng) < 0.4) in.pred[i].insert(l);
      if (uniform01(rng) < 0.4) in.truth[i].insert(l);
    }
  }
  return in;
}

}  // namespace oracle
