#pragma once

// Visual clustering of training images: k-means over flattened standardized
// feature grids, pruning of sparsely populated clusters, per-cluster theme
// budgets and nearest-centroid routing of test images.

#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "themeann/common.hpp"
#include "themeann/features.hpp"
#include "themeann/theme_model.hpp"

namespace themeann {

struct ClusterConfig {
  std::size_t k_initial = 8;
  std::size_t min_members = 10;
  double themes_per_100 = 2.0;
  std::uint64_t seed = 1;
  std::size_t max_iterations = 300;

  void validate() const {
    if (k_initial == 0) throw ConfigError("cluster k must be >= 1");
    if (min_members == 0) throw ConfigError("cluster min_members must be >= 1");
    if (!(themes_per_100 > 0.0)) throw ConfigError("themes_per_100 must be > 0");
  }
};

struct ClusterModel {
  Matrix centroids;                      // clusters x (tiles * dims)
  std::vector<std::string> member_ids;   // training images kept in the model
  std::vector<std::size_t> membership;   // cluster of member_ids[i]
  std::vector<double> objective_trace;   // within-cluster sum of squares per Lloyd iteration
  std::size_t iterations = 0;
  std::vector<ThemeModel> themes;        // per cluster, filled after theme fitting

  std::size_t clusters() const noexcept { return centroids.rows(); }

  std::vector<std::size_t> sizes() const {
    std::vector<std::size_t> s(clusters(), 0);
    for (auto c : membership) ++s[c];
    return s;
  }

  std::vector<std::string> members_of(std::size_t c) const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < member_ids.size(); ++i)
      if (membership[i] == c) out.push_back(member_ids[i]);
    return out;
  }
};

inline std::vector<double> flatten(const FeatureGrid& g) { return g.values.data(); }

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

namespace detail {

/// Nearest centroid; ties go to the lower index.
inline std::size_t nearest(const Matrix& centroids, std::span<const double> x, double* dist = nullptr) {
  std::size_t best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    const double d = squared_distance(centroids.row(c), x);
    if (d < bd) {
      bd = d;
      best = c;
    }
  }
  if (dist) *dist = bd;
  return best;
}

}  // namespace detail

/// Lloyd's algorithm with k-means++ seeding. An emptied cluster is reseeded
/// with the point farthest from its current centroid.
inline ClusterModel fit_clusters(std::span<const FeatureGrid> train, const ClusterConfig& cfg) {
  cfg.validate();
  const std::size_t n = train.size(), k = cfg.k_initial;
  if (n < k)
    throw DataError("cannot form " + std::to_string(k) + " clusters from " + std::to_string(n) + " images");
  const std::size_t dim = train.front().values.data().size();
  Matrix x(n, dim);
  for (std::size_t i = 0; i < n; ++i) {
    if (train[i].values.data().size() != dim) throw DataError("feature grids differ in size; cannot cluster");
    std::copy(train[i].values.data().begin(), train[i].values.data().end(), x.row(i).begin());
  }

  Rng rng(cfg.seed);
  Matrix centroids(k, dim);
  {
    const auto first = uniform_index(rng, n);
    std::copy(x.row(first).begin(), x.row(first).end(), centroids.row(0).begin());
    std::vector<double> d2(n);
    for (std::size_t c = 1; c < k; ++c) {
      for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < c; ++j) best = std::min(best, squared_distance(x.row(i), centroids.row(j)));
        d2[i] = best;
      }
      double total = 0.0;
      for (double v : d2) total += v;
      // all points coincide with chosen centroids: fall back to uniform choice
      const std::size_t pick = total > 0.0 ? sample_discrete(rng, d2) : uniform_index(rng, n);
      std::copy(x.row(pick).begin(), x.row(pick).end(), centroids.row(c).begin());
    }
  }

  ClusterModel model;
  std::vector<std::size_t> assign(n, 0);
  std::vector<double> dist(n, 0.0);
  for (std::size_t it = 0; it < cfg.max_iterations; ++it) {
    bool changed = it == 0;
    double objective = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = detail::nearest(centroids, x.row(i), &dist[i]);
      if (c != assign[i]) changed = true;
      assign[i] = c;
      objective += dist[i];
    }
    model.objective_trace.push_back(objective);
    model.iterations = it + 1;
    if (!changed) break;

    Matrix sums(k, dim);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[assign[i]];
      auto s = sums.row(assign[i]);
      const auto xi = x.row(i);
      for (std::size_t d = 0; d < dim; ++d) s[d] += xi[d];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        std::size_t far = 0;
        for (std::size_t i = 1; i < n; ++i)
          if (dist[i] > dist[far]) far = i;
        std::copy(x.row(far).begin(), x.row(far).end(), centroids.row(c).begin());
        dist[far] = 0.0;
        continue;
      }
      auto cr = centroids.row(c);
      const auto s = sums.row(c);
      for (std::size_t d = 0; d < dim; ++d) cr[d] = s[d] / static_cast<double>(counts[c]);
    }
  }
  model.centroids = std::move(centroids);
  model.membership = std::move(assign);
  for (const auto& g : train) model.member_ids.push_back(g.image_id);
  return model;
}

struct PruneResult {
  ClusterModel model;
  std::vector<std::string> dropped;  // image ids excluded from training
  std::vector<std::size_t> retained_original_ids;
  std::size_t original_images = 0;

  double retained_fraction() const {
    return original_images ? static_cast<double>(model.member_ids.size()) / static_cast<double>(original_images) : 0.0;
  }
};

/// Remove clusters with fewer than `min_members` members and renumber the
/// survivors in their original order.
inline PruneResult prune(const ClusterModel& model, std::size_t min_members) {
  const auto sizes = model.sizes();
  PruneResult r;
  r.original_images = model.member_ids.size();
  std::vector<std::size_t> remap(model.clusters(), static_cast<std::size_t>(-1));
  for (std::size_t c = 0; c < model.clusters(); ++c)
    if (sizes[c] >= min_members) {
      remap[c] = r.retained_original_ids.size();
      r.retained_original_ids.push_back(c);
    }
  if (r.retained_original_ids.empty())
    throw DataError("pruning with min_members=" + std::to_string(min_members) + " removes every cluster");
  r.model.centroids = Matrix(r.retained_original_ids.size(), model.centroids.cols());
  for (std::size_t i = 0; i < r.retained_original_ids.size(); ++i) {
    const auto src = model.centroids.row(r.retained_original_ids[i]);
    std::copy(src.begin(), src.end(), r.model.centroids.row(i).begin());
  }
  for (std::size_t i = 0; i < model.member_ids.size(); ++i) {
    const auto c = remap[model.membership[i]];
    if (c == static_cast<std::size_t>(-1)) {
      r.dropped.push_back(model.member_ids[i]);
    } else {
      r.model.member_ids.push_back(model.member_ids[i]);
      r.model.membership.push_back(c);
    }
  }
  r.model.objective_trace = model.objective_trace;
  r.model.iterations = model.iterations;
  return r;
}

/// max(1, ceil(rate * members / 100))
inline std::size_t theme_budget(std::size_t member_count, double themes_per_100) {
  if (!(themes_per_100 > 0.0)) throw ConfigError("themes_per_100 must be > 0");
  // subtract a hair so that exact products such as 2 * 150 / 100 = 3 are not
  // pushed up by rounding error
  const double raw = themes_per_100 * static_cast<double>(member_count) / 100.0;
  const auto k = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  return std::max<std::size_t>(1, k);
}

/// Nearest retained centroid by Euclidean distance; ties go to the lower id.
inline std::size_t assign(const FeatureGrid& g, const ClusterModel& model) {
  if (model.clusters() == 0) throw DataError("cluster model has no clusters");
  if (g.values.data().size() != model.centroids.cols()) throw DataError("feature grid does not match centroid size");
  return detail::nearest(model.centroids, g.values.data());
}

// ---------------------------------------------------------------------------
// Serialization
//
//   themeann-clusters 1
//   clusters <k>
//   dim <d>
//   centroid<TAB>c<TAB>v0<TAB>...       (k lines)
//   member<TAB>image_id<TAB>c           (one per retained training image)

inline std::string render_cluster_model(const ClusterModel& m) {
  std::string out = "themeann-clusters 1\n";
  out += "clusters " + std::to_string(m.clusters()) + "\n";
  out += "dim " + std::to_string(m.centroids.cols()) + "\n";
  for (std::size_t c = 0; c < m.clusters(); ++c) {
    out += "centroid\t" + std::to_string(c);
    for (double v : m.centroids.row(c)) out += "\t" + format_double(v);
    out += "\n";
  }
  for (std::size_t i = 0; i < m.member_ids.size(); ++i)
    out += "member\t" + m.member_ids[i] + "\t" + std::to_string(m.membership[i]) + "\n";
  return out;
}

inline ClusterModel parse_cluster_model(std::string_view text) {
  const auto lines = split(text, '\n');
  if (lines.size() < 3 || lines[0] != "themeann-clusters 1") throw DataError("not a cluster model file");
  const auto k = static_cast<std::size_t>(parse_int(split(lines[1], ' ').back(), "clusters"));
  const auto dim = static_cast<std::size_t>(parse_int(split(lines[2], ' ').back(), "dim"));
  ClusterModel m;
  m.centroids = Matrix(k, dim);
  for (std::size_t i = 3; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = split(lines[i], '\t');
    if (f[0] == "centroid" && f.size() == dim + 2) {
      const auto c = static_cast<std::size_t>(parse_int(f[1], "centroid id"));
      if (c >= k) throw DataError("centroid id out of range");
      for (std::size_t d = 0; d < dim; ++d) m.centroids(c, d) = parse_double(f[d + 2], "centroid");
    } else if (f[0] == "member" && f.size() == 3) {
      m.member_ids.push_back(f[1]);
      m.membership.push_back(static_cast<std::size_t>(parse_int(f[2], "membership")));
    } else {
      throw DataError("cluster model line " + std::to_string(i + 1) + ": malformed");
    }
  }
  return m;
}

}  // namespace themeann
