#include <gtest/gtest.h>

#include <map>

#include "themeann/cluster.hpp"

using namespace themeann;

namespace {

FeatureGrid point(std::string id, std::vector<double> v) {
  FeatureGrid g{std::move(id), Matrix(1, v.size())};
  for (std::size_t d = 0; d < v.size(); ++d) g.values(0, d) = v[d];
  return g;
}

std::vector<FeatureGrid> blobs(std::size_t per_blob, std::vector<std::vector<double>> centres, double spread,
                               std::vector<std::size_t>* labels, std::uint64_t seed = 1) {
  Rng rng(seed);
  std::vector<FeatureGrid> out;
  for (std::size_t b = 0; b < centres.size(); ++b)
    for (std::size_t i = 0; i < per_blob; ++i) {
      auto v = centres[b];
      for (double& x : v) x += spread * (uniform01(rng) - 0.5);
      out.push_back(point("b" + std::to_string(b) + "_" + std::to_string(i), v));
      if (labels) labels->push_back(b);
    }
  return out;
}

double choose2(double n) { return n * (n - 1) / 2.0; }

double adjusted_rand(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  std::map<std::pair<std::size_t, std::size_t>, double> table;
  std::map<std::size_t, double> ra, rb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    table[{a[i], b[i]}] += 1;
    ra[a[i]] += 1;
    rb[b[i]] += 1;
  }
  double index = 0, sa = 0, sb = 0;
  for (const auto& [_, n] : table) index += choose2(n);
  for (const auto& [_, n] : ra) sa += choose2(n);
  for (const auto& [_, n] : rb) sb += choose2(n);
  const double expected = sa * sb / choose2(static_cast<double>(a.size()));
  return (index - expected) / (0.5 * (sa + sb) - expected);
}

ClusterModel handmade(std::vector<std::size_t> sizes) {
  ClusterModel m;
  m.centroids = Matrix(sizes.size(), 2);
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    m.centroids(c, 0) = static_cast<double>(c);
    for (std::size_t i = 0; i < sizes[c]; ++i) {
      m.member_ids.push_back("c" + std::to_string(c) + "_" + std::to_string(i));
      m.membership.push_back(c);
    }
  }
  return m;
}

}  // namespace

TEST(Fit, SeparatedBlobsArePerfectlyRecovered) {
  std::vector<std::size_t> truth;
  const auto data = blobs(40, {{0, 0, 0}, {10, 10, 10}}, 1.0, &truth);
  ClusterConfig cfg;
  cfg.k_initial = 2;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    cfg.seed = seed;
    const auto m = fit_clusters(data, cfg);
    EXPECT_DOUBLE_EQ(adjusted_rand(truth, m.membership), 1.0) << seed;
  }
}

TEST(Fit, SingleClusterCentroidIsMean) {
  const auto data = blobs(25, {{1, 2, 3, 4}}, 3.0, nullptr, 7);
  ClusterConfig cfg;
  cfg.k_initial = 1;
  const auto m = fit_clusters(data, cfg);
  for (std::size_t d = 0; d < 4; ++d) {
    double mean = 0.0;
    for (const auto& g : data) mean += g.values(0, d);
    EXPECT_NEAR(m.centroids(0, d), mean / 25.0, 1e-12);
  }
}

TEST(Fit, DeterministicPerSeedAndObjectiveNonIncreasing) {
  const auto data = blobs(30, {{0, 0}, {3, 0}, {0, 3}, {3, 3}}, 4.0, nullptr, 3);
  ClusterConfig cfg;
  cfg.k_initial = 5;
  cfg.seed = 42;
  const auto a = fit_clusters(data, cfg), b = fit_clusters(data, cfg);
  EXPECT_EQ(a.membership, b.membership);
  EXPECT_EQ(a.centroids, b.centroids);
  for (std::size_t i = 1; i < a.objective_trace.size(); ++i)
    EXPECT_LE(a.objective_trace[i], a.objective_trace[i - 1] + 1e-9);
}

TEST(Fit, TrainingImagesRouteToTheirOwnCluster) {
  const auto data = blobs(30, {{0, 0}, {3, 0}, {0, 3}}, 3.0, nullptr, 8);
  ClusterConfig cfg;
  cfg.k_initial = 3;
  const auto m = fit_clusters(data, cfg);
  for (std::size_t i = 0; i < data.size(); ++i) EXPECT_EQ(assign(data[i], m), m.membership[i]);
}

TEST(Fit, TooFewImages) {
  const auto data = blobs(3, {{0, 0}}, 1.0, nullptr);
  ClusterConfig cfg;
  cfg.k_initial = 4;
  EXPECT_THROW(fit_clusters(data, cfg), DataError);
  cfg.k_initial = 0;
  EXPECT_THROW(fit_clusters(data, cfg), ConfigError);
}

TEST(Prune, DropsSmallClusterAndRenumbers) {
  const auto r = prune(handmade({60, 3, 55}), 10);
  EXPECT_EQ(r.model.clusters(), 2u);
  EXPECT_EQ(r.dropped.size(), 3u);
  EXPECT_DOUBLE_EQ(r.retained_fraction(), 115.0 / 118.0);
  EXPECT_EQ(r.model.sizes(), (std::vector<std::size_t>{60, 55}));
  EXPECT_EQ(r.retained_original_ids, (std::vector<std::size_t>{0, 2}));
  EXPECT_DOUBLE_EQ(r.model.centroids(1, 0), 2.0);
  for (const auto& id : r.dropped) EXPECT_EQ(id.substr(0, 3), "c1_");
}

TEST(Prune, IdentityWhenNothingIsSmall) {
  const auto m = handmade({12, 15});
  for (std::size_t min : {1u, 12u}) {
    const auto r = prune(m, min);
    EXPECT_EQ(r.model.membership, m.membership);
    EXPECT_TRUE(r.dropped.empty());
  }
}

TEST(Prune, SizesRespectThresholdAndSumToRetained) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::size_t> sizes;
    for (int c = 0; c < 6; ++c) sizes.push_back(1 + uniform_index(rng, 30));
    const std::size_t min = 1 + uniform_index(rng, 30);
    const auto m = handmade(sizes);
    if (*std::max_element(sizes.begin(), sizes.end()) < min) {
      EXPECT_THROW(prune(m, min), DataError);
      continue;
    }
    const auto r = prune(m, min);
    std::size_t total = 0;
    for (auto s : r.model.sizes()) {
      EXPECT_GE(s, min);
      total += s;
    }
    EXPECT_EQ(total, r.model.member_ids.size());
    EXPECT_EQ(total + r.dropped.size(), m.member_ids.size());
  }
}

TEST(Budget, MembershipProportional) {
  EXPECT_EQ(theme_budget(150, 2.0), 3u);
  EXPECT_EQ(theme_budget(100, 2.0), 2u);
  EXPECT_EQ(theme_budget(10, 2.0), 1u);
  EXPECT_EQ(theme_budget(101, 2.0), 3u);
  EXPECT_EQ(theme_budget(100, 3.0), 3u);
  EXPECT_THROW(theme_budget(10, 0.0), ConfigError);
}

TEST(Assign, TiesGoToLowerIdAndCentroidMapsToItself) {
  ClusterModel m;
  m.centroids = Matrix(3, 2);
  m.centroids(0, 0) = 1.0;
  m.centroids(1, 0) = -1.0;
  m.centroids(2, 1) = 5.0;
  EXPECT_EQ(assign(point("mid", {0.0, 0.0}), m), 0u);
  EXPECT_EQ(assign(point("c2", {0.0, 5.0}), m), 2u);
  EXPECT_EQ(assign(point("c1", {-1.0, 0.0}), m), 1u);
  EXPECT_THROW(assign(point("bad", {0.0}), m), DataError);
}

TEST(Serialization, ClusterModelRoundTrip) {
  const auto data = blobs(10, {{0, 0}, {5, 5}}, 1.0, nullptr);
  ClusterConfig cfg;
  cfg.k_initial = 2;
  const auto m = fit_clusters(data, cfg);
  const auto back = parse_cluster_model(render_cluster_model(m));
  EXPECT_EQ(back.centroids, m.centroids);
  EXPECT_EQ(back.member_ids, m.member_ids);
  EXPECT_EQ(back.membership, m.membership);
  EXPECT_THROW(parse_cluster_model("nope"), DataError);
}
