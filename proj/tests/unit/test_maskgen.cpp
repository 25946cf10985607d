#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "support/oracles.hpp"
#include "support/tempdir.hpp"

using namespace sparsetab;

namespace {

// Minimum within-cluster sum of squares over every 2-partition of the rows.
double brute_force_two_means(const Matrix& pts) {
  const std::size_t n = pts.rows(), dim = pts.cols();
  double best = std::numeric_limits<double>::infinity();
  for (std::uint64_t bits = 1; bits + 1 < (std::uint64_t{1} << n); ++bits) {
    double w = 0.0;
    for (int side = 0; side < 2; ++side) {
      std::vector<double> c(dim, 0.0);
      double cnt = 0;
      for (std::size_t i = 0; i < n; ++i)
        if (((bits >> i) & 1) == static_cast<std::uint64_t>(side)) {
          for (std::size_t d = 0; d < dim; ++d) c[d] += pts(i, d);
          ++cnt;
        }
      for (double& v : c) v /= cnt;
      for (std::size_t i = 0; i < n; ++i)
        if (((bits >> i) & 1) == static_cast<std::uint64_t>(side))
          for (std::size_t d = 0; d < dim; ++d) w += (pts(i, d) - c[d]) * (pts(i, d) - c[d]);
    }
    best = std::min(best, w);
  }
  return best;
}

FeatureGraph make_graph(std::size_t n, std::vector<std::pair<std::size_t, std::size_t>> edges) {
  FeatureGraph g(n);
  for (auto [a, b] : edges) g.add_edge(a, b);
  return g;
}

}  // namespace

TEST(FeatureGraph, CosineThresholdIsStrict) {
  // Columns built so that cos(0, 1) = 0.5 exactly and cos(0, 2) = -0.8.
  const Matrix x{{1.0, 0.5, -0.8}, {0.0, std::sqrt(0.75), 0.6}};
  const Matrix sim = cosine_similarity_features(x);
  EXPECT_NEAR(sim(0, 1), 0.5, 1e-15);
  const FeatureGraph g = build_feature_graph(sim, 0.5);
  EXPECT_TRUE(g.has_edge(0, 2));  // |-0.8| > 0.5
  EXPECT_EQ(g.has_edge(0, 1), std::abs(sim(0, 1)) > 0.5);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_FALSE(g.has_edge(i, i));
  const Matrix exact{{1.0, 0.5, -0.5}, {0.5, 1.0, 0.50001}, {-0.5, 0.50001, 1.0}};
  const FeatureGraph h = build_feature_graph(exact, 0.5);
  EXPECT_FALSE(h.has_edge(0, 1));
  EXPECT_FALSE(h.has_edge(0, 2));
  EXPECT_TRUE(h.has_edge(1, 2));
}

TEST(FeatureGraph, ZeroColumnsAreIsolated) {
  const Matrix x{{1.0, 0.0, 2.0}, {1.0, 0.0, 2.0}};
  const Matrix sim = cosine_similarity_features(x);
  EXPECT_EQ(sim(1, 1), 0.0);
  const FeatureGraph g = build_feature_graph(sim);
  EXPECT_TRUE(g.neighbors(1).empty());
  EXPECT_TRUE(g.has_edge(0, 2));
  EXPECT_THROW(build_feature_graph(sim, 1.0), InvalidArgument);
}

TEST(Node2vec, WalkShapeAndIndexing) {
  const FeatureGraph g = make_graph(6, {{0, 1}, {1, 2}, {2, 3}, {4, 5}});
  WalkParams p;
  p.walks_per_node = 3;
  p.walk_length = 5;
  const WalkSet w = node2vec_walks(g, p);
  ASSERT_EQ(w.walks.size(), 18u);
  for (std::size_t j = 0; j < w.walks.size(); ++j) {
    EXPECT_EQ(w.walks[j].front(), j / 3);
    EXPECT_EQ(w.walks[j].size(), 6u);
    for (std::size_t k = 1; k < w.walks[j].size(); ++k) EXPECT_TRUE(g.has_edge(w.walks[j][k - 1], w.walks[j][k]));
  }
}

TEST(Node2vec, IsolatedNodesGiveSingletonWalks) {
  const FeatureGraph g = make_graph(3, {{0, 1}});
  const WalkSet w = node2vec_walks(g, {});
  EXPECT_EQ(w.walks[6], std::vector<std::size_t>{2});
}

TEST(Node2vec, DeterministicPerSeed) {
  const FeatureGraph g = make_graph(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 4}, {1, 3}});
  WalkParams p;
  p.seed = 11;
  EXPECT_EQ(node2vec_walks(g, p).walks, node2vec_walks(g, p).walks);
  WalkParams q = p;
  q.seed = 12;
  EXPECT_NE(node2vec_walks(g, p).walks, node2vec_walks(g, q).walks);
}

TEST(Node2vec, TransitionFrequenciesMatchExactProbabilities) {
  const FeatureGraph g = make_graph(5, {{0, 1}, {1, 2}, {0, 2}, {2, 3}, {3, 4}});
  WalkParams p;
  p.walks_per_node = 2000;
  p.walk_length = 8;
  p.p = 0.5;
  p.q = 2.0;
  p.seed = 3;
  const WalkSet w = node2vec_walks(g, p);
  std::map<std::pair<std::size_t, std::size_t>, std::map<std::size_t, double>> counts;
  for (const auto& walk : w.walks)
    for (std::size_t k = 2; k < walk.size(); ++k) counts[{walk[k - 2], walk[k - 1]}][walk[k]] += 1;
  for (auto& [key, next] : counts) {
    double total = 0;
    for (auto& [x, c] : next) total += c;
    for (const auto& [x, prob] : oracle::node2vec_transition(g, key.first, key.second, p.p, p.q))
      EXPECT_NEAR(next[x] / total, prob, 0.03) << key.first << "->" << key.second << "->" << x;
  }
}

TEST(Node2vec, RejectsBadParameters) {
  const FeatureGraph g = make_graph(2, {{0, 1}});
  WalkParams p;
  p.q = 0.0;
  EXPECT_THROW(node2vec_walks(g, p), InvalidArgument);
  p = {};
  p.walk_length = 0;
  EXPECT_THROW(node2vec_walks(g, p), InvalidArgument);
}

TEST(Mask, WalksToMaskMarksVisitedFeatures) {
  WalkSet w;
  w.walks = {{0, 1, 0}, {2}, {3, 2, 1}};
  const MaskMatrix m = walks_to_mask(w, 4);
  EXPECT_EQ(m.n_units(), 3u);
  EXPECT_EQ(m.members(0), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(m.members(2), (std::vector<std::size_t>{1, 2, 3}));
  EXPECT_EQ(m.nnz(), 6u);
  EXPECT_NO_THROW(m.validate());
}

TEST(Mask, RandomWalkMaskConnectsCorrelatedFeatures) {
  Rng r(2);
  Dataset d;
  d.x = Matrix(200, 4);
  for (std::size_t i = 0; i < 200; ++i) {
    const double z = r.normal();
    d.x(i, 0) = z;
    d.x(i, 1) = z + 0.1 * r.normal();
    d.x(i, 2) = r.normal();
    d.x(i, 3) = r.normal();
  }
  d.feature_names = default_feature_names(4);
  const MaskMatrix m = random_walk_mask(d, {});
  EXPECT_EQ(m.params.at("graph_edges"), "1");
  EXPECT_EQ(m.n_units(), 12u);
  for (std::size_t u = 0; u < 6; ++u) EXPECT_EQ(m.members(u), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(m.members(6), std::vector<std::size_t>{2});
}

TEST(Mask, GroupingFileMapsManyToMany) {
  TempDir dir;
  const auto path = dir.write("groups.csv", "feature,group\na,g1\nb,g1\nb,g2\nc,g2\n");
  const MaskMatrix m = groups_to_mask(load_grouping_csv(path), {"a", "b", "c", "d"});
  EXPECT_EQ(m.unit_names, (std::vector<std::string>{"g1", "g2"}));
  EXPECT_EQ(m.members(1), (std::vector<std::size_t>{1, 2}));
  ASSERT_EQ(m.warnings.size(), 1u);
  EXPECT_NE(m.warnings[0].find("'d'"), std::string::npos);
  EXPECT_THROW(groups_to_mask(load_grouping_csv(path), {"a", "b"}), InvalidArgument);
  EXPECT_THROW(load_grouping_csv(dir.write("bad.csv", "a,b,c\n1,2,3\n")), ParseError);
}

TEST(Mask, IdentityMaskIsDiagonal) {
  const MaskMatrix m = identity_mask(default_feature_names(5));
  EXPECT_EQ(m.a, Matrix::identity(5));
}

TEST(Mask, SelectFeaturesPrunesEmptyUnits) {
  const MaskMatrix m = identity_mask(default_feature_names(4));
  const std::vector<std::size_t> keep{3, 1};
  const MaskMatrix s = m.select_features(keep);
  EXPECT_EQ(s.feature_names, (std::vector<std::string>{"f3", "f1"}));
  EXPECT_EQ(s.n_units(), 2u);
  EXPECT_EQ(s.pruned_columns, 2u);
  EXPECT_EQ(s.unit_names, (std::vector<std::string>{"f1", "f3"}));
}

TEST(Mask, CsvRoundTrip) {
  TempDir dir;
  WalkSet w;
  w.walks = {{0, 1}, {2, 1}};
  const MaskMatrix m = walks_to_mask(w, 3, {"x", "y", "z"});
  write_mask_csv(m, dir.file("m.csv"));
  const MaskMatrix back = read_mask_csv(dir.file("m.csv"));
  EXPECT_EQ(back.a, m.a);
  EXPECT_EQ(back.feature_names, m.feature_names);
  EXPECT_EQ(back.unit_names, m.unit_names);
  write_mask_metadata(m, dir.file("m.txt"));
  const auto meta = read_file_bytes(dir.file("m.txt"));
  EXPECT_NE(std::string(meta.begin(), meta.end()).find("provenance: random_walk"), std::string::npos);
}

TEST(KMeans, TwoClustersMatchBruteForce) {
  Rng r(1);
  for (int trial = 0; trial < 10; ++trial) {
    Matrix pts(12, 2);
    for (std::size_t i = 0; i < 12; ++i) {
      const double cx = i < 5 ? -3.0 : 3.0;
      pts(i, 0) = cx + r.normal();
      pts(i, 1) = r.normal();
    }
    double best = std::numeric_limits<double>::infinity();
    for (std::uint64_t s = 0; s < 5; ++s) best = std::min(best, kmeans(pts, 2, s).wcss);
    EXPECT_NEAR(best, brute_force_two_means(pts), 1e-9);
  }
}

TEST(KMeans, ElbowFindsPlantedK) {
  Rng r(2);
  Matrix pts(60, 3);
  for (std::size_t i = 0; i < 60; ++i)
    for (std::size_t d = 0; d < 3; ++d) pts(i, d) = (d == i % 3 ? 10.0 : 0.0) + 0.3 * r.normal();
  const auto curve = wcss_curve(pts, 10, 4);
  EXPECT_LT(curve[2], 0.05 * curve[1]);
  EXPECT_EQ(elbow_k(curve), 3u);
}

TEST(KMeans, MaskPartitionsFeatures) {
  Rng r(3);
  Matrix x(50, 20);
  for (double& v : x.data()) v = r.normal();
  const MaskMatrix m = kmeans_mask(x, KSelection{4}, 5, default_feature_names(20));
  EXPECT_EQ(m.nnz(), 20u);
  for (std::size_t i = 0; i < 20; ++i) {
    double row = 0;
    for (double v : m.a.row(i)) row += v;
    EXPECT_EQ(row, 1.0);
  }
  EXPECT_EQ(m.a, kmeans_mask(x, KSelection{4}, 5, default_feature_names(20)).a);
  EXPECT_THROW(kmeans_mask(x, KSelection{21}, 5), InvalidArgument);
}
