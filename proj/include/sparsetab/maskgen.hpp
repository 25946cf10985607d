#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "sparsetab/csv.hpp"
#include "sparsetab/data.hpp"
#include "sparsetab/matrix.hpp"
#include "sparsetab/rng.hpp"

namespace sparsetab {

enum class MaskProvenance { grouping, random_walk, kmeans };

inline const char* to_string(MaskProvenance p) {
  switch (p) {
    case MaskProvenance::grouping: return "grouping";
    case MaskProvenance::random_walk: return "random_walk";
    case MaskProvenance::kmeans: return "kmeans";
  }
  return "grouping";
}

inline MaskProvenance parse_provenance(const std::string& s) {
  if (s == "grouping") return MaskProvenance::grouping;
  if (s == "random_walk") return MaskProvenance::random_walk;
  if (s == "kmeans") return MaskProvenance::kmeans;
  throw InvalidArgument("unknown mask provenance '" + s + "'");
}

// Binary feature-to-unit connectivity matrix (rows = features, cols = units).
struct MaskMatrix {
  Matrix a;
  MaskProvenance provenance = MaskProvenance::grouping;
  std::map<std::string, std::string> params;  // generator parameters, echoed
  std::vector<std::string> feature_names;
  std::vector<std::string> unit_names;
  std::vector<std::string> warnings;
  std::size_t pruned_columns = 0;

  std::size_t n_features() const noexcept { return a.rows(); }
  std::size_t n_units() const noexcept { return a.cols(); }
  bool connected(std::size_t feature, std::size_t unit) const { return a(feature, unit) != 0.0; }

  std::size_t nnz() const {
    return static_cast<std::size_t>(std::count(a.values().begin(), a.values().end(), 1.0));
  }

  std::vector<std::size_t> members(std::size_t unit) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < a.rows(); ++i)
      if (a(i, unit) != 0.0) out.push_back(i);
    return out;
  }

  void validate() const {
    for (double v : a.data())
      if (v != 0.0 && v != 1.0) throw InvalidArgument("mask entries must be 0 or 1");
    for (std::size_t j = 0; j < a.cols(); ++j) {
      bool any = false;
      for (std::size_t i = 0; i < a.rows() && !any; ++i) any = a(i, j) != 0.0;
      if (!any) throw InvalidArgument("mask unit " + std::to_string(j) + " has no connections");
    }
    if (!feature_names.empty() && feature_names.size() != a.rows())
      throw ShapeError("mask feature-name count does not match rows");
  }

  // Drops units with no connection and records how many were removed.
  void prune_empty_columns() {
    std::vector<std::size_t> keep;
    for (std::size_t j = 0; j < a.cols(); ++j) {
      for (std::size_t i = 0; i < a.rows(); ++i) {
        if (a(i, j) != 0.0) {
          keep.push_back(j);
          break;
        }
      }
    }
    if (keep.size() == a.cols()) return;
    Matrix pruned(a.rows(), keep.size());
    std::vector<std::string> names;
    for (std::size_t k = 0; k < keep.size(); ++k) {
      for (std::size_t i = 0; i < a.rows(); ++i) pruned(i, k) = a(i, keep[k]);
      if (!unit_names.empty()) names.push_back(unit_names[keep[k]]);
    }
    pruned_columns += a.cols() - keep.size();
    a = std::move(pruned);
    unit_names = std::move(names);
  }

  // Keeps the listed feature rows (in order); used when features are removed
  // from a dataset that carries a fixed grouping mask.
  MaskMatrix select_features(std::span<const std::size_t> rows) const {
    MaskMatrix out = *this;
    out.a = Matrix(rows.size(), a.cols());
    out.feature_names.clear();
    for (std::size_t k = 0; k < rows.size(); ++k) {
      for (std::size_t j = 0; j < a.cols(); ++j) out.a(k, j) = a(rows[k], j);
      if (!feature_names.empty()) out.feature_names.push_back(feature_names[rows[k]]);
    }
    out.prune_empty_columns();
    return out;
  }
};

// ---------------------------------------------------------------------------
// Feature graph

// Cosine similarity between feature columns. Columns with zero norm get
// similarity 0 to everything, including themselves.
inline Matrix cosine_similarity_features(const Matrix& x) {
  const std::size_t n = x.cols();
  if (n < 2) throw InvalidArgument("cosine similarity needs at least 2 features");
  Matrix gram = matmul_tn(x, x);
  std::vector<double> norm(n);
  for (std::size_t j = 0; j < n; ++j) norm[j] = std::sqrt(gram(j, j));
  Matrix sim(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (norm[i] == 0.0 || norm[j] == 0.0) continue;
      sim(i, j) = std::clamp(gram(i, j) / (norm[i] * norm[j]), -1.0, 1.0);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (norm[i] != 0.0) sim(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) sim(j, i) = sim(i, j);
  }
  return sim;
}

// Undirected, unweighted, loop-free graph over features.
class FeatureGraph {
 public:
  explicit FeatureGraph(std::size_t n = 0, std::vector<std::string> names = {})
      : n_(n), adjacency_(n * n, 0), neighbors_(n), names_(std::move(names)) {}

  std::size_t n_nodes() const noexcept { return n_; }
  const std::vector<std::string>& node_names() const noexcept { return names_; }

  void add_edge(std::size_t i, std::size_t j) {
    if (i == j || has_edge(i, j)) return;
    adjacency_[i * n_ + j] = adjacency_[j * n_ + i] = 1;
    insert_sorted(neighbors_[i], j);
    insert_sorted(neighbors_[j], i);
  }

  bool has_edge(std::size_t i, std::size_t j) const { return adjacency_[i * n_ + j] != 0; }

  // Neighbours in ascending index order.
  const std::vector<std::size_t>& neighbors(std::size_t i) const { return neighbors_[i]; }

  std::size_t n_edges() const {
    std::size_t deg = 0;
    for (const auto& nb : neighbors_) deg += nb.size();
    return deg / 2;
  }

  Matrix adjacency() const {
    Matrix m(n_, n_);
    for (std::size_t i = 0; i < n_ * n_; ++i) m.data()[i] = adjacency_[i];
    return m;
  }

 private:
  static void insert_sorted(std::vector<std::size_t>& v, std::size_t x) {
    v.insert(std::upper_bound(v.begin(), v.end(), x), x);
  }

  std::size_t n_;
  std::vector<std::uint8_t> adjacency_;
  std::vector<std::vector<std::size_t>> neighbors_;
  std::vector<std::string> names_;
};

// Edge (i, j) iff |sim(i, j)| > threshold, strictly, and i != j.
inline FeatureGraph build_feature_graph(const Matrix& sim, double threshold = 0.5,
                                        std::vector<std::string> names = {}) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw InvalidArgument("similarity threshold must lie in (0, 1)");
  if (sim.rows() != sim.cols()) throw ShapeError("similarity matrix must be square");
  FeatureGraph g(sim.rows(), std::move(names));
  for (std::size_t i = 0; i < sim.rows(); ++i)
    for (std::size_t j = i + 1; j < sim.cols(); ++j)
      if (std::abs(sim(i, j)) > threshold) g.add_edge(i, j);
  return g;
}

// ---------------------------------------------------------------------------
// Node2vec walks

struct WalkParams {
  std::size_t walks_per_node = 3;  // r
  std::size_t walk_length = 5;     // t, steps per walk
  double p = 1.0;                  // return parameter
  double q = 1.0;                  // in-out parameter
  std::uint64_t seed = 0;
};

struct WalkSet {
  // Walk j = source * walks_per_node + repetition. Each walk starts at its
  // source node and holds at most walk_length + 1 nodes.
  std::vector<std::vector<std::size_t>> walks;
  WalkParams params;
};

// Unnormalised second-order transition weight for moving to `next` when the
// walk arrived at the current node from `prev`.
inline double node2vec_weight(const FeatureGraph& g, std::size_t prev, std::size_t next,
                              double p, double q) {
  if (next == prev) return 1.0 / p;
  if (g.has_edge(next, prev)) return 1.0;
  return 1.0 / q;
}

inline WalkSet node2vec_walks(const FeatureGraph& g, const WalkParams& params) {
  if (params.walks_per_node < 1 || params.walk_length < 1)
    throw InvalidArgument("walks_per_node and walk_length must be at least 1");
  if (!(params.p > 0.0 && params.q > 0.0)) throw InvalidArgument("p and q must be positive");
  Rng rng(params.seed);
  WalkSet ws;
  ws.params = params;
  ws.walks.reserve(g.n_nodes() * params.walks_per_node);
  std::vector<double> weights;
  for (std::size_t source = 0; source < g.n_nodes(); ++source) {
    for (std::size_t rep = 0; rep < params.walks_per_node; ++rep) {
      std::vector<std::size_t> walk{source};
      for (std::size_t step = 0; step < params.walk_length; ++step) {
        const std::size_t cur = walk.back();
        const auto& nb = g.neighbors(cur);
        if (nb.empty()) break;
        if (walk.size() == 1) {
          walk.push_back(nb[rng.below(nb.size())]);
          continue;
        }
        const std::size_t prev = walk[walk.size() - 2];
        weights.resize(nb.size());
        double total = 0.0;
        for (std::size_t k = 0; k < nb.size(); ++k) {
          weights[k] = node2vec_weight(g, prev, nb[k], params.p, params.q);
          total += weights[k];
        }
        double u = rng.uniform() * total;
        std::size_t pick = nb.size() - 1;
        for (std::size_t k = 0; k < nb.size(); ++k) {
          if (u < weights[k]) {
            pick = k;
            break;
          }
          u -= weights[k];
        }
        walk.push_back(nb[pick]);
      }
      ws.walks.push_back(std::move(walk));
    }
  }
  return ws;
}

inline MaskMatrix walks_to_mask(const WalkSet& w, std::size_t n_features,
                                std::vector<std::string> feature_names = {}) {
  MaskMatrix m;
  m.a = Matrix(n_features, w.walks.size());
  for (std::size_t j = 0; j < w.walks.size(); ++j) {
    for (std::size_t node : w.walks[j]) {
      if (node >= n_features)
        throw InvalidArgument("walk node " + std::to_string(node) + " out of range");
      m.a(node, j) = 1.0;
    }
    m.unit_names.push_back("walk" + std::to_string(j));
  }
  m.provenance = MaskProvenance::random_walk;
  m.params = {{"walks_per_node", std::to_string(w.params.walks_per_node)},
              {"walk_length", std::to_string(w.params.walk_length)},
              {"p", csv::format_double(w.params.p)},
              {"q", csv::format_double(w.params.q)},
              {"seed", std::to_string(w.params.seed)}};
  m.feature_names = std::move(feature_names);
  m.prune_empty_columns();
  return m;
}

struct RandomWalkMaskOptions {
  WalkParams walks;
  double threshold = 0.5;
};

// Full unsupervised pipeline: cosine graph over features, Node2vec walks, mask.
inline MaskMatrix random_walk_mask(const Dataset& d, const RandomWalkMaskOptions& opt) {
  const Matrix sim = cosine_similarity_features(d.x);
  const FeatureGraph g = build_feature_graph(sim, opt.threshold, d.feature_names);
  MaskMatrix m = walks_to_mask(node2vec_walks(g, opt.walks), d.n_features(), d.feature_names);
  m.params["threshold"] = csv::format_double(opt.threshold);
  m.params["graph_edges"] = std::to_string(g.n_edges());
  return m;
}

// ---------------------------------------------------------------------------
// Grouping files

// Ordered (feature, group) membership pairs; many-to-many.
struct GroupTable {
  std::vector<std::pair<std::string, std::string>> members;
};

inline GroupTable load_grouping_csv(const std::string& path) {
  const csv::Table t = csv::read_table(path);
  if (t.header.size() != 2)
    throw ParseError("grouping file '" + path + "' must have exactly two columns");
  GroupTable g;
  for (const auto& r : t.rows) {
    if (r[0].empty() || r[1].empty()) throw ParseError("empty field in grouping file '" + path + "'");
    g.members.emplace_back(r[0], r[1]);
  }
  return g;
}

// One unit per group, in first-appearance order.
inline MaskMatrix groups_to_mask(const GroupTable& groups,
                                 const std::vector<std::string>& feature_names) {
  std::map<std::string, std::size_t> feature_index;
  for (std::size_t i = 0; i < feature_names.size(); ++i) feature_index[feature_names[i]] = i;
  std::vector<std::string> group_order;
  std::map<std::string, std::size_t> group_index;
  for (const auto& [feature, group] : groups.members) {
    if (!feature_index.count(feature))
      throw InvalidArgument("group '" + group + "' references unknown feature '" + feature + "'");
    if (!group_index.count(group)) {
      group_index[group] = group_order.size();
      group_order.push_back(group);
    }
  }
  MaskMatrix m;
  m.a = Matrix(feature_names.size(), group_order.size());
  for (const auto& [feature, group] : groups.members)
    m.a(feature_index[feature], group_index[group]) = 1.0;
  m.provenance = MaskProvenance::grouping;
  m.feature_names = feature_names;
  m.unit_names = group_order;
  m.params = {{"groups", std::to_string(group_order.size())}};
  for (std::size_t i = 0; i < feature_names.size(); ++i) {
    bool any = false;
    for (std::size_t j = 0; j < m.a.cols() && !any; ++j) any = m.a(i, j) != 0.0;
    if (!any) {
      m.warnings.push_back("feature '" + feature_names[i] + "' belongs to no group");
      std::clog << "warning: feature '" << feature_names[i] << "' belongs to no group\n";
    }
  }
  return m;
}

// One group per feature: a diagonal mask where unit j sees only feature j.
inline MaskMatrix identity_mask(const std::vector<std::string>& feature_names) {
  GroupTable g;
  for (const auto& f : feature_names) g.members.emplace_back(f, f);
  return groups_to_mask(g, feature_names);
}

// ---------------------------------------------------------------------------
// k-means over feature columns

struct KMeansResult {
  std::vector<std::size_t> assignment;
  double wcss = 0.0;
  std::size_t iterations = 0;
  std::size_t reseeded = 0;
};

namespace detail {

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace detail

// Lloyd's algorithm with k-means++ seeding on the rows of `points`.
// An empty cluster is re-seeded with the point farthest from its centroid.
inline KMeansResult kmeans(const Matrix& points, std::size_t k, std::uint64_t seed,
                           std::size_t max_iter = 300, double tol = 1e-6) {
  const std::size_t n = points.rows();
  const std::size_t dim = points.cols();
  if (k == 0 || k > n) throw InvalidArgument("k must lie in [1, n_points]");
  Rng rng(seed);
  Matrix centroids(k, dim);
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());

  auto set_centroid = [&](std::size_t c, std::size_t p) {
    std::copy(points.row(p).begin(), points.row(p).end(), centroids.row(c).begin());
  };
  set_centroid(0, rng.below(n));
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      dist[i] = std::min(dist[i], detail::squared_distance(points.row(i), centroids.row(c - 1)));
      total += dist[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        if (u < dist[i]) {
          pick = i;
          break;
        }
        u -= dist[i];
      }
    } else {
      pick = rng.below(n);
    }
    set_centroid(c, pick);
  }

  KMeansResult res;
  res.assignment.assign(n, 0);
  std::vector<double> point_dist(n, 0.0);
  for (res.iterations = 1; res.iterations <= max_iter; ++res.iterations) {
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = detail::squared_distance(points.row(i), centroids.row(c));
        if (d < best) {
          best = d;
          res.assignment[i] = c;
        }
      }
      point_dist[i] = best;
    }
    Matrix next(k, dim);
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto dst = next.row(res.assignment[i]);
      auto src = points.row(i);
      for (std::size_t d = 0; d < dim; ++d) dst[d] += src[d];
      ++count[res.assignment[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] == 0) {
        const auto far = static_cast<std::size_t>(
            std::max_element(point_dist.begin(), point_dist.end()) - point_dist.begin());
        std::copy(points.row(far).begin(), points.row(far).end(), next.row(c).begin());
        point_dist[far] = 0.0;
        ++res.reseeded;
        continue;
      }
      for (double& v : next.row(c)) v /= static_cast<double>(count[c]);
    }
    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c)
      shift = std::max(shift, std::sqrt(detail::squared_distance(next.row(c), centroids.row(c))));
    centroids = std::move(next);
    if (shift <= tol) break;
  }
  res.iterations = std::min(res.iterations, max_iter);

  // Final assignment against the converged centroids.
  res.wcss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      const double d = detail::squared_distance(points.row(i), centroids.row(c));
      if (d < best) {
        best = d;
        res.assignment[i] = c;
      }
    }
    res.wcss += best;
  }
  return res;
}

// Picks k at the largest second difference of the WCSS curve over
// k in [2, min(n, 50)]; wcss[k-1] holds the value for k clusters.
inline std::size_t elbow_k(std::span<const double> wcss) {
  const std::size_t kmax = wcss.size();
  if (kmax < 3) return std::max<std::size_t>(kmax, 1);
  std::size_t best_k = 2;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 2; k + 1 <= kmax; ++k) {
    const double d2 = wcss[k - 2] - 2.0 * wcss[k - 1] + wcss[k];
    if (d2 > best) {
      best = d2;
      best_k = k;
    }
  }
  return best_k;
}

struct KSelection {
  std::optional<std::size_t> k;  // empty = elbow
};

inline std::vector<double> wcss_curve(const Matrix& points, std::size_t kmax,
                                      std::uint64_t seed) {
  std::vector<double> curve;
  for (std::size_t k = 1; k <= kmax; ++k)
    curve.push_back(kmeans(points, k, derive_seed(seed, k)).wcss);
  return curve;
}

inline MaskMatrix kmeans_mask(const Matrix& x, KSelection selection, std::uint64_t seed,
                              std::vector<std::string> feature_names = {}) {
  const std::size_t n = x.cols();
  const Matrix points = transpose(x);
  std::size_t k = 0;
  if (selection.k) {
    k = *selection.k;
    if (k == 0 || k > n) throw InvalidArgument("k must lie in [1, n_features]");
  } else {
    const std::size_t kmax = std::min<std::size_t>(n, 50);
    k = elbow_k(wcss_curve(points, kmax, seed));
  }
  const KMeansResult res = kmeans(points, k, derive_seed(seed, k));
  MaskMatrix m;
  m.a = Matrix(n, k);
  for (std::size_t i = 0; i < n; ++i) m.a(i, res.assignment[i]) = 1.0;
  m.provenance = MaskProvenance::kmeans;
  m.feature_names = std::move(feature_names);
  for (std::size_t c = 0; c < k; ++c) m.unit_names.push_back("cluster" + std::to_string(c));
  m.params = {{"k", std::to_string(k)},
              {"k_selection", selection.k ? "fixed" : "elbow"},
              {"seed", std::to_string(seed)},
              {"wcss", csv::format_double(res.wcss)},
              {"reseeded", std::to_string(res.reseeded)}};
  m.prune_empty_columns();
  return m;
}

// ---------------------------------------------------------------------------
// Mask files: 0/1 CSV with feature-name row labels, plus a key: value sidecar.

inline void write_mask_csv(const MaskMatrix& m, const std::string& path) {
  csv::Writer w(path);
  std::vector<std::string> header{"feature"};
  for (std::size_t j = 0; j < m.n_units(); ++j)
    header.push_back(j < m.unit_names.size() ? m.unit_names[j] : "u" + std::to_string(j));
  w.row(header);
  for (std::size_t i = 0; i < m.n_features(); ++i) {
    std::vector<std::string> fields{i < m.feature_names.size() ? m.feature_names[i]
                                                               : "f" + std::to_string(i)};
    for (std::size_t j = 0; j < m.n_units(); ++j) fields.push_back(m.a(i, j) != 0.0 ? "1" : "0");
    w.row(fields);
  }
}

inline void write_mask_metadata(const MaskMatrix& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "provenance: " << to_string(m.provenance) << '\n';
  out << "n_features: " << m.n_features() << '\n';
  out << "n_units: " << m.n_units() << '\n';
  out << "nnz: " << m.nnz() << '\n';
  out << "pruned_columns: " << m.pruned_columns << '\n';
  for (const auto& [k, v] : m.params) out << "param." << k << ": " << v << '\n';
  for (const auto& w : m.warnings) out << "warning: " << w << '\n';
}

inline MaskMatrix read_mask_csv(const std::string& path) {
  const csv::Table t = csv::read_table(path);
  if (t.header.size() < 2) throw ParseError("mask file '" + path + "' has no unit columns");
  MaskMatrix m;
  m.a = Matrix(t.rows.size(), t.header.size() - 1);
  m.unit_names.assign(t.header.begin() + 1, t.header.end());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    m.feature_names.push_back(t.rows[i][0]);
    for (std::size_t j = 1; j < t.header.size(); ++j) {
      const auto& cell = t.rows[i][j];
      if (cell != "0" && cell != "1")
        throw ParseError("mask cell '" + cell + "' at row " + std::to_string(i + 1) +
                         " is not 0/1");
      m.a(i, j - 1) = cell == "1" ? 1.0 : 0.0;
    }
  }
  return m;
}

}  // namespace sparsetab
