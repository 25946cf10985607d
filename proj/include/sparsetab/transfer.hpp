#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "sparsetab/data.hpp"
#include "sparsetab/model_io.hpp"
#include "sparsetab/network.hpp"
#include "sparsetab/train.hpp"

namespace sparsetab {

// Layers [0, cut) of a trained model, reused as a fixed feature extractor.
struct FrozenTrunk {
  NetworkSpec spec;  // the full source model
  ParameterSet params;
  std::size_t cut = 0;
  std::vector<bool> frozen;  // one flag per trunk layer

  std::size_t output_width() const { return spec.widths()[cut]; }
  std::size_t input_dim() const { return spec.input_dim; }
};

// Position just after the last dense layer, i.e. the model without its
// dropout and output head. Falls back to the full layer stack.
inline std::size_t default_cut(const NetworkSpec& spec) {
  for (std::size_t i = spec.layers.size(); i-- > 0;)
    if (spec.layers[i].kind == LayerKind::dense) return i + 1;
  return spec.layers.size();
}

inline FrozenTrunk make_trunk(const NetworkSpec& spec, const ParameterSet& params,
                              std::optional<std::size_t> cut = std::nullopt) {
  FrozenTrunk t;
  t.spec = spec;
  t.params = params;
  t.cut = cut.value_or(default_cut(spec));
  if (t.cut > spec.layers.size()) throw InvalidArgument("cut point beyond the last layer");
  t.frozen.assign(t.cut, true);
  return t;
}

inline Matrix extract_features(const FrozenTrunk& trunk, const Matrix& x) {
  if (x.cols() != trunk.input_dim())
    throw ShapeError("dataset has " + std::to_string(x.cols()) + " features, trunk expects " +
                     std::to_string(trunk.input_dim()));
  return forward_prefix(trunk.spec, trunk.params, x, trunk.cut);
}

// Hash over the trunk layers that are frozen.
inline std::string trunk_hash(const ParameterSet& params, const std::vector<bool>& frozen) {
  ParameterSet view;
  for (std::size_t i = 0; i < frozen.size(); ++i)
    view.layers.push_back(frozen[i] ? params.layers[i] : LayerParams{});
  return parameter_hash(view, frozen.size());
}

inline std::string trunk_hash(const FrozenTrunk& t) { return trunk_hash(t.params, t.frozen); }

struct FineTuneOptions {
  std::vector<LayerSpec> head_layers{LayerSpec::dense(32, Activation::relu)};
  HeadSpec head{HeadKind::sigmoid_binary, 1};
  bool train_attention = false;  // unfreeze attention layers inside the trunk
  TrainConfig train;
};

struct FineTuned {
  NetworkSpec spec;  // trunk layers followed by the new head layers
  ParameterSet params;
  TrainHistory history;
  std::vector<bool> frozen;  // per trunk layer, as trained
  std::string trunk_hash_before;
  std::string trunk_hash_after;
};

// Trains a fresh head on top of the trunk; frozen trunk layers are never
// updated.
inline FineTuned fine_tune(const FrozenTrunk& trunk, const Dataset& d, const FineTuneOptions& opt) {
  if (d.n_features() != trunk.input_dim())
    throw ShapeError("dataset has " + std::to_string(d.n_features()) + " features, trunk expects " +
                     std::to_string(trunk.input_dim()));
  FineTuned out;
  out.spec.input_dim = trunk.spec.input_dim;
  out.spec.masks = trunk.spec.masks;
  out.spec.layers.assign(trunk.spec.layers.begin(),
                         trunk.spec.layers.begin() + static_cast<std::ptrdiff_t>(trunk.cut));
  for (const auto& l : opt.head_layers) {
    if (l.kind == LayerKind::sparse || l.kind == LayerKind::attention)
      throw InvalidArgument("fine-tune head layers must be dense or dropout");
    out.spec.layers.push_back(l);
  }
  out.spec.head = opt.head;
  out.spec.validate();
  check_task(out.spec, d);

  out.frozen = trunk.frozen;
  if (opt.train_attention)
    for (std::size_t i = 0; i < trunk.cut; ++i)
      if (trunk.spec.layers[i].kind == LayerKind::attention) out.frozen[i] = false;

  ParameterSet params = init_params(out.spec, derive_seed(opt.train.seed, kInitStream));
  for (std::size_t i = 0; i < trunk.cut; ++i) params.layers[i] = trunk.params.layers[i];
  out.trunk_hash_before = trunk_hash(params, out.frozen);

  TrainConfig cfg = opt.train;
  cfg.frozen.assign(out.spec.layers.size() + 1, false);
  std::copy(out.frozen.begin(), out.frozen.end(), cfg.frozen.begin());
  TrainResult r = train_from(out.spec, std::move(params), d, cfg);
  out.params = std::move(r.params);
  out.history = std::move(r.history);
  out.trunk_hash_after = trunk_hash(out.params, out.frozen);
  if (out.trunk_hash_after != out.trunk_hash_before)
    throw NumericError("frozen trunk parameters changed during fine-tuning");
  return out;
}

// ---------------------------------------------------------------------------
// Logistic-regression probe

struct ProbeConfig {
  std::size_t epochs = 500;
  double learning_rate = 0.1;
  double l2 = 0.0;
};

struct LinearProbe {
  std::vector<double> weights;
  double bias = 0.0;

  std::vector<double> predict_proba(const Matrix& x) const {
    if (x.cols() != weights.size()) throw ShapeError("probe input width mismatch");
    std::vector<double> p(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      double z = bias;
      const auto row = x.row(i);
      for (std::size_t j = 0; j < row.size(); ++j) z += row[j] * weights[j];
      p[i] = sigmoid(z);
    }
    return p;
  }

  double accuracy(const Matrix& x, std::span<const int> labels) const {
    const auto p = predict_proba(x);
    if (labels.size() != p.size()) throw ShapeError("label count does not match rows");
    if (p.empty()) throw InvalidArgument("accuracy of an empty prediction set");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < p.size(); ++i) hit += (p[i] >= 0.5 ? 1 : 0) == labels[i];
    return static_cast<double>(hit) / static_cast<double>(p.size());
  }
};

// Full-batch gradient descent on the mean binary cross-entropy, from zero
// weights.
inline LinearProbe linear_probe(const Matrix& features, std::span<const int> labels,
                                const ProbeConfig& cfg = {}) {
  const std::size_t n = features.rows(), f = features.cols();
  if (labels.size() != n) throw ShapeError("label count does not match rows");
  if (n == 0) throw InvalidArgument("linear probe on an empty dataset");
  bool seen[2] = {false, false};
  for (int y : labels) {
    if (y != 0 && y != 1) throw InvalidArgument("linear probe needs labels in {0, 1}");
    seen[y] = true;
  }
  if (!seen[0] || !seen[1]) throw InvalidArgument("linear probe needs both classes in the training labels");
  LinearProbe m;
  m.weights.assign(f, 0.0);
  std::vector<double> gw(f);
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const auto p = m.predict_proba(features);
    std::fill(gw.begin(), gw.end(), 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = p[i] - labels[i];
      const auto row = features.row(i);
      for (std::size_t j = 0; j < f; ++j) gw[j] += r * row[j];
      gb += r;
    }
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t j = 0; j < f; ++j)
      m.weights[j] -= cfg.learning_rate * (gw[j] * inv + cfg.l2 * m.weights[j]);
    m.bias -= cfg.learning_rate * gb * inv;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Feature alignment between source and target datasets

enum class AlignStatus { matched, imputed, dropped };

inline const char* to_string(AlignStatus s) {
  switch (s) {
    case AlignStatus::matched: return "matched";
    case AlignStatus::imputed: return "imputed";
    case AlignStatus::dropped: return "dropped";
  }
  return "?";
}

struct AlignmentEntry {
  std::string feature;
  AlignStatus status;
};

struct Alignment {
  Dataset data;  // columns in source order
  std::vector<AlignmentEntry> entries;

  std::size_t count(AlignStatus s) const {
    return static_cast<std::size_t>(
        std::count_if(entries.begin(), entries.end(), [s](const auto& e) { return e.status == s; }));
  }
};

// Reorders target columns to the source feature order. Source features absent
// from the target are filled with `fill` (0 is the mean of a standardized
// column); target-only features are dropped.
inline Alignment align_features(const Dataset& target, const std::vector<std::string>& source_names,
                                double fill = 0.0) {
  std::unordered_map<std::string, std::size_t> where;
  for (std::size_t j = 0; j < target.feature_names.size(); ++j) where.emplace(target.feature_names[j], j);
  Alignment a;
  a.data = target;
  a.data.feature_names = source_names;
  a.data.x = Matrix(target.n_rows(), source_names.size(), fill);
  std::vector<bool> used(target.n_features(), false);
  for (std::size_t s = 0; s < source_names.size(); ++s) {
    auto it = where.find(source_names[s]);
    if (it == where.end()) {
      a.entries.push_back({source_names[s], AlignStatus::imputed});
      continue;
    }
    used[it->second] = true;
    for (std::size_t i = 0; i < target.n_rows(); ++i) a.data.x(i, s) = target.x(i, it->second);
    a.entries.push_back({source_names[s], AlignStatus::matched});
  }
  for (std::size_t j = 0; j < target.n_features(); ++j)
    if (!used[j]) a.entries.push_back({target.feature_names[j], AlignStatus::dropped});
  return a;
}

inline void write_alignment_csv(const Alignment& a, const std::string& path) {
  csv::Writer w(path);
  w.comment("matched", std::to_string(a.count(AlignStatus::matched)));
  w.comment("imputed", std::to_string(a.count(AlignStatus::imputed)));
  w.comment("dropped", std::to_string(a.count(AlignStatus::dropped)));
  w.row({"feature", "status"});
  for (const auto& e : a.entries) w.row({e.feature, to_string(e.status)});
}

}  // namespace sparsetab
