#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "sparsetab/data.hpp"
#include "sparsetab/maskgen.hpp"
#include "sparsetab/metrics.hpp"
#include "sparsetab/network.hpp"
#include "sparsetab/parallel.hpp"
#include "sparsetab/train.hpp"

namespace sparsetab {

// ---------------------------------------------------------------------------
// Attention-derived importance

struct ImportanceReport {
  std::vector<double> importance;   // mean attention weight per feature
  std::vector<std::size_t> ranks;   // 1 = most important; ties by feature index
  std::vector<double> raw_weights;  // learnable attention vector
  std::vector<std::string> feature_names;
  std::string model_id;
  std::string dataset_id;
  std::size_t n_samples = 0;

  std::size_t n_features() const noexcept { return importance.size(); }

  // Feature indices from most to least important.
  std::vector<std::size_t> descending() const {
    std::vector<std::size_t> order(ranks.size());
    for (std::size_t j = 0; j < ranks.size(); ++j) order[ranks[j] - 1] = j;
    return order;
  }
};

inline std::vector<std::size_t> rank_descending(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  std::vector<std::size_t> ranks(values.size());
  for (std::size_t r = 0; r < order.size(); ++r) ranks[order[r]] = r + 1;
  return ranks;
}

// Index of the attention layer that reads the raw features (before any sparse
// or dense layer).
inline std::size_t input_attention_layer(const NetworkSpec& spec) {
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto k = spec.layers[i].kind;
    if (k == LayerKind::attention) return i;
    if (k == LayerKind::sparse || k == LayerKind::dense) break;
  }
  throw InvalidArgument("model has no attention layer over its input features");
}

inline ImportanceReport feature_importance(const NetworkSpec& spec, const ParameterSet& params,
                                           const Dataset& d) {
  const std::size_t layer = input_attention_layer(spec);
  if (d.n_rows() == 0) throw InvalidArgument("feature importance over an empty dataset");
  const Matrix h = forward_prefix(spec, params, d.x, layer);
  const auto att = attention_forward(h, params.layers[layer].attention, spec.layers[layer].score);
  ImportanceReport r;
  r.importance = column_sums(att.alpha);
  for (double& v : r.importance) v /= static_cast<double>(d.n_rows());
  r.ranks = rank_descending(r.importance);
  r.raw_weights = params.layers[layer].attention;
  r.feature_names = d.feature_names;
  r.n_samples = d.n_rows();
  return r;
}

// Element-wise mean of several reports over the same features.
inline ImportanceReport average_reports(std::span<const ImportanceReport> reports) {
  if (reports.empty()) throw InvalidArgument("no importance reports to average");
  ImportanceReport out = reports.front();
  for (std::size_t k = 1; k < reports.size(); ++k) {
    if (reports[k].n_features() != out.n_features())
      throw ShapeError("importance reports cover different feature counts");
    for (std::size_t j = 0; j < out.n_features(); ++j) {
      out.importance[j] += reports[k].importance[j];
      out.raw_weights[j] += reports[k].raw_weights[j];
    }
    out.n_samples += reports[k].n_samples;
  }
  const double n = static_cast<double>(reports.size());
  for (auto& v : out.importance) v /= n;
  for (auto& v : out.raw_weights) v /= n;
  out.ranks = rank_descending(out.importance);
  out.model_id = "mean_of_" + std::to_string(reports.size());
  return out;
}

inline void write_importance_csv(const ImportanceReport& r, const std::string& path,
                                 const std::map<std::string, std::string>& meta = {}) {
  csv::Writer w(path);
  w.comment("model", r.model_id);
  w.comment("dataset", r.dataset_id);
  w.comment("n_samples", std::to_string(r.n_samples));
  for (const auto& [k, v] : meta) w.comment(k, v);
  w.row({"feature", "index", "importance", "rank", "raw_weight"});
  for (std::size_t j = 0; j < r.n_features(); ++j) {
    w.row({j < r.feature_names.size() ? r.feature_names[j] : "f" + std::to_string(j),
           std::to_string(j), csv::format_double(r.importance[j]), std::to_string(r.ranks[j]),
           csv::format_double(r.raw_weights[j])});
  }
}

// ---------------------------------------------------------------------------
// Separation between informative and noise features

struct SeparationStat {
  double informative_mean = 0.0;
  std::optional<double> noise_mean;  // empty when every feature is informative
  std::optional<double> gap;         // informative_mean - noise_mean
};

inline SeparationStat separation_stat(std::span<const double> importance,
                                      std::span<const std::size_t> informative) {
  if (informative.empty()) throw InvalidArgument("separation needs at least one informative index");
  std::vector<bool> is_inf(importance.size(), false);
  for (auto j : informative) {
    if (j >= importance.size())
      throw InvalidArgument("informative index " + std::to_string(j) + " out of range");
    is_inf[j] = true;
  }
  double inf_sum = 0.0, noise_sum = 0.0;
  std::size_t n_inf = 0, n_noise = 0;
  for (std::size_t j = 0; j < importance.size(); ++j) {
    if (is_inf[j]) {
      inf_sum += importance[j];
      ++n_inf;
    } else {
      noise_sum += importance[j];
      ++n_noise;
    }
  }
  SeparationStat s;
  s.informative_mean = inf_sum / static_cast<double>(n_inf);
  if (n_noise > 0) {
    s.noise_mean = noise_sum / static_cast<double>(n_noise);
    s.gap = s.informative_mean - *s.noise_mean;
  }
  return s;
}

inline SeparationStat separation_stat(const ImportanceReport& r,
                                      std::span<const std::size_t> informative) {
  return separation_stat(r.importance, informative);
}

// ---------------------------------------------------------------------------
// Shared experiment plumbing

// Builds a network for a (possibly feature-reduced) training set; the seed
// drives any stochastic mask generation.
using SpecBuilder = std::function<NetworkSpec(const Dataset& train, std::uint64_t seed)>;

// Classification head matching the dataset's labels (or a risk head).
inline HeadSpec head_for(const Dataset& d) {
  if (d.survival && !d.labels) return {HeadKind::linear_risk, 1};
  const std::size_t c = std::max<std::size_t>(d.n_classes(), 2);
  return {HeadKind::softmax_classifier, c};
}

// Identity mask (one unit per feature) + reference architecture.
inline SpecBuilder identity_builder(ArchitectureOptions arch = {},
                                    std::optional<HeadSpec> head = std::nullopt) {
  return [arch, head](const Dataset& train, std::uint64_t) {
    return make_network(train.n_features(), identity_mask(train.feature_names),
                        head.value_or(head_for(train)), arch);
  };
}

// Fresh cosine-graph random-walk mask on the training data.
inline SpecBuilder random_walk_builder(RandomWalkMaskOptions walk, ArchitectureOptions arch = {},
                                       std::optional<HeadSpec> head = std::nullopt) {
  return [walk, arch, head](const Dataset& train, std::uint64_t seed) {
    RandomWalkMaskOptions w = walk;
    w.walks.seed = seed;
    return make_network(train.n_features(), random_walk_mask(train, w),
                        head.value_or(head_for(train)), arch);
  };
}

// Fixed mask whose rows follow feature names; removed features drop their rows.
inline SpecBuilder fixed_mask_builder(MaskMatrix mask, ArchitectureOptions arch = {},
                                      std::optional<HeadSpec> head = std::nullopt) {
  return [mask, arch, head](const Dataset& train, std::uint64_t) {
    std::vector<std::size_t> rows;
    for (const auto& name : train.feature_names) {
      auto it = std::find(mask.feature_names.begin(), mask.feature_names.end(), name);
      if (it == mask.feature_names.end())
        throw InvalidArgument("feature '" + name + "' is not covered by the mask");
      rows.push_back(static_cast<std::size_t>(it - mask.feature_names.begin()));
    }
    return make_network(train.n_features(), mask.select_features(rows),
                        head.value_or(head_for(train)), arch);
  };
}

struct TrialResult {
  NetworkSpec spec;
  ParameterSet params;
  double metric = 0.0;  // test accuracy or c-index
  Split split;
};

// Split, build, train, score. The split uses `seed`, training derives its
// own stream from it.
inline TrialResult run_trial(const Dataset& d, const SpecBuilder& builder, const TrainConfig& base,
                             double test_fraction, std::uint64_t seed) {
  TrialResult t;
  t.split = split(d, test_fraction, seed);
  t.spec = builder(t.split.train, derive_seed(seed, 11));
  TrainConfig cfg = base;
  cfg.seed = derive_seed(seed, 12);
  t.params = train(t.spec, t.split.train, cfg).params;
  t.metric = evaluate(t.spec, t.params, t.split.test);
  return t;
}

// ---------------------------------------------------------------------------
// MoRF / LeRF

struct AblationOptions {
  std::size_t steps = 10;
  std::size_t repeats = 10;
  std::uint64_t seed = 0;
  double test_fraction = 0.2;
  TrainConfig train;
  std::size_t threads = 1;  // repeats run concurrently
  // Removal counts at which to retrain; empty means every count 0..steps.
  std::vector<std::size_t> checkpoints;
};

struct AblationCurve {
  std::vector<std::size_t> removed;         // removal order (feature indices)
  std::vector<std::size_t> removal_counts;  // index 0 is the full model
  std::vector<double> mean;
  std::vector<double> sd;
  std::vector<std::vector<double>> per_repeat;
};

inline AblationCurve ablation_curve(const Dataset& d, const SpecBuilder& builder,
                                    std::vector<std::size_t> order, const AblationOptions& opt) {
  if (opt.steps >= d.n_features())
    throw InvalidArgument("ablation steps must be fewer than the feature count");
  if (opt.repeats == 0) throw InvalidArgument("ablation needs at least one repeat");
  AblationCurve c;
  c.removed.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(opt.steps));
  if (opt.checkpoints.empty()) {
    for (std::size_t k = 0; k <= opt.steps; ++k) c.removal_counts.push_back(k);
  } else {
    c.removal_counts = opt.checkpoints;
    std::sort(c.removal_counts.begin(), c.removal_counts.end());
    c.removal_counts.erase(std::unique(c.removal_counts.begin(), c.removal_counts.end()),
                           c.removal_counts.end());
    if (c.removal_counts.back() > opt.steps)
      throw InvalidArgument("ablation checkpoint beyond the step count");
  }
  for (std::size_t k : c.removal_counts) {
    const Dataset reduced = d.drop_features(std::span(c.removed).first(k));
    std::vector<double> values = parallel_map<double>(opt.repeats, opt.threads, [&](std::size_t r) {
      return run_trial(reduced, builder, opt.train, opt.test_fraction, derive_seed(opt.seed, r)).metric;
    });
    const Summary s = summarize(values);
    c.mean.push_back(s.mean);
    c.sd.push_back(s.sd);
    c.per_repeat.push_back(std::move(values));
  }
  return c;
}

inline void check_report_covers(const ImportanceReport& r, const Dataset& d) {
  if (r.n_features() != d.n_features())
    throw InvalidArgument("importance report covers " + std::to_string(r.n_features()) +
                          " features, dataset has " + std::to_string(d.n_features()));
  if (!r.feature_names.empty() && r.feature_names != d.feature_names)
    throw InvalidArgument("importance report feature names differ from the dataset");
}

// Most Relevant First: remove features in descending importance, retraining
// from scratch at every checkpoint. The order is frozen from `importance`.
inline AblationCurve morf(const Dataset& d, const SpecBuilder& builder,
                          const ImportanceReport& importance, const AblationOptions& opt) {
  check_report_covers(importance, d);
  return ablation_curve(d, builder, importance.descending(), opt);
}

// Least Relevant First: ascending importance.
inline AblationCurve lerf(const Dataset& d, const SpecBuilder& builder,
                          const ImportanceReport& importance, const AblationOptions& opt) {
  check_report_covers(importance, d);
  auto order = importance.descending();
  std::reverse(order.begin(), order.end());
  return ablation_curve(d, builder, std::move(order), opt);
}

inline void write_ablation_csv(const AblationCurve& c, const Dataset& d, const std::string& path,
                               const std::map<std::string, std::string>& meta = {}) {
  csv::Writer w(path);
  for (const auto& [k, v] : meta) w.comment(k, v);
  w.row({"removed_count", "last_removed", "mean_metric", "sd_metric", "per_repeat"});
  for (std::size_t i = 0; i < c.removal_counts.size(); ++i) {
    const std::size_t k = c.removal_counts[i];
    std::string per;
    for (std::size_t r = 0; r < c.per_repeat[i].size(); ++r)
      per += (r ? ";" : "") + csv::format_double(c.per_repeat[i][r]);
    w.row({std::to_string(k), k == 0 ? "" : d.feature_names[c.removed[k - 1]],
           csv::format_double(c.mean[i]), csv::format_double(c.sd[i]), per});
  }
}

// ---------------------------------------------------------------------------
// Synthetic separation and noise stability

struct SyntheticTrial {
  double accuracy = 0.0;
  ImportanceReport report;
  SeparationStat separation;
  std::vector<std::size_t> informative;
};

// Generates a synthetic dataset, standardizes it, trains on a split and reads
// importance over the full standardized dataset.
inline SyntheticTrial synthetic_trial(const SyntheticSpec& spec, const SpecBuilder& builder,
                                      const TrainConfig& cfg, double test_fraction,
                                      bool standardize_features = true) {
  SyntheticData syn = make_classification(spec);
  Dataset d = standardize_features ? standardize(syn.data).first : syn.data;
  const TrialResult t = run_trial(d, builder, cfg, test_fraction, derive_seed(spec.seed, 21));
  SyntheticTrial out;
  out.accuracy = t.metric;
  out.report = feature_importance(t.spec, t.params, d);
  out.separation = separation_stat(out.report, syn.informative);
  out.informative = std::move(syn.informative);
  return out;
}

struct NoiseSweepOptions {
  SyntheticSpec base;  // n_informative held fixed; n_features is overridden
  std::vector<std::size_t> noise_counts;
  std::size_t repeats = 10;
  std::uint64_t seed = 0;
  double test_fraction = 0.2;
  TrainConfig train;
  std::size_t threads = 1;
};

struct NoiseSweepRow {
  std::size_t n_noise = 0;
  std::vector<SeparationStat> per_seed;
  std::vector<double> accuracy;
  double informative_mean = 0.0;
  std::optional<double> noise_mean;
  std::optional<double> gap;
  double mean_accuracy = 0.0;
};

inline std::vector<NoiseSweepRow> noise_stability_sweep(const NoiseSweepOptions& opt,
                                                        const SpecBuilder& builder) {
  if (!std::is_sorted(opt.noise_counts.begin(), opt.noise_counts.end()))
    throw InvalidArgument("noise counts must be ascending");
  std::vector<NoiseSweepRow> rows;
  for (std::size_t n_noise : opt.noise_counts) {
    NoiseSweepRow row;
    row.n_noise = n_noise;
    const auto trials = parallel_map<SyntheticTrial>(opt.repeats, opt.threads, [&](std::size_t r) {
      SyntheticSpec s = opt.base;
      s.n_features = s.n_informative + n_noise;
      s.seed = derive_seed(opt.seed, r);
      return synthetic_trial(s, builder, opt.train, opt.test_fraction);
    });
    for (const auto& t : trials) {
      row.per_seed.push_back(t.separation);
      row.accuracy.push_back(t.accuracy);
    }
    const double n = static_cast<double>(opt.repeats);
    double noise = 0.0;
    for (const auto& st : row.per_seed) {
      row.informative_mean += st.informative_mean / n;
      if (st.noise_mean) noise += *st.noise_mean / n;
    }
    if (n_noise > 0) {
      row.noise_mean = noise;
      row.gap = row.informative_mean - noise;
    }
    row.mean_accuracy = summarize(row.accuracy).mean;
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void write_noise_sweep_csv(const std::vector<NoiseSweepRow>& rows, const std::string& path,
                                  const std::map<std::string, std::string>& meta = {}) {
  csv::Writer w(path);
  for (const auto& [k, v] : meta) w.comment(k, v);
  w.row({"n_noise", "informative_mean", "noise_mean", "gap", "mean_accuracy"});
  auto opt = [](const std::optional<double>& v) { return v ? csv::format_double(*v) : ""; };
  for (const auto& r : rows)
    w.row({std::to_string(r.n_noise), csv::format_double(r.informative_mean), opt(r.noise_mean),
           opt(r.gap), csv::format_double(r.mean_accuracy)});
}

// ---------------------------------------------------------------------------
// L1 feature selection

// Features whose learnable input-attention weight exceeds `threshold` in magnitude.
inline std::vector<std::size_t> select_features(const NetworkSpec& spec, const ParameterSet& params,
                                                double threshold = 1e-6) {
  const auto& w = params.layers[input_attention_layer(spec)].attention;
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < w.size(); ++j)
    if (std::abs(w[j]) > threshold) out.push_back(j);
  return out;
}

struct SelectionOptions {
  std::vector<double> lambdas;
  std::size_t repeats = 10;
  std::uint64_t seed = 0;
  double test_fraction = 0.2;
  double threshold = 1e-6;
  TrainConfig train;  // l1_attention is overridden per lambda
  bool retrain = true;
  std::size_t threads = 1;
};

struct SelectionRow {
  double lambda = 0.0;
  std::vector<std::size_t> counts;            // per repeat
  double mean_count = 0.0;
  std::vector<std::size_t> consensus;         // selected in at least half the repeats
  std::vector<double> downstream;             // per repeat, retrained without L1
  std::optional<double> mean_downstream;
};

// For every lambda and repeat: train with L1 on the attention vector, select
// features, then retrain (no L1) on the selected features with the same split.
inline std::vector<SelectionRow> l1_selection_sweep(const Dataset& d, const SpecBuilder& builder,
                                                    const SelectionOptions& opt) {
  std::vector<SelectionRow> rows;
  for (double lambda : opt.lambdas) {
    SelectionRow row;
    row.lambda = lambda;
    std::vector<std::size_t> votes(d.n_features(), 0);
    struct Repeat {
      std::vector<std::size_t> chosen;
      std::optional<double> downstream;
    };
    const auto repeats = parallel_map<Repeat>(opt.repeats, opt.threads, [&](std::size_t r) {
      TrainConfig cfg = opt.train;
      cfg.adam.l1_attention = lambda;
      const std::uint64_t seed = derive_seed(opt.seed, r);
      const TrialResult t = run_trial(d, builder, cfg, opt.test_fraction, seed);
      Repeat out{select_features(t.spec, t.params, opt.threshold), std::nullopt};
      if (opt.retrain && !out.chosen.empty()) {
        TrainConfig plain = opt.train;
        plain.adam.l1_attention = 0.0;
        const Dataset reduced = d.select_features(out.chosen);
        out.downstream = run_trial(reduced, builder, plain, opt.test_fraction, seed).metric;
      }
      return out;
    });
    for (const auto& rep : repeats) {
      row.counts.push_back(rep.chosen.size());
      for (auto j : rep.chosen) ++votes[j];
      if (rep.downstream) row.downstream.push_back(*rep.downstream);
    }
    for (std::size_t j = 0; j < votes.size(); ++j)
      if (2 * votes[j] >= opt.repeats) row.consensus.push_back(j);
    double total = 0.0;
    for (auto c : row.counts) total += static_cast<double>(c);
    row.mean_count = total / static_cast<double>(opt.repeats);
    if (!row.downstream.empty()) row.mean_downstream = summarize(row.downstream).mean;
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void write_selection_csv(const std::vector<SelectionRow>& rows, const Dataset& d,
                                const std::string& path,
                                const std::map<std::string, std::string>& meta = {}) {
  csv::Writer w(path);
  for (const auto& [k, v] : meta) w.comment(k, v);
  w.row({"lambda", "mean_count", "consensus_features", "downstream_accuracy"});
  for (const auto& r : rows) {
    std::string ids;
    for (std::size_t k = 0; k < r.consensus.size(); ++k)
      ids += (k ? ";" : "") + d.feature_names[r.consensus[k]];
    w.row({csv::format_double(r.lambda), csv::format_double(r.mean_count), ids,
           r.mean_downstream ? csv::format_double(*r.mean_downstream) : ""});
  }
}

// ---------------------------------------------------------------------------
// Random-walk neuron ablation

struct WalkAblationOptions {
  RandomWalkMaskOptions mask;
  ArchitectureOptions arch;  // post_sparse_attention is forced on
  std::size_t repeats = 100;
  std::size_t n_remove = 5;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
  TrainConfig train;
  std::size_t threads = 1;
};

struct ArmMetrics {
  std::vector<double> accuracy;
  std::vector<double> false_positive;
  std::vector<double> false_negative;
  double mean_accuracy = 0.0;
  double mean_false_positive = 0.0;
  double mean_false_negative = 0.0;
};

struct WalkAblationSummary {
  std::vector<std::size_t> tally;  // per feature: repeats in which it sat in the top walk
  std::size_t top_walk_members = 0;  // sum of |top walk| over repeats
  std::vector<std::size_t> targeted;
  ArmMetrics targeted_metrics;
  ArmMetrics random_metrics;
  std::vector<std::vector<std::size_t>> random_sets;
  int positive_class = 1;
};

// Positive class for false-positive/negative counts: 1 for binary tasks,
// otherwise the most frequent class (lowest index on ties).
inline int positive_class(const Dataset& d) {
  const std::size_t c = d.n_classes();
  if (c <= 2) return 1;
  std::vector<std::size_t> count(c, 0);
  for (int y : *d.labels) ++count[static_cast<std::size_t>(y)];
  return static_cast<int>(std::max_element(count.begin(), count.end()) - count.begin());
}

// Retrains with `removed[r]` dropped in repeat r; the split and training seed
// of repeat r depend only on (seed, r).
inline ArmMetrics evaluate_removal(const Dataset& d, const std::vector<std::vector<std::size_t>>& removed,
                                   const SpecBuilder& builder, const TrainConfig& cfg,
                                   double test_fraction, std::uint64_t seed, int positive,
                                   std::size_t threads = 1) {
  struct Result {
    double accuracy = 0.0;
    Confusion c;
  };
  const auto results = parallel_map<Result>(removed.size(), threads, [&](std::size_t r) {
    const Dataset reduced = d.drop_features(removed[r]);
    const TrialResult t = run_trial(reduced, builder, cfg, test_fraction, derive_seed(seed, r));
    const auto pred = predict_classes(predict(t.spec, t.params, t.split.test.x));
    return Result{t.metric, confusion(pred, *t.split.test.labels, positive)};
  });
  ArmMetrics m;
  for (const auto& r : results) {
    m.accuracy.push_back(r.accuracy);
    m.false_positive.push_back(static_cast<double>(r.c.false_positive));
    m.false_negative.push_back(static_cast<double>(r.c.false_negative));
  }
  m.mean_accuracy = summarize(m.accuracy).mean;
  m.mean_false_positive = summarize(m.false_positive).mean;
  m.mean_false_negative = summarize(m.false_negative).mean;
  return m;
}

inline WalkAblationSummary walk_ablation(const Dataset& d, const WalkAblationOptions& opt) {
  if (!d.labels) throw InvalidArgument("walk ablation needs a classification dataset");
  ArchitectureOptions arch = opt.arch;
  arch.post_sparse_attention = true;
  const SpecBuilder builder = random_walk_builder(opt.mask, arch);

  WalkAblationSummary s;
  s.tally.assign(d.n_features(), 0);
  s.positive_class = positive_class(d);
  const std::uint64_t tally_seed = derive_seed(opt.seed, 101);
  const auto tops = parallel_map<std::vector<std::size_t>>(opt.repeats, opt.threads, [&](std::size_t r) {
    const TrialResult t = run_trial(d, builder, opt.train, opt.test_fraction, derive_seed(tally_seed, r));
    std::size_t sparse_layer = 0, post_attention = 0;
    for (std::size_t i = 0; i < t.spec.layers.size(); ++i) {
      if (t.spec.layers[i].kind == LayerKind::sparse) sparse_layer = i;
      if (t.spec.layers[i].kind == LayerKind::attention && i > 0) post_attention = i;
    }
    const Matrix h = forward_prefix(t.spec, t.params, t.split.train.x, post_attention);
    const auto att = attention_forward(h, t.params.layers[post_attention].attention,
                                       t.spec.layers[post_attention].score);
    const auto mean_alpha = column_sums(att.alpha);
    const auto top = static_cast<std::size_t>(
        std::max_element(mean_alpha.begin(), mean_alpha.end()) - mean_alpha.begin());
    return t.spec.masks[t.spec.layers[sparse_layer].mask].members(top);
  });
  for (const auto& members : tops) {
    for (auto j : members) ++s.tally[j];
    s.top_walk_members += members.size();
  }

  std::vector<std::size_t> order(d.n_features());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return s.tally[a] > s.tally[b]; });
  const auto distinct = static_cast<std::size_t>(
      std::count_if(s.tally.begin(), s.tally.end(), [](std::size_t c) { return c > 0; }));
  if (distinct < opt.n_remove)
    throw InvalidArgument("top walks cover only " + std::to_string(distinct) + " distinct features; " +
                          std::to_string(opt.n_remove) + " needed");
  s.targeted.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(opt.n_remove));
  std::sort(s.targeted.begin(), s.targeted.end());

  Rng pick(derive_seed(opt.seed, 102));
  for (std::size_t r = 0; r < opt.repeats; ++r) {
    auto perm = pick.permutation(d.n_features());
    perm.resize(opt.n_remove);
    std::sort(perm.begin(), perm.end());
    s.random_sets.push_back(std::move(perm));
  }
  const std::uint64_t eval_seed = derive_seed(opt.seed, 103);
  const std::vector<std::vector<std::size_t>> targeted_sets(opt.repeats, s.targeted);
  s.targeted_metrics = evaluate_removal(d, targeted_sets, builder, opt.train, opt.test_fraction,
                                        eval_seed, s.positive_class, opt.threads);
  s.random_metrics = evaluate_removal(d, s.random_sets, builder, opt.train, opt.test_fraction,
                                      eval_seed, s.positive_class, opt.threads);
  return s;
}

}  // namespace sparsetab
