#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sparsetab/csv.hpp"
#include "sparsetab/matrix.hpp"
#include "sparsetab/rng.hpp"

namespace sparsetab {

struct SurvivalColumns {
  std::vector<double> time;
  std::vector<int> event;
};

// Feature matrix plus optional class labels and optional (time, event) columns.
struct Dataset {
  Matrix x;
  std::optional<std::vector<int>> labels;
  std::optional<SurvivalColumns> survival;
  std::vector<std::string> feature_names;

  std::size_t n_rows() const noexcept { return x.rows(); }
  std::size_t n_features() const noexcept { return x.cols(); }

  std::size_t n_classes() const {
    if (!labels || labels->empty()) return 0;
    return static_cast<std::size_t>(*std::max_element(labels->begin(), labels->end())) + 1;
  }

  void validate() const {
    if (feature_names.size() != x.cols()) {
      throw ShapeError("dataset has " + std::to_string(x.cols()) + " feature columns but " +
                       std::to_string(feature_names.size()) + " names");
    }
    if (labels) {
      if (labels->size() != x.rows()) throw ShapeError("label count does not match rows");
      for (int l : *labels)
        if (l < 0) throw InvalidArgument("negative class label " + std::to_string(l));
    }
    if (survival) {
      if (survival->time.size() != x.rows() || survival->event.size() != x.rows())
        throw ShapeError("survival column length does not match rows");
      for (std::size_t i = 0; i < survival->time.size(); ++i) {
        if (!(survival->time[i] > 0.0))
          throw InvalidArgument("survival time must be positive (row " + std::to_string(i + 1) +
                                ")");
        if (survival->event[i] != 0 && survival->event[i] != 1)
          throw InvalidArgument("event indicator must be 0 or 1 (row " + std::to_string(i + 1) +
                                ")");
      }
    }
    if (!x.all_finite()) throw NumericError("dataset contains non-finite values");
  }

  Dataset select_rows(std::span<const std::size_t> rows) const {
    Dataset out;
    out.x = Matrix(rows.size(), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto src = x.row(rows[i]);
      std::copy(src.begin(), src.end(), out.x.row(i).begin());
    }
    if (labels) {
      out.labels.emplace();
      for (auto r : rows) out.labels->push_back((*labels)[r]);
    }
    if (survival) {
      out.survival.emplace();
      for (auto r : rows) {
        out.survival->time.push_back(survival->time[r]);
        out.survival->event.push_back(survival->event[r]);
      }
    }
    out.feature_names = feature_names;
    return out;
  }

  Dataset select_features(std::span<const std::size_t> cols) const {
    Dataset out;
    out.x = Matrix(x.rows(), cols.size());
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < cols.size(); ++j) out.x(i, j) = x(i, cols[j]);
    out.labels = labels;
    out.survival = survival;
    for (auto c : cols) out.feature_names.push_back(feature_names.at(c));
    return out;
  }

  Dataset drop_features(std::span<const std::size_t> drop) const {
    std::vector<bool> removed(x.cols(), false);
    for (auto d : drop) removed.at(d) = true;
    std::vector<std::size_t> keep;
    for (std::size_t j = 0; j < x.cols(); ++j)
      if (!removed[j]) keep.push_back(j);
    return select_features(keep);
  }
};

inline std::vector<std::string> default_feature_names(std::size_t n) {
  std::vector<std::string> names;
  names.reserve(n);
  for (std::size_t j = 0; j < n; ++j) names.push_back("f" + std::to_string(j));
  return names;
}

struct CsvColumns {
  std::optional<std::string> label;
  std::optional<std::string> time;
  std::optional<std::string> event;
};

// Loads a comma-delimited file with a header row. Designated label/time/event
// columns are removed from the feature set. Row numbers in error messages are
// 1-based data rows (the header is not counted).
inline Dataset load_csv(const std::string& path, const CsvColumns& columns = {}) {
  const csv::Table table = csv::read_table(path);
  auto find_column = [&](const std::optional<std::string>& name,
                         const char* role) -> std::optional<std::size_t> {
    if (!name) return std::nullopt;
    auto it = std::find(table.header.begin(), table.header.end(), *name);
    if (it == table.header.end())
      throw ParseError(std::string(role) + " column '" + *name + "' not found in '" + path + "'");
    return static_cast<std::size_t>(it - table.header.begin());
  };
  const auto label_col = find_column(columns.label, "label");
  const auto time_col = find_column(columns.time, "time");
  const auto event_col = find_column(columns.event, "event");
  if (time_col.has_value() != event_col.has_value())
    throw InvalidArgument("time and event columns must be given together");

  std::vector<std::size_t> feature_cols;
  Dataset d;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (c == label_col || c == time_col || c == event_col) continue;
    feature_cols.push_back(c);
    d.feature_names.push_back(table.header[c]);
  }

  auto number = [&](std::size_t r, std::size_t c) {
    auto v = csv::parse_double(table.rows[r][c]);
    if (!v || !std::isfinite(*v)) {
      throw ParseError("non-numeric cell '" + table.rows[r][c] + "' at row " +
                       std::to_string(r + 1) + ", column '" + table.header[c] + "' in '" +
                       path + "'");
    }
    return *v;
  };

  const std::size_t b = table.rows.size();
  d.x = Matrix(b, feature_cols.size());
  if (label_col) d.labels.emplace(b);
  if (time_col) d.survival.emplace(SurvivalColumns{std::vector<double>(b), std::vector<int>(b)});
  for (std::size_t r = 0; r < b; ++r) {
    for (std::size_t j = 0; j < feature_cols.size(); ++j) d.x(r, j) = number(r, feature_cols[j]);
    if (label_col) {
      const double v = number(r, *label_col);
      if (v < 0 || v != std::floor(v))
        throw ParseError("label at row " + std::to_string(r + 1) +
                         " is not a non-negative integer class index");
      (*d.labels)[r] = static_cast<int>(v);
    }
    if (time_col) {
      d.survival->time[r] = number(r, *time_col);
      const double e = number(r, *event_col);
      if (e != 0.0 && e != 1.0)
        throw ParseError("event at row " + std::to_string(r + 1) + " must be 0 or 1");
      d.survival->event[r] = static_cast<int>(e);
    }
  }
  d.validate();
  return d;
}

inline void write_csv(const Dataset& d, const std::string& path,
                      const std::string& label_name = "label",
                      const std::string& time_name = "time",
                      const std::string& event_name = "event") {
  csv::Writer w(path);
  std::vector<std::string> header = d.feature_names;
  if (d.labels) header.push_back(label_name);
  if (d.survival) {
    header.push_back(time_name);
    header.push_back(event_name);
  }
  w.row(header);
  std::vector<std::string> fields;
  for (std::size_t i = 0; i < d.n_rows(); ++i) {
    fields.clear();
    for (double v : d.x.row(i)) fields.push_back(csv::format_double(v));
    if (d.labels) fields.push_back(std::to_string((*d.labels)[i]));
    if (d.survival) {
      fields.push_back(csv::format_double(d.survival->time[i]));
      fields.push_back(std::to_string(d.survival->event[i]));
    }
    w.row(fields);
  }
}

// Per-feature mean and population standard deviation. Constant features get
// a divisor of 1.
struct ScalerParams {
  std::vector<double> mean;
  std::vector<double> std;
};

inline Dataset apply_scaler(const Dataset& d, const ScalerParams& p) {
  if (p.mean.size() != d.n_features() || p.std.size() != d.n_features())
    throw ShapeError("scaler has " + std::to_string(p.mean.size()) + " features, dataset has " +
                     std::to_string(d.n_features()));
  Dataset out = d;
  for (std::size_t i = 0; i < out.x.rows(); ++i)
    for (std::size_t j = 0; j < out.x.cols(); ++j)
      out.x(i, j) = (out.x(i, j) - p.mean[j]) / p.std[j];
  return out;
}

inline ScalerParams fit_scaler(const Matrix& x) {
  const std::size_t b = x.rows();
  ScalerParams p{std::vector<double>(x.cols(), 0.0), std::vector<double>(x.cols(), 1.0)};
  for (std::size_t j = 0; j < x.cols(); ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < b; ++i) sum += x(i, j);
    const double mean = sum / static_cast<double>(b);
    double ss = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
      const double dv = x(i, j) - mean;
      ss += dv * dv;
    }
    const double sd = std::sqrt(ss / static_cast<double>(b));
    p.mean[j] = mean;
    p.std[j] = (sd > 1e-12 * (1.0 + std::abs(mean))) ? sd : 1.0;
  }
  return p;
}

inline std::pair<Dataset, ScalerParams> standardize(const Dataset& d) {
  if (d.n_rows() < 2) throw InvalidArgument("standardize needs at least 2 rows");
  ScalerParams p = fit_scaler(d.x);
  return {apply_scaler(d, p), std::move(p)};
}

struct Split {
  Dataset train;
  Dataset test;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
};

// Seeded shuffle split. Stratified by class when the dataset carries labels
// and no survival columns; every class then needs at least two members.
inline Split split(const Dataset& d, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw InvalidArgument("test fraction must lie in (0, 1), got " +
                          csv::format_double(test_fraction));
  const std::size_t b = d.n_rows();
  if (b < 2) throw InvalidArgument("cannot split fewer than 2 rows");
  Rng rng(seed);
  Split s;
  auto take = [&](std::vector<std::size_t> idx) {
    rng.shuffle(idx);
    const double want = test_fraction * static_cast<double>(idx.size());
    std::size_t n_test = static_cast<std::size_t>(std::llround(want));
    n_test = std::clamp<std::size_t>(n_test, 1, idx.size() - 1);
    s.test_rows.insert(s.test_rows.end(), idx.begin(), idx.begin() + n_test);
    s.train_rows.insert(s.train_rows.end(), idx.begin() + n_test, idx.end());
  };
  if (d.labels && !d.survival) {
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < b; ++i) by_class[(*d.labels)[i]].push_back(i);
    for (const auto& [cls, idx] : by_class) {
      if (idx.size() < 2)
        throw InvalidArgument("class " + std::to_string(cls) +
                              " has fewer than 2 members; cannot stratify");
    }
    for (auto& [cls, idx] : by_class) take(idx);
  } else {
    std::vector<std::size_t> all(b);
    for (std::size_t i = 0; i < b; ++i) all[i] = i;
    take(std::move(all));
  }
  std::sort(s.train_rows.begin(), s.train_rows.end());
  std::sort(s.test_rows.begin(), s.test_rows.end());
  s.train = d.select_rows(s.train_rows);
  s.test = d.select_rows(s.test_rows);
  return s;
}

// Hypercube-vertex multiclass generator: one Gaussian cluster per class in
// the informative subspace, pure standard-normal noise elsewhere.
struct SyntheticSpec {
  std::size_t n_samples = 1000;
  std::size_t n_features = 100;
  std::size_t n_informative = 10;
  std::size_t n_classes = 6;
  double class_sep = 1.0;
  std::uint64_t seed = 0;
};

struct SyntheticData {
  Dataset data;
  std::vector<std::size_t> informative;  // sorted column indices
};

inline SyntheticData make_classification(const SyntheticSpec& spec) {
  if (spec.n_informative == 0 || spec.n_informative > spec.n_features)
    throw InvalidArgument("n_informative must be in [1, n_features]");
  if (spec.n_classes < 2) throw InvalidArgument("n_classes must be at least 2");
  if (!(spec.class_sep > 0.0)) throw InvalidArgument("class_sep must be positive");
  if (spec.n_informative < 63 &&
      spec.n_classes > (std::uint64_t{1} << spec.n_informative)) {
    throw InvalidArgument("n_classes (" + std::to_string(spec.n_classes) +
                          ") exceeds the 2^n_informative distinct hypercube vertices");
  }
  if (spec.n_samples < spec.n_classes)
    throw InvalidArgument("n_samples must be at least n_classes");

  Rng rng(spec.seed);
  const std::size_t ni = spec.n_informative;

  std::vector<std::vector<int>> vertices;
  while (vertices.size() < spec.n_classes) {
    std::vector<int> v(ni);
    for (auto& s : v) s = (rng.next_u64() >> 63) ? 1 : -1;
    if (std::find(vertices.begin(), vertices.end(), v) == vertices.end()) vertices.push_back(v);
  }

  std::vector<int> y(spec.n_samples);
  for (std::size_t i = 0; i < spec.n_samples; ++i) y[i] = static_cast<int>(i % spec.n_classes);
  rng.shuffle(y);

  const std::vector<std::size_t> column_order = rng.permutation(spec.n_features);
  // column_order[k] = destination column of generated column k; the first ni
  // generated columns are informative.
  Matrix x(spec.n_samples, spec.n_features);
  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    const auto& vertex = vertices[static_cast<std::size_t>(y[i])];
    for (std::size_t k = 0; k < spec.n_features; ++k) {
      const double centre = k < ni ? spec.class_sep * vertex[k] : 0.0;
      x(i, column_order[k]) = centre + rng.normal();
    }
  }

  SyntheticData out;
  out.data.x = std::move(x);
  out.data.labels = std::move(y);
  out.data.feature_names = default_feature_names(spec.n_features);
  out.informative.assign(column_order.begin(), column_order.begin() + ni);
  std::sort(out.informative.begin(), out.informative.end());
  return out;
}

// Proportional-hazards generator with a known linear risk: exponential event
// times with rate exp(x . beta); a `censor_fraction` share of rows is censored
// at a uniform fraction of their event time.
struct SurvivalSpec {
  std::size_t n_samples = 500;
  std::size_t n_features = 10;
  std::size_t n_informative = 5;
  double censor_fraction = 0.2;
  double effect = 1.0;
  std::uint64_t seed = 0;
};

struct SurvivalData {
  Dataset data;
  std::vector<double> true_risk;
  std::vector<double> beta;
};

inline SurvivalData make_survival(const SurvivalSpec& spec) {
  if (spec.n_informative > spec.n_features)
    throw InvalidArgument("n_informative must not exceed n_features");
  if (!(spec.censor_fraction >= 0.0 && spec.censor_fraction < 1.0))
    throw InvalidArgument("censor_fraction must lie in [0, 1)");
  Rng rng(spec.seed);
  SurvivalData out;
  out.beta.assign(spec.n_features, 0.0);
  for (std::size_t j = 0; j < spec.n_informative; ++j)
    out.beta[j] = spec.effect * ((j % 2) ? -1.0 : 1.0) * (0.5 + rng.uniform());
  Matrix x(spec.n_samples, spec.n_features);
  for (double& v : x.data()) v = rng.normal();
  out.true_risk.resize(spec.n_samples);
  SurvivalColumns sc{std::vector<double>(spec.n_samples), std::vector<int>(spec.n_samples)};
  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    double eta = 0.0;
    for (std::size_t j = 0; j < spec.n_features; ++j) eta += x(i, j) * out.beta[j];
    out.true_risk[i] = eta;
    double u = rng.uniform();
    while (u <= 0.0) u = rng.uniform();
    double t = -std::log(u) / std::exp(eta);
    int event = 1;
    if (rng.uniform() < spec.censor_fraction) {
      double c = rng.uniform();
      while (c <= 0.0) c = rng.uniform();
      t *= c;
      event = 0;
    }
    sc.time[i] = t;
    sc.event[i] = event;
  }
  out.data.x = std::move(x);
  out.data.survival = std::move(sc);
  out.data.feature_names = default_feature_names(spec.n_features);
  return out;
}

}  // namespace sparsetab
