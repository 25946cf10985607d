#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sparsetab/data.hpp"
#include "sparsetab/losses.hpp"
#include "sparsetab/metrics.hpp"
#include "sparsetab/network.hpp"
#include "sparsetab/optim.hpp"

namespace sparsetab {

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  AdamConfig adam;
  std::uint64_t seed = 0;
  bool shuffle = true;
  // Survival heads use the whole training set as one batch unless disabled;
  // mini-batch risk sets are then batch-relative (an approximation).
  bool full_batch_survival = true;
  // One flag per spec layer followed by one for the head.
  std::vector<bool> frozen;

  void validate() const {
    if (epochs < 1) throw InvalidArgument("epochs must be at least 1");
    if (batch_size < 1) throw InvalidArgument("batch_size must be at least 1");
    if (!(adam.learning_rate > 0.0)) throw InvalidArgument("learning_rate must be positive");
    if (!(adam.l1_attention >= 0.0)) throw InvalidArgument("l1_attention must be non-negative");
  }
};

struct EpochRecord {
  double loss = 0.0;
  std::optional<double> val_loss;
  std::optional<double> val_metric;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

struct TrainResult {
  ParameterSet params;
  TrainHistory history;
};

// Seed streams carved out of TrainConfig::seed.
enum SeedStream : std::uint64_t { kInitStream = 1, kShuffleStream = 2, kDropoutStream = 3 };

inline void check_task(const NetworkSpec& spec, const Dataset& d) {
  if (d.n_features() != spec.input_dim)
    throw ShapeError("dataset has " + std::to_string(d.n_features()) + " features, network expects " +
                     std::to_string(spec.input_dim));
  switch (spec.head.kind) {
    case HeadKind::softmax_classifier:
      if (!d.labels) throw InvalidArgument("classification head needs class labels");
      if (d.n_classes() > spec.head.classes)
        throw InvalidArgument("dataset has more classes than the softmax head");
      break;
    case HeadKind::sigmoid_binary:
      if (!d.labels) throw InvalidArgument("binary head needs class labels");
      if (d.n_classes() > 2) throw InvalidArgument("binary head needs labels in {0, 1}");
      break;
    case HeadKind::linear_risk:
      if (!d.survival) throw InvalidArgument("risk head needs survival columns");
      break;
  }
}

// Loss and logit gradient for the spec's head on `rows` of the dataset.
inline LossResult head_loss(const NetworkSpec& spec, const Matrix& output, const Dataset& d,
                            std::span<const std::size_t> rows) {
  switch (spec.head.kind) {
    case HeadKind::softmax_classifier:
    case HeadKind::sigmoid_binary: {
      std::vector<int> y(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) y[i] = (*d.labels)[rows[i]];
      return spec.head.kind == HeadKind::softmax_classifier ? categorical_cross_entropy(output, y)
                                                            : binary_cross_entropy(output, y);
    }
    case HeadKind::linear_risk: {
      std::vector<double> t(rows.size());
      std::vector<int> e(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) {
        t[i] = d.survival->time[rows[i]];
        e[i] = d.survival->event[rows[i]];
      }
      return cox_breslow_loss(output.col(0), t, e);
    }
  }
  throw InvalidArgument("unknown head");
}

inline Matrix predict(const NetworkSpec& spec, const ParameterSet& params, const Matrix& x) {
  return forward(spec, params, x, Mode::infer).output;
}

// Accuracy for classification heads, Harrell's C for risk heads.
inline double evaluate(const NetworkSpec& spec, const ParameterSet& params, const Dataset& d) {
  const Matrix out = predict(spec, params, d.x);
  if (spec.head.kind == HeadKind::linear_risk)
    return concordance_index(out.col(0), d.survival->time, d.survival->event);
  return accuracy(out, *d.labels);
}

namespace detail {

inline std::vector<std::size_t> iota_rows(std::size_t n) {
  std::vector<std::size_t> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = i;
  return r;
}

inline Matrix gather_rows(const Matrix& x, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = x.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

inline bool batch_has_event(const Dataset& d, std::span<const std::size_t> rows) {
  for (auto r : rows)
    if (d.survival->event[r] == 1) return true;
  return false;
}

}  // namespace detail

// Mini-batch Adam starting from `params`. Fully determined by the config seed.
inline TrainResult train_from(const NetworkSpec& spec, ParameterSet params, const Dataset& d,
                              const TrainConfig& cfg, const Dataset* validation = nullptr) {
  cfg.validate();
  spec.validate();
  check_task(spec, d);
  if (validation) check_task(spec, *validation);
  enforce_masks(spec, params);

  const SpecIndex index(spec);
  Rng shuffle_rng(derive_seed(cfg.seed, kShuffleStream));
  Rng dropout_rng(derive_seed(cfg.seed, kDropoutStream));
  AdamState state = AdamState::zeros_for(params);
  const bool survival = spec.head.kind == HeadKind::linear_risk;
  const std::size_t batch =
      (survival && cfg.full_batch_survival) ? d.n_rows() : std::min(cfg.batch_size, d.n_rows());

  TrainResult res;
  std::vector<std::size_t> order = detail::iota_rows(d.n_rows());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t loss_rows = 0;
    for (std::size_t start = 0, b = 0; start < order.size(); start += batch, ++b) {
      const std::size_t end = std::min(start + batch, order.size());
      const std::span<const std::size_t> rows(order.data() + start, end - start);
      if (survival && !detail::batch_has_event(d, rows)) continue;
      const Matrix xb = detail::gather_rows(d.x, rows);
      ForwardResult fr;
      try {
        fr = forward(spec, params, xb, Mode::train, &dropout_rng, &index);
      } catch (const NumericError&) {
        throw NumericError("non-finite forward pass at epoch " + std::to_string(epoch + 1) +
                           ", batch " + std::to_string(b + 1));
      }
      LossResult loss = head_loss(spec, fr.output, d, rows);
      if (!std::isfinite(loss.value))
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                           std::to_string(b + 1));
      const ParameterSet grads = backward(spec, params, &*fr.cache, loss.grad, &index);
      adam_step(spec, params, grads, state, cfg.adam, cfg.frozen);
      loss_sum += loss.value * static_cast<double>(rows.size());
      loss_rows += rows.size();
    }
    EpochRecord rec;
    rec.loss = loss_rows ? loss_sum / static_cast<double>(loss_rows) : 0.0;
    if (validation) {
      const Matrix out = predict(spec, params, validation->x);
      const auto rows = detail::iota_rows(validation->n_rows());
      rec.val_loss = head_loss(spec, out, *validation, rows).value;
      rec.val_metric = evaluate(spec, params, *validation);
    }
    res.history.epochs.push_back(rec);
  }
  res.params = std::move(params);
  return res;
}

inline TrainResult train(const NetworkSpec& spec, const Dataset& d, const TrainConfig& cfg,
                         const Dataset* validation = nullptr) {
  return train_from(spec, init_params(spec, derive_seed(cfg.seed, kInitStream)), d, cfg, validation);
}

inline void write_history_csv(const TrainHistory& h, const std::string& path) {
  csv::Writer w(path);
  w.row({"epoch", "loss", "val_loss", "val_metric"});
  for (std::size_t e = 0; e < h.epochs.size(); ++e) {
    const auto& r = h.epochs[e];
    w.row({std::to_string(e + 1), csv::format_double(r.loss),
           r.val_loss ? csv::format_double(*r.val_loss) : "",
           r.val_metric ? csv::format_double(*r.val_metric) : ""});
  }
}

}  // namespace sparsetab
