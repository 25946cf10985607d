#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "sparsetab/matrix.hpp"

namespace sparsetab {

inline std::vector<int> predict_classes(const Matrix& preds) {
  std::vector<int> out(preds.rows());
  for (std::size_t i = 0; i < preds.rows(); ++i) {
    if (preds.cols() == 1) {
      out[i] = preds(i, 0) >= 0.5 ? 1 : 0;
      continue;
    }
    std::size_t best = 0;
    for (std::size_t j = 1; j < preds.cols(); ++j)
      if (preds(i, j) > preds(i, best)) best = j;
    out[i] = static_cast<int>(best);
  }
  return out;
}

// Fraction correct: argmax for multi-column predictions, threshold 0.5 for a
// single probability column.
inline double accuracy(const Matrix& preds, std::span<const int> labels) {
  if (preds.rows() == 0) throw InvalidArgument("accuracy of an empty prediction set");
  if (labels.size() != preds.rows()) throw ShapeError("label count does not match predictions");
  const auto cls = predict_classes(preds);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < cls.size(); ++i) hit += cls[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(cls.size());
}

// Harrell's C: pair (i, j) is comparable iff t_i < t_j and subject i had the
// event; it is concordant when risk_i > risk_j and counts 1/2 on a risk tie.
inline double concordance_index(std::span<const double> risk, std::span<const double> time,
                                std::span<const int> event) {
  const std::size_t n = risk.size();
  if (time.size() != n || event.size() != n) throw ShapeError("c-index inputs differ in length");
  double concordant = 0.0;
  std::size_t comparable = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (event[i] != 1) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (!(time[i] < time[j])) continue;
      ++comparable;
      if (risk[i] > risk[j]) concordant += 1.0;
      else if (risk[i] == risk[j]) concordant += 0.5;
    }
  }
  if (comparable == 0) throw InvalidArgument("no comparable pairs for the concordance index");
  return concordant / static_cast<double>(comparable);
}

struct Confusion {
  std::size_t false_positive = 0;
  std::size_t false_negative = 0;
};

// One-vs-rest counts for `positive`.
inline Confusion confusion(std::span<const int> predicted, std::span<const int> labels, int positive) {
  Confusion c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool p = predicted[i] == positive, y = labels[i] == positive;
    c.false_positive += p && !y;
    c.false_negative += !p && y;
  }
  return c;
}

struct Summary {
  double mean = 0.0;
  double sd = 0.0;
};

// Mean and sample standard deviation (0 for fewer than two values).
inline Summary summarize(std::span<const double> v) {
  Summary s;
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

}  // namespace sparsetab
