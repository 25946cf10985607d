#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "sparsetab/matrix.hpp"

namespace sparsetab {

inline constexpr double kProbabilityFloor = 1e-12;

// Loss value plus its gradient with respect to the head's logits.
struct LossResult {
  double value = 0.0;
  Matrix grad;
};

// Mean of -log p_true over the batch. Gradient is (probs - one_hot) / b.
inline LossResult categorical_cross_entropy(const Matrix& probs, std::span<const int> labels) {
  if (labels.size() != probs.rows()) throw ShapeError("label count does not match batch size");
  const double b = static_cast<double>(probs.rows());
  LossResult r;
  r.grad = probs;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= probs.cols())
      throw InvalidArgument("label " + std::to_string(y) + " outside [0, " +
                            std::to_string(probs.cols()) + ")");
    r.value -= std::log(std::max(probs(i, static_cast<std::size_t>(y)), kProbabilityFloor));
    r.grad(i, static_cast<std::size_t>(y)) -= 1.0;
  }
  r.value /= b;
  for (double& g : r.grad.data()) g /= b;
  return r;
}

// Mean binary cross-entropy over a b x 1 probability column; logit-space
// gradient (p - y) / b.
inline LossResult binary_cross_entropy(const Matrix& p, std::span<const int> labels) {
  if (p.cols() != 1 || labels.size() != p.rows())
    throw ShapeError("binary cross-entropy expects a b x 1 column matching the labels");
  const double b = static_cast<double>(p.rows());
  LossResult r;
  r.grad = Matrix(p.rows(), 1);
  for (std::size_t i = 0; i < p.rows(); ++i) {
    const int y = labels[i];
    if (y != 0 && y != 1) throw InvalidArgument("binary labels must be 0 or 1");
    const double pi = std::clamp(p(i, 0), kProbabilityFloor, 1.0 - kProbabilityFloor);
    r.value -= y ? std::log(pi) : std::log(1.0 - pi);
    r.grad(i, 0) = (p(i, 0) - y) / b;
  }
  r.value /= b;
  return r;
}

// Negative Cox log partial likelihood with Breslow ties:
//   -sum_{i: event} [eta_i - log sum_{j: t_j >= t_i} exp(eta_j)]
// One pass over subjects sorted by descending time keeps a running
// log-sum-exp of the risk set; tied times join the risk set together.
inline LossResult cox_breslow_loss(std::span<const double> risk, std::span<const double> time,
                                   std::span<const int> event) {
  const std::size_t n = risk.size();
  if (time.size() != n || event.size() != n) throw ShapeError("survival batch columns differ in length");
  if (std::none_of(event.begin(), event.end(), [](int e) { return e == 1; }))
    throw InvalidArgument("survival batch contains no events");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return time[a] > time[b]; });

  auto log_add = [](double a, double b) {
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    const double m = std::max(a, b);
    return m + std::log1p(std::exp(-std::abs(a - b)));
  };
  constexpr double neg_inf = -std::numeric_limits<double>::infinity();

  // Risk-set log-sum-exp for every subject's own time.
  std::vector<double> lse_at(n, neg_inf);
  double lse = neg_inf;
  LossResult r;
  for (std::size_t s = 0; s < n;) {
    std::size_t e = s;
    while (e < n && time[order[e]] == time[order[s]]) {
      lse = log_add(lse, risk[order[e]]);
      ++e;
    }
    for (std::size_t k = s; k < e; ++k) {
      const std::size_t i = order[k];
      lse_at[i] = lse;
      if (event[i] == 1) r.value -= risk[i] - lse;
    }
    s = e;
  }

  // d/d eta_k = -event_k + exp(eta_k) * sum_{i event, t_i <= t_k} exp(-lse_i).
  // Ascending pass accumulates log sum of exp(-lse_i) over earlier events.
  r.grad = Matrix(n, 1);
  double acc = neg_inf;
  for (std::size_t s = n; s > 0;) {
    std::size_t e = s;
    const double t = time[order[s - 1]];
    while (e > 0 && time[order[e - 1]] == t) {
      const std::size_t i = order[e - 1];
      if (event[i] == 1) acc = log_add(acc, -lse_at[i]);
      --e;
    }
    for (std::size_t k = e; k < s; ++k) {
      const std::size_t i = order[k];
      const double share = acc == neg_inf ? 0.0 : std::exp(risk[i] + acc);
      r.grad(i, 0) = share - (event[i] == 1 ? 1.0 : 0.0);
    }
    s = e;
  }
  return r;
}

}  // namespace sparsetab
