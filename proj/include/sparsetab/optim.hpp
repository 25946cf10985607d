#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "sparsetab/network.hpp"

namespace sparsetab {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double l1_attention = 0.0;   // L1 strength on attention vectors
  bool l1_all_layers = false;  // also apply l1_attention to every weight matrix
};

struct AdamState {
  ParameterSet m;
  ParameterSet v;
  std::uint64_t step = 0;

  static AdamState zeros_for(const ParameterSet& p) { return {zeros_like(p), zeros_like(p), 0}; }
};

namespace detail {

inline double sign(double x) { return (x > 0.0) - (x < 0.0); }

struct AdamScalars {
  double lr, b1, b2, eps, c1, c2;

  double update(double g, double& m, double& v) const {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g * g;
    return lr * (m / c1) / (std::sqrt(v / c2) + eps);
  }

  // Per-coordinate step size after update() has refreshed v.
  double step_size(double v) const { return lr / (std::sqrt(v / c2) + eps); }
};

}  // namespace detail

// One bias-corrected Adam step, in place. Layers with frozen[i] == true (one
// flag per spec layer, then the head) are left untouched. Masked sparse
// entries are re-zeroed afterwards.
//
// L1 on attention vectors is applied as a proximal step: Adam moves on the
// smooth gradient, then each weight is soft-thresholded by lambda times its
// own Adam step size. Weights land on exactly zero only where the penalty
// outweighs the loss gradient.
inline void adam_step(const NetworkSpec& spec, ParameterSet& params, const ParameterSet& grads,
                      AdamState& state, const AdamConfig& cfg,
                      const std::vector<bool>& frozen = {}) {
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const detail::AdamScalars s{cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon,
                              1.0 - std::pow(cfg.beta1, t), 1.0 - std::pow(cfg.beta2, t)};
  const double lambda = cfg.l1_attention;

  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    if (i < frozen.size() && frozen[i]) continue;
    auto& p = params.layers[i];
    const auto& g = grads.layers[i];
    auto& m = state.m.layers[i];
    auto& v = state.v.layers[i];

    auto w = p.weight.data();
    auto gw = g.weight.data();
    auto mw = m.weight.data();
    auto vw = v.weight.data();
    for (std::size_t k = 0; k < w.size(); ++k) {
      double gk = gw[k];
      if (cfg.l1_all_layers && lambda > 0.0) gk += lambda * detail::sign(w[k]);
      w[k] -= s.update(gk, mw[k], vw[k]);
    }
    for (std::size_t k = 0; k < p.bias.size(); ++k)
      p.bias[k] -= s.update(g.bias[k], m.bias[k], v.bias[k]);

    for (std::size_t k = 0; k < p.attention.size(); ++k) {
      double& a = p.attention[k];
      const double gk = g.attention[k];
      const double z = a - s.update(gk, m.attention[k], v.attention[k]);
      if (lambda <= 0.0) {
        a = z;
        continue;
      }
      const double tau = lambda * s.step_size(v.attention[k]);
      a = std::abs(z) <= tau ? 0.0 : z - tau * detail::sign(z);
    }
  }
  enforce_masks(spec, params);
}

}  // namespace sparsetab
