#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sparsetab/maskgen.hpp"
#include "sparsetab/matrix.hpp"
#include "sparsetab/rng.hpp"

namespace sparsetab {

enum class LayerKind { attention, sparse, dense, dropout };
enum class ScoreKind { bahdanau, dot, content, scaled_dot };
enum class HeadKind { softmax_classifier, sigmoid_binary, linear_risk };
enum class Mode { train, infer };

inline const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::attention: return "attention";
    case LayerKind::sparse: return "sparse";
    case LayerKind::dense: return "dense";
    case LayerKind::dropout: return "dropout";
  }
  return "dense";
}

inline const char* to_string(ScoreKind k) {
  switch (k) {
    case ScoreKind::bahdanau: return "bahdanau";
    case ScoreKind::dot: return "dot";
    case ScoreKind::content: return "content";
    case ScoreKind::scaled_dot: return "scaled_dot";
  }
  return "scaled_dot";
}

inline const char* to_string(HeadKind k) {
  switch (k) {
    case HeadKind::softmax_classifier: return "softmax_classifier";
    case HeadKind::sigmoid_binary: return "sigmoid_binary";
    case HeadKind::linear_risk: return "linear_risk";
  }
  return "linear_risk";
}

inline LayerKind parse_layer_kind(const std::string& s) {
  if (s == "attention") return LayerKind::attention;
  if (s == "sparse") return LayerKind::sparse;
  if (s == "dense") return LayerKind::dense;
  if (s == "dropout") return LayerKind::dropout;
  throw InvalidArgument("unknown layer kind '" + s + "'");
}

inline ScoreKind parse_score_kind(const std::string& s) {
  if (s == "bahdanau") return ScoreKind::bahdanau;
  if (s == "dot") return ScoreKind::dot;
  if (s == "content") return ScoreKind::content;
  if (s == "scaled_dot") return ScoreKind::scaled_dot;
  throw InvalidArgument("unknown attention score kind '" + s + "'");
}

inline HeadKind parse_head_kind(const std::string& s) {
  if (s == "softmax_classifier") return HeadKind::softmax_classifier;
  if (s == "sigmoid_binary") return HeadKind::sigmoid_binary;
  if (s == "linear_risk") return HeadKind::linear_risk;
  throw InvalidArgument("unknown head kind '" + s + "'");
}

struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  std::size_t units = 0;  // sparse: must equal the mask's unit count
  Activation activation = Activation::linear;
  ScoreKind score = ScoreKind::scaled_dot;
  double dropout_rate = 0.0;
  std::size_t mask = 0;  // index into NetworkSpec::masks

  static LayerSpec attention(ScoreKind score) {
    LayerSpec l;
    l.kind = LayerKind::attention;
    l.score = score;
    return l;
  }
  static LayerSpec sparse(std::size_t mask_index, std::size_t units, Activation act) {
    LayerSpec l;
    l.kind = LayerKind::sparse;
    l.mask = mask_index;
    l.units = units;
    l.activation = act;
    return l;
  }
  static LayerSpec dense(std::size_t units, Activation act) {
    LayerSpec l;
    l.kind = LayerKind::dense;
    l.units = units;
    l.activation = act;
    return l;
  }
  static LayerSpec dropout(double rate) {
    LayerSpec l;
    l.kind = LayerKind::dropout;
    l.dropout_rate = rate;
    return l;
  }
};

struct HeadSpec {
  HeadKind kind = HeadKind::softmax_classifier;
  std::size_t classes = 2;

  std::size_t outputs() const noexcept {
    return kind == HeadKind::softmax_classifier ? classes : 1;
  }
};

struct NetworkSpec {
  std::size_t input_dim = 0;
  std::vector<LayerSpec> layers;
  HeadSpec head;
  std::vector<MaskMatrix> masks;

  // widths()[i] is the input width of layers[i]; the last entry feeds the head.
  std::vector<std::size_t> widths() const {
    std::vector<std::size_t> w{input_dim};
    for (const auto& l : layers) {
      switch (l.kind) {
        case LayerKind::attention:
        case LayerKind::dropout: w.push_back(w.back()); break;
        case LayerKind::sparse:
        case LayerKind::dense: w.push_back(l.units); break;
      }
    }
    return w;
  }

  std::optional<std::size_t> first_attention() const {
    for (std::size_t i = 0; i < layers.size(); ++i)
      if (layers[i].kind == LayerKind::attention) return i;
    return std::nullopt;
  }

  void validate() const {
    if (input_dim == 0) throw InvalidArgument("network input_dim must be positive");
    if (head.kind == HeadKind::softmax_classifier && head.classes < 2)
      throw InvalidArgument("softmax head needs at least 2 classes");
    std::size_t width = input_dim;
    bool seen_sparse = false;
    std::size_t pre_attention = 0, post_attention = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      const std::string where = "layer " + std::to_string(i) + " (" + to_string(l.kind) + ")";
      switch (l.kind) {
        case LayerKind::attention:
          (seen_sparse ? post_attention : pre_attention) += 1;
          break;
        case LayerKind::dropout:
          if (!(l.dropout_rate >= 0.0 && l.dropout_rate < 1.0))
            throw InvalidArgument(where + ": dropout rate must lie in [0, 1)");
          break;
        case LayerKind::sparse: {
          if (l.mask >= masks.size()) throw InvalidArgument(where + ": mask index out of range");
          const MaskMatrix& m = masks[l.mask];
          m.validate();
          if (m.n_features() != width)
            throw ShapeError(where + ": mask has " + std::to_string(m.n_features()) +
                             " rows, incoming width is " + std::to_string(width));
          if (m.n_units() != l.units)
            throw ShapeError(where + ": units " + std::to_string(l.units) +
                             " differ from mask columns " + std::to_string(m.n_units()));
          seen_sparse = true;
          width = l.units;
          break;
        }
        case LayerKind::dense:
          if (l.units == 0) throw InvalidArgument(where + ": dense layer needs units");
          width = l.units;
          break;
      }
    }
    if (pre_attention > 1) throw InvalidArgument("at most one attention layer before the sparse layer");
    if (post_attention > 1) throw InvalidArgument("at most one attention layer after the sparse layer");
  }
};

// Builds the reference architecture: attention -> sparse(mask, tanh)
// [-> attention] -> dense(64, relu) -> dropout(0.3) -> head.
struct ArchitectureOptions {
  ScoreKind attention = ScoreKind::scaled_dot;
  Activation sparse_activation = Activation::tanh;
  std::size_t dense_units = 64;
  Activation dense_activation = Activation::relu;
  double dropout = 0.3;
  bool post_sparse_attention = false;
  std::optional<MaskMatrix> fusion_mask;  // optional second sparse layer
};

inline NetworkSpec make_network(std::size_t input_dim, MaskMatrix mask, HeadSpec head,
                                const ArchitectureOptions& opt = {}) {
  NetworkSpec s;
  s.input_dim = input_dim;
  s.head = head;
  s.layers.push_back(LayerSpec::attention(opt.attention));
  const std::size_t units = mask.n_units();
  s.masks.push_back(std::move(mask));
  s.layers.push_back(LayerSpec::sparse(0, units, opt.sparse_activation));
  if (opt.fusion_mask) {
    s.masks.push_back(*opt.fusion_mask);
    s.layers.push_back(LayerSpec::sparse(1, opt.fusion_mask->n_units(), opt.sparse_activation));
  }
  if (opt.post_sparse_attention) s.layers.push_back(LayerSpec::attention(opt.attention));
  if (opt.dense_units > 0) {
    s.layers.push_back(LayerSpec::dense(opt.dense_units, opt.dense_activation));
    if (opt.dropout > 0.0) s.layers.push_back(LayerSpec::dropout(opt.dropout));
  }
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Parameters

struct LayerParams {
  Matrix weight;                   // sparse / dense / head
  std::vector<double> bias;        // sparse / dense / head
  std::vector<double> attention;   // attention

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

// One entry per spec layer, followed by the head.
struct ParameterSet {
  std::vector<LayerParams> layers;

  LayerParams& head() { return layers.back(); }
  const LayerParams& head() const { return layers.back(); }

  friend bool operator==(const ParameterSet&, const ParameterSet&) = default;
};

inline double glorot_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

// Glorot-uniform weights and attention vectors, zero biases; masked sparse
// entries are zeroed after the draw.
inline ParameterSet init_params(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  const auto widths = spec.widths();
  ParameterSet p;
  auto dense_block = [&](std::size_t in, std::size_t out) {
    LayerParams lp;
    lp.weight = Matrix(in, out);
    const double bound = glorot_bound(in, out);
    for (double& v : lp.weight.data()) v = rng.uniform(-bound, bound);
    lp.bias.assign(out, 0.0);
    return lp;
  };
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    const std::size_t in = widths[i];
    switch (l.kind) {
      case LayerKind::attention: {
        LayerParams lp;
        const double bound = glorot_bound(in, 1);
        lp.attention.resize(in);
        for (double& v : lp.attention) v = rng.uniform(-bound, bound);
        p.layers.push_back(std::move(lp));
        break;
      }
      case LayerKind::sparse: {
        LayerParams lp = dense_block(in, l.units);
        const Matrix& a = spec.masks[l.mask].a;
        for (std::size_t k = 0; k < lp.weight.size(); ++k)
          if (a.data()[k] == 0.0) lp.weight.data()[k] = 0.0;
        p.layers.push_back(std::move(lp));
        break;
      }
      case LayerKind::dense: p.layers.push_back(dense_block(in, l.units)); break;
      case LayerKind::dropout: p.layers.emplace_back(); break;
    }
  }
  p.layers.push_back(dense_block(widths.back(), spec.head.outputs()));
  return p;
}

// Sets every masked sparse weight to +0.0.
inline void enforce_masks(const NetworkSpec& spec, ParameterSet& p) {
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (spec.layers[i].kind != LayerKind::sparse) continue;
    const Matrix& a = spec.masks[spec.layers[i].mask].a;
    auto w = p.layers[i].weight.data();
    for (std::size_t k = 0; k < w.size(); ++k)
      if (a.data()[k] == 0.0) w[k] = 0.0;
  }
}

inline ParameterSet zeros_like(const ParameterSet& p) {
  ParameterSet z;
  for (const auto& l : p.layers) {
    LayerParams lz;
    lz.weight = Matrix(l.weight.rows(), l.weight.cols());
    lz.bias.assign(l.bias.size(), 0.0);
    lz.attention.assign(l.attention.size(), 0.0);
    z.layers.push_back(std::move(lz));
  }
  return z;
}

// ---------------------------------------------------------------------------
// Kernels

// Row-wise support of a mask: for every feature k, the units it connects to.
struct MaskSupport {
  std::vector<std::vector<std::size_t>> rows;

  explicit MaskSupport(const Matrix& a) : rows(a.rows()) {
    for (std::size_t k = 0; k < a.rows(); ++k)
      for (std::size_t j = 0; j < a.cols(); ++j)
        if (a(k, j) != 0.0) rows[k].push_back(j);
  }
};

// x * (A ⊙ W), visiting only connected entries. Accumulation order over k
// matches matmul(), so an all-ones mask reproduces the dense product bitwise.
inline Matrix masked_matmul(const Matrix& x, const Matrix& w, const MaskSupport& support) {
  if (x.cols() != w.rows() || support.rows.size() != w.rows())
    throw ShapeError("sparse layer: input " + shape_string(x) + " vs weights " + shape_string(w));
  Matrix out(x.rows(), w.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double* o = out.row(i).data();
    for (std::size_t k = 0; k < x.cols(); ++k) {
      const double xik = x(i, k);
      const double* wk = w.row(k).data();
      for (std::size_t j : support.rows[k]) o[j] += xik * wk[j];
    }
  }
  return out;
}

// (x^T g) ⊙ A; unconnected entries are exactly +0.0.
inline Matrix masked_weight_grad(const Matrix& x, const Matrix& g, const MaskSupport& support) {
  Matrix dw(x.cols(), g.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double* gi = g.row(i).data();
    for (std::size_t k = 0; k < x.cols(); ++k) {
      const double xik = x(i, k);
      double* d = dw.row(k).data();
      for (std::size_t j : support.rows[k]) d[j] += xik * gi[j];
    }
  }
  return dw;
}

// g * (A ⊙ W)^T
inline Matrix masked_input_grad(const Matrix& g, const Matrix& w, const MaskSupport& support) {
  Matrix dx(g.rows(), w.rows());
  for (std::size_t i = 0; i < g.rows(); ++i) {
    const double* gi = g.row(i).data();
    for (std::size_t k = 0; k < w.rows(); ++k) {
      const double* wk = w.row(k).data();
      double acc = 0.0;
      for (std::size_t j : support.rows[k]) acc += gi[j] * wk[j];
      dx(i, k) = acc;
    }
  }
  return dx;
}

inline void add_bias(Matrix& m, std::span<const double> bias) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += bias[j];
  }
}

inline std::vector<double> column_sums(const Matrix& m) {
  std::vector<double> s(m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) s[j] += r[j];
  }
  return s;
}

// Per-feature score phi(z) with z = x_ij * w_j.
inline double attention_score(double z, ScoreKind kind, std::size_t n) {
  switch (kind) {
    case ScoreKind::bahdanau: return std::tanh(z);
    case ScoreKind::dot: return z;
    case ScoreKind::content: return std::cos(z);
    case ScoreKind::scaled_dot: return z / std::sqrt(static_cast<double>(n));
  }
  return z;
}

inline double attention_score_derivative(double z, ScoreKind kind, std::size_t n) {
  switch (kind) {
    case ScoreKind::bahdanau: {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case ScoreKind::dot: return 1.0;
    case ScoreKind::content: return -std::sin(z);
    case ScoreKind::scaled_dot: return 1.0 / std::sqrt(static_cast<double>(n));
  }
  return 1.0;
}

struct AttentionOutput {
  Matrix alpha;  // softmax over the feature axis, one row per sample
  Matrix out;    // x ⊙ alpha
};

inline AttentionOutput attention_forward(const Matrix& x, std::span<const double> w,
                                         ScoreKind kind) {
  if (w.size() != x.cols())
    throw ShapeError("attention vector length " + std::to_string(w.size()) + " vs " +
                     std::to_string(x.cols()) + " features");
  const std::size_t n = x.cols();
  Matrix scores(x.rows(), n);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < n; ++j) scores(i, j) = attention_score(x(i, j) * w[j], kind, n);
  AttentionOutput o;
  o.alpha = softmax_rows(scores);
  o.out = hadamard(x, o.alpha);
  return o;
}

// Returns act(x * (A ⊙ W) + b). Entries of W outside the mask never
// contribute, whatever their value.
inline Matrix sparse_forward(const Matrix& x, const Matrix& w, const MaskMatrix& mask,
                             std::span<const double> b, Activation act) {
  require_same_shape(w, mask.a, "sparse_forward");
  if (b.size() != w.cols()) throw ShapeError("sparse_forward: bias length mismatch");
  Matrix pre = masked_matmul(x, w, MaskSupport(mask.a));
  add_bias(pre, b);
  return activation(pre, act);
}

// ---------------------------------------------------------------------------
// Forward / backward

struct LayerCache {
  Matrix input;
  Matrix pre;           // sparse / dense pre-activation
  Matrix alpha;         // attention weights
  Matrix dropout_mask;  // already scaled by 1 / (1 - rate)
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  Matrix head_input;
  Matrix logits;
};

struct ForwardResult {
  Matrix output;
  Matrix logits;
  std::optional<ForwardCache> cache;  // train mode only
};

// Precomputed mask supports for the sparse layers of a spec.
class SpecIndex {
 public:
  explicit SpecIndex(const NetworkSpec& spec) {
    for (const auto& m : spec.masks) supports_.emplace_back(m.a);
  }
  const MaskSupport& support(std::size_t mask) const { return supports_.at(mask); }

 private:
  std::vector<MaskSupport> supports_;
};

inline Matrix head_activation(const Matrix& logits, HeadKind kind) {
  switch (kind) {
    case HeadKind::softmax_classifier: return softmax_rows(logits);
    case HeadKind::sigmoid_binary: return activation(logits, Activation::sigmoid);
    case HeadKind::linear_risk: return logits;
  }
  return logits;
}

namespace detail {

inline Matrix dense_forward(const Matrix& x, const LayerParams& p) {
  Matrix pre = matmul(x, p.weight);
  add_bias(pre, p.bias);
  return pre;
}

}  // namespace detail

// Runs layers [0, stop) and returns their output; no head, infer mode.
inline Matrix forward_prefix(const NetworkSpec& spec, const ParameterSet& params, const Matrix& x,
                             std::size_t stop, const SpecIndex* index = nullptr) {
  if (x.cols() != spec.input_dim)
    throw ShapeError("input has " + std::to_string(x.cols()) + " features, network expects " +
                     std::to_string(spec.input_dim));
  if (stop > spec.layers.size()) throw InvalidArgument("cut point beyond the last layer");
  std::optional<SpecIndex> local;
  if (!index) index = &local.emplace(spec);
  Matrix h = x;
  for (std::size_t i = 0; i < stop; ++i) {
    const auto& l = spec.layers[i];
    const auto& p = params.layers[i];
    switch (l.kind) {
      case LayerKind::attention: h = attention_forward(h, p.attention, l.score).out; break;
      case LayerKind::sparse: {
        Matrix pre = masked_matmul(h, p.weight, index->support(l.mask));
        add_bias(pre, p.bias);
        h = activation(pre, l.activation);
        break;
      }
      case LayerKind::dense: h = activation(detail::dense_forward(h, p), l.activation); break;
      case LayerKind::dropout: break;
    }
  }
  return h;
}

// Full forward pass. Train mode applies inverted dropout (drawing from `rng`)
// and returns the cache needed by backward().
inline ForwardResult forward(const NetworkSpec& spec, const ParameterSet& params, const Matrix& x,
                             Mode mode, Rng* rng = nullptr, const SpecIndex* index = nullptr) {
  if (x.cols() != spec.input_dim)
    throw ShapeError("input has " + std::to_string(x.cols()) + " features, network expects " +
                     std::to_string(spec.input_dim));
  if (params.layers.size() != spec.layers.size() + 1)
    throw ShapeError("parameter set does not match network spec");
  std::optional<SpecIndex> local;
  if (!index) index = &local.emplace(spec);
  const bool train = mode == Mode::train;
  ForwardResult res;
  if (train) res.cache.emplace();
  Matrix h = x;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    const auto& p = params.layers[i];
    LayerCache c;
    if (train) c.input = h;
    switch (l.kind) {
      case LayerKind::attention: {
        auto att = attention_forward(h, p.attention, l.score);
        h = std::move(att.out);
        if (train) c.alpha = std::move(att.alpha);
        break;
      }
      case LayerKind::sparse: {
        Matrix pre = masked_matmul(h, p.weight, index->support(l.mask));
        add_bias(pre, p.bias);
        h = activation(pre, l.activation);
        if (train) c.pre = std::move(pre);
        break;
      }
      case LayerKind::dense: {
        Matrix pre = detail::dense_forward(h, p);
        h = activation(pre, l.activation);
        if (train) c.pre = std::move(pre);
        break;
      }
      case LayerKind::dropout: {
        if (!train || l.dropout_rate == 0.0) break;
        if (!rng) throw InvalidArgument("train-mode dropout needs an Rng");
        const double keep = 1.0 - l.dropout_rate;
        c.dropout_mask = Matrix(h.rows(), h.cols());
        auto m = c.dropout_mask.data();
        auto hv = h.data();
        for (std::size_t k = 0; k < m.size(); ++k) {
          m[k] = rng->uniform() < keep ? 1.0 / keep : 0.0;
          hv[k] *= m[k];
        }
        break;
      }
    }
    if (train) res.cache->layers.push_back(std::move(c));
  }
  res.logits = detail::dense_forward(h, params.head());
  if (train) res.cache->head_input = std::move(h);
  res.output = head_activation(res.logits, spec.head.kind);
  if (!res.output.all_finite()) throw NumericError("forward pass produced non-finite values");
  if (train) res.cache->logits = res.logits;
  return res;
}

// Exact gradients given dLoss/dlogits (the head's pre-activation). Masked
// sparse entries receive exactly zero gradient.
inline ParameterSet backward(const NetworkSpec& spec, const ParameterSet& params,
                             const ForwardCache* cache, const Matrix& grad_logits,
                             const SpecIndex* index = nullptr) {
  if (!cache) throw InvalidArgument("backward needs the cache of a train-mode forward pass");
  require_same_shape(grad_logits, cache->logits, "backward");
  std::optional<SpecIndex> local;
  if (!index) index = &local.emplace(spec);
  ParameterSet g = zeros_like(params);

  g.head().weight = matmul_tn(cache->head_input, grad_logits);
  g.head().bias = column_sums(grad_logits);
  Matrix dh = matmul_nt(grad_logits, params.head().weight);

  for (std::size_t ii = spec.layers.size(); ii-- > 0;) {
    const auto& l = spec.layers[ii];
    const auto& p = params.layers[ii];
    const auto& c = cache->layers[ii];
    auto& gl = g.layers[ii];
    switch (l.kind) {
      case LayerKind::dropout:
        if (!c.dropout_mask.empty()) dh = hadamard(dh, c.dropout_mask);
        break;
      case LayerKind::dense: {
        Matrix dpre = hadamard(dh, activation(c.pre, l.activation, ActivationMode::derivative));
        gl.weight = matmul_tn(c.input, dpre);
        gl.bias = column_sums(dpre);
        dh = matmul_nt(dpre, p.weight);
        break;
      }
      case LayerKind::sparse: {
        const auto& support = index->support(l.mask);
        Matrix dpre = hadamard(dh, activation(c.pre, l.activation, ActivationMode::derivative));
        gl.weight = masked_weight_grad(c.input, dpre, support);
        gl.bias = column_sums(dpre);
        dh = masked_input_grad(dpre, p.weight, support);
        break;
      }
      case LayerKind::attention: {
        const Matrix& x = c.input;
        const Matrix& alpha = c.alpha;
        const std::size_t n = x.cols();
        Matrix dx(x.rows(), n);
        gl.attention.assign(n, 0.0);
        for (std::size_t i = 0; i < x.rows(); ++i) {
          // out = x ⊙ alpha: d alpha = dout ⊙ x, direct dx = dout ⊙ alpha.
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j) dot += alpha(i, j) * dh(i, j) * x(i, j);
          for (std::size_t j = 0; j < n; ++j) {
            const double dalpha = dh(i, j) * x(i, j);
            const double dscore = alpha(i, j) * (dalpha - dot);
            const double z = x(i, j) * p.attention[j];
            const double dz = dscore * attention_score_derivative(z, l.score, n);
            gl.attention[j] += dz * x(i, j);
            dx(i, j) = dh(i, j) * alpha(i, j) + dz * p.attention[j];
          }
        }
        dh = std::move(dx);
        break;
      }
    }
  }
  return g;
}

}  // namespace sparsetab
