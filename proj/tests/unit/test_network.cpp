#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "support/oracles.hpp"
#include "support/tempdir.hpp"

using namespace sparsetab;

namespace {

MaskMatrix small_mask() {
  MaskMatrix m;
  m.a = Matrix{{1, 0, 1}, {1, 1, 0}, {0, 1, 0}, {0, 0, 1}};
  m.feature_names = default_feature_names(4);
  m.unit_names = {"a", "b", "c"};
  return m;
}

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(r, c);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

Dataset labelled(const Matrix& x, std::size_t classes) {
  Dataset d;
  d.x = x;
  d.feature_names = default_feature_names(x.cols());
  std::vector<int> y(x.rows());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % classes);
  d.labels = y;
  return d;
}

}  // namespace

TEST(Attention, RowsAreDistributions) {
  const Matrix x = random_matrix(6, 9, 1);
  const std::vector<double> w = random_matrix(1, 9, 2).values();
  for (auto kind : {ScoreKind::bahdanau, ScoreKind::dot, ScoreKind::content, ScoreKind::scaled_dot}) {
    const auto a = attention_forward(x, w, kind);
    for (std::size_t i = 0; i < 6; ++i) {
      double s = 0;
      for (double v : a.alpha.row(i)) {
        EXPECT_GT(v, 0.0);
        s += v;
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
    EXPECT_EQ(a.out, hadamard(x, a.alpha));
  }
}

TEST(Attention, ZeroVectorGivesUniformWeights) {
  const Matrix x = random_matrix(3, 5, 3);
  const std::vector<double> w(5, 0.0);
  for (auto kind : {ScoreKind::bahdanau, ScoreKind::dot, ScoreKind::content, ScoreKind::scaled_dot}) {
    const auto a = attention_forward(x, w, kind);
    for (double v : a.alpha.data()) EXPECT_NEAR(v, 0.2, 1e-15);
  }
}

TEST(Attention, ScoreFunctions) {
  EXPECT_DOUBLE_EQ(attention_score(0.5, ScoreKind::bahdanau, 4), std::tanh(0.5));
  EXPECT_DOUBLE_EQ(attention_score(0.5, ScoreKind::dot, 4), 0.5);
  EXPECT_DOUBLE_EQ(attention_score(0.5, ScoreKind::content, 4), std::cos(0.5));
  EXPECT_DOUBLE_EQ(attention_score(0.5, ScoreKind::scaled_dot, 4), 0.25);
  EXPECT_THROW(attention_forward(Matrix(2, 3), std::vector<double>(2), ScoreKind::dot), ShapeError);
}

TEST(Sparse, ForwardMatchesDenseProductOfMaskedWeights) {
  const MaskMatrix m = small_mask();
  const Matrix x = random_matrix(5, 4, 4);
  Matrix w = random_matrix(4, 3, 5);  // entries outside the mask are nonzero on purpose
  const std::vector<double> b{0.1, -0.2, 0.3};
  const Matrix out = sparse_forward(x, w, m, b, Activation::tanh);
  const Matrix ref = oracle::matmul(x, hadamard(m.a, w));
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(out(i, j), std::tanh(ref(i, j) + b[j]), 1e-14);
}

TEST(Sparse, AllOnesMaskReproducesDenseBitwise) {
  const Matrix x = random_matrix(7, 6, 6), w = random_matrix(6, 4, 7);
  const MaskSupport full(Matrix(6, 4, 1.0));
  EXPECT_EQ(masked_matmul(x, w, full), matmul(x, w));
}

TEST(Network, ReferenceArchitectureLayout) {
  const NetworkSpec s = make_network(4, small_mask(), {HeadKind::softmax_classifier, 3});
  ASSERT_EQ(s.layers.size(), 4u);
  EXPECT_EQ(s.layers[0].kind, LayerKind::attention);
  EXPECT_EQ(s.layers[1].kind, LayerKind::sparse);
  EXPECT_EQ(s.layers[2].units, 64u);
  EXPECT_EQ(s.layers[3].dropout_rate, 0.3);
  EXPECT_EQ(s.widths(), (std::vector<std::size_t>{4, 4, 3, 64, 64}));
}

TEST(Network, ValidateRejectsInconsistentSpecs) {
  NetworkSpec s = make_network(4, small_mask(), {HeadKind::sigmoid_binary, 1});
  s.layers[1].units = 5;
  EXPECT_THROW(s.validate(), ShapeError);
  s = make_network(4, small_mask(), {HeadKind::sigmoid_binary, 1});
  s.input_dim = 5;
  EXPECT_THROW(s.validate(), ShapeError);
  s = make_network(4, small_mask(), {HeadKind::sigmoid_binary, 1});
  s.layers.insert(s.layers.begin(), LayerSpec::attention(ScoreKind::dot));
  EXPECT_THROW(s.validate(), InvalidArgument);
  MaskMatrix empty_unit = small_mask();
  empty_unit.a(2, 1) = 0;
  empty_unit.a(1, 1) = 0;
  EXPECT_THROW(make_network(4, empty_unit, {HeadKind::sigmoid_binary, 1}), InvalidArgument);
}

TEST(Network, InitIsGlorotBoundedAndMasked) {
  const NetworkSpec s = make_network(4, small_mask(), {HeadKind::softmax_classifier, 3});
  const ParameterSet p = init_params(s, 9);
  EXPECT_EQ(p, init_params(s, 9));
  EXPECT_NE(p, init_params(s, 10));
  for (std::size_t k = 0; k < 12; ++k) {
    const double v = p.layers[1].weight.data()[k];
    if (small_mask().a.data()[k] == 0.0) {
      EXPECT_EQ(v, 0.0);
    }
    EXPECT_LE(std::abs(v), glorot_bound(4, 3));
  }
  for (double v : p.layers[0].attention) EXPECT_LE(std::abs(v), glorot_bound(4, 1));
  for (double v : p.layers[2].bias) EXPECT_EQ(v, 0.0);
}

TEST(Network, InferIsDeterministicAndDropoutOnlyInTraining) {
  const NetworkSpec s = make_network(4, small_mask(), {HeadKind::softmax_classifier, 3});
  const ParameterSet p = init_params(s, 1);
  const Matrix x = random_matrix(10, 4, 2);
  const Matrix a = forward(s, p, x, Mode::infer).output;
  EXPECT_EQ(a, forward(s, p, x, Mode::infer).output);
  EXPECT_FALSE(forward(s, p, x, Mode::infer).cache.has_value());
  Rng rng(3);
  const auto t = forward(s, p, x, Mode::train, &rng);
  const Matrix& mask = t.cache->layers[3].dropout_mask;
  for (double v : mask.data()) EXPECT_TRUE(v == 0.0 || std::abs(v - 1.0 / 0.7) < 1e-15);
  EXPECT_THROW(forward(s, p, x, Mode::train), InvalidArgument);
}

TEST(Network, ForwardPrefixMatchesLayerwiseComposition) {
  const NetworkSpec s = make_network(4, small_mask(), {HeadKind::sigmoid_binary, 1});
  const ParameterSet p = init_params(s, 4);
  const Matrix x = random_matrix(3, 4, 5);
  const Matrix att = attention_forward(x, p.layers[0].attention, s.layers[0].score).out;
  EXPECT_EQ(forward_prefix(s, p, x, 1), att);
  const Matrix sp = sparse_forward(att, p.layers[1].weight, small_mask(), p.layers[1].bias, Activation::tanh);
  EXPECT_EQ(forward_prefix(s, p, x, 2), sp);
  EXPECT_THROW(forward_prefix(s, p, x, 9), InvalidArgument);
  EXPECT_THROW(forward_prefix(s, p, random_matrix(3, 5, 1), 1), ShapeError);
}

TEST(Network, GradientsMatchFiniteDifferences) {
  for (auto kind : {ScoreKind::bahdanau, ScoreKind::dot, ScoreKind::content, ScoreKind::scaled_dot}) {
    ArchitectureOptions a;
    a.attention = kind;
    a.dense_units = 5;
    a.dense_activation = Activation::tanh;
    a.post_sparse_attention = true;
    a.dropout = 0.0;
    const NetworkSpec s = make_network(4, small_mask(), {HeadKind::softmax_classifier, 3}, a);
    const ParameterSet p = init_params(s, 6);
    const Dataset d = labelled(random_matrix(6, 4, 7), 3);
    const auto fr = forward(s, p, d.x, Mode::train);
    std::vector<std::size_t> rows(6);
    std::iota(rows.begin(), rows.end(), 0);
    const auto g = backward(s, p, &*fr.cache, head_loss(s, fr.output, d, rows).grad);
    for (const auto& c : oracle::finite_difference_check(s, p, g, d))
      EXPECT_LT(c.rel_error, 1e-6) << to_string(kind) << " layer " << c.layer << " " << c.tensor;
  }
}

TEST(Network, MaskedEntriesGetZeroGradient) {
  const NetworkSpec s = make_network(4, small_mask(), {HeadKind::softmax_classifier, 3});
  const ParameterSet p = init_params(s, 8);
  const Dataset d = labelled(random_matrix(8, 4, 9), 3);
  Rng rng(1);
  const auto fr = forward(s, p, d.x, Mode::train, &rng);
  std::vector<std::size_t> rows(8);
  std::iota(rows.begin(), rows.end(), 0);
  const auto g = backward(s, p, &*fr.cache, head_loss(s, fr.output, d, rows).grad);
  for (std::size_t k = 0; k < 12; ++k) {
    if (small_mask().a.data()[k] == 0.0) {
      EXPECT_EQ(g.layers[1].weight.data()[k], 0.0);
    }
  }
}

TEST(ModelIo, RoundTripIsExact) {
  TempDir dir;
  const NetworkSpec s = make_network(4, small_mask(), {HeadKind::linear_risk, 1});
  const ParameterSet p = init_params(s, 2);
  save_model(s, p, dir.file("m.bin"), {{"note", "x"}});
  const ModelFile f = load_model(dir.file("m.bin"));
  EXPECT_EQ(f.params, p);
  EXPECT_EQ(f.spec.masks[0].a, s.masks[0].a);
  EXPECT_EQ(f.spec.masks[0].unit_names, s.masks[0].unit_names);
  EXPECT_EQ(f.spec.head.kind, HeadKind::linear_risk);
  EXPECT_EQ(f.metadata.at("note"), "x");
  EXPECT_EQ(serialize_model(f.spec, f.params, f.metadata), read_file_bytes(dir.file("m.bin")));
}

TEST(ModelIo, CorruptionIsDetected) {
  const NetworkSpec s = make_network(4, small_mask(), {HeadKind::sigmoid_binary, 1});
  auto bytes = serialize_model(s, init_params(s, 1));
  auto flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x10;
  EXPECT_THROW(deserialize_model(flipped), ChecksumError);
  EXPECT_THROW(deserialize_model(std::span(bytes).first(bytes.size() - 3)), ChecksumError);
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(deserialize_model(magic), FormatError);
  EXPECT_THROW(deserialize_model(serialize_model(s, init_params(s, 1), json::object(), kModelFormatVersion + 1)),
               VersionError);
}

TEST(ModelIo, ParameterHashTracksPrefixOnly) {
  const NetworkSpec s = make_network(4, small_mask(), {HeadKind::sigmoid_binary, 1});
  ParameterSet p = init_params(s, 1);
  const std::string before = parameter_hash(p, 2);
  EXPECT_EQ(before.size(), 64u);
  p.head().bias[0] += 1.0;
  EXPECT_EQ(parameter_hash(p, 2), before);
  p.layers[1].bias[0] += 1e-300;
  EXPECT_NE(parameter_hash(p, 2), before);
}
