#include <gtest/gtest.h>

#include <cmath>

#include "support/oracles.hpp"
#include "support/tempdir.hpp"

using namespace sparsetab;

namespace {

Dataset small_classification(std::uint64_t seed, std::size_t n = 200) {
  SyntheticSpec s;
  s.n_samples = n;
  s.n_features = 12;
  s.n_informative = 4;
  s.n_classes = 3;
  s.class_sep = 1.5;
  s.seed = seed;
  return standardize(make_classification(s).data).first;
}

NetworkSpec identity_net(const Dataset& d, ArchitectureOptions a = {}) {
  return make_network(d.n_features(), identity_mask(d.feature_names), head_for(d), a);
}

ParameterSet single_attention_params(std::vector<double> w) {
  ParameterSet p;
  LayerParams l;
  l.attention = std::move(w);
  p.layers.push_back(l);
  return p;
}

}  // namespace

TEST(Adam, FirstStepMovesByLearningRate) {
  // With bias correction the first update is lr * g / (|g| + eps').
  NetworkSpec spec;
  ParameterSet p = single_attention_params({0.5, -0.5, 0.0});
  const ParameterSet g = single_attention_params({2.0, -0.1, 1e-3});
  AdamState st = AdamState::zeros_for(p);
  AdamConfig cfg;
  cfg.learning_rate = 0.01;
  adam_step(spec, p, g, st, cfg);
  EXPECT_NEAR(p.layers[0].attention[0], 0.5 - 0.01, 1e-9);
  EXPECT_NEAR(p.layers[0].attention[1], -0.5 + 0.01, 1e-9);
  EXPECT_NEAR(p.layers[0].attention[2], -0.01, 1e-7);
  EXPECT_EQ(st.step, 1u);
}

TEST(Adam, L1KeepsZeroWeightsAtZeroWhenGradientIsSmall) {
  NetworkSpec spec;
  ParameterSet p = single_attention_params({0.0, 0.0});
  const ParameterSet g = single_attention_params({0.05, 0.5});
  AdamState st = AdamState::zeros_for(p);
  AdamConfig cfg;
  cfg.l1_attention = 0.1;
  adam_step(spec, p, g, st, cfg);
  EXPECT_EQ(p.layers[0].attention[0], 0.0);
  EXPECT_LT(p.layers[0].attention[1], 0.0);
}

TEST(Adam, L1ShrinksSmallWeightsToZero) {
  NetworkSpec spec;
  ParameterSet p = single_attention_params({1e-4, -1e-4});
  const ParameterSet g = single_attention_params({0.0, 0.0});
  AdamState st = AdamState::zeros_for(p);
  AdamConfig cfg;
  cfg.l1_attention = 1.0;
  cfg.learning_rate = 0.01;
  adam_step(spec, p, g, st, cfg);
  EXPECT_EQ(p.layers[0].attention[0], 0.0);
  EXPECT_EQ(p.layers[0].attention[1], 0.0);
}

TEST(Adam, FrozenLayersAreUntouched) {
  const Dataset d = small_classification(1);
  const NetworkSpec s = identity_net(d);
  ParameterSet p = init_params(s, 1);
  const ParameterSet before = p;
  ParameterSet g = zeros_like(p);
  for (auto& l : g.layers) {
    for (double& v : l.weight.data()) v = 1.0;
    for (double& v : l.bias) v = 1.0;
    for (double& v : l.attention) v = 1.0;
  }
  AdamState st = AdamState::zeros_for(p);
  adam_step(s, p, g, st, {}, {true, false, true, false, false});
  EXPECT_EQ(p.layers[0], before.layers[0]);
  EXPECT_EQ(p.layers[2], before.layers[2]);
  EXPECT_NE(p.layers[1], before.layers[1]);
  EXPECT_NE(p.head(), before.head());
}

TEST(Train, SameSeedSameModelBitwise) {
  const Dataset d = small_classification(2);
  const NetworkSpec s = identity_net(d);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 4;
  const auto a = train(s, d, cfg), b = train(s, d, cfg);
  EXPECT_EQ(a.params, b.params);
  cfg.seed = 5;
  EXPECT_NE(a.params, train(s, d, cfg).params);
}

TEST(Train, LossDecreasesAndModelLearns) {
  const Dataset d = small_classification(3, 400);
  const Split sp = split(d, 0.25, 1);
  const NetworkSpec s = identity_net(d);
  TrainConfig cfg;
  cfg.epochs = 60;
  const auto r = train(s, sp.train, cfg, &sp.test);
  EXPECT_LT(r.history.epochs.back().loss, 0.7 * r.history.epochs.front().loss);
  EXPECT_GT(evaluate(s, r.params, sp.test), 0.7);
  EXPECT_TRUE(r.history.epochs.back().val_metric.has_value());
}

TEST(Train, MaskedWeightsStayZeroThroughTraining) {
  const Dataset d = small_classification(4);
  RandomWalkMaskOptions w;
  w.threshold = 0.05;
  const MaskMatrix m = random_walk_mask(d, w);
  const NetworkSpec s = make_network(d.n_features(), m, head_for(d));
  TrainConfig cfg;
  cfg.epochs = 10;
  const auto r = train(s, d, cfg);
  const auto wv = r.params.layers[1].weight.data();
  for (std::size_t k = 0; k < wv.size(); ++k)
    if (m.a.data()[k] == 0.0) {
      EXPECT_EQ(wv[k], 0.0);
      EXPECT_FALSE(std::signbit(wv[k]));
    }
}

TEST(Train, SurvivalModelRanksRisk) {
  SurvivalSpec ss;
  ss.seed = 2;
  const SurvivalData sd = make_survival(ss);
  const Dataset d = standardize(sd.data).first;
  const NetworkSpec s = identity_net(d);
  EXPECT_EQ(s.head.kind, HeadKind::linear_risk);
  TrainConfig cfg;
  cfg.epochs = 100;
  const auto r = train(s, d, cfg);
  EXPECT_GT(evaluate(s, r.params, d), 0.7);
}

TEST(Train, ChecksTaskCompatibility) {
  const Dataset d = small_classification(5);
  const NetworkSpec binary = make_network(d.n_features(), identity_mask(d.feature_names),
                                          {HeadKind::sigmoid_binary, 1});
  EXPECT_THROW(train(binary, d, {}), InvalidArgument);
  const NetworkSpec risk = make_network(d.n_features(), identity_mask(d.feature_names),
                                        {HeadKind::linear_risk, 1});
  EXPECT_THROW(train(risk, d, {}), InvalidArgument);
  TrainConfig bad;
  bad.epochs = 0;
  EXPECT_THROW(train(identity_net(d), d, bad), InvalidArgument);
}

TEST(Train, StrongerL1NeverSelectsMoreFeatures) {
  // Same seed across lambdas; counts are non-increasing in lambda.
  const Dataset d = small_classification(6);
  ArchitectureOptions a;
  a.attention = ScoreKind::dot;
  a.dense_units = 0;
  const NetworkSpec s = identity_net(d, a);
  std::size_t last = d.n_features() + 1;
  for (double lambda : {0.0, 1e-3, 1e-2, 1e-1}) {
    TrainConfig cfg;
    cfg.epochs = 40;
    cfg.adam.l1_attention = lambda;
    const auto r = train(s, d, cfg);
    const std::size_t count = select_features(s, r.params).size();
    EXPECT_LE(count, last) << "lambda " << lambda;
    last = count;
  }
  EXPECT_LT(last, d.n_features());
}

TEST(Train, HistoryCsvHasOneRowPerEpoch) {
  TempDir dir;
  const Dataset d = small_classification(7, 60);
  TrainConfig cfg;
  cfg.epochs = 3;
  const auto r = train(identity_net(d), d, cfg);
  write_history_csv(r.history, dir.file("h.csv"));
  EXPECT_EQ(csv::read_table(dir.file("h.csv")).rows.size(), 3u);
}
