// Train a masked attention network on synthetic data and print the
// features it attends to most.

#include <cstdio>

#include <sparsetab/sparsetab.hpp>

using namespace sparsetab;

int main() {
  SyntheticSpec spec;
  spec.n_samples = 600;
  spec.n_features = 30;
  spec.n_informative = 5;
  spec.n_classes = 3;
  spec.class_sep = 1.5;
  spec.seed = 7;
  const SyntheticData synth = make_classification(spec);
  const Dataset d = standardize(synth.data).first;
  const Split s = split(d, 0.2, 1);

  RandomWalkMaskOptions walk;
  walk.threshold = 0.1;
  const MaskMatrix mask = random_walk_mask(s.train, walk);
  std::printf("mask: %zu features x %zu units, %zu nonzeros\n", mask.a.rows(), mask.n_units(), mask.nnz());

  const NetworkSpec net = make_network(d.n_features(), mask, head_for(d));
  TrainConfig cfg;
  cfg.epochs = 60;
  const TrainResult r = train(net, s.train, cfg, &s.test);
  std::printf("test accuracy: %.3f\n", evaluate(net, r.params, s.test));

  const ImportanceReport imp = feature_importance(net, r.params, s.test);
  std::printf("top features:");
  const auto order = imp.descending();
  for (std::size_t k = 0; k < 5; ++k) std::printf(" %s", imp.feature_names[order[k]].c_str());
  std::printf("\ninformative:");
  for (auto j : synth.informative) std::printf(" %s", d.feature_names[j].c_str());
  std::printf("\n");
}
