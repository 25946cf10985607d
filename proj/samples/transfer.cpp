// Pretrain on one task, freeze the trunk and fit a small head on a related
// binary task with few labels.

#include <cstdio>
#include <numeric>

#include <sparsetab/sparsetab.hpp>

using namespace sparsetab;

int main() {
  SyntheticSpec spec;
  spec.n_samples = 2000;
  spec.seed = 11;
  const Dataset d = standardize(make_classification(spec).data).first;
  std::vector<std::size_t> first(1000), second(1000);
  std::iota(first.begin(), first.end(), 0);
  std::iota(second.begin(), second.end(), 1000);
  const Dataset source = d.select_rows(first);
  Dataset target = d.select_rows(second);
  for (int& y : *target.labels) y = y < 3 ? 1 : 0;

  const NetworkSpec net = make_network(d.n_features(), identity_mask(d.feature_names), head_for(source));
  const FrozenTrunk trunk = make_trunk(net, train(net, source, TrainConfig{}).params);

  const Split s = split(target, 0.8, 12);
  const FineTuned tuned = fine_tune(trunk, s.train, {});
  const LinearProbe probe = linear_probe(s.train.x, *s.train.labels);
  std::printf("fine-tuned accuracy %.3f, linear probe on raw features %.3f\n",
              evaluate(tuned.spec, tuned.params, s.test), probe.accuracy(s.test.x, *s.test.labels));
  std::printf("trunk unchanged: %s\n", tuned.trunk_hash_before == tuned.trunk_hash_after ? "yes" : "no");
}
