// Cox proportional hazards head on simulated censored data.

#include <cstdio>

#include <sparsetab/sparsetab.hpp>

using namespace sparsetab;

int main() {
  SurvivalSpec spec;
  spec.seed = 3;
  const SurvivalData sim = make_survival(spec);
  const Dataset d = standardize(sim.data).first;
  const Split s = split(d, 0.25, 4);

  const NetworkSpec net = make_network(d.n_features(), identity_mask(d.feature_names), head_for(d));
  const TrainResult r = train(net, s.train, TrainConfig{});

  std::vector<double> oracle;
  for (auto row : s.test_rows) oracle.push_back(sim.true_risk[row]);
  const auto& surv = *s.test.survival;
  std::printf("test c-index %.3f (true risk %.3f)\n", evaluate(net, r.params, s.test),
              concordance_index(oracle, surv.time, surv.event));
}
