// Generates a small synthetic benchmark, trains the full model and the
// regression-only baseline, and compares their zero-shot accuracy.

#include <cstdio>
#include <string>
#include <vector>

#include "ssvoc/ssvoc.hpp"

using namespace ssvoc;

int main() {
  SyntheticSpec spec;
  spec.seed = 7;
  const auto bench = generate_synthetic(spec);

  LabeledDataset train = bench.train;
  const auto stats = fit_standardization(train.features);
  train.features = stats.apply(train.features);
  const RowMatrix test = stats.apply(bench.target_test.features);

  std::vector<std::string> targets;
  for (auto e : bench.labels.target) targets.push_back(bench.space.token(e));

  auto zero_shot_accuracy = [&](const TrainedModel& model) {
    const PrototypeIndex index(model, bench.space, bench.labels);
    std::vector<std::string> predicted;
    for (Index r = 0; r < test.rows(); ++r)
      predicted.push_back(predict(index, test.row(r).transpose(), PredictionMode::nn(LabelFilter::zero_shot)));
    return evaluate(predicted, bench.target_test.labels, SynonymTable{}, targets).mean_class_accuracy;
  };

  Hyperparams baseline = Hyperparams{};
  baseline.alpha = 1.0;
  const auto svr = fit(train, bench.space, bench.labels, baseline, SolverConfig{}, false);
  const auto full = fit(train, bench.space, bench.labels, Hyperparams{}, SolverConfig{}, true);

  std::printf("zero-shot mean class accuracy\n");
  std::printf("  regression only : %.3f\n", zero_shot_accuracy(svr));
  std::printf("  full model      : %.3f\n", zero_shot_accuracy(full));
  for (const auto& p : full.passes)
    std::printf("  %-4s %3d iterations  %-10s objective %.6g\n", p.phase.c_str(), p.iterations,
                std::string(to_string(p.status)).c_str(), p.objective);
  return 0;
}
