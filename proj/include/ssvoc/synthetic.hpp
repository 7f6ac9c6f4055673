#ifndef SSVOC_SYNTHETIC_HPP
#define SSVOC_SYNTHETIC_HPP

// Desk-scale benchmark with a known linear answer. Class prototypes are drawn
// from a unit Gaussian in R^d; a map G in R^{d x p} with orthonormal rows
// produces features x = G^T u_z + N(0, sigma^2 I_p), so W = G^T recovers u_z
// from noiseless features exactly. Target classes get prototypes and held-out
// test samples but no training samples.

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ssvoc/dataset_io.hpp"
#include "ssvoc/error.hpp"
#include "ssvoc/linalg.hpp"
#include "ssvoc/objective.hpp"
#include "ssvoc/vocabulary.hpp"

namespace ssvoc {

struct SyntheticSpec {
  std::size_t p = 64;
  std::size_t d = 16;
  std::size_t num_source = 8;
  std::size_t num_target = 4;
  std::size_t samples_per_class = 5;
  std::size_t test_per_class = 20;
  std::size_t num_distractors = 0;  // extra vocabulary entries with no images
  double noise_sigma = 0.3;
  std::uint64_t seed = 0;

  void validate() const {
    if (p == 0 || d == 0 || num_source == 0 || num_target == 0 || samples_per_class == 0)
      throw UsageError("synthetic: p, d, class counts and samples_per_class must be positive");
    if (d > p) throw UsageError("synthetic: need d <= p for a map with orthonormal rows");
    if (!(noise_sigma >= 0.0)) throw UsageError("synthetic: noise_sigma must be >= 0");
  }
};

struct SyntheticBenchmark {
  SemanticSpace space;
  LabelSets labels;
  LabeledDataset train;
  LabeledFeatures source_test;
  LabeledFeatures target_test;
  Matrix ground_truth_W;  // p x d, equals G^T
};

inline SyntheticBenchmark generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto p = static_cast<Index>(spec.p), d = static_cast<Index>(spec.d);

  const std::size_t classes = spec.num_source + spec.num_target;
  const std::size_t vocab = classes + spec.num_distractors;
  std::vector<std::string> tokens;
  for (std::size_t s = 0; s < spec.num_source; ++s) tokens.push_back("src_" + std::to_string(s));
  for (std::size_t t = 0; t < spec.num_target; ++t) tokens.push_back("tgt_" + std::to_string(t));
  for (std::size_t v = 0; v < spec.num_distractors; ++v) tokens.push_back("voc_" + std::to_string(v));
  RowMatrix vectors(static_cast<Index>(vocab), d);
  for (Index r = 0; r < vectors.rows(); ++r)
    for (Index c = 0; c < d; ++c) vectors(r, c) = normal(rng);

  Matrix gauss(p, d);
  for (Index r = 0; r < p; ++r)
    for (Index c = 0; c < d; ++c) gauss(r, c) = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(gauss);
  const Matrix Gt = qr.householderQ() * Matrix::Identity(p, d);  // p x d, orthonormal columns

  SyntheticBenchmark out;
  out.ground_truth_W = Gt;
  out.space = SemanticSpace(tokens, vectors);
  for (std::size_t s = 0; s < spec.num_source; ++s) out.labels.source.push_back(s);
  for (std::size_t t = 0; t < spec.num_target; ++t) out.labels.target.push_back(spec.num_source + t);

  auto sample = [&](std::size_t entry) {
    Vector x = Gt * out.space.vector(entry).transpose();
    for (Index j = 0; j < p; ++j) x(j) += spec.noise_sigma * normal(rng);
    return x;
  };

  out.train.features.resize(static_cast<Index>(spec.num_source * spec.samples_per_class), p);
  Index row = 0;
  for (std::size_t s = 0; s < spec.num_source; ++s)
    for (std::size_t k = 0; k < spec.samples_per_class; ++k) {
      out.train.features.row(row++) = sample(out.labels.source[s]).transpose();
      out.train.labels.push_back(s);
    }

  auto test_split = [&](const std::vector<std::size_t>& entries) {
    LabeledFeatures lf;
    lf.features.resize(static_cast<Index>(entries.size() * spec.test_per_class), p);
    Index r = 0;
    for (auto e : entries)
      for (std::size_t k = 0; k < spec.test_per_class; ++k) {
        lf.features.row(r++) = sample(e).transpose();
        lf.labels.push_back(out.space.token(e));
      }
    return lf;
  };
  out.source_test = test_split(out.labels.source);
  out.target_test = test_split(out.labels.target);
  return out;
}

}  // namespace ssvoc

#endif  // SSVOC_SYNTHETIC_HPP
