#ifndef SSVOC_GRADCHECK_HPP
#define SSVOC_GRADCHECK_HPP

// Central finite-difference check of gradient_W and gradient_V on small random
// instances. Instances are resampled until every tube residual and every hinge
// argument sits at least kKinkClearance away from its kink, and until both
// active and inactive cases occur, so differencing never straddles a kink.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ssvoc/linalg.hpp"
#include "ssvoc/objective.hpp"
#include "ssvoc/vocabulary.hpp"

namespace ssvoc {

struct GradcheckInstance {
  SemanticSpace space;
  LabelSets labels;
  LabeledDataset data;
  NeighborSets neighbors;
  Hyperparams hp;
  Matrix W, V;
};

struct GradcheckResult {
  double max_error_W = 0.0;
  double max_error_V = 0.0;
  Index p = 0, d = 0;
  std::size_t n = 0;
};

struct GradcheckReport {
  std::vector<GradcheckResult> results;
  double tolerance = 1e-5;

  double worst() const {
    double w = 0.0;
    for (const auto& r : results) w = std::max({w, r.max_error_W, r.max_error_V});
    return w;
  }
  bool passed() const { return worst() <= tolerance; }
};

namespace detail {

inline constexpr double kKinkClearance = 1e-3;

/// Smallest distance of any tube residual or hinge argument to its kink, and
/// whether both sides of each kink are represented.
struct KinkSurvey {
  double clearance = 1e300;
  bool tube_in = false, tube_out = false, hinge_on = false, hinge_off = false;
};

inline KinkSurvey survey_kinks(const GradcheckInstance& in) {
  KinkSurvey s;
  const RowMatrix P = in.space.vectors() * in.V;
  for (std::size_t i = 0; i < in.data.size(); ++i) {
    const auto z = in.data.labels[i];
    const Vector g = in.W.transpose() * in.data.features.row(static_cast<Index>(i)).transpose();
    const Vector uz = P.row(static_cast<Index>(in.labels.source[z])).transpose();
    for (Index k = 0; k < g.size(); ++k) {
      const double t = std::abs(g(k) - uz(k)) - in.hp.epsilon;
      s.clearance = std::min(s.clearance, std::abs(t));
      (t > 0 ? s.tube_out : s.tube_in) = true;
    }
    std::vector<std::size_t> comp = in.neighbors.vocab[z];
    comp.insert(comp.end(), in.neighbors.source[z].begin(), in.neighbors.source[z].end());
    for (auto a : comp) {
      const Vector ua = P.row(static_cast<Index>(a)).transpose();
      const double h = in.hp.C + 0.5 * (g - uz).squaredNorm() - 0.5 * (g - ua).squaredNorm();
      s.clearance = std::min(s.clearance, std::abs(h));
      (h > 0 ? s.hinge_on : s.hinge_off) = true;
    }
  }
  return s;
}

template <typename F>
Matrix central_difference(const Matrix& at, double h, F&& f) {
  Matrix grad(at.rows(), at.cols());
  Matrix probe = at;
  for (Index c = 0; c < at.cols(); ++c)
    for (Index r = 0; r < at.rows(); ++r) {
      const double keep = probe(r, c);
      probe(r, c) = keep + h;
      const double fp = f(probe);
      probe(r, c) = keep - h;
      const double fm = f(probe);
      probe(r, c) = keep;
      grad(r, c) = (fp - fm) / (2.0 * h);
    }
  return grad;
}

/// max |a - b| / max(max |b|, 1).
inline double relative_error(const Matrix& analytic, const Matrix& numeric) {
  const double scale = std::max(numeric.cwiseAbs().maxCoeff(), 1.0);
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

}  // namespace detail

/// Random instance with p in [3, 8], d in [2, 6], N in [4, 12] and a mix of
/// active and inactive tube residuals and hinges.
inline GradcheckInstance random_gradcheck_instance(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> p_dist(3, 8), d_dist(2, 6), n_dist(4, 12), s_dist(2, 4), t_dist(2, 3);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  while (true) {
    GradcheckInstance in;
    const Index p = p_dist(rng), d = d_dist(rng);
    const std::size_t n = static_cast<std::size_t>(n_dist(rng));
    const std::size_t S = static_cast<std::size_t>(s_dist(rng)), T = static_cast<std::size_t>(t_dist(rng));
    const std::size_t extra = 2;
    std::vector<std::string> tokens;
    for (std::size_t i = 0; i < S + T + extra; ++i) tokens.push_back("w" + std::to_string(i));
    RowMatrix vecs(static_cast<Index>(tokens.size()), d);
    for (Index r = 0; r < vecs.rows(); ++r)
      for (Index c = 0; c < d; ++c) vecs(r, c) = normal(rng);
    in.space = SemanticSpace(tokens, vecs);
    for (std::size_t s = 0; s < S; ++s) in.labels.source.push_back(s);
    for (std::size_t t = 0; t < T; ++t) in.labels.target.push_back(S + t);

    in.data.features.resize(static_cast<Index>(n), p);
    for (std::size_t i = 0; i < n; ++i) {
      in.data.labels.push_back(i % S);
      for (Index c = 0; c < p; ++c) in.data.features(static_cast<Index>(i), c) = normal(rng);
    }
    in.hp.alpha = 0.2 + 0.6 * unit(rng);
    in.hp.epsilon = 0.1 + 0.4 * unit(rng);
    in.hp.C = 0.5 + 1.5 * unit(rng);
    in.hp.lambda = 0.01 + 0.1 * unit(rng);
    in.hp.mu = 0.01 + 0.1 * unit(rng);
    in.W = Matrix(p, d);
    for (Index r = 0; r < p; ++r)
      for (Index c = 0; c < d; ++c) in.W(r, c) = 0.5 * normal(rng);
    in.V = Matrix::Identity(d, d);
    for (Index r = 0; r < d; ++r)
      for (Index c = 0; c < d; ++c) in.V(r, c) += 0.2 * normal(rng);
    in.neighbors = select_neighbors(in.space, in.labels, &in.V, std::min<std::size_t>(2, T), std::min<std::size_t>(2, S - 1),
                                    MarginPool::open);
    const auto survey = detail::survey_kinks(in);
    if (survey.clearance >= detail::kKinkClearance && survey.tube_in && survey.tube_out && survey.hinge_on &&
        survey.hinge_off)
      return in;
  }
}

/// Analytic vs central-difference gradients for one instance.
inline GradcheckResult check_gradients(const GradcheckInstance& in, double h = 1e-5) {
  GradcheckResult r;
  r.p = in.W.rows();
  r.d = in.W.cols();
  r.n = in.data.size();
  const Matrix gW = gradient_W(in.W, in.V, in.data, in.space, in.labels, in.neighbors, in.hp);
  const Matrix gV = gradient_V(in.W, in.V, in.data, in.space, in.labels, in.neighbors, in.hp);
  const Matrix fW = detail::central_difference(in.W, h, [&](const Matrix& W) {
    return objective_warped(W, in.V, in.data, in.space, in.labels, in.neighbors, in.hp);
  });
  const Matrix fV = detail::central_difference(in.V, h, [&](const Matrix& V) {
    return objective_warped(in.W, V, in.data, in.space, in.labels, in.neighbors, in.hp);
  });
  r.max_error_W = detail::relative_error(gW, fW);
  r.max_error_V = detail::relative_error(gV, fV);
  return r;
}

inline GradcheckReport run_gradcheck(std::uint64_t seed, std::size_t instances, double tolerance = 1e-5) {
  std::mt19937_64 rng(seed);
  GradcheckReport rep;
  rep.tolerance = tolerance;
  for (std::size_t i = 0; i < instances; ++i) rep.results.push_back(check_gradients(random_gradcheck_instance(rng)));
  return rep;
}

}  // namespace ssvoc

#endif  // SSVOC_GRADCHECK_HPP
