#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "ssvoc/gradcheck.hpp"
#include "ssvoc/lbfgs.hpp"
#include "ssvoc/objective.hpp"

using namespace ssvoc;

namespace {

struct Instance {
  SemanticSpace space;
  LabelSets labels;
  LabeledDataset data;
  NeighborSets nb;
  Hyperparams hp;
  Matrix W, V;
};

Matrix random_matrix(Index r, Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = normal(rng);
  return m;
}

// N samples over S source and T target classes plus E extra vocabulary entries.
Instance random_instance(std::uint64_t seed, std::size_t N = 6, Index p = 4, Index d = 3, std::size_t S = 3,
                         std::size_t T = 2, std::size_t E = 2, std::size_t A_V = 1, std::size_t B_S = 1) {
  std::mt19937_64 rng(seed);
  Instance in;
  std::vector<std::string> tokens;
  for (std::size_t i = 0; i < S + T + E; ++i) tokens.push_back("w" + std::to_string(i));
  in.space = SemanticSpace(tokens, RowMatrix(random_matrix(static_cast<Index>(tokens.size()), d, rng)));
  for (std::size_t s = 0; s < S; ++s) in.labels.source.push_back(s);
  for (std::size_t t = 0; t < T; ++t) in.labels.target.push_back(S + t);
  in.data.features = random_matrix(static_cast<Index>(N), p, rng);
  for (std::size_t i = 0; i < N; ++i) in.data.labels.push_back(i % S);
  in.hp.alpha = 0.5;
  in.hp.epsilon = 0.2;
  in.hp.C = 1.5;
  in.hp.lambda = 0.05;
  in.hp.mu = 0.03;
  in.hp.A_V = A_V;
  in.hp.B_S = B_S;
  in.W = random_matrix(p, d, rng, 0.5);
  in.V = Matrix::Identity(d, d) + random_matrix(d, d, rng, 0.2);
  in.nb = select_neighbors(in.space, in.labels, nullptr, A_V, B_S);
  return in;
}

// ---------------------------------------------------------------------------
// Scalar-loop oracles.

double dist2(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return s;
}

std::vector<double> project(const Matrix& W, const RowMatrix& X, Index row) {
  std::vector<double> g(static_cast<std::size_t>(W.cols()), 0.0);
  for (Index j = 0; j < W.cols(); ++j)
    for (Index i = 0; i < W.rows(); ++i) g[static_cast<std::size_t>(j)] += W(i, j) * X(row, i);
  return g;
}

std::vector<double> prototype(const SemanticSpace& s, std::size_t e, const Matrix* V) {
  const Index d = s.dim();
  std::vector<double> u(static_cast<std::size_t>(d), 0.0);
  for (Index j = 0; j < d; ++j) {
    if (!V) {
      u[static_cast<std::size_t>(j)] = s.vectors()(static_cast<Index>(e), j);
      continue;
    }
    for (Index k = 0; k < d; ++k) u[static_cast<std::size_t>(j)] += s.vectors()(static_cast<Index>(e), k) * (*V)(k, j);
  }
  return u;
}

double oracle_data(const std::vector<double>& g, const std::vector<double>& u, double eps) {
  double s = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double e = std::max(0.0, std::fabs(g[k] - u[k]) - eps);
    s += e * e;
  }
  return s;
}

double oracle_margin(const std::vector<double>& g, const std::vector<double>& uz,
                     const std::vector<std::vector<double>>& competitors, double C) {
  double s = 0.0;
  for (const auto& ua : competitors) {
    const double h = C + 0.5 * dist2(g, uz) - 0.5 * dist2(g, ua);
    if (h > 0) s += h * h;
  }
  return 0.5 * s;
}

double oracle_objective(const Instance& in, const Matrix& W, const Matrix* V) {
  double total = 0.0;
  for (std::size_t i = 0; i < in.data.size(); ++i) {
    const auto z = in.data.labels[i];
    const auto g = project(W, in.data.features, static_cast<Index>(i));
    const auto uz = prototype(in.space, in.labels.source[z], V);
    std::vector<std::vector<double>> comp;
    for (auto a : in.nb.vocab[z]) comp.push_back(prototype(in.space, a, V));
    for (auto b : in.nb.source[z]) comp.push_back(prototype(in.space, b, V));
    total += in.hp.alpha * oracle_data(g, uz, in.hp.epsilon);
    if (in.hp.alpha < 1.0) total += (1.0 - in.hp.alpha) * oracle_margin(g, uz, comp, in.hp.C);
  }
  for (Index i = 0; i < W.size(); ++i) total += in.hp.lambda * W.data()[i] * W.data()[i];
  if (V)
    for (Index i = 0; i < V->size(); ++i) total += in.hp.mu * V->data()[i] * V->data()[i];
  return total;
}

template <typename F>
Matrix finite_difference(const Matrix& at, F f, double h = 1e-5) {
  Matrix out(at.rows(), at.cols());
  for (Index i = 0; i < at.size(); ++i) {
    Matrix plus = at, minus = at;
    plus.data()[i] += h;
    minus.data()[i] -= h;
    out.data()[i] = (f(plus) - f(minus)) / (2 * h);
  }
  return out;
}

double rel_error(const Matrix& a, const Matrix& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
}

// Brute-force neighbour selection: full sort of the candidate list by (distance, index).
std::vector<std::size_t> scan_closest(const RowMatrix& P, std::size_t from, std::vector<std::size_t> cand,
                                      std::size_t k) {
  std::vector<std::pair<double, std::size_t>> d;
  for (auto c : cand) {
    double s = 0.0;
    for (Index j = 0; j < P.cols(); ++j) s += (P(static_cast<Index>(c), j) - P(static_cast<Index>(from), j)) *
                                             (P(static_cast<Index>(c), j) - P(static_cast<Index>(from), j));
    d.emplace_back(s, c);
  }
  std::sort(d.begin(), d.end());
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < k; ++r) out.push_back(d[r].second);
  return out;
}

// One-dimensional space: entries at the given coordinates; p = d = 1, W = 1, x = 0 so g = 0.
struct LineSetup {
  SemanticSpace space;
  LabelSets labels;
  NeighborSets nb;
  Matrix W = Matrix::Ones(1, 1);
  Vector x = Vector::Zero(1);
};

LineSetup line(const std::vector<double>& coords, std::vector<std::size_t> source, std::vector<std::size_t> target) {
  LineSetup s;
  std::vector<std::string> tok;
  RowMatrix v(static_cast<Index>(coords.size()), 1);
  for (std::size_t i = 0; i < coords.size(); ++i) {
    tok.push_back("e" + std::to_string(i));
    v(static_cast<Index>(i), 0) = coords[i];
  }
  s.space = SemanticSpace(tok, v);
  s.labels = {std::move(source), std::move(target)};
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------

TEST(SquaredDistance, IdentityMapExactFit) {
  Vector x(3);
  x << 1, -2, 0.5;
  EXPECT_EQ(squared_distance(Matrix::Identity(3, 3), x, x), 0.0);
}

TEST(SquaredDistance, ZeroMap) {
  Vector x = Vector::Ones(4), u(2);
  u << 1, 2;
  EXPECT_DOUBLE_EQ(squared_distance(Matrix::Zero(4, 2), x, u), 5.0);
}

TEST(SquaredDistance, MatchesScalarLoop) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    const Matrix W = random_matrix(4, 3, rng);
    const RowMatrix X = random_matrix(1, 4, rng);
    const Matrix u = random_matrix(3, 1, rng);
    std::vector<double> uu{u(0), u(1), u(2)};
    EXPECT_NEAR(squared_distance(W, X.row(0).transpose(), u.col(0)), dist2(project(W, X, 0), uu), 1e-12);
  }
}

TEST(SquaredDistance, ShapeMismatch) {
  EXPECT_THROW(squared_distance(Matrix::Zero(3, 2), Vector::Zero(2), Vector::Zero(2)), DataError);
}

TEST(SquaredDistance, InvariantUnderCoRotation) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 10; ++t) {
    const Matrix W = random_matrix(5, 3, rng);
    const Vector x = random_matrix(5, 1, rng).col(0), u = random_matrix(3, 1, rng).col(0);
    const Matrix R = Eigen::HouseholderQR<Matrix>(random_matrix(3, 3, rng)).householderQ();
    const Vector ur = R.transpose() * u;
    EXPECT_NEAR(squared_distance(Matrix(W * R), x, ur), squared_distance(W, x, u), 1e-10);
  }
}

TEST(DataTerm, WideTubeIsZero) {
  Vector x(2), u(2);
  x << 1, 1;
  u << 0.5, 1.5;
  EXPECT_EQ(data_term(Matrix::Identity(2, 2), x, u, 0.5), 0.0);
  EXPECT_EQ(data_term(Matrix::Identity(2, 2), x, u, 3.0), 0.0);
}

TEST(DataTerm, ZeroEpsilonIsSquaredDistance) {
  std::mt19937_64 rng(3);
  const Matrix W = random_matrix(4, 3, rng);
  const Vector x = random_matrix(4, 1, rng).col(0), u = random_matrix(3, 1, rng).col(0);
  EXPECT_NEAR(data_term(W, x, u, 0.0), squared_distance(W, x, u), 1e-12);
}

TEST(DataTerm, OneDimensionalResidualRule) {
  Matrix W(1, 1);
  W << 2.0;
  Vector x(1), u(1);
  x << 1.0;
  u << 0.5;
  EXPECT_NEAR(data_term(W, x, u, 0.3), 1.44, 1e-12);
}

TEST(DataTerm, NonIncreasingInEpsilon) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 10; ++t) {
    const Matrix W = random_matrix(4, 3, rng);
    const Vector x = random_matrix(4, 1, rng).col(0), u = random_matrix(3, 1, rng).col(0);
    double prev = data_term(W, x, u, 0.0);
    for (double eps = 0.05; eps < 3.0; eps += 0.05) {
      const double v = data_term(W, x, u, eps);
      EXPECT_LE(v, prev);
      EXPECT_GE(v, 0.0);
      prev = v;
    }
  }
}

TEST(SmoothHinge, Values) {
  EXPECT_EQ(smooth_hinge_sq(-3.0), 0.0);
  EXPECT_EQ(smooth_hinge_sq(2.0), 4.0);
}

TEST(SmoothHinge, DerivativeMatchesFiniteDifferences) {
  const double h = 1e-6;
  EXPECT_NEAR((smooth_hinge_sq(h) - smooth_hinge_sq(-h)) / (2 * h), 0.0, 1e-6);
  EXPECT_EQ(smooth_hinge_sq_derivative(0.0), 0.0);
  for (double z : {-2.0, -0.5, 0.3, 1.7}) {
    const double fd = (smooth_hinge_sq(z + h) - smooth_hinge_sq(z - h)) / (2 * h);
    EXPECT_NEAR(smooth_hinge_sq_derivative(z), fd, 1e-6);
  }
}

TEST(MarginTerms, VocabularyDirectEvaluation) {
  // g = 0, u_z at sqrt(2), u_a at -sqrt(2): D_z = D_a = 2, C = 1.
  auto s = line({std::sqrt(2.0), 5.0, -std::sqrt(2.0)}, {0, 1}, {2});
  s.nb.vocab = {{2}, {2}};
  s.nb.source = {{}, {}};
  EXPECT_NEAR(margin_term_vocab(s.W, s.x, 0, s.nb, s.space, s.labels, 1.0), 0.5, 1e-12);
}

TEST(MarginTerms, SourceDirectEvaluation) {
  // D_z = 4, D_b = 2, C = 1.
  auto s = line({2.0, std::sqrt(2.0)}, {0, 1}, {});
  s.nb.vocab = {{}, {}};
  s.nb.source = {{1}, {0}};
  EXPECT_NEAR(margin_term_source(s.W, s.x, 0, s.nb, s.space, s.labels, 1.0), 2.0, 1e-12);
}

TEST(MarginTerms, SourceBoundaryWithZeroGap) {
  auto s = line({1.0, -1.0}, {0, 1}, {});
  s.nb.vocab = {{}, {}};
  s.nb.source = {{1}, {0}};
  EXPECT_EQ(margin_term_source(s.W, s.x, 0, s.nb, s.space, s.labels, 0.0), 0.0);
}

TEST(MarginTerms, SatisfiedMarginsAreZero) {
  auto s = line({0.1, 10.0, -10.0}, {0, 1}, {2});
  s.nb.vocab = {{2}, {2}};
  s.nb.source = {{1}, {0}};
  EXPECT_EQ(margin_term_total(s.W, s.x, 0, s.nb, s.space, s.labels, 1.0), 0.0);
}

TEST(MarginTerms, TotalIsSumOfParts) {
  // u_z = 2 (D_z = 4); vocab competitor at -2 gives 0.5, source competitor at sqrt(2) gives 2.0.
  auto s = line({2.0, std::sqrt(2.0), -2.0}, {0, 1}, {2});
  s.nb.vocab = {{2}, {2}};
  s.nb.source = {{1}, {0}};
  EXPECT_NEAR(margin_term_vocab(s.W, s.x, 0, s.nb, s.space, s.labels, 1.0), 0.5, 1e-12);
  EXPECT_NEAR(margin_term_source(s.W, s.x, 0, s.nb, s.space, s.labels, 1.0), 2.0, 1e-12);
  EXPECT_NEAR(margin_term_total(s.W, s.x, 0, s.nb, s.space, s.labels, 1.0), 2.5, 1e-12);
}

TEST(MarginTerms, MatchScalarOracleOnRandomInstances) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto in = random_instance(seed, 6, 4, 3, 4, 3, 2, 2, 2);
    for (std::size_t i = 0; i < in.data.size(); ++i) {
      const auto z = in.data.labels[i];
      const auto x = in.data.features.row(static_cast<Index>(i)).transpose();
      const auto g = project(in.W, in.data.features, static_cast<Index>(i));
      const auto uz = prototype(in.space, in.labels.source[z], nullptr);
      std::vector<std::vector<double>> va, sb;
      for (auto a : in.nb.vocab[z]) va.push_back(prototype(in.space, a, nullptr));
      for (auto b : in.nb.source[z]) sb.push_back(prototype(in.space, b, nullptr));
      const double mv = margin_term_vocab(in.W, x, z, in.nb, in.space, in.labels, in.hp.C);
      const double ms = margin_term_source(in.W, x, z, in.nb, in.space, in.labels, in.hp.C);
      EXPECT_NEAR(mv, oracle_margin(g, uz, va, in.hp.C), 1e-12);
      EXPECT_NEAR(ms, oracle_margin(g, uz, sb, in.hp.C), 1e-12);
      EXPECT_NEAR(margin_term_total(in.W, x, z, in.nb, in.space, in.labels, in.hp.C), mv + ms, 1e-12);
    }
  }
}

TEST(MarginTerms, InvariantToNeighbourOrder) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto in = random_instance(seed, 6, 4, 3, 4, 3, 2, 3, 3);
    auto rev = in.nb;
    for (auto& v : rev.vocab) std::reverse(v.begin(), v.end());
    for (auto& v : rev.source) std::reverse(v.begin(), v.end());
    EXPECT_NEAR(objective(in.W, in.data, in.space, in.labels, in.nb, in.hp),
                objective(in.W, in.data, in.space, in.labels, rev, in.hp), 1e-12);
  }
}

TEST(MarginTerms, MissingNeighbourSetIsAnError) {
  auto in = random_instance(1);
  NeighborSets empty;
  const Vector x = in.data.features.row(0).transpose();
  EXPECT_THROW(margin_term_vocab(in.W, x, 0, empty, in.space, in.labels, 1.0), DataError);
}

TEST(Objective, EmptyDatasetIsRegularizerOnly) {
  auto in = random_instance(2);
  in.data.features.resize(0, in.W.rows());
  in.data.labels.clear();
  EXPECT_NEAR(objective(in.W, in.data, in.space, in.labels, in.nb, in.hp), in.hp.lambda * in.W.squaredNorm(), 1e-14);
}

TEST(Objective, AlphaOneExcludesMargins) {
  auto in = random_instance(3);
  in.hp.alpha = 1.0;
  double expect = in.hp.lambda * in.W.squaredNorm();
  for (std::size_t i = 0; i < in.data.size(); ++i)
    expect += data_term(in.W, in.data.features.row(static_cast<Index>(i)).transpose(),
                        in.space.vector(in.labels.source[in.data.labels[i]]).transpose(), in.hp.epsilon);
  EXPECT_NEAR(objective(in.W, in.data, in.space, in.labels, in.nb, in.hp), expect, 1e-12);
}

TEST(Objective, MatchesScalarOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto in = random_instance(seed);
    EXPECT_NEAR(objective(in.W, in.data, in.space, in.labels, in.nb, in.hp), oracle_objective(in, in.W, nullptr),
                1e-10);
  }
}

TEST(Objective, IsNonNegative) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto in = random_instance(seed, 8, 5, 4, 4, 3, 3, 2, 2);
    const auto ev = evaluate_objective(in.W, &in.V, in.data, in.space, in.labels, in.nb, in.hp, {});
    EXPECT_GE(ev.parts.data, 0.0);
    EXPECT_GE(ev.parts.margin, 0.0);
    EXPECT_GE(ev.value(), 0.0);
  }
}

TEST(Objective, ShapeMismatch) {
  auto in = random_instance(4);
  EXPECT_THROW(objective(Matrix::Zero(2, 3), in.data, in.space, in.labels, in.nb, in.hp), DataError);
  EXPECT_THROW(objective_warped(in.W, Matrix::Identity(2, 2), in.data, in.space, in.labels, in.nb, in.hp), DataError);
}

TEST(ObjectiveWarped, IdentityWarpWithoutRegularizerEqualsObjective) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto in = random_instance(seed);
    in.hp.mu = 0.0;
    const Matrix I = Matrix::Identity(in.W.cols(), in.W.cols());
    EXPECT_NEAR(objective_warped(in.W, I, in.data, in.space, in.labels, in.nb, in.hp),
                objective(in.W, in.data, in.space, in.labels, in.nb, in.hp), 1e-12);
  }
}

TEST(ObjectiveWarped, IdentityWarpAddsMuTimesDimension) {
  auto in = random_instance(5);
  in.hp.mu = 0.7;
  const Matrix I = Matrix::Identity(3, 3);
  EXPECT_NEAR(objective_warped(in.W, I, in.data, in.space, in.labels, in.nb, in.hp),
              objective(in.W, in.data, in.space, in.labels, in.nb, in.hp) + 0.7 * 3, 1e-12);
}

TEST(ObjectiveWarped, MatchesScalarOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto in = random_instance(seed, 9, 5, 4, 4, 3, 2, 2, 2);
    EXPECT_NEAR(objective_warped(in.W, in.V, in.data, in.space, in.labels, in.nb, in.hp),
                oracle_objective(in, in.W, &in.V), 1e-10);
  }
}

TEST(Objective, DeterministicAndIndependentOfRowSubsetPath) {
  auto in = random_instance(6, 300, 5, 4, 4, 3, 2, 2, 2);
  const auto a = evaluate_objective(in.W, &in.V, in.data, in.space, in.labels, in.nb, in.hp,
                                    {.grad_W = true, .grad_V = true});
  const auto b = evaluate_objective(in.W, &in.V, in.data, in.space, in.labels, in.nb, in.hp,
                                    {.grad_W = true, .grad_V = true});
  EXPECT_EQ(a.value(), b.value());
  EXPECT_TRUE(a.grad_W == b.grad_W);
  EXPECT_TRUE(a.grad_V == b.grad_V);
  std::vector<std::size_t> all(in.data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto c = evaluate_objective(in.W, &in.V, in.data, in.space, in.labels, in.nb, in.hp,
                                    {.grad_W = true, .rows = all});
  EXPECT_EQ(a.value(), c.value());
  EXPECT_TRUE(a.grad_W == c.grad_W);
}

TEST(GradientW, StationaryAtRidgeSolution) {
  auto in = random_instance(7, 20, 4, 3);
  in.hp.alpha = 1.0;
  in.hp.epsilon = 0.0;
  const Matrix W = ridge_fit(in.data, in.space, in.labels, in.hp.lambda);
  EXPECT_LE(gradient_W(W, in.data, in.space, in.labels, in.nb, in.hp).norm(), 1e-6);
}

TEST(GradientW, OnlyRegularizerWhenEverythingInactive) {
  // x = (1, 0) so g = first row of W = (0.05, -0.05), inside the tube around u_z = 0;
  // competitors are 10 away so every hinge is off.
  RowMatrix v(3, 2);
  v << 0, 0, 10, 0, 0, 10;
  SemanticSpace space({"a", "b", "c"}, v);
  LabelSets labels{{0, 1}, {2}};
  LabeledDataset data;
  data.features.resize(1, 2);
  data.features << 1, 0;
  data.labels = {0};
  Hyperparams hp;
  hp.epsilon = 0.1;
  hp.lambda = 0.3;
  const auto nb = select_neighbors(space, labels, nullptr, 1, 1);
  Matrix W(2, 2);
  W << 0.05, -0.05, 3, 4;
  EXPECT_TRUE(gradient_W(W, data, space, labels, nb, hp).isApprox(2 * hp.lambda * W, 1e-14));
}

TEST(GradientW, MatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto in = random_instance(seed, 8, 5, 3, 4, 3, 2, 2, 2);
    const Matrix g = gradient_W(in.W, in.V, in.data, in.space, in.labels, in.nb, in.hp);
    const Matrix fd = finite_difference(in.W, [&](const Matrix& W) {
      return objective_warped(W, in.V, in.data, in.space, in.labels, in.nb, in.hp);
    });
    EXPECT_LE(rel_error(g, fd), 1e-5) << "seed " << seed;
  }
}

TEST(GradientV, EmptyDatasetIsTwoMuV) {
  auto in = random_instance(8);
  in.data.features.resize(0, in.W.rows());
  in.data.labels.clear();
  EXPECT_TRUE(gradient_V(in.W, in.V, in.data, in.space, in.labels, in.nb, in.hp).isApprox(2 * in.hp.mu * in.V, 1e-14));
}

TEST(GradientV, MatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto in = random_instance(seed, 8, 5, 3, 4, 3, 2, 2, 2);
    const Matrix g = gradient_V(in.W, in.V, in.data, in.space, in.labels, in.nb, in.hp);
    const Matrix fd = finite_difference(in.V, [&](const Matrix& V) {
      return objective_warped(in.W, V, in.data, in.space, in.labels, in.nb, in.hp);
    });
    EXPECT_LE(rel_error(g, fd), 1e-5) << "seed " << seed;
  }
}

TEST(Gradients, BothRegimesConstructedDeliberately) {
  // Large C: every hinge active. Large epsilon and C = 0 with distant competitors: none active.
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (int regime = 0; regime < 2; ++regime) {
      auto in = random_instance(seed, 8, 5, 3, 4, 3, 2, 2, 2);
      if (regime == 0) {
        in.hp.C = 50.0;
        in.hp.epsilon = 0.0;
      } else {
        in.hp.C = 0.0;
        in.hp.epsilon = 100.0;
        in.W.setZero();
        in.W(0, 0) = 1e-3;
      }
      const auto ev = evaluate_objective(in.W, &in.V, in.data, in.space, in.labels, in.nb, in.hp,
                                         {.grad_W = true, .grad_V = true});
      if (regime == 0) {
        EXPECT_GT(ev.parts.margin, 0.0);
      } else {
        EXPECT_EQ(ev.parts.data, 0.0);
      }
      auto f = [&](const Matrix& W, const Matrix& V) {
        return objective_warped(W, V, in.data, in.space, in.labels, in.nb, in.hp);
      };
      EXPECT_LE(rel_error(ev.grad_W, finite_difference(in.W, [&](const Matrix& W) { return f(W, in.V); })), 1e-5);
      EXPECT_LE(rel_error(ev.grad_V, finite_difference(in.V, [&](const Matrix& V) { return f(in.W, V); })), 1e-5);
    }
  }
}

TEST(Gradients, RandomizedSuiteSpansKinkRegimes) {
  // The library's gradcheck instances are checked here against this file's own differencing.
  std::mt19937_64 rng(99);
  for (int t = 0; t < 20; ++t) {
    const auto in = random_gradcheck_instance(rng);
    auto f = [&](const Matrix& W, const Matrix& V) {
      return objective_warped(W, V, in.data, in.space, in.labels, in.neighbors, in.hp);
    };
    const Matrix gW = gradient_W(in.W, in.V, in.data, in.space, in.labels, in.neighbors, in.hp);
    const Matrix gV = gradient_V(in.W, in.V, in.data, in.space, in.labels, in.neighbors, in.hp);
    EXPECT_LE(rel_error(gW, finite_difference(in.W, [&](const Matrix& W) { return f(W, in.V); })), 1e-5);
    EXPECT_LE(rel_error(gV, finite_difference(in.V, [&](const Matrix& V) { return f(in.W, V); })), 1e-5);
  }
}

TEST(GradientV, SmallAtNumericallyConvergedWarp) {
  auto in = random_instance(10, 12, 4, 3, 4, 3, 2, 2, 2);
  in.hp.alpha = 1.0;
  in.hp.epsilon = 0.0;
  const Index d = in.V.rows();
  ObjectiveFn f = [&](const Vector& x, Vector& grad) {
    const Matrix V = Eigen::Map<const Matrix>(x.data(), d, d);
    const Matrix g = gradient_V(in.W, V, in.data, in.space, in.labels, in.nb, in.hp);
    grad = Eigen::Map<const Vector>(g.data(), g.size());
    return objective_warped(in.W, V, in.data, in.space, in.labels, in.nb, in.hp);
  };
  SolverConfig cfg;
  cfg.max_iters = 500;
  cfg.grad_tol = 1e-7;
  const Vector x0 = Eigen::Map<const Vector>(in.V.data(), in.V.size());
  const auto res = lbfgs_minimize(f, x0, cfg);
  const Matrix V = Eigen::Map<const Matrix>(res.x.data(), d, d);
  EXPECT_LE(gradient_V(in.W, V, in.data, in.space, in.labels, in.nb, in.hp).norm(), cfg.grad_tol * 1.0001);
}

TEST(SelectNeighbors, CollinearSources) {
  auto s = line({0.0, 1.0, 3.0, 10.0}, {0, 1, 2}, {3});
  const auto nb = select_neighbors(s.space, s.labels, nullptr, 1, 1);
  EXPECT_EQ(nb.source[1], std::vector<std::size_t>{0});
  EXPECT_EQ(nb.source[0], std::vector<std::size_t>{1});
  EXPECT_EQ(nb.source[2], std::vector<std::size_t>{1});
  EXPECT_EQ(nb.vocab[0], std::vector<std::size_t>{3});
}

TEST(SelectNeighbors, IdentityWarpMatchesNoWarp) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto in = random_instance(seed, 6, 4, 3, 5, 4, 5);
    const Matrix I = Matrix::Identity(3, 3);
    for (auto pool : {MarginPool::target, MarginPool::open}) {
      const auto a = select_neighbors(in.space, in.labels, nullptr, 3, 2, pool);
      const auto b = select_neighbors(in.space, in.labels, &I, 3, 2, pool);
      EXPECT_EQ(a.vocab, b.vocab);
      EXPECT_EQ(a.source, b.source);
    }
  }
}

TEST(SelectNeighbors, MatchesExhaustiveScan) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto in = random_instance(seed, 6, 4, 3, 6, 5, 8);
    RowMatrix P = in.space.vectors() * in.V;
    const auto nb = select_neighbors(in.space, in.labels, &in.V, 3, 2, MarginPool::open);
    const auto nt = select_neighbors(in.space, in.labels, &in.V, 3, 2, MarginPool::target);
    for (std::size_t z = 0; z < in.labels.source.size(); ++z) {
      const auto e = in.labels.source[z];
      std::vector<std::size_t> open, others;
      for (std::size_t i = 0; i < in.space.size(); ++i) {
        const bool src = std::find(in.labels.source.begin(), in.labels.source.end(), i) != in.labels.source.end();
        if (!src) open.push_back(i);
        if (src && i != e) others.push_back(i);
      }
      EXPECT_EQ(nb.vocab[z], scan_closest(P, e, open, 3));
      EXPECT_EQ(nt.vocab[z], scan_closest(P, e, in.labels.target, 3));
      EXPECT_EQ(nb.source[z], scan_closest(P, e, others, 2));
    }
  }
}

TEST(SelectNeighbors, CandidateSetTooSmall) {
  const auto in = random_instance(1, 6, 4, 3, 3, 2, 0);
  EXPECT_THROW(select_neighbors(in.space, in.labels, nullptr, 3, 1), DataError);
  EXPECT_THROW(select_neighbors(in.space, in.labels, nullptr, 1, 3), DataError);
}

TEST(SelectNeighbors, NonePoolLeavesVocabularyEmpty) {
  const auto in = random_instance(2);
  const auto nb = select_neighbors(in.space, in.labels, nullptr, 1, 1, MarginPool::none);
  for (const auto& v : nb.vocab) EXPECT_TRUE(v.empty());
  for (const auto& v : nb.source) EXPECT_EQ(v.size(), 1u);
}

TEST(RidgeFit, ScalarRegression) {
  RowMatrix v(1, 1);
  v << 2.0;
  SemanticSpace space({"a"}, v);
  LabelSets labels{{0}, {}};
  LabeledDataset data;
  data.features = RowMatrix::Ones(1, 1);
  data.labels = {0};
  const Matrix W = ridge_fit(data, space, labels, 0.0);
  EXPECT_NEAR(W(0, 0), 2.0, 1e-14);
}

TEST(RidgeFit, HeavyRegularizationShrinksToZero) {
  const auto in = random_instance(11, 30, 4, 3);
  EXPECT_LE(ridge_fit(in.data, in.space, in.labels, 1e6).norm(), 1e-3);
}

TEST(RidgeFit, StationaryForNormalEquations) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto in = random_instance(seed, 25, 6, 3);
    const double lambda = 0.1;
    const Matrix W = ridge_fit(in.data, in.space, in.labels, lambda);
    // gradient of sum_i |W^T x_i - u_i|^2 + lambda |W|^2, assembled sample by sample
    Matrix grad = 2 * lambda * W;
    for (std::size_t i = 0; i < in.data.size(); ++i) {
      const Vector x = in.data.features.row(static_cast<Index>(i)).transpose();
      const Vector r = W.transpose() * x - in.space.vector(in.labels.source[in.data.labels[i]]).transpose();
      grad += 2 * x * r.transpose();
    }
    EXPECT_LE(grad.norm(), 1e-8);
  }
}

TEST(RidgeFit, RankDeficientWithoutRegularizationIsReported) {
  auto in = random_instance(12, 6, 4, 3);
  in.data.features.col(3) = in.data.features.col(2);
  EXPECT_THROW(ridge_fit(in.data, in.space, in.labels, 0.0), DataError);
}
