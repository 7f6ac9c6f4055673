#ifndef SSVOC_OBJECTIVE_HPP
#define SSVOC_OBJECTIVE_HPP

// Vocabulary-informed max-margin embedding objective.
//
// For a sample x with source class z, the projection is g = W^T x and the
// class prototype is u_z (or u_z V once the semantic space is warped). The
// per-sample loss mixes an epsilon-insensitive squared residual with squared
// hinges that ask g to be closer to u_z than to nearby prototypes by a gap C:
//
//   L_eps  = sum_j max(0, |g_j - u_zj| - eps)^2
//   M      = 1/2 sum_{a in N(z)} [C + D(x,u_z)/2 - D(x,u_a)/2]_+^2
//   total  = sum_i alpha L_eps + (1 - alpha) M  +  lambda |W|_F^2 (+ mu |V|_F^2)
//
// where N(z) is the union of the vocabulary and source neighbour sets of z.
// Neighbour sets are inputs here; the solver decides when to refresh them.
//
// Per-sample sums are reduced over fixed chunks of kSampleChunk rows. Within a
// chunk samples are accumulated in row order; chunk partials are then added in
// chunk order. The result is therefore independent of the thread count.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ssvoc/error.hpp"
#include "ssvoc/linalg.hpp"
#include "ssvoc/parallel.hpp"
#include "ssvoc/vocabulary.hpp"

namespace ssvoc {

struct Hyperparams {
  double lambda = 0.01;  // on |W|_F^2
  double mu = 0.01;      // on |V|_F^2
  double alpha = 0.6;    // data term weight; margins get 1 - alpha
  double C = 1.0;        // margin gap
  double epsilon = 0.1;  // insensitive tube half-width
  std::size_t A_V = 5;   // vocabulary neighbours per source class
  std::size_t B_S = 5;   // source neighbours per source class

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw UsageError("alpha must lie in [0, 1]");
    if (!(lambda >= 0.0) || !(mu >= 0.0) || !(C >= 0.0) || !(epsilon >= 0.0))
      throw UsageError("lambda, mu, C and epsilon must be non-negative");
    if (A_V < 1 || B_S < 1) throw UsageError("A_V and B_S must be >= 1");
  }
};

/// Features with one row per sample; labels are positions into LabelSets::source.
struct LabeledDataset {
  RowMatrix features;
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
  Index feature_dim() const { return features.cols(); }

  void validate(std::size_t num_source) const {
    if (static_cast<Index>(labels.size()) != features.rows())
      throw DataError("dataset: " + std::to_string(features.rows()) + " feature rows but " +
                      std::to_string(labels.size()) + " labels");
    for (auto z : labels)
      if (z >= num_source) throw DataError("dataset: label position " + std::to_string(z) + " is not a source class");
    if (!features.allFinite()) throw DataError("dataset: non-finite feature value");
  }
};

/// Where the vocabulary margin term draws its competitors from.
enum class MarginPool {
  target,  // W_t
  open,    // every entry outside W_s
  none,    // vocabulary term disabled (source pairs only)
};

inline MarginPool parse_margin_pool(std::string_view s) {
  if (s == "target") return MarginPool::target;
  if (s == "open") return MarginPool::open;
  if (s == "none") return MarginPool::none;
  throw UsageError("unknown margin_pool '" + std::string(s) + "'");
}

inline std::string_view to_string(MarginPool p) {
  switch (p) {
    case MarginPool::target: return "target";
    case MarginPool::open: return "open";
    case MarginPool::none: return "none";
  }
  return "?";
}

/// Per source class (indexed by source position): competitor entry indices,
/// nearest first.
struct NeighborSets {
  std::vector<std::vector<std::size_t>> vocab;
  std::vector<std::vector<std::size_t>> source;
};

// ---------------------------------------------------------------------------
// Single-sample terms.

template <typename X, typename U>
double squared_distance(const Matrix& W, const Eigen::MatrixBase<X>& x, const Eigen::MatrixBase<U>& u) {
  if (W.rows() != x.size() || W.cols() != u.size()) detail::shape_error("W must be p x d for x in R^p, u in R^d");
  const Vector g = W.transpose() * x.derived().template cast<double>();
  return squared_l2(g, u);
}

template <typename X, typename U>
double data_term(const Matrix& W, const Eigen::MatrixBase<X>& x, const Eigen::MatrixBase<U>& u, double epsilon) {
  if (W.rows() != x.size() || W.cols() != u.size()) detail::shape_error("W must be p x d for x in R^p, u in R^d");
  const Vector g = W.transpose() * x.derived().template cast<double>();
  double acc = 0.0;
  for (Index j = 0; j < g.size(); ++j) {
    const double excess = std::max(0.0, std::abs(g(j) - u(j)) - epsilon);
    acc += excess * excess;
  }
  return acc;
}

/// max(0, z)^2, C1 everywhere.
inline double smooth_hinge_sq(double z) {
  const double h = std::max(0.0, z);
  return h * h;
}

inline double smooth_hinge_sq_derivative(double z) { return 2.0 * std::max(0.0, z); }

namespace detail {

template <typename X>
double pairwise_margin(const Matrix& W, const Eigen::MatrixBase<X>& x, std::size_t z_entry,
                       std::span<const std::size_t> competitors, const SemanticSpace& space, double C) {
  const Vector g = W.transpose() * x.derived().template cast<double>();
  const double half_dz = 0.5 * squared_l2(g, space.vector(z_entry));
  double acc = 0.0;
  for (auto a : competitors) acc += smooth_hinge_sq(C + half_dz - 0.5 * squared_l2(g, space.vector(a)));
  return 0.5 * acc;
}

inline void check_margin_args(const NeighborSets& nb, const LabelSets& labels, std::size_t z) {
  if (z >= labels.source.size()) throw DataError("class position out of range");
  if (z >= nb.vocab.size() || z >= nb.source.size()) throw DataError("no neighbour set for class position " + std::to_string(z));
}

}  // namespace detail

/// Vocabulary margin term for sample x of source class z (a source position).
template <typename X>
double margin_term_vocab(const Matrix& W, const Eigen::MatrixBase<X>& x, std::size_t z, const NeighborSets& nb,
                         const SemanticSpace& space, const LabelSets& labels, double C) {
  detail::check_margin_args(nb, labels, z);
  return detail::pairwise_margin(W, x, labels.source[z], nb.vocab[z], space, C);
}

/// Source-pair margin term for sample x of source class z.
template <typename X>
double margin_term_source(const Matrix& W, const Eigen::MatrixBase<X>& x, std::size_t z, const NeighborSets& nb,
                          const SemanticSpace& space, const LabelSets& labels, double C) {
  detail::check_margin_args(nb, labels, z);
  return detail::pairwise_margin(W, x, labels.source[z], nb.source[z], space, C);
}

template <typename X>
double margin_term_total(const Matrix& W, const Eigen::MatrixBase<X>& x, std::size_t z, const NeighborSets& nb,
                         const SemanticSpace& space, const LabelSets& labels, double C) {
  return margin_term_vocab(W, x, z, nb, space, labels, C) + margin_term_source(W, x, z, nb, space, labels, C);
}

// ---------------------------------------------------------------------------
// Full objective and gradients.

struct ObjectiveParts {
  double data = 0.0;    // sum_i alpha * L_eps
  double margin = 0.0;  // sum_i (1 - alpha) * M
  double reg_W = 0.0;
  double reg_V = 0.0;

  double total() const { return data + margin + reg_W + reg_V; }
};

struct ObjectiveEval {
  ObjectiveParts parts;
  Matrix grad_W;  // empty unless requested
  Matrix grad_V;  // empty unless requested
  double value() const { return parts.total(); }
};

struct EvalRequest {
  bool grad_W = false;
  bool grad_V = false;
  // Subset of dataset rows; empty means every row.
  std::span<const std::size_t> rows = {};
  // Multiplier on the per-sample sum (regularizers are never scaled).
  double sample_scale = 1.0;
};

namespace detail {

inline constexpr std::size_t kSampleChunk = 64;

/// Compact prototype table: row k holds entry `entries[k]`. Source classes
/// occupy rows [0, |W_s|) in source order; neighbour entries follow.
struct PrototypeTable {
  std::vector<std::size_t> entries;
  std::vector<std::vector<Index>> competitor_rows;  // per source position
  RowMatrix raw;
  RowMatrix warped;

  PrototypeTable(const SemanticSpace& space, const LabelSets& labels, const NeighborSets& nb, const Matrix* V,
                 bool use_margins) {
    std::unordered_map<std::size_t, Index> row_of;
    auto add = [&](std::size_t e) {
      auto [it, inserted] = row_of.emplace(e, static_cast<Index>(entries.size()));
      if (inserted) entries.push_back(e);
      return it->second;
    };
    for (auto s : labels.source) add(s);
    competitor_rows.resize(labels.source.size());
    if (use_margins) {
      if (nb.vocab.size() != labels.source.size() || nb.source.size() != labels.source.size())
        throw DataError("neighbour sets do not cover every source class");
      for (std::size_t z = 0; z < labels.source.size(); ++z) {
        for (auto a : nb.vocab[z]) {
          if (a >= space.size()) throw DataError("neighbour index out of range");
          competitor_rows[z].push_back(add(a));
        }
        for (auto b : nb.source[z]) {
          if (b >= space.size()) throw DataError("neighbour index out of range");
          competitor_rows[z].push_back(add(b));
        }
      }
    }
    raw.resize(static_cast<Index>(entries.size()), space.dim());
    for (std::size_t k = 0; k < entries.size(); ++k) raw.row(static_cast<Index>(k)) = space.vector(entries[k]);
    if (V)
      warped = raw * (*V);
    else
      warped = raw;
  }
};

struct ChunkPartial {
  ObjectiveParts parts;
  Matrix grad_W;
  RowMatrix grad_P;
};

inline ObjectiveEval evaluate(const Matrix& W, const Matrix* V, const LabeledDataset& data,
                              const SemanticSpace& space, const LabelSets& labels, const NeighborSets& nb,
                              const Hyperparams& hp, const EvalRequest& req) {
  const Index p = W.rows();
  const Index d = W.cols();
  if (data.size() > 0 && data.feature_dim() != p)
    shape_error("W has " + std::to_string(p) + " rows, features have " + std::to_string(data.feature_dim()));
  if (d != space.dim()) shape_error("W has " + std::to_string(d) + " columns, space has dim " + std::to_string(space.dim()));
  if (V && (V->rows() != d || V->cols() != d)) shape_error("V must be d x d");
  if (static_cast<Index>(data.labels.size()) != data.features.rows()) shape_error("labels vs feature rows");

  const bool use_margins = hp.alpha < 1.0;
  const PrototypeTable table(space, labels, nb, V, use_margins);
  const Index m = static_cast<Index>(table.entries.size());
  const bool need_gp = req.grad_V;

  const std::size_t n = req.rows.empty() ? data.size() : req.rows.size();
  auto row_at = [&](std::size_t j) { return req.rows.empty() ? j : req.rows[j]; };

  ChunkPartial zero;
  if (req.grad_W) zero.grad_W = Matrix::Zero(p, d);
  if (need_gp) zero.grad_P = RowMatrix::Zero(m, d);

  auto map = [&](std::size_t b, std::size_t e) {
    ChunkPartial acc = zero;
    Vector g(d), grad_g(d), resid(d);
    for (std::size_t j = b; j < e; ++j) {
      const std::size_t i = row_at(j);
      if (i >= data.size()) throw DataError("sample row out of range");
      const std::size_t z = data.labels[i];
      if (z >= labels.source.size()) throw DataError("sample label is not a source class");
      const auto x = data.features.row(static_cast<Index>(i));
      g.noalias() = W.transpose() * x.transpose();
      resid = g - table.warped.row(static_cast<Index>(z)).transpose();

      // epsilon-insensitive squared residual
      double l_eps = 0.0;
      for (Index k = 0; k < d; ++k) {
        const double excess = std::max(0.0, std::abs(resid(k)) - hp.epsilon);
        l_eps += excess * excess;
        grad_g(k) = hp.alpha * (resid(k) > 0 ? 2.0 * excess : -2.0 * excess);
      }
      acc.parts.data += hp.alpha * l_eps;
      if (need_gp) acc.grad_P.row(static_cast<Index>(z)) -= grad_g.transpose();

      if (use_margins) {
        const double w = 1.0 - hp.alpha;
        const double half_dz = 0.5 * squared_l2(g, table.warped.row(static_cast<Index>(z)));
        double margin = 0.0;
        for (Index a : table.competitor_rows[z]) {
          const auto pa = table.warped.row(a);
          const double h = hp.C + half_dz - 0.5 * squared_l2(g, pa);
          if (h <= 0.0) continue;
          margin += 0.5 * h * h;
          // d/dg: h (u_a - u_z); d/du_z: -h (g - u_z); d/du_a: h (g - u_a)
          grad_g += (w * h) * (pa - table.warped.row(static_cast<Index>(z))).transpose();
          if (need_gp) {
            acc.grad_P.row(static_cast<Index>(z)) -= (w * h) * resid.transpose();
            acc.grad_P.row(a) += (w * h) * (g.transpose() - pa);
          }
        }
        acc.parts.margin += w * margin;
      }
      if (req.grad_W) acc.grad_W.noalias() += x.transpose() * grad_g.transpose();
    }
    return acc;
  };
  auto fold = [&](ChunkPartial& into, const ChunkPartial& part) {
    into.parts.data += part.parts.data;
    into.parts.margin += part.parts.margin;
    if (req.grad_W) into.grad_W += part.grad_W;
    if (need_gp) into.grad_P += part.grad_P;
  };
  ChunkPartial total = map_reduce_chunks(ChunkPlan{n, kSampleChunk}, zero, map, fold);

  ObjectiveEval out;
  out.parts.data = req.sample_scale * total.parts.data;
  out.parts.margin = req.sample_scale * total.parts.margin;
  out.parts.reg_W = hp.lambda * W.squaredNorm();
  if (V) out.parts.reg_V = hp.mu * V->squaredNorm();
  if (req.grad_W) out.grad_W = req.sample_scale * total.grad_W + 2.0 * hp.lambda * W;
  if (req.grad_V) {
    const Matrix I = Matrix::Identity(d, d);
    out.grad_V = req.sample_scale * (table.raw.transpose() * total.grad_P);
    out.grad_V += 2.0 * hp.mu * (V ? *V : I);
  }
  return out;
}

enum class CurvatureTarget { W, V };

/// Block-diagonal curvature model with one block per column of W (p x p) or of
/// V (d x d). Each block is exact for the data term on the samples whose
/// residual leaves the tube, adds the Gauss-Newton term of every active hinge
/// restricted to that column, and includes the regularizer. Cross-column
/// couplings are dropped. For V the indefinite part of the hinge curvature is
/// kept only through its positive u_z'u_z piece.
inline std::vector<Matrix> column_curvature(const Matrix& W, const Matrix& V, const LabeledDataset& data,
                                            const SemanticSpace& space, const LabelSets& labels,
                                            const NeighborSets& nb, const Hyperparams& hp, CurvatureTarget target) {
  const Index d = W.cols();
  const bool use_margins = hp.alpha < 1.0;
  const PrototypeTable table(space, labels, nb, &V, use_margins);
  const Index n = static_cast<Index>(data.size());
  const double w = 1.0 - hp.alpha;

  if (target == CurvatureTarget::W) {
    // Per-sample, per-column weights c_ij; block j = X' diag(c_:j) X + 2 lambda I.
    Matrix c = Matrix::Zero(n, d);
    Vector g(d);
    for (Index i = 0; i < n; ++i) {
      const auto z = static_cast<Index>(data.labels[static_cast<std::size_t>(i)]);
      g.noalias() = W.transpose() * data.features.row(i).transpose();
      for (Index k = 0; k < d; ++k)
        if (std::abs(g(k) - table.warped(z, k)) > hp.epsilon) c(i, k) += 2.0 * hp.alpha;
      if (!use_margins) continue;
      const double half_dz = 0.5 * squared_l2(g, table.warped.row(z));
      for (Index a : table.competitor_rows[static_cast<std::size_t>(z)]) {
        if (hp.C + half_dz - 0.5 * squared_l2(g, table.warped.row(a)) <= 0.0) continue;
        for (Index k = 0; k < d; ++k) {
          const double delta = table.warped(a, k) - table.warped(z, k);
          c(i, k) += w * delta * delta;
        }
      }
    }
    std::vector<Matrix> blocks(static_cast<std::size_t>(d));
    for (Index k = 0; k < d; ++k) {
      Matrix& B = blocks[static_cast<std::size_t>(k)];
      B.noalias() = data.features.transpose() * (c.col(k).asDiagonal() * data.features);
      B.diagonal().array() += 2.0 * hp.lambda;
    }
    return blocks;
  }

  std::vector<Matrix> blocks(static_cast<std::size_t>(d), Matrix::Zero(d, d));
  Vector g(d), col(d);
  for (Index i = 0; i < n; ++i) {
    const auto z = static_cast<Index>(data.labels[static_cast<std::size_t>(i)]);
    g.noalias() = W.transpose() * data.features.row(i).transpose();
    const auto uz = table.raw.row(z);
    for (Index k = 0; k < d; ++k)
      if (std::abs(g(k) - table.warped(z, k)) > hp.epsilon)
        blocks[static_cast<std::size_t>(k)].noalias() += (2.0 * hp.alpha) * (uz.transpose() * uz);
    if (!use_margins) continue;
    const double half_dz = 0.5 * squared_l2(g, table.warped.row(z));
    for (Index a : table.competitor_rows[static_cast<std::size_t>(z)]) {
      const double h = hp.C + half_dz - 0.5 * squared_l2(g, table.warped.row(a));
      if (h <= 0.0) continue;
      const auto ua = table.raw.row(a);
      for (Index k = 0; k < d; ++k) {
        // d h / d V_:k
        col = ua.transpose() * (g(k) - table.warped(a, k)) - uz.transpose() * (g(k) - table.warped(z, k));
        Matrix& B = blocks[static_cast<std::size_t>(k)];
        B.noalias() += w * (col * col.transpose());
        B.noalias() += (w * h) * (uz.transpose() * uz);
      }
    }
  }
  for (auto& B : blocks) B.diagonal().array() += 2.0 * hp.mu;
  return blocks;
}

}  // namespace detail

/// Unwarped objective: prototypes are the raw word vectors.
inline double objective(const Matrix& W, const LabeledDataset& data, const SemanticSpace& space,
                        const LabelSets& labels, const NeighborSets& nb, const Hyperparams& hp) {
  return detail::evaluate(W, nullptr, data, space, labels, nb, hp, {}).value();
}

/// Warped objective: every prototype u becomes u V, plus mu |V|_F^2.
inline double objective_warped(const Matrix& W, const Matrix& V, const LabeledDataset& data,
                               const SemanticSpace& space, const LabelSets& labels, const NeighborSets& nb,
                               const Hyperparams& hp) {
  return detail::evaluate(W, &V, data, space, labels, nb, hp, {}).value();
}

/// Objective terms and any requested gradients in one pass. V == nullptr
/// evaluates the unwarped objective.
inline ObjectiveEval evaluate_objective(const Matrix& W, const Matrix* V, const LabeledDataset& data,
                                        const SemanticSpace& space, const LabelSets& labels, const NeighborSets& nb,
                                        const Hyperparams& hp, const EvalRequest& req) {
  return detail::evaluate(W, V, data, space, labels, nb, hp, req);
}

inline Matrix gradient_W(const Matrix& W, const LabeledDataset& data, const SemanticSpace& space,
                         const LabelSets& labels, const NeighborSets& nb, const Hyperparams& hp) {
  return detail::evaluate(W, nullptr, data, space, labels, nb, hp, {.grad_W = true}).grad_W;
}

inline Matrix gradient_W(const Matrix& W, const Matrix& V, const LabeledDataset& data, const SemanticSpace& space,
                         const LabelSets& labels, const NeighborSets& nb, const Hyperparams& hp) {
  return detail::evaluate(W, &V, data, space, labels, nb, hp, {.grad_W = true}).grad_W;
}

inline Matrix gradient_V(const Matrix& W, const Matrix& V, const LabeledDataset& data, const SemanticSpace& space,
                         const LabelSets& labels, const NeighborSets& nb, const Hyperparams& hp) {
  return detail::evaluate(W, &V, data, space, labels, nb, hp, {.grad_V = true}).grad_V;
}

// ---------------------------------------------------------------------------
// Neighbour selection.

/// For each source class, the A_V nearest competitors from `pool` and the B_S
/// nearest other source prototypes, measured between (warped) prototypes.
/// Ties go to the lower entry index. A count of zero leaves that set empty.
inline NeighborSets select_neighbors(const SemanticSpace& space, const LabelSets& labels, const Matrix* V,
                                     std::size_t A_V, std::size_t B_S, MarginPool pool = MarginPool::target) {
  labels.validate(space);
  const std::size_t S = labels.source.size();

  std::vector<std::size_t> vocab_candidates;
  if (pool == MarginPool::target) {
    vocab_candidates = labels.target;
  } else if (pool == MarginPool::open) {
    std::vector<char> is_source(space.size(), 0);
    for (auto s : labels.source) is_source[s] = 1;
    for (std::size_t i = 0; i < space.size(); ++i)
      if (!is_source[i]) vocab_candidates.push_back(i);
  }
  std::sort(vocab_candidates.begin(), vocab_candidates.end());
  if (pool != MarginPool::none && A_V > vocab_candidates.size())
    throw DataError("select_neighbors: A_V = " + std::to_string(A_V) + " exceeds " +
                    std::to_string(vocab_candidates.size()) + " candidate prototypes");
  if (B_S + 1 > S)
    throw DataError("select_neighbors: B_S = " + std::to_string(B_S) + " needs at least " + std::to_string(B_S + 1) +
                    " source classes, have " + std::to_string(S));

  // Only warp what is needed: whole vocabulary for the open pool, else the labelled classes.
  std::optional<SemanticSpace> warped_storage;
  const SemanticSpace* geom = &space;
  if (V) {
    warped_storage = space.warped(*V);
    geom = &*warped_storage;
  }

  NeighborSets nb;
  nb.vocab.resize(S);
  nb.source.resize(S);
  for (std::size_t z = 0; z < S; ++z) {
    const auto query = geom->vector(labels.source[z]);
    if (pool != MarginPool::none && A_V > 0)
      for (const auto& n : nearest(*geom, query, A_V, std::span<const std::size_t>(vocab_candidates)))
        nb.vocab[z].push_back(n.index);
    if (B_S == 0) continue;
    std::vector<std::size_t> others;
    for (auto s : labels.source)
      if (s != labels.source[z]) others.push_back(s);
    std::sort(others.begin(), others.end());
    for (const auto& n : nearest(*geom, query, B_S, std::span<const std::size_t>(others)))
      nb.source[z].push_back(n.index);
  }
  return nb;
}

// ---------------------------------------------------------------------------
// Closed-form ridge map: argmin_W sum_i |W^T x_i - u_{z_i}|^2 + lambda |W|_F^2.

inline Matrix ridge_fit(const LabeledDataset& data, const SemanticSpace& space, const LabelSets& labels,
                        double lambda) {
  if (lambda < 0.0) throw UsageError("ridge_fit: lambda must be non-negative");
  data.validate(labels.source.size());
  const Index p = data.feature_dim();
  const Index d = space.dim();
  Matrix targets(static_cast<Index>(data.size()), d);
  for (std::size_t i = 0; i < data.size(); ++i)
    targets.row(static_cast<Index>(i)) = space.vector(labels.source[data.labels[i]]);
  const Matrix X = data.features;
  Matrix gram = X.transpose() * X;
  gram.diagonal().array() += lambda;
  const Matrix rhs = X.transpose() * targets;
  if (lambda > 0.0) {
    Eigen::LLT<Matrix> llt(gram);
    if (llt.info() == Eigen::Success) return llt.solve(rhs);
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(gram);
  if (qr.rank() < p) throw DataError("ridge_fit: singular normal equations (rank-deficient features with lambda = 0)");
  return qr.solve(rhs);
}

}  // namespace ssvoc

#endif  // SSVOC_OBJECTIVE_HPP
