#ifndef SSVOC_FIT_HPP
#define SSVOC_FIT_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ssvoc/error.hpp"
#include "ssvoc/lbfgs.hpp"
#include "ssvoc/linalg.hpp"
#include "ssvoc/objective.hpp"
#include "ssvoc/sgd.hpp"
#include "ssvoc/vocabulary.hpp"

namespace ssvoc {

/// Summary of one solve inside fit: "W0", then "V1", "W1", "V2", ...
struct PassRecord {
  std::string phase;
  int iterations = 0;
  SolverStatus status = SolverStatus::max_iters;
  double objective = 0.0;
  double grad_norm = 0.0;
};

struct TrainedModel {
  Matrix W;  // p x d
  Matrix V;  // d x d
  // Sorted union of source and target entry indices, and u V for each (same row order).
  std::vector<std::size_t> prototype_entries;
  RowMatrix warped_prototypes;
  Hyperparams hyperparams;
  MarginPool pool = MarginPool::target;
  std::vector<LogRecord> training_log;
  std::vector<PassRecord> passes;

  Index feature_dim() const { return W.rows(); }
  Index semantic_dim() const { return W.cols(); }

  /// Row of warped_prototypes holding `entry`, if it is a source or target class.
  std::optional<Index> prototype_row(std::size_t entry) const {
    auto it = std::lower_bound(prototype_entries.begin(), prototype_entries.end(), entry);
    if (it == prototype_entries.end() || *it != entry) return std::nullopt;
    return static_cast<Index>(it - prototype_entries.begin());
  }
};

/// Recomputes the sorted prototype table u V for source and target classes.
inline void materialize_prototypes(TrainedModel& model, const SemanticSpace& space, const LabelSets& labels) {
  model.prototype_entries = labels.source;
  model.prototype_entries.insert(model.prototype_entries.end(), labels.target.begin(), labels.target.end());
  std::sort(model.prototype_entries.begin(), model.prototype_entries.end());
  RowMatrix raw(static_cast<Index>(model.prototype_entries.size()), space.dim());
  for (std::size_t k = 0; k < model.prototype_entries.size(); ++k)
    raw.row(static_cast<Index>(k)) = space.vector(model.prototype_entries[k]);
  model.warped_prototypes = warp_rows(raw, model.V);
}

/// Neighbour counts actually usable for this label configuration:
/// A_V capped by the pool size, B_S by the number of other source classes.
inline std::pair<std::size_t, std::size_t> effective_neighbor_counts(const SemanticSpace& space,
                                                                     const LabelSets& labels, const Hyperparams& hp,
                                                                     MarginPool pool) {
  std::size_t pool_size = 0;
  if (pool == MarginPool::target) pool_size = labels.target.size();
  if (pool == MarginPool::open) pool_size = space.size() - labels.source.size();
  const std::size_t others = labels.source.empty() ? 0 : labels.source.size() - 1;
  return {std::min(hp.A_V, pool_size), std::min(hp.B_S, others)};
}

namespace detail {

class FitProblem {
 public:
  FitProblem(const LabeledDataset& data, const SemanticSpace& space, const LabelSets& labels, const Hyperparams& hp,
             const SolverConfig& cfg, MarginPool pool)
      : data_(data), space_(space), labels_(labels), hp_(hp), cfg_(cfg), pool_(pool) {}

  NeighborSets neighbors(const Matrix* V) const {
    if (hp_.alpha >= 1.0) {
      NeighborSets empty;
      empty.vocab.resize(labels_.source.size());
      empty.source.resize(labels_.source.size());
      return empty;
    }
    const auto [av, bs] = effective_neighbor_counts(space_, labels_, hp_, pool_);
    return select_neighbors(space_, labels_, V, av, bs, pool_);
  }

  MinimizeResult solve_W(Matrix& W, const Matrix& V, const NeighborSets& nb, const std::string& phase) const {
    const Index p = W.rows(), d = W.cols();
    auto unpack = [p, d](const Vector& x) { return Eigen::Map<const Matrix>(x.data(), p, d); };
    ObjectiveFn full = [&](const Vector& x, Vector& grad) {
      const Matrix Wx = unpack(x);
      auto ev = evaluate_objective(Wx, &V, data_, space_, labels_, nb, hp_, {.grad_W = true});
      grad = Eigen::Map<const Vector>(ev.grad_W.data(), ev.grad_W.size());
      return ev.value();
    };
    BatchObjectiveFn batch = [&](const Vector& x, std::span<const std::size_t> rows, Vector& grad) {
      const Matrix Wx = unpack(x);
      const double scale = static_cast<double>(data_.size()) / static_cast<double>(rows.size());
      auto ev = evaluate_objective(Wx, &V, data_, space_, labels_, nb, hp_,
                                   {.grad_W = true, .rows = rows, .sample_scale = scale});
      grad = Eigen::Map<const Vector>(ev.grad_W.data(), ev.grad_W.size());
      return ev.value();
    };
    const Vector x0 = Eigen::Map<const Vector>(W.data(), W.size());
    MinimizeResult res = run(full, batch, x0, phase, w_preconditioner(V, nb, p, d));
    W = unpack(res.x);
    return res;
  }

  MinimizeResult solve_V(const Matrix& W, Matrix& V, const NeighborSets& nb, const std::string& phase) const {
    const Index d = V.rows();
    auto unpack = [d](const Vector& x) { return Eigen::Map<const Matrix>(x.data(), d, d); };
    ObjectiveFn full = [&](const Vector& x, Vector& grad) {
      const Matrix Vx = unpack(x);
      auto ev = evaluate_objective(W, &Vx, data_, space_, labels_, nb, hp_, {.grad_V = true});
      grad = Eigen::Map<const Vector>(ev.grad_V.data(), ev.grad_V.size());
      return ev.value();
    };
    BatchObjectiveFn batch = [&](const Vector& x, std::span<const std::size_t> rows, Vector& grad) {
      const Matrix Vx = unpack(x);
      const double scale = static_cast<double>(data_.size()) / static_cast<double>(rows.size());
      auto ev = evaluate_objective(W, &Vx, data_, space_, labels_, nb, hp_,
                                   {.grad_V = true, .rows = rows, .sample_scale = scale});
      grad = Eigen::Map<const Vector>(ev.grad_V.data(), ev.grad_V.size());
      return ev.value();
    };
    const Vector x0 = Eigen::Map<const Vector>(V.data(), V.size());
    MinimizeResult res = run(full, batch, x0, phase, v_preconditioner(W, nb, d));
    V = unpack(res.x);
    return res;
  }

  double value(const Matrix& W, const Matrix& V, const NeighborSets& nb) const {
    return objective_warped(W, V, data_, space_, labels_, nb, hp_);
  }

 private:
  // Block solves against column_curvature at the current iterate. Large
  // problems, where rebuilding d blocks of size p x p per iteration would
  // dominate, fall back to one fixed block from the full data Gram.
  static constexpr double kMaxCurvatureWork = 2e9;

  static Preconditioner block_solver(std::vector<Matrix> blocks, Index rows, Index cols) {
    auto factors = std::make_shared<std::vector<Eigen::LDLT<Matrix>>>();
    factors->reserve(blocks.size());
    for (auto& B : blocks) factors->emplace_back(B);
    for (const auto& f : *factors)
      if (f.info() != Eigen::Success || !f.isPositive()) return {};
    return [factors, rows, cols](const Vector& v) {
      Eigen::Map<const Matrix> in(v.data(), rows, cols);
      Vector out(v.size());
      Eigen::Map<Matrix> o(out.data(), rows, cols);
      for (Index k = 0; k < cols; ++k) {
        const auto& f = (*factors)[factors->size() == 1 ? 0 : static_cast<std::size_t>(k)];
        o.col(k) = f.solve(in.col(k));
      }
      return out;
    };
  }

  InverseHessianModel w_preconditioner(const Matrix& V, const NeighborSets& nb, Index p, Index d) const {
    const double work = static_cast<double>(data_.size()) * static_cast<double>(p) * static_cast<double>(p) *
                        static_cast<double>(d);
    if (work > kMaxCurvatureWork) {
      Matrix M = 2.0 * std::max(hp_.alpha, 0.1) * (data_.features.transpose() * data_.features);
      M.diagonal().array() += 2.0 * hp_.lambda;
      auto fixed = block_solver({M}, p, d);
      return {[fixed](const Vector&) { return fixed; }, false};
    }
    return {[this, &V, &nb, p, d](const Vector& x) {
              const Matrix Wx = Eigen::Map<const Matrix>(x.data(), p, d);
              return block_solver(column_curvature(Wx, V, data_, space_, labels_, nb, hp_, CurvatureTarget::W), p, d);
            },
            true};
  }

  InverseHessianModel v_preconditioner(const Matrix& W, const NeighborSets& nb, Index d) const {
    return {[this, &W, &nb, d](const Vector& x) {
              const Matrix Vx = Eigen::Map<const Matrix>(x.data(), d, d);
              return block_solver(column_curvature(W, Vx, data_, space_, labels_, nb, hp_, CurvatureTarget::V), d, d);
            },
            true};
  }

  MinimizeResult run(const ObjectiveFn& full, const BatchObjectiveFn& batch, const Vector& x0,
                     const std::string& phase, const InverseHessianModel& precond) const {
    switch (cfg_.method) {
      case SolverMethod::lbfgs: return lbfgs_minimize(full, x0, cfg_, phase, precond);
      case SolverMethod::hybrid: return hybrid_minimize(batch, full, data_.size(), x0, cfg_, phase, precond);
      case SolverMethod::sgd: {
        auto res = sgd_minimize(batch, data_.size(), x0, cfg_);
        for (auto& r : res.log) r.phase = phase + ":sgd";
        return res;
      }
    }
    throw UsageError("unknown solver method");
  }

  const LabeledDataset& data_;
  const SemanticSpace& space_;
  const LabelSets& labels_;
  const Hyperparams& hp_;
  const SolverConfig& cfg_;
  MarginPool pool_;
};

}  // namespace detail

/// Learns W (from zeros) under the margin objective with V = I. With
/// fine_tune, then alternates a V-solve and a W-solve per pass, refreshing
/// neighbour sets under the current warp before each V-solve, until a pass
/// improves the objective by less than cfg.pass_tol (relative) or
/// cfg.v_passes passes have run.
inline TrainedModel fit(const LabeledDataset& data, const SemanticSpace& space, const LabelSets& labels,
                        const Hyperparams& hp, const SolverConfig& cfg, bool fine_tune,
                        MarginPool pool = MarginPool::target) {
  hp.validate();
  cfg.validate();
  labels.validate(space);
  data.validate(labels.source.size());
  if (data.size() == 0) throw DataError("fit: empty training set");
  if (labels.source.empty()) throw DataError("fit: no source classes");

  const Index p = data.feature_dim(), d = space.dim();
  TrainedModel model;
  model.W = Matrix::Zero(p, d);
  model.V = Matrix::Identity(d, d);
  model.hyperparams = hp;
  model.pool = pool;

  const detail::FitProblem problem(data, space, labels, hp, cfg, pool);
  auto record = [&](const std::string& phase, const MinimizeResult& r) {
    model.training_log.insert(model.training_log.end(), r.log.begin(), r.log.end());
    model.passes.push_back({phase, r.iterations, r.status, r.value, r.grad_norm});
  };

  NeighborSets nb = problem.neighbors(nullptr);
  record("W0", problem.solve_W(model.W, model.V, nb, "W0"));

  if (fine_tune) {
    for (int pass = 1; pass <= cfg.v_passes; ++pass) {
      nb = problem.neighbors(&model.V);
      const double before = problem.value(model.W, model.V, nb);
      const std::string vtag = "V" + std::to_string(pass), wtag = "W" + std::to_string(pass);
      record(vtag, problem.solve_V(model.W, model.V, nb, vtag));
      const auto wres = problem.solve_W(model.W, model.V, nb, wtag);
      record(wtag, wres);
      const double improvement = (before - wres.value) / std::max(std::abs(before), 1e-300);
      if (improvement < cfg.pass_tol) break;
    }
  }
  materialize_prototypes(model, space, labels);
  return model;
}

}  // namespace ssvoc

#endif  // SSVOC_FIT_HPP
