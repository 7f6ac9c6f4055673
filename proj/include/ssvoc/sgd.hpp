#ifndef SSVOC_SGD_HPP
#define SSVOC_SGD_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ssvoc/error.hpp"
#include "ssvoc/lbfgs.hpp"
#include "ssvoc/linalg.hpp"

namespace ssvoc {

/// Estimate of the full objective from a subset of sample rows (the callback
/// rescales the subset sum to full-dataset size). Writes the matching gradient.
using BatchObjectiveFn = std::function<double(const Vector& x, std::span<const std::size_t> rows, Vector& grad)>;

namespace detail {

/// One pass over a fresh permutation of [0, n) in mini-batches of `batch`.
/// Gradients of the full-size estimate are divided by n, so `step` acts on the
/// per-sample mean objective. Returns the last batch estimate.
inline double sgd_epoch(const BatchObjectiveFn& f, std::size_t n, Vector& x, std::size_t batch, double step,
                        std::mt19937_64& rng, double& last_grad_norm) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  Vector grad(x.size());
  double value = 0.0;
  for (std::size_t b = 0; b < n; b += batch) {
    const std::size_t e = std::min(n, b + batch);
    std::span<const std::size_t> rows(order.data() + b, e - b);
    value = f(x, rows, grad);
    if (!std::isfinite(value) || !grad.allFinite()) throw SolverError("sgd: non-finite objective or gradient");
    last_grad_norm = grad.norm();
    x -= (step / static_cast<double>(n)) * grad;
  }
  return value;
}

}  // namespace detail

/// Plain mini-batch SGD: cfg.max_iters epochs of fixed step cfg.sgd_step and
/// batch cfg.sgd_batch. Deterministic for a given cfg.seed.
inline MinimizeResult sgd_minimize(const BatchObjectiveFn& f, std::size_t num_samples, const Vector& x0,
                                   const SolverConfig& cfg) {
  cfg.validate();
  if (num_samples == 0) throw DataError("sgd: no samples");
  MinimizeResult res;
  res.x = x0;
  std::mt19937_64 rng(cfg.seed);
  for (int epoch = 1; epoch <= cfg.max_iters; ++epoch) {
    double gnorm = 0.0;
    res.value = detail::sgd_epoch(f, num_samples, res.x, cfg.sgd_batch, cfg.sgd_step, rng, gnorm);
    res.grad_norm = gnorm;
    res.log.push_back({epoch, res.value, gnorm, "sgd"});
    res.iterations = epoch;
  }
  res.status = SolverStatus::finished;
  return res;
}

/// Growing-batch SGD that hands over to L-BFGS once a batch would cover the
/// whole dataset. Epoch e uses step cfg.sgd_step / sqrt(e) and batch
/// cfg.sgd_batch * growth^(e-1). The SGD phase is capped at cfg.max_iters epochs.
inline MinimizeResult hybrid_minimize(const BatchObjectiveFn& f_batch, const ObjectiveFn& f_full,
                                      std::size_t num_samples, const Vector& x0, const SolverConfig& cfg,
                                      std::string_view phase = "hybrid", const InverseHessianModel& model = {}) {
  cfg.validate();
  if (num_samples == 0) throw DataError("hybrid: no samples");
  std::mt19937_64 rng(cfg.seed);
  Vector x = x0;
  std::vector<LogRecord> log;
  double batch = static_cast<double>(cfg.sgd_batch);
  const std::string sgd_tag = std::string(phase) + ":sgd";
  for (int epoch = 1; epoch <= cfg.max_iters && batch < static_cast<double>(num_samples); ++epoch) {
    double gnorm = 0.0;
    const double step = cfg.sgd_step / std::sqrt(static_cast<double>(epoch));
    const double v = detail::sgd_epoch(f_batch, num_samples, x, static_cast<std::size_t>(batch), step, rng, gnorm);
    log.push_back({epoch, v, gnorm, sgd_tag});
    batch = std::ceil(batch * cfg.hybrid_growth);
  }
  const int sgd_epochs = static_cast<int>(log.size());
  MinimizeResult res = lbfgs_minimize(f_full, x, cfg, std::string(phase) + ":lbfgs", model);
  for (auto& r : res.log) r.iteration += sgd_epochs;
  log.insert(log.end(), res.log.begin(), res.log.end());
  res.log = std::move(log);
  return res;
}

/// Initial hybrid batch: max(32, N / 100).
inline std::size_t default_hybrid_batch(std::size_t num_samples) {
  return std::max<std::size_t>(32, num_samples / 100);
}

}  // namespace ssvoc

#endif  // SSVOC_SGD_HPP
