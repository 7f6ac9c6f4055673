#ifndef SSVOC_RECOGNITION_HPP
#define SSVOC_RECOGNITION_HPP

// Nearest-prototype recognition in the (warped) semantic space. Supervised and
// zero-shot queries rank the model's own u V table; open-set queries rank the
// whole vocabulary warped by V, built once per PrototypeIndex.

#include <algorithm>
#include <cstddef>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "ssvoc/error.hpp"
#include "ssvoc/fit.hpp"
#include "ssvoc/linalg.hpp"
#include "ssvoc/vocabulary.hpp"

namespace ssvoc {

struct PredictionMode {
  enum class Variant { nn, knn_rocchio };
  Variant variant = Variant::nn;
  std::size_t k = 1;  // neighbourhood size for knn_rocchio
  LabelFilter filter = LabelFilter::zero_shot;

  static PredictionMode nn(LabelFilter f) { return {Variant::nn, 1, f}; }
  static PredictionMode rocchio(std::size_t k, LabelFilter f) { return {Variant::knn_rocchio, k, f}; }
};

/// g(x) = W^T x.
template <typename X>
Vector embed(const TrainedModel& model, const Eigen::MatrixBase<X>& x) {
  if (x.size() != model.W.rows())
    detail::shape_error("feature vector has " + std::to_string(x.size()) + " dims, model expects " +
                        std::to_string(model.W.rows()));
  Vector g(model.W.cols());
  for (Index j = 0; j < model.W.cols(); ++j) {
    double acc = 0.0;
    for (Index i = 0; i < model.W.rows(); ++i) acc += model.W(i, j) * x(i);
    g(j) = acc;
  }
  return g;
}

/// Embeds every row of a feature matrix.
inline RowMatrix embed_rows(const TrainedModel& model, const RowMatrix& features) {
  RowMatrix out(features.rows(), model.W.cols());
  for (Index r = 0; r < features.rows(); ++r) out.row(r) = embed(model, features.row(r).transpose()).transpose();
  return out;
}

/// Read-only ranking structure over a trained model's prototypes. Safe to
/// share across threads; the warped open vocabulary is built on first use.
class PrototypeIndex {
 public:
  PrototypeIndex(const TrainedModel& model, const SemanticSpace& space, const LabelSets& labels)
      : model_(model), space_(space), labels_(labels) {
    if (space.dim() != model.W.cols()) detail::shape_error("model and vocabulary disagree on d");
    if (model.prototype_entries.empty()) throw DataError("model carries no prototypes");
    for (auto f : {LabelFilter::supervised, LabelFilter::zero_shot}) {
      auto& rows = filter_rows_[static_cast<int>(f)];
      for (auto e : candidate_indices(space, labels, f)) {
        auto r = model.prototype_row(e);
        if (!r) throw DataError("model has no prototype for '" + space.token(e) + "'");
        rows.push_back(static_cast<std::size_t>(*r));
      }
      std::sort(rows.begin(), rows.end());
    }
  }

  const SemanticSpace& space() const { return space_; }
  const LabelSets& labels() const { return labels_; }
  const TrainedModel& model() const { return model_; }

  std::size_t candidate_count(LabelFilter f) const {
    return f == LabelFilter::open_set ? space_.size() : filter_rows_[static_cast<int>(f)].size();
  }

  /// Top-k entries for an already embedded query, ascending distance, ties to
  /// the lower vocabulary index.
  template <typename Q>
  std::vector<Neighbor> rank(const Eigen::MatrixBase<Q>& query, std::size_t k, LabelFilter f) const {
    if (query.size() != space_.dim()) detail::shape_error("query dimension does not match the semantic space");
    if (k < 1) throw std::invalid_argument("rank: k must be >= 1");
    if (f == LabelFilter::open_set) return nearest(open_space(), query, k);
    const auto& rows = filter_rows_[static_cast<int>(f)];
    if (rows.empty()) throw DataError("prediction filter '" + std::string(to_string(f)) + "' selects no labels");
    // prototype_entries is sorted, so ordering by table row is ordering by entry index.
    auto ranked = detail::chunked_topk(model_.warped_prototypes, query, rows.size(), k,
                                       [&](std::size_t j) { return rows[j]; });
    for (auto& n : ranked) n.index = model_.prototype_entries[n.index];
    return ranked;
  }

 private:
  const SemanticSpace& open_space() const {
    std::call_once(open_once_, [this] {
      if (model_.V.isIdentity(0.0))
        open_ = &space_;
      else {
        open_storage_ = std::make_unique<SemanticSpace>(space_.warped(model_.V));
        open_ = open_storage_.get();
      }
    });
    return *open_;
  }

  const TrainedModel& model_;
  const SemanticSpace& space_;
  const LabelSets& labels_;
  std::vector<std::size_t> filter_rows_[2];
  mutable std::once_flag open_once_;
  mutable std::unique_ptr<SemanticSpace> open_storage_;
  mutable const SemanticSpace* open_ = nullptr;
};

/// Ranked vocabulary entries for feature vector x (nn variant).
template <typename X>
std::vector<Neighbor> predict_topk_entries(const PrototypeIndex& index, const Eigen::MatrixBase<X>& x, std::size_t k,
                                           LabelFilter f) {
  return index.rank(embed(index.model(), x), k, f);
}

template <typename X>
std::vector<std::string> predict_topk(const PrototypeIndex& index, const Eigen::MatrixBase<X>& x, std::size_t k,
                                      const PredictionMode& mode) {
  std::vector<std::string> out;
  for (const auto& n : predict_topk_entries(index, x, k, mode.filter)) out.push_back(index.space().token(n.index));
  return out;
}

template <typename X>
std::string predict(const PrototypeIndex& index, const Eigen::MatrixBase<X>& x, const PredictionMode& mode) {
  return index.space().token(predict_topk_entries(index, x, 1, mode.filter).front().index);
}

template <typename X>
std::string predict(const TrainedModel& model, const Eigen::MatrixBase<X>& x, const PredictionMode& mode,
                    const SemanticSpace& space, const LabelSets& labels) {
  return predict(PrototypeIndex(model, space, labels), x, mode);
}

template <typename X>
std::vector<std::string> predict_topk(const TrainedModel& model, const Eigen::MatrixBase<X>& x, std::size_t k,
                                      const PredictionMode& mode, const SemanticSpace& space,
                                      const LabelSets& labels) {
  return predict_topk(PrototypeIndex(model, space, labels), x, k, mode);
}

/// Replaces each embedded row by the mean of itself and its k - 1 nearest
/// other rows (ties to the lower row index). Neighbours are summed in rank
/// order starting from the row itself.
inline RowMatrix rocchio_average(const RowMatrix& embedded, std::size_t k) {
  const auto n = static_cast<std::size_t>(embedded.rows());
  if (k < 1) throw std::invalid_argument("rocchio: k must be >= 1");
  if (k > n) throw DataError("rocchio: k = " + std::to_string(k) + " exceeds batch of " + std::to_string(n));
  RowMatrix out(embedded.rows(), embedded.cols());
  std::vector<Neighbor> others;
  for (std::size_t i = 0; i < n; ++i) {
    const auto qi = embedded.row(static_cast<Index>(i));
    Vector acc = qi.transpose();
    if (k > 1) {
      others.clear();
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) others.push_back({j, squared_l2(embedded.row(static_cast<Index>(j)), qi)});
      std::partial_sort(others.begin(), others.begin() + static_cast<std::ptrdiff_t>(k - 1), others.end());
      for (std::size_t m = 0; m + 1 < k; ++m) acc += embedded.row(static_cast<Index>(others[m].index)).transpose();
    }
    out.row(static_cast<Index>(i)) = (acc / static_cast<double>(k)).transpose();
  }
  return out;
}

/// Ranked predictions for every row of a test batch under either variant.
inline std::vector<std::vector<std::size_t>> predict_batch_entries(const PrototypeIndex& index,
                                                                   const RowMatrix& features, std::size_t topk,
                                                                   const PredictionMode& mode) {
  RowMatrix queries = embed_rows(index.model(), features);
  if (mode.variant == PredictionMode::Variant::knn_rocchio) queries = rocchio_average(queries, mode.k);
  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(queries.rows()));
  ChunkPlan plan{out.size(), 16};
  for_each_chunk(plan, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t r = b; r < e; ++r)
      for (const auto& n : index.rank(queries.row(static_cast<Index>(r)), topk, mode.filter))
        out[r].push_back(n.index);
  });
  return out;
}

inline std::vector<std::string> predict_knn_rocchio(const PrototypeIndex& index, const RowMatrix& test_batch,
                                                    std::size_t k, LabelFilter filter) {
  std::vector<std::string> out;
  for (const auto& ranked : predict_batch_entries(index, test_batch, 1, PredictionMode::rocchio(k, filter)))
    out.push_back(index.space().token(ranked.front()));
  return out;
}

inline std::vector<std::string> predict_knn_rocchio(const TrainedModel& model, const RowMatrix& test_batch,
                                                    std::size_t k, LabelFilter filter, const SemanticSpace& space,
                                                    const LabelSets& labels) {
  return predict_knn_rocchio(PrototypeIndex(model, space, labels), test_batch, k, filter);
}

}  // namespace ssvoc

#endif  // SSVOC_RECOGNITION_HPP
