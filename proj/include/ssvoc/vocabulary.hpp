#ifndef SSVOC_VOCABULARY_HPP
#define SSVOC_VOCABULARY_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ssvoc/error.hpp"
#include "ssvoc/linalg.hpp"
#include "ssvoc/parallel.hpp"

namespace ssvoc {

/// ASCII lowercase. Multi-byte UTF-8 sequences pass through untouched.
inline std::string normalize_token(std::string_view token) {
  std::string out(token);
  for (char& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

/// Class names with spaces become underscore-joined phrase tokens ("polar bear" -> "polar_bear").
inline std::string phrase_token(std::string_view name) {
  std::string out = normalize_token(name);
  std::replace(out.begin(), out.end(), ' ', '_');
  return out;
}

/// The open vocabulary: an ordered list of tokens with one d-dimensional
/// vector each and optional corpus frequencies. Immutable once built, so a
/// single instance can be shared by concurrent readers.
class SemanticSpace {
 public:
  SemanticSpace() = default;

  SemanticSpace(std::vector<std::string> tokens, RowMatrix vectors,
                std::optional<std::vector<std::uint64_t>> frequencies = std::nullopt)
      : tokens_(std::move(tokens)), vectors_(std::move(vectors)), frequencies_(std::move(frequencies)) {
    if (static_cast<Index>(tokens_.size()) != vectors_.rows())
      throw DataError("semantic space: " + std::to_string(tokens_.size()) + " tokens but " +
                      std::to_string(vectors_.rows()) + " vectors");
    if (!tokens_.empty() && vectors_.cols() < 1) throw DataError("semantic space: dimension must be >= 1");
    if (frequencies_ && frequencies_->size() != tokens_.size())
      throw DataError("semantic space: frequency table size does not match token count");
    index_.reserve(tokens_.size());
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      tokens_[i] = normalize_token(tokens_[i]);
      if (!index_.emplace(tokens_[i], i).second)
        throw DataError("semantic space: duplicate token '" + tokens_[i] + "' at entry " + std::to_string(i));
    }
  }

  std::size_t size() const { return tokens_.size(); }
  bool empty() const { return tokens_.empty(); }
  Index dim() const { return vectors_.cols(); }

  const std::string& token(std::size_t i) const { return tokens_.at(i); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  auto vector(std::size_t i) const { return vectors_.row(static_cast<Index>(i)); }
  const RowMatrix& vectors() const { return vectors_; }

  std::optional<std::size_t> find(std::string_view token) const {
    auto it = index_.find(normalize_token(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t require(std::string_view token) const {
    if (auto i = find(token)) return *i;
    throw DataError("token not in vocabulary: '" + std::string(token) + "'");
  }

  bool has_frequencies() const { return frequencies_.has_value(); }
  const std::vector<std::uint64_t>& frequencies() const {
    if (!frequencies_) throw DataError("semantic space carries no frequency data");
    return *frequencies_;
  }

  SemanticSpace with_frequencies(std::vector<std::uint64_t> freq) const {
    return SemanticSpace(tokens_, vectors_, std::move(freq));
  }

  /// Copy with every vector scaled to unit l2 norm (zero vectors stay zero).
  SemanticSpace l2_normalized() const {
    RowMatrix v = vectors_;
    for (Index i = 0; i < v.rows(); ++i) {
      const double n = v.row(i).norm();
      if (n > 0.0) v.row(i) /= n;
    }
    return SemanticSpace(tokens_, std::move(v), frequencies_);
  }

  /// Copy with every vector replaced by u V (row vector times warp), see warp_rows.
  SemanticSpace warped(const Matrix& warp) const {
    if (warp.rows() != dim() || warp.cols() != dim()) detail::shape_error("warp must be d x d");
    RowMatrix v = warp_rows(vectors_, warp);
    return SemanticSpace(tokens_, std::move(v), frequencies_);
  }

 private:
  std::vector<std::string> tokens_;
  RowMatrix vectors_;
  std::optional<std::vector<std::uint64_t>> frequencies_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Source (labelled) and target (zero-shot) class subsets of a vocabulary,
/// stored as entry indices in declaration order.
struct LabelSets {
  std::vector<std::size_t> source;
  std::vector<std::size_t> target;

  void validate(const SemanticSpace& space) const {
    std::unordered_set<std::size_t> seen;
    for (auto i : source) {
      if (i >= space.size()) throw DataError("source label index out of range");
      if (!seen.insert(i).second) throw DataError("duplicate source label '" + space.token(i) + "'");
    }
    std::unordered_set<std::size_t> tseen;
    for (auto i : target) {
      if (i >= space.size()) throw DataError("target label index out of range");
      if (seen.count(i)) throw DataError("label '" + space.token(i) + "' is both source and target");
      if (!tseen.insert(i).second) throw DataError("duplicate target label '" + space.token(i) + "'");
    }
  }

  static LabelSets from_tokens(const SemanticSpace& space, std::span<const std::string> source_tokens,
                               std::span<const std::string> target_tokens) {
    LabelSets ls;
    for (const auto& t : source_tokens) ls.source.push_back(space.require(t));
    for (const auto& t : target_tokens) ls.target.push_back(space.require(t));
    ls.validate(space);
    return ls;
  }
};

/// Which prototypes a query is ranked against.
enum class LabelFilter { supervised, zero_shot, open_set };

inline std::string_view to_string(LabelFilter f) {
  switch (f) {
    case LabelFilter::supervised: return "supervised";
    case LabelFilter::zero_shot: return "zero_shot";
    case LabelFilter::open_set: return "open_set";
  }
  return "?";
}

inline LabelFilter parse_label_filter(std::string_view s) {
  if (s == "supervised" || s == "source") return LabelFilter::supervised;
  if (s == "zero_shot" || s == "target") return LabelFilter::zero_shot;
  if (s == "open_set" || s == "open" || s == "all") return LabelFilter::open_set;
  throw UsageError("unknown label filter '" + std::string(s) + "'");
}

/// Candidate entry indices for a filter, ascending. open_set is every entry.
inline std::vector<std::size_t> candidate_indices(const SemanticSpace& space, const LabelSets& labels,
                                                  LabelFilter filter) {
  std::vector<std::size_t> out;
  switch (filter) {
    case LabelFilter::supervised: out = labels.source; break;
    case LabelFilter::zero_shot: out = labels.target; break;
    case LabelFilter::open_set:
      out.resize(space.size());
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
      return out;
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct Neighbor {
  std::size_t index = 0;
  double distance = 0.0;  // squared Euclidean

  friend bool operator<(const Neighbor& a, const Neighbor& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
  }
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

namespace detail {

inline constexpr std::size_t kScanChunk = 4096;

template <typename Query, typename IndexAt>
std::vector<Neighbor> chunked_topk(const RowMatrix& vectors, const Eigen::MatrixBase<Query>& query,
                                   std::size_t count, std::size_t k, IndexAt&& index_at) {
  const std::size_t keep = std::min(k, count);
  ChunkPlan plan{count, kScanChunk};
  std::vector<std::vector<Neighbor>> partial(plan.num_chunks());
  for_each_chunk(plan, [&](std::size_t c, std::size_t b, std::size_t e) {
    std::vector<Neighbor> local;
    local.reserve(e - b);
    for (std::size_t j = b; j < e; ++j) {
      const std::size_t idx = index_at(j);
      local.push_back({idx, squared_l2(vectors.row(static_cast<Index>(idx)), query)});
    }
    const std::size_t m = std::min(keep, local.size());
    std::partial_sort(local.begin(), local.begin() + static_cast<std::ptrdiff_t>(m), local.end());
    local.resize(m);
    partial[c] = std::move(local);
  });
  std::vector<Neighbor> merged;
  for (auto& p : partial) merged.insert(merged.end(), p.begin(), p.end());
  std::partial_sort(merged.begin(), merged.begin() + static_cast<std::ptrdiff_t>(keep), merged.end());
  merged.resize(keep);
  return merged;
}

}  // namespace detail

/// The k entries of `candidates` closest to `query`, ascending by squared
/// distance, ties to the lower entry index. Exact flat scan, chunked across
/// threads.
template <typename Query>
std::vector<Neighbor> nearest(const SemanticSpace& space, const Eigen::MatrixBase<Query>& query, std::size_t k,
                              std::span<const std::size_t> candidates) {
  if (query.size() != space.dim())
    detail::shape_error("query has " + std::to_string(query.size()) + " dims, space has " +
                        std::to_string(space.dim()));
  if (k < 1) throw std::invalid_argument("nearest: k must be >= 1");
  if (candidates.empty()) throw DataError("nearest: empty candidate set");
  for (auto c : candidates)
    if (c >= space.size()) throw DataError("nearest: candidate index out of range");
  return detail::chunked_topk(space.vectors(), query, candidates.size(), k,
                              [&](std::size_t j) { return candidates[j]; });
}

/// Scan the whole vocabulary.
template <typename Query>
std::vector<Neighbor> nearest(const SemanticSpace& space, const Eigen::MatrixBase<Query>& query, std::size_t k) {
  if (query.size() != space.dim()) detail::shape_error("query dimension does not match space");
  if (k < 1) throw std::invalid_argument("nearest: k must be >= 1");
  if (space.empty()) throw DataError("nearest: empty vocabulary");
  return detail::chunked_topk(space.vectors(), query, space.size(), k, [](std::size_t j) { return j; });
}

template <typename Query>
std::vector<Neighbor> nearest(const SemanticSpace& space, const Eigen::MatrixBase<Query>& query, std::size_t k,
                              const LabelSets& labels, LabelFilter filter) {
  if (filter == LabelFilter::open_set) return nearest(space, query, k);
  const auto cand = candidate_indices(space, labels, filter);
  return nearest(space, query, k, std::span<const std::size_t>(cand));
}

/// Keeps entries with min_freq <= frequency <= max_freq, in original order.
inline SemanticSpace prune_by_frequency(const SemanticSpace& space, std::uint64_t min_freq,
                                        std::uint64_t max_freq = std::numeric_limits<std::uint64_t>::max()) {
  const auto& freq = space.frequencies();
  std::vector<std::string> tokens;
  std::vector<std::uint64_t> kept_freq;
  std::vector<Index> rows;
  for (std::size_t i = 0; i < space.size(); ++i) {
    if (freq[i] < min_freq || freq[i] > max_freq) continue;
    tokens.push_back(space.token(i));
    kept_freq.push_back(freq[i]);
    rows.push_back(static_cast<Index>(i));
  }
  RowMatrix vectors(static_cast<Index>(rows.size()), space.dim());
  for (std::size_t r = 0; r < rows.size(); ++r) vectors.row(static_cast<Index>(r)) = space.vectors().row(rows[r]);
  return SemanticSpace(std::move(tokens), std::move(vectors), std::move(kept_freq));
}

/// Openness of a recognition task with `num_source` trained classes inside a
/// vocabulary of `vocab_size` labels: 1 - sqrt(2 |W_s| / |W|).
inline double openness(std::size_t num_source, std::size_t vocab_size) {
  if (num_source == 0 || vocab_size < 2 * num_source)
    throw std::domain_error("openness requires vocab_size >= 2 * num_source > 0");
  return 1.0 - std::sqrt(2.0 * static_cast<double>(num_source) / static_cast<double>(vocab_size));
}

}  // namespace ssvoc

#endif  // SSVOC_VOCABULARY_HPP
