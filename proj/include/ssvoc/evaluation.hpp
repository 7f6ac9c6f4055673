#ifndef SSVOC_EVALUATION_HPP
#define SSVOC_EVALUATION_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "ssvoc/error.hpp"
#include "ssvoc/vocabulary.hpp"
#include "ssvoc/word_vectors_io.hpp"

namespace ssvoc {

/// Accepted surface forms per canonical label ("pig" -> {"pig", "pigs"}).
/// Labels without an entry accept only themselves.
class SynonymTable {
 public:
  void add(const std::string& canonical, const std::vector<std::string>& alternates) {
    auto& set = table_[normalize_token(canonical)];
    set.insert(normalize_token(canonical));
    for (const auto& a : alternates) set.insert(normalize_token(a));
  }

  bool accepts(const std::string& truth, const std::string& predicted) const {
    if (predicted == truth) return true;
    auto it = table_.find(truth);
    return it != table_.end() && it->second.count(predicted) > 0;
  }

  std::size_t size() const { return table_.size(); }

  /// "<canonical> <alt1> <alt2> ..." per line.
  static SynonymTable load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open synonym file " + path.string());
    SynonymTable t;
    std::string line;
    while (std::getline(in, line)) {
      auto fields = detail::split_ws(line);
      if (fields.empty() || fields[0].front() == '#') continue;
      std::vector<std::string> alts(fields.begin() + 1, fields.end());
      t.add(std::string(fields[0]), alts);
    }
    return t;
  }

 private:
  std::unordered_map<std::string, std::set<std::string>> table_;
};

struct EvalReport {
  std::vector<std::string> labels;                // evaluated label set, row/column order
  std::vector<std::vector<std::size_t>> confusion;  // truth row x predicted column; empty if too large
  double mean_class_accuracy = 0.0;
  std::map<std::size_t, double> topk_hits;        // k -> instance hit rate
  std::vector<double> per_class_accuracy;         // NaN for classes without test instances
};

inline constexpr std::size_t kMaxConfusionLabels = 1000;

inline const std::vector<std::size_t>& default_topk() {
  static const std::vector<std::size_t> ks{1, 2, 3, 5, 10};
  return ks;
}

/// Scores ranked predictions against ground truth. A prediction is correct
/// when the truth's synonym set accepts it; correct predictions land on the
/// diagonal. Predictions outside the label set count against the truth row
/// but occupy no column. The confusion matrix is only kept for label sets of
/// at most kMaxConfusionLabels entries. The mean class accuracy averages the row-normalized
/// diagonal over classes that have at least one instance.
inline EvalReport evaluate(const std::vector<std::vector<std::string>>& ranked_predictions,
                           const std::vector<std::string>& ground_truth, const SynonymTable& synonyms,
                           const std::vector<std::string>& eval_labels,
                           const std::vector<std::size_t>& ks = default_topk()) {
  if (ranked_predictions.size() != ground_truth.size())
    throw DataError("evaluate: " + std::to_string(ranked_predictions.size()) + " predictions vs " +
                    std::to_string(ground_truth.size()) + " ground-truth labels");
  EvalReport rep;
  std::unordered_map<std::string, std::size_t> col;
  for (const auto& l : eval_labels) {
    auto norm = normalize_token(l);
    if (col.emplace(norm, rep.labels.size()).second) rep.labels.push_back(norm);
  }
  const std::size_t L = rep.labels.size();
  const bool keep_confusion = L <= kMaxConfusionLabels;
  if (keep_confusion) rep.confusion.assign(L, std::vector<std::size_t>(L, 0));
  std::vector<std::size_t> support(L, 0), correct(L, 0);
  std::map<std::size_t, std::size_t> hits;
  for (auto k : ks) {
    if (k < 1) throw UsageError("evaluate: top-k values must be >= 1");
    hits[k] = 0;
  }

  for (std::size_t i = 0; i < ground_truth.size(); ++i) {
    const auto truth = normalize_token(ground_truth[i]);
    auto row_it = col.find(truth);
    if (row_it == col.end()) throw DataError("evaluate: ground-truth label '" + truth + "' is not in the label set");
    const std::size_t row = row_it->second;
    ++support[row];
    const auto& ranked = ranked_predictions[i];
    std::size_t first_hit = ranked.size();
    for (std::size_t r = 0; r < ranked.size(); ++r)
      if (synonyms.accepts(truth, normalize_token(ranked[r]))) {
        first_hit = r;
        break;
      }
    for (auto& [k, h] : hits)
      if (first_hit < k) ++h;
    if (ranked.empty()) continue;
    if (first_hit == 0) {
      ++correct[row];
      if (keep_confusion) ++rep.confusion[row][row];
    } else if (auto c = col.find(normalize_token(ranked.front())); keep_confusion && c != col.end()) {
      ++rep.confusion[row][c->second];
    }
  }

  const double n = static_cast<double>(ground_truth.size());
  for (auto& [k, h] : hits) rep.topk_hits[k] = n > 0 ? static_cast<double>(h) / n : 0.0;
  rep.per_class_accuracy.assign(L, std::nan(""));
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < L; ++c) {
    if (support[c] == 0) continue;
    rep.per_class_accuracy[c] = static_cast<double>(correct[c]) / static_cast<double>(support[c]);
    sum += rep.per_class_accuracy[c];
    ++present;
  }
  rep.mean_class_accuracy = present ? sum / static_cast<double>(present) : 0.0;
  return rep;
}

/// Top-1 only convenience overload.
inline EvalReport evaluate(const std::vector<std::string>& predictions, const std::vector<std::string>& ground_truth,
                           const SynonymTable& synonyms, const std::vector<std::string>& eval_labels) {
  std::vector<std::vector<std::string>> ranked;
  ranked.reserve(predictions.size());
  for (const auto& p : predictions) ranked.push_back({p});
  return evaluate(ranked, ground_truth, synonyms, eval_labels, {1});
}

/// JSON with the report fields; "confusion" is omitted for label sets larger
/// than kMaxConfusionLabels.
inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  if (r.labels.size() <= kMaxConfusionLabels) j["confusion"] = r.confusion;
  j["mean_class_accuracy"] = r.mean_class_accuracy;
  nlohmann::json topk = nlohmann::json::object();
  for (const auto& [k, v] : r.topk_hits) topk[std::to_string(k)] = v;
  j["topk_hits"] = topk;
  nlohmann::json per = nlohmann::json::array();
  for (double v : r.per_class_accuracy) per.push_back(std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v));
  j["per_class_accuracy"] = per;
  return j;
}

}  // namespace ssvoc

#endif  // SSVOC_EVALUATION_HPP
