#ifndef SSVOC_EXPERIMENT_HPP
#define SSVOC_EXPERIMENT_HPP

// Experiment pipeline: load or generate data, standardize with training
// statistics, fit, predict, evaluate; repeated with seeds seed + r and
// aggregated. Reports are emitted as JSON and are byte-reproducible for a
// given configuration.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "ssvoc/config.hpp"
#include "ssvoc/dataset_io.hpp"
#include "ssvoc/error.hpp"
#include "ssvoc/evaluation.hpp"
#include "ssvoc/fit.hpp"
#include "ssvoc/model_io.hpp"
#include "ssvoc/recognition.hpp"
#include "ssvoc/standardize.hpp"
#include "ssvoc/synthetic.hpp"
#include "ssvoc/vocabulary.hpp"
#include "ssvoc/word_vectors_io.hpp"

namespace ssvoc {

struct ExperimentData {
  SemanticSpace space;
  LabelSets labels;
  LabeledDataset train;
  LabeledFeatures test_source;  // held-out instances of source classes
  LabeledFeatures test_target;  // instances of target classes
  SynonymTable synonyms;
};

/// Keeps at most `per_class` rows per class, chosen by a seeded shuffle and
/// returned in their original order. per_class == 0 keeps everything.
inline LabeledDataset subsample_per_class(const LabeledDataset& data, std::size_t per_class, std::uint64_t seed) {
  if (per_class == 0) return data;
  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < data.size(); ++i) by_class[data.labels[i]].push_back(i);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> keep;
  for (auto& [z, rows] : by_class) {
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(std::min(rows.size(), per_class));
    keep.insert(keep.end(), rows.begin(), rows.end());
  }
  std::sort(keep.begin(), keep.end());
  LabeledDataset out;
  out.features.resize(static_cast<Index>(keep.size()), data.features.cols());
  for (std::size_t r = 0; r < keep.size(); ++r) {
    out.features.row(static_cast<Index>(r)) = data.features.row(static_cast<Index>(keep[r]));
    out.labels.push_back(data.labels[keep[r]]);
  }
  return out;
}

namespace detail {

inline LabeledFeatures select_rows(const LabeledFeatures& lf, const std::vector<std::size_t>& rows) {
  LabeledFeatures out;
  out.features.resize(static_cast<Index>(rows.size()), lf.features.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.features.row(static_cast<Index>(r)) = lf.features.row(static_cast<Index>(rows[r]));
    out.labels.push_back(lf.labels[rows[r]]);
  }
  return out;
}

inline ExperimentData load_file_data(const ExperimentConfig& cfg) {
  const auto& paths = cfg.data;
  ExperimentData out;
  out.space = load_word_vectors(paths.word_vectors,
                                paths.word_vectors_format.value_or(guess_vector_format(paths.word_vectors)));
  if (!paths.frequencies.empty()) {
    out.space = attach_frequencies(out.space, paths.frequencies);
    out.space = prune_by_frequency(out.space, paths.min_frequency, paths.max_frequency);
  }
  if (paths.normalize_vectors) out.space = out.space.l2_normalized();
  out.labels = LabelSets::from_tokens(out.space, load_token_list(paths.source_classes),
                                      load_token_list(paths.target_classes));
  if (!paths.synonyms.empty()) out.synonyms = SynonymTable::load(paths.synonyms);
  out.train = load_dataset(paths.train_features, paths.train_labels, out.space, out.labels);

  const auto test = load_labeled_features(paths.test_features, paths.test_labels);
  if (test.features.cols() != out.train.features.cols())
    throw DataError("test features have " + std::to_string(test.features.cols()) + " columns, training has " +
                    std::to_string(out.train.features.cols()));
  std::unordered_map<std::string, bool> is_source;
  for (auto e : out.labels.source) is_source.emplace(out.space.token(e), true);
  for (auto e : out.labels.target) is_source.emplace(out.space.token(e), false);
  std::vector<std::size_t> src_rows, tgt_rows;
  for (std::size_t i = 0; i < test.size(); ++i) {
    auto it = is_source.find(test.labels[i]);
    if (it == is_source.end())
      throw DataError("test label '" + test.labels[i] + "' on row " + std::to_string(i) +
                      " is neither a source nor a target class");
    (it->second ? src_rows : tgt_rows).push_back(i);
  }
  out.test_source = select_rows(test, src_rows);
  out.test_target = select_rows(test, tgt_rows);
  return out;
}

}  // namespace detail

/// Data for one repeat. Synthetic data is regenerated from `seed`; file data
/// is loaded once by the caller and only subsampled here.
inline ExperimentData synthetic_experiment_data(const ExperimentConfig& cfg, std::uint64_t seed) {
  SyntheticSpec spec = cfg.synthetic;
  spec.seed = seed;
  auto bench = generate_synthetic(spec);
  ExperimentData out;
  out.space = std::move(bench.space);
  out.labels = std::move(bench.labels);
  out.train = std::move(bench.train);
  out.test_source = std::move(bench.source_test);
  out.test_target = std::move(bench.target_test);
  return out;
}

inline ExperimentData load_experiment_data(const ExperimentConfig& cfg) {
  if (cfg.source == DataSource::synthetic) return synthetic_experiment_data(cfg, cfg.seed);
  return detail::load_file_data(cfg);
}

struct RunResult {
  std::uint64_t seed = 0;
  std::map<std::string, EvalReport> splits;  // "source" and/or "target"
  TrainedModel model;
  StandardizationStats stats;
};

/// Fits one model on `data` and evaluates it under cfg.task. Open-set runs
/// report source and target test instances separately.
inline RunResult run_once(const ExperimentConfig& cfg, const ExperimentData& data, std::uint64_t seed) {
  RunResult run;
  run.seed = seed;
  LabeledDataset train = subsample_per_class(data.train, cfg.per_class, seed);
  if (cfg.standardize) {
    run.stats = fit_standardization(train.features);
    train.features = run.stats.apply(train.features);
  }
  SolverConfig solver = cfg.solver;
  solver.seed = seed;
  run.model = fit(train, data.space, data.labels, cfg.effective_hyperparams(), solver, cfg.fine_tune(),
                  cfg.effective_pool());

  const PrototypeIndex index(run.model, data.space, data.labels);
  const std::size_t kmax = *std::max_element(cfg.topk.begin(), cfg.topk.end());
  auto score = [&](const LabeledFeatures& split, LabelFilter filter, const std::vector<std::size_t>& eval_entries) {
    if (split.size() == 0) throw DataError("no test instances for the " + std::string(to_string(filter)) + " task");
    const RowMatrix features = run.stats.apply(split.features);
    const PredictionMode mode =
        cfg.rocchio ? PredictionMode::rocchio(cfg.rocchio_k, filter) : PredictionMode::nn(filter);
    std::vector<std::vector<std::string>> ranked;
    for (const auto& entries : predict_batch_entries(index, features, kmax, mode)) {
      auto& tokens = ranked.emplace_back();
      for (auto e : entries) tokens.push_back(data.space.token(e));
    }
    std::vector<std::string> eval_labels;
    for (auto e : eval_entries) eval_labels.push_back(data.space.token(e));
    return evaluate(ranked, split.labels, data.synonyms, eval_labels, cfg.topk);
  };

  switch (cfg.task) {
    case LabelFilter::supervised:
      run.splits["source"] = score(data.test_source, LabelFilter::supervised, data.labels.source);
      break;
    case LabelFilter::zero_shot:
      run.splits["target"] = score(data.test_target, LabelFilter::zero_shot, data.labels.target);
      break;
    case LabelFilter::open_set:
      run.splits["source"] = score(data.test_source, LabelFilter::open_set, data.labels.source);
      run.splits["target"] = score(data.test_target, LabelFilter::open_set, data.labels.target);
      break;
  }
  return run;
}

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single run
};

inline MetricSummary summarize(const std::vector<double>& values) {
  MetricSummary s;
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

struct SplitSummary {
  MetricSummary mean_class_accuracy;
  std::map<std::size_t, MetricSummary> topk_hits;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<RunResult> runs;
  std::map<std::string, SplitSummary> aggregate;

  /// Data of the last repeat, kept for model persistence and dumps.
  ExperimentData last_data;
};

inline std::map<std::string, SplitSummary> aggregate_runs(const std::vector<RunResult>& runs) {
  std::map<std::string, SplitSummary> out;
  if (runs.empty()) return out;
  for (const auto& [name, first] : runs.front().splits) {
    std::vector<double> acc;
    for (const auto& r : runs) acc.push_back(r.splits.at(name).mean_class_accuracy);
    auto& s = out[name];
    s.mean_class_accuracy = summarize(acc);
    for (const auto& [k, _] : first.topk_hits) {
      std::vector<double> hits;
      for (const auto& r : runs) hits.push_back(r.splits.at(name).topk_hits.at(k));
      s.topk_hits[k] = summarize(hits);
    }
  }
  return out;
}

/// Writes "n d" then one line per instance: label token and the d embedded
/// coordinates.
inline void emit_embedding_dump(const TrainedModel& model, const LabeledFeatures& data,
                                const std::filesystem::path& path, const StandardizationStats& stats = {}) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  const RowMatrix embedded =
      data.size() ? embed_rows(model, stats.apply(data.features)) : RowMatrix(0, model.semantic_dim());
  out << data.size() << ' ' << model.semantic_dim() << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << data.labels[i];
    for (Index c = 0; c < embedded.cols(); ++c) out << ' ' << detail::format_double(embedded(static_cast<Index>(i), c));
    out << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

/// Reads a dump back; features hold the embedded coordinates.
inline LabeledFeatures load_embedding_dump(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embedding dump " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": missing header");
  const auto header = detail::parse_header(line, path);
  LabeledFeatures out;
  out.features.resize(static_cast<Index>(header.count), static_cast<Index>(header.dim));
  for (std::size_t i = 0; i < header.count; ++i) {
    if (!std::getline(in, line)) throw DataError(path.string() + ": expected " + std::to_string(header.count) + " rows");
    const auto fields = detail::split_ws(line);
    if (fields.size() != header.dim + 1)
      throw DataError(path.string() + ":" + std::to_string(i + 2) + ": expected a label and " +
                      std::to_string(header.dim) + " values");
    out.labels.emplace_back(fields[0]);
    for (std::size_t c = 0; c < header.dim; ++c) {
      double v;
      if (!detail::parse_number(fields[c + 1], v))
        throw DataError(path.string() + ":" + std::to_string(i + 2) + ": bad number");
      out.features(static_cast<Index>(i), static_cast<Index>(c)) = v;
    }
  }
  return out;
}

/// Runs cfg.repeats repeats with seeds cfg.seed + r, then persists the last
/// model and embedding dump when the config names output paths.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentResult result;
  result.config = cfg;
  std::optional<ExperimentData> files;
  if (cfg.source == DataSource::files) files = detail::load_file_data(cfg);
  for (int r = 0; r < cfg.repeats; ++r) {
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(r);
    if (files) {
      result.runs.push_back(run_once(cfg, *files, seed));
      continue;
    }
    ExperimentData data = synthetic_experiment_data(cfg, seed);
    result.runs.push_back(run_once(cfg, data, seed));
    if (r + 1 == cfg.repeats) result.last_data = std::move(data);
  }
  if (files) result.last_data = std::move(*files);
  result.aggregate = aggregate_runs(result.runs);

  const auto& last = result.runs.back();
  if (!cfg.model_out.empty())
    save_model(last.model, result.last_data.space, result.last_data.labels, last.stats, cfg.model_out);
  if (!cfg.embedding_dump.empty()) {
    LabeledFeatures all = result.last_data.test_source;
    const auto& t = result.last_data.test_target;
    RowMatrix stacked(all.features.rows() + t.features.rows(), t.features.cols());
    stacked << all.features, t.features;
    all.features = std::move(stacked);
    all.labels.insert(all.labels.end(), t.labels.begin(), t.labels.end());
    emit_embedding_dump(last.model, all, cfg.embedding_dump, last.stats);
  }
  return result;
}

inline nlohmann::json to_json(const MetricSummary& m) { return {{"mean", m.mean}, {"std", m.std}}; }

inline nlohmann::json to_json(const ExperimentResult& r) {
  nlohmann::json j;
  const auto& c = r.config;
  j["config"] = {{"task", std::string(to_string(c.task))},
                 {"variant", std::string(to_string(c.variant))},
                 {"repeats", c.repeats},
                 {"seed", c.seed},
                 {"source", c.source == DataSource::synthetic ? "synthetic" : "files"},
                 {"prediction", c.rocchio ? "knn_rocchio" : "nn"}};
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& run : r.runs) {
    nlohmann::json rj;
    rj["seed"] = run.seed;
    nlohmann::json passes = nlohmann::json::array();
    for (const auto& p : run.model.passes)
      passes.push_back({{"phase", p.phase},
                        {"iterations", p.iterations},
                        {"status", std::string(to_string(p.status))},
                        {"objective", p.objective},
                        {"grad_norm", p.grad_norm}});
    rj["passes"] = passes;
    for (const auto& [name, report] : run.splits) rj["splits"][name] = to_json(report);
    runs.push_back(rj);
  }
  j["runs"] = runs;
  for (const auto& [name, s] : r.aggregate) {
    auto& a = j["aggregate"][name];
    a["mean_class_accuracy"] = to_json(s.mean_class_accuracy);
    for (const auto& [k, m] : s.topk_hits) a["topk_hits"][std::to_string(k)] = to_json(m);
  }
  return j;
}

struct AblationRow {
  Variant variant;
  std::map<std::string, SplitSummary> aggregate;
};

/// Runs every variant under the same data, seeds and task.
inline std::vector<AblationRow> run_ablation(ExperimentConfig cfg) {
  std::vector<AblationRow> rows;
  cfg.model_out.clear();
  cfg.embedding_dump.clear();
  for (auto v : {Variant::svr_only, Variant::closed, Variant::w, Variant::full}) {
    cfg.variant = v;
    rows.push_back({v, run_experiment(cfg).aggregate});
  }
  return rows;
}

inline nlohmann::json to_json(const std::vector<AblationRow>& rows) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& row : rows) {
    nlohmann::json rj;
    rj["variant"] = std::string(to_string(row.variant));
    for (const auto& [name, s] : row.aggregate) {
      rj["splits"][name]["mean_class_accuracy"] = to_json(s.mean_class_accuracy);
      for (const auto& [k, m] : s.topk_hits) rj["splits"][name]["topk_hits"][std::to_string(k)] = to_json(m);
    }
    j.push_back(rj);
  }
  return j;
}

}  // namespace ssvoc

#endif  // SSVOC_EXPERIMENT_HPP
