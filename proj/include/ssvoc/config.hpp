#ifndef SSVOC_CONFIG_HPP
#define SSVOC_CONFIG_HPP

// Experiment configuration in INI form. Sections and keys:
//
//   [data]        train_features, train_labels, test_features, test_labels,
//                 word_vectors, word_vectors_format (auto|text|binary),
//                 frequencies, synonyms, source_classes, target_classes,
//                 min_frequency, max_frequency, normalize_vectors
//   [synthetic]   p, d, num_source, num_target, samples_per_class,
//                 test_per_class, num_distractors, noise_sigma
//   [model]       lambda, mu, alpha, C, epsilon, A_V, B_S,
//                 margin_pool (auto|target|open|none)
//   [solver]      method (lbfgs|sgd|hybrid), max_iters, grad_tol, history_size,
//                 sgd_step, sgd_batch, hybrid_growth, v_passes, pass_tol
//   [experiment]  source (synthetic|files), task, variant, repeats, seed,
//                 per_class, standardize, prediction (nn|knn_rocchio),
//                 rocchio_k, topk, model_out, embedding_dump
//
// Relative paths resolve against the config file's directory. Class lists are
// files with one token per line. Comments start with ';'.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "ssvoc/error.hpp"
#include "ssvoc/lbfgs.hpp"
#include "ssvoc/objective.hpp"
#include "ssvoc/synthetic.hpp"
#include "ssvoc/vocabulary.hpp"
#include "ssvoc/word_vectors_io.hpp"

namespace ssvoc {

enum class Variant { svr_only, closed, w, full };

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::svr_only: return "svr_only";
    case Variant::closed: return "closed";
    case Variant::w: return "w";
    case Variant::full: return "full";
  }
  return "?";
}

inline Variant parse_variant(std::string_view s) {
  if (s == "svr_only") return Variant::svr_only;
  if (s == "closed") return Variant::closed;
  if (s == "w") return Variant::w;
  if (s == "full") return Variant::full;
  throw UsageError("unknown variant '" + std::string(s) + "' (expected svr_only, closed, w or full)");
}

enum class DataSource { synthetic, files };

struct DataPaths {
  std::filesystem::path train_features, train_labels, test_features, test_labels;
  std::filesystem::path word_vectors, frequencies, synonyms, source_classes, target_classes;
  std::optional<VectorFormat> word_vectors_format;  // unset: guess from extension
  std::uint64_t min_frequency = 0;
  std::uint64_t max_frequency = std::numeric_limits<std::uint64_t>::max();
  bool normalize_vectors = false;  // scale every word vector to unit l2 norm
};

struct ExperimentConfig {
  DataSource source = DataSource::synthetic;
  DataPaths data;
  SyntheticSpec synthetic;
  Hyperparams hyperparams;
  std::optional<MarginPool> margin_pool;  // unset: target, or open for the open-set task
  SolverConfig solver;
  LabelFilter task = LabelFilter::zero_shot;
  Variant variant = Variant::full;
  int repeats = 10;
  std::uint64_t seed = 0;
  std::size_t per_class = 0;  // 0 keeps every training instance
  bool standardize = true;
  bool rocchio = false;
  std::size_t rocchio_k = 1;
  std::vector<std::size_t> topk{1, 2, 3, 5, 10};
  std::filesystem::path model_out, embedding_dump;

  void validate() const {
    hyperparams.validate();
    solver.validate();
    synthetic.validate();
    if (repeats < 1) throw UsageError("repeats must be >= 1");
    if (rocchio && rocchio_k < 1) throw UsageError("rocchio_k must be >= 1");
    if (topk.empty()) throw UsageError("topk must list at least one k");
    for (auto k : topk)
      if (k < 1) throw UsageError("topk values must be >= 1");
    if (source == DataSource::files) {
      for (const auto* p : {&data.train_features, &data.train_labels, &data.test_features, &data.test_labels,
                            &data.word_vectors, &data.source_classes, &data.target_classes})
        if (p->empty())
          throw UsageError("source = files needs train/test features and labels, word_vectors, "
                           "source_classes and target_classes");
    }
  }

  /// Margin pool and fine-tuning switch implied by the variant.
  MarginPool effective_pool() const {
    if (variant == Variant::closed) return MarginPool::none;
    if (margin_pool) return *margin_pool;
    return task == LabelFilter::open_set ? MarginPool::open : MarginPool::target;
  }
  Hyperparams effective_hyperparams() const {
    Hyperparams hp = hyperparams;
    if (variant == Variant::svr_only) hp.alpha = 1.0;
    return hp;
  }
  bool fine_tune() const { return variant == Variant::full; }
};

namespace detail {

template <typename T>
T parse_value(const std::string& section, const std::string& key, const std::string& text) {
  if constexpr (std::is_unsigned_v<T>)
    if (text.find('-') != std::string::npos)
      throw UsageError("config [" + section + "] " + key + ": expected a non-negative integer, got '" + text + "'");
  std::istringstream in(text);
  T v{};
  in >> v;
  std::string rest;
  if (!in || (in >> rest))
    throw UsageError("config [" + section + "] " + key + ": cannot parse '" + text + "'");
  return v;
}

inline bool parse_bool(const std::string& section, const std::string& key, const std::string& text) {
  const auto t = normalize_token(text);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw UsageError("config [" + section + "] " + key + ": expected a boolean, got '" + text + "'");
}

inline std::vector<std::size_t> parse_size_list(const std::string& section, const std::string& key,
                                                const std::string& text) {
  std::vector<std::size_t> out;
  std::string field;
  std::istringstream in(text);
  while (std::getline(in, field, ','))
    if (field.find_first_not_of(" \t") != std::string::npos) out.push_back(parse_value<std::size_t>(section, key, field));
  return out;
}

}  // namespace detail

/// Parses INI text. `base` anchors relative paths. Unknown sections or keys
/// are rejected so typos surface immediately.
inline ExperimentConfig parse_config(std::istream& in, const std::filesystem::path& base = {}) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw UsageError(std::string("config: ") + e.what());
  }

  ExperimentConfig cfg;
  auto path = [&](const std::string& v) {
    std::filesystem::path p(v);
    return p.is_absolute() || base.empty() ? p : base / p;
  };
  using Setter = std::function<void(const std::string& section, const std::string& key, const std::string& value)>;
  auto num = [](auto& field) -> Setter {
    return [&field](const std::string& s, const std::string& k, const std::string& v) {
      field = detail::parse_value<std::remove_reference_t<decltype(field)>>(s, k, v);
    };
  };
  auto file = [&](std::filesystem::path& field) -> Setter {
    return [&field, &path](const std::string&, const std::string&, const std::string& v) { field = path(v); };
  };

  std::map<std::string, std::map<std::string, Setter>> schema;
  auto& data = schema["data"];
  data["train_features"] = file(cfg.data.train_features);
  data["train_labels"] = file(cfg.data.train_labels);
  data["test_features"] = file(cfg.data.test_features);
  data["test_labels"] = file(cfg.data.test_labels);
  data["word_vectors"] = file(cfg.data.word_vectors);
  data["frequencies"] = file(cfg.data.frequencies);
  data["synonyms"] = file(cfg.data.synonyms);
  data["source_classes"] = file(cfg.data.source_classes);
  data["target_classes"] = file(cfg.data.target_classes);
  data["word_vectors_format"] = [&](const std::string&, const std::string&, const std::string& v) {
    if (v != "auto") cfg.data.word_vectors_format = parse_vector_format(v);
  };
  data["min_frequency"] = num(cfg.data.min_frequency);
  data["max_frequency"] = num(cfg.data.max_frequency);
  data["normalize_vectors"] = [&](const std::string& s, const std::string& k, const std::string& v) {
    cfg.data.normalize_vectors = detail::parse_bool(s, k, v);
  };

  auto& syn = schema["synthetic"];
  syn["p"] = num(cfg.synthetic.p);
  syn["d"] = num(cfg.synthetic.d);
  syn["num_source"] = num(cfg.synthetic.num_source);
  syn["num_target"] = num(cfg.synthetic.num_target);
  syn["samples_per_class"] = num(cfg.synthetic.samples_per_class);
  syn["test_per_class"] = num(cfg.synthetic.test_per_class);
  syn["num_distractors"] = num(cfg.synthetic.num_distractors);
  syn["noise_sigma"] = num(cfg.synthetic.noise_sigma);

  auto& model = schema["model"];
  model["lambda"] = num(cfg.hyperparams.lambda);
  model["mu"] = num(cfg.hyperparams.mu);
  model["alpha"] = num(cfg.hyperparams.alpha);
  model["C"] = num(cfg.hyperparams.C);
  model["epsilon"] = num(cfg.hyperparams.epsilon);
  model["A_V"] = num(cfg.hyperparams.A_V);
  model["B_S"] = num(cfg.hyperparams.B_S);
  model["margin_pool"] = [&](const std::string&, const std::string&, const std::string& v) {
    if (v == "auto")
      cfg.margin_pool.reset();
    else
      cfg.margin_pool = parse_margin_pool(v);
  };

  auto& solver = schema["solver"];
  solver["method"] = [&](const std::string&, const std::string&, const std::string& v) {
    cfg.solver.method = parse_solver_method(v);
  };
  solver["max_iters"] = num(cfg.solver.max_iters);
  solver["grad_tol"] = num(cfg.solver.grad_tol);
  solver["history_size"] = num(cfg.solver.history_size);
  solver["sgd_step"] = num(cfg.solver.sgd_step);
  solver["sgd_batch"] = num(cfg.solver.sgd_batch);
  solver["hybrid_growth"] = num(cfg.solver.hybrid_growth);
  solver["v_passes"] = num(cfg.solver.v_passes);
  solver["pass_tol"] = num(cfg.solver.pass_tol);

  auto& exp = schema["experiment"];
  exp["source"] = [&](const std::string& s, const std::string& k, const std::string& v) {
    if (v == "synthetic")
      cfg.source = DataSource::synthetic;
    else if (v == "files")
      cfg.source = DataSource::files;
    else
      throw UsageError("config [" + s + "] " + k + ": expected synthetic or files");
  };
  exp["task"] = [&](const std::string&, const std::string&, const std::string& v) { cfg.task = parse_label_filter(v); };
  exp["variant"] = [&](const std::string&, const std::string&, const std::string& v) { cfg.variant = parse_variant(v); };
  exp["repeats"] = num(cfg.repeats);
  exp["seed"] = num(cfg.seed);
  exp["per_class"] = num(cfg.per_class);
  exp["standardize"] = [&](const std::string& s, const std::string& k, const std::string& v) {
    cfg.standardize = detail::parse_bool(s, k, v);
  };
  exp["prediction"] = [&](const std::string& s, const std::string& k, const std::string& v) {
    if (v == "nn")
      cfg.rocchio = false;
    else if (v == "knn_rocchio")
      cfg.rocchio = true;
    else
      throw UsageError("config [" + s + "] " + k + ": expected nn or knn_rocchio");
  };
  exp["rocchio_k"] = num(cfg.rocchio_k);
  exp["topk"] = [&](const std::string& s, const std::string& k, const std::string& v) {
    cfg.topk = detail::parse_size_list(s, k, v);
  };
  exp["model_out"] = file(cfg.model_out);
  exp["embedding_dump"] = file(cfg.embedding_dump);

  for (const auto& [section, entries] : tree) {
    auto sec = schema.find(section);
    if (sec == schema.end()) {
      if (entries.empty() && !entries.data().empty())
        throw UsageError("config: key '" + section + "' must live inside a section");
      throw UsageError("config: unknown section [" + section + "]");
    }
    for (const auto& [key, node] : entries) {
      auto setter = sec->second.find(key);
      if (setter == sec->second.end()) throw UsageError("config: unknown key '" + key + "' in [" + section + "]");
      setter->second(section, key, node.data());
    }
  }
  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw UsageError("cannot open config file " + file.string());
  return parse_config(in, file.parent_path());
}

}  // namespace ssvoc

#endif  // SSVOC_CONFIG_HPP
