// ssvoc command-line tool. Exit codes: 0 success, 1 usage error, 2 data
// error, 3 solver failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ssvoc/ssvoc.hpp"

namespace fs = std::filesystem;
using namespace ssvoc;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> repeats;
  std::string variant, task;
  std::optional<std::size_t> per_class;
  std::string out;

  void attach(CLI::App* app, bool with_repeats = true) {
    app->add_option("--config", config, "Experiment config (INI)")->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "Base seed");
    if (with_repeats) app->add_option("--repeats", repeats, "Number of repeats");
    app->add_option("--variant", variant, "svr_only, closed, w or full");
    app->add_option("--task", task, "supervised, zero_shot or open_set");
    app->add_option("--per-class", per_class, "Training instances per class (0 = all)");
    app->add_option("--out", out, "Output path");
  }

  ExperimentConfig resolve() const {
    ExperimentConfig cfg = config.empty() ? ExperimentConfig{} : load_config(config);
    if (seed) cfg.seed = *seed;
    if (repeats) cfg.repeats = *repeats;
    if (!variant.empty()) cfg.variant = parse_variant(variant);
    if (!task.empty()) cfg.task = parse_label_filter(task);
    if (per_class) cfg.per_class = *per_class;
    cfg.validate();
    return cfg;
  }
};

/// Writes to `path`, or stdout when it is empty or "-".
template <typename F>
void with_output(const std::string& path, F&& write) {
  if (path.empty() || path == "-") {
    write(std::cout);
    return;
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  write(out);
  if (!out) throw DataError("write failed: " + path);
}

void print_log(std::ostream& os, const std::vector<LogRecord>& log) {
  for (const auto& r : log)
    os << r.iteration << ' ' << detail::format_double(r.objective) << ' ' << detail::format_double(r.grad_norm) << ' '
       << r.phase << '\n';
}

// --- train -----------------------------------------------------------------

struct TrainCommand {
  CommonOptions common;
  std::string log_path;

  void attach(CLI::App& parent) {
    auto* app = parent.add_subcommand("train", "Fit one model and write it as JSON");
    common.attach(app, false);
    app->add_option("--log", log_path, "Training log destination (default stdout)");
    app->callback([this] { run(); });
  }

  void run() const {
    if (common.out.empty()) throw UsageError("train: --out is required");
    const auto cfg = common.resolve();
    const ExperimentData data = load_experiment_data(cfg);
    LabeledDataset train = subsample_per_class(data.train, cfg.per_class, cfg.seed);
    StandardizationStats stats;
    if (cfg.standardize) {
      stats = fit_standardization(train.features);
      train.features = stats.apply(train.features);
    }
    SolverConfig solver = cfg.solver;
    solver.seed = cfg.seed;
    const auto model = fit(train, data.space, data.labels, cfg.effective_hyperparams(), solver, cfg.fine_tune(),
                           cfg.effective_pool());
    save_model(model, data.space, data.labels, stats, common.out);
    with_output(log_path, [&](std::ostream& os) { print_log(os, model.training_log); });
    for (const auto& p : model.passes)
      std::cerr << p.phase << ": " << p.iterations << " iterations, " << to_string(p.status)
                << ", objective " << p.objective << '\n';
  }
};

// --- predict ---------------------------------------------------------------

struct PredictCommand {
  CommonOptions common;
  std::string model_path, features_path;
  std::size_t topk = 1;
  std::size_t rocchio_k = 0;

  void attach(CLI::App& parent) {
    auto* app = parent.add_subcommand("predict", "Rank labels for a feature file");
    common.attach(app, false);
    app->add_option("--model", model_path, "Model JSON written by train")->required()->check(CLI::ExistingFile);
    app->add_option("--features", features_path, "Feature file (binary container or CSV)")
        ->required()
        ->check(CLI::ExistingFile);
    app->add_option("--topk", topk, "Labels per row")->check(CLI::PositiveNumber);
    app->add_option("--rocchio", rocchio_k, "Average each query with its k nearest test queries (k >= 1)");
    app->callback([this] { run(); });
  }

  void run() const {
    const auto cfg = common.resolve();
    const ExperimentData data = load_experiment_data(cfg);
    const auto saved = load_model(model_path, data.space);
    const RowMatrix features = saved.standardization.apply(load_features(features_path));
    const PrototypeIndex index(saved.model, data.space, saved.labels);
    const PredictionMode mode =
        rocchio_k > 0 ? PredictionMode::rocchio(rocchio_k, cfg.task) : PredictionMode::nn(cfg.task);
    const auto ranked = predict_batch_entries(index, features, topk, mode);
    with_output(common.out, [&](std::ostream& os) {
      for (const auto& row : ranked) {
        for (std::size_t i = 0; i < row.size(); ++i) os << (i ? " " : "") << data.space.token(row[i]);
        os << '\n';
      }
    });
  }
};

// --- evaluate ----------------------------------------------------------------

struct EvaluateCommand {
  CommonOptions common;

  void attach(CLI::App& parent) {
    auto* app = parent.add_subcommand("evaluate", "Run the configured experiment and write a JSON report");
    common.attach(app);
    app->callback([this] { run(); });
  }

  void run() const {
    const auto result = run_experiment(common.resolve());
    with_output(common.out, [&](std::ostream& os) { os << to_json(result).dump(1) << '\n'; });
    for (const auto& [name, s] : result.aggregate)
      std::cerr << name << ": mean class accuracy " << s.mean_class_accuracy.mean << " +- "
                << s.mean_class_accuracy.std << " over " << result.runs.size() << " runs\n";
  }
};

// --- synth -----------------------------------------------------------------

struct SynthCommand {
  CommonOptions common;

  void attach(CLI::App& parent) {
    auto* app = parent.add_subcommand("synth", "Write a synthetic benchmark and a matching config to a directory");
    common.attach(app, false);
    app->callback([this] { run(); });
  }

  void run() const {
    if (common.out.empty()) throw UsageError("synth: --out DIR is required");
    auto cfg = common.resolve();
    SyntheticSpec spec = cfg.synthetic;
    spec.seed = cfg.seed;
    const auto bench = generate_synthetic(spec);
    const fs::path dir = common.out;
    fs::create_directories(dir);
    save_word_vectors(bench.space, dir / "vectors.txt", VectorFormat::text);
    std::vector<std::string> src, tgt;
    for (auto e : bench.labels.source) src.push_back(bench.space.token(e));
    for (auto e : bench.labels.target) tgt.push_back(bench.space.token(e));
    save_labels(src, dir / "source.txt");
    save_labels(tgt, dir / "target.txt");
    save_dataset(bench.train, bench.space, bench.labels, dir / "train.features.bin", dir / "train.labels.txt");

    LabeledFeatures test = bench.source_test;
    RowMatrix stacked(test.features.rows() + bench.target_test.features.rows(), test.features.cols());
    stacked << test.features, bench.target_test.features;
    test.features = std::move(stacked);
    test.labels.insert(test.labels.end(), bench.target_test.labels.begin(), bench.target_test.labels.end());
    save_features(test.features, dir / "test.features.bin");
    save_labels(test.labels, dir / "test.labels.txt");

    std::ofstream ini(dir / "experiment.ini");
    ini << "[data]\n"
           "train_features = train.features.bin\n"
           "train_labels = train.labels.txt\n"
           "test_features = test.features.bin\n"
           "test_labels = test.labels.txt\n"
           "word_vectors = vectors.txt\n"
           "source_classes = source.txt\n"
           "target_classes = target.txt\n"
           "\n[experiment]\n"
           "source = files\n"
           "task = "
        << to_string(cfg.task) << "\nvariant = " << to_string(cfg.variant) << "\nrepeats = " << cfg.repeats
        << "\nseed = " << cfg.seed << '\n';
    if (!ini) throw DataError("cannot write " + (dir / "experiment.ini").string());
    std::cerr << "wrote synthetic benchmark to " << dir.string() << '\n';
  }
};

// --- gradcheck ---------------------------------------------------------------

struct GradcheckCommand {
  std::uint64_t seed = 0;
  std::size_t instances = 20;
  double tolerance = 1e-5;

  void attach(CLI::App& parent) {
    auto* app = parent.add_subcommand("gradcheck", "Compare analytic gradients with central differences");
    app->add_option("--seed", seed, "Instance seed");
    app->add_option("--instances", instances, "Number of random instances")->check(CLI::PositiveNumber);
    app->add_option("--tolerance", tolerance, "Maximum relative error");
    app->callback([this] { run(); });
  }

  void run() const {
    const auto rep = run_gradcheck(seed, instances, tolerance);
    for (std::size_t i = 0; i < rep.results.size(); ++i) {
      const auto& r = rep.results[i];
      std::printf("instance %zu p=%ld d=%ld n=%zu err_W=%.3e err_V=%.3e\n", i, static_cast<long>(r.p),
                  static_cast<long>(r.d), r.n, r.max_error_W, r.max_error_V);
    }
    std::printf("%s: worst relative error %.3e (tolerance %.1e)\n", rep.passed() ? "PASS" : "FAIL", rep.worst(),
                rep.tolerance);
    if (!rep.passed()) throw SolverError("gradient check failed");
  }
};

// --- vocab -----------------------------------------------------------------

struct VocabCommand {
  std::string vectors, frequencies, format = "auto", out, token;
  std::uint64_t min_freq = 0, max_freq = std::numeric_limits<std::uint64_t>::max();
  std::size_t k = 10;
  std::size_t num_source = 0, vocab_size = 0;

  SemanticSpace load_space() const {
    if (vectors.empty()) throw UsageError("--vectors is required");
    const auto fmt = format == "auto" ? guess_vector_format(vectors) : parse_vector_format(format);
    return load_word_vectors(vectors, fmt);
  }

  void attach(CLI::App& parent) {
    auto* vocab = parent.add_subcommand("vocab", "Vocabulary utilities");
    vocab->require_subcommand(1);

    auto* prune = vocab->add_subcommand("prune", "Keep entries whose frequency lies in [min, max]");
    prune->add_option("--vectors", vectors, "Word vector file")->required()->check(CLI::ExistingFile);
    prune->add_option("--frequencies", frequencies, "Frequency sidecar (token count per line)")
        ->required()
        ->check(CLI::ExistingFile);
    prune->add_option("--format", format, "auto, text or binary");
    prune->add_option("--min", min_freq, "Minimum frequency");
    prune->add_option("--max", max_freq, "Maximum frequency");
    prune->add_option("--out", out, "Output vector file")->required();
    prune->callback([this] {
      const auto pruned = prune_by_frequency(attach_frequencies(load_space(), frequencies), min_freq, max_freq);
      const auto fmt = format == "auto" ? guess_vector_format(out) : parse_vector_format(format);
      save_word_vectors(pruned, out, fmt);
      std::cerr << "kept " << pruned.size() << " entries\n";
    });

    auto* near = vocab->add_subcommand("nearest", "Nearest entries to a token");
    near->add_option("--vectors", vectors, "Word vector file")->required()->check(CLI::ExistingFile);
    near->add_option("--format", format, "auto, text or binary");
    near->add_option("--token", token, "Query token")->required();
    near->add_option("-k,--k", k, "Number of neighbours")->check(CLI::PositiveNumber);
    near->callback([this] {
      const auto space = load_space();
      const auto q = space.require(token);
      for (const auto& n : nearest(space, space.vector(q), k))
        std::cout << space.token(n.index) << ' ' << detail::format_double(n.distance) << '\n';
    });

    auto* open = vocab->add_subcommand("openness", "1 - sqrt(2 |source| / |vocabulary|)");
    open->add_option("--source", num_source, "Number of source classes")->required();
    open->add_option("--vocab", vocab_size, "Vocabulary size")->required();
    open->callback([this] {
      std::printf("%.4f\n", openness(num_source, vocab_size));
    });
  }
};

// --- ablation ----------------------------------------------------------------

struct AblationCommand {
  CommonOptions common;

  void attach(CLI::App& parent) {
    auto* app = parent.add_subcommand("ablation", "Run svr_only, closed, w and full under one configuration");
    common.attach(app);
    app->callback([this] { run(); });
  }

  void run() const {
    const auto rows = run_ablation(common.resolve());
    for (const auto& row : rows)
      for (const auto& [name, s] : row.aggregate)
        std::fprintf(stderr, "%-9s %-7s %.4f +- %.4f\n", std::string(to_string(row.variant)).c_str(), name.c_str(),
                     s.mean_class_accuracy.mean, s.mean_class_accuracy.std);
    with_output(common.out, [&](std::ostream& os) { os << to_json(rows).dump(1) << '\n'; });
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised vocabulary-informed learning"};
  app.require_subcommand(1);
  TrainCommand train;
  PredictCommand predict;
  EvaluateCommand evaluate;
  SynthCommand synth;
  GradcheckCommand gradcheck;
  VocabCommand vocab;
  AblationCommand ablation;
  train.attach(app);
  predict.attach(app);
  evaluate.attach(app);
  synth.attach(app);
  gradcheck.attach(app);
  vocab.attach(app);
  ablation.attach(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const std::domain_error& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const SolverError& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
