#ifndef SSVOC_MODEL_IO_HPP
#define SSVOC_MODEL_IO_HPP

// Trained models are stored as JSON:
//
//   { "format": "ssvoc-model", "version": 1,
//     "W": {"rows": p, "cols": d, "data": [row-major]}, "V": {...},
//     "hyperparams": {...}, "margin_pool": "target",
//     "source": [tokens], "target": [tokens],
//     "standardization": {"mean": [...], "scale": [...]} }
//
// Prototypes are not stored; they are rebuilt from the semantic space on load.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ssvoc/error.hpp"
#include "ssvoc/fit.hpp"
#include "ssvoc/linalg.hpp"
#include "ssvoc/standardize.hpp"
#include "ssvoc/vocabulary.hpp"

namespace ssvoc {

struct SavedModel {
  TrainedModel model;
  LabelSets labels;
  StandardizationStats standardization;
};

namespace detail {

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json data = nlohmann::json::array();
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

inline Matrix matrix_from_json(const nlohmann::json& j, const std::string& what) {
  const auto rows = j.at("rows").get<Index>(), cols = j.at("cols").get<Index>();
  const auto& data = j.at("data");
  if (rows < 0 || cols < 0 || static_cast<Index>(data.size()) != rows * cols)
    throw DataError("model: " + what + " has " + std::to_string(data.size()) + " values for a " +
                    std::to_string(rows) + " x " + std::to_string(cols) + " matrix");
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)].get<double>();
  return m;
}

inline nlohmann::json vector_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Vector vector_from_json(const nlohmann::json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
}

}  // namespace detail

inline nlohmann::json model_to_json(const TrainedModel& model, const SemanticSpace& space, const LabelSets& labels,
                                    const StandardizationStats& stats) {
  nlohmann::json j;
  j["format"] = "ssvoc-model";
  j["version"] = 1;
  j["W"] = detail::matrix_to_json(model.W);
  j["V"] = detail::matrix_to_json(model.V);
  const auto& hp = model.hyperparams;
  j["hyperparams"] = {{"lambda", hp.lambda}, {"mu", hp.mu},        {"alpha", hp.alpha}, {"C", hp.C},
                      {"epsilon", hp.epsilon}, {"A_V", hp.A_V}, {"B_S", hp.B_S}};
  j["margin_pool"] = std::string(to_string(model.pool));
  std::vector<std::string> source, target;
  for (auto e : labels.source) source.push_back(space.token(e));
  for (auto e : labels.target) target.push_back(space.token(e));
  j["source"] = source;
  j["target"] = target;
  j["standardization"] = {{"mean", detail::vector_to_json(stats.mean)},
                          {"scale", detail::vector_to_json(stats.scale)}};
  return j;
}

/// Rebuilds a model against `space`, which must contain every class token
/// and match the stored semantic dimension.
inline SavedModel model_from_json(const nlohmann::json& j, const SemanticSpace& space) {
  try {
    if (j.at("format") != "ssvoc-model") throw DataError("model: not an ssvoc model file");
    if (j.at("version") != 1) throw DataError("model: unsupported version " + j.at("version").dump());
    SavedModel out;
    auto& m = out.model;
    m.W = detail::matrix_from_json(j.at("W"), "W");
    m.V = detail::matrix_from_json(j.at("V"), "V");
    if (m.W.cols() != space.dim() || m.V.rows() != space.dim() || m.V.cols() != space.dim())
      throw DataError("model: semantic dimension " + std::to_string(m.W.cols()) + " does not match the space (" +
                      std::to_string(space.dim()) + ")");
    const auto& h = j.at("hyperparams");
    m.hyperparams = {h.at("lambda"), h.at("mu"), h.at("alpha"), h.at("C"), h.at("epsilon"), h.at("A_V"), h.at("B_S")};
    m.pool = parse_margin_pool(j.at("margin_pool").get<std::string>());
    out.labels = LabelSets::from_tokens(space, j.at("source").get<std::vector<std::string>>(),
                                        j.at("target").get<std::vector<std::string>>());
    const auto& st = j.at("standardization");
    out.standardization.mean = detail::vector_from_json(st.at("mean"));
    out.standardization.scale = detail::vector_from_json(st.at("scale"));
    if (!out.standardization.empty() && out.standardization.mean.size() != m.W.rows())
      throw DataError("model: standardization width does not match W");
    materialize_prototypes(m, space, out.labels);
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model: malformed JSON: ") + e.what());
  }
}

inline void save_model(const TrainedModel& model, const SemanticSpace& space, const LabelSets& labels,
                       const StandardizationStats& stats, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << model_to_json(model, space, labels, stats).dump(1) << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

inline SavedModel load_model(const std::filesystem::path& path, const SemanticSpace& space) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return model_from_json(j, space);
}

}  // namespace ssvoc

#endif  // SSVOC_MODEL_IO_HPP
