#ifndef SSVOC_DATASET_IO_HPP
#define SSVOC_DATASET_IO_HPP

// Feature matrices are stored either as a binary container
//
//   8 bytes   magic "SSVOCF32"
//   u64 LE    rows
//   u64 LE    cols
//   rows*cols float32 LE, row-major
//
// or as CSV (one comma-separated row per line). Readers sniff the magic.
// Labels live in a separate file, one token per line, aligned with rows.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ssvoc/error.hpp"
#include "ssvoc/linalg.hpp"
#include "ssvoc/objective.hpp"
#include "ssvoc/vocabulary.hpp"
#include "ssvoc/word_vectors_io.hpp"

namespace ssvoc {

inline constexpr std::array<char, 8> kFeatureMagic{'S', 'S', 'V', 'O', 'C', 'F', '3', '2'};

namespace detail {

inline void write_le_u64(std::ostream& os, std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap64(v);
  char b[8];
  std::memcpy(b, &v, 8);
  os.write(b, 8);
}

inline std::uint64_t read_le_u64(std::istream& is) {
  char b[8];
  if (!is.read(b, 8)) throw DataError("feature file: truncated header");
  std::uint64_t v;
  std::memcpy(&v, b, 8);
  if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap64(v);
  return v;
}

}  // namespace detail

inline void save_features_binary(const RowMatrix& features, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(kFeatureMagic.data(), kFeatureMagic.size());
  detail::write_le_u64(out, static_cast<std::uint64_t>(features.rows()));
  detail::write_le_u64(out, static_cast<std::uint64_t>(features.cols()));
  for (Index r = 0; r < features.rows(); ++r)
    for (Index c = 0; c < features.cols(); ++c) detail::write_le_float(out, static_cast<float>(features(r, c)));
  if (!out) throw DataError("write failed: " + path.string());
}

inline void save_features_csv(const RowMatrix& features, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (Index r = 0; r < features.rows(); ++r) {
    for (Index c = 0; c < features.cols(); ++c) {
      if (c) out << ',';
      out << detail::format_double(features(r, c));
    }
    out << '\n';
  }
}

/// Binary when the extension is ".bin", CSV otherwise.
inline void save_features(const RowMatrix& features, const std::filesystem::path& path) {
  if (path.extension() == ".bin")
    save_features_binary(features, path);
  else
    save_features_csv(features, path);
}

inline RowMatrix load_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open feature file " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() == 8 && magic == kFeatureMagic) {
    const auto rows = detail::read_le_u64(in);
    const auto cols = detail::read_le_u64(in);
    RowMatrix m(static_cast<Index>(rows), static_cast<Index>(cols));
    std::vector<char> buf(4 * cols);
    for (std::uint64_t r = 0; r < rows; ++r) {
      if (!in.read(buf.data(), static_cast<std::streamsize>(buf.size())))
        throw DataError(path.string() + ": truncated feature data at row " + std::to_string(r));
      for (std::uint64_t c = 0; c < cols; ++c)
        m(static_cast<Index>(r), static_cast<Index>(c)) = detail::read_le_float(buf.data() + 4 * c);
    }
    return m;
  }

  in.clear();
  in.seekg(0);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      auto field = std::string_view(line).substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
      while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
      double v;
      if (!detail::parse_number(field, v))
        throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad number '" + std::string(field) + "'");
      row.push_back(v);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": row has " + std::to_string(row.size()) +
                      " columns, expected " + std::to_string(rows.front().size()));
    rows.push_back(std::move(row));
  }
  RowMatrix m(static_cast<Index>(rows.size()), rows.empty() ? 0 : static_cast<Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  return m;
}

inline void save_labels(const std::vector<std::string>& tokens, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& t : tokens) out << t << '\n';
}

/// Features paired with label tokens (test sets may mix source and target classes).
struct LabeledFeatures {
  RowMatrix features;
  std::vector<std::string> labels;

  std::size_t size() const { return labels.size(); }
};

inline LabeledFeatures load_labeled_features(const std::filesystem::path& feature_path,
                                             const std::filesystem::path& label_path) {
  LabeledFeatures out;
  out.features = load_features(feature_path);
  out.labels = load_token_list(label_path);
  for (auto& l : out.labels) l = normalize_token(l);
  if (static_cast<Index>(out.labels.size()) != out.features.rows())
    throw DataError("row count mismatch: " + std::to_string(out.features.rows()) + " feature rows in " +
                    feature_path.string() + ", " + std::to_string(out.labels.size()) + " labels in " +
                    label_path.string());
  if (!out.features.allFinite()) throw DataError(feature_path.string() + ": non-finite feature value");
  return out;
}

/// Training set with labels resolved to source-class positions.
inline LabeledDataset to_dataset(const LabeledFeatures& lf, const SemanticSpace& space, const LabelSets& labels) {
  std::unordered_map<std::size_t, std::size_t> position;
  for (std::size_t s = 0; s < labels.source.size(); ++s) position.emplace(labels.source[s], s);
  LabeledDataset ds;
  ds.features = lf.features;
  ds.labels.reserve(lf.size());
  for (std::size_t i = 0; i < lf.size(); ++i) {
    auto entry = space.find(lf.labels[i]);
    auto pos = entry ? position.find(*entry) : position.end();
    if (pos == position.end())
      throw DataError("label '" + lf.labels[i] + "' on row " + std::to_string(i) + " is not a source class");
    ds.labels.push_back(pos->second);
  }
  ds.validate(labels.source.size());
  return ds;
}

inline LabeledDataset load_dataset(const std::filesystem::path& feature_path, const std::filesystem::path& label_path,
                                   const SemanticSpace& space, const LabelSets& labels) {
  return to_dataset(load_labeled_features(feature_path, label_path), space, labels);
}

inline void save_dataset(const LabeledDataset& ds, const SemanticSpace& space, const LabelSets& labels,
                         const std::filesystem::path& feature_path, const std::filesystem::path& label_path) {
  save_features(ds.features, feature_path);
  std::vector<std::string> tokens;
  for (auto z : ds.labels) tokens.push_back(space.token(labels.source[z]));
  save_labels(tokens, label_path);
}

}  // namespace ssvoc

#endif  // SSVOC_DATASET_IO_HPP
