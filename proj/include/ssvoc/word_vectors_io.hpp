#ifndef SSVOC_WORD_VECTORS_IO_HPP
#define SSVOC_WORD_VECTORS_IO_HPP

// Readers and writers for the two word2vec vector formats and the
// "<token> <count>" frequency sidecar.

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ssvoc/error.hpp"
#include "ssvoc/vocabulary.hpp"

namespace ssvoc {

enum class VectorFormat { text, binary };

inline VectorFormat parse_vector_format(std::string_view s) {
  if (s == "text" || s == "txt") return VectorFormat::text;
  if (s == "binary" || s == "bin") return VectorFormat::binary;
  throw UsageError("unknown word-vector format '" + std::string(s) + "'");
}

/// Guess from the extension: ".bin" is binary, anything else text.
inline VectorFormat guess_vector_format(const std::filesystem::path& path) {
  return path.extension() == ".bin" ? VectorFormat::binary : VectorFormat::text;
}

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

inline std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

struct Header {
  std::size_t count = 0;
  std::size_t dim = 0;
};

inline Header parse_header(const std::string& line, const std::filesystem::path& path) {
  auto fields = split_ws(line);
  Header h;
  if (fields.size() != 2 || !parse_number(fields[0], h.count) || !parse_number(fields[1], h.dim) || h.dim == 0)
    throw DataError(path.string() + ": malformed header '" + line + "', expected '<count> <dim>'");
  return h;
}

inline void check_duplicate(std::unordered_set<std::string>& seen, const std::string& token,
                            const std::filesystem::path& path, std::size_t line) {
  if (!seen.insert(normalize_token(token)).second)
    throw DataError(path.string() + ":" + std::to_string(line) + ": duplicate token '" + token + "'");
}

inline float read_le_float(const char* bytes) {
  std::uint32_t bits;
  std::memcpy(&bits, bytes, 4);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
  return std::bit_cast<float>(bits);
}

inline void write_le_float(std::ostream& os, float v) {
  auto bits = std::bit_cast<std::uint32_t>(v);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
  char bytes[4];
  std::memcpy(bytes, &bits, 4);
  os.write(bytes, 4);
}

}  // namespace detail

inline SemanticSpace load_word_vectors_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open word-vector file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": malformed header (empty file)");
  const auto h = detail::parse_header(line, path);

  std::vector<std::string> tokens;
  tokens.reserve(h.count);
  RowMatrix vectors(static_cast<Index>(h.count), static_cast<Index>(h.dim));
  std::unordered_set<std::string> seen;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    auto fields = detail::split_ws(line);
    if (fields.empty()) continue;
    if (tokens.size() == h.count)
      throw DataError(path.string() + ": count mismatch, header declares " + std::to_string(h.count) +
                      " entries but more rows follow (line " + std::to_string(lineno) + ")");
    if (fields.size() != h.dim + 1)
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": row has " +
                      std::to_string(fields.size() - 1) + " values, expected " + std::to_string(h.dim));
    std::string token(fields[0]);
    detail::check_duplicate(seen, token, path, lineno);
    const auto r = static_cast<Index>(tokens.size());
    for (std::size_t j = 0; j < h.dim; ++j) {
      double v;
      if (!detail::parse_number(fields[j + 1], v))
        throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad number '" +
                        std::string(fields[j + 1]) + "'");
      vectors(r, static_cast<Index>(j)) = v;
    }
    tokens.push_back(std::move(token));
  }
  if (tokens.size() != h.count)
    throw DataError(path.string() + ": count mismatch, header declares " + std::to_string(h.count) +
                    " entries, file has " + std::to_string(tokens.size()));
  return SemanticSpace(std::move(tokens), std::move(vectors));
}

inline SemanticSpace load_word_vectors_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open word-vector file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": malformed header (empty file)");
  const auto h = detail::parse_header(line, path);

  std::vector<std::string> tokens;
  tokens.reserve(h.count);
  RowMatrix vectors(static_cast<Index>(h.count), static_cast<Index>(h.dim));
  std::unordered_set<std::string> seen;
  std::vector<char> buf(4 * h.dim);
  for (std::size_t e = 0; e < h.count; ++e) {
    std::string token;
    int c;
    while ((c = in.get()) != EOF && (c == '\n' || c == '\r' || c == ' ')) {
    }
    while (c != EOF && c != ' ') {
      token.push_back(static_cast<char>(c));
      c = in.get();
    }
    if (c == EOF)
      throw DataError(path.string() + ": count mismatch, header declares " + std::to_string(h.count) +
                      " entries, file ends after " + std::to_string(e));
    // Entry e occupies "line" e + 2 in word2vec's one-entry-per-line layout.
    detail::check_duplicate(seen, token, path, e + 2);
    if (!in.read(buf.data(), static_cast<std::streamsize>(buf.size())))
      throw DataError(path.string() + ": truncated vector for token '" + token + "'");
    for (std::size_t j = 0; j < h.dim; ++j)
      vectors(static_cast<Index>(e), static_cast<Index>(j)) = detail::read_le_float(buf.data() + 4 * j);
    tokens.push_back(std::move(token));
  }
  int c;
  while ((c = in.get()) != EOF)
    if (c != '\n' && c != '\r' && c != ' ')
      throw DataError(path.string() + ": count mismatch, trailing data after " + std::to_string(h.count) +
                      " entries");
  return SemanticSpace(std::move(tokens), std::move(vectors));
}

inline SemanticSpace load_word_vectors(const std::filesystem::path& path, VectorFormat format) {
  return format == VectorFormat::text ? load_word_vectors_text(path) : load_word_vectors_binary(path);
}

inline void save_word_vectors_text(const SemanticSpace& space, std::ostream& os) {
  os << space.size() << ' ' << space.dim() << '\n';
  for (std::size_t i = 0; i < space.size(); ++i) {
    os << space.token(i);
    for (Index j = 0; j < space.dim(); ++j) os << ' ' << detail::format_double(space.vectors()(Index(i), j));
    os << '\n';
  }
}

/// Binary entries are written as "<token> " followed by d little-endian
/// float32 values, with no separator between entries.
inline void save_word_vectors_binary(const SemanticSpace& space, std::ostream& os) {
  os << space.size() << ' ' << space.dim() << '\n';
  for (std::size_t i = 0; i < space.size(); ++i) {
    os << space.token(i) << ' ';
    for (Index j = 0; j < space.dim(); ++j)
      detail::write_le_float(os, static_cast<float>(space.vectors()(Index(i), j)));
  }
}

inline void save_word_vectors(const SemanticSpace& space, const std::filesystem::path& path, VectorFormat format) {
  std::ofstream out(path, format == VectorFormat::binary ? std::ios::binary : std::ios::out);
  if (!out) throw DataError("cannot write " + path.string());
  if (format == VectorFormat::text)
    save_word_vectors_text(space, out);
  else
    save_word_vectors_binary(space, out);
  if (!out) throw DataError("write failed: " + path.string());
}

/// Attaches counts from a "<token> <count>" sidecar. Tokens the sidecar does
/// not mention get frequency 0; sidecar tokens absent from the space are ignored.
inline SemanticSpace attach_frequencies(const SemanticSpace& space, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open frequency file " + path.string());
  std::vector<std::uint64_t> freq(space.size(), 0);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto fields = detail::split_ws(line);
    if (fields.empty()) continue;
    std::uint64_t count;
    if (fields.size() != 2 || !detail::parse_number(fields[1], count))
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected '<token> <count>'");
    if (auto idx = space.find(fields[0])) freq[*idx] = count;
  }
  return space.with_frequencies(std::move(freq));
}

inline void save_frequencies(const SemanticSpace& space, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  const auto& f = space.frequencies();
  for (std::size_t i = 0; i < space.size(); ++i) out << space.token(i) << ' ' << f[i] << '\n';
}

/// One token per line; blank lines and '#' comments are skipped.
inline std::vector<std::string> load_token_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open token list " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    auto fields = detail::split_ws(line);
    if (fields.empty() || fields[0].front() == '#') continue;
    out.emplace_back(fields[0]);
  }
  return out;
}

}  // namespace ssvoc

#endif  // SSVOC_WORD_VECTORS_IO_HPP
