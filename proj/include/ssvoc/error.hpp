#ifndef SSVOC_ERROR_HPP
#define SSVOC_ERROR_HPP

#include <stdexcept>
#include <string>

namespace ssvoc {

/// Malformed input files, inconsistent shapes or labels, unresolvable tokens.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite objective or gradient, or a solver that cannot make progress.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad configuration values or command-line arguments.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

[[noreturn]] inline void shape_error(const std::string& what) {
  throw DataError("shape mismatch: " + what);
}

}  // namespace detail
}  // namespace ssvoc

#endif  // SSVOC_ERROR_HPP
