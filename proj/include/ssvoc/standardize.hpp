#ifndef SSVOC_STANDARDIZE_HPP
#define SSVOC_STANDARDIZE_HPP

#include <cmath>

#include "ssvoc/error.hpp"
#include "ssvoc/linalg.hpp"

namespace ssvoc {

/// Per-column mean and divisor estimated on training features. Columns with
/// zero variance keep a divisor of 1.
struct StandardizationStats {
  Vector mean;
  Vector scale;

  bool empty() const { return mean.size() == 0; }

  RowMatrix apply(const RowMatrix& features) const {
    if (empty()) return features;
    if (features.cols() != mean.size()) detail::shape_error("standardization stats do not match feature width");
    RowMatrix out = features;
    for (Index r = 0; r < out.rows(); ++r)
      for (Index c = 0; c < out.cols(); ++c) out(r, c) = (out(r, c) - mean(c)) / scale(c);
    return out;
  }
};

inline StandardizationStats fit_standardization(const RowMatrix& features) {
  StandardizationStats st;
  const Index n = features.rows(), p = features.cols();
  st.mean = Vector::Zero(p);
  st.scale = Vector::Ones(p);
  if (n == 0) return st;
  for (Index c = 0; c < p; ++c) {
    double m = 0.0;
    for (Index r = 0; r < n; ++r) m += features(r, c);
    m /= static_cast<double>(n);
    double var = 0.0;
    for (Index r = 0; r < n; ++r) var += (features(r, c) - m) * (features(r, c) - m);
    var /= static_cast<double>(n);
    st.mean(c) = m;
    st.scale(c) = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  return st;
}

/// Zero mean, unit (population) variance per column using the matrix's own statistics.
inline std::pair<RowMatrix, StandardizationStats> standardize(const RowMatrix& features) {
  auto st = fit_standardization(features);
  return {st.apply(features), st};
}

}  // namespace ssvoc

#endif  // SSVOC_STANDARDIZE_HPP
