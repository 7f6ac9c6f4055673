#ifndef SSVOC_LINALG_HPP
#define SSVOC_LINALG_HPP

#include <Eigen/Dense>

#include <cstddef>

namespace ssvoc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
// Row-major so that one sample / one word vector is a contiguous row.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

/// Squared Euclidean distance accumulated left to right over the coordinates.
/// Every distance in the library goes through this loop so that rankings are
/// reproducible bit for bit by an independent scan.
template <typename A, typename B>
double squared_l2(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  double acc = 0.0;
  for (Index j = 0; j < a.size(); ++j) {
    const double diff = a(j) - b(j);
    acc += diff * diff;
  }
  return acc;
}

/// Rows of U times V, each entry accumulated over k in ascending order. Used
/// wherever warped prototypes must agree exactly between code paths.
inline RowMatrix warp_rows(const RowMatrix& U, const Eigen::MatrixXd& V) {
  RowMatrix out(U.rows(), V.cols());
  for (Index i = 0; i < U.rows(); ++i)
    for (Index j = 0; j < V.cols(); ++j) {
      double acc = 0.0;
      for (Index k = 0; k < V.rows(); ++k) acc += U(i, k) * V(k, j);
      out(i, j) = acc;
    }
  return out;
}

}  // namespace ssvoc

#endif  // SSVOC_LINALG_HPP
