#include "condfield/linalg.hpp"

#include <lapacke.h>

#include <string>

#include "condfield/error.hpp"

namespace condfield::linalg {

SymmetricEigen symmetric_eigen(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols()) {
    throw InvalidArgument("symmetric_eigen: matrix is not square");
  }
  SymmetricEigen out;
  const auto n = static_cast<lapack_int>(a.rows());
  out.vectors = a;
  out.values.resize(a.rows());
  if (n == 0) return out;
  const lapack_int info =
      LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'L', n, out.vectors.data(), n,
                     out.values.data());
  if (info != 0) {
    throw NumericalError("symmetric_eigen: dsyevd failed with info = " +
                         std::to_string(info));
  }
  return out;
}

Eigen::MatrixXd psd_root(const SymmetricEigen& eig) {
  const Eigen::VectorXd roots = eig.values.cwiseMax(0.0).cwiseSqrt();
  Eigen::MatrixXd r = eig.vectors * roots.asDiagonal() * eig.vectors.transpose();
  return 0.5 * (r + r.transpose());
}

}  // namespace condfield::linalg
