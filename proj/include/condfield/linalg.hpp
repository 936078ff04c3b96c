#pragma once

#include <Eigen/Dense>

namespace condfield::linalg {

/// Eigenpairs of a symmetric matrix, eigenvalues ascending (LAPACK order).
struct SymmetricEigen {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
};

/// Divide-and-conquer symmetric eigensolver (LAPACK dsyevd); reads the lower triangle.
SymmetricEigen symmetric_eigen(const Eigen::MatrixXd& a);

/// Largest absolute entry.
inline double max_abs(const Eigen::MatrixXd& a) {
  return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

/// Symmetric square root of a PSD matrix given its eigenpairs; eigenvalues below zero are clipped.
Eigen::MatrixXd psd_root(const SymmetricEigen& eig);

}  // namespace condfield::linalg
