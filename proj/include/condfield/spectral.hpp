#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "condfield/grid.hpp"
#include "condfield/kernels.hpp"
#include "condfield/operators.hpp"

namespace condfield {

/// Run of (near-)equal eigenvalues; `begin` indexes the descending value list.
struct DegeneracyGroup {
  std::size_t begin = 0;
  std::size_t size = 0;
  double value = 0.0;
};

/// Group sizes of a sorted list, in list order.
struct DegeneracyStructure {
  std::vector<DegeneracyGroup> groups;

  /// Size of the leading group; throws InvalidArgument if that group is not positive.
  std::size_t g1() const;
};

/**
 * Consecutive eigenvalues whose gap is at most rel_tol * max|lambda| share a
 * group. Input must be sorted (either direction).
 */
DegeneracyStructure degeneracy_groups(std::span<const double> sorted,
                                      double rel_tol = 1e-6);

struct SpectrumOptions {
  double cluster_tol = 1e-6;  // relative, for degeneracy groups
  double zero_tol = 1e-10;    // relative, |lambda| below this is zero
};

/**
 * Full symmetric spectrum in descending order with positive/negative/zero
 * bookkeeping. Positive eigenvalues are numbered lambda_1 >= lambda_2 >= ...
 * and negative ones lambda_{-1} <= lambda_{-2} <= ...; lambda(+i) and
 * lambda(-i) follow that numbering. Each eigenvector is signed so its first
 * non-negligible component is positive.
 */
struct Spectrum {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
  std::size_t positive_count = 0;
  std::size_t negative_count = 0;
  std::size_t zero_count = 0;
  double zero_threshold = 0.0;  // absolute
  std::vector<DegeneracyGroup> positive_groups;  // lambda_1 group first
  std::vector<DegeneracyGroup> negative_groups;  // lambda_{-1} group first

  Eigen::Index column(int signed_index) const;
  double lambda(int signed_index) const { return values[column(signed_index)]; }
  /// Degeneracy of lambda_1; throws InvalidArgument for an empty positive spectrum.
  std::size_t g1() const;
  const DegeneracyGroup& top_group() const;
  Eigen::VectorXd nonzero_values() const;
};

/// Throws InvalidArgument for non-square or non-symmetric input.
Spectrum eig_symmetric(const Eigen::MatrixXd& a, const SpectrumOptions& options = {});
Spectrum eig_symmetric(const OperatorMatrix& a, const SpectrumOptions& options = {});

/**
 * Nonzero spectrum of C O^S for O^S = F S F^T, as the spectrum of the r x r
 * matrix G^{1/2} S G^{1/2} with G = F^T C F.
 */
struct LowRankSpectrum {
  Eigen::VectorXd values;         // nonzero eigenvalues, descending
  Eigen::MatrixXd coefficients;   // eigenvectors y of G^{1/2} S G^{1/2}, one column per value
  Eigen::MatrixXd gram;           // G
  Eigen::MatrixXd gram_inv_root;  // pseudo-inverse of G^{1/2}

  /// Field shapes C^{1/2}|lambda_k> = (C F) G^{-1/2} y_k given C F.
  Eigen::MatrixXd transport(const Eigen::MatrixXd& c_times_basis) const;
};

/// Throws NumericalError when G is materially indefinite.
LowRankSpectrum lowrank_spectrum(const Eigen::MatrixXd& gram,
                                 const Eigen::MatrixXd& core,
                                 double zero_tol = 1e-10);

Eigen::VectorXd spectrum_CO_lowrank(const OperatorMatrix& c, const LowRankForm& o);
/// Kernel-evaluation route: never forms the dense covariance.
Eigen::VectorXd spectrum_CO_lowrank(const Grid& grid, const Kernel& kernel,
                                    const LowRankForm& o);

struct Prop3Report {
  Eigen::VectorXd m_spectrum;   // nonzero spectrum of C^{1/2} O C^{1/2}, descending
  Eigen::VectorXd co_spectrum;  // nonzero spectrum of C O (real parts), descending
  double max_relative_mismatch = 0.0;
  double max_imaginary = 0.0;  // largest |Im| among CO eigenvalues, relative
  bool counts_match = false;
  std::string route;
  double tolerance = 0.0;
  bool pass = false;
};

/// Largest dimension for the general nonsymmetric C O eigensolve.
inline constexpr Eigen::Index kMaxNonsymmetricDim = 512;

/**
 * Compares the nonzero spectrum of M = C^{1/2} O C^{1/2} with that of C O.
 * Dense O uses a general nonsymmetric eigensolve of C O (dimension <= 512);
 * a low-rank O uses the r x r route.
 */
Prop3Report check_prop3(const OperatorMatrix& c, const OperatorMatrix& o, double tol);
Prop3Report check_prop3(const OperatorMatrix& c, const LowRankForm& o, double tol);

/// C^{1/2}|lambda>: the field shape of an eigenvector of M.
Eigen::VectorXd transport_eigvec(const OperatorMatrix& c_half,
                                 const Eigen::VectorXd& eigenvector);

/// Principal angles (radians, ascending) between the column spans of a and b.
Eigen::VectorXd principal_angles(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

}  // namespace condfield
