#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "condfield/grid.hpp"
#include "condfield/kernels.hpp"

namespace condfield {

/// Dense operator in weight-normalized coordinates.
struct OperatorMatrix {
  Eigen::MatrixXd matrix;
  std::string label;
  bool symmetric = false;
  bool psd = false;

  Eigen::Index dim() const { return matrix.rows(); }
};

/**
 * Low-rank symmetric form O^S = F S F^T.
 *
 * Columns of F are weight-normalized point functionals; `functionals` keeps
 * their stencils so covariance products can be formed from kernel
 * evaluations alone.
 */
struct LowRankForm {
  Eigen::MatrixXd basis;  // F, dim x r
  Eigen::MatrixXd core;   // S, r x r
  std::vector<PointFunctional> functionals;
  std::string label;

  Eigen::Index dim() const { return basis.rows(); }
  Eigen::Index rank() const { return basis.cols(); }
  Eigen::MatrixXd dense() const;
};

struct AssemblyOptions {
  std::size_t dense_cap = 4096;  // largest N * n^d allowed for dense matrices
};

/**
 * Covariance in weight-normalized coordinates: entry ((i,a),(j,b)) is
 * sqrt(w_a) C_ij(x_a, x_b) sqrt(w_b). Rows are assembled in parallel.
 */
OperatorMatrix assemble_covariance(const Grid& grid, const Kernel& kernel,
                                   const AssemblyOptions& options = {});

/// C~ F from kernel evaluations at the functional supports (dim x r); no dense C.
Eigen::MatrixXd covariance_times(const Grid& grid, const Kernel& kernel,
                                 const LowRankForm& form);

/// G = F^T C~ F from kernel evaluations only (r x r).
Eigen::MatrixXd functional_gram(const Grid& grid, const Kernel& kernel,
                                const LowRankForm& form);

/// Serial reference implementations of the parallel kernels above.
namespace serial {
OperatorMatrix assemble_covariance(const Grid& grid, const Kernel& kernel,
                                   const AssemblyOptions& options = {});
Eigen::MatrixXd covariance_times(const Grid& grid, const Kernel& kernel,
                                 const LowRankForm& form);
}  // namespace serial

/// Q(phi) = sum_i |phi_i(point)|^2 as a rank-N form.
LowRankForm observable_point_intensity(const Grid& grid,
                                       std::span<const double> point);

/**
 * Local helicity at the origin, Q(v) = v(0) . (curl v)(0), as a rank-6 form.
 * Columns 0..2 evaluate v_i(0), columns 3..5 the central-difference curl
 * components; S couples them with off-diagonal blocks 1/2 I.
 */
LowRankForm observable_helicity(const Grid& grid);

OperatorMatrix symmetrize(const Eigen::MatrixXd& op);
OperatorMatrix symmetrize(const OperatorMatrix& op);

/// Symmetric PSD square root; throws NumericalError when materially indefinite.
OperatorMatrix sqrt_psd(const OperatorMatrix& c);

/// M = C^{1/2} O C^{1/2}.
OperatorMatrix build_M(const OperatorMatrix& c, const OperatorMatrix& o);
OperatorMatrix build_M(const OperatorMatrix& c, const LowRankForm& o);
/// Same, reusing a precomputed C^{1/2}.
OperatorMatrix build_M_from_root(const OperatorMatrix& c_half,
                                 const OperatorMatrix& o);
OperatorMatrix build_M_from_root(const OperatorMatrix& c_half,
                                 const LowRankForm& o);

double quadratic_form(const OperatorMatrix& o, const Eigen::VectorXd& phi);
double quadratic_form(const OperatorMatrix& o, const Eigen::VectorXcd& phi);
double quadratic_form(const LowRankForm& o, const Eigen::VectorXd& phi);
double quadratic_form(const LowRankForm& o, const Eigen::VectorXcd& phi);

}  // namespace condfield
