#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "condfield/concentration.hpp"
#include "condfield/grid.hpp"
#include "condfield/kernels.hpp"
#include "condfield/operators.hpp"
#include "condfield/sampling.hpp"

namespace condfield {

// ---------------------------------------------------------------- high maximum

struct AdlerModeReport {
  double expected = 0.0;              // C(point, point)
  double eigenvalue_lowrank = 0.0;    // top eigenvalue of C O, r x r route
  double eigenvalue_m = 0.0;          // top eigenvalue of M
  double max_relative_error = 0.0;
  double max_other_eigenvalue = 0.0;  // largest |lambda| of M beyond the top one, relative
  double cosine_m = 0.0;              // transported top mode vs C(., point)
  double cosine_lowrank = 0.0;
  double tolerance = 1e-10;
  bool pass = false;
};

/// Top mode of C O for O = |point><point| on a scalar grid.
AdlerModeReport adler_mode_check(const Grid& grid, const OperatorMatrix& covariance,
                                 const ScalarKernel& kernel, std::span<const double> point,
                                 double tolerance = 1e-10);

/// Weight-normalized C(., point) as a one-column matrix.
Eigen::MatrixXd kernel_column(const Grid& grid, const ScalarKernel& kernel,
                              std::span<const double> point);

struct AdlerShapeReport {
  ConcentrationRecord baseline;  // u = -inf control arm
  ConcentrationCurve curve;
  bool similarity_increasing = false;
  double final_similarity = 0.0;
  bool final_similarity_ok = false;  // >= 0.9
  bool median_ratio_decreases = false;
  bool pass = false;
};

AdlerShapeReport adler_conditioned_shape(const KLBasis& basis, const Eigen::MatrixXd& ray,
                                         const std::vector<double>& u_grid,
                                         const ConcentrationOptions& options);

// -------------------------------------------------------------------- helicity

/**
 * Analytic large-helicity mode of the turbulence kernel:
 *
 *   u(x) = f e_v + (x/2) f' [e_v - (e_x.e_v) e_x] + s (lambda/sqrt5) [2 f' + (x/2) f''] (e_x x e_v)
 *   v(x) = amplitude * u(x),  amplitude = sqrt(lambda |h0|) / 5^{1/4}
 *
 * with eigenvalue s sqrt5 E / (3 lambda), s = +-1.
 */
struct HelicityMode {
  TurbulenceKernel kernel;
  int sign = 1;
  Vec3 direction = Vec3::UnitX();
  double h0 = 1.0;

  double eigenvalue() const;
  double amplitude() const;
  Vec3 u_bar(const Vec3& x) const;
  /// Second-order series of u_bar for |x| << lambda.
  Vec3 u_bar_small(const Vec3& x) const;
  Vec3 v_bar(const Vec3& x) const { return amplitude() * u_bar(x); }
  /// v_bar on the grid, nodal values, component-major.
  Eigen::VectorXd nodal(const Grid& grid) const;
};

/// Throws InvalidArgument for a zero direction, non-positive E or lambda, or sign not +-1.
HelicityMode helicity_analytic(const TurbulenceKernel& kernel, int sign, const Vec3& direction,
                               double h0 = 1.0);

/// Weight-normalized u_bar for e_v = e_1, e_2, e_3 (dim x 3).
Eigen::MatrixXd helicity_analytic_span(const Grid& grid, const TurbulenceKernel& kernel,
                                       int sign);

/// Central-difference curl of a nodal 3-component field; boundary nodes are NaN.
Eigen::VectorXd curl_field(const Grid& grid, const Eigen::VectorXd& nodal);

struct HelicitySpectrumReport {
  double expected = 0.0;                 // sqrt5 E / (3 lambda)
  Eigen::VectorXd eigenvalues;           // six nonzero eigenvalues, descending
  double max_relative_error = 0.0;
  std::vector<std::size_t> positive_groups;
  std::vector<std::size_t> negative_groups;
  double cluster_tol = 0.0;
  bool clusters_3_3 = false;
  Eigen::VectorXd principal_angles_deg;  // numeric + space vs analytic span
  double spacing = 0.0;
};

/// Low-rank route only; the dense covariance is never formed.
HelicitySpectrumReport helicity_numeric_check(const Grid& grid, const TurbulenceKernel& kernel,
                                              double cluster_tol = 1e-3);

struct RefinementStudy {
  std::vector<double> spacings;
  std::vector<double> errors;  // max relative eigenvalue error
  std::vector<double> ratios;  // errors[k] / errors[k+1]
};

/// Halves h `levels` times starting from n points per axis at fixed L.
RefinementStudy helicity_refinement(const TurbulenceKernel& kernel, double half_extent, int n,
                                    int levels = 1);

/**
 * Audit of the curl of the eigenvalue equation: 2 v curl(v_bar)(x) computed
 * by curl_field against the closed-form right-hand side assembled from f',
 * f'', f''' at interior nodes away from the origin.
 */
struct CurlAuditReport {
  double spacing = 0.0;
  double max_residual = 0.0;         // relative to max |rhs| over the points
  double max_residual_fine = 0.0;    // same points at h / 2
  double ratio = 0.0;
  double curl_origin_residual = 0.0;       // |curl v(0) - s sqrt5/lambda v(0)| / |v(0)|, grid stencil
  double curl_origin_residual_fine = 0.0;
  double eigen_relation_residual = 0.0;    // |v v(0) - (E/3) curl v(0)|, analytic curl
  double helicity_residual = 0.0;          // |v(0).curl v(0) - s |h0|| / |h0|
  std::size_t points = 0;
};

CurlAuditReport helicity_curl_audit(const HelicityMode& mode, double half_extent, int n,
                                    std::size_t points, std::uint64_t seed);

/// max over sampled radii x <= x_max of |u - u_small| / |u| divided by (x/lambda)^3.
struct SeriesAgreement {
  double max_gap = 0.0;
  double max_scaled_gap = 0.0;  // gap / (x/lambda)^3
  double x_max = 0.0;
};

SeriesAgreement helicity_series_agreement(const HelicityMode& mode, double x_max_over_lambda,
                                          int radii, std::uint64_t seed);

/// Right-hand side of the curled eigenvalue equation at x != 0.
Vec3 curl_equation_rhs(const HelicityMode& mode, const Vec3& x);

}  // namespace condfield
