#pragma once

#include <array>
#include <span>
#include <string>
#include <variant>

#include <Eigen/Dense>

namespace condfield {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

enum class ScalarFamily { squared_exponential, exponential };

/// Stationary scalar covariance C(x, y) = variance * g(|x - y| / length).
struct ScalarKernel {
  ScalarFamily family = ScalarFamily::squared_exponential;
  double length = 1.0;
  double variance = 1.0;

  double at_distance(double r) const;
};

double eval_scalar(const ScalarKernel& kernel, std::span<const double> x,
                   std::span<const double> y);

/// f and its first three derivatives at one radius.
struct ShapeDerivatives {
  double f = 0.0;
  double d1 = 0.0;
  double d2 = 0.0;
  double d3 = 0.0;
};

/**
 * Longitudinal correlation f of the turbulence kernel. Both families satisfy
 * f(x) = 1 - x^2 / (2 lambda_T^2) + O(x^4):
 *   gaussian:           exp(-x^2 / (2 lambda_T^2))
 *   rational_quadratic: (1 + x^2 / (2 alpha lambda_T^2))^(-alpha)
 */
enum class ShapeFamily { gaussian, rational_quadratic };

/**
 * Isotropic, homogeneous, incompressible velocity covariance
 *
 *   C_ij(r) = (2E/3) f(x) delta_ij + (E/3) x f'(x) (delta_ij - r_i r_j / x^2)
 *
 * with x = |r|. The trace at r = 0 is 2E.
 */
struct TurbulenceKernel {
  double energy = 1.0;
  double taylor_scale = 1.0;
  ShapeFamily shape = ShapeFamily::gaussian;
  double shape_alpha = 2.0;  // rational_quadratic only

  ShapeDerivatives f_derivatives(double x) const;
  Mat3 tensor(const Vec3& separation) const;
};

ShapeDerivatives f_derivatives(const TurbulenceKernel& kernel, double x);
Mat3 eval_tensor(const TurbulenceKernel& kernel, const Vec3& separation);

using Kernel = std::variant<ScalarKernel, TurbulenceKernel>;

/// Field components the kernel describes (1 scalar, 3 turbulence).
int kernel_components(const Kernel& kernel);

std::string to_string(ScalarFamily family);
std::string to_string(ShapeFamily family);

}  // namespace condfield
