#include "condfield/kernels.hpp"

#include <cmath>

#include "condfield/error.hpp"

namespace condfield {

double ScalarKernel::at_distance(double r) const {
  const double s = r / length;
  switch (family) {
    case ScalarFamily::squared_exponential:
      return variance * std::exp(-0.5 * s * s);
    case ScalarFamily::exponential:
      return variance * std::exp(-std::abs(s));
  }
  return 0.0;
}

double eval_scalar(const ScalarKernel& kernel, std::span<const double> x,
                   std::span<const double> y) {
  if (x.size() != y.size()) {
    throw InvalidArgument("eval_scalar: points have different dimensions");
  }
  double r2 = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double d = x[k] - y[k];
    r2 += d * d;
  }
  return kernel.at_distance(std::sqrt(r2));
}

ShapeDerivatives TurbulenceKernel::f_derivatives(double x) const {
  const double l2 = taylor_scale * taylor_scale;
  ShapeDerivatives out;
  if (shape == ShapeFamily::gaussian) {
    const double f = std::exp(-0.5 * x * x / l2);
    out.f = f;
    out.d1 = -x / l2 * f;
    out.d2 = (x * x / l2 - 1.0) / l2 * f;
    out.d3 = (3.0 * x - x * x * x / l2) / (l2 * l2) * f;
    return out;
  }
  const double a = shape_alpha;
  const double base = 1.0 + 0.5 * x * x / (a * l2);
  const double p1 = std::pow(base, -a - 1.0);
  const double p2 = p1 / base;
  const double p3 = p2 / base;
  out.f = p1 * base;
  out.d1 = -x / l2 * p1;
  out.d2 = -p1 / l2 + (a + 1.0) * x * x / (a * l2 * l2) * p2;
  out.d3 = 3.0 * (a + 1.0) * x / (a * l2 * l2) * p2 -
           (a + 1.0) * (a + 2.0) * x * x * x / (a * a * l2 * l2 * l2) * p3;
  return out;
}

Mat3 TurbulenceKernel::tensor(const Vec3& separation) const {
  const double x = separation.norm();
  const double e = energy;
  Mat3 c = Mat3::Zero();
  // x f'(x) (I - r r^T / x^2) has a removable singularity at 0:
  // x f'(x) = -x^2 / lambda^2 + O(x^4), so the term tends to
  // -(x^2 I - r r^T) / lambda^2.
  if (x < 1e-6 * taylor_scale) {
    const double curvature = -1.0 / (taylor_scale * taylor_scale);
    const double f = 1.0 + 0.5 * curvature * x * x;
    c = (2.0 * e / 3.0) * f * Mat3::Identity();
    c += (e / 3.0) * curvature *
         (x * x * Mat3::Identity() - separation * separation.transpose());
    return c;
  }
  const ShapeDerivatives s = f_derivatives(x);
  const Vec3 u = separation / x;
  c = (2.0 * e / 3.0) * s.f * Mat3::Identity();
  c += (e / 3.0) * x * s.d1 * (Mat3::Identity() - u * u.transpose());
  return c;
}

ShapeDerivatives f_derivatives(const TurbulenceKernel& kernel, double x) {
  if (x < 0.0) throw InvalidArgument("f_derivatives: radius must be >= 0");
  return kernel.f_derivatives(x);
}

Mat3 eval_tensor(const TurbulenceKernel& kernel, const Vec3& separation) {
  return kernel.tensor(separation);
}

int kernel_components(const Kernel& kernel) {
  return std::holds_alternative<ScalarKernel>(kernel) ? 1 : 3;
}

std::string to_string(ScalarFamily family) {
  return family == ScalarFamily::squared_exponential ? "squared-exponential"
                                                     : "exponential";
}

std::string to_string(ShapeFamily family) {
  return family == ShapeFamily::gaussian ? "gaussian" : "rational-quadratic";
}

}  // namespace condfield
