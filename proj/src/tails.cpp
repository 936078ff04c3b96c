#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/ooura_fourier_integrals.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "condfield/error.hpp"
#include "condfield/sampling.hpp"

namespace condfield {

TailModel TailModel::from_eigenvalues(std::vector<double> eigenvalues, FieldKind kind,
                                      double cluster_tol) {
  double scale = 0.0;
  for (double v : eigenvalues) {
    if (!std::isfinite(v)) throw InvalidArgument("non-finite eigenvalue");
    scale = std::max(scale, std::abs(v));
  }
  TailModel model;
  model.kind = kind;
  for (double v : eigenvalues)
    if (std::abs(v) > 1e-10 * scale) model.eigenvalues.push_back(v);
  std::sort(model.eigenvalues.begin(), model.eigenvalues.end(), std::greater<>());
  if (!model.eigenvalues.empty() && model.eigenvalues.front() > 0.0) {
    const auto groups = degeneracy_groups(model.eigenvalues, cluster_tol);
    model.g1 = groups.groups.front().size;
  }
  return model;
}

TailModel TailModel::from_basis(const KLBasis& basis) {
  const auto nz = basis.nonzero_eigenvalues();
  TailModel model;
  model.kind = basis.kind;
  model.eigenvalues.assign(nz.data(), nz.data() + nz.size());
  model.g1 = basis.positive_groups.empty() ? 0 : basis.top_group().size;
  return model;
}

namespace {

struct CfTerms {
  std::vector<double> a;  // lambda (complex) or 2 lambda (real)
  double m;               // 1 (complex) or 1/2 (real)

  // Phase theta(k) and log modulus log rho(k) of the inverse characteristic function.
  void eval(double k, double& theta, double& log_rho) const {
    theta = 0.0;
    log_rho = 0.0;
    for (double ai : a) {
      theta += m * std::atan(ai * k);
      log_rho += 0.5 * m * std::log1p(ai * ai * k * k);
    }
  }
};

}  // namespace

double tail_prob_cf(const TailModel& model, double u, double target_abs_error) {
  if (std::isnan(u)) throw InvalidArgument("threshold is NaN");
  const auto& ev = model.eigenvalues;
  if (ev.empty()) return u < 0.0 ? 1.0 : 0.0;
  if (u == std::numeric_limits<double>::infinity()) return 0.0;
  if (u == -std::numeric_limits<double>::infinity()) return 1.0;
  const bool has_pos = ev.front() > 0.0;
  const bool has_neg = ev.back() < 0.0;
  if (!has_pos && u >= 0.0) return 0.0;
  if (!has_neg && u <= 0.0) return 1.0;

  CfTerms terms;
  terms.m = model.kind == FieldKind::complex ? 1.0 : 0.5;
  for (double v : ev) terms.a.push_back(model.kind == FieldKind::complex ? v : 2.0 * v);

  auto sin_part = [&](double k) {
    double th, lr;
    terms.eval(k, th, lr);
    return std::sin(th) * std::exp(-lr) / k;
  };
  auto cos_part = [&](double k) {
    double th, lr;
    terms.eval(k, th, lr);
    return std::cos(th) * std::exp(-lr) / k;
  };

  double integral = 0.0;
  double error = 0.0;
  if (u == 0.0) {
    boost::math::quadrature::exp_sinh<double> integrator;
    double l1 = 0.0;
    integral = integrator.integrate(sin_part, 0.0, std::numeric_limits<double>::infinity(),
                                    1e-13, &error, &l1);
  } else {
    const double w = std::abs(u);
    boost::math::quadrature::ooura_fourier_cos<double> cos_integrator;
    boost::math::quadrature::ooura_fourier_sin<double> sin_integrator;
    const auto [i1, e1] = cos_integrator.integrate(sin_part, w);
    const auto [i2, e2] = sin_integrator.integrate(cos_part, w);
    integral = u > 0.0 ? i1 - i2 : i1 + i2;
    error = std::abs(i1) * e1 + std::abs(i2) * e2;
  }
  const double abs_error = error / std::numbers::pi;
  if (!std::isfinite(integral) || abs_error > target_abs_error)
    throw NumericalError("characteristic-function inversion did not reach the error target (" +
                         std::to_string(abs_error) + ")");
  return std::clamp(0.5 + integral / std::numbers::pi, 0.0, 1.0);
}

TailAsymptote tail_asymptotic(const TailModel& model, double u) {
  if (model.g1 == 0) throw InvalidArgument("spectrum has no positive eigenvalue");
  if (!(u > 0.0) || !std::isfinite(u)) throw InvalidArgument("threshold must be positive");
  const double l1 = model.eigenvalues.front();
  const bool complex = model.kind == FieldKind::complex;
  const double exponent = complex ? -1.0 : -0.5;
  double log_k = 0.0;
  for (std::size_t i = model.g1; i < model.eigenvalues.size(); ++i)
    log_k += exponent * std::log1p(-model.eigenvalues[i] / l1);

  const double shape = complex ? static_cast<double>(model.g1) : 0.5 * static_cast<double>(model.g1);
  const double scale = complex ? l1 : 2.0 * l1;
  const double y = u / scale;
  TailAsymptote out;
  out.constant = std::exp(log_k);
  out.density = std::exp(log_k + (shape - 1.0) * std::log(y) - y -
                         boost::math::lgamma(shape) - std::log(scale));
  out.probability = out.constant * boost::math::gamma_q(shape, y);
  return out;
}

}  // namespace condfield
