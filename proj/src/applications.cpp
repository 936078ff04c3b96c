#include "condfield/applications.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "condfield/error.hpp"
#include "condfield/spectral.hpp"

namespace condfield {

namespace {

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm(), nb = b.norm();
  return na > 0.0 && nb > 0.0 ? std::abs(a.dot(b)) / (na * nb) : 0.0;
}

Vec3 to_vec(const std::array<double, 3>& p) { return Vec3(p[0], p[1], p[2]); }

}  // namespace

Eigen::MatrixXd kernel_column(const Grid& grid, const ScalarKernel& kernel,
                              std::span<const double> point) {
  if (grid.components() != 1) throw InvalidArgument("kernel_column needs a scalar grid");
  const auto node = grid.locate(point);
  const auto p = grid.position(node);
  Eigen::MatrixXd col(static_cast<Eigen::Index>(grid.size()), 1);
  for (std::size_t a = 0; a < grid.num_nodes(); ++a) {
    const auto x = grid.position(a);
    col(static_cast<Eigen::Index>(a), 0) =
        grid.sqrt_weight() * eval_scalar(kernel, std::span<const double>(x.data(), grid.dim()),
                                         std::span<const double>(p.data(), grid.dim()));
  }
  return col;
}

AdlerModeReport adler_mode_check(const Grid& grid, const OperatorMatrix& covariance,
                                 const ScalarKernel& kernel, std::span<const double> point,
                                 double tolerance) {
  if (grid.components() != 1) throw InvalidArgument("adler_mode_check needs a scalar field");
  if (covariance.dim() != static_cast<Eigen::Index>(grid.size()))
    throw InvalidArgument("covariance does not match the grid");
  AdlerModeReport r;
  r.tolerance = tolerance;
  r.expected = kernel.at_distance(0.0);
  const auto o = observable_point_intensity(grid, point);
  const Eigen::VectorXd ref = kernel_column(grid, kernel, point).col(0);

  const Eigen::MatrixXd cf = covariance_times(grid, Kernel{kernel}, o);
  const auto lr = lowrank_spectrum(functional_gram(grid, Kernel{kernel}, o), o.core);
  r.eigenvalue_lowrank = lr.values[0];
  r.cosine_lowrank = cosine(lr.transport(cf).col(0), ref);

  const auto root = sqrt_psd(covariance);
  const auto m = eig_symmetric(build_M_from_root(root, o));
  r.eigenvalue_m = m.values[0];
  r.max_other_eigenvalue =
      m.values.size() > 1
          ? m.values.tail(m.values.size() - 1).cwiseAbs().maxCoeff() / std::abs(m.values[0])
          : 0.0;
  r.cosine_m = cosine(root.matrix * m.vectors.col(0), ref);

  r.max_relative_error = std::max(std::abs(r.eigenvalue_lowrank - r.expected),
                                  std::abs(r.eigenvalue_m - r.expected)) /
                         std::abs(r.expected);
  r.pass = r.max_relative_error <= tolerance && r.max_other_eigenvalue <= tolerance &&
           r.cosine_m >= 1.0 - tolerance && r.cosine_lowrank >= 1.0 - tolerance;
  return r;
}

AdlerShapeReport adler_conditioned_shape(const KLBasis& basis, const Eigen::MatrixXd& ray,
                                         const std::vector<double>& u_grid,
                                         const ConcentrationOptions& options) {
  AdlerShapeReport r;
  auto base = options;
  base.method = SamplingMethod::rejection;
  base.stream_offset = options.stream_offset + (std::uint64_t{1} << 48);
  r.baseline = estimate_Pu(basis, -std::numeric_limits<double>::infinity(), base, &ray);
  r.curve = concentration_curve(basis, u_grid, options, &ray);
  r.similarity_increasing = r.curve.similarity_increasing;
  r.final_similarity = r.curve.records.back().mean_similarity;
  r.final_similarity_ok = r.final_similarity >= 0.9;
  r.median_ratio_decreases =
      r.curve.records.back().median_ratio < r.curve.records.front().median_ratio;
  r.pass = r.similarity_increasing && r.final_similarity_ok && r.median_ratio_decreases;
  return r;
}

double HelicityMode::eigenvalue() const {
  return sign * std::sqrt(5.0) * kernel.energy / (3.0 * kernel.taylor_scale);
}

double HelicityMode::amplitude() const {
  return std::sqrt(kernel.taylor_scale * std::abs(h0)) / std::pow(5.0, 0.25);
}

Vec3 HelicityMode::u_bar(const Vec3& x) const {
  const double r = x.norm();
  const auto d = f_derivatives(kernel, r);
  if (r == 0.0) return direction;
  const Vec3 ex = x / r;
  const double lam = kernel.taylor_scale;
  return d.f * direction + 0.5 * r * d.d1 * (direction - ex.dot(direction) * ex) +
         sign * lam / std::sqrt(5.0) * (2.0 * d.d1 + 0.5 * r * d.d2) * ex.cross(direction);
}

Vec3 HelicityMode::u_bar_small(const Vec3& x) const {
  const double lam = kernel.taylor_scale;
  return direction + sign * 0.5 * std::sqrt(5.0) * direction.cross(x / lam) -
         direction * x.squaredNorm() / (lam * lam) + direction.dot(x) * x / (2.0 * lam * lam);
}

Eigen::VectorXd HelicityMode::nodal(const Grid& grid) const {
  if (grid.dim() != 3 || grid.components() != 3)
    throw InvalidArgument("helicity mode needs d = 3 and N = 3");
  Eigen::VectorXd out(static_cast<Eigen::Index>(grid.size()));
  const double amp = amplitude();
  for (std::size_t a = 0; a < grid.num_nodes(); ++a) {
    const Vec3 v = amp * u_bar(to_vec(grid.position(a)));
    for (int c = 0; c < 3; ++c) out[static_cast<Eigen::Index>(c * grid.num_nodes() + a)] = v[c];
  }
  return out;
}

HelicityMode helicity_analytic(const TurbulenceKernel& kernel, int sign, const Vec3& direction,
                               double h0) {
  if (!(kernel.energy > 0.0) || !(kernel.taylor_scale > 0.0))
    throw InvalidArgument("helicity mode needs E > 0 and lambda > 0");
  if (sign != 1 && sign != -1) throw InvalidArgument("sign must be +1 or -1");
  const double n = direction.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw InvalidArgument("direction must be nonzero");
  HelicityMode m;
  m.kernel = kernel;
  m.sign = sign;
  m.direction = direction / n;
  m.h0 = h0;
  return m;
}

Eigen::MatrixXd helicity_analytic_span(const Grid& grid, const TurbulenceKernel& kernel,
                                       int sign) {
  Eigen::MatrixXd span(static_cast<Eigen::Index>(grid.size()), 3);
  for (int k = 0; k < 3; ++k) {
    const auto mode = helicity_analytic(kernel, sign, Vec3::Unit(k));
    span.col(k) = to_normalized(grid, mode.nodal(grid));
  }
  return span;
}

Eigen::VectorXd curl_field(const Grid& grid, const Eigen::VectorXd& nodal) {
  if (grid.dim() != 3 || grid.components() != 3)
    throw InvalidArgument("curl_field needs d = 3 and N = 3");
  if (nodal.size() != static_cast<Eigen::Index>(grid.size()))
    throw InvalidArgument("curl_field: field size does not match the grid");
  Eigen::VectorXd out(nodal.size());
  const double inv2h = 1.0 / (2.0 * grid.spacing());
  auto at = [&](int c, NodeIndex n) { return nodal[static_cast<Eigen::Index>(grid.flat(c, n))]; };
  auto d = [&](int c, const NodeIndex& n, int axis) {
    NodeIndex p = n, m = n;
    ++p[axis];
    --m[axis];
    return (at(c, p) - at(c, m)) * inv2h;
  };
  for (std::size_t a = 0; a < grid.num_nodes(); ++a) {
    const auto n = grid.node_from_flat(a);
    for (int c = 0; c < 3; ++c) {
      double v = std::numeric_limits<double>::quiet_NaN();
      if (grid.interior(n)) {
        const int b = (c + 1) % 3, e = (c + 2) % 3;
        v = d(e, n, b) - d(b, n, e);
      }
      out[static_cast<Eigen::Index>(c * grid.num_nodes() + a)] = v;
    }
  }
  return out;
}

HelicitySpectrumReport helicity_numeric_check(const Grid& grid, const TurbulenceKernel& kernel,
                                              double cluster_tol) {
  const auto form = observable_helicity(grid);
  const Eigen::MatrixXd cf = covariance_times(grid, Kernel{kernel}, form);
  const auto lr = lowrank_spectrum(functional_gram(grid, Kernel{kernel}, form), form.core);

  HelicitySpectrumReport r;
  r.spacing = grid.spacing();
  r.cluster_tol = cluster_tol;
  r.expected = std::sqrt(5.0) * kernel.energy / (3.0 * kernel.taylor_scale);
  r.eigenvalues = lr.values;
  for (Eigen::Index k = 0; k < lr.values.size(); ++k) {
    const double target = lr.values[k] > 0.0 ? r.expected : -r.expected;
    r.max_relative_error =
        std::max(r.max_relative_error, std::abs(lr.values[k] - target) / r.expected);
  }
  std::vector<double> pos, neg;
  for (double v : lr.values) (v > 0.0 ? pos : neg).push_back(v);
  std::reverse(neg.begin(), neg.end());
  const double scale = lr.values.size() ? lr.values.cwiseAbs().maxCoeff() : 1.0;
  auto sizes = [&](const std::vector<double>& v) {
    std::vector<std::size_t> out;
    if (v.empty()) return out;
    std::size_t run = 1;
    for (std::size_t k = 1; k < v.size(); ++k) {
      if (std::abs(v[k] - v[k - 1]) <= cluster_tol * scale) {
        ++run;
      } else {
        out.push_back(run);
        run = 1;
      }
    }
    out.push_back(run);
    return out;
  };
  r.positive_groups = sizes(pos);
  r.negative_groups = sizes(neg);
  r.clusters_3_3 = lr.values.size() == 6 && r.positive_groups == std::vector<std::size_t>{3} &&
                   r.negative_groups == std::vector<std::size_t>{3};

  const auto npos = static_cast<Eigen::Index>(pos.size());
  if (npos > 0) {
    const Eigen::MatrixXd numeric = lr.transport(cf).leftCols(npos);
    r.principal_angles_deg =
        principal_angles(numeric, helicity_analytic_span(grid, kernel, +1)) * (180.0 / std::numbers::pi);
  }
  return r;
}

RefinementStudy helicity_refinement(const TurbulenceKernel& kernel, double half_extent, int n,
                                    int levels) {
  RefinementStudy s;
  for (int level = 0; level <= levels; ++level) {
    const auto grid = Grid::build(3, half_extent, n, 3);
    const auto r = helicity_numeric_check(grid, kernel);
    s.spacings.push_back(grid.spacing());
    s.errors.push_back(r.max_relative_error);
    n = 2 * n - 1;
  }
  for (std::size_t k = 0; k + 1 < s.errors.size(); ++k)
    s.ratios.push_back(s.errors[k] / s.errors[k + 1]);
  return s;
}

Vec3 curl_equation_rhs(const HelicityMode& mode, const Vec3& x) {
  const double r = x.norm();
  if (r == 0.0) throw InvalidArgument("curl equation is singular at the origin");
  const auto d = f_derivatives(mode.kernel, r);
  const double e3 = mode.kernel.energy / 3.0;
  const Vec3 ex = x / r;
  const Vec3 v0 = mode.v_bar(Vec3::Zero());
  const Vec3 curl0 = mode.sign * std::sqrt(5.0) / mode.kernel.taylor_scale * v0;
  const double g = 4.0 * d.d1 + r * d.d2;
  return e3 * g * ex.cross(curl0) - 2.0 * e3 / r * g * v0 +
         e3 / r * (4.0 * d.d1 - 4.0 * r * d.d2 - r * r * d.d3) * (v0 - ex.dot(v0) * ex);
}

namespace {

// Curl of the analytic field by a fine central difference.
Vec3 analytic_curl(const HelicityMode& mode, const Vec3& x, double step) {
  Eigen::Matrix3d jac;  // jac(i, k) = d v_i / d x_k
  for (int k = 0; k < 3; ++k) {
    const Vec3 e = step * Vec3::Unit(k);
    jac.col(k) = (mode.v_bar(x + e) - mode.v_bar(x - e)) / (2.0 * step);
  }
  return Vec3(jac(2, 1) - jac(1, 2), jac(0, 2) - jac(2, 0), jac(1, 0) - jac(0, 1));
}

Vec3 grid_vec(const Grid& g, const Eigen::VectorXd& field, const NodeIndex& n) {
  return Vec3(field[static_cast<Eigen::Index>(g.flat(0, n))],
              field[static_cast<Eigen::Index>(g.flat(1, n))],
              field[static_cast<Eigen::Index>(g.flat(2, n))]);
}

}  // namespace

CurlAuditReport helicity_curl_audit(const HelicityMode& mode, double half_extent, int n,
                                    std::size_t points, std::uint64_t seed) {
  const auto coarse = Grid::build(3, half_extent, n, 3);
  const auto fine = Grid::build(3, half_extent, 2 * n - 1, 3);
  const Eigen::VectorXd curl_c = curl_field(coarse, mode.nodal(coarse));
  const Eigen::VectorXd curl_f = curl_field(fine, mode.nodal(fine));
  const double v = mode.eigenvalue();

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(1, n - 2);
  const NodeIndex origin = coarse.origin();
  std::vector<NodeIndex> nodes;
  while (nodes.size() < points) {
    const NodeIndex nd{pick(rng), pick(rng), pick(rng)};
    if (nd == origin || std::find(nodes.begin(), nodes.end(), nd) != nodes.end()) continue;
    nodes.push_back(nd);
  }
  CurlAuditReport r;
  r.spacing = coarse.spacing();
  r.points = points;
  double rhs_scale = 0.0, res_c = 0.0, res_f = 0.0;
  for (const auto& nd : nodes) {
    const Vec3 x = to_vec(coarse.position(nd));
    const Vec3 rhs = curl_equation_rhs(mode, x);
    rhs_scale = std::max(rhs_scale, rhs.cwiseAbs().maxCoeff());
    const NodeIndex nf{2 * nd[0], 2 * nd[1], 2 * nd[2]};
    res_c = std::max(res_c, (2.0 * v * grid_vec(coarse, curl_c, nd) - rhs).cwiseAbs().maxCoeff());
    res_f = std::max(res_f, (2.0 * v * grid_vec(fine, curl_f, nf) - rhs).cwiseAbs().maxCoeff());
  }
  r.max_residual = res_c / rhs_scale;
  r.max_residual_fine = res_f / rhs_scale;
  r.ratio = r.max_residual / r.max_residual_fine;

  const Vec3 v0 = mode.v_bar(Vec3::Zero());
  const Vec3 target = mode.sign * std::sqrt(5.0) / mode.kernel.taylor_scale * v0;
  r.curl_origin_residual = (grid_vec(coarse, curl_c, origin) - target).norm() / target.norm();
  r.curl_origin_residual_fine =
      (grid_vec(fine, curl_f, fine.origin()) - target).norm() / target.norm();

  const Vec3 curl0 = analytic_curl(mode, Vec3::Zero(), 1e-4 * mode.kernel.taylor_scale);
  r.eigen_relation_residual =
      (v * v0 - mode.kernel.energy / 3.0 * curl0).norm() / (std::abs(v) * v0.norm());
  r.helicity_residual = std::abs(v0.dot(curl0) - mode.sign * std::abs(mode.h0)) / std::abs(mode.h0);
  return r;
}

SeriesAgreement helicity_series_agreement(const HelicityMode& mode, double x_max_over_lambda,
                                          int radii, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  SeriesAgreement s;
  const double lam = mode.kernel.taylor_scale;
  s.x_max = x_max_over_lambda * lam;
  for (int k = 1; k <= radii; ++k) {
    const double rho = x_max_over_lambda * k / radii;
    for (int trial = 0; trial < 8; ++trial) {
      const Vec3 dir = Vec3(nd(rng), nd(rng), nd(rng)).normalized();
      const Vec3 x = rho * lam * dir;
      const Vec3 full = mode.u_bar(x);
      const double gap = (full - mode.u_bar_small(x)).norm() / full.norm();
      s.max_gap = std::max(s.max_gap, gap);
      s.max_scaled_gap = std::max(s.max_scaled_gap, gap / (rho * rho * rho));
    }
  }
  return s;
}

}  // namespace condfield
