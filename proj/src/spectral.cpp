#include "condfield/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <string>

#include <Eigen/Eigenvalues>

#include "condfield/error.hpp"
#include "condfield/linalg.hpp"

namespace condfield {
namespace {

std::vector<DegeneracyGroup> cluster(const Eigen::VectorXd& values,
                                     std::size_t begin, std::size_t end,
                                     bool reverse, double abs_tol) {
  std::vector<DegeneracyGroup> out;
  if (begin >= end) return out;
  std::vector<std::size_t> order(end - begin);
  std::iota(order.begin(), order.end(), begin);
  if (reverse) std::reverse(order.begin(), order.end());
  DegeneracyGroup g{order.front(), 1, values[static_cast<Eigen::Index>(order.front())]};
  for (std::size_t k = 1; k < order.size(); ++k) {
    const double prev = values[static_cast<Eigen::Index>(order[k - 1])];
    const double cur = values[static_cast<Eigen::Index>(order[k])];
    if (std::abs(cur - prev) <= abs_tol) {
      ++g.size;
      g.begin = std::min(g.begin, order[k]);
    } else {
      out.push_back(g);
      g = DegeneracyGroup{order[k], 1, cur};
    }
  }
  out.push_back(g);
  return out;
}

Eigen::VectorXd sorted_desc(std::vector<double> v) {
  std::sort(v.begin(), v.end(), std::greater<>());
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void compare(Prop3Report& r) {
  r.counts_match = r.m_spectrum.size() == r.co_spectrum.size();
  if (!r.counts_match) {
    r.max_relative_mismatch = std::numeric_limits<double>::infinity();
    r.pass = false;
    return;
  }
  double scale = 0.0;
  if (r.m_spectrum.size() > 0) {
    scale = std::max(r.m_spectrum.cwiseAbs().maxCoeff(),
                     r.co_spectrum.cwiseAbs().maxCoeff());
  }
  r.max_relative_mismatch =
      scale > 0.0 ? (r.m_spectrum - r.co_spectrum).cwiseAbs().maxCoeff() / scale : 0.0;
  r.pass = r.max_relative_mismatch <= r.tolerance && r.max_imaginary <= r.tolerance;
}

}  // namespace

std::size_t DegeneracyStructure::g1() const {
  if (groups.empty() || !(groups.front().value > 0.0)) {
    throw InvalidArgument(
        "degeneracy: the positive spectrum is empty, conditioning on a large "
        "quadratic form is vacuous");
  }
  return groups.front().size;
}

DegeneracyStructure degeneracy_groups(std::span<const double> sorted, double rel_tol) {
  DegeneracyStructure s;
  if (sorted.empty()) return s;
  double scale = 0.0;
  for (double v : sorted) scale = std::max(scale, std::abs(v));
  Eigen::VectorXd values =
      Eigen::Map<const Eigen::VectorXd>(sorted.data(), static_cast<Eigen::Index>(sorted.size()));
  s.groups = cluster(values, 0, sorted.size(), false, rel_tol * scale);
  return s;
}

Eigen::Index Spectrum::column(int signed_index) const {
  if (signed_index > 0 && static_cast<std::size_t>(signed_index) <= positive_count) {
    return signed_index - 1;
  }
  if (signed_index < 0 && static_cast<std::size_t>(-signed_index) <= negative_count) {
    return values.size() + signed_index;
  }
  throw InvalidArgument("spectrum: eigenvalue index " + std::to_string(signed_index) +
                        " out of range");
}

std::size_t Spectrum::g1() const { return top_group().size; }

const DegeneracyGroup& Spectrum::top_group() const {
  if (positive_groups.empty()) {
    throw InvalidArgument(
        "spectrum: no positive eigenvalue, conditioning on Q > u is vacuous");
  }
  return positive_groups.front();
}

Eigen::VectorXd Spectrum::nonzero_values() const {
  std::vector<double> v;
  for (Eigen::Index k = 0; k < values.size(); ++k) {
    if (std::abs(values[k]) > zero_threshold) v.push_back(values[k]);
  }
  return sorted_desc(std::move(v));
}

Spectrum eig_symmetric(const Eigen::MatrixXd& a, const SpectrumOptions& options) {
  if (a.rows() != a.cols()) throw InvalidArgument("eig_symmetric: matrix is not square");
  const double amax = linalg::max_abs(a);
  if (linalg::max_abs(a - a.transpose()) > 1e-12 * amax) {
    throw InvalidArgument("eig_symmetric: matrix is not symmetric");
  }
  const auto eig = linalg::symmetric_eigen(a);
  const Eigen::Index n = a.rows();
  Spectrum s;
  s.values = eig.values.reverse();
  s.vectors = eig.vectors.rowwise().reverse();
  for (Eigen::Index k = 0; k < n; ++k) {
    auto v = s.vectors.col(k);
    const double vmax = v.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (std::abs(v[i]) > 1e-8 * vmax) {
        if (v[i] < 0) v = -v;
        break;
      }
    }
  }
  const double scale = n ? s.values.cwiseAbs().maxCoeff() : 0.0;
  s.zero_threshold = options.zero_tol * scale;
  for (Eigen::Index k = 0; k < n; ++k) {
    if (s.values[k] > s.zero_threshold) {
      ++s.positive_count;
    } else if (s.values[k] < -s.zero_threshold) {
      ++s.negative_count;
    } else {
      ++s.zero_count;
    }
  }
  const double tol = options.cluster_tol * scale;
  s.positive_groups = cluster(s.values, 0, s.positive_count, false, tol);
  s.negative_groups = cluster(s.values, static_cast<std::size_t>(n) - s.negative_count,
                              static_cast<std::size_t>(n), true, tol);
  return s;
}

Spectrum eig_symmetric(const OperatorMatrix& a, const SpectrumOptions& options) {
  return eig_symmetric(a.matrix, options);
}

Eigen::MatrixXd LowRankSpectrum::transport(const Eigen::MatrixXd& c_times_basis) const {
  return c_times_basis * gram_inv_root * coefficients;
}

LowRankSpectrum lowrank_spectrum(const Eigen::MatrixXd& gram, const Eigen::MatrixXd& core,
                                 double zero_tol) {
  if (gram.rows() != gram.cols() || core.rows() != core.cols() ||
      gram.rows() != core.rows()) {
    throw InvalidArgument("lowrank_spectrum: G and S shapes differ");
  }
  LowRankSpectrum out;
  out.gram = 0.5 * (gram + gram.transpose());
  const auto g = linalg::symmetric_eigen(out.gram);
  const double gmax = g.values.size() ? g.values.cwiseAbs().maxCoeff() : 0.0;
  if (g.values.size() && g.values.minCoeff() < -1e-10 * gmax) {
    throw NumericalError("lowrank_spectrum: F^T C F is materially indefinite (min " +
                         std::to_string(g.values.minCoeff()) + ")");
  }
  const Eigen::MatrixXd root = linalg::psd_root(g);
  Eigen::VectorXd inv = g.values;
  for (Eigen::Index k = 0; k < inv.size(); ++k) {
    inv[k] = g.values[k] > 1e-12 * gmax ? 1.0 / std::sqrt(g.values[k]) : 0.0;
  }
  out.gram_inv_root = g.vectors * inv.asDiagonal() * g.vectors.transpose();

  Eigen::MatrixXd k = root * core * root;
  k = 0.5 * (k + k.transpose());
  const Spectrum ks = eig_symmetric(k, SpectrumOptions{1e-6, zero_tol});
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < ks.values.size(); ++i) {
    if (std::abs(ks.values[i]) > ks.zero_threshold) keep.push_back(i);
  }
  out.values.resize(static_cast<Eigen::Index>(keep.size()));
  out.coefficients.resize(k.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) {
    out.values[static_cast<Eigen::Index>(i)] = ks.values[keep[i]];
    out.coefficients.col(static_cast<Eigen::Index>(i)) = ks.vectors.col(keep[i]);
  }
  return out;
}

Eigen::VectorXd spectrum_CO_lowrank(const OperatorMatrix& c, const LowRankForm& o) {
  if (c.dim() != o.dim()) throw InvalidArgument("spectrum_CO_lowrank: dimension mismatch");
  const Eigen::MatrixXd g = o.basis.transpose() * (c.matrix * o.basis);
  return lowrank_spectrum(g, o.core).values;
}

Eigen::VectorXd spectrum_CO_lowrank(const Grid& grid, const Kernel& kernel,
                                    const LowRankForm& o) {
  return lowrank_spectrum(functional_gram(grid, kernel, o), o.core).values;
}

Prop3Report check_prop3(const OperatorMatrix& c, const OperatorMatrix& o, double tol) {
  if (c.dim() != o.dim()) throw InvalidArgument("check_prop3: dimension mismatch");
  if (c.dim() > kMaxNonsymmetricDim) {
    throw ResourceLimitError("check_prop3: general C O route is limited to dimension " +
                             std::to_string(kMaxNonsymmetricDim));
  }
  Prop3Report r;
  r.route = "nonsymmetric";
  r.tolerance = tol;
  const OperatorMatrix os = symmetrize(o);
  r.m_spectrum = eig_symmetric(build_M(c, os)).nonzero_values();

  Eigen::EigenSolver<Eigen::MatrixXd> solver(c.matrix * os.matrix, false);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("check_prop3: nonsymmetric eigensolver did not converge");
  }
  const Eigen::VectorXcd ev = solver.eigenvalues();
  const double scale = ev.size() ? ev.cwiseAbs().maxCoeff() : 0.0;
  std::vector<double> co;
  for (const auto& z : ev) {
    if (std::abs(z) > 1e-10 * scale) {
      co.push_back(z.real());
      r.max_imaginary = std::max(r.max_imaginary, std::abs(z.imag()) / scale);
    }
  }
  r.co_spectrum = sorted_desc(std::move(co));
  compare(r);
  return r;
}

Prop3Report check_prop3(const OperatorMatrix& c, const LowRankForm& o, double tol) {
  Prop3Report r;
  r.route = "lowrank";
  r.tolerance = tol;
  r.m_spectrum = eig_symmetric(build_M(c, o)).nonzero_values();
  r.co_spectrum = spectrum_CO_lowrank(c, o);
  compare(r);
  return r;
}

Eigen::VectorXd transport_eigvec(const OperatorMatrix& c_half,
                                 const Eigen::VectorXd& eigenvector) {
  if (c_half.dim() != eigenvector.size()) {
    throw InvalidArgument("transport_eigvec: dimension mismatch");
  }
  return c_half.matrix * eigenvector;
}

Eigen::VectorXd principal_angles(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows()) throw InvalidArgument("principal_angles: row counts differ");
  const Eigen::MatrixXd qa =
      Eigen::HouseholderQR<Eigen::MatrixXd>(a).householderQ() *
      Eigen::MatrixXd::Identity(a.rows(), a.cols());
  const Eigen::MatrixXd qb =
      Eigen::HouseholderQR<Eigen::MatrixXd>(b).householderQ() *
      Eigen::MatrixXd::Identity(b.rows(), b.cols());
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(qa.transpose() * qb);
  Eigen::VectorXd s = svd.singularValues();
  Eigen::VectorXd angles(s.size());
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    angles[k] = std::acos(std::clamp(s[k], -1.0, 1.0));
  }
  return angles;
}

}  // namespace condfield
