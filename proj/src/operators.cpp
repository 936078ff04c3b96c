#include "condfield/operators.hpp"

#include <cmath>
#include <complex>
#include <string>
#include <variant>

#include "condfield/error.hpp"
#include "condfield/linalg.hpp"

namespace condfield {
namespace {

void check_compatible(const Grid& grid, const Kernel& kernel) {
  if (std::holds_alternative<ScalarKernel>(kernel)) {
    if (grid.components() != 1) {
      throw InvalidArgument(
          "covariance: scalar kernel needs a single-component grid");
    }
  } else if (grid.components() != 3 || grid.dim() != 3) {
    throw InvalidArgument(
        "covariance: turbulence kernel needs d = 3 and N = 3");
  }
}

void check_cap(const Grid& grid, const AssemblyOptions& options) {
  if (grid.size() > options.dense_cap) {
    throw ResourceLimitError("covariance: dense dimension " +
                             std::to_string(grid.size()) +
                             " exceeds the configured cap " +
                             std::to_string(options.dense_cap));
  }
}

std::vector<Vec3> node_positions(const Grid& grid) {
  std::vector<Vec3> pos(grid.num_nodes());
  for (std::size_t a = 0; a < pos.size(); ++a) {
    const auto x = grid.position(a);
    pos[a] = Vec3(x[0], x[1], x[2]);
  }
  return pos;
}

Vec3 to_vec(const std::array<double, 3>& x) { return Vec3(x[0], x[1], x[2]); }

template <bool Parallel>
OperatorMatrix assemble_impl(const Grid& grid, const Kernel& kernel,
                             const AssemblyOptions& options) {
  check_compatible(grid, kernel);
  check_cap(grid, options);
  const auto nodes = static_cast<Eigen::Index>(grid.num_nodes());
  const auto dim = static_cast<Eigen::Index>(grid.size());
  const double w = grid.weight();
  const auto pos = node_positions(grid);
  Eigen::MatrixXd m(dim, dim);

  if (const auto* sk = std::get_if<ScalarKernel>(&kernel)) {
    auto row = [&](Eigen::Index a) {
      for (Eigen::Index b = 0; b < nodes; ++b) {
        m(a, b) = w * sk->at_distance((pos[a] - pos[b]).norm());
      }
    };
    if constexpr (Parallel) {
#pragma omp parallel for schedule(static)
      for (Eigen::Index a = 0; a < nodes; ++a) row(a);
    } else {
      for (Eigen::Index a = 0; a < nodes; ++a) row(a);
    }
  } else {
    const auto& tk = std::get<TurbulenceKernel>(kernel);
    auto row = [&](Eigen::Index a) {
      for (Eigen::Index b = 0; b < nodes; ++b) {
        const Mat3 t = tk.tensor(pos[a] - pos[b]);
        for (int i = 0; i < 3; ++i) {
          for (int j = 0; j < 3; ++j) {
            m(i * nodes + a, j * nodes + b) = w * t(i, j);
          }
        }
      }
    };
    if constexpr (Parallel) {
#pragma omp parallel for schedule(static)
      for (Eigen::Index a = 0; a < nodes; ++a) row(a);
    } else {
      for (Eigen::Index a = 0; a < nodes; ++a) row(a);
    }
  }

  OperatorMatrix out;
  out.matrix = 0.5 * (m + m.transpose());
  out.label = "covariance";
  out.symmetric = true;
  out.psd = true;
  return out;
}

template <bool Parallel>
Eigen::MatrixXd covariance_times_impl(const Grid& grid, const Kernel& kernel,
                                      const LowRankForm& form) {
  check_compatible(grid, kernel);
  if (form.dim() != static_cast<Eigen::Index>(grid.size()) ||
      form.functionals.size() != static_cast<std::size_t>(form.rank())) {
    throw InvalidArgument("covariance_times: form does not match the grid");
  }
  const auto nodes = static_cast<Eigen::Index>(grid.num_nodes());
  const int nc = grid.components();
  const Eigen::Index r = form.rank();
  const double sw = grid.sqrt_weight();
  const auto pos = node_positions(grid);
  const auto* sk = std::get_if<ScalarKernel>(&kernel);
  const auto* tk = std::get_if<TurbulenceKernel>(&kernel);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(nodes * nc, r);

  auto row = [&](Eigen::Index a) {
    for (Eigen::Index k = 0; k < r; ++k) {
      for (const auto& term : form.functionals[static_cast<std::size_t>(k)].terms) {
        const Vec3 d = pos[a] - to_vec(grid.position(term.node));
        if (sk != nullptr) {
          out(a, k) += sw * term.coefficient * sk->at_distance(d.norm());
        } else {
          const Mat3 t = tk->tensor(d);
          for (int i = 0; i < 3; ++i) {
            out(i * nodes + a, k) += sw * term.coefficient * t(i, term.component);
          }
        }
      }
    }
  };
  if constexpr (Parallel) {
#pragma omp parallel for schedule(static)
    for (Eigen::Index a = 0; a < nodes; ++a) row(a);
  } else {
    for (Eigen::Index a = 0; a < nodes; ++a) row(a);
  }
  return out;
}

Eigen::MatrixXd basis_from(const Grid& grid,
                           const std::vector<PointFunctional>& functionals) {
  Eigen::MatrixXd f(static_cast<Eigen::Index>(grid.size()),
                    static_cast<Eigen::Index>(functionals.size()));
  for (std::size_t k = 0; k < functionals.size(); ++k) {
    f.col(static_cast<Eigen::Index>(k)) = functionals[k].normalized(grid);
  }
  return f;
}

void check_square(const Eigen::MatrixXd& m, const char* what) {
  if (m.rows() != m.cols()) {
    throw InvalidArgument(std::string(what) + ": matrix is not square");
  }
}

}  // namespace

Eigen::MatrixXd LowRankForm::dense() const {
  return basis * core * basis.transpose();
}

OperatorMatrix assemble_covariance(const Grid& grid, const Kernel& kernel,
                                   const AssemblyOptions& options) {
  return assemble_impl<true>(grid, kernel, options);
}

Eigen::MatrixXd covariance_times(const Grid& grid, const Kernel& kernel,
                                 const LowRankForm& form) {
  return covariance_times_impl<true>(grid, kernel, form);
}

namespace serial {
OperatorMatrix assemble_covariance(const Grid& grid, const Kernel& kernel,
                                   const AssemblyOptions& options) {
  return assemble_impl<false>(grid, kernel, options);
}
Eigen::MatrixXd covariance_times(const Grid& grid, const Kernel& kernel,
                                 const LowRankForm& form) {
  return covariance_times_impl<false>(grid, kernel, form);
}
}  // namespace serial

Eigen::MatrixXd functional_gram(const Grid& grid, const Kernel& kernel,
                                const LowRankForm& form) {
  check_compatible(grid, kernel);
  const auto r = static_cast<std::size_t>(form.rank());
  if (form.functionals.size() != r) {
    throw InvalidArgument("functional_gram: form carries no stencils");
  }
  const auto* sk = std::get_if<ScalarKernel>(&kernel);
  const auto* tk = std::get_if<TurbulenceKernel>(&kernel);
  Eigen::MatrixXd g(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(r));
  for (std::size_t k = 0; k < r; ++k) {
    for (std::size_t l = 0; l <= k; ++l) {
      double s = 0.0;
      for (const auto& p : form.functionals[k].terms) {
        const Vec3 xp = to_vec(grid.position(p.node));
        for (const auto& q : form.functionals[l].terms) {
          const Vec3 d = xp - to_vec(grid.position(q.node));
          const double c = sk != nullptr
                               ? sk->at_distance(d.norm())
                               : tk->tensor(d)(p.component, q.component);
          s += p.coefficient * q.coefficient * c;
        }
      }
      g(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l)) = s;
      g(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(k)) = s;
    }
  }
  return g;
}

LowRankForm observable_point_intensity(const Grid& grid,
                                       std::span<const double> point) {
  const NodeIndex node = grid.locate(point);
  LowRankForm form;
  for (int i = 0; i < grid.components(); ++i) {
    form.functionals.push_back(point_functional(grid, node, i, Evaluation::value));
  }
  form.basis = basis_from(grid, form.functionals);
  form.core = Eigen::MatrixXd::Identity(grid.components(), grid.components());
  form.label = "point-intensity";
  return form;
}

LowRankForm observable_helicity(const Grid& grid) {
  if (grid.dim() != 3 || grid.components() != 3) {
    throw InvalidArgument("helicity observable needs d = 3 and N = 3");
  }
  const NodeIndex o = grid.origin();
  if (!grid.interior(o)) {
    throw InvalidArgument("helicity observable: origin lies on the boundary");
  }
  LowRankForm form;
  for (int i = 0; i < 3; ++i) {
    form.functionals.push_back(point_functional(grid, o, i, Evaluation::value));
  }
  // (curl v)_a = eps_abc d_b v_c
  for (int a = 0; a < 3; ++a) {
    const int b = (a + 1) % 3;
    const int c = (a + 2) % 3;
    PointFunctional curl;
    for (auto t : point_functional(grid, o, c, Evaluation::derivative, b).terms) {
      curl.terms.push_back(t);
    }
    for (auto t : point_functional(grid, o, b, Evaluation::derivative, c).terms) {
      t.coefficient = -t.coefficient;
      curl.terms.push_back(t);
    }
    form.functionals.push_back(std::move(curl));
  }
  form.basis = basis_from(grid, form.functionals);
  form.core = Eigen::MatrixXd::Zero(6, 6);
  form.core.topRightCorner(3, 3) = 0.5 * Eigen::Matrix3d::Identity();
  form.core.bottomLeftCorner(3, 3) = 0.5 * Eigen::Matrix3d::Identity();
  form.label = "helicity";
  return form;
}

OperatorMatrix symmetrize(const Eigen::MatrixXd& op) {
  check_square(op, "symmetrize");
  OperatorMatrix out;
  out.matrix = 0.5 * (op + op.transpose());
  out.symmetric = true;
  return out;
}

OperatorMatrix symmetrize(const OperatorMatrix& op) {
  OperatorMatrix out = symmetrize(op.matrix);
  out.label = op.label;
  out.psd = op.psd;
  return out;
}

OperatorMatrix sqrt_psd(const OperatorMatrix& c) {
  check_square(c.matrix, "sqrt_psd");
  const auto eig = linalg::symmetric_eigen(c.matrix);
  if (eig.values.size() == 0) return c;
  const double scale = eig.values.cwiseAbs().maxCoeff();
  if (eig.values.minCoeff() < -1e-10 * scale) {
    throw NumericalError("sqrt_psd: matrix is materially indefinite (min eigenvalue " +
                         std::to_string(eig.values.minCoeff()) + ", max |eigenvalue| " +
                         std::to_string(scale) + ")");
  }
  OperatorMatrix out;
  out.matrix = linalg::psd_root(eig);
  out.label = c.label.empty() ? "sqrt" : c.label + "^1/2";
  out.symmetric = true;
  out.psd = true;
  const double err = linalg::max_abs(out.matrix * out.matrix - c.matrix);
  if (err > 1e-8 * linalg::max_abs(c.matrix)) {
    throw NumericalError("sqrt_psd: square of the root misses the input by " +
                         std::to_string(err));
  }
  return out;
}

OperatorMatrix build_M_from_root(const OperatorMatrix& c_half,
                                 const OperatorMatrix& o) {
  if (c_half.dim() != o.dim() || o.matrix.cols() != o.dim()) {
    throw InvalidArgument("build_M: dimension mismatch");
  }
  OperatorMatrix m = symmetrize(c_half.matrix * o.matrix * c_half.matrix);
  m.label = "M";
  return m;
}

OperatorMatrix build_M_from_root(const OperatorMatrix& c_half,
                                 const LowRankForm& o) {
  if (c_half.dim() != o.dim()) {
    throw InvalidArgument("build_M: dimension mismatch");
  }
  const Eigen::MatrixXd b = c_half.matrix * o.basis;
  OperatorMatrix m = symmetrize(b * o.core * b.transpose());
  m.label = "M";
  return m;
}

OperatorMatrix build_M(const OperatorMatrix& c, const OperatorMatrix& o) {
  if (c.dim() != o.dim()) throw InvalidArgument("build_M: dimension mismatch");
  return build_M_from_root(sqrt_psd(c), o);
}

OperatorMatrix build_M(const OperatorMatrix& c, const LowRankForm& o) {
  if (c.dim() != o.dim()) throw InvalidArgument("build_M: dimension mismatch");
  return build_M_from_root(sqrt_psd(c), o);
}

double quadratic_form(const OperatorMatrix& o, const Eigen::VectorXd& phi) {
  if (o.dim() != phi.size() || o.matrix.cols() != phi.size()) {
    throw InvalidArgument("quadratic_form: dimension mismatch");
  }
  return phi.dot(o.matrix * phi);
}

namespace {
double real_part_checked(std::complex<double> q, double scale) {
  if (std::abs(q.imag()) > 1e-10 * std::max(scale, 1e-300)) {
    throw NumericalError("quadratic_form: operator is not Hermitian (imaginary part " +
                         std::to_string(q.imag()) + ")");
  }
  return q.real();
}
}  // namespace

double quadratic_form(const OperatorMatrix& o, const Eigen::VectorXcd& phi) {
  if (o.dim() != phi.size() || o.matrix.cols() != phi.size()) {
    throw InvalidArgument("quadratic_form: dimension mismatch");
  }
  const Eigen::VectorXd re = phi.real();
  const Eigen::VectorXd im = phi.imag();
  const Eigen::VectorXd o_re = o.matrix * re;
  const Eigen::VectorXd o_im = o.matrix * im;
  // <phi|O|phi> with the conjugate on the left argument
  const std::complex<double> q(re.dot(o_re) + im.dot(o_im),
                               re.dot(o_im) - im.dot(o_re));
  return real_part_checked(q, linalg::max_abs(o.matrix) * phi.squaredNorm() *
                                  static_cast<double>(phi.size()));
}

double quadratic_form(const LowRankForm& o, const Eigen::VectorXd& phi) {
  if (o.dim() != phi.size()) {
    throw InvalidArgument("quadratic_form: dimension mismatch");
  }
  const Eigen::VectorXd y = o.basis.transpose() * phi;
  return y.dot(o.core * y);
}

double quadratic_form(const LowRankForm& o, const Eigen::VectorXcd& phi) {
  if (o.dim() != phi.size()) {
    throw InvalidArgument("quadratic_form: dimension mismatch");
  }
  const Eigen::VectorXcd y = o.basis.transpose().cast<std::complex<double>>() * phi;
  const std::complex<double> q = y.dot(o.core.cast<std::complex<double>>() * y);
  return real_part_checked(q, linalg::max_abs(o.core) * y.squaredNorm() *
                                  static_cast<double>(y.size()));
}

}  // namespace condfield
