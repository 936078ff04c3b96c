#include <doctest.h>

#include <array>
#include <cmath>
#include <random>

#include "condfield/error.hpp"
#include "condfield/kernels.hpp"

using namespace condfield;

TEST_CASE("scalar kernel") {
  ScalarKernel k;
  const std::array<double, 2> x{0.3, -1.2};
  CHECK(eval_scalar(k, x, x) == doctest::Approx(1.0));
  const std::array<double, 2> y{1.3, -1.2};
  CHECK(eval_scalar(k, x, y) == doctest::Approx(std::exp(-0.5)));

  ScalarKernel e{ScalarFamily::exponential, 2.0, 3.0};
  CHECK(e.at_distance(0.0) == doctest::Approx(3.0));
  CHECK(e.at_distance(2.0) == doctest::Approx(3.0 * std::exp(-1.0)));

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unif(-3, 3);
  for (int i = 0; i < 100; ++i) {
    const std::array<double, 3> a{unif(rng), unif(rng), unif(rng)};
    const std::array<double, 3> b{unif(rng), unif(rng), unif(rng)};
    REQUIRE(eval_scalar(k, a, b) == eval_scalar(k, b, a));
    REQUIRE(eval_scalar(e, a, b) == eval_scalar(e, b, a));
  }
}

TEST_CASE("tensor at zero and along an axis") {
  TurbulenceKernel k{3.0, 1.0};
  const Mat3 c0 = eval_tensor(k, Vec3::Zero());
  CHECK((c0 - 2.0 * Mat3::Identity()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(c0.trace() == doctest::Approx(2.0 * k.energy));

  const double x = 0.8;
  const Mat3 c = eval_tensor(k, Vec3(x, 0, 0));
  CHECK(c(0, 0) == doctest::Approx(2.0 * std::exp(-0.5 * x * x)));
  // transverse diagonal gets the extra x f' term
  const double f = std::exp(-0.5 * x * x);
  const double fp = -x * f;
  CHECK(c(1, 1) == doctest::Approx(2.0 * f + 1.0 * x * fp));
  CHECK(std::abs(c(0, 1)) < 1e-15);
}

TEST_CASE("tensor parity and symmetry") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  for (const auto shape : {ShapeFamily::gaussian, ShapeFamily::rational_quadratic}) {
    TurbulenceKernel k{1.3, 0.7, shape};
    for (int i = 0; i < 50; ++i) {
      const Vec3 r(nd(rng), nd(rng), nd(rng));
      const Mat3 a = eval_tensor(k, r);
      const Mat3 b = eval_tensor(k, -r);
      REQUIRE((a - b).cwiseAbs().maxCoeff() < 1e-15);
      REQUIRE((a - a.transpose()).cwiseAbs().maxCoeff() < 1e-15);
    }
  }
}

TEST_CASE("series branch is continuous") {
  TurbulenceKernel k{1.0, 2.0};
  const Vec3 dir = Vec3(1.0, 2.0, -0.5).normalized();
  const Mat3 below = eval_tensor(k, dir * (0.999e-6 * 2.0));
  const Mat3 above = eval_tensor(k, dir * (1.001e-6 * 2.0));
  CHECK((below - above).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("gaussian shape derivatives") {
  TurbulenceKernel k{1.0, 1.0};
  const auto d0 = f_derivatives(k, 0.0);
  CHECK(d0.f == 1.0);
  CHECK(d0.d1 == 0.0);
  CHECK(d0.d2 == doctest::Approx(-1.0));
  CHECK(d0.d3 == 0.0);

  // hand differentiation of exp(-x^2/2): f''' = (3x - x^3) f
  const auto d1 = f_derivatives(k, 1.0);
  const double e = std::exp(-0.5);
  CHECK(d1.f == doctest::Approx(e));
  CHECK(d1.d1 == doctest::Approx(-e));
  CHECK(std::abs(d1.d2) < 1e-15);
  CHECK(d1.d3 == doctest::Approx(2.0 * e));

  TurbulenceKernel k2{1.0, 2.5};
  CHECK(f_derivatives(k2, 0.0).d2 == doctest::Approx(-1.0 / (2.5 * 2.5)));
  CHECK_THROWS_AS(f_derivatives(k2, -0.1), InvalidArgument);
}

TEST_CASE("shape derivatives against finite differences") {
  const double h = 1e-4;
  for (const auto shape : {ShapeFamily::gaussian, ShapeFamily::rational_quadratic}) {
    TurbulenceKernel k{1.0, 0.9, shape, 1.5};
    for (double x : {0.2, 0.7, 1.4, 3.0}) {
      const auto m = f_derivatives(k, x - h);
      const auto c = f_derivatives(k, x);
      const auto p = f_derivatives(k, x + h);
      CHECK((p.f - m.f) / (2 * h) == doctest::Approx(c.d1).epsilon(1e-6));
      CHECK((p.d1 - m.d1) / (2 * h) == doctest::Approx(c.d2).epsilon(1e-6));
      CHECK((p.d2 - m.d2) / (2 * h) == doctest::Approx(c.d3).epsilon(1e-6));
    }
    CHECK(f_derivatives(k, 0.0).d2 == doctest::Approx(-1.0 / (0.9 * 0.9)));
    CHECK(f_derivatives(k, 0.0).d3 == 0.0);
  }
}

namespace {

// max_j |sum_i d_i C_ij(r)| by central differences with step h
double divergence_defect(const TurbulenceKernel& k, const Vec3& r, double h) {
  double worst = 0.0;
  for (int j = 0; j < 3; ++j) {
    double div = 0.0;
    for (int i = 0; i < 3; ++i) {
      Vec3 step = Vec3::Zero();
      step[i] = h;
      div += (eval_tensor(k, r + step)(i, j) - eval_tensor(k, r - step)(i, j)) / (2 * h);
    }
    worst = std::max(worst, std::abs(div));
  }
  return worst;
}

}  // namespace

TEST_CASE("incompressibility: divergence defect is second order") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  for (const auto shape : {ShapeFamily::gaussian, ShapeFamily::rational_quadratic}) {
    TurbulenceKernel k{1.0, 1.0, shape};
    for (int trial = 0; trial < 10; ++trial) {
      const Vec3 r(nd(rng), nd(rng), nd(rng));
      const double a = divergence_defect(k, r, 0.02);
      const double b = divergence_defect(k, r, 0.01);
      REQUIRE(b < a);
      CHECK(a / b == doctest::Approx(4.0).epsilon(0.1));
    }
  }
}

TEST_CASE("kernel metadata") {
  CHECK(kernel_components(Kernel{ScalarKernel{}}) == 1);
  CHECK(kernel_components(Kernel{TurbulenceKernel{}}) == 3);
  CHECK(to_string(ScalarFamily::squared_exponential) == "squared-exponential");
  CHECK(to_string(ShapeFamily::rational_quadratic) == "rational-quadratic");
}
