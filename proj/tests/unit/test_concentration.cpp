#include <doctest.h>

#include <array>
#include <cmath>
#include <limits>

#include "condfield/concentration.hpp"
#include "condfield/error.hpp"

using namespace condfield;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

KLBasis adler_basis(FieldKind kind) {
  const auto g = Grid::build(1, 4.0, 41, 1);
  const std::array<double, 1> origin{0.0};
  return make_kl_basis(assemble_covariance(g, ScalarKernel{}),
                       observable_point_intensity(g, origin), kind);
}

ConcentrationOptions options(double floor, std::size_t n, std::uint64_t seed) {
  ConcentrationOptions o;
  o.floor = floor;
  o.samples = n;
  o.seed = seed;
  return o;
}

}  // namespace

TEST_CASE("Wilson interval against tabulated values") {
  // 50/100 and 0/10 at 95%: standard reference intervals.
  const auto half = wilson_interval(0.5, 100.0);
  CHECK(half.low == doctest::Approx(0.40383).epsilon(1e-4));
  CHECK(half.high == doctest::Approx(0.59617).epsilon(1e-4));
  const auto zero = wilson_interval(0.0, 10.0);
  CHECK(zero.low == 0.0);
  CHECK(zero.high == doctest::Approx(0.27753).epsilon(1e-4));
  CHECK_THROWS_AS(wilson_interval(0.5, 0.0), InvalidArgument);
}

TEST_CASE("split_field: degenerate cases and additivity") {
  const auto basis = adler_basis(FieldKind::complex);
  REQUIRE(basis.g1() == 1);
  auto s = sample_unconditional(basis, 3, 0);

  SUBCASE("field in the top span has no fluctuation") {
    FieldSample top = s;
    top.coordinates.setZero();
    top.coordinates[0] = {1.5, -0.5};
    top.field = top.coordinates[0] * basis.transport.col(0).cast<std::complex<double>>();
    CHECK(split_field(top, basis).fluctuation.norm() < 1e-14);
  }
  SUBCASE("t1 = 0 leaves phi-bar empty") {
    FieldSample off = s;
    off.coordinates[0] = 0.0;
    off.field = basis.transport.cast<std::complex<double>>() * off.coordinates;
    const auto split = split_field(off, basis);
    CHECK(split.mean_part.norm() == 0.0);
    CHECK((split.fluctuation - off.field).norm() == 0.0);
  }
  SUBCASE("reconstruction") {
    const auto split = split_field(s, basis);
    CHECK((split.mean_part + split.fluctuation - s.field).norm() <= 1e-12 * s.field.norm());
  }
  FieldSample wrong = s;
  wrong.coordinates.conservativeResize(3);
  CHECK_THROWS_AS(split_field(wrong, basis), InvalidArgument);
}

TEST_CASE("estimate_Pu: trivial limits") {
  const auto basis = adler_basis(FieldKind::complex);
  auto o = options(0.1, 2000, 9);
  o.epsilon = 1e12;
  const auto r = estimate_Pu(basis, 5.0, o);
  CHECK(r.fluctuation.estimate == 0.0);
  CHECK(r.min_mean_norm2 > 0.0);
  CHECK(r.max_identity_residual <= 1e-10);
  CHECK(r.ci_method == "wilson-95-neff");

  auto bad = options(0.0, 100, 1);
  CHECK_THROWS_AS(estimate_Pu(basis, 1.0, bad), InvalidArgument);
}

TEST_CASE("estimate_Pu at u = -inf matches direct unconditional sampling") {
  const auto basis = adler_basis(FieldKind::complex);
  const std::size_t n = 20000;
  const auto r = estimate_Pu(basis, kNegInf, options(0.1, n, 21));
  CHECK(r.method == SamplingMethod::rejection);
  CHECK(r.effective_samples == doctest::Approx(static_cast<double>(n)));

  // Independent oracle: the same event counted over sample_unconditional draws.
  std::size_t hits = 0;
  const std::size_t m = 20000;
  for (std::size_t k = 0; k < m; ++k) {
    const auto s = sample_unconditional(basis, 1234, k);
    const auto split = split_field(s, basis);
    hits += split.fluctuation.squaredNorm() > 0.5 * split.mean_part.squaredNorm();
  }
  const double p = static_cast<double>(hits) / static_cast<double>(m);
  const double se = std::sqrt(p * (1 - p) / n + p * (1 - p) / m);
  CHECK(std::abs(r.fluctuation.estimate - p) < 4.0 * se);
}

TEST_CASE("estimate_Pu: rank-1 complex decreases from u to 4u") {
  const auto basis = adler_basis(FieldKind::complex);
  const double mean = basis.eigenvalues.sum();
  const auto a = estimate_Pu(basis, 2.0 * mean, options(0.1, 10000, 4));
  const auto b = estimate_Pu(basis, 8.0 * mean, options(0.1, 10000, 5));
  CHECK(b.fluctuation.high < a.fluctuation.low);
  CHECK(b.mean_ratio < a.mean_ratio);
}

TEST_CASE("estimate_Pu: tilted weights agree with rejection at moderate u") {
  const auto basis = adler_basis(FieldKind::real);
  const double u = 6.0 * basis.eigenvalues.sum();
  auto rej = options(0.1, 8000, 31);
  rej.method = SamplingMethod::rejection;
  auto til = options(0.1, 8000, 32);
  til.method = SamplingMethod::tilted;
  const auto a = estimate_Pu(basis, u, rej);
  const auto b = estimate_Pu(basis, u, til);
  CHECK(b.method == SamplingMethod::tilted);
  const double sa = (a.fluctuation.high - a.fluctuation.low) / (2 * kZ95);
  const double sb = (b.fluctuation.high - b.fluctuation.low) / (2 * kZ95);
  CHECK(std::abs(a.fluctuation.estimate - b.fluctuation.estimate) < 4.0 * std::hypot(sa, sb));
  CHECK(b.tail_estimate == doctest::Approx(tail_prob_cf(TailModel::from_basis(basis), u)).epsilon(0.05));
}

TEST_CASE("concentration_curve: identity covariance and observable") {
  // g1 = dimension: phi-bar spans everything, every record reports 0.
  const Eigen::Index n = 5;
  OperatorMatrix c{Eigen::MatrixXd::Identity(n, n), "I", true, true};
  LowRankForm o;
  o.basis = Eigen::MatrixXd::Identity(n, n);
  o.core = Eigen::MatrixXd::Identity(n, n);
  const auto basis = make_kl_basis(c, o, FieldKind::real);
  REQUIRE(basis.g1() == static_cast<std::size_t>(n));
  const auto curve = concentration_curve(basis, {2.0, 5.0, 10.0}, options(0.01, 2000, 2));
  for (const auto& r : curve.records) {
    CHECK(r.fluctuation.estimate == 0.0);
    CHECK(r.mean_ratio == doctest::Approx(0.0).epsilon(1e-24));
  }
  CHECK(curve.fluctuation_non_increasing);
  CHECK_FALSE(curve.fluctuation_strictly_decreasing);
  CHECK_THROWS_AS(concentration_curve(basis, {1.0, 2.0}, options(0.01, 100, 1)), InvalidArgument);
  CHECK_THROWS_AS(concentration_curve(basis, {1.0, 3.0, 2.0}, options(0.01, 100, 1)),
                  InvalidArgument);
}

TEST_CASE("concentration_curve: Adler real field trend and reproducibility") {
  const auto basis = adler_basis(FieldKind::real);
  const double mean = basis.eigenvalues.sum();
  auto o = options(default_floor(basis, SplitMode::upper, 5), 6000, 6);
  const std::vector<double> grid{2.0 * mean, 8.0 * mean, 32.0 * mean};
  const auto curve = concentration_curve(basis, grid, o);
  CHECK(curve.fluctuation_strictly_decreasing);
  CHECK(curve.small_mean_non_increasing);
  CHECK(curve.endpoint_decrease);
  CHECK(curve.similarity_increasing);
  const auto again = concentration_curve(basis, grid, o);
  for (std::size_t k = 0; k < grid.size(); ++k)
    CHECK(again.records[k].fluctuation.estimate == curve.records[k].fluctuation.estimate);
}

TEST_CASE("median_Q and default_floor") {
  const auto basis = adler_basis(FieldKind::complex);
  // rank-1 complex: Q is exponential with mean lambda_1, median lambda_1 ln 2.
  const double l1 = basis.eigenvalues[0];
  CHECK(median_Q(basis) == doctest::Approx(l1 * std::log(2.0)).epsilon(1e-8));
  const double a = default_floor(basis, SplitMode::upper, 3);
  CHECK(a > 0.0);
  CHECK(default_floor(basis, SplitMode::upper, 3) == a);
}
