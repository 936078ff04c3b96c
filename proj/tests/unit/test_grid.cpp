#include <doctest.h>

#include <array>
#include <cmath>

#include "condfield/error.hpp"
#include "condfield/grid.hpp"

using namespace condfield;

namespace {

Eigen::VectorXd sample_1d(const Grid& g, double (*f)(double)) {
  Eigen::VectorXd nodal(g.size());
  for (int i = 0; i < g.points_per_axis(); ++i) nodal[i] = f(g.coordinate(i));
  return to_normalized(g, nodal);
}

}  // namespace

TEST_CASE("five-node line") {
  const auto g = Grid::build(1, 5.0, 5, 1);
  CHECK(g.spacing() == doctest::Approx(2.5));
  CHECK(g.weight() == doctest::Approx(2.5));
  const std::array<double, 5> expected{-5, -2.5, 0, 2.5, 5};
  for (int i = 0; i < 5; ++i) CHECK(g.coordinate(i) == doctest::Approx(expected[i]));
  CHECK(g.origin()[0] == 2);
  CHECK(g.total_weight() == doctest::Approx(12.5));
}

TEST_CASE("degrees of freedom") {
  CHECK(Grid::build(3, 4.0, 9, 3).size() == 2187);
}

TEST_CASE("preconditions") {
  CHECK_THROWS_AS(Grid::build(1, 1.0, 4, 1), InvalidArgument);
  CHECK_THROWS_AS(Grid::build(1, 1.0, 1, 1), InvalidArgument);
  CHECK_THROWS_AS(Grid::build(1, 0.0, 5, 1), InvalidArgument);
  CHECK_THROWS_AS(Grid::build(1, -1.0, 5, 1), InvalidArgument);
  CHECK_THROWS_AS(Grid::build(4, 1.0, 5, 1), InvalidArgument);
  CHECK_THROWS_AS(Grid::build(0, 1.0, 5, 1), InvalidArgument);
  CHECK_THROWS_AS(Grid::build(2, 1.0, 5, 0), InvalidArgument);
}

TEST_CASE("value and derivative functionals") {
  const auto g = Grid::build(1, 5.0, 5, 1);
  const std::array<double, 1> origin{0.0};
  const auto value = point_functional(g, origin, 0, Evaluation::value);
  const auto deriv = point_functional(g, origin, 0, Evaluation::derivative, 0);

  CHECK(value.apply(g, sample_1d(g, [](double x) { return x * x; })) == doctest::Approx(0.0));
  CHECK(value.apply(g, sample_1d(g, [](double x) { return x + 7.0; })) == doctest::Approx(7.0));
  CHECK(deriv.apply(g, sample_1d(g, [](double x) { return x; })) == doctest::Approx(1.0));
  // (h^3 - (-h)^3) / 2h = h^2
  CHECK(deriv.apply(g, sample_1d(g, [](double x) { return x * x * x; })) ==
        doctest::Approx(6.25));
  // exact for quadratics
  CHECK(deriv.apply(g, sample_1d(g, [](double x) { return 3.0 * x * x - x + 2.0; })) ==
        doctest::Approx(-1.0));

  // normalized vector: 1/sqrt(w) at the node
  const auto v = value.normalized(g);
  CHECK(v[2] == doctest::Approx(1.0 / std::sqrt(2.5)));
  CHECK(v.norm() == doctest::Approx(1.0 / std::sqrt(2.5)));
}

TEST_CASE("functional errors") {
  const auto g = Grid::build(1, 5.0, 5, 1);
  const std::array<double, 1> off{1.0};
  CHECK_THROWS_AS(point_functional(g, off, 0, Evaluation::value), InvalidArgument);
  const std::array<double, 1> edge{5.0};
  CHECK_THROWS_AS(point_functional(g, edge, 0, Evaluation::derivative, 0), InvalidArgument);
  CHECK_NOTHROW(point_functional(g, edge, 0, Evaluation::value));
}

TEST_CASE("derivative error is second order") {
  auto error_at = [](int n) {
    const auto g = Grid::build(1, 1.0, n, 1);
    const std::array<double, 1> origin{0.0};
    const auto d = point_functional(g, origin, 0, Evaluation::derivative, 0);
    return std::abs(d.apply(g, sample_1d(g, [](double x) { return std::exp(x); })) - 1.0);
  };
  const double e1 = error_at(5);
  const double e2 = error_at(9);
  const double e3 = error_at(17);
  CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.25));
  CHECK(e2 / e3 == doctest::Approx(4.0).epsilon(0.25));
}

TEST_CASE("index map round trip") {
  for (int d = 1; d <= 3; ++d) {
    const auto g = Grid::build(d, 1.0, 5, 2);
    for (std::size_t f = 0; f < g.size(); ++f) {
      const auto [c, node] = g.unflat(f);
      REQUIRE(g.flat(c, node) == f);
    }
  }
  const auto g = Grid::build(3, 1.0, 3, 1);
  // last axis fastest
  CHECK(g.node_flat({0, 0, 1}) == 1);
  CHECK(g.node_flat({0, 1, 0}) == 3);
  CHECK(g.node_flat({1, 0, 0}) == 9);
}

TEST_CASE("locate and positions") {
  const auto g = Grid::build(2, 2.0, 5, 1);
  const std::array<double, 2> p{-1.0, 2.0};
  const auto node = g.locate(p);
  CHECK(node[0] == 1);
  CHECK(node[1] == 4);
  const auto pos = g.position(node);
  CHECK(pos[0] == doctest::Approx(-1.0));
  CHECK(pos[1] == doctest::Approx(2.0));
  CHECK(g.interior({1, 3, 0}));
  CHECK_FALSE(g.interior({1, 4, 0}));
  CHECK(g.interior_along({1, 4, 0}, 0));
}

TEST_CASE("normalization round trip") {
  const auto g = Grid::build(2, 1.0, 5, 3);
  const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(static_cast<Eigen::Index>(g.size()), -1, 1);
  CHECK((to_nodal(g, to_normalized(g, x)) - x).cwiseAbs().maxCoeff() < 1e-15);
}
