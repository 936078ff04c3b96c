#include "condfield/grid.hpp"

#include <cmath>
#include <string>

#include "condfield/error.hpp"

namespace condfield {

Grid Grid::build(int dim, double half_extent, int points_per_axis,
                 int components) {
  if (dim < 1 || dim > 3) {
    throw InvalidArgument("grid: dimension must be 1, 2 or 3 (got " +
                          std::to_string(dim) + ")");
  }
  if (!(half_extent > 0.0) || !std::isfinite(half_extent)) {
    throw InvalidArgument("grid: half-extent L must be positive and finite");
  }
  if (points_per_axis < 3 || points_per_axis % 2 == 0) {
    throw InvalidArgument(
        "grid: points per axis must be an odd integer >= 3 so the origin is a "
        "node (got " +
        std::to_string(points_per_axis) + ")");
  }
  if (components < 1) {
    throw InvalidArgument("grid: number of components must be >= 1");
  }
  Grid g;
  g.dim_ = dim;
  g.half_extent_ = half_extent;
  g.n_ = points_per_axis;
  g.components_ = components;
  g.spacing_ = 2.0 * half_extent / (points_per_axis - 1);
  g.weight_ = std::pow(g.spacing_, dim);
  g.sqrt_weight_ = std::sqrt(g.weight_);
  g.num_nodes_ = 1;
  for (int k = 0; k < dim; ++k) g.num_nodes_ *= static_cast<std::size_t>(points_per_axis);
  return g;
}

std::array<double, 3> Grid::position(const NodeIndex& node) const {
  std::array<double, 3> x{0.0, 0.0, 0.0};
  for (int k = 0; k < dim_; ++k) x[k] = coordinate(node[k]);
  return x;
}

NodeIndex Grid::origin() const {
  NodeIndex node{0, 0, 0};
  for (int k = 0; k < dim_; ++k) node[k] = n_ / 2;
  return node;
}

bool Grid::contains(const NodeIndex& node) const {
  for (int k = 0; k < 3; ++k) {
    if (k < dim_) {
      if (node[k] < 0 || node[k] >= n_) return false;
    } else if (node[k] != 0) {
      return false;
    }
  }
  return true;
}

bool Grid::interior_along(const NodeIndex& node, int axis) const {
  return axis >= 0 && axis < dim_ && node[axis] > 0 && node[axis] < n_ - 1;
}

bool Grid::interior(const NodeIndex& node) const {
  if (!contains(node)) return false;
  for (int k = 0; k < dim_; ++k) {
    if (!interior_along(node, k)) return false;
  }
  return true;
}

std::size_t Grid::node_flat(const NodeIndex& node) const {
  std::size_t flat = 0;
  for (int k = 0; k < dim_; ++k) {
    flat = flat * static_cast<std::size_t>(n_) + static_cast<std::size_t>(node[k]);
  }
  return flat;
}

NodeIndex Grid::node_from_flat(std::size_t node_flat) const {
  NodeIndex node{0, 0, 0};
  for (int k = dim_ - 1; k >= 0; --k) {
    node[k] = static_cast<int>(node_flat % static_cast<std::size_t>(n_));
    node_flat /= static_cast<std::size_t>(n_);
  }
  return node;
}

std::pair<int, NodeIndex> Grid::unflat(std::size_t flat_index) const {
  const auto component = static_cast<int>(flat_index / num_nodes_);
  return {component, node_from_flat(flat_index % num_nodes_)};
}

NodeIndex Grid::locate(std::span<const double> point) const {
  if (static_cast<int>(point.size()) != dim_) {
    throw InvalidArgument("grid: point has " + std::to_string(point.size()) +
                          " coordinates, grid dimension is " +
                          std::to_string(dim_));
  }
  NodeIndex node{0, 0, 0};
  for (int k = 0; k < dim_; ++k) {
    const double s = (point[k] + half_extent_) / spacing_;
    const double r = std::round(s);
    if (std::abs(s - r) > 1e-9 || r < 0 || r > n_ - 1) {
      throw InvalidArgument("grid: point is not a lattice node (axis " +
                            std::to_string(k) + ", coordinate " +
                            std::to_string(point[k]) + ")");
    }
    node[k] = static_cast<int>(r);
  }
  return node;
}

Eigen::VectorXd to_normalized(const Grid& grid, const Eigen::VectorXd& nodal) {
  if (static_cast<std::size_t>(nodal.size()) != grid.size()) {
    throw InvalidArgument("grid: field size does not match the grid");
  }
  return nodal * grid.sqrt_weight();
}

Eigen::VectorXd to_nodal(const Grid& grid, const Eigen::VectorXd& normalized) {
  if (static_cast<std::size_t>(normalized.size()) != grid.size()) {
    throw InvalidArgument("grid: field size does not match the grid");
  }
  return normalized / grid.sqrt_weight();
}

Eigen::VectorXd PointFunctional::normalized(const Grid& grid) const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.size()));
  for (const auto& t : terms) {
    v[static_cast<Eigen::Index>(grid.flat(t.component, t.node))] +=
        t.coefficient / grid.sqrt_weight();
  }
  return v;
}

double PointFunctional::apply(const Grid& grid,
                              const Eigen::VectorXd& normalized_field) const {
  double s = 0.0;
  for (const auto& t : terms) {
    s += t.coefficient *
         normalized_field[static_cast<Eigen::Index>(grid.flat(t.component, t.node))];
  }
  return s / grid.sqrt_weight();
}

PointFunctional point_functional(const Grid& grid, const NodeIndex& node,
                                 int component, Evaluation kind, int axis) {
  if (!grid.contains(node)) {
    throw InvalidArgument("point functional: node outside the grid");
  }
  if (component < 0 || component >= grid.components()) {
    throw InvalidArgument("point functional: component index out of range");
  }
  PointFunctional ell;
  if (kind == Evaluation::value) {
    ell.terms.push_back({component, node, 1.0});
    return ell;
  }
  if (axis < 0 || axis >= grid.dim()) {
    throw InvalidArgument("point functional: derivative axis out of range");
  }
  if (!grid.interior_along(node, axis)) {
    throw InvalidArgument(
        "point functional: derivative requested at a boundary node");
  }
  const double c = 1.0 / (2.0 * grid.spacing());
  NodeIndex plus = node;
  NodeIndex minus = node;
  ++plus[axis];
  --minus[axis];
  ell.terms.push_back({component, plus, c});
  ell.terms.push_back({component, minus, -c});
  return ell;
}

PointFunctional point_functional(const Grid& grid, std::span<const double> point,
                                 int component, Evaluation kind, int axis) {
  return point_functional(grid, grid.locate(point), component, kind, axis);
}

}  // namespace condfield
