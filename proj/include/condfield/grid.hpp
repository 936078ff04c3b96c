#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace condfield {

/// Lattice multi-index; unused trailing axes stay 0.
using NodeIndex = std::array<int, 3>;

/**
 * Regular lattice on the centered cube [-L, L]^d with n (odd) points per axis.
 *
 * Every node carries the same quadrature weight h^d. Fields are stored as flat
 * vectors of length N * n^d in component-major order:
 *
 *   flat = component * n^d + sum_k node[k] * n^(d-1-k)
 *
 * so the last axis varies fastest. Operators act on weight-normalized
 * coordinates phi~ = sqrt(w) * phi, in which the L2 inner product is the
 * Euclidean one.
 */
class Grid {
 public:
  /// Throws InvalidArgument for d outside {1,2,3}, even or < 3 points, L <= 0, N < 1.
  static Grid build(int dim, double half_extent, int points_per_axis,
                    int components);

  int dim() const { return dim_; }
  double half_extent() const { return half_extent_; }
  int points_per_axis() const { return n_; }
  int components() const { return components_; }
  double spacing() const { return spacing_; }
  double weight() const { return weight_; }
  double sqrt_weight() const { return sqrt_weight_; }

  std::size_t num_nodes() const { return num_nodes_; }
  std::size_t size() const { return num_nodes_ * components_; }

  double coordinate(int axis_index) const {
    return -half_extent_ + spacing_ * axis_index;
  }
  std::array<double, 3> position(const NodeIndex& node) const;
  std::array<double, 3> position(std::size_t node_flat) const {
    return position(node_from_flat(node_flat));
  }

  NodeIndex origin() const;
  bool contains(const NodeIndex& node) const;
  /// True when every used axis has a neighbor on both sides.
  bool interior(const NodeIndex& node) const;
  bool interior_along(const NodeIndex& node, int axis) const;

  std::size_t node_flat(const NodeIndex& node) const;
  NodeIndex node_from_flat(std::size_t node_flat) const;
  std::size_t flat(int component, const NodeIndex& node) const {
    return static_cast<std::size_t>(component) * num_nodes_ + node_flat(node);
  }
  std::pair<int, NodeIndex> unflat(std::size_t flat_index) const;

  /// Lattice node at `point` (d coordinates), throws InvalidArgument when off-lattice.
  NodeIndex locate(std::span<const double> point) const;

  /// Sum of all quadrature weights (one component).
  double total_weight() const { return weight_ * static_cast<double>(num_nodes_); }

 private:
  Grid() = default;

  int dim_ = 1;
  double half_extent_ = 1.0;
  int n_ = 3;
  int components_ = 1;
  double spacing_ = 1.0;
  double weight_ = 1.0;
  double sqrt_weight_ = 1.0;
  std::size_t num_nodes_ = 0;
};

/// Nodal (physical) values -> weight-normalized coordinates.
Eigen::VectorXd to_normalized(const Grid& grid, const Eigen::VectorXd& nodal);
/// Weight-normalized coordinates -> nodal (physical) values.
Eigen::VectorXd to_nodal(const Grid& grid, const Eigen::VectorXd& normalized);

/// One term of a point functional: coefficient applied to a nodal value.
struct StencilTerm {
  int component = 0;
  NodeIndex node{};
  double coefficient = 0.0;
};

enum class Evaluation { value, derivative };

/**
 * Linear functional ell with ell(phi) = sum coefficient * phi_component(node).
 *
 * Coefficients are stored against nodal values; normalized() gives the vector
 * ell~ = W^{-1/2} ell with <ell~, phi~> = ell(phi).
 */
struct PointFunctional {
  std::vector<StencilTerm> terms;

  Eigen::VectorXd normalized(const Grid& grid) const;
  /// Applies the functional to a weight-normalized field.
  double apply(const Grid& grid, const Eigen::VectorXd& normalized_field) const;
};

/**
 * Value or second-order central-difference derivative of one component at a
 * lattice node. Derivative functionals need a neighbor on both sides of `axis`.
 */
PointFunctional point_functional(const Grid& grid, std::span<const double> point,
                                 int component, Evaluation kind, int axis = 0);
PointFunctional point_functional(const Grid& grid, const NodeIndex& node,
                                 int component, Evaluation kind, int axis = 0);

}  // namespace condfield
