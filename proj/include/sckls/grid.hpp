#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

namespace sckls {

enum class GridProvenance { Uniform, Percentile, External };

/// Set of evaluation points. When the grid is (a filtered subset of) a full
/// lattice, lattice_shape holds the per-dimension counts and cell_index maps
/// each surviving point to its flat cell in the original lattice (row-major,
/// dimension 0 slowest). Non-lattice grids leave both empty.
struct EvalGrid {
  Eigen::MatrixXd points;  // m x d
  std::vector<int> lattice_shape;
  std::vector<std::int64_t> cell_index;
  GridProvenance provenance = GridProvenance::External;

  int m() const { return static_cast<int>(points.rows()); }
  int d() const { return static_cast<int>(points.cols()); }
  bool is_lattice() const { return !lattice_shape.empty(); }

  static EvalGrid external(Eigen::MatrixXd pts);
};

/// Ordered index pairs (i, l), i != l, of grid points adjacent on the lattice
/// (all per-dimension offsets in {-1, 0, +1}). Symmetric: (i, l) present iff
/// (l, i) is.
struct AdjacencyPairs {
  std::vector<std::pair<int, int>> ordered;
};

/// Per-dimension equally spaced points spanning [min, max] of each coordinate
/// of X, combined as a Cartesian product. counts must all be >= 2.
EvalGrid uniform_grid(const Eigen::MatrixXd& X, const std::vector<int>& counts);

/// Points at equally spaced quantiles of a univariate Gaussian KDE per
/// dimension, anchored at the observed min and max. kde_bw_scale multiplies
/// the Silverman rule 1.06 * sd * n^(-1/5).
EvalGrid percentile_grid(const Eigen::MatrixXd& X, const std::vector<int>& counts,
                         double kde_bw_scale = 1.0);

/// Euclidean distance from p to the convex hull of the rows of X (0 inside).
double distance_to_hull(const Eigen::VectorXd& p, const Eigen::MatrixXd& X);

/// Keeps exactly the grid points inside or on the convex hull of the rows of
/// X. Surviving points keep their relative order and lattice cells.
EvalGrid convex_hull_filter(const EvalGrid& grid, const Eigen::MatrixXd& X,
                            double tol = 1e-9);

/// Moore-neighborhood pairs over the surviving lattice points.
AdjacencyPairs adjacency_pairs(const EvalGrid& grid);

}  // namespace sckls
