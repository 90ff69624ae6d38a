#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "sckls/errors.hpp"
#include "sckls/grid.hpp"
#include "sckls/rng.hpp"

using namespace sckls;

namespace {

Eigen::MatrixXd col(std::vector<double> v) {
  return Eigen::Map<Eigen::MatrixXd>(v.data(), v.size(), 1);
}

// Exact 2-D hull membership oracle: p is inside iff it is on the inner side
// of every edge of the brute-force hull (cross-product test against all
// point pairs that form an edge).
bool inside_hull_2d(const Eigen::Vector2d& p, const Eigen::MatrixXd& X, double tol) {
  const int n = static_cast<int>(X.rows());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const Eigen::Vector2d a = X.row(i), b = X.row(j);
      const Eigen::Vector2d e = b - a;
      if (e.norm() < 1e-15) continue;
      bool all_left = true;
      for (int k = 0; k < n && all_left; ++k) {
        const Eigen::Vector2d c = X.row(k);
        if (e.x() * (c.y() - a.y()) - e.y() * (c.x() - a.x()) < -1e-12) all_left = false;
      }
      if (!all_left) continue;  // (i, j) is not a hull edge
      if (e.x() * (p.y() - a.y()) - e.y() * (p.x() - a.x()) < -tol) return false;
    }
  return true;
}

}  // namespace

TEST_CASE("uniform grid spaces each axis equally") {
  const Eigen::MatrixXd X = col({0.0, 3.0, 10.0, 7.0});
  const EvalGrid g = uniform_grid(X, {5});
  REQUIRE(g.m() == 5);
  for (int i = 0; i < 5; ++i) CHECK(g.points(i, 0) == doctest::Approx(2.5 * i));
  CHECK(g.is_lattice());
  CHECK(g.provenance == GridProvenance::Uniform);
}

TEST_CASE("uniform grid takes the Cartesian product with dimension 0 slowest") {
  Eigen::MatrixXd X(2, 2);
  X << 0.0, 0.0, 1.0, 1.0;
  const EvalGrid g = uniform_grid(X, {2, 3});
  REQUIRE(g.m() == 6);
  CHECK(g.points.row(0).isApprox(Eigen::RowVector2d(0.0, 0.0)));
  CHECK(g.points.row(1).isApprox(Eigen::RowVector2d(0.0, 0.5)));
  CHECK(g.points.row(2).isApprox(Eigen::RowVector2d(0.0, 1.0)));
  CHECK(g.points.row(3).isApprox(Eigen::RowVector2d(1.0, 0.0)));
  CHECK(g.points.row(5).isApprox(Eigen::RowVector2d(1.0, 1.0)));
}

TEST_CASE("uniform grid rejects constant columns by name") {
  Eigen::MatrixXd X(3, 2);
  X << 0.0, 5.0, 1.0, 5.0, 2.0, 5.0;
  CHECK_THROWS_WITH_AS(uniform_grid(X, {2, 2}), doctest::Contains("column 2"), DataError);
}

TEST_CASE("percentile grid hits the observed extremes and stays sorted") {
  rng::Stream s(11);
  Eigen::MatrixXd X(400, 1);
  for (int i = 0; i < X.rows(); ++i) X(i, 0) = s.uniform(0.0, 10.0);
  const EvalGrid g = percentile_grid(X, {9});
  REQUIRE(g.m() == 9);
  CHECK(g.points(0, 0) == doctest::Approx(X.col(0).minCoeff()));
  CHECK(g.points(8, 0) == doctest::Approx(X.col(0).maxCoeff()));
  for (int i = 1; i < 9; ++i) CHECK(g.points(i, 0) > g.points(i - 1, 0));
}

TEST_CASE("percentile grid approaches uniform spacing for uniform data") {
  rng::Stream s(13);
  Eigen::MatrixXd X(20000, 1);
  for (int i = 0; i < X.rows(); ++i) X(i, 0) = s.uniform(0.0, 10.0);
  const EvalGrid p = percentile_grid(X, {11});
  const EvalGrid u = uniform_grid(X, {11});
  for (int i = 0; i < 11; ++i)
    CHECK(std::abs(p.points(i, 0) - u.points(i, 0)) < 0.25);
}

TEST_CASE("percentile grid spacing follows the skew of exponential data") {
  rng::Stream s(17);
  Eigen::MatrixXd X(5000, 1);
  for (int i = 0; i < X.rows(); ++i) {
    // truncated exponential on [1, 10], rate 3: denser near 1
    const double u = s.uniform01();
    const double e3 = std::exp(-3.0), e30 = std::exp(-30.0);
    X(i, 0) = -std::log(e3 - u * (e3 - e30)) / 3.0;
  }
  const EvalGrid g = percentile_grid(X, {8});
  double prev_gap = 0.0;
  bool nondecreasing = true;
  for (int i = 1; i < 8; ++i) {
    const double gap = g.points(i, 0) - g.points(i - 1, 0);
    if (i > 1 && gap < prev_gap * 0.999) nondecreasing = false;
    prev_gap = gap;
  }
  CHECK(nondecreasing);
}

TEST_CASE("hull membership at the unit square") {
  Eigen::MatrixXd X(4, 2);
  X << 0, 0, 1, 0, 0, 1, 1, 1;
  CHECK(distance_to_hull(Eigen::Vector2d(0.5, 0.5), X) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(distance_to_hull(Eigen::Vector2d(1.0, 0.5), X) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(distance_to_hull(Eigen::Vector2d(2.0, 0.5), X) == doctest::Approx(1.0));
  CHECK(distance_to_hull(Eigen::Vector2d(2.0, 2.0), X) == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("hull filter matches the 2-D edge oracle on random clouds") {
  rng::Stream s(23);
  Eigen::MatrixXd X(40, 2);
  for (int i = 0; i < X.rows(); ++i) {
    X(i, 0) = s.uniform(0.0, 4.0);
    X(i, 1) = s.uniform(0.0, 4.0);
  }
  const EvalGrid g = uniform_grid(X, {9, 9});
  const EvalGrid kept = convex_hull_filter(g, X);
  std::set<int> kept_cells(kept.cell_index.begin(), kept.cell_index.end());
  int oracle_kept = 0;
  for (int i = 0; i < g.m(); ++i) {
    const bool in = inside_hull_2d(g.points.row(i).transpose(), X, 1e-9);
    if (in) ++oracle_kept;
    CHECK(in == (kept_cells.count(static_cast<int>(g.cell_index[i])) > 0));
  }
  CHECK(kept.m() == oracle_kept);
  CHECK(kept.m() < g.m());  // corners of the bounding box fall outside
  // order of survivors is preserved
  CHECK(std::is_sorted(kept.cell_index.begin(), kept.cell_index.end()));
}

TEST_CASE("hull filter keeps every lattice point of box data") {
  Eigen::MatrixXd X(4, 2);
  X << 0, 0, 1, 0, 0, 1, 1, 1;
  const EvalGrid g = uniform_grid(X, {5, 5});
  CHECK(convex_hull_filter(g, X).m() == 25);
}

TEST_CASE("degenerate hull is rejected") {
  Eigen::MatrixXd X(5, 2);
  for (int i = 0; i < 5; ++i) {
    X(i, 0) = i;
    X(i, 1) = 2.0 * i + 1.0;  // collinear
  }
  const EvalGrid g = EvalGrid::external(Eigen::MatrixXd::Zero(1, 2));
  CHECK_THROWS_AS(convex_hull_filter(g, X), IdentificationError);
}

TEST_CASE("adjacency pair counts match the enumeration oracle") {
  Eigen::MatrixXd X(2, 2);
  X << 0, 0, 1, 1;
  CHECK(adjacency_pairs(uniform_grid(X, {3, 3})).ordered.size() == 40);
  CHECK(adjacency_pairs(uniform_grid(X, {2, 2})).ordered.size() == 12);  // 6 unordered
  const Eigen::MatrixXd X1 = col({0.0, 1.0});
  CHECK(adjacency_pairs(uniform_grid(X1, {5})).ordered.size() == 8);
}

TEST_CASE("adjacency is symmetric, irreflexive, and interior-complete") {
  Eigen::MatrixXd X(2, 3);
  X << 0, 0, 0, 1, 1, 1;
  const EvalGrid g = uniform_grid(X, {3, 3, 3});
  const AdjacencyPairs adj = adjacency_pairs(g);
  std::set<std::pair<int, int>> pairs(adj.ordered.begin(), adj.ordered.end());
  CHECK(pairs.size() == adj.ordered.size());
  int center_degree = 0;
  for (const auto& [i, l] : pairs) {
    CHECK(i != l);
    CHECK(pairs.count({l, i}) == 1);
    if (i == 13) ++center_degree;  // middle cell of the 3x3x3 lattice
  }
  CHECK(center_degree == 26);  // 3^3 - 1
}

TEST_CASE("adjacency after hull filtering keeps only surviving pairs") {
  Eigen::MatrixXd X(3, 2);
  X << 0, 0, 2, 0, 0, 2;  // triangle: upper-right of the box is outside
  const EvalGrid g = uniform_grid(X, {3, 3});
  const EvalGrid kept = convex_hull_filter(g, X);
  REQUIRE(kept.m() == 6);  // anti-diagonal and below
  const AdjacencyPairs adj = adjacency_pairs(kept);
  for (const auto& [i, l] : adj.ordered) {
    CHECK(i >= 0);
    CHECK(i < kept.m());
    CHECK(l >= 0);
    CHECK(l < kept.m());
  }
  // point (0,0) has neighbors (0,1),(1,0),(1,1): 3 outgoing pairs
  int deg0 = 0;
  for (const auto& [i, l] : adj.ordered)
    if (i == 0) ++deg0;
  CHECK(deg0 == 3);
}
