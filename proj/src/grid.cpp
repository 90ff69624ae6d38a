#include "sckls/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>
#include <unordered_map>

#include "sckls/errors.hpp"

namespace sckls {

EvalGrid EvalGrid::external(Eigen::MatrixXd pts) {
  EvalGrid g;
  g.points = std::move(pts);
  g.provenance = GridProvenance::External;
  return g;
}

namespace {

void check_counts(const Eigen::MatrixXd& X, const std::vector<int>& counts) {
  if (X.rows() < 2) throw DataError("grid construction needs at least 2 observations");
  if (static_cast<int>(counts.size()) != X.cols())
    throw DataError("grid counts must give one entry per input dimension");
  for (int c : counts)
    if (c < 2) throw DataError("grid counts must all be >= 2");
  for (int k = 0; k < X.cols(); ++k)
    if (X.col(k).maxCoeff() <= X.col(k).minCoeff())
      throw DataError("input column " + std::to_string(k + 1) +
                      " is constant; grid axis would have zero range");
}

EvalGrid cartesian(const std::vector<Eigen::VectorXd>& axes, GridProvenance prov) {
  const int d = static_cast<int>(axes.size());
  std::int64_t m = 1;
  for (const auto& ax : axes) m *= ax.size();
  EvalGrid g;
  g.points.resize(m, d);
  g.lattice_shape.resize(d);
  for (int k = 0; k < d; ++k) g.lattice_shape[k] = static_cast<int>(axes[k].size());
  g.cell_index.resize(m);
  std::vector<int> idx(d, 0);
  for (std::int64_t r = 0; r < m; ++r) {
    for (int k = 0; k < d; ++k) g.points(r, k) = axes[k][idx[k]];
    g.cell_index[r] = r;
    for (int k = d - 1; k >= 0; --k) {  // row-major, dimension 0 slowest
      if (++idx[k] < g.lattice_shape[k]) break;
      idx[k] = 0;
    }
  }
  g.provenance = prov;
  return g;
}

double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

EvalGrid uniform_grid(const Eigen::MatrixXd& X, const std::vector<int>& counts) {
  check_counts(X, counts);
  const int d = static_cast<int>(X.cols());
  std::vector<Eigen::VectorXd> axes(d);
  for (int k = 0; k < d; ++k) {
    const double lo = X.col(k).minCoeff(), hi = X.col(k).maxCoeff();
    axes[k] = Eigen::VectorXd::LinSpaced(counts[k], lo, hi);
  }
  return cartesian(axes, GridProvenance::Uniform);
}

EvalGrid percentile_grid(const Eigen::MatrixXd& X, const std::vector<int>& counts,
                         double kde_bw_scale) {
  check_counts(X, counts);
  const int d = static_cast<int>(X.cols());
  const double n = static_cast<double>(X.rows());
  std::vector<Eigen::VectorXd> axes(d);
  for (int k = 0; k < d; ++k) {
    const Eigen::VectorXd col = X.col(k);
    const double lo = col.minCoeff(), hi = col.maxCoeff();
    const double mean = col.mean();
    const double sd = std::sqrt((col.array() - mean).square().sum() / (n - 1.0));
    const double h = kde_bw_scale * 1.06 * sd * std::pow(n, -0.2);
    axes[k].resize(counts[k]);
    auto cdf = [&](double c) {
      double s = 0.0;
      for (int j = 0; j < col.size(); ++j) s += norm_cdf((c - col[j]) / h);
      return s / n;
    };
    axes[k][0] = lo;
    axes[k][counts[k] - 1] = hi;
    for (int i = 1; i + 1 < counts[k]; ++i) {
      const double target = static_cast<double>(i) / (counts[k] - 1);
      double a = lo, b = hi;
      for (int it = 0; it < 200 && b - a > 1e-14 * (hi - lo); ++it) {
        const double mid = 0.5 * (a + b);
        (cdf(mid) < target ? a : b) = mid;
      }
      axes[k][i] = 0.5 * (a + b);
    }
  }
  return cartesian(axes, GridProvenance::Percentile);
}

namespace {

// Wolfe's min-norm-point algorithm over the translated points Q = X - p.
// Returns the squared distance from the origin to conv(Q).
double min_norm_sq(const Eigen::MatrixXd& Q) {
  const int n = static_cast<int>(Q.rows());
  const int d = static_cast<int>(Q.cols());
  double scale2 = 0.0;
  for (int i = 0; i < n; ++i) scale2 = std::max(scale2, Q.row(i).squaredNorm());
  if (scale2 == 0.0) return 0.0;
  const double eps = 1e-12 * scale2;

  int start = 0;
  for (int i = 1; i < n; ++i)
    if (Q.row(i).squaredNorm() < Q.row(start).squaredNorm()) start = i;

  std::vector<int> corral{start};
  Eigen::VectorXd lambda = Eigen::VectorXd::Ones(1);
  Eigen::VectorXd x = Q.row(start).transpose();

  for (int major = 0; major < 1000; ++major) {
    int best = 0;
    double bestdot = Q.row(0) * x;
    for (int i = 1; i < n; ++i) {
      const double dot = Q.row(i) * x;
      if (dot < bestdot) {
        bestdot = dot;
        best = i;
      }
    }
    if (bestdot >= x.squaredNorm() - eps) break;
    if (std::find(corral.begin(), corral.end(), best) == corral.end()) {
      corral.push_back(best);
      lambda.conservativeResize(lambda.size() + 1);
      lambda[lambda.size() - 1] = 0.0;
    }

    for (int minor = 0; minor < 1000; ++minor) {
      const int s = static_cast<int>(corral.size());
      Eigen::MatrixXd S(s, d);
      for (int i = 0; i < s; ++i) S.row(i) = Q.row(corral[i]);
      // Affine minimizer of ||S' a|| over sum(a) = 1, parameterized on the
      // simplex-sum hyperplane so the least-squares solve is unconstrained.
      Eigen::VectorXd alpha;
      if (s == 1) {
        alpha = Eigen::VectorXd::Ones(1);
      } else {
        Eigen::MatrixXd N = Eigen::MatrixXd::Zero(s, s - 1);
        for (int j = 0; j + 1 < s; ++j) {
          N(j, j) = 1.0;
          N(j + 1, j) = -1.0;
        }
        const Eigen::VectorXd c = Eigen::VectorXd::Constant(s, 1.0 / s);
        const Eigen::MatrixXd A = S.transpose() * N;  // d x (s-1)
        const Eigen::VectorXd b = -S.transpose() * c;
        const Eigen::VectorXd gamma = A.colPivHouseholderQr().solve(b);
        alpha = c + N * gamma;
      }
      if (alpha.minCoeff() > 1e-12) {
        lambda = alpha;
        x = S.transpose() * alpha;
        break;
      }
      double theta = 1.0;
      for (int i = 0; i < s; ++i)
        if (alpha[i] <= 1e-12) theta = std::min(theta, lambda[i] / (lambda[i] - alpha[i]));
      lambda = (1.0 - theta) * lambda + theta * alpha;
      std::vector<int> keep;
      for (int i = 0; i < s; ++i)
        if (lambda[i] > 1e-12) keep.push_back(i);
      if (keep.empty()) keep.push_back(0);
      std::vector<int> nc;
      Eigen::VectorXd nl(keep.size());
      for (std::size_t i = 0; i < keep.size(); ++i) {
        nc.push_back(corral[keep[i]]);
        nl[static_cast<int>(i)] = lambda[keep[i]];
      }
      nl /= nl.sum();
      corral = std::move(nc);
      lambda = std::move(nl);
      x = Eigen::VectorXd::Zero(d);
      for (std::size_t i = 0; i < corral.size(); ++i)
        x += lambda[static_cast<int>(i)] * Q.row(corral[i]).transpose();
    }
  }
  return std::max(0.0, x.squaredNorm());
}

}  // namespace

double distance_to_hull(const Eigen::VectorXd& p, const Eigen::MatrixXd& X) {
  if (X.rows() == 0) throw DataError("convex hull of an empty sample");
  Eigen::MatrixXd Q = X.rowwise() - p.transpose();
  return std::sqrt(min_norm_sq(Q));
}

EvalGrid convex_hull_filter(const EvalGrid& grid, const Eigen::MatrixXd& X, double tol) {
  if (X.cols() != grid.points.cols())
    throw DataError("hull filter: dimension mismatch between grid and sample");
  const int d = static_cast<int>(X.cols());
  if (X.rows() < d + 1)
    throw IdentificationError("convex hull filter needs at least d+1 observations");
  {
    Eigen::MatrixXd C = X.rowwise() - X.colwise().mean();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(C);
    qr.setThreshold(1e-10);
    if (qr.rank() < d)
      throw IdentificationError("observations are affinely dependent; hull has empty interior");
  }
  double max_abs = 0.0;
  for (int i = 0; i < X.rows(); ++i) max_abs = std::max(max_abs, X.row(i).cwiseAbs().maxCoeff());
  const double dist_tol = tol * (1.0 + max_abs);

  EvalGrid out;
  out.provenance = grid.provenance;
  out.lattice_shape = grid.lattice_shape;
  std::vector<int> keep;
  for (int i = 0; i < grid.m(); ++i)
    if (distance_to_hull(grid.points.row(i).transpose(), X) <= dist_tol) keep.push_back(i);
  if (keep.empty()) throw IdentificationError("hull filter removed every evaluation point");
  out.points.resize(keep.size(), grid.points.cols());
  for (std::size_t r = 0; r < keep.size(); ++r) {
    out.points.row(r) = grid.points.row(keep[r]);
    if (!grid.cell_index.empty()) out.cell_index.push_back(grid.cell_index[keep[r]]);
  }
  return out;
}

AdjacencyPairs adjacency_pairs(const EvalGrid& grid) {
  if (!grid.is_lattice() || grid.cell_index.size() != static_cast<std::size_t>(grid.m()))
    throw DataError("adjacency requires a lattice grid with cell bookkeeping");
  const int d = static_cast<int>(grid.lattice_shape.size());
  std::unordered_map<std::int64_t, int> cell_to_point;
  for (int i = 0; i < grid.m(); ++i) cell_to_point[grid.cell_index[i]] = i;

  std::vector<std::int64_t> strides(d, 1);
  for (int k = d - 2; k >= 0; --k)
    strides[k] = strides[k + 1] * grid.lattice_shape[k + 1];

  AdjacencyPairs adj;
  std::vector<int> coord(d), off(d, -1);
  for (int i = 0; i < grid.m(); ++i) {
    std::int64_t rem = grid.cell_index[i];
    for (int k = 0; k < d; ++k) {
      coord[k] = static_cast<int>(rem / strides[k]);
      rem %= strides[k];
    }
    std::fill(off.begin(), off.end(), -1);
    while (true) {
      bool zero = true, valid = true;
      std::int64_t flat = 0;
      for (int k = 0; k < d; ++k) {
        if (off[k] != 0) zero = false;
        const int c = coord[k] + off[k];
        if (c < 0 || c >= grid.lattice_shape[k]) {
          valid = false;
          break;
        }
        flat += c * strides[k];
      }
      if (!zero && valid) {
        auto it = cell_to_point.find(flat);
        if (it != cell_to_point.end()) adj.ordered.emplace_back(i, it->second);
      }
      int k = d - 1;
      for (; k >= 0; --k) {
        if (++off[k] <= 1) break;
        off[k] = -1;
      }
      if (k < 0) break;
    }
  }
  return adj;
}

}  // namespace sckls
