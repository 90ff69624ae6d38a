#include "sckls/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sckls/errors.hpp"

namespace sckls {

double kernel_value(KernelKind kind, double t) {
  switch (kind) {
    case KernelKind::Gaussian:
      return std::exp(-0.5 * t * t) / std::sqrt(2.0 * M_PI);
    case KernelKind::Epanechnikov: {
      const double u = std::abs(t);
      return u <= 1.0 ? 0.75 * (1.0 - u * u) : 0.0;
    }
  }
  return 0.0;
}

double product_kernel_weight(KernelKind kind, const Eigen::VectorXd& u) {
  double w = 1.0;
  for (int k = 0; k < u.size(); ++k) {
    w *= kernel_value(kind, u[k]);
    if (w == 0.0) return 0.0;
  }
  return w;
}

BandwidthSpec BandwidthSpec::fixed(Eigen::VectorXd bw) {
  if (bw.size() == 0) throw DataError("fixed bandwidth vector is empty");
  for (int k = 0; k < bw.size(); ++k)
    if (!(bw[k] > 0.0)) throw DataError("fixed bandwidths must be positive");
  BandwidthSpec s;
  s.mode = Mode::Fixed;
  s.h = std::move(bw);
  return s;
}

BandwidthSpec BandwidthSpec::fixed(double h, int d) {
  return fixed(Eigen::VectorXd::Constant(d, h));
}

BandwidthSpec BandwidthSpec::knn(int k) {
  if (k < 1) throw DataError("k-NN bandwidth needs k >= 1");
  BandwidthSpec s;
  s.mode = Mode::Knn;
  s.k = k;
  return s;
}

Eigen::VectorXd knn_radii(const Eigen::MatrixXd& X, const Eigen::MatrixXd& points, int k) {
  const int n = static_cast<int>(X.rows());
  if (k < 1 || k > n) throw DataError("k-NN radius: k out of range for the sample size");
  Eigen::VectorXd radii(points.rows());
  std::vector<double> dist(n);
  for (int i = 0; i < points.rows(); ++i) {
    for (int j = 0; j < n; ++j)
      dist[j] = (X.row(j) - points.row(i)).norm();
    std::nth_element(dist.begin(), dist.begin() + (k - 1), dist.end());
    radii[i] = dist[k - 1];
  }
  return radii;
}

WeightMatrix weight_matrix(const Eigen::MatrixXd& X, const EvalGrid& grid,
                           const BandwidthSpec& bw, KernelKind kind) {
  const int n = static_cast<int>(X.rows());
  const int d = static_cast<int>(X.cols());
  if (grid.d() != d) throw DataError("weight matrix: grid dimension mismatch");
  WeightMatrix out;
  out.w.resize(grid.m(), n);

  if (bw.mode == BandwidthSpec::Mode::Fixed) {
    if (bw.h.size() != d) throw DataError("fixed bandwidth must have one entry per dimension");
    Eigen::VectorXd u(d);
    for (int i = 0; i < grid.m(); ++i)
      for (int j = 0; j < n; ++j) {
        u = (X.row(j) - grid.points.row(i)).transpose().cwiseQuotient(bw.h);
        out.w(i, j) = product_kernel_weight(kind, u);
      }
  } else {
    out.knn_radii = knn_radii(X, grid.points, bw.k);
    for (int i = 0; i < grid.m(); ++i) {
      const double R = out.knn_radii[i];
      for (int j = 0; j < n; ++j) {
        const double dist = (X.row(j) - grid.points.row(i)).norm();
        // R = 0 means k observations coincide with the point; weight those by
        // K(0) and nothing else.
        if (R == 0.0)
          out.w(i, j) = dist == 0.0 ? kernel_value(kind, 0.0) : 0.0;
        else
          out.w(i, j) = kernel_value(kind, dist / R);
      }
    }
  }

  for (int i = 0; i < grid.m(); ++i) {
    if (out.w.row(i).sum() <= 0.0) {
      std::string where = "(";
      for (int k = 0; k < d; ++k)
        where += std::to_string(grid.points(i, k)) + (k + 1 < d ? ", " : ")");
      throw DataError("all kernel weights vanish at evaluation point " + std::to_string(i) +
                      " " + where + "; widen the bandwidth");
    }
  }
  return out;
}

}  // namespace sckls
