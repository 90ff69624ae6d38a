#pragma once

#include <Eigen/Dense>
#include <vector>

#include "sckls/grid.hpp"

namespace sckls {

enum class KernelKind { Gaussian, Epanechnikov };

/// Univariate kernel. Gaussian: exp(-t^2/2)/sqrt(2*pi). Epanechnikov:
/// 0.75*(1-t^2) on |t| <= 1, zero outside.
double kernel_value(KernelKind kind, double t);

/// Product of univariate kernels over the coordinates of u.
double product_kernel_weight(KernelKind kind, const Eigen::VectorXd& u);

/// Either a fixed per-dimension bandwidth vector or a k-nearest-neighbour
/// rule with a scalar kernel on Euclidean distance / R_i.
struct BandwidthSpec {
  enum class Mode { Fixed, Knn };
  Mode mode = Mode::Fixed;
  Eigen::VectorXd h;  // Fixed: one entry per dimension
  int k = 0;          // Knn

  static BandwidthSpec fixed(Eigen::VectorXd bw);
  static BandwidthSpec fixed(double h, int d = 1);  // same h in every dimension
  static BandwidthSpec knn(int k);
};

struct WeightMatrix {
  Eigen::MatrixXd w;           // m x n, w(i, j) = weight of observation j at grid point i
  Eigen::VectorXd knn_radii;   // m, filled only in Knn mode
};

/// R_i = k-th smallest Euclidean distance from points.row(i) to the rows of
/// X, counting exact-zero distances. Requires 1 <= k <= n.
Eigen::VectorXd knn_radii(const Eigen::MatrixXd& X, const Eigen::MatrixXd& points, int k);

/// Kernel weights of every observation at every evaluation point. Throws
/// DataError naming the first evaluation point whose weight row is all zero
/// (the local fit there would be unidentified).
WeightMatrix weight_matrix(const Eigen::MatrixXd& X, const EvalGrid& grid,
                           const BandwidthSpec& bw, KernelKind kind);

}  // namespace sckls
