#pragma once

#include <Eigen/Dense>
#include <array>
#include <optional>
#include <vector>

#include "sckls/bandwidth.hpp"
#include "sckls/grid.hpp"
#include "sckls/kernels.hpp"
#include "sckls/qp.hpp"

namespace sckls {

enum class Curvature { Concave, Convex, None };
enum class Monotone { Increasing, Decreasing, Free };

struct ShapeSpec {
  Curvature curvature = Curvature::Concave;
  std::vector<Monotone> monotonicity;  // one entry per input dimension

  bool trivial() const;
  static ShapeSpec concave_increasing(int d);
  static ShapeSpec convex_increasing(int d);
  static ShapeSpec concave_only(int d);
  static ShapeSpec convex_only(int d);
  static ShapeSpec monotone_increasing(int d);
};

struct SolverDiagnostics {
  QpStatus status = QpStatus::Optimal;
  KktResiduals kkt;
  int iterations = 0;
  int rounds = 0;
  std::int64_t constraint_rows = 0;
  bool polished = false;
  double qp_objective = 0.0;
};

/// Piecewise-hyperplane estimate: one supporting plane (a_i, b_i) per
/// evaluation point. Concave models satisfy a_i - a_l >= b_i.(x_i - x_l)
/// within 1e-6; Increasing dimensions have b >= -1e-9 (Convex/Decreasing
/// flip the signs).
struct HyperplaneModel {
  EvalGrid grid;
  Eigen::VectorXd a;  // m
  Eigen::MatrixXd b;  // m x d
  ShapeSpec shape;
  BandwidthSpec bandwidth;
  KernelKind kernel = KernelKind::Gaussian;
  SolverDiagnostics diagnostics;
  double sse = 0.0;  // kernel-weighted constrained objective

  int m() const { return static_cast<int>(a.size()); }
  int d() const { return static_cast<int>(b.cols()); }
};

struct LocalLinearFit {
  EvalGrid grid;
  Eigen::VectorXd a;
  Eigen::MatrixXd b;
  Eigen::VectorXd point_objective;  // weighted SSE contribution per point
  double sse = 0.0;
};

/// Weighted SSE of the plane family against (X, y) under the given weights:
/// sum_i sum_j w(i,j) * (y_j - a_i - (X_j - x_i)'b_i)^2.
double hyperplane_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            const Eigen::MatrixXd& w, const EvalGrid& grid,
                            const Eigen::VectorXd& a, const Eigen::MatrixXd& b);

/// Largest violation of the model's own shape constraints (0 when feasible).
double shape_violation(const HyperplaneModel& model);

/// Caches everything about (X, grid, weights, shape) that does not depend on
/// the response, so repeated fits against new responses (bootstrap
/// replicates) skip the weight and constraint setup.
class ShapeFitEngine {
 public:
  ShapeFitEngine(Eigen::MatrixXd X, EvalGrid grid, const BandwidthSpec& bw, KernelKind kernel,
                 ShapeSpec shape);
  /// CNLS-style construction with an explicit weight matrix.
  ShapeFitEngine(Eigen::MatrixXd X, EvalGrid grid, Eigen::MatrixXd weights, ShapeSpec shape,
                 const BandwidthSpec& bw_label, KernelKind kernel_label);

  LocalLinearFit local_linear(const Eigen::VectorXd& y, double ridge = 0.0) const;
  HyperplaneModel fit(const Eigen::VectorXd& y, bool lazy = true) const;
  double constrained_sse(const Eigen::VectorXd& y, bool lazy = true) const;

  const Eigen::MatrixXd& weights() const { return W_; }
  const EvalGrid& grid() const { return grid_; }
  const Eigen::MatrixXd& X() const { return X_; }
  const ShapeSpec& shape() const { return shape_; }
  const Eigen::VectorXd& knn_radii() const { return knn_radii_; }

 private:
  void prepare();
  QpProblem base_problem(const Eigen::VectorXd& y) const;

  Eigen::MatrixXd X_;
  EvalGrid grid_;
  BandwidthSpec bw_;
  KernelKind kernel_;
  ShapeSpec shape_;
  Eigen::MatrixXd W_;                           // m x n
  Eigen::VectorXd knn_radii_;                   // set for Knn bandwidths
  std::vector<Eigen::MatrixXd> M_;              // per-point normal matrices
  std::vector<Eigen::LDLT<Eigen::MatrixXd>> Mfac_;
  Eigen::SparseMatrix<double> P_;
  Eigen::SparseMatrix<double> Gsign_;
  Eigen::VectorXd csign_;
  std::vector<LazyRow> seed_rows_;
};

LocalLinearFit local_linear_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                const EvalGrid& grid, const BandwidthSpec& bw,
                                KernelKind kernel, double ridge = 0.0);

HyperplaneModel sckls_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                          const EvalGrid& grid, const BandwidthSpec& bw, KernelKind kernel,
                          const ShapeSpec& shape, bool lazy = true);

/// Least squares over concave (or convex) piecewise planes anchored at the
/// observation points themselves; duplicate rows are merged with weights.
HyperplaneModel cnls_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                         const ShapeSpec& shape);

struct AffineFit {
  double intercept = 0.0;
  Eigen::VectorXd slope;
};

/// Least-squares affine fit with slopes constrained to be >= 0.
AffineFit monotone_linear_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

/// Unconstrained least-squares affine fit.
AffineFit affine_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

/// Concave: min over planes; Convex: max; curvature None: the plane of the
/// nearest evaluation point (ties to the lowest index).
double predict(const HyperplaneModel& model, const Eigen::VectorXd& x);
Eigen::VectorXd predict(const HyperplaneModel& model, const Eigen::MatrixXd& points);

/// Index of the supporting plane used by predict at x (lowest index on ties).
int active_plane(const HyperplaneModel& model, const Eigen::VectorXd& x);

struct MarginalStats {
  std::vector<double> percentiles;             // requested percentile levels
  Eigen::MatrixXd gradient_percentiles;        // #levels x d
  std::vector<std::array<int, 2>> ratio_pairs; // (k, l) for b_k / b_l
  Eigen::MatrixXd ratio_percentiles;           // #levels x #pairs, +inf sentinel possible
};

MarginalStats marginal_stats(const HyperplaneModel& model,
                             const Eigen::MatrixXd* points = nullptr,
                             const std::vector<double>& percentiles = {10, 25, 50, 75, 90});

struct MpssResult {
  double t = 0.0;
  Eigen::VectorXd input;
  double output = 0.0;
};

/// Maximizes predict(model, t*direction)/t over [t_lo, t_hi] by enumerating
/// the breakpoints of the piecewise-linear restriction. Ties go to larger t.
MpssResult mpss(const HyperplaneModel& model, const Eigen::VectorXd& direction, double t_lo,
                double t_hi);

}  // namespace sckls
