#include "sckls/partially_linear.hpp"

#include <cmath>
#include <iostream>
#include <limits>

#include "sckls/bandwidth.hpp"
#include "sckls/errors.hpp"

namespace sckls {

Eigen::MatrixXd residualize(const Eigen::MatrixXd& V, const Eigen::MatrixXd& X,
                            const BandwidthSpec& bw, KernelKind kernel, bool* ridged) {
  if (V.rows() != X.rows()) throw DataError("V and X row counts differ");
  ShapeSpec free_shape;
  free_shape.curvature = Curvature::None;
  free_shape.monotonicity.assign(static_cast<int>(X.cols()), Monotone::Free);
  const ShapeFitEngine engine(X, EvalGrid::external(X), bw, kernel, free_shape);

  Eigen::MatrixXd out(V.rows(), V.cols());
  bool used_ridge = false;
  for (int c = 0; c < V.cols(); ++c) {
    Eigen::VectorXd fitted;
    try {
      fitted = engine.local_linear(V.col(c)).a;
    } catch (const IdentificationError&) {
      if (!used_ridge)
        std::cerr << "warning: singular conditional-mean design; retrying with ridge 1e-8\n";
      used_ridge = true;
      fitted = engine.local_linear(V.col(c), 1e-8).a;
    }
    out.col(c) = V.col(c) - fitted;
  }
  if (ridged) *ridged = used_ridge;
  return out;
}

ContextualFit estimate_gamma(const Eigen::MatrixXd& Z, const Eigen::VectorXd& y,
                             const Eigen::MatrixXd& X, const BandwidthSpec& bw,
                             KernelKind kernel) {
  const int n = static_cast<int>(X.rows());
  const int l = static_cast<int>(Z.cols());
  if (Z.rows() != n || y.size() != n) throw DataError("Z, y, and X row counts differ");

  ContextualFit fit;
  fit.stage1_bandwidth = bw;
  if (l == 0) {
    fit.adjusted_y = y;
    return fit;
  }

  // one residualization pass over [Z y] so every column shares the weights
  Eigen::MatrixXd V(n, l + 1);
  V.leftCols(l) = Z;
  V.col(l) = y;
  const Eigen::MatrixXd R = residualize(V, X, bw, kernel, &fit.ridged);
  const Eigen::MatrixXd Zt = R.leftCols(l);
  const Eigen::VectorXd yt = R.col(l);

  const Eigen::MatrixXd S = Zt.transpose() * Zt;
  // rank check on S rescaled by the original column norms, so a column that
  // conditioning on X annihilates shows up as a near-zero eigenvalue no
  // matter its units
  Eigen::VectorXd scale(l);
  for (int k = 0; k < l; ++k) {
    scale[k] = Z.col(k).norm();
    if (scale[k] == 0.0)
      throw IdentificationError("contextual column " + std::to_string(k) + " is identically zero");
  }
  const Eigen::MatrixXd Sn =
      scale.cwiseInverse().asDiagonal() * S * scale.cwiseInverse().asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Sn);
  if (es.eigenvalues().minCoeff() <= 1e-10 * std::max(1.0, es.eigenvalues().maxCoeff()))
    throw IdentificationError(
        "contextual design is rank deficient after conditioning on X: a Z column is "
        "constant, collinear, or a near-deterministic function of X");

  const Eigen::LDLT<Eigen::MatrixXd> Sf(S);
  fit.gamma = Sf.solve(Zt.transpose() * yt);
  const Eigen::VectorXd resid = yt - Zt * fit.gamma;
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(l, l);
  for (int j = 0; j < n; ++j)
    meat.noalias() += resid[j] * resid[j] * Zt.row(j).transpose() * Zt.row(j);
  fit.cov = Sf.solve(Sf.solve(meat).transpose());

  fit.std_errors = fit.cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  fit.p_values.resize(l);
  fit.lower.resize(l);
  fit.upper.resize(l);
  for (int k = 0; k < l; ++k) {
    const double se = fit.std_errors[k];
    const double z = se > 0.0 ? std::abs(fit.gamma[k]) / se
                              : std::numeric_limits<double>::infinity();
    fit.p_values[k] = std::erfc(z / std::sqrt(2.0));
    fit.lower[k] = fit.gamma[k] - 1.96 * se;
    fit.upper[k] = fit.gamma[k] + 1.96 * se;
  }
  fit.adjusted_y = y - Z * fit.gamma;
  if (!fit.adjusted_y.allFinite()) throw SolverError("adjusted response is not finite");
  return fit;
}

std::pair<ContextualFit, HyperplaneModel> fit_partially_linear(
    const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::MatrixXd& Z,
    const EvalGrid& grid, const BandwidthSpec& bw, KernelKind kernel, const ShapeSpec& shape,
    const std::optional<BandwidthSpec>& stage1_bw) {
  BandwidthSpec s1;
  if (Z.cols() == 0) {
    s1 = bw;  // unused; stage one is skipped
  } else if (stage1_bw) {
    s1 = *stage1_bw;
  } else {
    s1 = BandwidthSpec::fixed(
        loocv_bandwidth(X, y, bandwidth_candidates(X), kernel));
  }
  ContextualFit stage1 = estimate_gamma(Z, y, X, s1, kernel);
  HyperplaneModel stage2 = sckls_fit(X, stage1.adjusted_y, grid, bw, kernel, shape);
  return {std::move(stage1), std::move(stage2)};
}

}  // namespace sckls
