#pragma once

#include <Eigen/Dense>
#include <optional>
#include <utility>

#include "sckls/estimators.hpp"

namespace sckls {

/// Contextual-variable stage of the partially linear model
/// y = Z'gamma + g0(X) + e.
struct ContextualFit {
  Eigen::VectorXd gamma;       // l
  Eigen::MatrixXd cov;         // l x l heteroskedasticity-robust sandwich
  Eigen::VectorXd std_errors;  // sqrt of the covariance diagonal
  Eigen::VectorXd p_values;    // two-sided normal approximation
  Eigen::VectorXd lower;       // gamma - 1.96 * se
  Eigen::VectorXd upper;       // gamma + 1.96 * se
  Eigen::VectorXd adjusted_y;  // y - Z * gamma
  BandwidthSpec stage1_bandwidth;  // bandwidth the conditional means used
  bool ridged = false;  // some conditional-mean design needed the ridge fallback

  int l() const { return static_cast<int>(gamma.size()); }
};

/// V_j - E^[V_j | X_j] column by column. Conditional means come from
/// local-linear fits at the observation points themselves (each observation
/// keeps its own weight), one shared bandwidth for every column, so the map
/// is linear in V: constants and affine functions of X are annihilated
/// exactly. Singular local designs fall back to a 1e-8 ridge with a warning
/// on stderr; *ridged reports whether that happened.
Eigen::MatrixXd residualize(const Eigen::MatrixXd& V, const Eigen::MatrixXd& X,
                            const BandwidthSpec& bw, KernelKind kernel,
                            bool* ridged = nullptr);

/// Robinson two-stage coefficient: gamma^ = (sum Z~ Z~')^-1 (sum Z~ y~) on
/// the residualized data. Throws IdentificationError when the residualized
/// design is rank deficient (a Z column is a near-deterministic function of
/// X, constant, or collinear).
ContextualFit estimate_gamma(const Eigen::MatrixXd& Z, const Eigen::VectorXd& y,
                             const Eigen::MatrixXd& X, const BandwidthSpec& bw,
                             KernelKind kernel);

/// estimate_gamma, then the shape-constrained fit on y - Z'gamma^. The
/// conditional means use stage1_bw when given, otherwise a bandwidth chosen
/// by leave-one-out cross validation on (X, y) over the default fixed
/// ladder. Z with zero columns skips stage one entirely.
std::pair<ContextualFit, HyperplaneModel> fit_partially_linear(
    const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::MatrixXd& Z,
    const EvalGrid& grid, const BandwidthSpec& bw, KernelKind kernel, const ShapeSpec& shape,
    const std::optional<BandwidthSpec>& stage1_bw = std::nullopt);

}  // namespace sckls
