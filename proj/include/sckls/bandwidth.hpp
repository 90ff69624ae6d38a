#pragma once

#include <Eigen/Dense>
#include <vector>

#include "sckls/kernels.hpp"

namespace sckls {

/// h_k = c * sd(X_k) * n^(-1/(4+d)) per dimension.
Eigen::VectorXd rule_of_thumb_bandwidth(const Eigen::MatrixXd& X, double c = 1.06);

/// count log-spaced multipliers in [lo, hi] applied to the rule of thumb,
/// one shared multiplier across dimensions.
std::vector<Eigen::VectorXd> bandwidth_candidates(const Eigen::MatrixXd& X, int count = 16,
                                                  double lo = 0.25, double hi = 4.0);

/// Log-spaced candidate neighbour counts in [max(3, d+1), n-1], deduplicated.
std::vector<int> knn_candidates(int n, int d, int count = 16);

struct LoocvChoice {
  int index = -1;    // position in the candidate list
  double score = 0;  // leave-one-out squared prediction error at the winner
};

/// Scores each candidate by the leave-one-out residual sum of squares of an
/// unconstrained local linear fit at the observations. A candidate whose LOO
/// system is singular at any observation scores +inf. The earliest candidate
/// within a scale-aware window of the best score wins, so perfect-fit ties
/// resolve to the smallest bandwidth (lists are built in increasing order).
LoocvChoice loocv_choice(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                         const std::vector<Eigen::VectorXd>& candidates, KernelKind kind);
LoocvChoice loocv_choice_knn(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                             const std::vector<int>& ks, KernelKind kind);

Eigen::VectorXd loocv_bandwidth(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                const std::vector<Eigen::VectorXd>& candidates,
                                KernelKind kind);
int loocv_k(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<int>& ks,
            KernelKind kind);

}  // namespace sckls
