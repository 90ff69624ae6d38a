#include "sckls/bandwidth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sckls/errors.hpp"

namespace sckls {

Eigen::VectorXd rule_of_thumb_bandwidth(const Eigen::MatrixXd& X, double c) {
  const double n = static_cast<double>(X.rows());
  const int d = static_cast<int>(X.cols());
  if (n < 2) throw DataError("bandwidth rule of thumb needs at least 2 observations");
  Eigen::VectorXd h(d);
  for (int k = 0; k < d; ++k) {
    const double mean = X.col(k).mean();
    const double sd = std::sqrt((X.col(k).array() - mean).square().sum() / (n - 1.0));
    if (!(sd > 0.0)) throw IdentificationError("constant regressor column; bandwidth undefined");
    h[k] = c * sd * std::pow(n, -1.0 / (4.0 + d));
  }
  return h;
}

std::vector<Eigen::VectorXd> bandwidth_candidates(const Eigen::MatrixXd& X, int count,
                                                  double lo, double hi) {
  const Eigen::VectorXd base = rule_of_thumb_bandwidth(X);
  std::vector<Eigen::VectorXd> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    const double t = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
    out.push_back(base * std::exp(std::log(lo) + t * (std::log(hi) - std::log(lo))));
  }
  return out;
}

std::vector<int> knn_candidates(int n, int d, int count) {
  const int lo = std::max(3, d + 1);
  const int hi = n - 1;
  if (hi < lo) throw DataError("sample too small for k-NN bandwidth selection");
  std::vector<int> out;
  for (int i = 0; i < count; ++i) {
    const double t = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
    int k = static_cast<int>(std::lround(std::exp(std::log(lo) + t * (std::log(hi) - std::log(lo)))));
    k = std::clamp(k, lo, hi);
    if (out.empty() || out.back() != k) out.push_back(k);
  }
  return out;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// One leave-one-out local linear prediction at X.row(j); returns false when
// the weighted design is singular.
bool loo_predict(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, int j,
                 const Eigen::VectorXd& w, double* pred) {
  const int n = static_cast<int>(X.rows());
  const int d = static_cast<int>(X.cols());
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(d + 1, d + 1);
  Eigen::VectorXd r = Eigen::VectorXd::Zero(d + 1);
  Eigen::VectorXd z(d + 1);
  double wsum = 0.0;
  for (int l = 0; l < n; ++l) {
    if (l == j || w[l] == 0.0) continue;
    z[0] = 1.0;
    z.tail(d) = (X.row(l) - X.row(j)).transpose();
    M.noalias() += w[l] * z * z.transpose();
    r.noalias() += w[l] * y[l] * z;
    wsum += w[l];
  }
  if (wsum <= 0.0) return false;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
  const Eigen::VectorXd theta = ldlt.solve(r);
  const double resid = (M * theta - r).cwiseAbs().maxCoeff();
  const double scale = std::max(1.0, r.cwiseAbs().maxCoeff());
  if (!(resid <= 1e-8 * scale) || !std::isfinite(theta[0])) return false;
  *pred = theta[0];
  return true;
}

}  // namespace

namespace {

// First candidate within a scale-aware window of the best score wins: exact
// perfect-fit responses score ~1e-30 with solver noise, and the selector must
// still land on the smallest bandwidth for them.
LoocvChoice pick_smallest_tied(const std::vector<double>& scores, const Eigen::VectorXd& y) {
  double best = kInf;
  for (double v : scores) best = std::min(best, v);
  if (best == kInf)
    throw SolverError("every bandwidth candidate produced a singular leave-one-out fit");
  const double tol = 1e-12 * (y.squaredNorm() + 1.0);
  LoocvChoice out;
  for (std::size_t c = 0; c < scores.size(); ++c)
    if (scores[c] <= best + tol) {
      out.index = static_cast<int>(c);
      out.score = scores[c];
      break;
    }
  return out;
}

}  // namespace

LoocvChoice loocv_choice(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                         const std::vector<Eigen::VectorXd>& candidates, KernelKind kind) {
  const int n = static_cast<int>(X.rows());
  const int d = static_cast<int>(X.cols());
  if (candidates.empty()) throw DataError("empty bandwidth candidate list");
  std::vector<double> scores(candidates.size(), kInf);
  Eigen::VectorXd w(n), u(d);
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const Eigen::VectorXd& h = candidates[c];
    double score = 0.0;
    for (int j = 0; j < n && score < kInf; ++j) {
      for (int l = 0; l < n; ++l) {
        u = (X.row(l) - X.row(j)).transpose().cwiseQuotient(h);
        w[l] = product_kernel_weight(kind, u);
      }
      double pred;
      if (!loo_predict(X, y, j, w, &pred)) {
        score = kInf;
        break;
      }
      const double e = y[j] - pred;
      score += e * e;
    }
    scores[c] = score;
  }
  return pick_smallest_tied(scores, y);
}

LoocvChoice loocv_choice_knn(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                             const std::vector<int>& ks, KernelKind kind) {
  const int n = static_cast<int>(X.rows());
  if (ks.empty()) throw DataError("empty k-NN candidate list");
  // Sorted leave-one-out distances per observation, shared by all candidates.
  Eigen::MatrixXd dist(n, n);
  for (int j = 0; j < n; ++j)
    for (int l = 0; l < n; ++l) dist(j, l) = (X.row(l) - X.row(j)).norm();
  std::vector<std::vector<double>> sorted(n);
  for (int j = 0; j < n; ++j) {
    sorted[j].reserve(n - 1);
    for (int l = 0; l < n; ++l)
      if (l != j) sorted[j].push_back(dist(j, l));
    std::sort(sorted[j].begin(), sorted[j].end());
  }

  std::vector<double> scores(ks.size(), kInf);
  Eigen::VectorXd w(n);
  for (std::size_t c = 0; c < ks.size(); ++c) {
    const int k = ks[c];
    if (k < 1 || k > n - 1) throw DataError("k-NN candidate out of range");
    double score = 0.0;
    for (int j = 0; j < n && score < kInf; ++j) {
      const double R = sorted[j][k - 1];
      for (int l = 0; l < n; ++l) {
        if (l == j) { w[l] = 0.0; continue; }
        w[l] = R == 0.0 ? (dist(j, l) == 0.0 ? kernel_value(kind, 0.0) : 0.0)
                        : kernel_value(kind, dist(j, l) / R);
      }
      double pred;
      if (!loo_predict(X, y, j, w, &pred)) {
        score = kInf;
        break;
      }
      const double e = y[j] - pred;
      score += e * e;
    }
    scores[c] = score;
  }
  return pick_smallest_tied(scores, y);
}

Eigen::VectorXd loocv_bandwidth(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                const std::vector<Eigen::VectorXd>& candidates,
                                KernelKind kind) {
  return candidates[loocv_choice(X, y, candidates, kind).index];
}

int loocv_k(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<int>& ks,
            KernelKind kind) {
  return ks[loocv_choice_knn(X, y, ks, kind).index];
}

}  // namespace sckls
