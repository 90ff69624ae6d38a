#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace sckls {

/// minimize 0.5 z'Pz + q'z  subject to  Gz <= c.
struct QpProblem {
  Eigen::SparseMatrix<double> P;  // symmetric PSD
  Eigen::VectorXd q;
  Eigen::SparseMatrix<double> G;  // may have zero rows
  Eigen::VectorXd c;

  int dim() const { return static_cast<int>(q.size()); }
  int rows() const { return static_cast<int>(c.size()); }
};

struct KktResiduals {
  double stationarity = 0.0;    // ||Pz + q + G'lambda||_inf
  double primal = 0.0;          // ||max(Gz - c, 0)||_inf
  double complementarity = 0.0; // max_i |lambda_i * (Gz - c)_i|
  double max() const;
};

enum class QpStatus { Optimal, MaxIter, Infeasible };

struct QpSettings {
  double tol = 1e-8;       // target KKT accuracy after polish
  double admm_tol = 1e-5;  // operator-splitting accuracy before polish
  int max_iter = 50000;
  double rho0 = 0.1;       // initial step size
  double sigma = 1e-6;     // proximal regularization of the splitting
  double alpha = 1.6;      // over-relaxation
  double tikhonov = 1e-10; // polish factorization regularizer, not in residuals
  bool polish = true;
  int ruiz_iters = 10;
};

struct QpSolution {
  Eigen::VectorXd z;
  Eigen::VectorXd dual;  // >= 0, one per constraint row
  double objective = 0.0;
  QpStatus status = QpStatus::Optimal;
  KktResiduals kkt;
  int iterations = 0;
  bool polished = false;
  std::string message;
};

KktResiduals kkt_residuals(const QpProblem& p, const Eigen::VectorXd& z,
                           const Eigen::VectorXd& dual);

/// Operator-splitting solve with over-relaxation, residual-balancing step
/// updates, Ruiz equilibration, and an active-set polish. Deterministic.
/// warm, when given, seeds the primal/dual iterates (sizes must match).
QpSolution solve_qp(const QpProblem& p, const QpSettings& settings = {},
                    const QpSolution* warm = nullptr);

/// One inequality row of an implicit constraint family, identified by a
/// stable id for deduplication across constraint-generation rounds.
struct LazyRow {
  std::int64_t id = 0;
  std::vector<std::pair<int, double>> coeffs;  // (column, value)
  double rhs = 0.0;
};

/// oracle(z, tol) returns the family rows violated by z beyond tol.
using ViolationOracle =
    std::function<std::vector<LazyRow>(const Eigen::VectorXd& z, double tol)>;

struct LazySolveResult {
  QpSolution solution;
  int rounds_used = 0;
  std::int64_t final_row_count = 0;
  std::int64_t outstanding_violations = 0;  // nonzero only when rounds ran out
};

/// Constraint generation: solve with the base rows plus an initial subset of
/// the family, then repeatedly add every violated row the oracle reports and
/// re-solve until it reports none. The objective never decreases across
/// rounds.
LazySolveResult lazy_constraint_solve(const QpProblem& base,
                                      const std::vector<LazyRow>& initial_rows,
                                      const ViolationOracle& oracle, double tol = 1e-6,
                                      int max_rounds = 50,
                                      const QpSettings& settings = {});

}  // namespace sckls
