#include "sckls/qp.hpp"

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "sckls/errors.hpp"

namespace sckls {

double KktResiduals::max() const {
  return std::max({stationarity, primal, complementarity});
}

KktResiduals kkt_residuals(const QpProblem& p, const Eigen::VectorXd& z,
                           const Eigen::VectorXd& dual) {
  if (z.size() != p.dim() || dual.size() != p.rows())
    throw DataError("KKT residuals: dimension mismatch");
  KktResiduals r;
  Eigen::VectorXd g = p.P * z + p.q;
  if (p.rows() > 0) g.noalias() += p.G.transpose() * dual;
  r.stationarity = g.size() ? g.cwiseAbs().maxCoeff() : 0.0;
  if (p.rows() > 0) {
    const Eigen::VectorXd slack = p.G * z - p.c;
    r.primal = slack.cwiseMax(0.0).maxCoeff();
    r.complementarity = (dual.array() * slack.array()).abs().maxCoeff();
  }
  return r;
}

namespace {

using SpMat = Eigen::SparseMatrix<double>;

Eigen::VectorXd col_inf_norms(const SpMat& M, int ncols) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(ncols);
  for (int k = 0; k < M.outerSize(); ++k)
    for (SpMat::InnerIterator it(M, k); it; ++it)
      out[it.col()] = std::max(out[it.col()], std::abs(it.value()));
  return out;
}

Eigen::VectorXd row_inf_norms(const SpMat& M, int nrows) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(nrows);
  for (int k = 0; k < M.outerSize(); ++k)
    for (SpMat::InnerIterator it(M, k); it; ++it)
      out[it.row()] = std::max(out[it.row()], std::abs(it.value()));
  return out;
}

void scale_rows_cols(SpMat& M, const Eigen::VectorXd& r, const Eigen::VectorXd& c) {
  for (int k = 0; k < M.outerSize(); ++k)
    for (SpMat::InnerIterator it(M, k); it; ++it)
      it.valueRef() *= r[it.row()] * c[it.col()];
}

struct Scaled {
  SpMat P, G;
  Eigen::VectorXd q, c;
  Eigen::VectorXd D, E;  // x = D x_bar, lambda = E y_bar / cost
  double cost = 1.0;
};

Scaled ruiz_equilibrate(const QpProblem& p, int iters) {
  const int n = p.dim(), k = p.rows();
  Scaled s;
  s.P = p.P;
  s.G = p.G;
  s.q = p.q;
  s.c = p.c;
  s.D = Eigen::VectorXd::Ones(n);
  s.E = Eigen::VectorXd::Ones(k);
  for (int t = 0; t < iters; ++t) {
    const Eigen::VectorXd pn = col_inf_norms(s.P, n);
    const Eigen::VectorXd gc = k ? col_inf_norms(s.G, n) : Eigen::VectorXd::Zero(n);
    const Eigen::VectorXd gr = k ? row_inf_norms(s.G, k) : Eigen::VectorXd();
    Eigen::VectorXd dn(n), dk(k);
    for (int i = 0; i < n; ++i) {
      const double m = std::max(pn[i], gc[i]);
      dn[i] = m > 0.0 ? 1.0 / std::sqrt(std::clamp(m, 1e-8, 1e8)) : 1.0;
    }
    for (int j = 0; j < k; ++j)
      dk[j] = gr[j] > 0.0 ? 1.0 / std::sqrt(std::clamp(gr[j], 1e-8, 1e8)) : 1.0;
    scale_rows_cols(s.P, dn, dn);
    if (k) scale_rows_cols(s.G, dk, dn);
    s.q.array() *= dn.array();
    if (k) s.c.array() *= dk.array();
    s.D.array() *= dn.array();
    if (k) s.E.array() *= dk.array();
  }
  const Eigen::VectorXd pn = col_inf_norms(s.P, n);
  const double mean_col = n ? pn.mean() : 0.0;
  const double qn = s.q.size() ? s.q.cwiseAbs().maxCoeff() : 0.0;
  double cost = 1.0 / std::max(1e-6, std::max(mean_col, qn));
  cost = std::clamp(cost, 1e-6, 1e6);
  s.P *= cost;
  s.q *= cost;
  s.cost = cost;
  return s;
}

// Factorization of [[Pb + sigma I, Gb'], [Gb, -(1/rho) I]]; the pattern is
// fixed, only the lower-right diagonal moves with rho.
class KktSystem {
 public:
  KktSystem(const SpMat& Pb, const SpMat& Gb, double sigma) : n_(Pb.rows()), k_(Gb.rows()) {
    trips_.reserve(Pb.nonZeros() + 2 * Gb.nonZeros() + n_ + k_);
    for (int c = 0; c < Pb.outerSize(); ++c)
      for (SpMat::InnerIterator it(Pb, c); it; ++it)
        trips_.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    sigma_start_ = trips_.size();
    for (int i = 0; i < n_; ++i) trips_.emplace_back(i, i, sigma);
    for (int c = 0; c < Gb.outerSize(); ++c)
      for (SpMat::InnerIterator it(Gb, c); it; ++it) {
        trips_.emplace_back(n_ + static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
        trips_.emplace_back(static_cast<int>(it.col()), n_ + static_cast<int>(it.row()), it.value());
      }
    diag_start_ = trips_.size();
    for (int j = 0; j < k_; ++j) trips_.emplace_back(n_ + j, n_ + j, -1.0);
    K_.resize(n_ + k_, n_ + k_);
  }

  void set_sigma(double sigma) {
    for (std::size_t t = sigma_start_; t < sigma_start_ + static_cast<std::size_t>(n_); ++t)
      trips_[t] = Eigen::Triplet<double>(trips_[t].row(), trips_[t].col(), sigma);
  }

  bool factor(double rho) {
    for (std::size_t t = diag_start_; t < trips_.size(); ++t)
      trips_[t] = Eigen::Triplet<double>(trips_[t].row(), trips_[t].col(), -1.0 / rho);
    K_.setFromTriplets(trips_.begin(), trips_.end());
    if (first_) {
      ldlt_.analyzePattern(K_);
      first_ = false;
    }
    ldlt_.factorize(K_);
    return ldlt_.info() == Eigen::Success;
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const { return ldlt_.solve(rhs); }

 private:
  int n_, k_;
  std::vector<Eigen::Triplet<double>> trips_;
  std::size_t diag_start_ = 0;
  std::size_t sigma_start_ = 0;
  SpMat K_;
  Eigen::SimplicialLDLT<SpMat> ldlt_;
  bool first_ = true;
};

// Equality-constrained KKT solve on the active rows with a Tikhonov-
// regularized factorization and refinement against the exact system.
bool polish(const QpProblem& p, const QpSettings& st, Eigen::VectorXd& z,
            Eigen::VectorXd& dual) {
  const int n = p.dim(), k = p.rows();
  std::vector<int> act;
  for (int i = 0; i < k; ++i)
    if (dual[i] > 1e-12) act.push_back(i);
  const int na = static_cast<int>(act.size());

  std::vector<Eigen::Triplet<double>> trips;
  for (int c = 0; c < p.P.outerSize(); ++c)
    for (SpMat::InnerIterator it(p.P, c); it; ++it)
      trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
  for (int i = 0; i < n; ++i) trips.emplace_back(i, i, st.tikhonov);
  SpMat Ga(na, n);
  if (na) {
    std::vector<Eigen::Triplet<double>> gt;
    // row-major walk over the active subset of G
    SpMat Gt = p.G.transpose();
    for (int r = 0; r < na; ++r)
      for (SpMat::InnerIterator it(Gt, act[r]); it; ++it)
        gt.emplace_back(r, static_cast<int>(it.row()), it.value());
    Ga.setFromTriplets(gt.begin(), gt.end());
    for (int c = 0; c < Ga.outerSize(); ++c)
      for (SpMat::InnerIterator it(Ga, c); it; ++it) {
        trips.emplace_back(n + static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
        trips.emplace_back(static_cast<int>(it.col()), n + static_cast<int>(it.row()), it.value());
      }
    for (int j = 0; j < na; ++j) trips.emplace_back(n + j, n + j, -st.tikhonov);
  }
  SpMat K(n + na, n + na);
  K.setFromTriplets(trips.begin(), trips.end());
  Eigen::SimplicialLDLT<SpMat> ldlt(K);
  if (ldlt.info() != Eigen::Success) return false;

  Eigen::VectorXd rhs(n + na);
  rhs.head(n) = -p.q;
  for (int r = 0; r < na; ++r) rhs[n + r] = p.c[act[r]];
  Eigen::VectorXd u = ldlt.solve(rhs);
  for (int pass = 0; pass < 3; ++pass) {  // refinement vs the unregularized system
    Eigen::VectorXd res = rhs;
    res.head(n) -= p.P * u.head(n);
    if (na) {
      res.head(n) -= Ga.transpose() * u.tail(na);
      res.tail(na) -= Ga * u.head(n);
    }
    u += ldlt.solve(res);
  }
  Eigen::VectorXd la = na ? Eigen::VectorXd(u.tail(na)) : Eigen::VectorXd();
  if (na && la.minCoeff() < -1e-7 * std::max(1.0, la.cwiseAbs().maxCoeff())) return false;
  Eigen::VectorXd dual_new = Eigen::VectorXd::Zero(k);
  for (int r = 0; r < na; ++r) dual_new[act[r]] = std::max(0.0, la[r]);
  const Eigen::VectorXd z_new = u.head(n);
  if (!z_new.allFinite() || !dual_new.allFinite()) return false;
  if (kkt_residuals(p, z_new, dual_new).max() >= kkt_residuals(p, z, dual).max()) return false;
  z = z_new;
  dual = dual_new;
  return true;
}

double objective_of(const QpProblem& p, const Eigen::VectorXd& z) {
  return 0.5 * z.dot(p.P * z) + p.q.dot(z);
}

}  // namespace

QpSolution solve_qp(const QpProblem& p, const QpSettings& st, const QpSolution* warm) {
  const int n = p.dim(), k = p.rows();
  if (p.P.rows() != n || p.P.cols() != n || (k && p.G.cols() != n))
    throw DataError("QP dimensions inconsistent");
  {
    SpMat diff = SpMat(p.P.transpose()) - p.P;
    double asym = 0.0;
    for (int c = 0; c < diff.outerSize(); ++c)
      for (SpMat::InnerIterator it(diff, c); it; ++it) asym = std::max(asym, std::abs(it.value()));
    if (asym > 1e-8 * (1.0 + col_inf_norms(p.P, n).maxCoeff()))
      throw DataError("QP quadratic term is not symmetric");
  }

  QpSolution sol;
  sol.z = Eigen::VectorXd::Zero(n);
  sol.dual = Eigen::VectorXd::Zero(k);

  if (k == 0) {
    std::vector<Eigen::Triplet<double>> trips;
    for (int c = 0; c < p.P.outerSize(); ++c)
      for (SpMat::InnerIterator it(p.P, c); it; ++it)
        trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    for (int i = 0; i < n; ++i) trips.emplace_back(i, i, st.tikhonov);
    SpMat K(n, n);
    K.setFromTriplets(trips.begin(), trips.end());
    Eigen::SimplicialLDLT<SpMat> ldlt(K);
    if (ldlt.info() != Eigen::Success) throw SolverError("unconstrained QP factorization failed");
    sol.z = ldlt.solve(-p.q);
    for (int pass = 0; pass < 3; ++pass)
      sol.z += ldlt.solve(-p.q - p.P * sol.z);
    sol.kkt = kkt_residuals(p, sol.z, sol.dual);
    sol.objective = objective_of(p, sol.z);
    sol.status = sol.kkt.max() <= st.tol ? QpStatus::Optimal : QpStatus::MaxIter;
    return sol;
  }

  Scaled sc = ruiz_equilibrate(p, st.ruiz_iters);
  double rho = st.rho0;
  KktSystem kkt(sc.P, sc.G, st.sigma);
  double sigma = st.sigma;
  for (int tries = 0; !kkt.factor(rho); ++tries) {
    if (tries >= 4) throw SolverError("QP splitting factorization failed");
    sigma *= 100.0;
    kkt.set_sigma(sigma);
  }

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n), w = Eigen::VectorXd::Zero(k);
  if (warm && warm->z.size() == n && warm->dual.size() == k) {
    x = warm->z.cwiseQuotient(sc.D);
    // lambda = E y / cost  =>  y = cost * lambda / E
    w = (sc.cost * warm->dual.array() / sc.E.array()).matrix();
  }
  Eigen::VectorXd s = (sc.G * x).cwiseMin(sc.c);

  const int check_every = 25;
  Eigen::VectorXd w_prev_check = w, x_prev_check = x;
  Eigen::VectorXd rhs(n + k), xt(n), zt(k), v(k);
  double admm_target = st.admm_tol;
  int extra_phases = 0;

  KktResiduals best_kkt;
  best_kkt.stationarity = best_kkt.primal = best_kkt.complementarity =
      std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_z = sc.D.asDiagonal() * x;
  Eigen::VectorXd best_dual = Eigen::VectorXd::Zero(k);
  bool best_polished = false;

  auto consider = [&](const Eigen::VectorXd& z_cand, const Eigen::VectorXd& dual_cand,
                      bool pol) {
    const KktResiduals r = kkt_residuals(p, z_cand, dual_cand);
    if (r.max() < best_kkt.max()) {
      best_kkt = r;
      best_z = z_cand;
      best_dual = dual_cand;
      best_polished = pol;
    }
  };

  int iter = 0;
  for (; iter < st.max_iter; ++iter) {
    rhs.head(n) = sigma * x - sc.q;
    rhs.tail(k) = s - w / rho;
    const Eigen::VectorXd u = kkt.solve(rhs);
    xt = u.head(n);
    zt = s + (u.tail(k) - w) / rho;
    x = st.alpha * xt + (1.0 - st.alpha) * x;
    v = st.alpha * zt + (1.0 - st.alpha) * s + w / rho;
    s = v.cwiseMin(sc.c);
    w = rho * (v - s);

    if ((iter + 1) % check_every != 0) continue;

    Eigen::VectorXd z_un = sc.D.asDiagonal() * x;
    Eigen::VectorXd dual_un = (sc.E.array() * w.array() / sc.cost).matrix();
    Eigen::VectorXd s_un = s.cwiseQuotient(sc.E);
    const Eigen::VectorXd Gx = p.G * z_un;
    const Eigen::VectorXd Px = p.P * z_un;
    const Eigen::VectorXd Gtw = p.G.transpose() * dual_un;
    const double rp = (Gx - s_un).cwiseAbs().maxCoeff();
    const double rd = (Px + p.q + Gtw).cwiseAbs().maxCoeff();
    const double ep = admm_target * (1.0 + std::max(Gx.cwiseAbs().maxCoeff(),
                                                    s_un.cwiseAbs().maxCoeff()));
    const double ed =
        admm_target * (1.0 + std::max({Px.cwiseAbs().maxCoeff(), p.q.cwiseAbs().maxCoeff(),
                                       Gtw.cwiseAbs().maxCoeff()}));
    if (rp <= ep && rd <= ed) {
      Eigen::VectorXd zc = z_un, dc = dual_un;
      consider(zc, dc, false);
      if (st.polish && polish(p, st, zc, dc)) consider(zc, dc, true);
      if (best_kkt.max() <= st.tol || extra_phases >= 3) break;
      admm_target = std::max(st.tol, admm_target * 0.01);  // polish fell short; grind further
      ++extra_phases;
    }

    // Infeasibility certificates from the iterate differences.
    const Eigen::VectorXd dlam = dual_un - (sc.E.array() * w_prev_check.array() / sc.cost).matrix();
    const double dln = dlam.cwiseAbs().maxCoeff();
    if (dln > 1e-12) {
      const double cert = (p.G.transpose() * dlam).cwiseAbs().maxCoeff();
      if (cert <= 1e-6 * dln && p.c.dot(dlam) < -1e-6 * dln) {
        sol.status = QpStatus::Infeasible;
        sol.message = "primal infeasible: a nonnegative dual combination certifies Gz <= c is empty";
        sol.z = z_un;
        sol.dual = dual_un;
        sol.kkt = kkt_residuals(p, sol.z, sol.dual);
        sol.objective = objective_of(p, sol.z);
        sol.iterations = iter + 1;
        return sol;
      }
    }
    const Eigen::VectorXd dx = z_un - sc.D.asDiagonal() * x_prev_check;
    const double dxn = dx.cwiseAbs().maxCoeff();
    if (dxn > 1e-12) {
      const double pd = (p.P * dx).cwiseAbs().maxCoeff();
      const double gd = (p.G * dx).maxCoeff();
      if (pd <= 1e-6 * dxn && p.q.dot(dx) < -1e-6 * dxn && gd <= 1e-6 * dxn) {
        sol.status = QpStatus::Infeasible;
        sol.message = "dual infeasible: a descent ray certifies the objective is unbounded below";
        sol.z = z_un;
        sol.dual = dual_un;
        sol.kkt = kkt_residuals(p, sol.z, sol.dual);
        sol.objective = objective_of(p, sol.z);
        sol.iterations = iter + 1;
        return sol;
      }
    }
    w_prev_check = w;
    x_prev_check = x;

    if ((iter + 1) % 100 == 0) {  // residual balancing in the scaled metric
      const Eigen::VectorXd Gxs = sc.G * x;
      const double rps = (Gxs - s).cwiseAbs().maxCoeff() /
                         std::max({Gxs.cwiseAbs().maxCoeff(), s.cwiseAbs().maxCoeff(), 1e-10});
      const Eigen::VectorXd Pxs = sc.P * x;
      const Eigen::VectorXd Gtws = sc.G.transpose() * w;
      const double rds =
          (Pxs + sc.q + Gtws).cwiseAbs().maxCoeff() /
          std::max({Pxs.cwiseAbs().maxCoeff(), sc.q.cwiseAbs().maxCoeff(),
                    Gtws.cwiseAbs().maxCoeff(), 1e-10});
      const double ratio = std::sqrt(std::max(rps, 1e-14) / std::max(rds, 1e-14));
      const double rho_new = std::clamp(rho * ratio, 1e-6, 1e6);
      if (rho_new > 5.0 * rho || rho_new < 0.2 * rho) {
        rho = rho_new;
        if (!kkt.factor(rho)) throw SolverError("QP refactorization failed");
      }
    }
  }

  if (!std::isfinite(best_kkt.max())) {
    Eigen::VectorXd z_un = sc.D.asDiagonal() * x;
    Eigen::VectorXd dual_un = (sc.E.array() * w.array() / sc.cost).matrix();
    consider(z_un, dual_un, false);
    if (st.polish && polish(p, st, z_un, dual_un)) consider(z_un, dual_un, true);
  }

  sol.z = best_z;
  sol.dual = best_dual;
  sol.kkt = best_kkt;
  sol.polished = best_polished;
  sol.objective = objective_of(p, sol.z);
  sol.iterations = iter;
  if (best_kkt.max() <= st.tol) {
    sol.status = QpStatus::Optimal;
  } else {
    sol.status = QpStatus::MaxIter;
    sol.message = "iteration budget exhausted before reaching the KKT tolerance";
  }
  return sol;
}

LazySolveResult lazy_constraint_solve(const QpProblem& base,
                                      const std::vector<LazyRow>& initial_rows,
                                      const ViolationOracle& oracle, double tol,
                                      int max_rounds, const QpSettings& settings) {
  const int n = base.dim();
  std::vector<LazyRow> rows;
  std::unordered_set<std::int64_t> seen;
  for (const auto& r : initial_rows)
    if (seen.insert(r.id).second) rows.push_back(r);

  auto assemble = [&](QpProblem* full) {
    full->P = base.P;
    full->q = base.q;
    const int kb = base.rows();
    const int kt = kb + static_cast<int>(rows.size());
    std::vector<Eigen::Triplet<double>> trips;
    for (int c = 0; c < base.G.outerSize(); ++c)
      for (SpMat::InnerIterator it(base.G, c); it; ++it)
        trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    full->c.resize(kt);
    full->c.head(kb) = base.c;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (const auto& [col, val] : rows[r].coeffs)
        trips.emplace_back(kb + static_cast<int>(r), col, val);
      full->c[kb + static_cast<int>(r)] = rows[r].rhs;
    }
    full->G.resize(kt, n);
    full->G.setFromTriplets(trips.begin(), trips.end());
  };

  LazySolveResult out;
  QpProblem full;
  assemble(&full);
  QpSettings active = settings;
  out.solution = solve_qp(full, active);
  out.rounds_used = 1;
  double prev_obj = out.solution.objective;
  int escalations = 0;

  while (true) {
    std::vector<LazyRow> viol = oracle(out.solution.z, tol);
    if (viol.empty()) break;
    std::vector<LazyRow> fresh;
    for (auto& r : viol)
      if (seen.insert(r.id).second) fresh.push_back(std::move(r));
    if (fresh.empty()) {
      // Rows already in the working set are still violated: the solve fell
      // short of the oracle tolerance, not the family. Re-solve the same
      // problem harder (warm once, then cold) before giving up. Escalated
      // settings stick for the remaining rounds.
      if (escalations >= 2)
        throw SolverError(
            "constraint generation stalled: reported violations are already in the working set");
      active.max_iter *= 4;
      active.admm_tol = std::max(active.tol, active.admm_tol * 1e-2);
      const QpSolution stalled = out.solution;
      out.solution = solve_qp(full, active, escalations == 0 ? &stalled : nullptr);
      ++escalations;
      ++out.rounds_used;
      prev_obj = out.solution.objective;  // the tighter solve supersedes the stalled baseline
      continue;
    }
    if (out.rounds_used >= max_rounds) {
      out.solution.status = QpStatus::MaxIter;
      out.solution.message = "constraint-generation round budget exhausted";
      out.outstanding_violations = static_cast<std::int64_t>(viol.size());
      break;
    }
    for (auto& r : fresh) rows.push_back(std::move(r));
    QpSolution warm = out.solution;
    assemble(&full);
    Eigen::VectorXd dual = Eigen::VectorXd::Zero(full.rows());
    dual.head(warm.dual.size()) = warm.dual;
    warm.dual = dual;
    out.solution = solve_qp(full, active, &warm);
    ++out.rounds_used;
    if (out.solution.objective < prev_obj - 1e-6 * std::max(1.0, std::abs(prev_obj)))
      throw SolverError("constraint generation: objective decreased after adding constraints");
    prev_obj = std::max(prev_obj, out.solution.objective);
  }
  out.final_row_count = base.rows() + static_cast<std::int64_t>(rows.size());
  return out;
}

}  // namespace sckls
