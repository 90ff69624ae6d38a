#include "sckls/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <utility>

#include "sckls/errors.hpp"

namespace sckls {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

ShapeSpec make_shape(Curvature c, Monotone m, int d) {
  ShapeSpec s;
  s.curvature = c;
  s.monotonicity.assign(d, m);
  return s;
}
}  // namespace

bool ShapeSpec::trivial() const {
  if (curvature != Curvature::None) return false;
  for (const auto m : monotonicity)
    if (m != Monotone::Free) return false;
  return true;
}

ShapeSpec ShapeSpec::concave_increasing(int d) { return make_shape(Curvature::Concave, Monotone::Increasing, d); }
ShapeSpec ShapeSpec::convex_increasing(int d) { return make_shape(Curvature::Convex, Monotone::Increasing, d); }
ShapeSpec ShapeSpec::concave_only(int d) { return make_shape(Curvature::Concave, Monotone::Free, d); }
ShapeSpec ShapeSpec::convex_only(int d) { return make_shape(Curvature::Convex, Monotone::Free, d); }
ShapeSpec ShapeSpec::monotone_increasing(int d) { return make_shape(Curvature::None, Monotone::Increasing, d); }

double hyperplane_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            const Eigen::MatrixXd& w, const EvalGrid& grid,
                            const Eigen::VectorXd& a, const Eigen::MatrixXd& b) {
  const int m = grid.m();
  double sse = 0.0;
  Eigen::VectorXd resid(y.size());
  for (int i = 0; i < m; ++i) {
    resid = y - (X.rowwise() - grid.points.row(i)).matrix() * b.row(i).transpose();
    resid.array() -= a[i];
    sse += (w.row(i).transpose().array() * resid.array().square()).sum();
  }
  return sse;
}

double shape_violation(const HyperplaneModel& model) {
  const int m = model.m(), d = model.d();
  double viol = 0.0;
  for (int k = 0; k < d; ++k) {
    if (model.shape.monotonicity[k] == Monotone::Increasing)
      viol = std::max(viol, -model.b.col(k).minCoeff());
    else if (model.shape.monotonicity[k] == Monotone::Decreasing)
      viol = std::max(viol, model.b.col(k).maxCoeff());
  }
  if (model.shape.curvature != Curvature::None) {
    for (int i = 0; i < m; ++i) {
      Eigen::VectorXd plane = (model.grid.points.rowwise() - model.grid.points.row(i)).matrix() *
                              model.b.row(i).transpose();
      plane.array() += model.a[i];
      for (int l = 0; l < m; ++l) {
        const double gap = model.shape.curvature == Curvature::Concave
                               ? model.a[l] - plane[l]
                               : plane[l] - model.a[l];
        viol = std::max(viol, gap);
      }
    }
  }
  return viol;
}

ShapeFitEngine::ShapeFitEngine(Eigen::MatrixXd X, EvalGrid grid, const BandwidthSpec& bw,
                               KernelKind kernel, ShapeSpec shape)
    : X_(std::move(X)), grid_(std::move(grid)), bw_(bw), kernel_(kernel), shape_(std::move(shape)) {
  WeightMatrix wm = weight_matrix(X_, grid_, bw_, kernel_);
  W_ = std::move(wm.w);
  knn_radii_ = std::move(wm.knn_radii);
  prepare();
}

ShapeFitEngine::ShapeFitEngine(Eigen::MatrixXd X, EvalGrid grid, Eigen::MatrixXd weights,
                               ShapeSpec shape, const BandwidthSpec& bw_label,
                               KernelKind kernel_label)
    : X_(std::move(X)), grid_(std::move(grid)), bw_(bw_label), kernel_(kernel_label),
      shape_(std::move(shape)), W_(std::move(weights)) {
  if (W_.rows() != grid_.m() || W_.cols() != X_.rows())
    throw DataError("weight matrix shape does not match grid x sample");
  prepare();
}

namespace {
inline int ia(int i, int d) { return i * (d + 1); }
inline int ib(int i, int k, int d) { return i * (d + 1) + 1 + k; }

LazyRow afriat_lazy_row(const EvalGrid& grid, Curvature curv, int i, int l) {
  const int m = grid.m(), d = grid.d();
  LazyRow row;
  row.id = static_cast<std::int64_t>(i) * m + l;
  row.rhs = 0.0;
  const double sa = curv == Curvature::Concave ? -1.0 : 1.0;
  row.coeffs.emplace_back(ia(i, d), sa);
  row.coeffs.emplace_back(ia(l, d), -sa);
  for (int k = 0; k < d; ++k) {
    const double diff = grid.points(i, k) - grid.points(l, k);
    if (diff != 0.0) row.coeffs.emplace_back(ib(i, k, d), -sa * diff);
  }
  return row;
}
}  // namespace

void ShapeFitEngine::prepare() {
  const int m = grid_.m(), d = grid_.d(), dim = m * (d + 1);
  if (static_cast<int>(shape_.monotonicity.size()) != d)
    throw DataError("shape spec dimension does not match the data");

  M_.resize(m);
  Mfac_.resize(m);
  std::vector<Eigen::Triplet<double>> ptrips;
  Eigen::VectorXd u(d + 1);
  for (int i = 0; i < m; ++i) {
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(d + 1, d + 1);
    for (int j = 0; j < X_.rows(); ++j) {
      const double w = W_(i, j);
      if (w == 0.0) continue;
      u[0] = 1.0;
      u.tail(d) = (X_.row(j) - grid_.points.row(i)).transpose();
      M.noalias() += w * u * u.transpose();
    }
    M_[i] = M;
    Mfac_[i].compute(M);
    for (int r = 0; r <= d; ++r)
      for (int c = 0; c <= d; ++c)
        if (M(r, c) != 0.0)
          ptrips.emplace_back(ia(i, d) + r, ia(i, d) + c, 2.0 * M(r, c));
  }
  P_.resize(dim, dim);
  P_.setFromTriplets(ptrips.begin(), ptrips.end());

  std::vector<Eigen::Triplet<double>> strips;
  std::vector<double> srhs;
  for (int i = 0; i < m; ++i)
    for (int k = 0; k < d; ++k) {
      if (shape_.monotonicity[k] == Monotone::Free) continue;
      const double sgn = shape_.monotonicity[k] == Monotone::Increasing ? -1.0 : 1.0;
      strips.emplace_back(static_cast<int>(srhs.size()), ib(i, k, d), sgn);
      srhs.push_back(0.0);
    }
  Gsign_.resize(static_cast<int>(srhs.size()), dim);
  Gsign_.setFromTriplets(strips.begin(), strips.end());
  csign_ = Eigen::Map<const Eigen::VectorXd>(srhs.data(), srhs.size());

  if (shape_.curvature != Curvature::None && m > 1) {
    if (grid_.is_lattice()) {
      const AdjacencyPairs adj = adjacency_pairs(grid_);
      seed_rows_.reserve(adj.ordered.size());
      for (const auto& [i, l] : adj.ordered)
        seed_rows_.push_back(afriat_lazy_row(grid_, shape_.curvature, i, l));
    } else {
      // nearest-neighbour seeding for non-lattice grids (observation grids)
      const int nn = std::min(10, m - 1);
      std::vector<std::pair<double, int>> order(m);
      for (int i = 0; i < m; ++i) {
        for (int l = 0; l < m; ++l)
          order[l] = {l == i ? kInf : (grid_.points.row(l) - grid_.points.row(i)).norm(), l};
        std::partial_sort(order.begin(), order.begin() + nn, order.end());
        for (int t = 0; t < nn; ++t) {
          seed_rows_.push_back(afriat_lazy_row(grid_, shape_.curvature, i, order[t].second));
          seed_rows_.push_back(afriat_lazy_row(grid_, shape_.curvature, order[t].second, i));
        }
      }
    }
  }
}

QpProblem ShapeFitEngine::base_problem(const Eigen::VectorXd& y) const {
  const int m = grid_.m(), d = grid_.d(), dim = m * (d + 1);
  if (y.size() != X_.rows()) throw DataError("response length does not match the sample");
  QpProblem p;
  p.P = P_;
  p.G = Gsign_;
  p.c = csign_;
  p.q.resize(dim);
  Eigen::VectorXd u(d + 1);
  for (int i = 0; i < m; ++i) {
    Eigen::VectorXd r = Eigen::VectorXd::Zero(d + 1);
    for (int j = 0; j < X_.rows(); ++j) {
      const double w = W_(i, j);
      if (w == 0.0) continue;
      u[0] = 1.0;
      u.tail(d) = (X_.row(j) - grid_.points.row(i)).transpose();
      r.noalias() += w * y[j] * u;
    }
    p.q.segment(ia(i, d), d + 1) = -2.0 * r;
  }
  return p;
}

LocalLinearFit ShapeFitEngine::local_linear(const Eigen::VectorXd& y, double ridge) const {
  const int m = grid_.m(), d = grid_.d();
  if (y.size() != X_.rows()) throw DataError("response length does not match the sample");
  LocalLinearFit fit;
  fit.grid = grid_;
  fit.a.resize(m);
  fit.b.resize(m, d);
  fit.point_objective.resize(m);
  Eigen::VectorXd u(d + 1);
  for (int i = 0; i < m; ++i) {
    Eigen::VectorXd r = Eigen::VectorXd::Zero(d + 1);
    for (int j = 0; j < X_.rows(); ++j) {
      const double w = W_(i, j);
      if (w == 0.0) continue;
      u[0] = 1.0;
      u.tail(d) = (X_.row(j) - grid_.points.row(i)).transpose();
      r.noalias() += w * y[j] * u;
    }
    Eigen::VectorXd theta;
    if (ridge > 0.0) {
      Eigen::MatrixXd Mr = M_[i] + ridge * Eigen::MatrixXd::Identity(d + 1, d + 1);
      theta = Mr.ldlt().solve(r);
    } else {
      theta = Mfac_[i].solve(r);
      const double res = (M_[i] * theta - r).cwiseAbs().maxCoeff();
      // a consistent-singular system solves cleanly but leaves theta unidentified,
      // so check rank as well as the residual
      const Eigen::VectorXd dv = Mfac_[i].vectorD();
      const bool rank_ok = dv.minCoeff() > 1e-12 * std::max(dv.maxCoeff(), 0.0);
      if (!rank_ok || !(res <= 1e-8 * std::max(1.0, r.cwiseAbs().maxCoeff())) ||
          !theta.allFinite())
        throw IdentificationError("singular local design at evaluation point " +
                                  std::to_string(i) + "; enlarge the bandwidth or use ridge");
    }
    fit.a[i] = theta[0];
    fit.b.row(i) = theta.tail(d).transpose();
    Eigen::VectorXd resid =
        y - (X_.rowwise() - grid_.points.row(i)).matrix() * theta.tail(d);
    resid.array() -= theta[0];
    fit.point_objective[i] = (W_.row(i).transpose().array() * resid.array().square()).sum();
  }
  fit.sse = fit.point_objective.sum();
  return fit;
}

HyperplaneModel ShapeFitEngine::fit(const Eigen::VectorXd& y, bool lazy) const {
  const int m = grid_.m(), d = grid_.d();
  QpProblem base = base_problem(y);
  QpSettings settings;

  QpSolution sol;
  int rounds = 0;
  std::int64_t row_count = base.rows();
  if (shape_.curvature == Curvature::None || m == 1) {
    sol = solve_qp(base, settings);
    rounds = 1;
  } else if (lazy) {
    auto oracle = [this, m, d](const Eigen::VectorXd& z, double tol) {
      std::vector<LazyRow> out;
      Eigen::VectorXd a(m);
      Eigen::MatrixXd b(m, d);
      for (int i = 0; i < m; ++i) {
        a[i] = z[ia(i, d)];
        for (int k = 0; k < d; ++k) b(i, k) = z[ib(i, k, d)];
      }
      for (int i = 0; i < m; ++i) {
        Eigen::VectorXd plane =
            (grid_.points.rowwise() - grid_.points.row(i)).matrix() * b.row(i).transpose();
        plane.array() += a[i];
        for (int l = 0; l < m; ++l) {
          if (l == i) continue;
          const double gap = shape_.curvature == Curvature::Concave ? a[l] - plane[l]
                                                                    : plane[l] - a[l];
          if (gap > tol) out.push_back(afriat_lazy_row(grid_, shape_.curvature, i, l));
        }
      }
      return out;
    };
    LazySolveResult res = lazy_constraint_solve(base, seed_rows_, oracle, 1e-7, 50, settings);
    sol = std::move(res.solution);
    rounds = res.rounds_used;
    row_count = res.final_row_count;
  } else {
    std::vector<LazyRow> all;
    all.reserve(static_cast<std::size_t>(m) * (m - 1));
    for (int i = 0; i < m; ++i)
      for (int l = 0; l < m; ++l)
        if (l != i) all.push_back(afriat_lazy_row(grid_, shape_.curvature, i, l));
    auto empty_oracle = [](const Eigen::VectorXd&, double) { return std::vector<LazyRow>{}; };
    LazySolveResult res = lazy_constraint_solve(base, all, empty_oracle, 1e-7, 1, settings);
    sol = std::move(res.solution);
    rounds = res.rounds_used;
    row_count = res.final_row_count;
  }

  if (sol.status == QpStatus::Infeasible)
    throw SolverError("shape-constrained fit reported infeasibility: " + sol.message);

  HyperplaneModel model;
  model.grid = grid_;
  model.shape = shape_;
  model.bandwidth = bw_;
  model.kernel = kernel_;
  model.a.resize(m);
  model.b.resize(m, d);
  for (int i = 0; i < m; ++i) {
    model.a[i] = sol.z[ia(i, d)];
    for (int k = 0; k < d; ++k) model.b(i, k) = sol.z[ib(i, k, d)];
  }
  // Snap solver dust on the sign constraints to exact zeros. The window is
  // small enough that the Afriat slack stays within its own tolerance.
  for (int k = 0; k < d; ++k)
    for (int i = 0; i < m; ++i) {
      double& v = model.b(i, k);
      if (shape_.monotonicity[k] == Monotone::Increasing && v < 0.0 && v > -1e-7) v = 0.0;
      if (shape_.monotonicity[k] == Monotone::Decreasing && v > 0.0 && v < 1e-7) v = 0.0;
    }
  model.diagnostics.status = sol.status;
  model.diagnostics.kkt = sol.kkt;
  model.diagnostics.iterations = sol.iterations;
  model.diagnostics.rounds = rounds;
  model.diagnostics.constraint_rows = row_count;
  model.diagnostics.polished = sol.polished;
  model.diagnostics.qp_objective = sol.objective;
  model.sse = hyperplane_objective(X_, y, W_, grid_, model.a, model.b);

  const double viol = shape_violation(model);
  if (viol > 1e-6)
    throw SolverError("fitted model violates its shape constraints by " + std::to_string(viol));
  return model;
}

double ShapeFitEngine::constrained_sse(const Eigen::VectorXd& y, bool lazy) const {
  return fit(y, lazy).sse;
}

LocalLinearFit local_linear_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                const EvalGrid& grid, const BandwidthSpec& bw,
                                KernelKind kernel, double ridge) {
  ShapeSpec free_shape;
  free_shape.curvature = Curvature::None;
  free_shape.monotonicity.assign(grid.d(), Monotone::Free);
  ShapeFitEngine engine(X, grid, bw, kernel, free_shape);
  return engine.local_linear(y, ridge);
}

HyperplaneModel sckls_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                          const EvalGrid& grid, const BandwidthSpec& bw, KernelKind kernel,
                          const ShapeSpec& shape, bool lazy) {
  if (shape.trivial())
    throw DataError("shape-constrained fit needs at least one active constraint");
  ShapeFitEngine engine(X, grid, bw, kernel, shape);
  return engine.fit(y, lazy);
}

HyperplaneModel cnls_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                         const ShapeSpec& shape) {
  const int n = static_cast<int>(X.rows()), d = static_cast<int>(X.cols());
  if (n < 2) throw DataError("CNLS needs at least 2 observations");
  // Merge duplicate rows, averaging the responses with multiplicity weights.
  std::map<std::vector<double>, int> index;
  std::vector<int> group(n);
  int g = 0;
  for (int j = 0; j < n; ++j) {
    std::vector<double> key(X.row(j).data(), X.row(j).data() + d);
    auto [it, fresh] = index.emplace(std::move(key), g);
    group[j] = it->second;
    if (fresh) ++g;
  }
  Eigen::MatrixXd Xm = Eigen::MatrixXd::Zero(g, d);
  Eigen::VectorXd ym = Eigen::VectorXd::Zero(g), cnt = Eigen::VectorXd::Zero(g);
  for (int j = 0; j < n; ++j) {
    Xm.row(group[j]) = X.row(j);
    ym[group[j]] += y[j];
    cnt[group[j]] += 1.0;
  }
  ym.array() /= cnt.array();

  EvalGrid grid = EvalGrid::external(Xm);
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(g, g);
  W.diagonal() = cnt;
  BandwidthSpec label;  // no smoothing: indicator weights at the observations
  ShapeFitEngine engine(std::move(Xm), std::move(grid), std::move(W), shape, label,
                        KernelKind::Gaussian);
  return engine.fit(ym, true);
}

AffineFit affine_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  const int n = static_cast<int>(X.rows()), d = static_cast<int>(X.cols());
  Eigen::MatrixXd Z(n, d + 1);
  Z.col(0).setOnes();
  Z.rightCols(d) = X;
  const Eigen::VectorXd theta = Z.colPivHouseholderQr().solve(y);
  AffineFit f;
  f.intercept = theta[0];
  f.slope = theta.tail(d);
  return f;
}

AffineFit monotone_linear_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  const int n = static_cast<int>(X.rows()), d = static_cast<int>(X.cols());
  if (n < d + 1) throw DataError("monotone linear fit needs at least d+1 observations");
  Eigen::MatrixXd Z(n, d + 1);
  Z.col(0).setOnes();
  Z.rightCols(d) = X;
  const Eigen::MatrixXd Pd = 2.0 * Z.transpose() * Z;
  QpProblem p;
  p.P = Pd.sparseView();
  p.q = -2.0 * Z.transpose() * y;
  std::vector<Eigen::Triplet<double>> trips;
  for (int k = 0; k < d; ++k) trips.emplace_back(k, k + 1, -1.0);
  p.G.resize(d, d + 1);
  p.G.setFromTriplets(trips.begin(), trips.end());
  p.c = Eigen::VectorXd::Zero(d);
  const QpSolution sol = solve_qp(p);
  AffineFit f;
  f.intercept = sol.z[0];
  f.slope = sol.z.tail(d).cwiseMax(0.0);
  return f;
}

namespace {
double plane_value(const HyperplaneModel& m, int i, const Eigen::VectorXd& x) {
  return m.a[i] + m.b.row(i).dot((x - m.grid.points.row(i).transpose()));
}
}  // namespace

int active_plane(const HyperplaneModel& model, const Eigen::VectorXd& x) {
  const int m = model.m();
  if (model.shape.curvature == Curvature::None) {
    int best = 0;
    double bd = (x - model.grid.points.row(0).transpose()).squaredNorm();
    for (int i = 1; i < m; ++i) {
      const double di = (x - model.grid.points.row(i).transpose()).squaredNorm();
      if (di < bd) {
        bd = di;
        best = i;
      }
    }
    return best;
  }
  const bool concave = model.shape.curvature == Curvature::Concave;
  int best = 0;
  double bv = plane_value(model, 0, x);
  for (int i = 1; i < m; ++i) {
    const double v = plane_value(model, i, x);
    if (concave ? v < bv : v > bv) {
      bv = v;
      best = i;
    }
  }
  return best;
}

double predict(const HyperplaneModel& model, const Eigen::VectorXd& x) {
  if (x.size() != model.d()) throw DataError("prediction point has the wrong dimension");
  return plane_value(model, active_plane(model, x), x);
}

Eigen::VectorXd predict(const HyperplaneModel& model, const Eigen::MatrixXd& points) {
  Eigen::VectorXd out(points.rows());
  for (int r = 0; r < points.rows(); ++r) {
    const Eigen::VectorXd x = points.row(r).transpose();
    out[r] = predict(model, x);
  }
  return out;
}

namespace {
double percentile_of(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double pos = p / 100.0 * (static_cast<double>(v.size()) - 1.0);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  if (std::isinf(v[lo]) || std::isinf(v[hi])) return frac > 0.0 ? v[hi] : v[lo];
  return v[lo] + frac * (v[hi] - v[lo]);
}
}  // namespace

MarginalStats marginal_stats(const HyperplaneModel& model, const Eigen::MatrixXd* points,
                             const std::vector<double>& percentiles) {
  const Eigen::MatrixXd& pts = points ? *points : model.grid.points;
  const int d = model.d();
  const int np = static_cast<int>(pts.rows());
  Eigen::MatrixXd grads(np, d);
  for (int r = 0; r < np; ++r)
    grads.row(r) = model.b.row(active_plane(model, pts.row(r).transpose()));

  MarginalStats out;
  out.percentiles = percentiles;
  out.gradient_percentiles.resize(percentiles.size(), d);
  for (int k = 0; k < d; ++k) {
    std::vector<double> col(grads.col(k).data(), grads.col(k).data() + np);
    for (std::size_t p = 0; p < percentiles.size(); ++p)
      out.gradient_percentiles(p, k) = percentile_of(col, percentiles[p]);
  }
  for (int k = 0; k < d; ++k)
    for (int l = 0; l < d; ++l) {
      if (k == l) continue;
      out.ratio_pairs.push_back({k, l});
      std::vector<double> vals(np);
      for (int r = 0; r < np; ++r)
        vals[r] = std::abs(grads(r, l)) < 1e-12 ? kInf : grads(r, k) / grads(r, l);
      out.ratio_percentiles.conservativeResize(percentiles.size(), out.ratio_pairs.size());
      for (std::size_t p = 0; p < percentiles.size(); ++p)
        out.ratio_percentiles(p, out.ratio_pairs.size() - 1) = percentile_of(vals, percentiles[p]);
    }
  return out;
}

MpssResult mpss(const HyperplaneModel& model, const Eigen::VectorXd& direction, double t_lo,
                double t_hi) {
  if (model.shape.curvature == Curvature::None)
    throw DataError("scale analysis needs a curvature-constrained model");
  if (direction.size() != model.d() || direction.minCoeff() <= 0.0)
    throw DataError("scale direction must be strictly positive");
  if (!(t_lo > 0.0) || !(t_hi >= t_lo)) throw DataError("empty scale range");

  const int m = model.m();
  // Along the ray, plane i contributes c_i + s_i t.
  Eigen::VectorXd c(m), s(m);
  for (int i = 0; i < m; ++i) {
    c[i] = model.a[i] - model.b.row(i).dot(model.grid.points.row(i));
    s[i] = model.b.row(i).dot(direction);
  }
  std::vector<double> ts{t_lo, t_hi};
  for (int i = 0; i < m; ++i)
    for (int l = i + 1; l < m; ++l) {
      const double ds = s[i] - s[l];
      if (std::abs(ds) < 1e-300) continue;
      const double t = (c[l] - c[i]) / ds;
      if (t > t_lo && t < t_hi) ts.push_back(t);
    }
  std::sort(ts.begin(), ts.end());

  MpssResult best;
  best.output = -kInf;
  double best_ratio = -kInf;
  for (const double t : ts) {
    const Eigen::VectorXd x = t * direction;
    const double g = predict(model, x);
    const double ratio = g / t;
    if (ratio >= best_ratio - 1e-12 * std::max(1.0, std::abs(best_ratio))) {
      if (ratio > best_ratio) best_ratio = ratio;
      best.t = t;  // ties move toward the larger t (ts is ascending)
      best.input = x;
      best.output = g;
    }
  }
  return best;
}

}  // namespace sckls
