#include "doctest.h"

#include <cmath>
#include <limits>
#include <vector>

#include "sckls/errors.hpp"
#include "sckls/estimators.hpp"
#include "sckls/grid.hpp"
#include "sckls/rng.hpp"

using namespace sckls;

namespace {

constexpr double kPi = 3.14159265358979323846;

double gauss(double u) { return std::exp(-0.5 * u * u) / std::sqrt(2.0 * kPi); }

Eigen::MatrixXd linspace_col(double lo, double hi, int n) {
  Eigen::MatrixXd X(n, 1);
  for (int i = 0; i < n; ++i) X(i, 0) = lo + (hi - lo) * i / (n - 1.0);
  return X;
}

// Equality-constrained enumeration over all constraint subsets; exact for
// convex P. Used as the ground truth for small shape-constrained fits.
struct DenseOracle {
  Eigen::VectorXd z;
  double objective = std::numeric_limits<double>::infinity();
};

DenseOracle enumerate_qp(const Eigen::MatrixXd& P, const Eigen::VectorXd& q,
                         const Eigen::MatrixXd& G, const Eigen::VectorXd& c) {
  const int n = static_cast<int>(q.size());
  const int k = static_cast<int>(c.size());
  DenseOracle best;
  for (long mask = 0; mask < (1L << k); ++mask) {
    std::vector<int> act;
    for (int i = 0; i < k; ++i)
      if (mask & (1L << i)) act.push_back(i);
    const int na = static_cast<int>(act.size());
    if (na > n) continue;
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + na, n + na);
    K.topLeftCorner(n, n) = P;
    Eigen::VectorXd rhs(n + na);
    rhs.head(n) = -q;
    for (int r = 0; r < na; ++r) {
      K.block(n + r, 0, 1, n) = G.row(act[r]);
      K.block(0, n + r, n, 1) = G.row(act[r]).transpose();
      rhs[n + r] = c[act[r]];
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
    if (!lu.isInvertible()) continue;
    const Eigen::VectorXd u = lu.solve(rhs);
    const Eigen::VectorXd z = u.head(n);
    bool ok = true;
    for (int r = 0; r < na && ok; ++r)
      if (u[n + r] < -1e-9) ok = false;
    if (ok && k > 0 && (G * z - c).maxCoeff() > 1e-9) ok = false;
    if (!ok) continue;
    const double obj = 0.5 * z.dot(P * z) + q.dot(z);
    if (obj < best.objective) {
      best.objective = obj;
      best.z = z;
    }
  }
  return best;
}

HyperplaneModel make_model(const Eigen::MatrixXd& anchors, const Eigen::VectorXd& a,
                           const Eigen::MatrixXd& b, const ShapeSpec& shape) {
  HyperplaneModel m;
  m.grid = EvalGrid::external(anchors);
  m.a = a;
  m.b = b;
  m.shape = shape;
  return m;
}

}  // namespace

TEST_CASE("local linear reproduces affine and constant responses at any bandwidth") {
  const Eigen::MatrixXd X = linspace_col(0.0, 3.0, 25);
  const EvalGrid g = uniform_grid(X, {5});
  Eigen::VectorXd y = 3.0 + 2.0 * X.col(0).array();
  for (double h : {0.2, 0.7, 4.0}) {
    const LocalLinearFit f = local_linear_fit(X, y, g, BandwidthSpec::fixed(h), KernelKind::Gaussian);
    for (int i = 0; i < g.m(); ++i) {
      CHECK(f.a[i] == doctest::Approx(3.0 + 2.0 * g.points(i, 0)).epsilon(1e-10));
      CHECK(f.b(i, 0) == doctest::Approx(2.0).epsilon(1e-10));
    }
  }
  y.setConstant(5.5);
  const LocalLinearFit f = local_linear_fit(X, y, g, BandwidthSpec::fixed(0.5), KernelKind::Gaussian);
  for (int i = 0; i < g.m(); ++i) {
    CHECK(f.a[i] == doctest::Approx(5.5).epsilon(1e-12));
    CHECK(f.b(i, 0) == doctest::Approx(0.0).scale(1.0).epsilon(1e-10));
  }
}

TEST_CASE("local linear matches an explicit normal-equation solve") {
  rng::Stream s(301);
  const int n = 30;
  Eigen::MatrixXd X(n, 1);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = s.uniform(0.0, 2.0);
    y[i] = 1.0 + X(i, 0) - 0.7 * X(i, 0) * X(i, 0) + 0.1 * s.normal();
  }
  const EvalGrid g = uniform_grid(X, {5});
  const double h = 0.3;
  const LocalLinearFit f = local_linear_fit(X, y, g, BandwidthSpec::fixed(h), KernelKind::Gaussian);
  CHECK(f.sse == doctest::Approx(f.point_objective.sum()).epsilon(1e-12));
  double total = 0.0;
  for (int i = 0; i < g.m(); ++i) {
    Eigen::Matrix2d M = Eigen::Matrix2d::Zero();
    Eigen::Vector2d r = Eigen::Vector2d::Zero();
    for (int j = 0; j < n; ++j) {
      const double dx = X(j, 0) - g.points(i, 0);
      const double w = gauss(dx / h);
      Eigen::Vector2d u(1.0, dx);
      M += w * u * u.transpose();
      r += w * y[j] * u;
    }
    const Eigen::Vector2d beta = M.inverse() * r;
    CHECK(f.a[i] == doctest::Approx(beta[0]).epsilon(1e-8));
    CHECK(f.b(i, 0) == doctest::Approx(beta[1]).epsilon(1e-8));
    for (int j = 0; j < n; ++j) {
      const double dx = X(j, 0) - g.points(i, 0);
      const double e = y[j] - beta[0] - beta[1] * dx;
      total += gauss(dx / h) * e * e;
    }
  }
  CHECK(f.sse == doctest::Approx(total).epsilon(1e-8));
}

TEST_CASE("a singular local design names the evaluation point; ridge recovers") {
  Eigen::MatrixXd X(4, 1);
  X << 0.0, 0.0, 0.0, 50.0;
  Eigen::MatrixXd pts(1, 1);
  pts << 0.0;
  const EvalGrid g = EvalGrid::external(pts);
  Eigen::VectorXd y(4);
  y << 1, 1, 1, 2;
  CHECK_THROWS_AS(local_linear_fit(X, y, g, BandwidthSpec::fixed(0.1), KernelKind::Gaussian),
                  IdentificationError);
  const LocalLinearFit f =
      local_linear_fit(X, y, g, BandwidthSpec::fixed(0.1), KernelKind::Gaussian, 1e-8);
  CHECK(f.a[0] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("shape fit reproduces noiseless affine data exactly") {
  const Eigen::MatrixXd X = linspace_col(0.0, 2.0, 15);
  const Eigen::VectorXd y = 1.0 + 2.0 * X.col(0).array();
  const EvalGrid g = uniform_grid(X, {4});

  for (bool lazy : {false, true}) {
    const HyperplaneModel m = sckls_fit(X, y, g, BandwidthSpec::fixed(0.5), KernelKind::Gaussian,
                                        ShapeSpec::concave_increasing(1), lazy);
    for (int i = 0; i < g.m(); ++i) {
      CHECK(m.a[i] == doctest::Approx(1.0 + 2.0 * g.points(i, 0)).epsilon(1e-6));
      CHECK(m.b(i, 0) == doctest::Approx(2.0).epsilon(1e-5));
    }
    CHECK(m.sse <= 1e-10);
  }
  // convex variant sees the same affine data as feasible with zero loss
  const HyperplaneModel c = sckls_fit(X, y, g, BandwidthSpec::fixed(0.5), KernelKind::Gaussian,
                                      ShapeSpec::convex_increasing(1));
  CHECK(c.sse <= 1e-10);
  // decreasing variant on decreasing data
  ShapeSpec dec;
  dec.curvature = Curvature::Concave;
  dec.monotonicity = {Monotone::Decreasing};
  const Eigen::VectorXd yd = 1.0 - 2.0 * X.col(0).array();
  const HyperplaneModel md =
      sckls_fit(X, yd, g, BandwidthSpec::fixed(0.5), KernelKind::Gaussian, dec);
  for (int i = 0; i < g.m(); ++i)
    CHECK(md.b(i, 0) == doctest::Approx(-2.0).epsilon(1e-5));
}

TEST_CASE("slack constraints collapse to the unconstrained local linear fit") {
  const Eigen::MatrixXd X = linspace_col(0.5, 4.0, 40);
  const Eigen::VectorXd y = X.col(0).array().sqrt();
  const EvalGrid g = uniform_grid(X, {6});
  const BandwidthSpec bw = BandwidthSpec::fixed(0.3);

  const LocalLinearFit ll = local_linear_fit(X, y, g, bw, KernelKind::Gaussian);
  HyperplaneModel asll = make_model(g.points, ll.a, ll.b, ShapeSpec::concave_increasing(1));
  asll.grid = g;
  REQUIRE(shape_violation(asll) <= 1e-9);  // the premise: constraints already slack

  const HyperplaneModel m =
      sckls_fit(X, y, g, bw, KernelKind::Gaussian, ShapeSpec::concave_increasing(1));
  for (int i = 0; i < g.m(); ++i) {
    CHECK(m.a[i] == doctest::Approx(ll.a[i]).epsilon(1e-6));
    CHECK(m.b(i, 0) == doctest::Approx(ll.b(i, 0)).epsilon(1e-5));
  }
}

TEST_CASE("small concave-increasing fit equals the exhaustive active-set oracle") {
  // n = 12, m = 3, h = 0.5; convex-shaped response so several constraints bind
  const int n = 12;
  Eigen::MatrixXd X(n, 1);
  for (int j = 0; j < n; ++j) X(j, 0) = 0.25 * j;
  rng::Stream s(1207);
  Eigen::VectorXd y(n);
  for (int j = 0; j < n; ++j) {
    const double x = X(j, 0);
    y[j] = (x - 1.2) * (x - 1.2) + 0.05 * s.normal();
  }
  const EvalGrid g = uniform_grid(X, {3});
  const double h = 0.5;

  // stacked weighted least-squares assembly, layout [a_0, b_0, a_1, b_1, a_2, b_2]
  const int m = 3, nv = 2 * m;
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(nv, nv);
  Eigen::VectorXd q = Eigen::VectorXd::Zero(nv);
  double constant = 0.0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      const double dx = X(j, 0) - g.points(i, 0);
      const double w = gauss(dx / h);
      Eigen::VectorXd row = Eigen::VectorXd::Zero(nv);
      row[2 * i] = 1.0;
      row[2 * i + 1] = dx;
      P += 2.0 * w * row * row.transpose();
      q -= 2.0 * w * y[j] * row;
      constant += w * y[j] * y[j];
    }
  // Afriat rows (ordered pairs) and sign rows, all as <= 0
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(m * (m - 1) + m, nv);
  int r = 0;
  for (int i = 0; i < m; ++i)
    for (int l = 0; l < m; ++l) {
      if (i == l) continue;
      G(r, 2 * i) = -1.0;
      G(r, 2 * l) = 1.0;
      G(r, 2 * i + 1) = g.points(i, 0) - g.points(l, 0);
      ++r;
    }
  for (int i = 0; i < m; ++i) G(r++, 2 * i + 1) = -1.0;
  const Eigen::VectorXd c = Eigen::VectorXd::Zero(G.rows());

  const DenseOracle oracle = enumerate_qp(P, q, G, c);
  REQUIRE(std::isfinite(oracle.objective));

  for (bool lazy : {false, true}) {
    const HyperplaneModel fit = sckls_fit(X, y, g, BandwidthSpec::fixed(h), KernelKind::Gaussian,
                                          ShapeSpec::concave_increasing(1), lazy);
    for (int i = 0; i < m; ++i) {
      CHECK(fit.a[i] == doctest::Approx(oracle.z[2 * i]).epsilon(1e-6).scale(1.0));
      CHECK(fit.b(i, 0) == doctest::Approx(oracle.z[2 * i + 1]).epsilon(1e-6).scale(1.0));
    }
    CHECK(fit.sse == doctest::Approx(oracle.objective + constant).epsilon(1e-7));
    const Eigen::MatrixXd w = [&] {
      Eigen::MatrixXd W(m, n);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) W(i, j) = gauss((X(j, 0) - g.points(i, 0)) / h);
      return W;
    }();
    CHECK(hyperplane_objective(X, y, w, g, fit.a, fit.b) == doctest::Approx(fit.sse).epsilon(1e-9));
  }
}

TEST_CASE("engine reuse across responses matches one-shot fits") {
  rng::Stream s(88);
  const Eigen::MatrixXd X = linspace_col(0.0, 2.0, 20);
  const EvalGrid g = uniform_grid(X, {4});
  ShapeFitEngine eng(X, g, BandwidthSpec::fixed(0.6), KernelKind::Gaussian,
                     ShapeSpec::concave_increasing(1));
  for (int rep = 0; rep < 3; ++rep) {
    Eigen::VectorXd y(20);
    for (int j = 0; j < 20; ++j) y[j] = std::sqrt(X(j, 0) + 0.1) + 0.2 * s.normal();
    const HyperplaneModel a = eng.fit(y);
    const HyperplaneModel b = sckls_fit(X, y, g, BandwidthSpec::fixed(0.6), KernelKind::Gaussian,
                                        ShapeSpec::concave_increasing(1));
    CHECK(a.a.isApprox(b.a, 1e-9));
    CHECK(a.sse == doctest::Approx(b.sse).epsilon(1e-10));
    CHECK(eng.constrained_sse(y) == doctest::Approx(b.sse).epsilon(1e-10));
    CHECK(a.sse >= eng.local_linear(y).sse - 1e-9);
  }
}

TEST_CASE("cnls reproduces feasible data and matches the three-point oracle") {
  Eigen::MatrixXd X(3, 1);
  X << 0, 1, 2;
  Eigen::VectorXd y(3);
  y << 0, 1, 1.8;  // already concave increasing
  const HyperplaneModel feas = cnls_fit(X, y, ShapeSpec::concave_increasing(1));
  for (int j = 0; j < 3; ++j) {
    CHECK(feas.a[j] == doctest::Approx(y[j]).epsilon(1e-6).scale(1.0));
    const Eigen::VectorXd xj = X.row(j).transpose();
    CHECK(predict(feas, xj) == doctest::Approx(y[j]).epsilon(1e-6).scale(1.0));
  }

  // y = (0, 0, 3): project onto {g : g1-g0 >= g2-g1 >= 0} (equally spaced x)
  y << 0, 0, 3;
  Eigen::MatrixXd Pv = 2.0 * Eigen::MatrixXd::Identity(3, 3);
  Eigen::VectorXd qv = -2.0 * y;
  Eigen::MatrixXd Gv(2, 3);
  Gv << 1, -2, 1, 0, 1, -1;
  const DenseOracle oracle = enumerate_qp(Pv, qv, Gv, Eigen::VectorXd::Zero(2));
  const HyperplaneModel m = cnls_fit(X, y, ShapeSpec::concave_increasing(1));
  for (int j = 0; j < 3; ++j)
    CHECK(m.a[j] == doctest::Approx(oracle.z[j]).epsilon(1e-6).scale(1.0));
  // the known solution of that projection
  CHECK(oracle.z[0] == doctest::Approx(-0.5));
  CHECK(oracle.z[1] == doctest::Approx(1.0));
  CHECK(oracle.z[2] == doctest::Approx(2.5));
}

TEST_CASE("cnls merges duplicated rows by weighted averaging") {
  Eigen::MatrixXd X(4, 1);
  X << 0, 1, 1, 2;
  Eigen::VectorXd y(4);
  y << 0, 0.5, 1.5, 1.8;
  const HyperplaneModel m = cnls_fit(X, y, ShapeSpec::concave_increasing(1));
  REQUIRE(m.m() == 3);

  // weight 2 at the merged middle point, response mean 1.0
  Eigen::MatrixXd Pv = Eigen::MatrixXd::Zero(3, 3);
  Pv.diagonal() << 2, 4, 2;
  Eigen::VectorXd qv(3);
  qv << 0, -4.0, -3.6;
  Eigen::MatrixXd Gv(2, 3);
  Gv << 1, -2, 1, 0, 1, -1;
  const DenseOracle oracle = enumerate_qp(Pv, qv, Gv, Eigen::VectorXd::Zero(2));
  std::vector<double> xs = {0.0, 1.0, 2.0};
  for (int j = 0; j < 3; ++j) {
    Eigen::VectorXd xj(1);
    xj << xs[j];
    CHECK(predict(m, xj) == doctest::Approx(oracle.z[j]).epsilon(1e-6).scale(1.0));
  }
}

TEST_CASE("vanishing bandwidth with grid at the observations recovers cnls") {
  rng::Stream s(41);
  Eigen::MatrixXd X(10, 1);
  for (int j = 0; j < 10; ++j) X(j, 0) = 0.3 * j + 0.01 * s.uniform01();
  Eigen::VectorXd y(10);
  for (int j = 0; j < 10; ++j) y[j] = std::log1p(X(j, 0)) + 0.3 * s.normal();

  const HyperplaneModel ref = cnls_fit(X, y, ShapeSpec::concave_increasing(1));
  const HyperplaneModel tiny = sckls_fit(X, y, EvalGrid::external(X), BandwidthSpec::fixed(1e-6),
                                         KernelKind::Gaussian, ShapeSpec::concave_increasing(1));
  for (int j = 0; j < 10; ++j)
    CHECK(tiny.a[j] == doctest::Approx(ref.a[j]).epsilon(1e-4).scale(1.0));
}

TEST_CASE("huge bandwidth flattens the fit to sign-constrained least squares") {
  rng::Stream s(42);
  Eigen::MatrixXd X(20, 1);
  Eigen::VectorXd y(20);
  for (int j = 0; j < 20; ++j) {
    X(j, 0) = s.uniform(0.0, 3.0);
    y[j] = 0.5 + 0.8 * X(j, 0) + 0.3 * s.normal();
  }
  const AffineFit mono = monotone_linear_fit(X, y);
  const EvalGrid g = uniform_grid(X, {4});
  const HyperplaneModel m = sckls_fit(X, y, g, BandwidthSpec::fixed(1e6), KernelKind::Gaussian,
                                      ShapeSpec::concave_increasing(1));
  for (int i = 0; i < g.m(); ++i) {
    CHECK(m.a[i] ==
          doctest::Approx(mono.intercept + mono.slope[0] * g.points(i, 0)).epsilon(1e-4));
    CHECK(m.b(i, 0) == doctest::Approx(mono.slope[0]).epsilon(1e-4).scale(1.0));
  }
}

TEST_CASE("monotone linear fit clamps negative slopes") {
  const Eigen::MatrixXd X = linspace_col(0.0, 2.0, 12);
  Eigen::VectorXd y = 1.0 + 2.0 * X.col(0).array();
  AffineFit f = monotone_linear_fit(X, y);
  CHECK(f.intercept == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(f.slope[0] == doctest::Approx(2.0).epsilon(1e-8));

  y = -X.col(0);
  f = monotone_linear_fit(X, y);
  CHECK(f.slope[0] == doctest::Approx(0.0).scale(1.0).epsilon(1e-8));
  CHECK(f.intercept == doctest::Approx(y.mean()).epsilon(1e-8));

  const AffineFit free = affine_fit(X, y);
  CHECK(free.slope[0] == doctest::Approx(-1.0).epsilon(1e-10));
}

TEST_CASE("predict takes the lower envelope of the planes") {
  Eigen::MatrixXd anchors(2, 1);
  anchors << 0.0, 2.0;
  Eigen::VectorXd a(2);
  a << 1.0, 2.0;
  Eigen::MatrixXd b(2, 1);
  b << 1.0, 0.5;
  const HyperplaneModel m = make_model(anchors, a, b, ShapeSpec::concave_increasing(1));
  Eigen::VectorXd x(1);
  x << 0.0;
  CHECK(predict(m, x) == doctest::Approx(1.0));
  x << 4.0;
  CHECK(predict(m, x) == doctest::Approx(3.0));

  // convex flip: upper envelope
  HyperplaneModel cx = m;
  cx.shape = ShapeSpec::convex_increasing(1);
  x << 0.0;
  CHECK(predict(cx, x) == doctest::Approx(1.0));  // both planes pass through 1 here
  x << 4.0;
  CHECK(predict(cx, x) == doctest::Approx(5.0));
}

TEST_CASE("predict equals the enumeration oracle on a random feasible family") {
  // tangent planes of -|x|^2 form a feasible concave family
  rng::Stream s(512);
  const int m = 6, d = 2;
  Eigen::MatrixXd anchors(m, d), b(m, d);
  Eigen::VectorXd a(m);
  for (int i = 0; i < m; ++i) {
    for (int k = 0; k < d; ++k) anchors(i, k) = s.uniform(-1.0, 1.0);
    a[i] = -anchors.row(i).squaredNorm();
    b.row(i) = -2.0 * anchors.row(i);
  }
  const HyperplaneModel model = make_model(anchors, a, b, ShapeSpec::concave_only(d));
  REQUIRE(shape_violation(model) <= 1e-12);

  for (int t = 0; t < 100; ++t) {
    Eigen::VectorXd x(d);
    for (int k = 0; k < d; ++k) x[k] = s.uniform(-2.0, 2.0);
    double lo = std::numeric_limits<double>::infinity();
    int arg = -1;
    for (int i = 0; i < m; ++i) {
      const double v = a[i] + b.row(i).dot((x - anchors.row(i).transpose()).transpose());
      if (v < lo) {
        lo = v;
        arg = i;
      }
    }
    CHECK(predict(model, x) == lo);
    CHECK(active_plane(model, x) == arg);
  }
}

TEST_CASE("nearest-plane prediction for monotone-only models") {
  Eigen::MatrixXd anchors(2, 1);
  anchors << 0.0, 1.0;
  Eigen::VectorXd a(2);
  a << 0.0, 5.0;
  Eigen::MatrixXd b(2, 1);
  b << 1.0, 1.0;
  const HyperplaneModel m = make_model(anchors, a, b, ShapeSpec::monotone_increasing(1));
  Eigen::VectorXd x(1);
  x << 0.2;  // nearest anchor 0 -> plane value 0.2
  CHECK(predict(m, x) == doctest::Approx(0.2));
  x << 0.9;  // nearest anchor 1 -> 5 + (0.9-1)*1
  CHECK(predict(m, x) == doctest::Approx(4.9));
  x << 0.5;  // tie -> lowest index
  CHECK(active_plane(m, x) == 0);
}

TEST_CASE("marginal statistics of a constant-gradient model") {
  Eigen::MatrixXd anchors(3, 2);
  anchors << 0, 0, 1, 0, 0, 1;
  Eigen::MatrixXd b(3, 2);
  b << 2, 3, 2, 3, 2, 3;
  Eigen::VectorXd a(3);
  a << 0, 2, 3;  // tangent-consistent: a_i = 2 x1 + 3 x2
  const HyperplaneModel m = make_model(anchors, a, b, ShapeSpec::concave_increasing(2));
  const MarginalStats st = marginal_stats(m);
  REQUIRE(st.ratio_pairs.size() == 2);
  for (std::size_t p = 0; p < st.percentiles.size(); ++p) {
    CHECK(st.gradient_percentiles(p, 0) == doctest::Approx(2.0));
    CHECK(st.gradient_percentiles(p, 1) == doctest::Approx(3.0));
  }
  // pair (1, 0) is b2/b1
  int idx = st.ratio_pairs[0][0] == 1 ? 0 : 1;
  for (std::size_t p = 0; p < st.percentiles.size(); ++p)
    CHECK(st.ratio_percentiles(p, idx) == doctest::Approx(1.5));
}

TEST_CASE("median gradient of a three-plane model") {
  Eigen::MatrixXd anchors(3, 1);
  anchors << -2.0, 0.0, 2.0;
  Eigen::MatrixXd b(3, 1);
  b << 3.0, 2.0, 1.0;  // decreasing gradients keep concavity
  Eigen::VectorXd a(3);
  a << -4.0, 0.0, 2.0;  // secants consistent with the gradient order
  const HyperplaneModel m = make_model(anchors, a, b, ShapeSpec::concave_increasing(1));
  REQUIRE(shape_violation(m) <= 1e-9);
  const MarginalStats st = marginal_stats(m, nullptr, {50});
  CHECK(st.gradient_percentiles(0, 0) == doctest::Approx(2.0));
}

TEST_CASE("most productive scale size lands on the average-product peak") {
  // g(t) = min(2t, t + 1): average product peaks at the kink t = 1
  Eigen::MatrixXd anchors(2, 1);
  anchors << 0.0, 1.0;
  Eigen::VectorXd a(2);
  a << 0.0, 2.0;
  Eigen::MatrixXd b(2, 1);
  b << 2.0, 1.0;
  const HyperplaneModel m = make_model(anchors, a, b, ShapeSpec::concave_increasing(1));
  Eigen::VectorXd dir(1);
  dir << 1.0;
  const MpssResult r = mpss(m, dir, 0.2, 3.0);
  CHECK(r.t == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(r.output == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(r.input[0] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("constant average product resolves to the largest scale") {
  Eigen::MatrixXd anchors(1, 1);
  anchors << 1.0;
  Eigen::VectorXd a(1);
  a << 3.0;
  Eigen::MatrixXd b(1, 1);
  b << 3.0;  // g(t) = 3t
  const HyperplaneModel m = make_model(anchors, a, b, ShapeSpec::concave_increasing(1));
  Eigen::VectorXd dir(1);
  dir << 1.0;
  const MpssResult r = mpss(m, dir, 0.5, 2.0);
  CHECK(r.t == doctest::Approx(2.0));
  CHECK(r.output == doctest::Approx(6.0));
}

TEST_CASE("positive intercept pushes the scale optimum to the lower end") {
  Eigen::MatrixXd anchors(1, 1);
  anchors << 1.0;
  Eigen::VectorXd a(1);
  a << 2.0;
  Eigen::MatrixXd b(1, 1);
  b << 1.0;  // g(t) = 1 + t
  const HyperplaneModel m = make_model(anchors, a, b, ShapeSpec::concave_increasing(1));
  Eigen::VectorXd dir(1);
  dir << 1.0;
  const MpssResult r = mpss(m, dir, 0.5, 2.0);
  CHECK(r.t == doctest::Approx(0.5));
  CHECK(r.output == doctest::Approx(1.5));
}

TEST_CASE("fitted surfaces satisfy their shape constraints everywhere probed") {
  rng::Stream s(777);
  const int n = 60;
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  for (int j = 0; j < n; ++j) {
    X(j, 0) = s.uniform(0.2, 3.0);
    X(j, 1) = s.uniform(0.2, 3.0);
    y[j] = std::sqrt(X(j, 0)) + std::sqrt(X(j, 1)) + 0.05 * s.normal();
  }
  const EvalGrid g = uniform_grid(X, {4, 4});
  const HyperplaneModel m = sckls_fit(X, y, g, BandwidthSpec::fixed(0.6, 2),
                                      KernelKind::Gaussian, ShapeSpec::concave_increasing(2));
  CHECK(shape_violation(m) <= 1e-6);
  CHECK(m.b.minCoeff() >= -1e-9);

  for (int t = 0; t < 300; ++t) {
    Eigen::VectorXd u(2), v(2);
    for (int k = 0; k < 2; ++k) {
      u[k] = s.uniform(0.2, 3.0);
      v[k] = s.uniform(0.2, 3.0);
    }
    const Eigen::VectorXd mid = 0.5 * (u + v);
    CHECK(predict(m, mid) >= 0.5 * (predict(m, u) + predict(m, v)) - 1e-8);
    const Eigen::VectorXd hi = u.cwiseMax(v), lo = u.cwiseMin(v);
    CHECK(predict(m, hi) >= predict(m, lo) - 1e-9);
  }

  // k-NN bandwidth variant keeps the same guarantees
  const HyperplaneModel k = sckls_fit(X, y, g, BandwidthSpec::knn(20), KernelKind::Gaussian,
                                      ShapeSpec::concave_increasing(2));
  CHECK(shape_violation(k) <= 1e-6);
  for (int t = 0; t < 100; ++t) {
    Eigen::VectorXd u(2), v(2);
    for (int kk = 0; kk < 2; ++kk) {
      u[kk] = s.uniform(0.2, 3.0);
      v[kk] = s.uniform(0.2, 3.0);
    }
    const Eigen::VectorXd mid = 0.5 * (u + v);
    CHECK(predict(k, mid) >= 0.5 * (predict(k, u) + predict(k, v)) - 1e-8);
  }
}

TEST_CASE("convex-increasing fits bound the data from the usual side") {
  rng::Stream s(778);
  const Eigen::MatrixXd X = linspace_col(0.3, 2.0, 30);
  Eigen::VectorXd y(30);
  for (int j = 0; j < 30; ++j) y[j] = std::exp(X(j, 0)) + 0.05 * s.normal();
  const EvalGrid g = uniform_grid(X, {5});
  const HyperplaneModel m = sckls_fit(X, y, g, BandwidthSpec::fixed(0.4), KernelKind::Gaussian,
                                      ShapeSpec::convex_increasing(1));
  CHECK(shape_violation(m) <= 1e-6);
  for (int t = 0; t < 200; ++t) {
    Eigen::VectorXd u(1), v(1);
    u[0] = s.uniform(0.3, 2.0);
    v[0] = s.uniform(0.3, 2.0);
    const Eigen::VectorXd mid = 0.5 * (u + v);
    CHECK(predict(m, mid) <= 0.5 * (predict(m, u) + predict(m, v)) + 1e-8);
  }
}
