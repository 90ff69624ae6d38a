#include "sckls/simulation.hpp"

#include <chrono>
#include <cmath>
#include <iostream>

#include "sckls/bandwidth.hpp"
#include "sckls/errors.hpp"
#include "sckls/parallel.hpp"
#include "sckls/rng.hpp"

namespace sckls {

namespace {

constexpr double kPi = 3.14159265358979323846;

void validate(const DgpSpec& s) {
  if (s.n < 1) throw DataError("sample size must be positive");
  if (s.d < 1) throw DataError("input dimension must be positive");
  if (!(s.sigma > 0.0)) throw DataError("noise level must be positive");
  switch (s.kind) {
    case DgpKind::CobbDouglas:
      if (s.input_law == InputLaw::PolarSShape)
        throw DataError("polar inputs belong to the S-shape DGP");
      if (!(s.lo < s.hi) || !(s.lo > 0.0))
        throw DataError("Cobb-Douglas inputs need 0 < lo < hi");
      if (s.input_law == InputLaw::TruncExp && !(s.rate > 0.0))
        throw DataError("truncated exponential rate must be positive");
      break;
    case DgpKind::SShape:
      if (s.d != 2) throw DataError("the S-shape DGP is two-input");
      if (s.input_law != InputLaw::PolarSShape)
        throw DataError("the S-shape DGP draws inputs in polar coordinates");
      break;
    case DgpKind::PowerTest:
      if (!(s.power >= 0.0)) throw DataError("power exponent must be nonnegative");
      if (s.input_law != InputLaw::Uniform || s.lo != 0.0 || s.hi != 1.0)
        throw DataError("the power-function DGP draws inputs uniformly on [0, 1]");
      break;
    case DgpKind::SigmoidTest:
      if (s.d != 1) throw DataError("the sigmoid DGP is one-input");
      if (s.input_law != InputLaw::Uniform || s.lo != 0.0 || s.hi != 1.0)
        throw DataError("the sigmoid DGP draws inputs uniformly on [0, 1]");
      break;
  }
  if (s.noise == NoiseKind::Multiplicative && s.d != 1)
    throw DataError("the multiplicative noise form (x + 1) * e is one-input");
}

std::function<double(const Eigen::VectorXd&)> truth_fn(const DgpSpec& s) {
  switch (s.kind) {
    case DgpKind::CobbDouglas: {
      const double e = 0.8 / s.d;
      return [e](const Eigen::VectorXd& x) {
        double v = 1.0;
        for (int k = 0; k < x.size(); ++k) v *= std::pow(std::max(x[k], 0.0), e);
        return v;
      };
    }
    case DgpKind::SShape:
      return [](const Eigen::VectorXd& x) {
        const double beta = 0.45, sig = 1.51;
        const double r = (sig - 1.0) / sig;
        const double core = std::pow(beta * std::pow(std::max(x[0], 0.0), r) +
                                         (1.0 - beta) * std::pow(std::max(x[1], 0.0), r),
                                     1.0 / r);
        if (!(core > 0.0)) return 0.0;
        return 15.0 / (1.0 + std::exp(-5.0 * std::log(core)));
      };
    case DgpKind::PowerTest: {
      const double p = s.power;
      return [p](const Eigen::VectorXd& x) {
        double v = 0.0;
        for (int k = 0; k < x.size(); ++k) v += std::pow(std::max(x[k], 0.0), p);
        return v / x.size();
      };
    }
    case DgpKind::SigmoidTest:
    default:
      return [](const Eigen::VectorXd& x) {
        if (!(x[0] > 0.0)) return 0.0;
        return 1.0 / (1.0 + std::exp(-5.0 * std::log(2.0 * x[0])));
      };
  }
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / v.size();
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / (v.size() - 1));
}

double rmse(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return std::sqrt((a - b).squaredNorm() / a.size());
}

BandwidthSpec pick_bandwidth(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                             KernelKind kernel, bool knn,
                             const std::optional<BandwidthSpec>& fixed) {
  if (fixed) return *fixed;
  if (knn)
    return BandwidthSpec::knn(
        loocv_k(X, y, knn_candidates(static_cast<int>(X.rows()), static_cast<int>(X.cols())),
                kernel));
  return BandwidthSpec::fixed(loocv_bandwidth(X, y, bandwidth_candidates(X), kernel));
}

// log-log least squares, the parametric comparator for Cobb-Douglas data
Eigen::VectorXd cobb_douglas_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  const int d = static_cast<int>(X.cols());
  std::vector<int> keep;
  for (int j = 0; j < y.size(); ++j)
    if (y[j] > 0.0) keep.push_back(j);
  if (static_cast<int>(keep.size()) < d + 2)
    throw SolverError("too few positive responses for the log-linear fit");
  Eigen::MatrixXd D(keep.size(), d + 1);
  Eigen::VectorXd r(keep.size());
  for (std::size_t q = 0; q < keep.size(); ++q) {
    D(q, 0) = 1.0;
    for (int k = 0; k < d; ++k) D(q, k + 1) = std::log(X(keep[q], k));
    r[q] = std::log(y[keep[q]]);
  }
  return D.colPivHouseholderQr().solve(r);
}

Eigen::VectorXd cobb_douglas_eval(const Eigen::VectorXd& beta, const Eigen::MatrixXd& pts) {
  Eigen::VectorXd out(pts.rows());
  for (int i = 0; i < pts.rows(); ++i) {
    double lg = beta[0];
    for (int k = 0; k < pts.cols(); ++k) lg += beta[k + 1] * std::log(std::max(pts(i, k), 1e-300));
    out[i] = std::exp(lg);
  }
  return out;
}

struct RepOutcome {
  // slot per estimator: [obs, eval] plus a completion flag
  std::vector<double> obs, eval;
  std::vector<char> ok;
  std::uint64_t seed = 0;
};

}  // namespace

DgpSpec DgpSpec::cobb_douglas(int d, int n, std::uint64_t seed) {
  DgpSpec s;
  s.kind = DgpKind::CobbDouglas;
  s.d = d;
  s.n = n;
  s.seed = seed;
  return s;
}

DgpSpec DgpSpec::cobb_douglas_skewed(int d, int n, std::uint64_t seed) {
  DgpSpec s = cobb_douglas(d, n, seed);
  s.input_law = InputLaw::TruncExp;
  return s;
}

DgpSpec DgpSpec::sshape(int n, std::uint64_t seed) {
  DgpSpec s;
  s.kind = DgpKind::SShape;
  s.d = 2;
  s.input_law = InputLaw::PolarSShape;
  s.n = n;
  s.seed = seed;
  return s;
}

DgpSpec DgpSpec::power_test(double p, int n, std::uint64_t seed, double sigma) {
  DgpSpec s;
  s.kind = DgpKind::PowerTest;
  s.d = 1;
  s.power = p;
  s.input_law = InputLaw::Uniform;
  s.lo = 0.0;
  s.hi = 1.0;
  s.noise = NoiseKind::Multiplicative;
  s.sigma = sigma;
  s.n = n;
  s.seed = seed;
  return s;
}

DgpSpec DgpSpec::sigmoid_test(int n, std::uint64_t seed, double sigma) {
  DgpSpec s = power_test(1.0, n, seed, sigma);
  s.kind = DgpKind::SigmoidTest;
  return s;
}

DgpSpec DgpSpec::affinity_power(double p, int d, int n, std::uint64_t seed, double sigma) {
  DgpSpec s = power_test(p, n, seed, sigma);
  s.d = d;
  s.noise = NoiseKind::AdditiveNormal;
  return s;
}

Dataset gen_dgp(const DgpSpec& spec) {
  validate(spec);
  Dataset out;
  out.truth = truth_fn(spec);
  out.X.resize(spec.n, spec.d);
  out.y.resize(spec.n);
  out.g0.resize(spec.n);

  rng::Stream xs(spec.seed, 1);
  rng::Stream es(spec.seed, 2);
  for (int j = 0; j < spec.n; ++j) {
    switch (spec.input_law) {
      case InputLaw::Uniform:
        for (int k = 0; k < spec.d; ++k) out.X(j, k) = xs.uniform(spec.lo, spec.hi);
        break;
      case InputLaw::TruncExp: {
        const double flo = std::exp(-spec.rate * spec.lo);
        const double fhi = std::exp(-spec.rate * spec.hi);
        for (int k = 0; k < spec.d; ++k) {
          const double u = xs.uniform01();
          out.X(j, k) = -std::log(flo - u * (flo - fhi)) / spec.rate;
        }
        break;
      }
      case InputLaw::PolarSShape: {
        const double eta = xs.uniform(0.05, kPi / 2.0 - 0.05);
        const double omega = xs.uniform(0.0, 2.5);
        out.X(j, 0) = omega * std::cos(eta);
        out.X(j, 1) = omega * std::sin(eta);
        break;
      }
    }
    out.g0[j] = out.truth(out.X.row(j).transpose());
    const double e = spec.sigma * es.normal();
    out.y[j] = spec.noise == NoiseKind::AdditiveNormal
                   ? out.g0[j] + e
                   : out.g0[j] + (out.X(j, 0) + 1.0) * e;
  }
  return out;
}

int lattice_count_for(int target, int d) {
  if (d < 1) throw DataError("input dimension must be positive");
  int c = std::max(2, static_cast<int>(std::round(std::pow(double(target), 1.0 / d))));
  auto fits = [&](int v) {
    double p = 1.0;
    for (int k = 0; k < d; ++k) p *= v;
    return p <= target;
  };
  while (c > 2 && !fits(c)) --c;
  while (fits(c + 1)) ++c;
  return c;
}

std::string estimator_name(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::Sckls: return "sckls";
    case EstimatorKind::LocalLinear: return "local-linear";
    case EstimatorKind::Cnls: return "cnls";
    case EstimatorKind::CobbDouglasOls: return "cobb-douglas-ols";
  }
  return "unknown";
}

ExperimentReport run_rmse_experiment(const RmseConfig& config) {
  if (config.reps < 1) throw DataError("replication count must be positive");
  ExperimentReport report;
  report.config = config;

  int scen_idx = 0;
  for (int d : config.d_list) {
    for (int n : config.n_list) {
      const auto t0 = std::chrono::steady_clock::now();
      ScenarioResult scen;
      scen.d = d;
      scen.n = n;
      scen.grid_counts = config.grid_counts
                             ? *config.grid_counts
                             : std::vector<int>(d, lattice_count_for(config.eval_target, d));
      if (static_cast<int>(scen.grid_counts.size()) != d)
        throw DataError("grid counts do not match the input dimension");

      scen.rep_seeds.resize(config.reps);
      for (int r = 0; r < config.reps; ++r)
        scen.rep_seeds[r] = rng::Stream(config.master_seed, scen_idx + 1, r + 1).next_u64();

      const int ne = static_cast<int>(config.estimators.size());
      std::vector<RepOutcome> slots(config.reps);
      parallel_for(config.reps, [&](std::size_t r) {
        RepOutcome& slot = slots[r];
        slot.obs.assign(ne, 0.0);
        slot.eval.assign(ne, 0.0);
        slot.ok.assign(ne, 0);
        slot.seed = scen.rep_seeds[r];
        DgpSpec spec = config.dgp;
        spec.d = d;
        spec.n = n;
        spec.seed = slot.seed;
        Dataset data;
        EvalGrid grid;
        Eigen::VectorXd g0_grid;
        BandwidthSpec bw;
        try {
          data = gen_dgp(spec);
          // the truth evaluator must reproduce the recorded g0 exactly
          for (int j = 0; j < n; ++j)
            if (data.truth(data.X.row(j).transpose()) != data.g0[j])
              throw SolverError("truth self-check failed");
          grid = uniform_grid(data.X, scen.grid_counts);
          g0_grid.resize(grid.m());
          for (int i = 0; i < grid.m(); ++i)
            g0_grid[i] = data.truth(grid.points.row(i).transpose());
          bw = pick_bandwidth(data.X, data.y, config.kernel, config.knn_bandwidth,
                              config.bandwidth);
        } catch (const Error& err) {
          std::cerr << "replication " << r << " (d=" << d << ", n=" << n
                    << ") failed: " << err.what() << "\n";
          return;
        }
        const ShapeSpec shape = ShapeSpec::concave_increasing(d);
        for (int e = 0; e < ne; ++e) {
          try {
            switch (config.estimators[e]) {
              case EstimatorKind::Sckls: {
                const ShapeFitEngine eng(data.X, grid, bw, config.kernel, shape);
                const HyperplaneModel model = eng.fit(data.y);
                const double ll_sse = eng.local_linear(data.y).sse;
                if (model.sse < ll_sse - 1e-7 * (1.0 + std::abs(ll_sse)))
                  throw SolverError("constrained objective fell below the unconstrained one");
                slot.obs[e] = rmse(predict(model, data.X), data.g0);
                slot.eval[e] = rmse(model.a, g0_grid);
                break;
              }
              case EstimatorKind::LocalLinear: {
                const Eigen::VectorXd at_obs =
                    local_linear_fit(data.X, data.y, EvalGrid::external(data.X), bw,
                                     config.kernel)
                        .a;
                const Eigen::VectorXd at_eval =
                    local_linear_fit(data.X, data.y, grid, bw, config.kernel).a;
                slot.obs[e] = rmse(at_obs, data.g0);
                slot.eval[e] = rmse(at_eval, g0_grid);
                break;
              }
              case EstimatorKind::Cnls: {
                const HyperplaneModel model = cnls_fit(data.X, data.y, shape);
                slot.obs[e] = rmse(predict(model, data.X), data.g0);
                slot.eval[e] = rmse(predict(model, grid.points), g0_grid);
                break;
              }
              case EstimatorKind::CobbDouglasOls: {
                const Eigen::VectorXd beta = cobb_douglas_ols(data.X, data.y);
                slot.obs[e] = rmse(cobb_douglas_eval(beta, data.X), data.g0);
                slot.eval[e] = rmse(cobb_douglas_eval(beta, grid.points), g0_grid);
                break;
              }
            }
            slot.ok[e] = 1;
          } catch (const Error& err) {
            std::cerr << estimator_name(config.estimators[e]) << " replication " << r
                      << " (d=" << d << ", n=" << n << ") failed: " << err.what() << "\n";
          }
        }
      });

      scen.cells.resize(ne);
      for (int e = 0; e < ne; ++e) {
        RmseCell& cell = scen.cells[e];
        cell.estimator = config.estimators[e];
        for (int r = 0; r < config.reps; ++r) {
          if (!slots[r].ok[e]) {
            ++cell.failures;
            continue;
          }
          cell.rmse_obs.push_back(slots[r].obs[e]);
          cell.rmse_eval.push_back(slots[r].eval[e]);
        }
        cell.mean_obs = mean_of(cell.rmse_obs);
        cell.sd_obs = sd_of(cell.rmse_obs);
        cell.mean_eval = mean_of(cell.rmse_eval);
        cell.sd_eval = sd_of(cell.rmse_eval);
      }
      scen.seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      report.scenarios.push_back(std::move(scen));
      ++scen_idx;
    }
  }
  return report;
}

PowerResult run_power_study(TestKind kind, const PowerScenario& scenario, int reps,
                            const std::vector<double>& alphas, std::uint64_t master_seed) {
  if (reps < 1) throw DataError("replication count must be positive");
  PowerResult out;
  out.alphas = alphas;
  out.rep_seeds.resize(reps);
  std::vector<double> pvals(reps, 0.0);
  std::vector<char> ok(reps, 0);

  // replications run serially; the bootstrap inside each test parallelizes
  for (int r = 0; r < reps; ++r) {
    rng::Stream keys(master_seed, r + 1);
    const std::uint64_t dgp_seed = keys.next_u64();
    const std::uint64_t test_seed = keys.next_u64();
    out.rep_seeds[r] = dgp_seed;
    try {
      DgpSpec spec = scenario.dgp;
      spec.seed = dgp_seed;
      const Dataset data = gen_dgp(spec);
      const std::vector<int> counts(spec.d, lattice_count_for(scenario.eval_count, spec.d));
      const EvalGrid grid = uniform_grid(data.X, counts);
      const BandwidthSpec bw = pick_bandwidth(data.X, data.y, scenario.kernel, false,
                                              scenario.bandwidth);
      TestResult res;
      if (kind == TestKind::Shape) {
        res = wild_bootstrap_shape_test(data.X, data.y, grid, bw, scenario.kernel,
                                        scenario.shape, scenario.scheme, 0.05, test_seed);
      } else {
        res = affinity_test(data.X, data.y, grid, bw, scenario.kernel, scenario.scheme, 0.05,
                            test_seed, scenario.monotone_variant, scenario.ordinary_bootstrap);
      }
      pvals[r] = res.p_value;
      ok[r] = 1;
    } catch (const Error& err) {
      std::cerr << "power-study replication " << r << " failed: " << err.what() << "\n";
    }
  }

  for (int r = 0; r < reps; ++r) {
    if (ok[r])
      out.p_values.push_back(pvals[r]);
    else
      ++out.failures;
  }
  out.rejection_rates.resize(alphas.size(), 0.0);
  if (!out.p_values.empty()) {
    for (std::size_t a = 0; a < alphas.size(); ++a) {
      int cnt = 0;
      for (double p : out.p_values)
        if (p < alphas[a]) ++cnt;
      out.rejection_rates[a] = static_cast<double>(cnt) / out.p_values.size();
    }
  }
  return out;
}

std::vector<SweepPoint> bandwidth_sensitivity_sweep(const DgpSpec& dgp,
                                                    const std::vector<double>& h_values,
                                                    int reps, std::uint64_t master_seed,
                                                    int eval_target) {
  if (reps < 1) throw DataError("replication count must be positive");
  if (h_values.empty()) throw DataError("bandwidth list is empty");

  struct Rep {
    Dataset data;
    EvalGrid grid;
    Eigen::VectorXd g0_grid;
  };
  std::vector<Rep> draws(reps);
  const std::vector<int> counts(dgp.d, lattice_count_for(eval_target, dgp.d));
  for (int r = 0; r < reps; ++r) {
    DgpSpec spec = dgp;
    spec.seed = rng::Stream(master_seed, r + 1).next_u64();
    draws[r].data = gen_dgp(spec);
    draws[r].grid = uniform_grid(draws[r].data.X, counts);
    draws[r].g0_grid.resize(draws[r].grid.m());
    for (int i = 0; i < draws[r].grid.m(); ++i)
      draws[r].g0_grid[i] = draws[r].data.truth(draws[r].grid.points.row(i).transpose());
  }

  const ShapeSpec shape = ShapeSpec::concave_increasing(dgp.d);
  std::vector<SweepPoint> curve(h_values.size());
  for (std::size_t hi = 0; hi < h_values.size(); ++hi) {
    curve[hi].h = h_values[hi];
    std::vector<double> sck(reps, 0.0), ll(reps, 0.0);
    std::vector<char> ok(reps, 0);
    parallel_for(reps, [&](std::size_t r) {
      try {
        const BandwidthSpec bw = BandwidthSpec::fixed(h_values[hi], dgp.d);
        const ShapeFitEngine eng(draws[r].data.X, draws[r].grid, bw, KernelKind::Gaussian,
                                 shape);
        sck[r] = rmse(eng.fit(draws[r].data.y).a, draws[r].g0_grid);
        ll[r] = rmse(eng.local_linear(draws[r].data.y).a, draws[r].g0_grid);
        ok[r] = 1;
      } catch (const Error& err) {
        std::cerr << "sweep h=" << h_values[hi] << " replication " << r
                  << " failed: " << err.what() << "\n";
      }
    });
    int done = 0;
    double ssum = 0.0, lsum = 0.0;
    for (int r = 0; r < reps; ++r) {
      if (!ok[r]) {
        ++curve[hi].failures;
        continue;
      }
      ssum += sck[r];
      lsum += ll[r];
      ++done;
    }
    if (done > 0) {
      curve[hi].sckls_rmse = ssum / done;
      curve[hi].ll_rmse = lsum / done;
    }
  }
  return curve;
}

}  // namespace sckls
