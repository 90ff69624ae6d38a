#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sckls/estimators.hpp"
#include "sckls/shape_tests.hpp"

namespace sckls {

enum class DgpKind { CobbDouglas, SShape, PowerTest, SigmoidTest };
enum class InputLaw { Uniform, TruncExp, PolarSShape };
enum class NoiseKind { AdditiveNormal, Multiplicative };

/// Data-generating process. CobbDouglas: g0 = prod x_k^(0.8/d) on inputs in
/// [lo, hi]. SShape: the logistic-scaled CES core (d = 2, polar inputs).
/// PowerTest: g0 = (1/d) sum x_k^power on [0, 1]. SigmoidTest:
/// g0 = 1/(1 + (2x)^-5) on [0, 1]. Multiplicative noise means
/// y = g0 + (x + 1) * e with e ~ N(0, sigma^2) and requires d = 1.
struct DgpSpec {
  DgpKind kind = DgpKind::CobbDouglas;
  int d = 2;
  double power = 2.0;  // PowerTest exponent, >= 0
  InputLaw input_law = InputLaw::Uniform;
  double lo = 1.0;
  double hi = 10.0;
  double rate = 3.0;  // TruncExp decay over [lo, hi]
  NoiseKind noise = NoiseKind::AdditiveNormal;
  double sigma = 0.7;
  int n = 100;
  std::uint64_t seed = 0;

  static DgpSpec cobb_douglas(int d, int n, std::uint64_t seed);
  static DgpSpec cobb_douglas_skewed(int d, int n, std::uint64_t seed);  // TruncExp inputs
  static DgpSpec sshape(int n, std::uint64_t seed);
  static DgpSpec power_test(double p, int n, std::uint64_t seed, double sigma = 0.1);
  static DgpSpec sigmoid_test(int n, std::uint64_t seed, double sigma = 0.1);
  static DgpSpec affinity_power(double p, int d, int n, std::uint64_t seed,
                                double sigma = 0.1);  // additive noise variant
};

struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  Eigen::VectorXd g0;  // truth at the observations
  std::function<double(const Eigen::VectorXd&)> truth;
};

Dataset gen_dgp(const DgpSpec& spec);

/// Largest per-dimension lattice count c >= 2 with c^d <= target.
int lattice_count_for(int target, int d);

enum class EstimatorKind { Sckls, LocalLinear, Cnls, CobbDouglasOls };

std::string estimator_name(EstimatorKind kind);

struct RmseConfig {
  DgpSpec dgp;  // template; d, n, and seed are overridden per scenario
  std::vector<int> n_list{100};
  std::vector<int> d_list{2};
  std::vector<EstimatorKind> estimators{EstimatorKind::Sckls, EstimatorKind::LocalLinear,
                                        EstimatorKind::Cnls};
  int reps = 10;
  std::uint64_t master_seed = 0;
  // per-dimension count = lattice_count_for(eval_target, d); 440 realizes the
  // "approximately 400" lattice (20^2, 7^3, 4^4)
  int eval_target = 440;
  std::optional<std::vector<int>> grid_counts;  // explicit lattice override
  KernelKind kernel = KernelKind::Gaussian;
  bool knn_bandwidth = false;              // k-NN instead of fixed bandwidth
  std::optional<BandwidthSpec> bandwidth;  // skip cross validation when set
};

struct RmseCell {
  EstimatorKind estimator = EstimatorKind::Sckls;
  std::vector<double> rmse_obs;   // completed replications in index order
  std::vector<double> rmse_eval;
  double mean_obs = 0, sd_obs = 0, mean_eval = 0, sd_eval = 0;
  int failures = 0;
};

struct ScenarioResult {
  int d = 0, n = 0;
  std::vector<int> grid_counts;
  std::vector<std::uint64_t> rep_seeds;  // one per replication
  std::vector<RmseCell> cells;           // one per configured estimator
  double seconds = 0;
};

struct ExperimentReport {
  RmseConfig config;
  std::vector<ScenarioResult> scenarios;
  std::string rng = "counter-splitmix64";
};

/// One Monte Carlo cell per (d, n, estimator): generate, pick a bandwidth by
/// LOOCV (unless configured), fit every estimator on the same draws, and
/// aggregate RMSE against the truth at the observations and at the uniform
/// evaluation lattice. Estimator failures are logged to stderr and leave the
/// cell marked incomplete rather than aborting the run.
ExperimentReport run_rmse_experiment(const RmseConfig& config);

enum class TestKind { Shape, Affinity };

struct PowerScenario {
  DgpSpec dgp;  // seed overridden per replication
  ShapeSpec shape = ShapeSpec::concave_increasing(1);  // shape-test null
  BootstrapScheme scheme;
  bool ordinary_bootstrap = false;  // affinity: resample residuals with replacement
  bool monotone_variant = false;    // affinity: restrict to increasing functions
  int eval_count = 30;
  KernelKind kernel = KernelKind::Gaussian;
  std::optional<BandwidthSpec> bandwidth;  // LOOCV when absent
};

struct PowerResult {
  std::vector<double> alphas;
  std::vector<double> rejection_rates;  // fraction of completed reps with p < alpha
  std::vector<double> p_values;         // completed replications in index order
  std::vector<std::uint64_t> rep_seeds;
  int failures = 0;
};

PowerResult run_power_study(TestKind kind, const PowerScenario& scenario, int reps,
                            const std::vector<double>& alphas, std::uint64_t master_seed);

struct SweepPoint {
  double h = 0;
  double sckls_rmse = 0;  // mean evaluation-point RMSE over completed reps
  double ll_rmse = 0;
  int failures = 0;
};

/// RMSE-versus-bandwidth curves for SCKLS and unconstrained local linear on
/// the same replicated draws (the data do not change across h, so curves are
/// comparable point by point and bit-reproducible under a fixed seed).
std::vector<SweepPoint> bandwidth_sensitivity_sweep(const DgpSpec& dgp,
                                                    const std::vector<double>& h_values,
                                                    int reps, std::uint64_t master_seed,
                                                    int eval_target = 440);

}  // namespace sckls
