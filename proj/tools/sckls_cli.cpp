#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sckls/bandwidth.hpp"
#include "sckls/errors.hpp"
#include "sckls/estimators.hpp"
#include "sckls/grid.hpp"
#include "sckls/io.hpp"
#include "sckls/kernels.hpp"
#include "sckls/partially_linear.hpp"
#include "sckls/shape_tests.hpp"
#include "sckls/simulation.hpp"

namespace {

using namespace sckls;

constexpr const char* kToolVersion = "0.1.0";

std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t pos = s.find(sep, start);
    std::string tok = pos == std::string::npos ? s.substr(start) : s.substr(start, pos - start);
    std::size_t b = tok.find_first_not_of(" \t");
    if (b != std::string::npos) {
      std::size_t e = tok.find_last_not_of(" \t");
      out.push_back(tok.substr(b, e - b + 1));
    }
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep = ",") {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

double parse_real(const std::string& tok, const std::string& what) {
  const char* b = tok.data();
  const char* e = tok.data() + tok.size();
  double v = 0.0;
  auto [p, ec] = std::from_chars(b, e, v);
  if (tok.empty() || ec != std::errc() || p != e || !std::isfinite(v))
    throw DataError("cannot parse " + what + " \"" + tok + "\"");
  return v;
}

int parse_count(const std::string& tok, const std::string& what) {
  int v = 0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (tok.empty() || ec != std::errc() || p != tok.data() + tok.size())
    throw DataError("cannot parse " + what + " \"" + tok + "\"");
  return v;
}

std::vector<double> real_list(const std::string& s, const std::string& what) {
  std::vector<double> out;
  for (const std::string& tok : split_list(s)) out.push_back(parse_real(tok, what));
  return out;
}

std::vector<int> count_list(const std::string& s, const std::string& what) {
  std::vector<int> out;
  for (const std::string& tok : split_list(s)) out.push_back(parse_count(tok, what));
  return out;
}

std::string num(double v) {
  char b[40];
  std::snprintf(b, sizeof(b), "%.6g", v);
  return b;
}

ShapeSpec shape_from_flag(const std::string& name, int d) {
  if (name == "concave-increasing") return ShapeSpec::concave_increasing(d);
  if (name == "convex-increasing") return ShapeSpec::convex_increasing(d);
  if (name == "concave") return ShapeSpec::concave_only(d);
  if (name == "convex") return ShapeSpec::convex_only(d);
  if (name == "monotone") return ShapeSpec::monotone_increasing(d);
  if (name == "none") {
    ShapeSpec s;
    s.curvature = Curvature::None;
    s.monotonicity.assign(d, Monotone::Free);
    return s;
  }
  throw DataError("unknown shape \"" + name +
                  "\" (expected concave-increasing, convex-increasing, concave, convex, "
                  "monotone, or none)");
}

KernelKind kernel_from_flag(const std::string& name) {
  if (name == "gaussian") return KernelKind::Gaussian;
  if (name == "epanechnikov") return KernelKind::Epanechnikov;
  throw DataError("unknown kernel \"" + name + "\"");
}

std::vector<int> counts_from_spec(const std::string& body, int d, const std::string& what) {
  std::vector<int> counts;
  if (body == "auto") {
    counts.assign(d, lattice_count_for(440, d));
  } else {
    for (const std::string& tok : split_list(body, 'x')) counts.push_back(parse_count(tok, what));
    if (static_cast<int>(counts.size()) == 1) counts.assign(d, counts[0]);
    if (static_cast<int>(counts.size()) != d)
      throw DataError(what + " needs 1 or " + std::to_string(d) + " counts, got " +
                      std::to_string(counts.size()));
  }
  return counts;
}

std::string counts_label(const std::vector<int>& counts) {
  std::string out;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(counts[i]);
  }
  return out;
}

std::string int_list_label(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

/// "uniform:auto" | "uniform:20" | "uniform:20x10" | "percentile:15" | "data".
/// label receives the spec with counts made explicit.
EvalGrid grid_from_flag(const std::string& spec, const Eigen::MatrixXd& X, std::string* label) {
  const int d = static_cast<int>(X.cols());
  if (spec == "data") {
    *label = "data";
    return EvalGrid::external(X);
  }
  const std::size_t colon = spec.find(':');
  const std::string head = spec.substr(0, colon);
  const std::string body = colon == std::string::npos ? "auto" : spec.substr(colon + 1);
  const std::vector<int> counts = counts_from_spec(body, d, "grid count");
  if (head == "uniform") {
    *label = "uniform:" + counts_label(counts);
    return uniform_grid(X, counts);
  }
  if (head == "percentile") {
    *label = "percentile:" + counts_label(counts);
    return percentile_grid(X, counts);
  }
  throw DataError("unknown grid spec \"" + spec +
                  "\" (expected uniform:..., percentile:..., or data)");
}

/// "auto" | "fixed:H" | "fixed:H1,H2" | "knn:auto" | "knn:K". label receives
/// the resolved values; how describes the selection when cross-validated.
BandwidthSpec bandwidth_from_flag(const std::string& spec, const Eigen::MatrixXd& X,
                                  const Eigen::VectorXd& y, KernelKind kernel, int cv_count,
                                  std::string* label, std::string* how) {
  const int d = static_cast<int>(X.cols());
  const int n = static_cast<int>(X.rows());
  how->clear();
  BandwidthSpec bw;
  if (spec == "auto") {
    bw = BandwidthSpec::fixed(loocv_bandwidth(X, y, bandwidth_candidates(X, cv_count), kernel));
    *how = "loocv over " + std::to_string(cv_count) + " candidates";
  } else if (spec == "knn:auto") {
    bw = BandwidthSpec::knn(loocv_k(X, y, knn_candidates(n, d, cv_count), kernel));
    *how = "loocv over " + std::to_string(cv_count) + " candidates";
  } else if (spec.rfind("knn:", 0) == 0) {
    bw = BandwidthSpec::knn(parse_count(spec.substr(4), "neighbour count"));
  } else if (spec.rfind("fixed:", 0) == 0) {
    std::vector<double> hs = real_list(spec.substr(6), "bandwidth");
    if (static_cast<int>(hs.size()) == 1) hs.assign(d, hs[0]);
    if (static_cast<int>(hs.size()) != d)
      throw DataError("bandwidth needs 1 or " + std::to_string(d) + " values, got " +
                      std::to_string(hs.size()));
    Eigen::VectorXd h(d);
    for (int k = 0; k < d; ++k) h[k] = hs[k];
    bw = BandwidthSpec::fixed(h);
  } else {
    throw DataError("unknown bandwidth spec \"" + spec +
                    "\" (expected auto, fixed:..., knn:auto, or knn:K)");
  }
  if (bw.mode == BandwidthSpec::Mode::Knn) {
    *label = "knn:" + std::to_string(bw.k);
  } else {
    std::string vals;
    for (int k = 0; k < bw.h.size(); ++k) {
      if (k) vals += ',';
      vals += format_double(bw.h[k]);
    }
    *label = "fixed:" + vals;
  }
  return bw;
}

std::string metadata_line(const std::string& input_hash, std::uint64_t seed,
                          const std::string& command) {
  nlohmann::ordered_json meta;
  meta["tool_version"] = kToolVersion;
  meta["input_hash"] = input_hash;
  meta["seed"] = seed;
  meta["command"] = command;
  return "# " + meta.dump() + "\n";
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << content;
  if (!out) throw DataError("cannot write " + path);
}

std::string csv_text(const std::vector<std::string>& columns,
                     const std::vector<std::vector<std::string>>& rows) {
  std::string out = join(columns) + "\n";
  for (const auto& row : rows) out += join(row) + "\n";
  return out;
}

LoadedData load_frame(const std::string& path, const std::string& x_list,
                      const std::string& y_col, const std::string& z_list,
                      std::string* input_hash) {
  const std::string bytes = read_file_bytes(path);
  *input_hash = content_hash(bytes);
  const DataTable table = parse_csv(bytes, path);
  return select_columns(table, split_list(x_list), y_col, split_list(z_list));
}

double r_squared(const Eigen::VectorXd& response, const Eigen::VectorXd& fitted) {
  const double sst = (response.array() - response.mean()).square().sum();
  const double sse = (response - fitted).squaredNorm();
  return 1.0 - sse / sst;
}

// ---------------------------------------------------------------------------
// fit

struct FitOptions {
  std::string data;
  std::string x_list, y_col = "y", z_list;
  std::string shape = "concave-increasing";
  std::string grid = "uniform:auto";
  std::string bandwidth = "auto";
  std::string kernel = "gaussian";
  int cv_count = 16;
  bool hull_filter = false;
  std::uint64_t seed = 0;
  std::string model_out = "model.json";
  std::string grid_out;
  std::string plot_out;
  std::string mpss_dir;
  double mpss_lo = 0.05, mpss_hi = 20.0;
};

std::string derived_grid_path(const std::string& model_out) {
  std::string stem = model_out;
  if (stem.size() > 5 && stem.substr(stem.size() - 5) == ".json")
    stem.resize(stem.size() - 5);
  return stem + "_grid.csv";
}

void print_percentile_table(const HyperplaneModel& model) {
  const MarginalStats stats = marginal_stats(model);
  const int d = model.d();
  std::printf("gradient percentiles over grid points:\n  pct");
  for (int k = 0; k < d; ++k) std::printf("%12s", ("b" + std::to_string(k + 1)).c_str());
  std::printf("\n");
  for (std::size_t r = 0; r < stats.percentiles.size(); ++r) {
    std::printf("  %3g", stats.percentiles[r]);
    for (int k = 0; k < d; ++k) std::printf("%12s", num(stats.gradient_percentiles(r, k)).c_str());
    std::printf("\n");
  }
  if (!stats.ratio_pairs.empty()) {
    std::printf("marginal rate of substitution percentiles:\n  pct");
    for (const auto& pr : stats.ratio_pairs)
      std::printf("%12s",
                  ("b" + std::to_string(pr[0] + 1) + "/b" + std::to_string(pr[1] + 1)).c_str());
    std::printf("\n");
    for (std::size_t r = 0; r < stats.percentiles.size(); ++r) {
      std::printf("  %3g", stats.percentiles[r]);
      for (int c = 0; c < stats.ratio_percentiles.cols(); ++c)
        std::printf("%12s", num(stats.ratio_percentiles(r, c)).c_str());
      std::printf("\n");
    }
  }
}

void run_fit(const FitOptions& o) {
  std::string input_hash;
  const LoadedData data = load_frame(o.data, o.x_list, o.y_col, o.z_list, &input_hash);
  const int d = static_cast<int>(data.X.cols());
  const int n = static_cast<int>(data.X.rows());

  std::string grid_label;
  EvalGrid grid = grid_from_flag(o.grid, data.X, &grid_label);
  const int full_m = grid.m();
  if (o.hull_filter) grid = convex_hull_filter(grid, data.X);

  std::string bw_label, bw_how;
  const BandwidthSpec bw =
      bandwidth_from_flag(o.bandwidth, data.X, data.y, kernel_from_flag(o.kernel), o.cv_count,
                          &bw_label, &bw_how);
  const ShapeSpec shape = shape_from_flag(o.shape, d);

  HyperplaneModel model;
  std::optional<ContextualFit> ctx;
  if (data.Z.cols() > 0) {
    auto fitted = fit_partially_linear(data.X, data.y, data.Z, grid, bw,
                                       kernel_from_flag(o.kernel), shape);
    ctx = std::move(fitted.first);
    model = std::move(fitted.second);
  } else {
    model = sckls_fit(data.X, data.y, grid, bw, kernel_from_flag(o.kernel), shape);
  }

  const std::string grid_out = o.grid_out.empty() ? derived_grid_path(o.model_out) : o.grid_out;
  std::string command = "fit --data " + o.data + " --x " + join(data.x_names) + " --y " +
                        data.y_name;
  if (!data.z_names.empty()) command += " --contextual " + join(data.z_names);
  command += " --shape " + o.shape + " --grid " + grid_label + " --bandwidth " + bw_label +
             " --kernel " + o.kernel;
  if (o.hull_filter) command += " --hull-filter";
  command += " --seed " + std::to_string(o.seed) + " --model-out " + o.model_out +
             " --grid-out " + grid_out;

  save_model(o.model_out, model, ModelProvenance{kToolVersion, input_hash, o.seed, command});

  std::vector<std::string> grid_cols = data.x_names;
  grid_cols.push_back("a");
  for (int k = 0; k < d; ++k) grid_cols.push_back("b" + std::to_string(k + 1));
  Eigen::MatrixXd grid_table(model.m(), 2 * d + 1);
  grid_table.leftCols(d) = model.grid.points;
  grid_table.col(d) = model.a;
  grid_table.rightCols(d) = model.b;
  std::vector<std::vector<std::string>> grid_rows(model.m());
  for (int i = 0; i < model.m(); ++i)
    for (int c = 0; c < grid_table.cols(); ++c)
      grid_rows[i].push_back(format_double(grid_table(i, c)));
  write_text_file(grid_out, metadata_line(input_hash, o.seed, command) +
                                csv_text(grid_cols, grid_rows));

  std::printf("data: %s (n=%d, d=%d, inputs=%s, response=%s)\n", o.data.c_str(), n, d,
              join(data.x_names).c_str(), data.y_name.c_str());
  if (o.hull_filter)
    std::printf("grid: %s, hull filter kept %d of %d points\n", grid_label.c_str(), model.m(),
                full_m);
  else
    std::printf("grid: %s (m=%d)\n", grid_label.c_str(), model.m());
  std::printf("bandwidth: %s%s\n", bw_label.c_str(),
              bw_how.empty() ? "" : (" (" + bw_how + ")").c_str());
  std::printf("kernel: %s, shape: %s\n", o.kernel.c_str(), o.shape.c_str());
  const SolverDiagnostics& dg = model.diagnostics;
  const char* status = dg.status == QpStatus::Optimal
                           ? "optimal"
                           : (dg.status == QpStatus::MaxIter ? "max_iter" : "infeasible");
  std::printf("solver: %s, iterations=%d, rounds=%d, constraint rows=%lld, kkt=%s\n", status,
              dg.iterations, dg.rounds, static_cast<long long>(dg.constraint_rows),
              num(dg.kkt.max()).c_str());
  std::printf("objective (kernel-weighted sse): %s\n", num(model.sse).c_str());

  Eigen::VectorXd g_at_obs = predict(model, data.X);
  if (ctx) {
    const Eigen::VectorXd full = g_at_obs + data.Z * ctx->gamma;
    std::printf("R^2 (raw response): %s\n", format_double(r_squared(data.y, full)).c_str());
    std::printf("R^2 (adjusted response): %s\n",
                format_double(r_squared(ctx->adjusted_y, g_at_obs)).c_str());
    std::printf("contextual effects%s:\n",
                ctx->ridged ? " (stage 1 used the ridge fallback)" : "");
    std::printf("  %-12s%12s%12s%12s%12s%12s\n", "column", "gamma", "std_err", "p_value",
                "ci_lo", "ci_hi");
    for (int k = 0; k < ctx->l(); ++k)
      std::printf("  %-12s%12s%12s%12s%12s%12s\n", data.z_names[k].c_str(),
                  num(ctx->gamma[k]).c_str(), num(ctx->std_errors[k]).c_str(),
                  num(ctx->p_values[k]).c_str(), num(ctx->lower[k]).c_str(),
                  num(ctx->upper[k]).c_str());
  } else {
    std::printf("R^2 (raw response): %s\n", format_double(r_squared(data.y, g_at_obs)).c_str());
  }

  print_percentile_table(model);

  if (!o.mpss_dir.empty()) {
    const std::vector<double> dir = real_list(o.mpss_dir, "mpss direction");
    if (static_cast<int>(dir.size()) != d)
      throw DataError("mpss direction needs " + std::to_string(d) + " components");
    Eigen::VectorXd direction(d);
    for (int k = 0; k < d; ++k) direction[k] = dir[k];
    const MpssResult res = mpss(model, direction, o.mpss_lo, o.mpss_hi);
    std::printf("mpss along (%s): t=%s, output=%s\n", o.mpss_dir.c_str(), num(res.t).c_str(),
                num(res.output).c_str());
  }

  if (!o.plot_out.empty()) {
    std::vector<std::string> cols{"series"};
    for (const std::string& name : data.x_names) cols.push_back(name);
    cols.push_back("value");
    std::vector<std::vector<std::string>> rows;
    for (int j = 0; j < n; ++j) {
      std::vector<std::string> row{"observed"};
      for (int k = 0; k < d; ++k) row.push_back(format_double(data.X(j, k)));
      row.push_back(format_double(data.y[j]));
      rows.push_back(std::move(row));
    }
    if (d == 1) {
      const double lo = data.X.col(0).minCoeff(), hi = data.X.col(0).maxCoeff();
      for (int s = 0; s < 200; ++s) {
        Eigen::VectorXd x(1);
        x[0] = lo + (hi - lo) * s / 199.0;
        rows.push_back({"fitted", format_double(x[0]), format_double(predict(model, x))});
      }
    } else {
      for (int i = 0; i < model.m(); ++i) {
        std::vector<std::string> row{"fitted"};
        for (int k = 0; k < d; ++k) row.push_back(format_double(model.grid.points(i, k)));
        row.push_back(format_double(model.a[i]));
        rows.push_back(std::move(row));
      }
    }
    write_text_file(o.plot_out,
                    metadata_line(input_hash, o.seed, command) + csv_text(cols, rows));
    std::printf("plot data: %s\n", o.plot_out.c_str());
  }

  std::printf("model: %s\ngrid table: %s\n", o.model_out.c_str(), grid_out.c_str());
}

// ---------------------------------------------------------------------------
// predict

struct PredictOptions {
  std::string model;
  std::string points;
  std::string out = "predictions.csv";
};

Eigen::MatrixXd points_matrix(const DataTable& table, int d) {
  std::vector<int> idx;
  bool named = true;
  for (int k = 0; k < d; ++k) {
    const int at = table.find("x" + std::to_string(k + 1));
    if (at < 0) {
      named = false;
      break;
    }
    idx.push_back(at);
  }
  if (!named) {
    if (static_cast<int>(table.columns.size()) != d)
      throw DataError("points file needs columns x1..x" + std::to_string(d) + " or exactly " +
                      std::to_string(d) + " columns, got " +
                      std::to_string(table.columns.size()));
    idx.clear();
    for (int k = 0; k < d; ++k) idx.push_back(k);
  }
  Eigen::MatrixXd P(table.values.rows(), d);
  for (int k = 0; k < d; ++k) P.col(k) = table.values.col(idx[k]);
  return P;
}

void run_predict(const PredictOptions& o) {
  const LoadedModel lm = load_model(o.model);
  const int d = lm.model.d();
  const std::string bytes = read_file_bytes(o.points);
  const std::string input_hash = content_hash(bytes);
  Eigen::MatrixXd P(0, d);
  if (bytes.find_first_not_of(" \t\r\n") != std::string::npos)
    P = points_matrix(parse_csv(bytes, o.points), d);

  const std::string command =
      "predict --model " + o.model + " --points " + o.points + " --out " + o.out;
  std::vector<std::string> cols;
  for (int k = 0; k < d; ++k) cols.push_back("x" + std::to_string(k + 1));
  cols.push_back("prediction");
  cols.push_back("extrapolated");
  std::vector<std::vector<std::string>> rows;
  int outside = 0;
  for (Eigen::Index i = 0; i < P.rows(); ++i) {
    const Eigen::VectorXd x = P.row(i);
    std::vector<std::string> row;
    for (int k = 0; k < d; ++k) row.push_back(format_double(x[k]));
    row.push_back(format_double(predict(lm.model, x)));
    const bool extrapolated = distance_to_hull(x, lm.model.grid.points) > 1e-9;
    outside += extrapolated;
    row.push_back(extrapolated ? "1" : "0");
    rows.push_back(std::move(row));
  }
  write_text_file(o.out, metadata_line(input_hash, lm.provenance.seed, command) +
                             csv_text(cols, rows));
  std::printf("predictions: %s (%d rows, %d extrapolated)\n", o.out.c_str(),
              static_cast<int>(P.rows()), outside);
}

// ---------------------------------------------------------------------------
// test

struct TestOptions {
  std::string data;
  std::string x_list, y_col = "y";
  std::string kind = "shape";
  std::string shape = "concave-increasing";
  std::string bandwidth = "auto";
  std::string kernel = "gaussian";
  int cv_count = 16;
  int eval_points = 30;
  int B = 200;
  double alpha = 0.05;
  std::string wild = "rademacher";
  bool ordinary = false, monotone = false, recentre = false, use_delta = false;
  double delta_c = 1.0;
  std::uint64_t seed = 0;
  std::string out = "test_report.csv";
};

void run_test(const TestOptions& o) {
  std::string input_hash;
  const LoadedData data = load_frame(o.data, o.x_list, o.y_col, "", &input_hash);
  const int d = static_cast<int>(data.X.cols());

  const std::vector<int> counts(d, lattice_count_for(o.eval_points, d));
  const EvalGrid grid = uniform_grid(data.X, counts);
  std::string bw_label, bw_how;
  const KernelKind kernel = kernel_from_flag(o.kernel);
  const BandwidthSpec bw =
      bandwidth_from_flag(o.bandwidth, data.X, data.y, kernel, o.cv_count, &bw_label, &bw_how);

  BootstrapScheme scheme;
  scheme.B = o.B;
  if (o.wild == "rademacher") {
    scheme.kind = BootstrapScheme::Kind::Rademacher;
  } else if (o.wild == "mammen") {
    scheme.kind = BootstrapScheme::Kind::MammenTwoPoint;
  } else {
    throw DataError("unknown wild scheme \"" + o.wild + "\"");
  }

  std::string command = "test --data " + o.data + " --x " + join(data.x_names) + " --y " +
                        data.y_name + " --kind " + o.kind;
  if (o.kind == "shape") command += " --shape " + o.shape;
  command += " --eval-points " + std::to_string(o.eval_points) + " --bandwidth " + bw_label +
             " --kernel " + o.kernel + " --B " + std::to_string(o.B) + " --alpha " +
             format_double(o.alpha) + " --wild " + o.wild;
  if (o.ordinary) command += " --ordinary";
  if (o.monotone) command += " --monotone";
  if (o.recentre) command += " --recentre";
  if (o.use_delta) command += " --use-delta --delta-c " + format_double(o.delta_c);
  command += " --seed " + std::to_string(o.seed) + " --out " + o.out;

  TestResult res;
  if (o.kind == "shape") {
    res = wild_bootstrap_shape_test(data.X, data.y, grid, bw, kernel, shape_from_flag(o.shape, d),
                                    scheme, o.alpha, o.seed, o.use_delta, o.delta_c, o.recentre);
  } else if (o.kind == "affinity") {
    res = affinity_test(data.X, data.y, grid, bw, kernel, scheme, o.alpha, o.seed, o.monotone,
                        o.ordinary);
  } else {
    throw DataError("unknown test kind \"" + o.kind + "\" (expected shape or affinity)");
  }

  const std::vector<std::string> cols{"kind",   "statistic",  "p_value", "alpha",
                                      "reject", "replicates", "delta_n"};
  const std::vector<std::vector<std::string>> rows{
      {o.kind, format_double(res.statistic), format_double(res.p_value),
       format_double(res.alpha), res.reject ? "1" : "0",
       std::to_string(res.bootstrap_stats.size()), format_double(res.delta_n)}};
  write_text_file(o.out, metadata_line(input_hash, o.seed, command) + csv_text(cols, rows));

  std::printf("%s test: statistic=%s, p=%s, %s at alpha=%s (%zu/%d replicates)\n",
              o.kind.c_str(), num(res.statistic).c_str(), num(res.p_value).c_str(),
              res.reject ? "REJECT" : "no rejection", num(res.alpha).c_str(),
              res.bootstrap_stats.size(), o.B);
  std::printf("report: %s\n", o.out.c_str());
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateOptions {
  std::string experiment;
  std::string d_list = "2";
  std::string n_list;
  int reps = -1;
  std::uint64_t seed = 0;
  std::string estimators;
  int eval_target = 440;
  std::string eval_targets = "100,300,500";
  std::string scenario = "A";
  double sigma = -1.0;
  int B = -1;
  std::string alphas = "0.05,0.01";
  double power = 1.0;
  bool knn = false;
  int eval_points = 30;
  std::string h_list;
  std::string out = "simulation_report.csv";
};

std::vector<EstimatorKind> estimators_from_flag(const std::string& list) {
  std::vector<EstimatorKind> out;
  for (const std::string& tok : split_list(list)) {
    if (tok == "sckls") {
      out.push_back(EstimatorKind::Sckls);
    } else if (tok == "local-linear" || tok == "ll") {
      out.push_back(EstimatorKind::LocalLinear);
    } else if (tok == "cnls") {
      out.push_back(EstimatorKind::Cnls);
    } else if (tok == "cobb-douglas-ols" || tok == "cd-ols") {
      out.push_back(EstimatorKind::CobbDouglasOls);
    } else {
      throw DataError("unknown estimator \"" + tok + "\"");
    }
  }
  if (out.empty()) throw DataError("estimator list is empty");
  return out;
}

void append_rmse_rows(const ExperimentReport& report, const std::string& experiment,
                      std::vector<std::vector<std::string>>* rows) {
  for (const ScenarioResult& scen : report.scenarios) {
    for (const RmseCell& cell : scen.cells) {
      rows->push_back({experiment, std::to_string(scen.d), std::to_string(scen.n),
                       counts_label(scen.grid_counts), estimator_name(cell.estimator),
                       std::to_string(cell.rmse_obs.size()), format_double(cell.mean_obs),
                       format_double(cell.sd_obs), format_double(cell.mean_eval),
                       format_double(cell.sd_eval), std::to_string(cell.failures)});
    }
    std::fprintf(stderr, "scenario d=%d n=%d took %.1fs\n", scen.d, scen.n, scen.seconds);
  }
}

void run_simulate(const SimulateOptions& o) {
  std::string command;
  std::vector<std::string> cols;
  std::vector<std::vector<std::string>> rows;

  if (o.experiment == "exp1" || o.experiment == "exp4") {
    const bool exp1 = o.experiment == "exp1";
    const std::string n_default = exp1 ? "500" : "400";
    const std::string est_default = exp1 ? "sckls,local-linear,cnls,cobb-douglas-ols" : "sckls";
    const std::string n_list = o.n_list.empty() ? n_default : o.n_list;
    const std::string est_list = o.estimators.empty() ? est_default : o.estimators;
    const int reps = o.reps < 0 ? 10 : o.reps;

    RmseConfig config;
    config.dgp = DgpSpec::cobb_douglas(2, 100, 0);
    if (o.sigma > 0) config.dgp.sigma = o.sigma;
    config.n_list = count_list(n_list, "sample size");
    config.d_list = count_list(o.d_list, "dimension");
    config.estimators = estimators_from_flag(est_list);
    config.reps = reps;
    config.master_seed = o.seed;
    config.knn_bandwidth = o.knn;

    command = "simulate --experiment " + o.experiment + " --d " + o.d_list + " --n " + n_list +
              " --reps " + std::to_string(reps) + " --estimators " + est_list;
    if (o.sigma > 0) command += " --sigma " + format_double(o.sigma);
    if (o.knn) command += " --knn";

    cols = {"experiment", "d",        "n",       "grid",    "estimator", "reps",
            "mean_obs",   "sd_obs",   "mean_eval", "sd_eval", "failures"};
    if (exp1) {
      config.eval_target = o.eval_target;
      command += " --eval-target " + std::to_string(o.eval_target);
      append_rmse_rows(run_rmse_experiment(config), o.experiment, &rows);
    } else {
      for (int target : count_list(o.eval_targets, "evaluation-point target")) {
        config.eval_target = target;
        append_rmse_rows(run_rmse_experiment(config), o.experiment, &rows);
      }
      command += " --eval-targets " + o.eval_targets;
    }
    command += " --seed " + std::to_string(o.seed) + " --out " + o.out;
  } else if (o.experiment == "shape-test" || o.experiment == "affinity-test") {
    const bool shape = o.experiment == "shape-test";
    const int reps = o.reps < 0 ? (shape ? 50 : 100) : o.reps;
    const int B = o.B < 0 ? (shape ? 200 : 500) : o.B;
    const double sigma = o.sigma > 0 ? o.sigma : 0.1;
    const std::vector<int> d_list = count_list(o.d_list, "dimension");
    const std::vector<int> n_list =
        count_list(o.n_list.empty() ? (shape ? "300" : "100") : o.n_list, "sample size");
    const std::vector<double> alphas = real_list(o.alphas, "alpha");

    PowerScenario sc;
    sc.scheme.B = B;
    sc.eval_count = o.eval_points;
    std::string dgp_label;
    if (shape) {
      if (o.scenario == "A") {
        sc.dgp = DgpSpec::power_test(0.0, 100, 0, sigma);
        dgp_label = "power:0";
      } else if (o.scenario == "B") {
        sc.dgp = DgpSpec::power_test(2.0, 100, 0, sigma);
        dgp_label = "power:2";
      } else if (o.scenario == "C") {
        sc.dgp = DgpSpec::sigmoid_test(100, 0, sigma);
        dgp_label = "sigmoid";
      } else {
        throw DataError("unknown scenario \"" + o.scenario + "\" (expected A, B, or C)");
      }
    } else {
      sc.ordinary_bootstrap = true;
      dgp_label = "power:" + format_double(o.power);
    }

    command = "simulate --experiment " + o.experiment +
              (shape ? " --scenario " + o.scenario : " --power " + format_double(o.power)) +
              " --d " + o.d_list + " --n " + int_list_label(n_list) + " --sigma " +
              format_double(sigma) +
              " --B " + std::to_string(B) + " --reps " + std::to_string(reps) + " --alphas " +
              o.alphas + " --eval-points " + std::to_string(o.eval_points) + " --seed " +
              std::to_string(o.seed) + " --out " + o.out;

    cols = {"experiment", "scenario", "dgp",   "d",     "n",
            "sigma",      "B",        "reps",  "alpha", "rejection_rate",
            "failures"};
    for (int d : d_list) {
      for (int n : n_list) {
        if (shape) {
          sc.dgp.d = d;
          sc.dgp.n = n;
          sc.shape = ShapeSpec::concave_increasing(d);
        } else {
          sc.dgp = DgpSpec::affinity_power(o.power, d, n, 0, sigma);
          sc.ordinary_bootstrap = true;
        }
        const PowerResult res = run_power_study(shape ? TestKind::Shape : TestKind::Affinity, sc,
                                                reps, alphas, o.seed);
        for (std::size_t a = 0; a < alphas.size(); ++a) {
          rows.push_back({o.experiment, shape ? o.scenario : "-", dgp_label, std::to_string(d),
                          std::to_string(n), format_double(sigma), std::to_string(B),
                          std::to_string(res.p_values.size()), format_double(alphas[a]),
                          format_double(res.rejection_rates[a]),
                          std::to_string(res.failures)});
        }
      }
    }
  } else if (o.experiment == "sweep") {
    if (o.h_list.empty()) throw DataError("sweep needs --h-values with a bandwidth list");
    const std::vector<double> hs = real_list(o.h_list, "bandwidth");
    const std::vector<int> d_list = count_list(o.d_list, "dimension");
    const std::vector<int> n_list =
        count_list(o.n_list.empty() ? "100" : o.n_list, "sample size");
    if (d_list.size() != 1 || n_list.size() != 1)
      throw DataError("sweep runs one (d, n) at a time");
    const int reps = o.reps < 0 ? 10 : o.reps;
    DgpSpec dgp = DgpSpec::cobb_douglas(d_list[0], n_list[0], 0);
    if (o.sigma > 0) dgp.sigma = o.sigma;

    command = "simulate --experiment sweep --d " + o.d_list + " --n " +
              std::to_string(n_list[0]) + " --h-values " + o.h_list + " --reps " +
              std::to_string(reps) + " --eval-target " + std::to_string(o.eval_target) +
              " --seed " + std::to_string(o.seed) + " --out " + o.out;

    cols = {"experiment", "d", "n", "h", "sckls_rmse", "ll_rmse", "failures"};
    for (const SweepPoint& pt : bandwidth_sensitivity_sweep(dgp, hs, reps, o.seed, o.eval_target)) {
      rows.push_back({"sweep", std::to_string(d_list[0]), std::to_string(n_list[0]),
                      format_double(pt.h), format_double(pt.sckls_rmse),
                      format_double(pt.ll_rmse), std::to_string(pt.failures)});
    }
  } else {
    throw DataError("unknown experiment \"" + o.experiment +
                    "\" (expected exp1, exp4, shape-test, affinity-test, or sweep)");
  }

  write_text_file(o.out, metadata_line(content_hash(command), o.seed, command) +
                             csv_text(cols, rows));
  std::printf("report: %s (%zu rows)\n", o.out.c_str(), rows.size());
}

// ---------------------------------------------------------------------------
// bandwidth

struct BandwidthOptions {
  std::string data;
  std::string x_list, y_col = "y";
  std::string kernel = "gaussian";
  int cv_count = 16;
  std::string mode = "fixed";
  std::string out;
};

void run_bandwidth(const BandwidthOptions& o) {
  std::string input_hash;
  const LoadedData data = load_frame(o.data, o.x_list, o.y_col, "", &input_hash);
  const KernelKind kernel = kernel_from_flag(o.kernel);
  const int n = static_cast<int>(data.X.rows());
  const int d = static_cast<int>(data.X.cols());

  std::string command = "bandwidth --data " + o.data + " --x " + join(data.x_names) + " --y " +
                        data.y_name + " --kernel " + o.kernel + " --mode " + o.mode +
                        " --cv-grid " + std::to_string(o.cv_count);

  std::string value_label;
  double score = 0.0;
  int index = -1, total = 0;
  if (o.mode == "fixed") {
    const std::vector<Eigen::VectorXd> candidates = bandwidth_candidates(data.X, o.cv_count);
    const LoocvChoice choice = loocv_choice(data.X, data.y, candidates, kernel);
    const Eigen::VectorXd& h = candidates[choice.index];
    std::string vals;
    for (int k = 0; k < h.size(); ++k) {
      if (k) vals += ',';
      vals += format_double(h[k]);
    }
    value_label = "h=" + vals;
    score = choice.score;
    index = choice.index;
    total = static_cast<int>(candidates.size());
  } else if (o.mode == "knn") {
    const std::vector<int> ks = knn_candidates(n, d, o.cv_count);
    const LoocvChoice choice = loocv_choice_knn(data.X, data.y, ks, kernel);
    value_label = "k=" + std::to_string(ks[choice.index]);
    score = choice.score;
    index = choice.index;
    total = static_cast<int>(ks.size());
  } else {
    throw DataError("unknown bandwidth mode \"" + o.mode + "\" (expected fixed or knn)");
  }

  std::printf("%s (candidate %d of %d, loocv score %s)\n", value_label.c_str(), index + 1,
              total, format_double(score).c_str());
  if (!o.out.empty()) {
    const std::vector<std::string> cols{"mode", "choice", "candidate", "candidates", "score"};
    const std::vector<std::vector<std::string>> rows{{o.mode, value_label,
                                                      std::to_string(index + 1),
                                                      std::to_string(total),
                                                      format_double(score)}};
    write_text_file(o.out, metadata_line(input_hash, 0, command) + csv_text(cols, rows));
    std::printf("report: %s\n", o.out.c_str());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"shape-constrained kernel-weighted least squares"};
  app.require_subcommand(1);

  FitOptions fo;
  CLI::App* fit = app.add_subcommand("fit", "estimate a shape-constrained regression");
  fit->add_option("--data", fo.data, "input CSV")->required();
  fit->add_option("--x", fo.x_list, "input columns (default x1, x2, ...)");
  fit->add_option("--y", fo.y_col, "response column (default y)");
  fit->add_option("--contextual", fo.z_list, "contextual columns entering linearly");
  fit->add_option("--shape", fo.shape, "concave-increasing|convex-increasing|concave|convex|monotone|none");
  fit->add_option("--grid", fo.grid, "uniform:N|uniform:N1xN2|percentile:N|data");
  fit->add_option("--bandwidth", fo.bandwidth, "auto|fixed:H[,H2]|knn:auto|knn:K");
  fit->add_option("--kernel", fo.kernel, "gaussian|epanechnikov");
  fit->add_option("--cv-grid", fo.cv_count, "cross-validation candidate count");
  fit->add_flag("--hull-filter", fo.hull_filter, "drop grid points outside the data hull");
  fit->add_option("--seed", fo.seed, "seed recorded in artifacts");
  fit->add_option("--model-out", fo.model_out, "model JSON path");
  fit->add_option("--grid-out", fo.grid_out, "grid CSV path");
  fit->add_option("--emit-plot-data", fo.plot_out, "tidy CSV of observed and fitted values");
  fit->add_option("--mpss", fo.mpss_dir, "input-ray direction for most productive scale size");
  fit->add_option("--mpss-lo", fo.mpss_lo, "scale search lower bound");
  fit->add_option("--mpss-hi", fo.mpss_hi, "scale search upper bound");
  fit->callback([&] { run_fit(fo); });

  PredictOptions po;
  CLI::App* pred = app.add_subcommand("predict", "evaluate a saved model at new points");
  pred->add_option("--model", po.model, "model JSON from fit")->required();
  pred->add_option("--points", po.points, "CSV of points")->required();
  pred->add_option("--out", po.out, "predictions CSV path");
  pred->callback([&] { run_predict(po); });

  TestOptions to;
  CLI::App* test = app.add_subcommand("test", "shape or affinity hypothesis test");
  test->add_option("--data", to.data, "input CSV")->required();
  test->add_option("--x", to.x_list, "input columns (default x1, x2, ...)");
  test->add_option("--y", to.y_col, "response column (default y)");
  test->add_option("--kind", to.kind, "shape|affinity");
  test->add_option("--shape", to.shape, "null-hypothesis shape for the shape test");
  test->add_option("--eval-points", to.eval_points, "evaluation lattice target size");
  test->add_option("--bandwidth", to.bandwidth, "auto|fixed:H[,H2]|knn:auto|knn:K");
  test->add_option("--kernel", to.kernel, "gaussian|epanechnikov");
  test->add_option("--cv-grid", to.cv_count, "cross-validation candidate count");
  test->add_option("--B", to.B, "bootstrap replicates");
  test->add_option("--alpha", to.alpha, "rejection level");
  test->add_option("--wild", to.wild, "rademacher|mammen");
  test->add_flag("--ordinary", to.ordinary, "affinity: resample residuals with replacement");
  test->add_flag("--monotone", to.monotone, "affinity: restrict to increasing functions");
  test->add_flag("--recentre", to.recentre, "shape: recentre replicates on the constrained fit");
  test->add_flag("--use-delta", to.use_delta, "shape: add the vanishing comparison offset");
  test->add_option("--delta-c", to.delta_c, "offset scale when --use-delta");
  test->add_option("--seed", to.seed, "bootstrap seed");
  test->add_option("--out", to.out, "report CSV path");
  test->callback([&] { run_test(to); });

  SimulateOptions so;
  CLI::App* sim = app.add_subcommand("simulate", "Monte Carlo experiments");
  sim->add_option("--experiment", so.experiment, "exp1|exp4|shape-test|affinity-test|sweep")
      ->required();
  sim->add_option("--d", so.d_list, "input dimensions (comma list)");
  sim->add_option("--n", so.n_list, "sample sizes (comma list)");
  sim->add_option("--reps", so.reps, "Monte Carlo replications");
  sim->add_option("--seed", so.seed, "master seed");
  sim->add_option("--estimators", so.estimators, "sckls,local-linear,cnls,cobb-douglas-ols");
  sim->add_option("--eval-target", so.eval_target, "evaluation lattice target (exp1)");
  sim->add_option("--eval-targets", so.eval_targets, "lattice targets (exp4 comma list)");
  sim->add_option("--scenario", so.scenario, "shape-test scenario A|B|C");
  sim->add_option("--sigma", so.sigma, "noise standard deviation");
  sim->add_option("--B", so.B, "bootstrap replicates");
  sim->add_option("--alphas", so.alphas, "rejection levels (comma list)");
  sim->add_option("--power", so.power, "affinity-test exponent");
  sim->add_flag("--knn", so.knn, "k-NN bandwidths instead of fixed");
  sim->add_option("--eval-points", so.eval_points, "test evaluation lattice target");
  sim->add_option("--h-values", so.h_list, "sweep bandwidths (comma list)");
  sim->add_option("--out", so.out, "report CSV path");
  sim->set_config("--config", "", "read options from an INI file");
  sim->callback([&] { run_simulate(so); });

  BandwidthOptions bo;
  CLI::App* bwc = app.add_subcommand("bandwidth", "leave-one-out bandwidth selection");
  bwc->add_option("--data", bo.data, "input CSV")->required();
  bwc->add_option("--x", bo.x_list, "input columns (default x1, x2, ...)");
  bwc->add_option("--y", bo.y_col, "response column (default y)");
  bwc->add_option("--kernel", bo.kernel, "gaussian|epanechnikov");
  bwc->add_option("--cv-grid", bo.cv_count, "candidate count");
  bwc->add_option("--mode", bo.mode, "fixed|knn");
  bwc->add_option("--out", bo.out, "report CSV path");
  bwc->callback([&] { run_bandwidth(bo); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const SolverError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const IdentificationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
