#include "sckls/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "sckls/errors.hpp"

namespace sckls {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_cells(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      cells.push_back(trim(line.substr(start)));
      break;
    }
    cells.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return cells;
}

/// std::from_chars over the whole token; '.' is the only decimal separator it
/// accepts, so locale-style "1,5" cells can never parse as one number.
double parse_cell(const std::string& cell, const std::string& origin, int row, int col) {
  const std::string where =
      origin + ": row " + std::to_string(row) + ", column " + std::to_string(col + 1);
  if (cell.empty()) throw DataError(where + ": missing value");
  const char* begin = cell.data();
  const char* end = cell.data() + cell.size();
  // from_chars rejects an explicit plus sign; accept one, but only one sign total.
  if (*begin == '+' && begin + 1 != end && *(begin + 1) != '-' && *(begin + 1) != '+') ++begin;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end)
    throw DataError(where + ": cannot parse \"" + cell + "\" as a number");
  if (!std::isfinite(v)) throw DataError(where + ": non-finite value \"" + cell + "\"");
  return v;
}

std::string curvature_name(Curvature c) {
  switch (c) {
    case Curvature::Concave: return "concave";
    case Curvature::Convex: return "convex";
    default: return "none";
  }
}

Curvature curvature_from(const std::string& s) {
  if (s == "concave") return Curvature::Concave;
  if (s == "convex") return Curvature::Convex;
  if (s == "none") return Curvature::None;
  throw DataError("unknown curvature \"" + s + "\"");
}

std::string monotone_name(Monotone m) {
  switch (m) {
    case Monotone::Increasing: return "increasing";
    case Monotone::Decreasing: return "decreasing";
    default: return "free";
  }
}

Monotone monotone_from(const std::string& s) {
  if (s == "increasing") return Monotone::Increasing;
  if (s == "decreasing") return Monotone::Decreasing;
  if (s == "free") return Monotone::Free;
  throw DataError("unknown monotonicity \"" + s + "\"");
}

std::string kernel_name(KernelKind k) {
  return k == KernelKind::Gaussian ? "gaussian" : "epanechnikov";
}

KernelKind kernel_from(const std::string& s) {
  if (s == "gaussian") return KernelKind::Gaussian;
  if (s == "epanechnikov") return KernelKind::Epanechnikov;
  throw DataError("unknown kernel \"" + s + "\"");
}

std::string provenance_name(GridProvenance p) {
  switch (p) {
    case GridProvenance::Uniform: return "uniform";
    case GridProvenance::Percentile: return "percentile";
    default: return "external";
  }
}

GridProvenance provenance_from(const std::string& s) {
  if (s == "uniform") return GridProvenance::Uniform;
  if (s == "percentile") return GridProvenance::Percentile;
  if (s == "external") return GridProvenance::External;
  throw DataError("unknown grid provenance \"" + s + "\"");
}

std::string status_name(QpStatus s) {
  switch (s) {
    case QpStatus::Optimal: return "optimal";
    case QpStatus::MaxIter: return "max_iter";
    default: return "infeasible";
  }
}

QpStatus status_from(const std::string& s) {
  if (s == "optimal") return QpStatus::Optimal;
  if (s == "max_iter") return QpStatus::MaxIter;
  if (s == "infeasible") return QpStatus::Infeasible;
  throw DataError("unknown solver status \"" + s + "\"");
}

ordered_json matrix_json(const Eigen::MatrixXd& m) {
  ordered_json rows = ordered_json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from(const ordered_json& rows, const std::string& field) {
  if (!rows.is_array()) throw DataError("model field " + field + " must be an array");
  const int r = static_cast<int>(rows.size());
  if (r == 0) return Eigen::MatrixXd(0, 0);
  const int c = static_cast<int>(rows[0].size());
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < r; ++i) {
    if (static_cast<int>(rows[i].size()) != c)
      throw DataError("model field " + field + " has ragged rows");
    for (int j = 0; j < c; ++j) m(i, j) = rows[i][j].get<double>();
  }
  return m;
}

Eigen::VectorXd vector_from(const ordered_json& arr, const std::string& field) {
  if (!arr.is_array()) throw DataError("model field " + field + " must be an array");
  Eigen::VectorXd v(static_cast<int>(arr.size()));
  for (int i = 0; i < v.size(); ++i) v[i] = arr[i].get<double>();
  return v;
}

const ordered_json& require(const ordered_json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw DataError(std::string("model file is missing field \"") + key + "\"");
  return *it;
}

}  // namespace

std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

int DataTable::find(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == name) return static_cast<int>(i);
  return -1;
}

DataTable parse_csv(const std::string& text, const std::string& origin) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    std::string line =
        nl == std::string::npos ? text.substr(start) : text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::size_t first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] != '#') lines.push_back(std::move(line));
    if (nl == std::string::npos) break;
    start = nl + 1;
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) throw DataError(origin + ": empty file");

  DataTable table;
  table.columns = split_cells(lines[0]);
  const int ncol = static_cast<int>(table.columns.size());
  std::unordered_set<std::string> seen;
  for (int j = 0; j < ncol; ++j) {
    if (table.columns[j].empty())
      throw DataError(origin + ": header column " + std::to_string(j + 1) + " is empty");
    if (!seen.insert(table.columns[j]).second)
      throw DataError(origin + ": duplicate column \"" + table.columns[j] + "\"");
  }

  const int nrow = static_cast<int>(lines.size()) - 1;
  table.values.resize(nrow, ncol);
  for (int i = 0; i < nrow; ++i) {
    const std::vector<std::string> cells = split_cells(lines[i + 1]);
    if (static_cast<int>(cells.size()) != ncol)
      throw DataError(origin + ": row " + std::to_string(i + 2) + " has " +
                      std::to_string(cells.size()) + " cells, expected " + std::to_string(ncol));
    for (int j = 0; j < ncol; ++j) table.values(i, j) = parse_cell(cells[j], origin, i + 2, j);
  }
  return table;
}

DataTable read_csv(const std::string& path) { return parse_csv(read_file_bytes(path), path); }

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;  // shortest round-trip form always fits
  return std::string(buf, ptr);
}

void write_csv(const std::string& path, const std::vector<std::string>& columns,
               const Eigen::MatrixXd& values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (j > 0) out << ',';
    out << columns[j];
  }
  out << '\n';
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      if (j > 0) out << ',';
      out << format_double(values(i, j));
    }
    out << '\n';
  }
  if (!out) throw DataError("cannot write " + path);
}

std::string content_hash(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "fnv1a64:%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_hash(const std::string& path) { return content_hash(read_file_bytes(path)); }

LoadedData select_columns(const DataTable& table, std::vector<std::string> x_cols,
                          std::string y_col, std::vector<std::string> z_cols) {
  if (x_cols.empty()) {
    for (int k = 1; table.find("x" + std::to_string(k)) >= 0; ++k)
      x_cols.push_back("x" + std::to_string(k));
    if (x_cols.empty()) throw DataError("no input columns: expected x1, x2, ... or --x names");
  }
  if (y_col.empty()) y_col = "y";

  std::unordered_set<std::string> used;
  auto column = [&](const std::string& name) {
    const int idx = table.find(name);
    if (idx < 0) throw DataError("column \"" + name + "\" not found in data");
    if (!used.insert(name).second) throw DataError("column \"" + name + "\" selected twice");
    return idx;
  };

  LoadedData data;
  data.x_names = x_cols;
  data.y_name = y_col;
  data.z_names = z_cols;
  const int n = static_cast<int>(table.values.rows());
  const int d = static_cast<int>(x_cols.size());
  data.X.resize(n, d);
  for (int k = 0; k < d; ++k) data.X.col(k) = table.values.col(column(x_cols[k]));
  data.y = table.values.col(column(y_col));
  data.Z.resize(n, static_cast<int>(z_cols.size()));
  for (std::size_t k = 0; k < z_cols.size(); ++k)
    data.Z.col(static_cast<int>(k)) = table.values.col(column(z_cols[k]));

  if (n < d + 2)
    throw DataError("need at least " + std::to_string(d + 2) + " rows for " + std::to_string(d) +
                    " input(s), got " + std::to_string(n));
  for (int k = 0; k < d; ++k)
    if (data.X.col(k).maxCoeff() == data.X.col(k).minCoeff())
      throw DataError("input column \"" + x_cols[k] + "\" is constant");
  return data;
}

std::string model_to_json(const HyperplaneModel& model, const ModelProvenance& provenance) {
  ordered_json j;
  j["format"] = "sckls-model";
  j["version"] = 1;
  j["provenance"] = {{"tool_version", provenance.tool_version},
                     {"input_hash", provenance.input_hash},
                     {"seed", provenance.seed},
                     {"command", provenance.command}};
  ordered_json shape;
  shape["curvature"] = curvature_name(model.shape.curvature);
  ordered_json mono = ordered_json::array();
  for (Monotone m : model.shape.monotonicity) mono.push_back(monotone_name(m));
  shape["monotonicity"] = std::move(mono);
  j["shape"] = std::move(shape);
  j["kernel"] = kernel_name(model.kernel);
  ordered_json bw;
  if (model.bandwidth.mode == BandwidthSpec::Mode::Fixed) {
    bw["mode"] = "fixed";
    ordered_json h = ordered_json::array();
    for (int k = 0; k < model.bandwidth.h.size(); ++k) h.push_back(model.bandwidth.h[k]);
    bw["h"] = std::move(h);
  } else {
    bw["mode"] = "knn";
    bw["k"] = model.bandwidth.k;
  }
  j["bandwidth"] = std::move(bw);
  ordered_json grid;
  grid["provenance"] = provenance_name(model.grid.provenance);
  grid["lattice_shape"] = model.grid.lattice_shape;
  grid["cell_index"] = model.grid.cell_index;
  grid["points"] = matrix_json(model.grid.points);
  j["grid"] = std::move(grid);
  ordered_json a = ordered_json::array();
  for (int i = 0; i < model.a.size(); ++i) a.push_back(model.a[i]);
  j["a"] = std::move(a);
  j["b"] = matrix_json(model.b);
  j["sse"] = model.sse;
  const SolverDiagnostics& dg = model.diagnostics;
  j["diagnostics"] = {{"status", status_name(dg.status)},
                      {"iterations", dg.iterations},
                      {"rounds", dg.rounds},
                      {"constraint_rows", dg.constraint_rows},
                      {"polished", dg.polished},
                      {"qp_objective", dg.qp_objective},
                      {"kkt",
                       {{"stationarity", dg.kkt.stationarity},
                        {"primal", dg.kkt.primal},
                        {"complementarity", dg.kkt.complementarity}}}};
  return j.dump(2) + "\n";
}

void save_model(const std::string& path, const HyperplaneModel& model,
                const ModelProvenance& provenance) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << model_to_json(model, provenance);
  if (!out) throw DataError("cannot write " + path);
}

LoadedModel model_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw DataError(std::string("model file is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || require(j, "format").get<std::string>() != "sckls-model")
    throw DataError("not a model file (format field missing or wrong)");
  const int version = require(j, "version").get<int>();
  if (version != 1)
    throw DataError("unsupported model file version " + std::to_string(version));

  LoadedModel out;
  const ordered_json& prov = require(j, "provenance");
  out.provenance.tool_version = require(prov, "tool_version").get<std::string>();
  out.provenance.input_hash = require(prov, "input_hash").get<std::string>();
  out.provenance.seed = require(prov, "seed").get<std::uint64_t>();
  out.provenance.command = require(prov, "command").get<std::string>();

  HyperplaneModel& m = out.model;
  const ordered_json& shape = require(j, "shape");
  m.shape.curvature = curvature_from(require(shape, "curvature").get<std::string>());
  for (const auto& s : require(shape, "monotonicity"))
    m.shape.monotonicity.push_back(monotone_from(s.get<std::string>()));
  m.kernel = kernel_from(require(j, "kernel").get<std::string>());
  const ordered_json& bw = require(j, "bandwidth");
  if (require(bw, "mode").get<std::string>() == "fixed") {
    m.bandwidth = BandwidthSpec::fixed(vector_from(require(bw, "h"), "bandwidth.h"));
  } else {
    m.bandwidth = BandwidthSpec::knn(require(bw, "k").get<int>());
  }
  const ordered_json& grid = require(j, "grid");
  m.grid.provenance = provenance_from(require(grid, "provenance").get<std::string>());
  m.grid.lattice_shape = require(grid, "lattice_shape").get<std::vector<int>>();
  m.grid.cell_index = require(grid, "cell_index").get<std::vector<std::int64_t>>();
  m.grid.points = matrix_from(require(grid, "points"), "grid.points");
  m.a = vector_from(require(j, "a"), "a");
  m.b = matrix_from(require(j, "b"), "b");
  m.sse = require(j, "sse").get<double>();
  const ordered_json& dg = require(j, "diagnostics");
  m.diagnostics.status = status_from(require(dg, "status").get<std::string>());
  m.diagnostics.iterations = require(dg, "iterations").get<int>();
  m.diagnostics.rounds = require(dg, "rounds").get<int>();
  m.diagnostics.constraint_rows = require(dg, "constraint_rows").get<std::int64_t>();
  m.diagnostics.polished = require(dg, "polished").get<bool>();
  m.diagnostics.qp_objective = require(dg, "qp_objective").get<double>();
  const ordered_json& kkt = require(dg, "kkt");
  m.diagnostics.kkt.stationarity = require(kkt, "stationarity").get<double>();
  m.diagnostics.kkt.primal = require(kkt, "primal").get<double>();
  m.diagnostics.kkt.complementarity = require(kkt, "complementarity").get<double>();

  if (m.b.rows() != m.a.size() || m.grid.points.rows() != m.a.size())
    throw DataError("model file is inconsistent: a, b, and grid sizes disagree");
  if (static_cast<int>(m.shape.monotonicity.size()) != m.b.cols())
    throw DataError("model file is inconsistent: monotonicity length != input dimension");
  return out;
}

LoadedModel load_model(const std::string& path) {
  try {
    return model_from_json(read_file_bytes(path));
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

}  // namespace sckls
