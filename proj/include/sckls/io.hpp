#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "sckls/estimators.hpp"

namespace sckls {

/// Whole-file binary read; DataError when the file cannot be opened.
std::string read_file_bytes(const std::string& path);

/// Rectangular numeric CSV: one header row of column names, then rows of
/// '.'-decimal reals parsed with std::from_chars (locale-dependent decimals
/// such as "1,5" never parse). Lines whose first non-blank character is '#'
/// are comments (reports emit their metadata that way). Errors name the
/// offending row and column.
struct DataTable {
  std::vector<std::string> columns;
  Eigen::MatrixXd values;  // rows x columns

  int find(const std::string& name) const;  // -1 when absent
};

DataTable read_csv(const std::string& path);
DataTable parse_csv(const std::string& text, const std::string& origin = "<memory>");

/// 17-significant-digit formatting: reparsing reproduces the double exactly.
std::string format_double(double v);

void write_csv(const std::string& path, const std::vector<std::string>& columns,
               const Eigen::MatrixXd& values);

/// FNV-1a 64-bit content hash, rendered as "fnv1a64:<16 hex digits>".
std::string content_hash(const std::string& bytes);
std::string file_hash(const std::string& path);

/// Regression frame selected from a DataTable: inputs x1..xd, response y,
/// optional contextual columns. Rejects missing columns, fewer than d + 2
/// rows, and constant input columns.
struct LoadedData {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  Eigen::MatrixXd Z;  // n x 0 when no contextual columns are requested
  std::vector<std::string> x_names;
  std::string y_name;
  std::vector<std::string> z_names;
};

/// x_cols empty: every column named x1, x2, ... in index order. y_col empty:
/// the column named "y".
LoadedData select_columns(const DataTable& table, std::vector<std::string> x_cols = {},
                          std::string y_col = "", std::vector<std::string> z_cols = {});

struct ModelProvenance {
  std::string tool_version;
  std::string input_hash;
  std::uint64_t seed = 0;
  std::string command;  // effective configuration echo
};

/// Versioned JSON model file. Doubles are written with round-trip precision,
/// so a reloaded model predicts bit-identically.
void save_model(const std::string& path, const HyperplaneModel& model,
                const ModelProvenance& provenance);

struct LoadedModel {
  HyperplaneModel model;
  ModelProvenance provenance;
};

LoadedModel load_model(const std::string& path);

std::string model_to_json(const HyperplaneModel& model, const ModelProvenance& provenance);
LoadedModel model_from_json(const std::string& text);

}  // namespace sckls
