#pragma once

#include <stdexcept>
#include <string>

namespace sckls {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed or unusable input data (CSV parse failures, constant columns,
/// dimension mismatches, non-finite values).
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(what) {}
};

/// Optimization failures: infeasible problems, iteration limits with
/// unacceptable residuals, singular local designs.
class SolverError : public Error {
 public:
  explicit SolverError(const std::string& what) : Error(what) {}
};

/// Model not identified from the data (rank-deficient contextual design,
/// degenerate convex hull).
class IdentificationError : public Error {
 public:
  explicit IdentificationError(const std::string& what) : Error(what) {}
};

}  // namespace sckls
