// SPDX-License-Identifier: MIT
#pragma once

#include <stdexcept>
#include <string>

namespace lip2d {

/// Error in user-supplied data: malformed files, dimension mismatches,
/// inconsistent geometry. CLI maps these to exit code 2.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Geometry-specific data error (e.g. kernel support exceeding the image).
struct GeometryError : DataError {
  explicit GeometryError(const std::string& msg) : DataError(msg) {}
};

/// Error in the numerical back end: infeasible problems, iteration caps,
/// failed validations. CLI maps these to exit code 3.
struct SolverError : std::runtime_error {
  explicit SolverError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace lip2d
