#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace simlab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Mismatched dimensions between parameters, inputs, or group elements.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// NaN or Inf produced where a finite value is required.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A tolerance-based classification could not be resolved safely.
struct AmbiguityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A configured work budget (field count, enumeration size) was exceeded.
struct BudgetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid or ill-formed configuration input.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline double inf_norm(const Vec& v) {
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace simlab
