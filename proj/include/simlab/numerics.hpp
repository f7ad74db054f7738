#pragma once

#include <limits>
#include <vector>

#include "simlab/common.hpp"

namespace simlab {

/// Numerical rank evidence from a singular spectrum.
struct SpectralRank {
  int rank = 0;
  std::vector<double> singular_values;  // descending
  double gap_ratio = std::numeric_limits<double>::infinity();
};

/// Rank of `a` relative to rel_tol * sigma_max. gap_ratio is
/// sigma_rank / sigma_{rank+1}; +inf when the tail is absent or exactly zero.
/// A zero matrix reports rank 0 with infinite gap.
SpectralRank svd_rank(const Mat& a, double rel_tol);

/// Central-difference step along a direction of scale v_scale at a state of
/// scale x_scale: cbrt(eps) * max(1, x_scale) / max(1, v_scale).
double fd_step(double x_scale, double v_scale);

}  // namespace simlab
