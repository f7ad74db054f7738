#include "simlab/numerics.hpp"

#include <Eigen/SVD>

#include <cmath>

namespace simlab {

SpectralRank svd_rank(const Mat& a, double rel_tol) {
  SpectralRank out;
  if (a.rows() == 0 || a.cols() == 0) return out;

  Eigen::BDCSVD<Mat> svd(a);
  const Vec& s = svd.singularValues();
  out.singular_values.assign(s.data(), s.data() + s.size());

  const double smax = s(0);
  if (smax <= 0.0) {
    out.rank = 0;
    return out;  // exactly zero matrix, gap stays +inf
  }
  const double cut = rel_tol * smax;
  int r = 0;
  while (r < s.size() && s(r) > cut) ++r;
  out.rank = r;
  if (r == 0) return out;
  if (r < s.size() && s(r) > 0.0) {
    out.gap_ratio = s(r - 1) / s(r);
  }
  return out;
}

double fd_step(double x_scale, double v_scale) {
  const double croot = std::cbrt(std::numeric_limits<double>::epsilon());
  return croot * std::max(1.0, x_scale) / std::max(1.0, v_scale);
}

}  // namespace simlab
