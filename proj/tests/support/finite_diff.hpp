#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "dustk/kernels.hpp"

namespace dustk::testing {

// Central difference of f at x in every coordinate.
inline Mat central_diff(const std::function<double(const Mat&)>& f, Mat x, double h = 1e-4) {
  Mat g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x.data()[i];
    x.data()[i] = keep + h;
    const double up = f(x);
    x.data()[i] = keep - h;
    const double down = f(x);
    x.data()[i] = keep;
    g.data()[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// max |a - b| / max(1e-3, max |b|): relative to the oracle's scale, so tiny
// entries do not blow up the ratio.
inline double rel_error(const Mat& analytic, const Mat& numeric) {
  const double scale = std::max(1e-3, numeric.cwiseAbs().maxCoeff());
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

}  // namespace dustk::testing
