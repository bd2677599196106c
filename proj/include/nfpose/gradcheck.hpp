#pragma once

#include "nfpose/types.hpp"

#include <functional>
#include <vector>

namespace nfpose {

struct GradientReport {
  std::vector<double> analytic;
  std::vector<double> numeric;
  std::vector<double> relative_error;
  // Coordinates where the one-sided differences disagree: the function has a
  // kink there and the comparison is not meaningful.
  std::vector<int> kinks;
  double max_relative_error = 0.0;  // over non-kink coordinates
  bool passed = false;
};

// value(x) and gradient(x) from one callable.
using ValueAndGradient = std::function<double(const VecX& x, VecX* grad)>;

// Central differences with the given step. The relative error of coordinate i
// is |a - n| / max(|a|, |n|, 1e-3 max_j |n_j|, 1e-10). Throws NonFiniteValue.
GradientReport check_gradient(const ValueAndGradient& fn, const VecX& x, double step = 1e-6,
                              double tolerance = 1e-4);

}  // namespace nfpose
