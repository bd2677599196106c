#include "nfpose/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace nfpose {

GradientReport check_gradient(const ValueAndGradient& fn, const VecX& x, double step, double tolerance) {
  const Eigen::Index n = x.size();
  VecX g;
  const double f0 = fn(x, &g);
  if (!std::isfinite(f0) || !g.allFinite()) throw Error(ErrorCode::NonFiniteValue, "objective at the probe point");
  if (g.size() != n) throw Error(ErrorCode::DimensionMismatch, "gradient length");

  GradientReport r;
  r.analytic.assign(g.data(), g.data() + n);
  r.numeric.resize(n);
  r.relative_error.assign(n, 0.0);
  VecX xp = x;
  for (Eigen::Index i = 0; i < n; ++i) {
    xp[i] = x[i] + step;
    const double fp = fn(xp, nullptr);
    xp[i] = x[i] - step;
    const double fm = fn(xp, nullptr);
    xp[i] = x[i];
    if (!std::isfinite(fp) || !std::isfinite(fm)) throw Error(ErrorCode::NonFiniteValue, "objective near the probe");
    r.numeric[i] = (fp - fm) / (2.0 * step);
    const double right = (fp - f0) / step, left = (f0 - fm) / step;
    const double gap = std::abs(right - left);
    if (gap > 1e-6 && gap > 0.1 * std::max(std::abs(right), std::abs(left))) r.kinks.push_back(static_cast<int>(i));
  }
  double scale = 0.0;
  for (double v : r.numeric) scale = std::max(scale, std::abs(v));
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double a = r.analytic[i], d = r.numeric[i];
    const double denom = std::max({std::abs(a), std::abs(d), 1e-3 * scale, 1e-10});
    r.relative_error[i] = std::abs(a - d) / denom;
    const bool kink = k < r.kinks.size() && r.kinks[k] == i;
    if (kink) {
      ++k;
      continue;
    }
    r.max_relative_error = std::max(r.max_relative_error, r.relative_error[i]);
  }
  r.passed = r.max_relative_error <= tolerance;
  return r;
}

}  // namespace nfpose
