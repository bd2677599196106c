#include "nfpose/bfgs.hpp"

#include <cmath>
#include <limits>

namespace nfpose {

const char* to_string(BfgsStatus s) {
  switch (s) {
    case BfgsStatus::GradientTolerance: return "gradient_tolerance";
    case BfgsStatus::RelativeTolerance: return "relative_tolerance";
    case BfgsStatus::MaxIterations: return "max_iterations";
    case BfgsStatus::LineSearchFailed: return "line_search_failed";
    case BfgsStatus::NonFiniteStart: return "non_finite_start";
  }
  return "unknown";
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Probe {
  double alpha = 0.0;
  double f = kInf;
  double slope = kInf;  // directional derivative
  VecX x, g;
};

class Evaluator {
 public:
  Evaluator(const Objective& f, int& count) : f_(f), count_(count) {}

  void operator()(const VecX& x, double& value, VecX& grad) const {
    ++count_;
    grad.resize(x.size());
    try {
      value = f_(x, grad);
    } catch (const Error&) {
      value = kInf;
    }
    if (!std::isfinite(value) || !grad.allFinite()) value = kInf;
  }

 private:
  const Objective& f_;
  int& count_;
};

Probe probe(const Evaluator& eval, const VecX& x, const VecX& d, double alpha) {
  Probe p;
  p.alpha = alpha;
  p.x = x + alpha * d;
  eval(p.x, p.f, p.g);
  p.slope = std::isfinite(p.f) ? p.g.dot(d) : kInf;
  return p;
}

// Cubic interpolation minimiser in [lo, hi] with bisection fallback.
double interpolate(const Probe& a, const Probe& b) {
  const double lo = std::min(a.alpha, b.alpha), hi = std::max(a.alpha, b.alpha);
  if (std::isfinite(a.f) && std::isfinite(b.f) && std::isfinite(a.slope) && std::isfinite(b.slope)) {
    const double d1 = a.slope + b.slope - 3.0 * (a.f - b.f) / (a.alpha - b.alpha);
    const double disc = d1 * d1 - a.slope * b.slope;
    if (disc >= 0.0) {
      const double d2 = std::copysign(std::sqrt(disc), b.alpha - a.alpha);
      const double t = b.alpha - (b.alpha - a.alpha) * (b.slope + d2 - d1) / (b.slope - a.slope + 2.0 * d2);
      const double margin = 0.1 * (hi - lo);
      if (std::isfinite(t) && t > lo + margin && t < hi - margin) return t;
    }
  }
  return 0.5 * (lo + hi);
}

// Nocedal & Wright algorithms 3.5/3.6.
bool strong_wolfe(const Evaluator& eval, const VecX& x, double f0, double slope0, const VecX& d,
                  const BfgsOptions& opt, double alpha1, Probe& out) {
  Probe prev;
  prev.alpha = 0.0;
  prev.f = f0;
  prev.slope = slope0;
  prev.x = x;
  auto zoom = [&](Probe lo, Probe hi) {
    for (int k = 0; k < opt.max_line_search; ++k) {
      const Probe p = probe(eval, x, d, interpolate(lo, hi));
      if (!(p.f <= f0 + opt.c1 * p.alpha * slope0) || p.f >= lo.f) {
        hi = p;
      } else {
        if (std::abs(p.slope) <= -opt.c2 * slope0) {
          out = p;
          return true;
        }
        if (p.slope * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
        lo = p;
      }
      if (std::abs(hi.alpha - lo.alpha) < 1e-16 * std::max(1.0, lo.alpha)) break;
    }
    // Fall back to the best sufficient-decrease point found.
    if (lo.alpha > 0.0 && lo.f < f0) {
      out = lo;
      return true;
    }
    return false;
  };

  double alpha = alpha1;
  for (int i = 0; i < opt.max_line_search; ++i) {
    Probe p = probe(eval, x, d, alpha);
    if (!std::isfinite(p.f)) {
      // Step left the domain: treat as an overshoot.
      return zoom(prev, p);
    }
    if (p.f > f0 + opt.c1 * alpha * slope0 || (i > 0 && p.f >= prev.f)) return zoom(prev, p);
    if (std::abs(p.slope) <= -opt.c2 * slope0) {
      out = std::move(p);
      return true;
    }
    if (p.slope >= 0.0) return zoom(p, prev);
    prev = std::move(p);
    alpha *= 2.0;
  }
  if (prev.alpha > 0.0 && prev.f < f0) {
    out = prev;
    return true;
  }
  return false;
}

}  // namespace

BfgsResult bfgs_minimize(const Objective& f, VecX x0, const BfgsOptions& opt) {
  BfgsResult r;
  const Evaluator eval(f, r.evaluations);
  const Eigen::Index n = x0.size();
  r.x = std::move(x0);
  eval(r.x, r.value, r.gradient);
  r.trace.push_back(r.value);
  if (!std::isfinite(r.value)) {
    r.status = BfgsStatus::NonFiniteStart;
    return r;
  }
  MatX h = MatX::Identity(n, n);
  bool scaled = false;
  for (r.iterations = 0; r.iterations < opt.max_iterations;) {
    if (r.gradient.lpNorm<Eigen::Infinity>() < opt.gradient_tolerance) {
      r.status = BfgsStatus::GradientTolerance;
      return r;
    }
    VecX d = -h * r.gradient;
    double slope = d.dot(r.gradient);
    if (!(slope < 0.0)) {
      h.setIdentity();
      scaled = false;
      d = -r.gradient;
      slope = -r.gradient.squaredNorm();
    }
    const double alpha1 = scaled ? 1.0 : std::min(1.0, 1.0 / std::max(1e-300, r.gradient.lpNorm<Eigen::Infinity>()));
    Probe p;
    if (!strong_wolfe(eval, r.x, r.value, slope, d, opt, alpha1, p)) {
      if (scaled) {
        // Retry once along steepest descent with a fresh Hessian.
        h.setIdentity();
        scaled = false;
        continue;
      }
      r.status = BfgsStatus::LineSearchFailed;
      return r;
    }
    ++r.iterations;
    const VecX s = p.x - r.x;
    const VecX y = p.g - r.gradient;
    const double f_prev = r.value;
    r.x = std::move(p.x);
    r.value = p.f;
    r.gradient = std::move(p.g);
    r.trace.push_back(r.value);

    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled) {
        h *= sy / y.squaredNorm();
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const VecX hy = h * y;
      const double yhy = y.dot(hy);
      h += ((1.0 + rho * yhy) * rho) * (s * s.transpose()) - rho * (hy * s.transpose() + s * hy.transpose());
    }
    if (std::abs(f_prev - r.value) <= opt.relative_tolerance * std::max(1.0, std::abs(f_prev))) {
      r.status = BfgsStatus::RelativeTolerance;
      return r;
    }
  }
  r.status = r.gradient.lpNorm<Eigen::Infinity>() < opt.gradient_tolerance ? BfgsStatus::GradientTolerance
                                                                          : BfgsStatus::MaxIterations;
  return r;
}

}  // namespace nfpose
