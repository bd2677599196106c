#pragma once

#include "nfpose/types.hpp"

#include <functional>
#include <vector>

namespace nfpose {

struct BfgsOptions {
  int max_iterations = 500;
  double gradient_tolerance = 1e-6;   // on |g|_inf
  double relative_tolerance = 1e-10;  // on |f_k - f_{k+1}| / max(1, |f_k|)
  double c1 = 1e-4;
  double c2 = 0.9;
  int max_line_search = 40;
};

enum class BfgsStatus { GradientTolerance, RelativeTolerance, MaxIterations, LineSearchFailed, NonFiniteStart };

struct BfgsResult {
  VecX x;
  double value = 0.0;
  VecX gradient;
  int iterations = 0;
  int evaluations = 0;
  BfgsStatus status = BfgsStatus::MaxIterations;
  std::vector<double> trace;  // objective after every accepted step, starting with f(x0)
};

// Returns f(x) and writes the gradient; a throw or a non-finite value is
// treated as +inf.
using Objective = std::function<double(const VecX& x, VecX& grad)>;

// Dense inverse-Hessian BFGS with a strong-Wolfe line search. Accepted
// steps never increase the objective.
BfgsResult bfgs_minimize(const Objective& f, VecX x0, const BfgsOptions& opt = {});

const char* to_string(BfgsStatus s);

}  // namespace nfpose
