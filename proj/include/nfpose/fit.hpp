#pragma once

#include "nfpose/bfgs.hpp"
#include "nfpose/objective.hpp"

#include <vector>

namespace nfpose {

struct FitOptions {
  BfgsOptions bfgs;
  // Root yaw of each start, radians.
  std::vector<double> start_yaws{0.0, 0.5 * 3.14159265358979323846, 3.14159265358979323846,
                                 1.5 * 3.14159265358979323846};
};

struct StartTrace {
  double yaw = 0.0;
  bool diverged = false;
  double final_value = 0.0;
  BfgsStatus status = BfgsStatus::MaxIterations;
  int iterations = 0;
  std::vector<double> values;
};

struct FitResult {
  VecX x;  // selected parameter vector
  std::vector<FrameState> frames;
  VecX beta;
  std::vector<VecX> codes;  // per frame pose or latent segment
  LossBreakdown breakdown;
  std::vector<StartTrace> starts;
  int selected_start = -1;
};

// Multi-start BFGS from the configured yaws with zero pose / shape. The
// starts run concurrently; the lowest final objective wins (lowest index on
// ties). Diverged starts are discarded. Throws AllStartsDiverged.
FitResult fit_static(const FitProblem& problem, const FitOptions& options = {});

// Joint fit of every frame with shared shape and the temporal term, started
// from independent static fits of each frame and their mean shape. Pass
// `static_fits` to reuse per-frame fits already computed for this problem.
FitResult fit_sequence(const FitProblem& problem, const FitOptions& options = {},
                       const std::vector<FitResult>* static_fits = nullptr);

// Fits every frame independently with fit_static.
std::vector<FitResult> fit_frames_independently(const FitProblem& problem, const FitOptions& options = {});

struct Metrics {
  double mpjpe = 0.0;
  double mpvpe = 0.0;
  double mpjpe_pa = 0.0;
};

// Mean Euclidean distances, meters. Throws DimensionMismatch.
Metrics evaluate(const PosedBody& predicted, const PosedBody& truth);

// Similarity transform (s, R, t) minimising |s R a_i + t - b_i|^2; returns the
// aligned copy of `a`.
Points3 procrustes_align(const Points3& a, const Points3& b);

// Mean over frames of |code_t - code_{t-1}|.
double mean_code_velocity(const std::vector<VecX>& codes);

}  // namespace nfpose
