#include "nfpose/fit.hpp"

#include <cmath>
#include <limits>

namespace nfpose {

namespace {

Objective make_objective(const FitProblem& problem) {
  return [&problem](const VecX& x, VecX& grad) {
    ObjectiveResult r = objective_with_gradient(problem, x, true);
    grad = std::move(r.gradient);
    return r.value;
  };
}

void fill_result(const FitProblem& problem, FitResult& out) {
  const ObjectiveResult r = objective_with_gradient(problem, out.x, false);
  const ParamBlock layout(problem);
  out.frames = r.frames;
  out.breakdown = r.breakdown;
  out.beta = layout.shape(out.x);
  out.codes.clear();
  for (int t = 0; t < layout.frames(); ++t) out.codes.push_back(layout.pose(out.x, t));
}

FitResult run_starts(const FitProblem& problem, const FitOptions& options, const std::vector<VecX>& starts,
                     const std::vector<double>& yaws) {
  const int n = static_cast<int>(starts.size());
  std::vector<BfgsResult> runs(n);
  const Objective f = make_objective(problem);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) runs[i] = bfgs_minimize(f, starts[i], options.bfgs);

  FitResult out;
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    StartTrace t;
    t.yaw = yaws[i];
    t.final_value = runs[i].value;
    t.status = runs[i].status;
    t.iterations = runs[i].iterations;
    t.values = runs[i].trace;
    t.diverged = !std::isfinite(runs[i].value) || runs[i].status == BfgsStatus::NonFiniteStart;
    if (!t.diverged && runs[i].value < best) {
      best = runs[i].value;
      out.selected_start = i;
    }
    out.starts.push_back(std::move(t));
  }
  if (out.selected_start < 0) throw Error(ErrorCode::AllStartsDiverged, "every start diverged");
  out.x = runs[out.selected_start].x;
  fill_result(problem, out);
  return out;
}

FitProblem single_frame(const FitProblem& problem, int t) {
  FitProblem p = problem;
  p.frames = {problem.frames[t]};
  return p;
}

}  // namespace

FitResult fit_static(const FitProblem& problem, const FitOptions& options) {
  problem.validate();
  if (options.start_yaws.empty()) throw Error(ErrorCode::InvalidConfig, "no start rotations");
  std::vector<VecX> starts;
  for (double yaw : options.start_yaws) starts.push_back(initial_parameters(problem, yaw));
  return run_starts(problem, options, starts, options.start_yaws);
}

std::vector<FitResult> fit_frames_independently(const FitProblem& problem, const FitOptions& options) {
  problem.validate();
  std::vector<FitResult> out;
  for (int t = 0; t < problem.num_frames(); ++t) out.push_back(fit_static(single_frame(problem, t), options));
  return out;
}

FitResult fit_sequence(const FitProblem& problem, const FitOptions& options,
                       const std::vector<FitResult>* static_fits) {
  problem.validate();
  if (problem.num_frames() < 2 && problem.smoothness_weight() != 0.0) {
    throw Error(ErrorCode::TooFewFrames, "temporal fitting needs at least 2 frames");
  }
  std::vector<FitResult> own;
  if (!static_fits) {
    own = fit_frames_independently(problem, options);
    static_fits = &own;
  }
  if (static_cast<int>(static_fits->size()) != problem.num_frames()) {
    throw Error(ErrorCode::DimensionMismatch, "one static fit per frame expected");
  }
  const ParamBlock layout(problem);
  const ParamBlock single(1, layout.root_dim(), layout.pose_dim(), layout.shape_dim(), layout.translation_dim());
  VecX x0 = VecX::Zero(layout.size());
  VecX beta = VecX::Zero(layout.shape_dim());
  for (int t = 0; t < problem.num_frames(); ++t) {
    const VecX& xs = (*static_fits)[t].x;
    layout.root(x0, t) = single.root(xs, 0);
    layout.pose(x0, t) = single.pose(xs, 0);
    layout.translation(x0, t) = single.translation(xs, 0);
    beta += single.shape(xs);
  }
  layout.shape(x0) = beta / problem.num_frames();
  return run_starts(problem, options, {x0}, {0.0});
}

Points3 procrustes_align(const Points3& a, const Points3& b) {
  if (a.rows() != b.rows() || a.rows() == 0) throw Error(ErrorCode::DimensionMismatch, "alignment point sets");
  const Eigen::RowVector3d ma = a.colwise().mean(), mb = b.colwise().mean();
  const Points3 ca = a.rowwise() - ma, cb = b.rowwise() - mb;
  const double var_a = ca.squaredNorm() / static_cast<double>(a.rows());
  if (var_a <= 0.0) {
    Points3 out(a.rows(), 3);
    out.rowwise() = mb;
    return out;
  }
  const Mat3 cov = cb.transpose() * ca / static_cast<double>(a.rows());
  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 s = Mat3::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) s(2, 2) = -1.0;
  const Mat3 r = svd.matrixU() * s * svd.matrixV().transpose();
  const double scale = (svd.singularValues().asDiagonal() * s).trace() / var_a;
  Points3 out = (scale * (ca * r.transpose())).rowwise() + mb;
  return out;
}

Metrics evaluate(const PosedBody& predicted, const PosedBody& truth) {
  if (predicted.joints.rows() != truth.joints.rows() || predicted.vertices.rows() != truth.vertices.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "prediction and ground truth differ in size");
  }
  auto mean_dist = [](const Points3& a, const Points3& b) {
    return a.rows() == 0 ? 0.0 : (a - b).rowwise().norm().mean();
  };
  Metrics m;
  m.mpjpe = mean_dist(predicted.joints, truth.joints);
  m.mpvpe = mean_dist(predicted.vertices, truth.vertices);
  m.mpjpe_pa = predicted.joints.rows() == 0 ? 0.0 : mean_dist(procrustes_align(predicted.joints, truth.joints), truth.joints);
  return m;
}

double mean_code_velocity(const std::vector<VecX>& codes) {
  if (codes.size() < 2) return 0.0;
  double s = 0.0;
  for (std::size_t t = 1; t < codes.size(); ++t) s += (codes[t] - codes[t - 1]).norm();
  return s / static_cast<double>(codes.size() - 1);
}

}  // namespace nfpose
