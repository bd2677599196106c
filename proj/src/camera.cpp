#include "nfpose/camera.hpp"

#include <cmath>

namespace nfpose {

namespace {

constexpr double kMinDepth = 1e-6;

struct WeightedMoments {
  double total = 0.0;
  Vec2 mean_x = Vec2::Zero();
  Vec2 mean_u = Vec2::Zero();
  double mean_z = 0.0;
  double a = 0.0;  // sum w (X - Xbar) . (u - ubar)
  double b = 0.0;  // sum w |X - Xbar|^2
};

WeightedMoments moments(const Camera& cam, const Points3& joints, const Points2& keypoints,
                        std::span<const double> weights) {
  const Eigen::Index n = joints.rows();
  if (keypoints.rows() != n || static_cast<Eigen::Index>(weights.size()) != n) {
    throw Error(ErrorCode::DimensionMismatch, "translation solve inputs differ in length");
  }
  WeightedMoments m;
  int active = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = weights[i];
    if (w < 0.0 || !std::isfinite(w)) throw Error(ErrorCode::DimensionMismatch, "keypoint weights must be >= 0");
    if (w == 0.0) continue;
    ++active;
    m.total += w;
    m.mean_x += w * joints.row(i).head<2>().transpose();
    m.mean_u += w * (keypoints.row(i).transpose() - Vec2(cam.cx, cam.cy));
    m.mean_z += w * joints(i, 2);
  }
  if (active < 3) throw Error(ErrorCode::DegenerateConfiguration, "fewer than 3 weighted keypoints");
  m.mean_x /= m.total;
  m.mean_u /= m.total;
  m.mean_z /= m.total;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = weights[i];
    if (w == 0.0) continue;
    const Vec2 dx = joints.row(i).head<2>().transpose() - m.mean_x;
    const Vec2 du = keypoints.row(i).transpose() - Vec2(cam.cx, cam.cy) - m.mean_u;
    m.a += w * dx.dot(du);
    m.b += w * dx.squaredNorm();
  }
  return m;
}

}  // namespace

void Camera::validate() const {
  if (!(focal > 0.0) || width < 1 || height < 1) throw Error(ErrorCode::InvalidConfig, "camera intrinsics");
}

Vec2 project(const Camera& cam, const Vec3& p) {
  if (!(p.z() > kMinDepth)) throw Error(ErrorCode::BehindCamera, "point at or behind the camera plane");
  return {cam.focal * p.x() / p.z() + cam.cx, cam.focal * p.y() / p.z() + cam.cy};
}

Points2 project_all(const Camera& cam, const Points3& p) {
  Points2 out(p.rows(), 2);
  for (Eigen::Index i = 0; i < p.rows(); ++i) out.row(i) = project(cam, p.row(i).transpose()).transpose();
  return out;
}

void project_adjoint(const Camera& cam, const Vec3& p, const Vec2& d_uv, Vec3& d_p) {
  const double iz = 1.0 / p.z();
  const double f = cam.focal;
  d_p.x() += f * iz * d_uv.x();
  d_p.y() += f * iz * d_uv.y();
  d_p.z() -= f * iz * iz * (p.x() * d_uv.x() + p.y() * d_uv.y());
}

TranslationSolve solve_translation(const Camera& cam, const Points3& joints, const Points2& keypoints,
                                   std::span<const double> weights) {
  const WeightedMoments m = moments(cam, joints, keypoints, weights);
  const double scale_ref = m.total * (1.0 + m.mean_x.squaredNorm());
  if (m.b <= 1e-14 * scale_ref) throw Error(ErrorCode::DegenerateConfiguration, "joints coincide in the image plane");
  const double s = m.a / m.b;
  if (!(s > 0.0)) throw Error(ErrorCode::NegativeScale, "weak-perspective scale is not positive");
  TranslationSolve out;
  out.scale = s;
  out.offset = m.mean_u - s * m.mean_x;
  out.translation = Vec3(out.offset.x() / s, out.offset.y() / s, cam.focal / s - m.mean_z);
  return out;
}

void solve_translation_adjoint(const Camera& cam, const Points3& joints, const Points2& keypoints,
                               std::span<const double> weights, const TranslationSolve& solve, const Vec3& d_t,
                               Points3& d_joints) {
  const WeightedMoments m = moments(cam, joints, keypoints, weights);
  const double s = solve.scale;
  // T_xy = ubar / s - Xbar, T_z = f / s - zbar.
  const double d_s = -(d_t.x() * m.mean_u.x() + d_t.y() * m.mean_u.y() + d_t.z() * cam.focal) / (s * s);
  const double d_a = d_s / m.b;
  const double d_b = -d_s * m.a / (m.b * m.b);
  for (Eigen::Index i = 0; i < joints.rows(); ++i) {
    const double w = weights[i];
    if (w == 0.0) continue;
    const Vec2 dx = joints.row(i).head<2>().transpose() - m.mean_x;
    const Vec2 du = keypoints.row(i).transpose() - Vec2(cam.cx, cam.cy) - m.mean_u;
    const Vec2 g = d_a * w * du + 2.0 * d_b * w * dx - d_t.head<2>() * (w / m.total);
    d_joints(i, 0) += g.x();
    d_joints(i, 1) += g.y();
    d_joints(i, 2) -= d_t.z() * w / m.total;
  }
}

}  // namespace nfpose
