#pragma once

#include "nfpose/types.hpp"

#include <span>

namespace nfpose {

// Pinhole camera at the origin looking down +z. Pixel units.
struct Camera {
  double focal = 1000.0;
  double cx = 256.0;
  double cy = 256.0;
  int width = 512;
  int height = 512;

  static Camera centered(int width, int height, double focal = 1000.0) {
    return {focal, 0.5 * width, 0.5 * height, width, height};
  }
  void validate() const;
};

// (f x / z + cx, f y / z + cy). Throws BehindCamera for z <= 1e-6.
Vec2 project(const Camera& cam, const Vec3& p);
Points2 project_all(const Camera& cam, const Points3& p);
// Accumulates dL/dp from dL/duv at p.
void project_adjoint(const Camera& cam, const Vec3& p, const Vec2& d_uv, Vec3& d_p);

struct TranslationSolve {
  Vec3 translation;
  double scale = 0.0;
  Vec2 offset;  // (t_x, t_y) in pixels relative to the principal point
};

// Weighted weak-perspective fit s X_xy + t ~ (uv - c); T = (t_x/s, t_y/s, f/s - zbar)
// with zbar the weighted mean joint depth. Needs >= 3 positively weighted joints.
// Throws DimensionMismatch, DegenerateConfiguration, NegativeScale.
TranslationSolve solve_translation(const Camera& cam, const Points3& joints, const Points2& keypoints,
                                   std::span<const double> weights);

// Adds dL/dJoints given dL/dT for the solve at (joints, keypoints, weights).
void solve_translation_adjoint(const Camera& cam, const Points3& joints, const Points2& keypoints,
                               std::span<const double> weights, const TranslationSolve& solve, const Vec3& d_t,
                               Points3& d_joints);

}  // namespace nfpose
