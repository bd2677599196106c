#pragma once

#include "nfpose/body.hpp"
#include "nfpose/camera.hpp"
#include "nfpose/loss.hpp"
#include "nfpose/objective.hpp"

#include <cstdint>
#include <random>

namespace nfpose {

// Body-pose distribution (root excluded), angle-axis:
//   theta = mean + A u + B (u*u - 1) + noise,  u ~ N(0, I_k).
// The quadratic term makes the density non-Gaussian.
struct PoseDistribution {
  VecX mean;
  MatX linear;
  MatX quadratic;
  double noise = 0.02;

  // Deterministic for (model joint count, seed). Requires the 24-joint
  // humanoid for the bent-limb mean; other trees get a zero mean.
  static PoseDistribution make(int num_joints, std::uint64_t seed, int latent_dim = 6, double spread = 0.25);
  int latent_dim() const { return static_cast<int>(linear.cols()); }
  VecX from_latent(const VecX& u, std::mt19937_64* rng) const;
  VecX sample(std::mt19937_64& rng) const;
};

// Body pose (angle-axis, root excluded) re-encoded in `rep`.
VecX convert_body_pose(const VecX& aa, Representation rep);

// Columns are body-pose samples in `rep`.
MatX sample_pose_corpus(const PoseDistribution& dist, int n, Representation rep, std::uint64_t seed);

struct Scene {
  PoseVector theta;  // full pose including root, model representation
  VecX beta;
  Vec3 translation = Vec3::Zero();
};

struct SceneConfig {
  double yaw_range = 0.785;   // uniform in [-range, range], radians
  double tilt_range = 0.1;    // pitch and roll
  double shape_sigma = 0.5;
  double depth = 5.0;
  double depth_jitter = 0.5;
  double offset_range = 0.2;  // lateral translation, meters
};

Scene sample_scene(const BodyModel& model, const PoseDistribution& dist, const SceneConfig& cfg,
                   std::mt19937_64& rng);

struct RenderConfig {
  double keypoint_noise = 0.0;  // pixels, isotropic Gaussian
  double splat_radius = 1.5;    // pixels
  bool with_mask = true;
  int mask_stride = 1;
};

// Projected joints (optionally noisy) with unit confidence and a part mask in
// which each pixel takes the part of the nearest projected vertex within the
// splat radius (lowest vertex index on ties).
FrameEvidence render_evidence(const BodyModel& model, const Camera& cam, const Scene& scene,
                              const RenderConfig& cfg, std::mt19937_64& rng);

// Scene sequence along a straight latent segment of the pose distribution;
// root, shape and translation are constant.
std::vector<Scene> sample_sequence(const BodyModel& model, const PoseDistribution& dist, const SceneConfig& cfg,
                                   int frames, double latent_step, std::mt19937_64& rng);

}  // namespace nfpose
