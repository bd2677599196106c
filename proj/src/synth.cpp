#include "nfpose/synth.hpp"

#include "nfpose/rotation.hpp"

#include <cmath>
#include <limits>

namespace nfpose {

namespace {

// Mean body pose of the humanoid: arms lowered, elbows and knees bent.
// Indexed by joint (root excluded in the output).
void humanoid_mean(VecX& mean) {
  auto set = [&](int joint, double x, double y, double z) { mean.segment<3>(3 * (joint - 1)) = Vec3(x, y, z); };
  set(1, -0.25, 0.0, 0.05);   // left hip
  set(2, -0.25, 0.0, -0.05);  // right hip
  set(4, 0.45, 0.0, 0.0);     // left knee
  set(5, 0.45, 0.0, 0.0);     // right knee
  set(16, 0.0, 0.0, 1.0);     // left shoulder
  set(17, 0.0, 0.0, -1.0);    // right shoulder
  set(18, 0.0, 0.7, 0.0);     // left elbow
  set(19, 0.0, -0.7, 0.0);    // right elbow
}

}  // namespace

PoseDistribution PoseDistribution::make(int num_joints, std::uint64_t seed, int latent_dim, double spread) {
  if (num_joints < 2 || latent_dim < 1) throw Error(ErrorCode::InvalidConfig, "pose distribution");
  const int d = 3 * (num_joints - 1);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  PoseDistribution p;
  p.mean = VecX::Zero(d);
  if (num_joints == 24) humanoid_mean(p.mean);
  p.linear.resize(d, latent_dim);
  p.quadratic.resize(d, latent_dim);
  const double scale = spread / std::sqrt(static_cast<double>(latent_dim));
  for (Eigen::Index i = 0; i < p.linear.size(); ++i) p.linear.data()[i] = scale * gauss(rng);
  for (Eigen::Index i = 0; i < p.quadratic.size(); ++i) p.quadratic.data()[i] = 0.5 * scale * gauss(rng);
  return p;
}

VecX PoseDistribution::from_latent(const VecX& u, std::mt19937_64* rng) const {
  VecX theta = mean + linear * u + quadratic * (u.array().square() - 1.0).matrix();
  if (rng && noise > 0.0) {
    std::normal_distribution<double> gauss(0.0, noise);
    for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] += gauss(*rng);
  }
  return theta;
}

VecX PoseDistribution::sample(std::mt19937_64& rng) const {
  std::normal_distribution<double> gauss(0.0, 1.0);
  VecX u(latent_dim());
  for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = gauss(rng);
  return from_latent(u, &rng);
}

VecX convert_body_pose(const VecX& aa, Representation rep) {
  if (rep == Representation::AngleAxis) return aa;
  const Eigen::Index joints = aa.size() / 3;
  VecX out(joints * 6);
  for (Eigen::Index j = 0; j < joints; ++j) {
    const Mat3 r = angle_axis_to_matrix(aa.segment<3>(3 * j));
    matrix_to_params(rep, r, {out.data() + 6 * j, 6});
  }
  return out;
}

MatX sample_pose_corpus(const PoseDistribution& dist, int n, Representation rep, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int d = static_cast<int>(dist.mean.size()) / 3 * rotation_dim(rep);
  MatX out(d, n);
  for (int i = 0; i < n; ++i) out.col(i) = convert_body_pose(dist.sample(rng), rep);
  return out;
}

namespace {

Scene make_scene(const BodyModel& model, const VecX& body_aa, const SceneConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Representation rep = model.representation;
  const Mat3 root = angle_axis_to_matrix(Vec3(0.0, cfg.yaw_range * unit(rng), 0.0)) *
                    angle_axis_to_matrix(Vec3(cfg.tilt_range * unit(rng), 0.0, cfg.tilt_range * unit(rng)));
  Scene s;
  s.theta.rep = rep;
  s.theta.values.resize(model.num_joints() * rotation_dim(rep));
  matrix_to_params(rep, root, {s.theta.values.data(), static_cast<std::size_t>(rotation_dim(rep))});
  s.theta.values.tail(model.body_pose_dim()) = convert_body_pose(body_aa, rep);
  s.beta.resize(model.num_shapes());
  for (Eigen::Index i = 0; i < s.beta.size(); ++i) s.beta[i] = cfg.shape_sigma * gauss(rng);
  s.translation = Vec3(cfg.offset_range * unit(rng), cfg.offset_range * unit(rng),
                       cfg.depth + cfg.depth_jitter * unit(rng));
  return s;
}

}  // namespace

Scene sample_scene(const BodyModel& model, const PoseDistribution& dist, const SceneConfig& cfg,
                   std::mt19937_64& rng) {
  if (dist.mean.size() != 3 * (model.num_joints() - 1)) {
    throw Error(ErrorCode::DimensionMismatch, "pose distribution does not match the model");
  }
  const VecX body = dist.sample(rng);
  return make_scene(model, body, cfg, rng);
}

std::vector<Scene> sample_sequence(const BodyModel& model, const PoseDistribution& dist, const SceneConfig& cfg,
                                   int frames, double latent_step, std::mt19937_64& rng) {
  if (frames < 1) throw Error(ErrorCode::InvalidConfig, "sequence length");
  std::normal_distribution<double> gauss(0.0, 1.0);
  VecX u0(dist.latent_dim()), dir(dist.latent_dim());
  for (Eigen::Index i = 0; i < u0.size(); ++i) u0[i] = gauss(rng);
  for (Eigen::Index i = 0; i < dir.size(); ++i) dir[i] = gauss(rng);
  dir.normalize();
  const VecX body0 = dist.from_latent(u0, nullptr);
  Scene base = make_scene(model, body0, cfg, rng);
  std::vector<Scene> out;
  for (int t = 0; t < frames; ++t) {
    Scene s = base;
    const VecX body = convert_body_pose(dist.from_latent(u0 + (t * latent_step) * dir, nullptr), model.representation);
    s.theta.values.tail(model.body_pose_dim()) = body;
    out.push_back(std::move(s));
  }
  return out;
}

FrameEvidence render_evidence(const BodyModel& model, const Camera& cam, const Scene& scene,
                              const RenderConfig& cfg, std::mt19937_64& rng) {
  const PosedBody body = pose_body(model, scene.theta, scene.beta);
  const Points3 joints = body.joints.rowwise() + scene.translation.transpose();
  const Points3 verts = body.vertices.rowwise() + scene.translation.transpose();
  FrameEvidence ev;
  ev.keypoints = project_all(cam, joints);
  if (cfg.keypoint_noise > 0.0) {
    std::normal_distribution<double> gauss(0.0, cfg.keypoint_noise);
    for (Eigen::Index i = 0; i < ev.keypoints.size(); ++i) ev.keypoints.data()[i] += gauss(rng);
  }
  ev.confidence.assign(model.num_joints(), 1.0);
  if (!cfg.with_mask) return ev;

  const Points2 uv = project_all(cam, verts);
  const int w = cam.width, h = cam.height;
  std::vector<double> best(static_cast<std::size_t>(w) * h, std::numeric_limits<double>::infinity());
  std::vector<std::uint8_t> labels(best.size(), 0);
  const double r = cfg.splat_radius;
  for (Eigen::Index i = 0; i < uv.rows(); ++i) {
    const int c0 = std::max(0, static_cast<int>(std::ceil(uv(i, 0) - r)));
    const int c1 = std::min(w - 1, static_cast<int>(std::floor(uv(i, 0) + r)));
    const int r0 = std::max(0, static_cast<int>(std::ceil(uv(i, 1) - r)));
    const int r1 = std::min(h - 1, static_cast<int>(std::floor(uv(i, 1) + r)));
    for (int row = r0; row <= r1; ++row) {
      for (int col = c0; col <= c1; ++col) {
        const double d2 = (uv(i, 0) - col) * (uv(i, 0) - col) + (uv(i, 1) - row) * (uv(i, 1) - row);
        const std::size_t k = static_cast<std::size_t>(row) * w + col;
        // Strict comparison keeps the lowest vertex index on ties.
        if (d2 <= r * r && d2 < best[k]) {
          best[k] = d2;
          labels[k] = static_cast<std::uint8_t>(model.part_labels[i]);
        }
      }
    }
  }
  ev.mask.emplace(w, h, std::move(labels), model.num_parts(), cfg.mask_stride);
  return ev;
}

}  // namespace nfpose
