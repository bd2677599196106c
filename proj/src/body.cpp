#include "nfpose/body.hpp"

#include "nfpose/rotation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>

namespace nfpose {

PoseVector PoseVector::identity(Representation rep, int joints) {
  PoseVector p;
  p.rep = rep;
  const int dim = rotation_dim(rep);
  p.values = VecX::Zero(joints * dim);
  if (rep == Representation::Rot6D) {
    for (int j = 0; j < joints; ++j) {
      p.values[dim * j + 0] = 1.0;
      p.values[dim * j + 4] = 1.0;
    }
  }
  return p;
}

void BodyModel::finalize() {
  const int nj = num_joints();
  const int nv = num_vertices();
  const int ns = static_cast<int>(shape_joint_dirs.rows());
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); };
  if (nj < 1) fail("model has no joints");
  if (parents[0] != -1) fail("joint 0 must be the root");
  for (int j = 1; j < nj; ++j) {
    if (parents[j] < 0 || parents[j] >= j) fail("parents must be topologically sorted");
  }
  if (rest_offsets.rows() != nj) fail("rest_offsets size");
  if (shape_joint_dirs.cols() != 3 * nj) fail("shape_joint_dirs size");
  if (shape_vertex_dirs.rows() != ns || shape_vertex_dirs.cols() != 3 * nv) fail("shape_vertex_dirs size");
  if (skinning.rows() != nv || skinning.cols() != nj) fail("skinning size");
  if (static_cast<int>(part_labels.size()) != nv) fail("part_labels size");
  if (!rest_offsets.allFinite() || !template_vertices.allFinite() || !skinning.allFinite() ||
      !shape_joint_dirs.allFinite() || !shape_vertex_dirs.allFinite()) {
    fail("non-finite model data");
  }
  for (int i = 0; i < nv; ++i) {
    if (std::abs(skinning.row(i).sum() - 1.0) > 1e-9) fail("skinning row " + std::to_string(i) + " does not sum to 1");
  }
  num_parts_ = nv > 0 ? *std::max_element(part_labels.begin(), part_labels.end()) : 0;
  parts_.assign(num_parts_, {});
  for (int i = 0; i < nv; ++i) {
    if (part_labels[i] < 1) fail("part labels are 1-based");
    parts_[part_labels[i] - 1].push_back(i);
  }
  for (int k = 0; k < num_parts_; ++k) {
    if (parts_[k].empty()) fail("part " + std::to_string(k + 1) + " has no vertices");
  }
  by_vertex_.assign(nv, {});
  by_joint_.assign(nj, {});
  for (int i = 0; i < nv; ++i) {
    for (int j = 0; j < nj; ++j) {
      const double w = skinning(i, j);
      if (w != 0.0) {
        by_vertex_[i].push_back({j, w});
        by_joint_[j].push_back({i, w});
      }
    }
  }
}

const std::vector<int>& BodyModel::part_indices(int k) const {
  if (k < 1 || k > num_parts_) throw Error(ErrorCode::UnknownPart, "part " + std::to_string(k));
  return parts_[k - 1];
}

void skin_vertices_serial(const BodyModel& model, std::span<const Mat3> rotations,
                          std::span<const Vec3> translations, const Points3& rest, Points3& out) {
  const auto& infl = model.vertex_influences();
  const int nv = model.num_vertices();
  out.resize(nv, 3);
  for (int i = 0; i < nv; ++i) {
    const Vec3 v = rest.row(i).transpose();
    Vec3 acc = Vec3::Zero();
    for (const auto& [j, w] : infl[i]) acc += w * (rotations[j] * v + translations[j]);
    out.row(i) = acc.transpose();
  }
}

void skin_vertices(const BodyModel& model, std::span<const Mat3> rotations,
                   std::span<const Vec3> translations, const Points3& rest, Points3& out) {
  const auto& infl = model.vertex_influences();
  const int nv = model.num_vertices();
  out.resize(nv, 3);
#pragma omp parallel for schedule(static) if (nv > 2048)
  for (int i = 0; i < nv; ++i) {
    const Vec3 v = rest.row(i).transpose();
    Vec3 acc = Vec3::Zero();
    for (const auto& [j, w] : infl[i]) acc += w * (rotations[j] * v + translations[j]);
    out.row(i) = acc.transpose();
  }
}

PosedBody pose_body(const BodyModel& model, const PoseVector& theta, const VecX& beta, PoseTape* tape) {
  const int nj = model.num_joints();
  const int dim = rotation_dim(theta.rep);
  if (theta.rep != model.representation) {
    throw Error(ErrorCode::RepresentationMismatch, "pose representation differs from the model's");
  }
  if (theta.values.size() != nj * dim) throw Error(ErrorCode::DimensionMismatch, "pose length");
  if (beta.size() != model.num_shapes()) throw Error(ErrorCode::DimensionMismatch, "shape length");

  PoseTape local_tape;
  PoseTape& t = tape ? *tape : local_tape;
  t.local.resize(nj);
  t.world.resize(nj);
  t.world_pos.resize(nj);
  t.rest_joints.resize(nj);
  t.offsets.resize(nj);
  t.skin_translation.resize(nj);

  const VecX joint_shift = model.shape_joint_dirs.transpose() * beta;
  for (int j = 0; j < nj; ++j) {
    t.offsets[j] = model.rest_offsets.row(j).transpose() + joint_shift.segment<3>(3 * j);
    t.local[j] = params_to_matrix(theta.rep, std::span<const double>(theta.values.data() + dim * j, dim));
  }
  t.world[0] = t.local[0];
  t.world_pos[0] = t.offsets[0];
  t.rest_joints[0] = t.offsets[0];
  for (int j = 1; j < nj; ++j) {
    const int p = model.parents[j];
    t.world[j] = t.world[p] * t.local[j];
    t.world_pos[j] = t.world_pos[p] + t.world[p] * t.offsets[j];
    t.rest_joints[j] = t.rest_joints[p] + t.offsets[j];
  }
  for (int j = 0; j < nj; ++j) t.skin_translation[j] = t.world_pos[j] - t.world[j] * t.rest_joints[j];

  const VecX vertex_shift = model.shape_vertex_dirs.transpose() * beta;
  t.shaped_vertices = model.template_vertices +
                      Eigen::Map<const Points3>(vertex_shift.data(), model.num_vertices(), 3);

  PosedBody out;
  out.joints.resize(nj, 3);
  for (int j = 0; j < nj; ++j) out.joints.row(j) = t.world_pos[j].transpose();
  skin_vertices(model, t.world, t.skin_translation, t.shaped_vertices, out.vertices);
  return out;
}

void pose_body_adjoint(const BodyModel& model, const PoseVector& theta, const PoseTape& t,
                       const Points3& d_joints, const Points3& d_vertices,
                       std::span<double> d_theta, std::span<double> d_beta) {
  const int nj = model.num_joints();
  const int nv = model.num_vertices();
  const int dim = rotation_dim(theta.rep);
  std::vector<Mat3> d_world(nj, Mat3::Zero());
  std::vector<Vec3> d_pos(nj, Vec3::Zero());
  std::vector<Vec3> d_rest(nj, Vec3::Zero());
  std::vector<Vec3> d_offset(nj, Vec3::Zero());
  Points3 d_shaped = Points3::Zero(nv, 3);

  if (d_vertices.rows() == nv) {
    const auto& by_joint = model.joint_influences();
    const auto& by_vertex = model.vertex_influences();
    // Per-joint reductions run in a fixed vertex order, so the result does not
    // depend on the thread count.
#pragma omp parallel for schedule(static) if (nv > 2048)
    for (int j = 0; j < nj; ++j) {
      Mat3 dr = Mat3::Zero();
      Vec3 dg = Vec3::Zero();
      for (const auto& [i, w] : by_joint[j]) {
        const Vec3 dv = d_vertices.row(i).transpose();
        dr.noalias() += (w * dv) * t.shaped_vertices.row(i);
        dg += w * dv;
      }
      d_world[j] += dr;
      // g_j = p_j - R_j rest_j
      d_pos[j] += dg;
      d_world[j] -= dg * t.rest_joints[j].transpose();
      d_rest[j] -= t.world[j].transpose() * dg;
    }
#pragma omp parallel for schedule(static) if (nv > 2048)
    for (int i = 0; i < nv; ++i) {
      const Vec3 dv = d_vertices.row(i).transpose();
      Vec3 acc = Vec3::Zero();
      for (const auto& [j, w] : by_vertex[i]) acc += w * (t.world[j].transpose() * dv);
      d_shaped.row(i) = acc.transpose();
    }
  }
  if (d_joints.rows() == nj) {
    for (int j = 0; j < nj; ++j) d_pos[j] += d_joints.row(j).transpose();
  }

  for (int j = nj - 1; j >= 1; --j) {
    const int p = model.parents[j];
    d_pos[p] += d_pos[j];
    d_world[p] += d_pos[j] * t.offsets[j].transpose();
    d_offset[j] += t.world[p].transpose() * d_pos[j];
    d_world[p] += d_world[j] * t.local[j].transpose();
    const Mat3 d_local = t.world[p].transpose() * d_world[j];
    params_adjoint(theta.rep, std::span<const double>(theta.values.data() + dim * j, dim), d_local,
                   d_theta.subspan(dim * j, dim));
    d_rest[p] += d_rest[j];
    d_offset[j] += d_rest[j];
  }
  params_adjoint(theta.rep, std::span<const double>(theta.values.data(), dim), d_world[0],
                 d_theta.subspan(0, dim));
  d_offset[0] += d_pos[0] + d_rest[0];

  VecX d_off_flat(3 * nj);
  for (int j = 0; j < nj; ++j) d_off_flat.segment<3>(3 * j) = d_offset[j];
  const VecX db = model.shape_joint_dirs * d_off_flat +
                  model.shape_vertex_dirs * Eigen::Map<const VecX>(d_shaped.data(), 3 * nv);
  for (int s = 0; s < model.num_shapes(); ++s) d_beta[s] += db[s];
}

Points3 part_vertices(const BodyModel& model, const PosedBody& body, int k) {
  const auto& idx = model.part_indices(k);
  Points3 out(static_cast<int>(idx.size()), 3);
  for (int r = 0; r < static_cast<int>(idx.size()); ++r) out.row(r) = body.vertices.row(idx[r]);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic model

namespace {

struct JointSpec {
  int parent;
  std::array<double, 3> offset;
  double radius;
  int child;                      // bone end, -1 for a leaf
  std::array<double, 3> leaf_end;  // bone vector for leaves
};

// SMPL ordering. +x subject-left, +y down, +z away from the camera.
const std::array<JointSpec, 24> kHumanoid = {{
    {-1, {0.00, 0.00, 0.00}, 0.13, 3, {}},           // 0 pelvis
    {0, {0.09, 0.08, 0.00}, 0.08, 4, {}},            // 1 left hip
    {0, {-0.09, 0.08, 0.00}, 0.08, 5, {}},           // 2 right hip
    {0, {0.00, -0.11, 0.00}, 0.13, 6, {}},           // 3 spine1
    {1, {0.01, 0.38, 0.00}, 0.06, 7, {}},            // 4 left knee
    {2, {-0.01, 0.38, 0.00}, 0.06, 8, {}},           // 5 right knee
    {3, {0.00, -0.13, 0.00}, 0.14, 9, {}},           // 6 spine2
    {4, {0.00, 0.40, 0.03}, 0.045, 10, {}},          // 7 left ankle
    {5, {0.00, 0.40, 0.03}, 0.045, 11, {}},          // 8 right ankle
    {6, {0.00, -0.05, 0.00}, 0.14, 12, {}},          // 9 spine3
    {7, {0.00, 0.06, -0.12}, 0.04, -1, {0.0, 0.01, -0.06}},   // 10 left foot
    {8, {0.00, 0.06, -0.12}, 0.04, -1, {0.0, 0.01, -0.06}},   // 11 right foot
    {9, {0.00, -0.21, 0.00}, 0.05, 15, {}},          // 12 neck
    {9, {0.08, -0.12, 0.00}, 0.05, 16, {}},          // 13 left collar
    {9, {-0.08, -0.12, 0.00}, 0.05, 17, {}},         // 14 right collar
    {12, {0.00, -0.09, 0.00}, 0.09, -1, {0.0, -0.20, 0.0}},   // 15 head
    {13, {0.10, 0.03, 0.00}, 0.05, 18, {}},          // 16 left shoulder
    {14, {-0.10, 0.03, 0.00}, 0.05, 19, {}},         // 17 right shoulder
    {16, {0.26, 0.00, 0.00}, 0.04, 20, {}},          // 18 left elbow
    {17, {-0.26, 0.00, 0.00}, 0.04, 21, {}},         // 19 right elbow
    {18, {0.25, 0.00, 0.00}, 0.035, 22, {}},         // 20 left wrist
    {19, {-0.25, 0.00, 0.00}, 0.035, 23, {}},        // 21 right wrist
    {20, {0.09, 0.00, 0.00}, 0.03, -1, {0.08, 0.0, 0.0}},     // 22 left hand
    {21, {-0.09, 0.00, 0.00}, 0.03, -1, {-0.08, 0.0, 0.0}},   // 23 right hand
}};

// Part of each humanoid joint's bone when 14 parts are requested:
// torso, head, upper arms, forearms, hands, thighs, calves, feet.
const std::array<int, 24> kHumanoidParts = {1, 9, 10, 1, 11, 12, 1, 13, 14, 1, 13, 14,
                                            2, 1, 1, 2, 3, 4, 5, 6, 7, 8, 7, 8};

// Largest-remainder split of `total` proportionally to `weights`, at least one
// per entry when total allows.
std::vector<int> allocate(int total, const std::vector<double>& weights) {
  const int n = static_cast<int>(weights.size());
  std::vector<int> out(n, 0);
  int base = total >= n ? 1 : 0;
  std::fill(out.begin(), out.end(), base);
  int remaining = total - base * n;
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::pair<double, int>> rem;
  int used = 0;
  for (int j = 0; j < n; ++j) {
    const double share = remaining * weights[j] / sum;
    const int whole = static_cast<int>(std::floor(share));
    out[j] += whole;
    used += whole;
    rem.push_back({share - whole, j});
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int r = 0; used < remaining; ++r, ++used) out[rem[r % n].second] += 1;
  return out;
}

}  // namespace

BodyModel make_synthetic_model(std::uint64_t seed, int num_joints, int num_shapes, int num_vertices,
                               int num_parts) {
  if (num_joints < 1 || num_shapes < 0 || num_parts < 1 || num_vertices < num_parts) {
    throw Error(ErrorCode::InvalidConfig, "synthetic model needs N_v >= N_b >= 1 and N_j >= 1");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const bool humanoid = num_joints == 24;
  std::vector<JointSpec> specs(num_joints);
  if (humanoid) {
    std::copy(kHumanoid.begin(), kHumanoid.end(), specs.begin());
  } else {
    for (int j = 0; j < num_joints; ++j) {
      JointSpec s{};
      s.parent = j == 0 ? -1 : j - 1 - static_cast<int>(rng() % std::min<std::uint64_t>(j, 3));
      Vec3 dir(gauss(rng), gauss(rng), gauss(rng));
      dir = dir.normalized() * (0.1 + 0.2 * unif(rng));
      s.offset = j == 0 ? std::array<double, 3>{0, 0, 0} : std::array<double, 3>{dir.x(), dir.y(), dir.z()};
      s.radius = 0.04;
      s.child = -1;
      s.leaf_end = {0.0, 0.1, 0.0};
      specs[j] = s;
    }
    for (int j = num_joints - 1; j >= 1; --j) specs[specs[j].parent].child = j;
  }

  BodyModel m;
  m.representation = Representation::AngleAxis;
  m.parents.resize(num_joints);
  m.rest_offsets.resize(num_joints, 3);
  for (int j = 0; j < num_joints; ++j) {
    m.parents[j] = specs[j].parent;
    m.rest_offsets.row(j) << specs[j].offset[0], specs[j].offset[1], specs[j].offset[2];
  }
  std::vector<Vec3> rest(num_joints);
  for (int j = 0; j < num_joints; ++j) {
    rest[j] = m.rest_offsets.row(j).transpose() + (j ? rest[m.parents[j]] : Vec3::Zero());
  }
  auto bone = [&](int j) -> Vec3 {
    if (specs[j].child >= 0) return rest[specs[j].child] - rest[j];
    return Vec3(specs[j].leaf_end[0], specs[j].leaf_end[1], specs[j].leaf_end[2]);
  };

  // Shape directions: the first few change limb proportions on the humanoid,
  // the rest are small random offset changes. The uniform-scale component is
  // projected out of each, since it is unobservable from a single view.
  m.shape_joint_dirs = MatX::Zero(num_shapes, 3 * num_joints);
  std::vector<double> thickness(num_shapes, 0.0);
  const std::array<std::vector<int>, 5> groups = {std::vector<int>{4, 5, 7, 8}, {18, 19, 20, 21},
                                                  {3, 6, 9, 12}, {13, 14, 16, 17}, {1, 2}};
  VecX all_offsets(3 * num_joints);
  for (int j = 0; j < num_joints; ++j) all_offsets.segment<3>(3 * j) = m.rest_offsets.row(j).transpose();
  for (int s = 0; s < num_shapes; ++s) {
    VecX dir = VecX::Zero(3 * num_joints);
    if (humanoid && s < static_cast<int>(groups.size())) {
      for (int j : groups[s]) dir.segment<3>(3 * j) = 0.1 * m.rest_offsets.row(j).transpose();
    } else {
      for (int j = 1; j < num_joints; ++j) {
        for (int c = 0; c < 3; ++c) dir[3 * j + c] = 0.01 * gauss(rng);
      }
    }
    dir -= (dir.dot(all_offsets) / all_offsets.squaredNorm()) * all_offsets;
    m.shape_joint_dirs.row(s) = dir.transpose();
    thickness[s] = 0.05 * gauss(rng);
  }

  // Vertices on jittered cylinders around each bone.
  std::vector<double> area(num_joints);
  for (int j = 0; j < num_joints; ++j) area[j] = bone(j).norm() * specs[j].radius + 1e-4;
  const std::vector<int> counts = allocate(num_vertices, area);

  m.template_vertices.resize(num_vertices, 3);
  m.skinning = MatX::Zero(num_vertices, num_joints);
  m.part_labels.assign(num_vertices, 1);
  m.shape_vertex_dirs = MatX::Zero(num_shapes, 3 * num_vertices);
  std::vector<int> owner(num_vertices);
  int v = 0;
  for (int j = 0; j < num_joints; ++j) {
    const Vec3 axis = bone(j);
    const Vec3 u = axis.normalized();
    Vec3 e1 = u.unitOrthogonal();
    Vec3 e2 = u.cross(e1);
    for (int k = 0; k < counts[j]; ++k, ++v) {
      const double t = (k + 0.5) / counts[j];
      const double phi = 2.0 * M_PI * (k * 0.6180339887498949 + 0.1 * unif(rng));
      const double r = specs[j].radius * (0.9 + 0.2 * unif(rng));
      const Vec3 radial = r * (std::cos(phi) * e1 + std::sin(phi) * e2);
      m.template_vertices.row(v) = (rest[j] + t * axis + radial).transpose();
      owner[v] = j;

      double w_parent = 0.0, w_child = 0.0;
      if (j > 0 && t < 0.25) w_parent = 0.5 * (0.25 - t) / 0.25;
      if (specs[j].child >= 0 && t > 0.75) w_child = 0.5 * (t - 0.75) / 0.25;
      m.skinning(v, j) = 1.0 - w_parent - w_child;
      if (w_parent > 0.0) m.skinning(v, m.parents[j]) += w_parent;
      if (w_child > 0.0) m.skinning(v, specs[j].child) += w_child;

      const int end = specs[j].child >= 0 ? specs[j].child : j;
      for (int s = 0; s < num_shapes; ++s) {
        Vec3 shift_j = Vec3::Zero(), shift_end = Vec3::Zero();
        for (int a = j; a >= 0; a = m.parents[a]) shift_j += m.shape_joint_dirs.row(s).segment<3>(3 * a).transpose();
        for (int a = end; a >= 0; a = m.parents[a]) shift_end += m.shape_joint_dirs.row(s).segment<3>(3 * a).transpose();
        const Vec3 d = (1.0 - t) * shift_j + t * shift_end + thickness[s] * radial / specs[j].radius * 0.1;
        m.shape_vertex_dirs.row(s).segment<3>(3 * v) = d.transpose();
      }
    }
  }

  bool table = humanoid && num_parts == 14;
  if (table) {
    std::vector<int> seen(15, 0);
    for (int i = 0; i < num_vertices; ++i) seen[kHumanoidParts[owner[i]]] = 1;
    table = std::accumulate(seen.begin() + 1, seen.end(), 0) == 14;
  }
  for (int i = 0; i < num_vertices; ++i) {
    m.part_labels[i] = table ? kHumanoidParts[owner[i]]
                             : 1 + static_cast<int>(static_cast<long long>(i) * num_parts / num_vertices);
  }
  m.finalize();
  return m;
}

}  // namespace nfpose
