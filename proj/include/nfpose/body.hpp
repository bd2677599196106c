#pragma once

#include "nfpose/types.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace nfpose {

// Per-joint rotation parameters, `rotation_dim(rep)` values per joint.
struct PoseVector {
  Representation rep = Representation::AngleAxis;
  VecX values;

  int joint_count() const { return static_cast<int>(values.size()) / rotation_dim(rep); }
  // All-zero rotations (identity columns for 6D).
  static PoseVector identity(Representation rep, int joints);
};

struct SkinInfluence {
  int index;  // joint for per-vertex lists, vertex for per-joint lists
  double weight;
};

// Articulated body with linear blend skinning.
//
// Model frame: +x to the subject's left, +y down (image rows), +z away from
// the camera. Joints are topologically sorted: parents[0] == -1 and
// 0 <= parents[j] < j for j > 0.
//
// Flat layouts (row-major):
//   shape_joint_dirs  N_s x (3 N_j), offset direction of joint j in cols 3j..3j+2
//   shape_vertex_dirs N_s x (3 N_v)
//   skinning          N_v x N_j
struct BodyModel {
  std::vector<int> parents;
  Points3 rest_offsets;
  MatX shape_joint_dirs;
  MatX shape_vertex_dirs;
  Points3 template_vertices;
  MatX skinning;
  std::vector<int> part_labels;  // 1..num_parts
  Representation representation = Representation::AngleAxis;

  int num_joints() const { return static_cast<int>(parents.size()); }
  int num_shapes() const { return static_cast<int>(shape_joint_dirs.rows()); }
  int num_vertices() const { return static_cast<int>(template_vertices.rows()); }
  int num_parts() const { return num_parts_; }
  // Dimension of the pose vector excluding the root joint.
  int body_pose_dim() const { return (num_joints() - 1) * rotation_dim(representation); }

  // Checks every structural invariant and builds the derived tables.
  // Throws InvalidConfig.
  void finalize();

  const std::vector<std::vector<SkinInfluence>>& vertex_influences() const { return by_vertex_; }
  const std::vector<std::vector<SkinInfluence>>& joint_influences() const { return by_joint_; }
  // Vertex indices of part k (1-based), ascending.
  const std::vector<int>& part_indices(int k) const;

 private:
  int num_parts_ = 0;
  std::vector<std::vector<SkinInfluence>> by_vertex_;
  std::vector<std::vector<SkinInfluence>> by_joint_;
  std::vector<std::vector<int>> parts_;
};

struct PosedBody {
  Points3 joints;
  Points3 vertices;
};

// Intermediates of one forward pass, kept for the adjoint sweep.
struct PoseTape {
  std::vector<Mat3> local;
  std::vector<Mat3> world;
  std::vector<Vec3> world_pos;
  std::vector<Vec3> rest_joints;
  std::vector<Vec3> offsets;
  std::vector<Vec3> skin_translation;  // p_j - R_j * rest_j
  Points3 shaped_vertices;
};

PosedBody pose_body(const BodyModel& model, const PoseVector& theta, const VecX& beta,
                    PoseTape* tape = nullptr);

// Reverse sweep. Accumulates into d_theta (N_j * rotation_dim) and d_beta (N_s).
void pose_body_adjoint(const BodyModel& model, const PoseVector& theta, const PoseTape& tape,
                       const Points3& d_joints, const Points3& d_vertices,
                       std::span<double> d_theta, std::span<double> d_beta);

// Vertices of part k (1-based) in index order. Throws UnknownPart.
Points3 part_vertices(const BodyModel& model, const PosedBody& body, int k);

// Deterministic humanoid-like model. With num_joints == 24 the tree is the
// SMPL hierarchy; any other count yields a random chain-like tree.
BodyModel make_synthetic_model(std::uint64_t seed, int num_joints = 24, int num_shapes = 10,
                               int num_vertices = 480, int num_parts = 14);

// LBS kernels: v_i = sum_j w_ij (R_j vbar_i + g_j). The OpenMP variant is
// bitwise identical to the serial reference.
void skin_vertices_serial(const BodyModel& model, std::span<const Mat3> rotations,
                          std::span<const Vec3> translations, const Points3& rest, Points3& out);
void skin_vertices(const BodyModel& model, std::span<const Mat3> rotations,
                   std::span<const Vec3> translations, const Points3& rest, Points3& out);

}  // namespace nfpose
