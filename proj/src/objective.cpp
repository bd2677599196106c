#include "nfpose/objective.hpp"

#include "nfpose/rotation.hpp"

#include <algorithm>
#include <cmath>

namespace nfpose {

std::string to_string(PriorKind kind) {
  switch (kind) {
    case PriorKind::NfLatent: return "nf_latent";
    case PriorKind::NfAmbient: return "nf_ambient";
    case PriorKind::Gmm: return "gmm";
    case PriorKind::None: return "none";
  }
  return "none";
}

PriorKind prior_kind_from_string(const std::string& s) {
  if (s == "nf_latent" || s == "latent") return PriorKind::NfLatent;
  if (s == "nf_ambient" || s == "ambient") return PriorKind::NfAmbient;
  if (s == "gmm") return PriorKind::Gmm;
  if (s == "none") return PriorKind::None;
  throw Error(ErrorCode::ConfigError, "unknown prior '" + s + "'");
}

void FitProblem::validate() const {
  if (!model) throw Error(ErrorCode::InvalidConfig, "fit problem without a body model");
  camera.validate();
  if (frames.empty()) throw Error(ErrorCode::InvalidConfig, "fit problem without frames");
  const int nj = model->num_joints();
  for (const auto& f : frames) {
    if (f.keypoints.rows() != nj || static_cast<int>(f.confidence.size()) != nj) {
      throw Error(ErrorCode::DimensionMismatch, "keypoints must list every model joint");
    }
    if (f.mask && f.mask->num_parts() != model->num_parts()) {
      throw Error(ErrorCode::DimensionMismatch, "mask part count differs from the model");
    }
  }
  if (prior == PriorKind::NfLatent || prior == PriorKind::NfAmbient) {
    if (!flow) throw Error(ErrorCode::InvalidConfig, "flow prior requires a flow checkpoint");
    if (flow->dim() != pose_dim()) throw Error(ErrorCode::DimensionMismatch, "flow dimension differs from the pose");
  }
  if (prior == PriorKind::Gmm) {
    if (!gmm) throw Error(ErrorCode::InvalidConfig, "gmm prior requires a mixture checkpoint");
    if (gmm->dim() != pose_dim()) throw Error(ErrorCode::DimensionMismatch, "mixture dimension differs from the pose");
  }
}

ParamBlock::ParamBlock(int frames, int root_dim, int pose_dim, int shape_dim, int translation_dim)
    : frames_(frames), root_(root_dim), pose_(pose_dim), shape_(shape_dim), trans_(translation_dim) {
  if (frames < 1 || root_dim < 1 || pose_dim < 0 || shape_dim < 0 || (trans_ != 0 && trans_ != 3)) {
    throw Error(ErrorCode::InvalidConfig, "parameter layout");
  }
}

namespace {

struct FrameWork {
  VecX code;
  VecX body_pose;
  FlowTape flow_tape;
  PoseTape pose_tape;
  FrameState state;
  TranslationSolve solve;
};

PoseVector assemble_pose(Representation rep, const VecX& root, const VecX& body) {
  PoseVector p;
  p.rep = rep;
  p.values.resize(root.size() + body.size());
  p.values << root, body;
  return p;
}

void forward_frame(const FitProblem& pr, const ParamBlock& layout, const VecX& x, int t, FrameWork& w,
                   bool want_tape) {
  const VecX root = layout.root(x, t);
  w.code = layout.pose(x, t);
  if (pr.prior == PriorKind::NfLatent) {
    w.body_pose = pr.flow->inverse_batch(w.code, want_tape ? &w.flow_tape : nullptr).col(0);
  } else {
    w.body_pose = w.code;
  }
  w.state.theta = assemble_pose(pr.representation(), root, w.body_pose);
  const VecX beta = layout.shape(x);
  w.state.body = pose_body(*pr.model, w.state.theta, beta, want_tape ? &w.pose_tape : nullptr);
  const FrameEvidence& ev = pr.frames[t];
  w.solve = solve_translation(pr.camera, w.state.body.joints, ev.keypoints, ev.confidence);
  w.state.translation = w.solve.translation;
  if (layout.translation_dim() == 3) w.state.translation += layout.translation(x, t);
}

}  // namespace

std::vector<FrameState> decode(const FitProblem& problem, const VecX& x) {
  const ParamBlock layout(problem);
  if (x.size() != layout.size()) throw Error(ErrorCode::DimensionMismatch, "parameter vector size");
  std::vector<FrameState> out;
  for (int t = 0; t < layout.frames(); ++t) {
    FrameWork w;
    forward_frame(problem, layout, x, t, w, false);
    out.push_back(std::move(w.state));
  }
  return out;
}

ObjectiveResult objective_with_gradient(const FitProblem& pr, const VecX& x, bool want_gradient) {
  const ParamBlock layout(pr);
  if (x.size() != layout.size()) throw Error(ErrorCode::DimensionMismatch, "parameter vector size");
  const BodyModel& model = *pr.model;
  const LossWeights& lw = pr.weights;
  const int nf = layout.frames();
  const int nv = model.num_vertices();

  ObjectiveResult res;
  if (want_gradient) res.gradient = VecX::Zero(x.size());
  WeakTerms terms;

  std::vector<FrameWork> work(nf);
  MatX codes(layout.pose_dim(), nf);
  for (int t = 0; t < nf; ++t) {
    FrameWork& w = work[t];
    forward_frame(pr, layout, x, t, w, want_gradient);
    codes.col(t) = w.code;
    const FrameEvidence& ev = pr.frames[t];
    const Vec3 T = w.state.translation;

    Points3 joints_c = w.state.body.joints.rowwise() + T.transpose();
    Points3 verts_c = w.state.body.vertices.rowwise() + T.transpose();
    Points3 d_joints_c = Points3::Zero(joints_c.rows(), 3);
    Points3 d_verts_c = Points3::Zero(nv, 3);

    if (lw.keypoint != 0.0) {
      const Points2 uv = project_all(pr.camera, joints_c);
      Points2 g;
      terms.keypoint += keypoint_loss(uv, ev.keypoints, ev.confidence, want_gradient ? &g : nullptr);
      if (want_gradient) {
        for (Eigen::Index i = 0; i < joints_c.rows(); ++i) {
          Vec3 dp = Vec3::Zero();
          project_adjoint(pr.camera, joints_c.row(i).transpose(), lw.keypoint * g.row(i).transpose(), dp);
          d_joints_c.row(i) += dp.transpose();
        }
      }
    }

    if (lw.alignment != 0.0 && ev.mask) {
      std::vector<std::uint8_t> active(nv);
      Points2 uv(nv, 2);
      for (int i = 0; i < nv; ++i) {
        active[i] = verts_c(i, 2) > pr.z_near;
        uv.row(i) = active[i] ? Eigen::RowVector2d(project(pr.camera, verts_c.row(i).transpose()).transpose())
                              : Eigen::RowVector2d::Zero();
      }
      const AlignmentResult ba = body_alignment_loss(*ev.mask, uv, model.part_labels, active);
      terms.alignment_fwd += ba.forward;
      terms.alignment_bwd += ba.backward;
      res.skipped_parts.insert(res.skipped_parts.end(), ba.skipped_parts.begin(), ba.skipped_parts.end());
      if (want_gradient) {
        for (int i = 0; i < nv; ++i) {
          if (!active[i]) continue;
          Vec3 dp = Vec3::Zero();
          project_adjoint(pr.camera, verts_c.row(i).transpose(), lw.alignment * ba.grad.row(i).transpose(), dp);
          d_verts_c.row(i) += dp.transpose();
        }
      }
    }

    if (lw.depth != 0.0) {
      Points3 g;
      terms.depth += depth_hinge(verts_c, pr.z_near, want_gradient ? &g : nullptr);
      if (want_gradient) d_verts_c += lw.depth * g;
    }

    VecX d_code = VecX::Zero(layout.pose_dim());
    if (lw.prior != 0.0) {
      PriorEval pe;
      switch (pr.prior) {
        case PriorKind::NfLatent: pe = nf_prior_latent(w.code); break;
        case PriorKind::NfAmbient: pe = nf_prior_ambient(*pr.flow, w.body_pose); break;
        case PriorKind::Gmm: pe = gmm_prior(*pr.gmm, w.body_pose); break;
        case PriorKind::None: pe = {0.0, VecX::Zero(layout.pose_dim())}; break;
      }
      terms.prior += pe.value;
      if (want_gradient) d_code += lw.prior * pe.gradient;
    }

    if (!want_gradient) continue;

    // Translation is shared by every camera-frame point.
    const Vec3 d_T = d_joints_c.colwise().sum().transpose() + d_verts_c.colwise().sum().transpose();
    Points3 d_joints = d_joints_c;
    solve_translation_adjoint(pr.camera, w.state.body.joints, ev.keypoints, ev.confidence, w.solve, d_T, d_joints);

    VecX d_theta = VecX::Zero(w.state.theta.values.size());
    VecX d_beta = VecX::Zero(layout.shape_dim());
    pose_body_adjoint(model, w.state.theta, w.pose_tape, d_joints, d_verts_c,
                      {d_theta.data(), static_cast<std::size_t>(d_theta.size())},
                      {d_beta.data(), static_cast<std::size_t>(d_beta.size())});

    const int rd = layout.root_dim();
    layout.root(res.gradient, t) += d_theta.head(rd);
    const VecX d_body = d_theta.tail(layout.pose_dim());
    if (pr.prior == PriorKind::NfLatent) {
      d_code += pr.flow->inverse_adjoint(w.flow_tape, d_body).col(0);
    } else {
      d_code += d_body;
    }
    layout.pose(res.gradient, t) += d_code;
    if (layout.translation_dim() == 3) layout.translation(res.gradient, t) += d_T;
    layout.shape(res.gradient) += d_beta;
  }

  const VecX beta = layout.shape(x);
  terms.shape = beta.squaredNorm();
  if (want_gradient) layout.shape(res.gradient) += 2.0 * lw.shape * beta;

  res.breakdown = weakly_supervised_loss(terms, lw);
  const double ws = nf >= 2 ? pr.smoothness_weight() : 0.0;
  if (ws != 0.0) {
    MatX g;
    res.breakdown.smooth = smoothness_loss(codes, want_gradient ? &g : nullptr);
    res.breakdown.total += ws * res.breakdown.smooth;
    if (want_gradient) {
      for (int t = 0; t < nf; ++t) layout.pose(res.gradient, t) += ws * g.col(t);
    }
  }
  res.value = res.breakdown.total;
  for (auto& w : work) res.frames.push_back(std::move(w.state));
  return res;
}

VecX initial_parameters(const FitProblem& problem, double yaw) {
  const ParamBlock layout(problem);
  VecX x = VecX::Zero(layout.size());
  const Representation rep = problem.representation();
  const Mat3 r = angle_axis_to_matrix(Vec3(0.0, yaw, 0.0));
  for (int t = 0; t < layout.frames(); ++t) {
    VecX root(layout.root_dim());
    matrix_to_params(rep, r, {root.data(), static_cast<std::size_t>(root.size())});
    layout.root(x, t) = root;
    if (problem.prior != PriorKind::NfLatent && rep == Representation::Rot6D) {
      layout.pose(x, t) = PoseVector::identity(rep, problem.model->num_joints() - 1).values;
    }
  }
  return x;
}

}  // namespace nfpose
