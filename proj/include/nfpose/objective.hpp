#pragma once

#include "nfpose/body.hpp"
#include "nfpose/camera.hpp"
#include "nfpose/flow.hpp"
#include "nfpose/loss.hpp"
#include "nfpose/prior.hpp"

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace nfpose {

enum class PriorKind { NfLatent, NfAmbient, Gmm, None };

std::string to_string(PriorKind kind);
PriorKind prior_kind_from_string(const std::string& s);

struct FrameEvidence {
  Points2 keypoints;                // one row per model joint, pixels
  std::vector<double> confidence;   // per joint, >= 0
  std::optional<SegmentationMask> mask;
};

struct FitProblem {
  std::shared_ptr<const BodyModel> model;
  Camera camera;
  std::vector<FrameEvidence> frames;
  PriorKind prior = PriorKind::NfLatent;
  std::shared_ptr<const FlowModel> flow;
  std::shared_ptr<const GmmPrior> gmm;
  LossWeights weights;
  // Weight of the temporal term; unset means 50 x weights.prior.
  std::optional<double> smoothness;
  double z_near = 0.01;
  // Adds a free per-frame 3-vector to the closed-form translation. The
  // weak-perspective solve is biased under full perspective; the correction
  // lets the optimiser reach an exact reprojection.
  bool translation_correction = true;

  Representation representation() const { return model->representation; }
  int num_frames() const { return static_cast<int>(frames.size()); }
  int root_dim() const { return rotation_dim(representation()); }
  int pose_dim() const { return model->body_pose_dim(); }
  double smoothness_weight() const { return smoothness.value_or(50.0 * weights.prior); }
  // Throws InvalidConfig / DimensionMismatch.
  void validate() const;
};

// Flat optimisation vector:
//   per frame t: [root rotation (root_dim), pose or latent code (pose_dim),
//                 translation correction (0 or 3)]
//   then the shared shape (N_s).
// The translation itself is re-solved from the joints at every evaluation.
class ParamBlock {
 public:
  ParamBlock(int frames, int root_dim, int pose_dim, int shape_dim, int translation_dim = 0);
  explicit ParamBlock(const FitProblem& p)
      : ParamBlock(p.num_frames(), p.root_dim(), p.pose_dim(), p.model->num_shapes(),
                   p.translation_correction ? 3 : 0) {}

  int frames() const { return frames_; }
  int frame_stride() const { return root_ + pose_ + trans_; }
  int size() const { return frames_ * frame_stride() + shape_; }
  int root_offset(int t) const { return t * frame_stride(); }
  int pose_offset(int t) const { return root_offset(t) + root_; }
  int translation_offset(int t) const { return pose_offset(t) + pose_; }
  int shape_offset() const { return frames_ * frame_stride(); }
  int root_dim() const { return root_; }
  int pose_dim() const { return pose_; }
  int shape_dim() const { return shape_; }
  int translation_dim() const { return trans_; }

  template <class V>
  auto root(V& x, int t) const { return x.segment(root_offset(t), root_); }
  template <class V>
  auto pose(V& x, int t) const { return x.segment(pose_offset(t), pose_); }
  template <class V>
  auto translation(V& x, int t) const { return x.segment(translation_offset(t), trans_); }
  template <class V>
  auto shape(V& x) const { return x.segment(shape_offset(), shape_); }

 private:
  int frames_, root_, pose_, shape_, trans_;
};

// Per-frame quantities recovered from a parameter vector.
struct FrameState {
  PoseVector theta;  // full pose including the root
  Vec3 translation = Vec3::Zero();
  PosedBody body;    // model frame (before translation)
};

struct ObjectiveResult {
  double value = 0.0;
  VecX gradient;
  LossBreakdown breakdown;
  std::vector<FrameState> frames;
  std::vector<int> skipped_parts;
};

// Total loss and its exact gradient along
// code -> flow inverse -> body -> translation solve -> projection -> losses, priors.
// Throws on numeric failures (BehindCamera, DegenerateConfiguration, ...).
ObjectiveResult objective_with_gradient(const FitProblem& problem, const VecX& x, bool want_gradient = true);

// Decodes x into per-frame poses, bodies and translations.
std::vector<FrameState> decode(const FitProblem& problem, const VecX& x);

// Starting vector: identity root rotated by `yaw` about the vertical axis,
// zero pose / latent code (identity joints for 6D ambient), zero translation
// correction and zero shape.
VecX initial_parameters(const FitProblem& problem, double yaw);

}  // namespace nfpose
