#pragma once

#include "nfpose/nearest.hpp"
#include "nfpose/types.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace nfpose {

// Part-label raster, row-major, 0 = background. Pixel (col, row) has its
// center at image coordinates (col, row).
class SegmentationMask {
 public:
  SegmentationMask() = default;
  // Pixels are kept when both coordinates are multiples of `stride`.
  SegmentationMask(int width, int height, std::vector<std::uint8_t> labels, int num_parts, int stride = 1);

  int width() const { return width_; }
  int height() const { return height_; }
  int num_parts() const { return num_parts_; }
  int stride() const { return stride_; }
  std::uint8_t at(int col, int row) const { return labels_[static_cast<std::size_t>(row) * width_ + col]; }
  const std::vector<std::uint8_t>& labels() const { return labels_; }

  // Subsampled pixel centers of part k (1-based), raster order.
  const Points2& part_pixels(int k) const { return pixels_.at(k - 1); }
  const GridIndex& part_index(int k) const { return grids_.at(k - 1); }

 private:
  int width_ = 0, height_ = 0, num_parts_ = 0, stride_ = 1;
  std::vector<std::uint8_t> labels_;
  std::vector<Points2> pixels_;
  std::vector<GridIndex> grids_;
};

// Named terms; a term not in use is 0.
struct LossBreakdown {
  double keypoint = 0.0;
  double alignment_fwd = 0.0;
  double alignment_bwd = 0.0;
  double prior = 0.0;
  double shape = 0.0;
  double depth = 0.0;
  double vertex = 0.0;
  double pose = 0.0;
  double shape_sup = 0.0;
  double smooth = 0.0;
  double total = 0.0;
};

// (1/N) sum_i w_i |J_i - Jhat_i|^2. Empty weights mean all ones. Writes
// dL/dJ into `grad` when non-null.
double keypoint_loss(const Points2& joints, const Points2& detections, std::span<const double> weights,
                     Points2* grad = nullptr);

struct AlignmentResult {
  double forward = 0.0;   // mask pixels -> nearest same-part vertex
  double backward = 0.0;  // vertices -> nearest same-part pixel
  Points2 grad;           // dL/dvertex for L = forward + backward
  std::vector<int> skipped_parts;
  bool empty_mask = false;
};

// Bidirectional unsquared nearest distances per part. `labels` holds one
// 1-based part per vertex; vertices with `active[i] == 0` are ignored (empty
// span: all active). Parts with pixels but no vertices, or the converse, are
// skipped and listed. The forward sum is scaled by stride^2. At zero distance
// the gradient is zero.
AlignmentResult body_alignment_loss(const SegmentationMask& mask, const Points2& vertices,
                                    std::span<const int> labels, std::span<const std::uint8_t> active = {});

// Same quantity by exhaustive search, for verification.
AlignmentResult body_alignment_loss_brute_force(const SegmentationMask& mask, const Points2& vertices,
                                                std::span<const int> labels,
                                                std::span<const std::uint8_t> active = {});

// sum_i max(0, z_near - z_i)^2 over vertex depths.
double depth_hinge(const Points3& vertices, double z_near, Points3* grad = nullptr);

struct SupervisedLosses {
  double vertex = 0.0;  // mean over vertices of squared distance
  double pose = 0.0;    // mean over joints of squared parameter difference
  double shape = 0.0;   // mean over coefficients of squared difference
  double total() const { return vertex + pose + shape; }
};

// Gradient of total() with respect to the predictions.
struct SupervisedGradient {
  Points3 vertices;
  VecX theta;
  VecX beta;
};

SupervisedLosses supervised_losses(const Points3& vertices, const Points3& vertices_gt, const VecX& theta,
                                   const VecX& theta_gt, Representation rep, Representation rep_gt, const VecX& beta,
                                   const VecX& beta_gt, SupervisedGradient* grad = nullptr);

struct LossWeights {
  double keypoint = 1.0;
  double alignment = 1.0;
  double prior = 1.0;
  double shape = 1.0;
  double depth = 1.0;
};

// Individual values entering the weakly supervised sum.
struct WeakTerms {
  double keypoint = 0.0;
  double alignment_fwd = 0.0;
  double alignment_bwd = 0.0;
  double prior = 0.0;
  double shape = 0.0;  // |beta|^2
  double depth = 0.0;
};

// w_ka L_KA + w_ba L_BA + w_psi L_psi + w_beta |beta|^2 + w_depth hinge.
// Throws NoActiveTerms when every weight is zero.
LossBreakdown weakly_supervised_loss(const WeakTerms& terms, const LossWeights& weights);

// sum_{t >= 1} |z_t - z_{t-1}|^2 over the columns of z. Throws TooFewFrames.
double smoothness_loss(const MatX& z, MatX* grad = nullptr);

}  // namespace nfpose
