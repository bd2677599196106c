#include "nfpose/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nfpose {

SegmentationMask::SegmentationMask(int width, int height, std::vector<std::uint8_t> labels, int num_parts,
                                   int stride)
    : width_(width), height_(height), num_parts_(num_parts), stride_(stride), labels_(std::move(labels)) {
  if (width < 1 || height < 1 || stride < 1 || num_parts < 0 || num_parts > 255) {
    throw Error(ErrorCode::InvalidConfig, "mask geometry");
  }
  if (labels_.size() != static_cast<std::size_t>(width) * height) {
    throw Error(ErrorCode::DimensionMismatch, "mask raster size");
  }
  std::vector<std::vector<Vec2>> buckets(num_parts);
  for (int r = 0; r < height; r += stride) {
    for (int c = 0; c < width; c += stride) {
      const int k = at(c, r);
      if (k == 0) continue;
      if (k > num_parts) throw Error(ErrorCode::UnknownPart, "mask label " + std::to_string(k));
      buckets[k - 1].emplace_back(c, r);
    }
  }
  for (const auto& b : buckets) {
    Points2 p(static_cast<Eigen::Index>(b.size()), 2);
    for (std::size_t i = 0; i < b.size(); ++i) p.row(static_cast<Eigen::Index>(i)) = b[i].transpose();
    grids_.emplace_back(p);
    pixels_.push_back(std::move(p));
  }
}

double keypoint_loss(const Points2& joints, const Points2& detections, std::span<const double> weights,
                     Points2* grad) {
  const Eigen::Index n = joints.rows();
  if (detections.rows() != n || (!weights.empty() && static_cast<Eigen::Index>(weights.size()) != n)) {
    throw Error(ErrorCode::DimensionMismatch, "keypoint counts differ");
  }
  if (grad) grad->setZero(n, 2);
  if (n == 0) return 0.0;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    const Eigen::RowVector2d r = joints.row(i) - detections.row(i);
    sum += w * r.squaredNorm();
    if (grad) grad->row(i) = (2.0 * w / static_cast<double>(n)) * r;
  }
  return sum / static_cast<double>(n);
}

namespace {

struct PartVertices {
  std::vector<int> index;  // global vertex ids, ascending
  Points2 points;
};

std::vector<PartVertices> group_vertices(int num_parts, const Points2& vertices, std::span<const int> labels,
                                         std::span<const std::uint8_t> active) {
  if (static_cast<Eigen::Index>(labels.size()) != vertices.rows() ||
      (!active.empty() && active.size() != labels.size())) {
    throw Error(ErrorCode::DimensionMismatch, "vertex labels");
  }
  std::vector<PartVertices> parts(num_parts);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!active.empty() && !active[i]) continue;
    const int k = labels[i];
    if (k < 1 || k > num_parts) throw Error(ErrorCode::UnknownPart, "vertex label " + std::to_string(k));
    parts[k - 1].index.push_back(static_cast<int>(i));
  }
  for (auto& p : parts) {
    p.points.resize(static_cast<Eigen::Index>(p.index.size()), 2);
    for (std::size_t j = 0; j < p.index.size(); ++j) p.points.row(static_cast<Eigen::Index>(j)) = vertices.row(p.index[j]);
  }
  return parts;
}

// Adds w * d|a - b|/da into g; zero at coincidence.
void add_unit(Eigen::Ref<Eigen::RowVector2d> g, const Eigen::RowVector2d& diff, double dist, double w) {
  if (dist > 0.0) g += (w / dist) * diff;
}

template <class NearestFn>
AlignmentResult alignment_impl(const SegmentationMask& mask, const Points2& vertices, std::span<const int> labels,
                               std::span<const std::uint8_t> active, NearestFn&& nearest_in) {
  const int nb = mask.num_parts();
  const std::vector<PartVertices> parts = group_vertices(nb, vertices, labels, active);
  AlignmentResult out;
  out.grad.setZero(vertices.rows(), 2);
  const double pixel_weight = static_cast<double>(mask.stride()) * mask.stride();
  std::vector<double> fwd(nb, 0.0), bwd(nb, 0.0);
  std::vector<char> skipped(nb, 0);
  bool any_pixels = false;
  for (int k = 1; k <= nb; ++k) any_pixels |= mask.part_pixels(k).rows() > 0;
  out.empty_mask = !any_pixels;
  if (out.empty_mask) return out;

#pragma omp parallel for schedule(dynamic) if (vertices.rows() > 4096)
  for (int k = 1; k <= nb; ++k) {
    const Points2& pix = mask.part_pixels(k);
    const PartVertices& pv = parts[k - 1];
    if (pix.rows() == 0 && pv.points.rows() == 0) continue;
    if (pix.rows() == 0 || pv.points.rows() == 0) {
      skipped[k - 1] = 1;
      continue;
    }
    const GridIndex vgrid = nearest_in.make(pv.points);
    double f = 0.0;
    for (Eigen::Index p = 0; p < pix.rows(); ++p) {
      const auto [j, d] = nearest_in(vgrid, pv.points, pix.row(p).transpose());
      f += d;
      add_unit(out.grad.row(pv.index[j]), pv.points.row(j) - pix.row(p), d, pixel_weight);
    }
    double b = 0.0;
    for (Eigen::Index j = 0; j < pv.points.rows(); ++j) {
      const auto [p, d] = nearest_in(mask.part_index(k), pix, pv.points.row(j).transpose());
      b += d;
      add_unit(out.grad.row(pv.index[j]), pv.points.row(j) - pix.row(p), d, 1.0);
    }
    fwd[k - 1] = pixel_weight * f;
    bwd[k - 1] = b;
  }
  for (int k = 0; k < nb; ++k) {
    out.forward += fwd[k];
    out.backward += bwd[k];
    if (skipped[k]) out.skipped_parts.push_back(k + 1);
  }
  return out;
}

struct GridSearch {
  GridIndex make(const Points2& pts) const { return GridIndex(pts); }
  std::pair<int, double> operator()(const GridIndex& g, const Points2&, const Vec2& q) const { return g.nearest(q); }
};

struct BruteSearch {
  GridIndex make(const Points2&) const { return {}; }
  std::pair<int, double> operator()(const GridIndex&, const Points2& pts, const Vec2& q) const {
    double best = std::numeric_limits<double>::infinity();
    int idx = -1;
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
      const double dx = q.x() - pts(i, 0), dy = q.y() - pts(i, 1);
      const double d2 = dx * dx + dy * dy;
      if (d2 < best) {
        best = d2;
        idx = static_cast<int>(i);
      }
    }
    return {idx, std::sqrt(best)};
  }
};

}  // namespace

AlignmentResult body_alignment_loss(const SegmentationMask& mask, const Points2& vertices,
                                    std::span<const int> labels, std::span<const std::uint8_t> active) {
  return alignment_impl(mask, vertices, labels, active, GridSearch{});
}

AlignmentResult body_alignment_loss_brute_force(const SegmentationMask& mask, const Points2& vertices,
                                                std::span<const int> labels, std::span<const std::uint8_t> active) {
  return alignment_impl(mask, vertices, labels, active, BruteSearch{});
}

double depth_hinge(const Points3& vertices, double z_near, Points3* grad) {
  if (grad) grad->setZero(vertices.rows(), 3);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < vertices.rows(); ++i) {
    const double gap = z_near - vertices(i, 2);
    if (gap > 0.0) {
      sum += gap * gap;
      if (grad) (*grad)(i, 2) = -2.0 * gap;
    }
  }
  return sum;
}

SupervisedLosses supervised_losses(const Points3& vertices, const Points3& vertices_gt, const VecX& theta,
                                   const VecX& theta_gt, Representation rep, Representation rep_gt, const VecX& beta,
                                   const VecX& beta_gt, SupervisedGradient* grad) {
  if (rep != rep_gt) throw Error(ErrorCode::RepresentationMismatch, "pose representations differ");
  if (vertices.rows() != vertices_gt.rows() || theta.size() != theta_gt.size() || beta.size() != beta_gt.size() ||
      theta.size() % rotation_dim(rep) != 0) {
    throw Error(ErrorCode::DimensionMismatch, "supervised targets");
  }
  SupervisedLosses l;
  const Eigen::Index joints = theta.size() / rotation_dim(rep);
  const double nv = std::max<double>(1.0, static_cast<double>(vertices.rows()));
  const double nj = std::max<double>(1.0, static_cast<double>(joints));
  const double nb = std::max<double>(1.0, static_cast<double>(beta.size()));
  l.vertex = (vertices - vertices_gt).squaredNorm() / nv;
  l.pose = (theta - theta_gt).squaredNorm() / nj;
  l.shape = (beta - beta_gt).squaredNorm() / nb;
  if (grad) {
    grad->vertices = (2.0 / nv) * (vertices - vertices_gt);
    grad->theta = (2.0 / nj) * (theta - theta_gt);
    grad->beta = (2.0 / nb) * (beta - beta_gt);
  }
  return l;
}

LossBreakdown weakly_supervised_loss(const WeakTerms& t, const LossWeights& w) {
  if (w.keypoint == 0.0 && w.alignment == 0.0 && w.prior == 0.0 && w.shape == 0.0 && w.depth == 0.0) {
    throw Error(ErrorCode::NoActiveTerms, "every loss weight is zero");
  }
  LossBreakdown b;
  b.keypoint = t.keypoint;
  b.alignment_fwd = t.alignment_fwd;
  b.alignment_bwd = t.alignment_bwd;
  b.prior = t.prior;
  b.shape = t.shape;
  b.depth = t.depth;
  b.total = w.keypoint * t.keypoint + w.alignment * (t.alignment_fwd + t.alignment_bwd) + w.prior * t.prior +
            w.shape * t.shape + w.depth * t.depth;
  return b;
}

double smoothness_loss(const MatX& z, MatX* grad) {
  if (z.cols() < 2) throw Error(ErrorCode::TooFewFrames, "smoothness needs at least 2 frames");
  if (grad) grad->setZero(z.rows(), z.cols());
  double sum = 0.0;
  for (Eigen::Index t = 1; t < z.cols(); ++t) {
    const VecX d = z.col(t) - z.col(t - 1);
    sum += d.squaredNorm();
    if (grad) {
      grad->col(t) += 2.0 * d;
      grad->col(t - 1) -= 2.0 * d;
    }
  }
  return sum;
}

}  // namespace nfpose
