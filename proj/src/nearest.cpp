#include "nfpose/nearest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nfpose {

namespace {

inline double dist2(double qx, double qy, double px, double py) {
  const double dx = qx - px;
  const double dy = qy - py;
  return dx * dx + dy * dy;
}

inline bool better(double d2, int idx, double best_d2, int best_idx) {
  return d2 < best_d2 || (d2 == best_d2 && idx < best_idx);
}

}  // namespace

NearestResult nearest_brute_force(const Points2& queries, const Points2& points) {
  const int n = static_cast<int>(queries.rows());
  const int m = static_cast<int>(points.rows());
  NearestResult r;
  r.index.assign(n, -1);
  r.distance.assign(n, std::numeric_limits<double>::infinity());
  for (int q = 0; q < n; ++q) {
    double best = std::numeric_limits<double>::infinity();
    int best_idx = -1;
    for (int p = 0; p < m; ++p) {
      const double d2 = dist2(queries(q, 0), queries(q, 1), points(p, 0), points(p, 1));
      if (better(d2, p, best, best_idx)) {
        best = d2;
        best_idx = p;
      }
    }
    r.index[q] = best_idx;
    r.distance[q] = std::sqrt(best);
  }
  return r;
}

GridIndex::GridIndex(Points2 points) : points_(std::move(points)) {
  const int n = size();
  if (n == 0) return;
  const double xmin = points_.col(0).minCoeff(), xmax = points_.col(0).maxCoeff();
  const double ymin = points_.col(1).minCoeff(), ymax = points_.col(1).maxCoeff();
  const double w = std::max(xmax - xmin, 1e-9), h = std::max(ymax - ymin, 1e-9);
  // About two points per cell.
  cell_ = std::max(std::sqrt(2.0 * w * h / n), 1e-9);
  cell_ = std::max(cell_, std::max(w, h) / 1024.0);
  x0_ = xmin;
  y0_ = ymin;
  nx_ = std::max(1, static_cast<int>(std::floor(w / cell_)) + 1);
  ny_ = std::max(1, static_cast<int>(std::floor(h / cell_)) + 1);

  std::vector<int> counts(static_cast<std::size_t>(nx_) * ny_ + 1, 0);
  std::vector<int> cell_of(n);
  for (int i = 0; i < n; ++i) {
    cell_of[i] = cell_y(points_(i, 1)) * nx_ + cell_x(points_(i, 0));
    ++counts[cell_of[i] + 1];
  }
  for (std::size_t c = 1; c < counts.size(); ++c) counts[c] += counts[c - 1];
  cell_start_ = counts;
  cell_items_.resize(n);
  for (int i = 0; i < n; ++i) cell_items_[counts[cell_of[i]]++] = i;
}

int GridIndex::cell_x(double x) const {
  return std::clamp(static_cast<int>(std::floor((x - x0_) / cell_)), 0, nx_ - 1);
}

int GridIndex::cell_y(double y) const {
  return std::clamp(static_cast<int>(std::floor((y - y0_) / cell_)), 0, ny_ - 1);
}

std::pair<int, double> GridIndex::nearest(const Vec2& q) const {
  const int cx = cell_x(q.x()), cy = cell_y(q.y());
  double best = std::numeric_limits<double>::infinity();
  int best_idx = -1;
  const double slack = 1e-9 * cell_;
  auto scan_cell = [&](int ix, int iy) {
    const int c = iy * nx_ + ix;
    for (int s = cell_start_[c]; s < cell_start_[c + 1]; ++s) {
      const int p = cell_items_[s];
      const double d2 = dist2(q.x(), q.y(), points_(p, 0), points_(p, 1));
      if (better(d2, p, best, best_idx)) {
        best = d2;
        best_idx = p;
      }
    }
  };
  const int max_ring = std::max(nx_, ny_);
  for (int r = 0; r <= max_ring; ++r) {
    const int x_lo = cx - r, x_hi = cx + r, y_lo = cy - r, y_hi = cy + r;
    for (int iy = std::max(y_lo, 0); iy <= std::min(y_hi, ny_ - 1); ++iy) {
      const bool edge_row = iy == y_lo || iy == y_hi;
      if (edge_row) {
        for (int ix = std::max(x_lo, 0); ix <= std::min(x_hi, nx_ - 1); ++ix) scan_cell(ix, iy);
      } else {
        if (x_lo >= 0) scan_cell(x_lo, iy);
        if (x_hi < nx_ && x_hi != x_lo) scan_cell(x_hi, iy);
      }
    }
    // Every unvisited point lies beyond one of the box sides that are still
    // inside the grid; the nearest such half-plane bounds their distance.
    double bound = std::numeric_limits<double>::infinity();
    if (x_lo > 0) bound = std::min(bound, std::max(0.0, q.x() - (x0_ + x_lo * cell_)));
    if (x_hi < nx_ - 1) bound = std::min(bound, std::max(0.0, x0_ + (x_hi + 1) * cell_ - q.x()));
    if (y_lo > 0) bound = std::min(bound, std::max(0.0, q.y() - (y0_ + y_lo * cell_)));
    if (y_hi < ny_ - 1) bound = std::min(bound, std::max(0.0, y0_ + (y_hi + 1) * cell_ - q.y()));
    if (std::isinf(bound)) break;
    if (best_idx >= 0) {
      const double b = bound - slack;
      if (b > 0.0 && best < b * b) break;
    }
  }
  return {best_idx, std::sqrt(best)};
}

NearestResult nearest_all_serial(const GridIndex& grid, const Points2& queries) {
  const int n = static_cast<int>(queries.rows());
  NearestResult r;
  r.index.resize(n);
  r.distance.resize(n);
  for (int q = 0; q < n; ++q) {
    const auto [i, d] = grid.nearest(queries.row(q).transpose());
    r.index[q] = i;
    r.distance[q] = d;
  }
  return r;
}

NearestResult nearest_all(const GridIndex& grid, const Points2& queries) {
  const int n = static_cast<int>(queries.rows());
  NearestResult r;
  r.index.resize(n);
  r.distance.resize(n);
#pragma omp parallel for schedule(static) if (n > 4096)
  for (int q = 0; q < n; ++q) {
    const auto [i, d] = grid.nearest(queries.row(q).transpose());
    r.index[q] = i;
    r.distance[q] = d;
  }
  return r;
}

}  // namespace nfpose
