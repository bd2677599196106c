#pragma once

#include "nfpose/types.hpp"

#include <vector>

namespace nfpose {

// For every query: index of the nearest point and the Euclidean distance.
// Ties go to the lowest point index. All routines below produce identical
// results for identical inputs.
struct NearestResult {
  std::vector<int> index;
  std::vector<double> distance;
};

// O(n m) serial reference.
NearestResult nearest_brute_force(const Points2& queries, const Points2& points);

// Uniform-grid index over a 2D point set for exact nearest-neighbour search.
class GridIndex {
 public:
  GridIndex() = default;
  explicit GridIndex(Points2 points);

  bool empty() const { return points_.rows() == 0; }
  int size() const { return static_cast<int>(points_.rows()); }
  const Points2& points() const { return points_; }

  // Exact nearest point to q. Requires a non-empty index.
  std::pair<int, double> nearest(const Vec2& q) const;

 private:
  Points2 points_;
  double x0_ = 0.0, y0_ = 0.0, cell_ = 1.0;
  int nx_ = 1, ny_ = 1;
  std::vector<int> cell_start_;
  std::vector<int> cell_items_;

  int cell_x(double x) const;
  int cell_y(double y) const;
};

NearestResult nearest_all_serial(const GridIndex& grid, const Points2& queries);
// OpenMP over queries; results are written per query so the output is
// independent of the schedule.
NearestResult nearest_all(const GridIndex& grid, const Points2& queries);

}  // namespace nfpose
