#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "geometry.hpp"
#include "kdtree.hpp"

namespace skelmesh {

enum class ChamferMode { kSum, kMean };

/// Nearest point of `target` to `query`, ties to the lowest index.
inline Neighbor nearest_neighbor(const Vec3& query, const Points& target) {
  if (target.rows() == 0) {
    throw std::invalid_argument("nearest_neighbor: target set is empty");
  }
  Neighbor best{0, squared_distance(query, row(target, 0))};
  for (std::size_t i = 1; i < count(target); ++i) {
    const Neighbor cand{i, squared_distance(query, row(target, i))};
    if (cand < best) best = cand;
  }
  return best;
}

/// For every row of `from`, the Euclidean distance to the nearest row of `to`.
inline std::vector<Neighbor> directed_nearest(const Points& from, const KdTree& to) {
  std::vector<Neighbor> out(count(from));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = to.nearest(row(from, i));
  return out;
}

namespace detail {

inline void require_nonempty(const Points& a, const Points& b, const char* what) {
  if (a.rows() == 0 || b.rows() == 0) {
    throw std::invalid_argument(std::string(what) + ": point sets must be nonempty");
  }
}

inline double directed_sum(const Points& from, const KdTree& to) {
  double sum = 0.0;
  for (std::size_t i = 0; i < count(from); ++i) sum += to.nearest(row(from, i)).distance();
  return sum;
}

inline double directed_max(const Points& from, const KdTree& to) {
  double worst = 0.0;
  for (std::size_t i = 0; i < count(from); ++i) {
    worst = std::max(worst, to.nearest(row(from, i)).distance());
  }
  return worst;
}

}  // namespace detail

/// Bidirectional Chamfer distance with Euclidean (unsquared) point distances.
/// kSum adds the two directed sums; kMean divides each by its source size.
inline double chamfer_distance(const Points& a, const Points& b, ChamferMode mode) {
  detail::require_nonempty(a, b, "chamfer_distance");
  const KdTree ta(a);
  const KdTree tb(b);
  double ab = detail::directed_sum(a, tb);
  double ba = detail::directed_sum(b, ta);
  if (mode == ChamferMode::kMean) {
    ab /= static_cast<double>(a.rows());
    ba /= static_cast<double>(b.rows());
  }
  return ab + ba;
}

inline double hausdorff_distance(const Points& a, const Points& b) {
  detail::require_nonempty(a, b, "hausdorff_distance");
  const KdTree ta(a);
  const KdTree tb(b);
  return std::max(detail::directed_max(a, tb), detail::directed_max(b, ta));
}

}  // namespace skelmesh
