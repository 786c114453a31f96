#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "geometry.hpp"

namespace skelmesh {

struct Neighbor {
  std::size_t index = 0;
  double squared_distance = 0.0;

  double distance() const { return std::sqrt(squared_distance); }

  /// Strict order used everywhere for "nearest": distance first, then index.
  friend bool operator<(const Neighbor& a, const Neighbor& b) {
    if (a.squared_distance != b.squared_distance) {
      return a.squared_distance < b.squared_distance;
    }
    return a.index < b.index;
  }
};

/// Exact nearest-neighbor index over a fixed point set.
///
/// Results are identical to a linear scan with squared_distance(), including
/// ties, which resolve to the lowest point index. Subtrees are pruned only
/// when their split-plane bound is strictly worse than the current candidate,
/// so equal-distance points with lower indices are never skipped.
class KdTree {
 public:
  KdTree() = default;

  explicit KdTree(Points points, std::size_t leaf_size = 8)
      : points_(std::move(points)), leaf_size_(std::max<std::size_t>(leaf_size, 1)) {
    order_.resize(count(points_));
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (!order_.empty()) build(0, order_.size());
  }

  std::size_t size() const { return order_.size(); }
  bool empty() const { return order_.empty(); }
  const Points& points() const { return points_; }

  Neighbor nearest(const Vec3& q) const {
    if (empty()) throw std::invalid_argument("nearest-neighbor query on an empty point set");
    Neighbor best{0, std::numeric_limits<double>::infinity()};
    best.index = std::numeric_limits<std::size_t>::max();
    nearest_rec(0, q, best);
    return best;
  }

  /// The k nearest points in (distance, index) order. k is clamped to size().
  std::vector<Neighbor> k_nearest(const Vec3& q, std::size_t k) const {
    if (empty()) throw std::invalid_argument("nearest-neighbor query on an empty point set");
    k = std::min(k, size());
    std::vector<Neighbor> heap;
    heap.reserve(k + 1);
    if (k == 0) return heap;
    knn_rec(0, q, k, heap);
    std::sort_heap(heap.begin(), heap.end());
    return heap;
  }

 private:
  struct Node {
    std::uint32_t begin = 0;
    std::uint32_t end = 0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    int dim = 0;
    double split = 0.0;
  };

  std::int32_t build(std::size_t begin, std::size_t end) {
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back({static_cast<std::uint32_t>(begin), static_cast<std::uint32_t>(end)});
    if (end - begin <= leaf_size_) return id;

    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (std::size_t i = begin; i < end; ++i) {
      const Vec3 p = row(points_, order_[i]);
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    int dim = 0;
    (hi - lo).maxCoeff(&dim);
    if (hi[dim] == lo[dim]) return id;  // all coincident: keep as a leaf

    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                     order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::size_t a, std::size_t b) {
                       return points_(static_cast<Eigen::Index>(a), dim) <
                              points_(static_cast<Eigen::Index>(b), dim);
                     });
    const double split = points_(static_cast<Eigen::Index>(order_[mid]), dim);
    const auto left = build(begin, mid);
    const auto right = build(mid, end);
    nodes_[static_cast<std::size_t>(id)].dim = dim;
    nodes_[static_cast<std::size_t>(id)].split = split;
    nodes_[static_cast<std::size_t>(id)].left = left;
    nodes_[static_cast<std::size_t>(id)].right = right;
    return id;
  }

  void nearest_rec(std::int32_t id, const Vec3& q, Neighbor& best) const {
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    if (node.left < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const std::size_t idx = order_[i];
        const Neighbor cand{idx, squared_distance(q, row(points_, idx))};
        if (cand < best) best = cand;
      }
      return;
    }
    const double diff = q[node.dim] - node.split;
    const auto near = diff < 0.0 ? node.left : node.right;
    const auto far = diff < 0.0 ? node.right : node.left;
    nearest_rec(near, q, best);
    if (diff * diff <= best.squared_distance) nearest_rec(far, q, best);
  }

  void knn_rec(std::int32_t id, const Vec3& q, std::size_t k, std::vector<Neighbor>& heap) const {
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    if (node.left < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const std::size_t idx = order_[i];
        const Neighbor cand{idx, squared_distance(q, row(points_, idx))};
        if (heap.size() < k) {
          heap.push_back(cand);
          std::push_heap(heap.begin(), heap.end());
        } else if (cand < heap.front()) {
          std::pop_heap(heap.begin(), heap.end());
          heap.back() = cand;
          std::push_heap(heap.begin(), heap.end());
        }
      }
      return;
    }
    const double diff = q[node.dim] - node.split;
    const auto near = diff < 0.0 ? node.left : node.right;
    const auto far = diff < 0.0 ? node.right : node.left;
    knn_rec(near, q, k, heap);
    if (heap.size() < k || diff * diff <= heap.front().squared_distance) {
      knn_rec(far, q, k, heap);
    }
  }

  Points points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  std::size_t leaf_size_ = 8;
};

}  // namespace skelmesh
