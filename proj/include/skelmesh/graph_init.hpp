#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "geometry.hpp"
#include "kdtree.hpp"

namespace skelmesh {

using BinaryMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Unordered node pairs, each stored as (i, j) with i < j.
using LinkSet = std::set<Edge>;

/// Adjacency A plus known/unknown mask M.
///
/// A(i,j) = 1: known existing link. A(i,j) = 0, M(i,j) = 1: known absent.
/// M(i,j) = 0: unknown. Both matrices are symmetric with a zero diagonal.
struct SkeletonGraph {
  BinaryMatrix adjacency;
  BinaryMatrix mask;

  SkeletonGraph() = default;
  explicit SkeletonGraph(std::size_t n)
      : adjacency(BinaryMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n))),
        mask(BinaryMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n))) {}

  std::size_t node_count() const { return static_cast<std::size_t>(adjacency.rows()); }

  bool linked(std::size_t i, std::size_t j) const {
    return adjacency(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) != 0;
  }
  bool known(std::size_t i, std::size_t j) const {
    return mask(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) != 0;
  }

  void set(std::size_t i, std::size_t j, bool exists, bool is_known = true) {
    const auto a = static_cast<Eigen::Index>(i);
    const auto b = static_cast<Eigen::Index>(j);
    adjacency(a, b) = adjacency(b, a) = exists ? 1 : 0;
    mask(a, b) = mask(b, a) = is_known ? 1 : 0;
  }

  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    for (std::size_t i = 0; i < node_count(); ++i) {
      for (std::size_t j = i + 1; j < node_count(); ++j) {
        if (linked(i, j)) out.push_back({i, j});
      }
    }
    return out;
  }
};

struct PriorConfig {
  /// Number of farthest nodes marked known-absent per node. 0 means N/2.
  std::size_t k_far = 0;

  std::size_t resolve(std::size_t n) const { return k_far == 0 ? n / 2 : k_far; }
};

struct TopologyLinks {
  LinkSet existing;
  LinkSet absent;
};

/// Each node links to its nearest node and has no links to its k farthest.
inline TopologyLinks topology_prior(const Points& centers, std::size_t k) {
  const std::size_t n = count(centers);
  if (n < 2) throw std::invalid_argument("topology_prior: need at least 2 nodes");
  if (k < 1 || k >= n) {
    throw std::invalid_argument("topology_prior: k must be in [1, N), got " + std::to_string(k));
  }
  TopologyLinks links;
  std::vector<Neighbor> others;
  others.reserve(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    others.clear();
    const Vec3 c = row(centers, i);
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) others.push_back({j, squared_distance(c, row(centers, j))});
    }
    const auto nearest = *std::min_element(others.begin(), others.end());
    links.existing.insert(make_edge(i, nearest.index));
    // farthest first; equal distances keep the lower index first
    std::sort(others.begin(), others.end(), [](const Neighbor& a, const Neighbor& b) {
      if (a.squared_distance != b.squared_distance) return a.squared_distance > b.squared_distance;
      return a.index < b.index;
    });
    for (std::size_t f = 0; f < k; ++f) links.absent.insert(make_edge(i, others[f].index));
  }
  return links;
}

/// Links the two nearest skeletal points of every input point.
inline LinkSet recovery_prior(const Points& cloud, const Points& centers) {
  if (count(centers) < 2) throw std::invalid_argument("recovery_prior: need at least 2 nodes");
  const KdTree tree(centers);
  LinkSet links;
  for (std::size_t i = 0; i < count(cloud); ++i) {
    const auto nb = tree.k_nearest(row(cloud, i), 2);
    links.insert(make_edge(nb[0].index, nb[1].index));
  }
  return links;
}

/// Known-existing links from both priors, known-absent links from the
/// topology prior; existing wins when a pair is flagged both ways.
inline SkeletonGraph init_graph(const Points& cloud, const Points& centers,
                                const PriorConfig& config = {}) {
  const std::size_t n = count(centers);
  const TopologyLinks topo = topology_prior(centers, config.resolve(n));
  const LinkSet recovered = recovery_prior(cloud, centers);

  SkeletonGraph g(n);
  for (const auto& e : topo.absent) g.set(e[0], e[1], false);
  for (const auto& e : topo.existing) g.set(e[0], e[1], true);
  for (const auto& e : recovered) g.set(e[0], e[1], true);
  return g;
}

}  // namespace skelmesh
