#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include "geometry.hpp"

namespace skelmesh {

/// Greedy farthest point sampling.
///
/// The first pick is drawn from the seed; each later pick maximizes the
/// distance to the already-picked set, ties resolving to the lowest index.
inline std::vector<std::size_t> farthest_point_sample(const Points& cloud, std::size_t n,
                                                      std::uint64_t seed) {
  const std::size_t size = count(cloud);
  if (n > size) {
    throw std::invalid_argument("farthest_point_sample: requested " + std::to_string(n) +
                                " points from a cloud of " + std::to_string(size));
  }
  std::vector<std::size_t> picked;
  if (n == 0) return picked;
  picked.reserve(n);

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> first(0, size - 1);
  std::size_t current = first(rng);

  std::vector<double> min_d2(size, std::numeric_limits<double>::infinity());
  std::vector<char> taken(size, 0);
  for (std::size_t k = 0; k < n; ++k) {
    picked.push_back(current);
    taken[current] = 1;
    const Vec3 c = row(cloud, current);
    std::size_t next = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < size; ++i) {
      if (taken[i]) continue;
      min_d2[i] = std::min(min_d2[i], squared_distance(c, row(cloud, i)));
      if (min_d2[i] > best) {
        best = min_d2[i];
        next = i;
      }
    }
    current = next;
  }
  return picked;
}

inline Points gather(const Points& cloud, const std::vector<std::size_t>& indices) {
  Points out(static_cast<Eigen::Index>(indices.size()), 3);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = cloud.row(static_cast<Eigen::Index>(indices[i]));
  }
  return out;
}

/// The eight diagonal unit directions (+-eta, +-eta, +-eta), 3 eta^2 = 1.
inline const std::array<Vec3, 8>& cube_diagonal_directions() {
  static const std::array<Vec3, 8> dirs = [] {
    const double eta = 1.0 / std::sqrt(3.0);
    std::array<Vec3, 8> d;
    for (int k = 0; k < 8; ++k) {
      d[static_cast<std::size_t>(k)] = Vec3((k & 1) ? -eta : eta, (k & 2) ? -eta : eta,
                                            (k & 4) ? -eta : eta);
    }
    return d;
  }();
  return dirs;
}

inline std::array<Vec3, 8> sample_sphere_surface(const SkeletalSphere& s) {
  if (!(s.radius >= 0.0)) throw std::invalid_argument("sample_sphere_surface: negative radius");
  std::array<Vec3, 8> out;
  const auto& dirs = cube_diagonal_directions();
  for (std::size_t k = 0; k < 8; ++k) out[k] = s.center + s.radius * dirs[k];
  return out;
}

/// Quasi-uniform unit directions on a golden-angle spiral. The seed rotates
/// the spiral about the z axis so repeated calls with one seed agree.
inline std::vector<Vec3> spiral_directions(std::size_t n, std::uint64_t seed = 0) {
  std::vector<Vec3> out;
  out.reserve(n);
  if (n == 0) return out;
  if (n == 1) {
    out.emplace_back(0.0, 0.0, 1.0);
    return out;
  }
  std::mt19937_64 rng(seed);
  const double phase = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (std::size_t i = 0; i < n; ++i) {
    const double z = 1.0 - (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(n);
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double theta = phase + golden * static_cast<double>(i);
    out.emplace_back(rho * std::cos(theta), rho * std::sin(theta), z);
  }
  return out;
}

/// Seeded subset of `n` distinct indices in [0, size), returned in ascending
/// order. Returns all indices when n >= size.
inline std::vector<std::size_t> random_subset(std::size_t size, std::size_t n,
                                              std::uint64_t seed) {
  std::vector<std::size_t> idx(size);
  for (std::size_t i = 0; i < size; ++i) idx[i] = i;
  if (n >= size) return idx;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, size - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace skelmesh
