#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "geometry.hpp"
#include "sampling.hpp"

namespace skelmesh {

inline SkeletalSphere blend(const SkeletalSphere& a, const SkeletalSphere& b, double t) {
  return {(1.0 - t) * a.center + t * b.center, (1.0 - t) * a.radius + t * b.radius};
}

inline SkeletalSphere blend(const SkeletalSphere& a, const SkeletalSphere& b,
                            const SkeletalSphere& c, double u, double v, double w) {
  return {u * a.center + v * b.center + w * c.center, u * a.radius + v * b.radius + w * c.radius};
}

/// Spheres at t = 0, 1/(steps-1), ..., 1 along the edge a-b.
inline std::vector<SkeletalSphere> interpolate_edge_spheres(const SkeletalSphere& a,
                                                            const SkeletalSphere& b,
                                                            std::size_t steps) {
  if (steps < 2) throw std::invalid_argument("interpolate_edge_spheres: steps must be >= 2");
  std::vector<SkeletalSphere> out;
  out.reserve(steps);
  const double denom = static_cast<double>(steps - 1);
  for (std::size_t k = 0; k < steps; ++k) out.push_back(blend(a, b, static_cast<double>(k) / denom));
  return out;
}

struct BarycentricWeights {
  double u, v, w;
};

/// Lattice points (i, j, g-1-i-j)/(g-1), ordered by i then j.
inline std::vector<BarycentricWeights> barycentric_lattice(std::size_t grid) {
  if (grid < 2) throw std::invalid_argument("barycentric_lattice: grid must be >= 2");
  std::vector<BarycentricWeights> out;
  const std::size_t g = grid - 1;
  const double denom = static_cast<double>(g);
  for (std::size_t i = 0; i <= g; ++i) {
    for (std::size_t j = 0; i + j <= g; ++j) {
      out.push_back({static_cast<double>(i) / denom, static_cast<double>(j) / denom,
                     static_cast<double>(g - i - j) / denom});
    }
  }
  return out;
}

/// Spheres over the barycentric lattice of triangle abc, in
/// barycentric_lattice() order.
inline std::vector<SkeletalSphere> interpolate_face_spheres(const SkeletalSphere& a,
                                                            const SkeletalSphere& b,
                                                            const SkeletalSphere& c,
                                                            std::size_t grid) {
  if (grid < 2) throw std::invalid_argument("interpolate_face_spheres: grid must be >= 2");
  std::vector<SkeletalSphere> out;
  for (const auto& bw : barycentric_lattice(grid)) out.push_back(blend(a, b, c, bw.u, bw.v, bw.w));
  return out;
}

enum class SimplexKind { kVertex, kEdge, kFace };

struct SimplexRef {
  SimplexKind kind = SimplexKind::kVertex;
  std::size_t index = 0;
};

struct ReconstructionOptions {
  std::size_t density = 64;
  std::size_t edge_steps = 8;
  std::size_t face_grid = 8;
  /// Rejection depth, as a fraction of the skeleton's bounding-box diagonal.
  double epsilon_fraction = 1e-4;
  std::uint64_t seed = 0;
};

/// Samples on the boundary of the union of interpolated spheres.
struct EnvelopeSamples {
  Points points;
  std::vector<std::size_t> sphere_of_point;  // index into `spheres`
  std::vector<SkeletalSphere> spheres;        // all interpolated spheres
  std::vector<SimplexRef> sphere_source;      // simplex each sphere came from
  double epsilon = 0.0;

  std::size_t size() const { return count(points); }
  SimplexRef source(std::size_t point) const { return sphere_source[sphere_of_point[point]]; }
};

/// Every interpolated sphere of the mesh: vertices, then edge interiors, then
/// face interiors, so that no lattice position is repeated.
inline void interpolated_spheres(const SkeletalMesh& mesh, std::size_t steps, std::size_t grid,
                                 std::vector<SkeletalSphere>& spheres,
                                 std::vector<SimplexRef>& sources) {
  if (steps < 2 || grid < 2) throw std::invalid_argument("interpolation resolution must be >= 2");
  for (std::size_t v = 0; v < mesh.spheres.size(); ++v) {
    spheres.push_back(mesh.spheres[v]);
    sources.push_back({SimplexKind::kVertex, v});
  }
  for (std::size_t e = 0; e < mesh.edges.size(); ++e) {
    const auto all = interpolate_edge_spheres(mesh.spheres[mesh.edges[e][0]],
                                              mesh.spheres[mesh.edges[e][1]], steps);
    for (std::size_t k = 1; k + 1 < all.size(); ++k) {
      spheres.push_back(all[k]);
      sources.push_back({SimplexKind::kEdge, e});
    }
  }
  const auto lattice = barycentric_lattice(grid);
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& [a, b, c] = mesh.faces[f];
    for (const auto& bw : lattice) {
      if (bw.u <= 0.0 || bw.v <= 0.0 || bw.w <= 0.0) continue;
      spheres.push_back(blend(mesh.spheres[a], mesh.spheres[b], mesh.spheres[c], bw.u, bw.v, bw.w));
      sources.push_back({SimplexKind::kFace, f});
    }
  }
}

namespace detail {

/// Uniform grid listing, per cell, the spheres whose bounding cube meets it.
class SphereGrid {
 public:
  SphereGrid(const std::vector<SkeletalSphere>& spheres, double cell) : spheres_(spheres), cell_(cell) {
    for (std::size_t s = 0; s < spheres.size(); ++s) {
      const auto lo = cell_of(spheres[s].center.array() - spheres[s].radius);
      const auto hi = cell_of(spheres[s].center.array() + spheres[s].radius);
      for (auto x = lo[0]; x <= hi[0]; ++x) {
        for (auto y = lo[1]; y <= hi[1]; ++y) {
          for (auto z = lo[2]; z <= hi[2]; ++z) cells_[key(x, y, z)].push_back(s);
        }
      }
    }
  }

  /// True when p lies deeper than eps inside any sphere other than `self`.
  bool buried(const Vec3& p, std::size_t self, double eps) const {
    const auto c = cell_of(p.array());
    const auto it = cells_.find(key(c[0], c[1], c[2]));
    if (it == cells_.end()) return false;
    for (const std::size_t s : it->second) {
      if (s == self) continue;
      const double depth = spheres_[s].radius - (p - spheres_[s].center).norm();
      if (depth > eps) return true;
    }
    return false;
  }

 private:
  std::array<std::int64_t, 3> cell_of(const Eigen::Array3d& p) const {
    return {static_cast<std::int64_t>(std::floor(p[0] / cell_)),
            static_cast<std::int64_t>(std::floor(p[1] / cell_)),
            static_cast<std::int64_t>(std::floor(p[2] / cell_))};
  }
  static std::uint64_t key(std::int64_t x, std::int64_t y, std::int64_t z) {
    const auto h = [](std::int64_t v) { return static_cast<std::uint64_t>(v) & 0x1FFFFF; };
    return (h(x) << 42) | (h(y) << 21) | h(z);
  }

  const std::vector<SkeletalSphere>& spheres_;
  double cell_;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> cells_;
};

}  // namespace detail

/// Samples `density` spiral points on each interpolated sphere and keeps
/// those not buried deeper than epsilon inside another interpolated sphere.
/// Zero-radius spheres contribute their center once.
inline EnvelopeSamples reconstruct_surface(const SkeletalMesh& mesh,
                                           const ReconstructionOptions& options = {}) {
  if (mesh.empty()) throw std::invalid_argument("reconstruct_surface: empty mesh");
  EnvelopeSamples out;
  interpolated_spheres(mesh, options.edge_steps, options.face_grid, out.spheres, out.sphere_source);

  BoundingBox box;
  double max_r = 0.0;
  for (const auto& s : out.spheres) {
    box.extend((s.center.array() - s.radius).matrix());
    box.extend((s.center.array() + s.radius).matrix());
    max_r = std::max(max_r, s.radius);
  }
  const double diag = box.diagonal();
  out.epsilon = options.epsilon_fraction * diag;

  // cell edge: about a typical radius, but never so fine that the grid
  // explodes for one large sphere
  std::vector<double> r;
  r.reserve(out.spheres.size());
  for (const auto& s : out.spheres) r.push_back(s.radius);
  std::nth_element(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(r.size() / 2), r.end());
  const double cell = std::max({2.0 * r[r.size() / 2], max_r / 4.0, diag / 256.0, 1e-9});
  const detail::SphereGrid grid(out.spheres, cell);

  const auto dirs = spiral_directions(options.density, options.seed);
  std::vector<Vec3> pts;
  for (std::size_t s = 0; s < out.spheres.size(); ++s) {
    const auto& sp = out.spheres[s];
    if (sp.radius <= 0.0) {
      if (!grid.buried(sp.center, s, out.epsilon)) {
        pts.push_back(sp.center);
        out.sphere_of_point.push_back(s);
      }
      continue;
    }
    for (const auto& d : dirs) {
      const Vec3 p = sp.center + sp.radius * d;
      if (grid.buried(p, s, out.epsilon)) continue;
      pts.push_back(p);
      out.sphere_of_point.push_back(s);
    }
  }
  out.points = to_points(pts);
  return out;
}

}  // namespace skelmesh
