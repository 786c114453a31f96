#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace skelmesh {

using Vec3 = Eigen::Vector3d;

/// Row-major N x 3 coordinate block. Row i is point i.
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

using Edge = std::array<std::size_t, 2>;
using Face = std::array<std::size_t, 3>;

inline double squared_distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

inline Vec3 row(const Points& pts, std::size_t i) {
  return pts.row(static_cast<Eigen::Index>(i)).transpose();
}

inline std::size_t count(const Points& pts) {
  return static_cast<std::size_t>(pts.rows());
}

inline Points to_points(const std::vector<Vec3>& v) {
  Points out(static_cast<Eigen::Index>(v.size()), 3);
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = v[i].transpose();
  }
  return out;
}

inline bool all_finite(const Points& pts) { return pts.allFinite(); }

/// Input surface samples.
struct PointCloud {
  Points points;
  std::string source_id;

  PointCloud() = default;
  explicit PointCloud(Points p, std::string id = {})
      : points(std::move(p)), source_id(std::move(id)) {}

  std::size_t size() const { return count(points); }
  Vec3 operator[](std::size_t i) const { return row(points, i); }

  /// Throws std::invalid_argument on non-finite coordinates.
  void validate() const {
    if (!all_finite(points)) {
      throw std::invalid_argument("point cloud '" + source_id +
                                  "' contains non-finite coordinates");
    }
  }
};

/// Minimum cloud size accepted by the pipeline.
inline constexpr std::size_t kMinCloudSize = 4;

struct SkeletalSphere {
  Vec3 center = Vec3::Zero();
  double radius = 0.0;

  friend bool operator==(const SkeletalSphere&, const SkeletalSphere&) = default;
};

inline Edge make_edge(std::size_t a, std::size_t b) {
  return a < b ? Edge{a, b} : Edge{b, a};
}

inline Face make_face(std::size_t a, std::size_t b, std::size_t c) {
  Face f{a, b, c};
  std::sort(f.begin(), f.end());
  return f;
}

/// Skeletal points with radii, plus the edge and triangle connectivity.
///
/// Edges are stored as sorted pairs and faces as sorted triples. Use
/// canonicalize() after editing by hand.
struct SkeletalMesh {
  std::vector<SkeletalSphere> spheres;
  std::vector<Edge> edges;
  std::vector<Face> faces;

  std::size_t vertex_count() const { return spheres.size(); }
  bool empty() const { return spheres.empty(); }

  Points centers() const {
    Points c(static_cast<Eigen::Index>(spheres.size()), 3);
    for (std::size_t i = 0; i < spheres.size(); ++i) {
      c.row(static_cast<Eigen::Index>(i)) = spheres[i].center.transpose();
    }
    return c;
  }

  Eigen::VectorXd radii() const {
    Eigen::VectorXd r(static_cast<Eigen::Index>(spheres.size()));
    for (std::size_t i = 0; i < spheres.size(); ++i) {
      r[static_cast<Eigen::Index>(i)] = spheres[i].radius;
    }
    return r;
  }

  /// Sorts every index tuple and removes duplicates; adds any face edges
  /// missing from the edge list.
  void canonicalize() {
    for (auto& f : faces) f = make_face(f[0], f[1], f[2]);
    std::sort(faces.begin(), faces.end());
    faces.erase(std::unique(faces.begin(), faces.end()), faces.end());
    for (auto& e : edges) e = make_edge(e[0], e[1]);
    for (const auto& f : faces) {
      edges.push_back({f[0], f[1]});
      edges.push_back({f[0], f[2]});
      edges.push_back({f[1], f[2]});
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  }

  /// Throws std::invalid_argument describing the first violated invariant.
  void validate() const {
    const std::size_t n = spheres.size();
    for (std::size_t i = 0; i < n; ++i) {
      const auto& s = spheres[i];
      if (!s.center.allFinite() || !std::isfinite(s.radius) || s.radius < 0.0) {
        throw std::invalid_argument("sphere " + std::to_string(i) +
                                    " has a non-finite center or invalid radius");
      }
    }
    for (std::size_t k = 0; k < edges.size(); ++k) {
      const auto& e = edges[k];
      if (e[0] >= n || e[1] >= n) {
        throw std::invalid_argument("edge " + std::to_string(k) + " index out of range");
      }
      if (e[0] >= e[1]) {
        throw std::invalid_argument("edge " + std::to_string(k) +
                                    " is a self-loop or not stored as i < j");
      }
      if (k > 0 && !(edges[k - 1] < e)) {
        throw std::invalid_argument("edge list is not sorted and deduplicated");
      }
    }
    for (std::size_t k = 0; k < faces.size(); ++k) {
      const auto& f = faces[k];
      if (f[0] >= n || f[1] >= n || f[2] >= n) {
        throw std::invalid_argument("face " + std::to_string(k) + " index out of range");
      }
      if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) {
        throw std::invalid_argument("face " + std::to_string(k) + " is degenerate");
      }
      for (const Edge e : {make_edge(f[0], f[1]), make_edge(f[0], f[2]),
                           make_edge(f[1], f[2])}) {
        if (!std::binary_search(edges.begin(), edges.end(), e)) {
          throw std::invalid_argument("face " + std::to_string(k) + " references missing edge (" +
                                      std::to_string(e[0]) + "," + std::to_string(e[1]) + ")");
        }
      }
    }
  }
};

struct BoundingBox {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void extend(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  bool contains(const Vec3& p, double tol = 0.0) const {
    return (p.array() >= lo.array() - tol).all() && (p.array() <= hi.array() + tol).all();
  }
  double diagonal() const { return (hi - lo).norm(); }
};

inline BoundingBox bounding_box(const Points& pts) {
  BoundingBox box;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) box.extend(pts.row(i).transpose());
  return box;
}

}  // namespace skelmesh
