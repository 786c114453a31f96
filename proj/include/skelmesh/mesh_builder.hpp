#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "geometry.hpp"
#include "graph_init.hpp"
#include "kdtree.hpp"
#include "skeleton_optimizer.hpp"

namespace skelmesh {

/// Distance used when recomputing radii on the finished mesh.
enum class RadiusDistance { kSimplex, kVertex };

struct MeshBuildConfig {
  std::size_t max_loop = 6;
  std::size_t fill_point_threshold = 3;
  double link_threshold = 0.5;
  RadiusDistance radius_distance = RadiusDistance::kSimplex;

  void validate() const {
    if (max_loop < 4) throw std::invalid_argument("max_loop must be >= 4");
    if (fill_point_threshold < 1) throw std::invalid_argument("fill_point_threshold must be >= 1");
    if (!(link_threshold > 0.0 && link_threshold < 1.0)) {
      throw std::invalid_argument("link_threshold must lie in (0, 1)");
    }
  }
};

/// Simple chordless cycles, each listed starting from its lowest vertex.
using LoopSet = std::vector<std::vector<std::size_t>>;

namespace detail {

inline std::vector<std::vector<std::size_t>> neighbor_lists(const BinaryMatrix& a) {
  std::vector<std::vector<std::size_t>> nbrs(static_cast<std::size_t>(a.rows()));
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      if (i != j && a(i, j)) nbrs[static_cast<std::size_t>(i)].push_back(static_cast<std::size_t>(j));
    }
  }
  return nbrs;
}

}  // namespace detail

/// All 3-cliques, sorted, each once.
inline std::vector<Face> extract_triangles(const BinaryMatrix& a) {
  const auto nbrs = detail::neighbor_lists(a);
  std::vector<Face> faces;
  for (std::size_t i = 0; i < nbrs.size(); ++i) {
    for (const std::size_t j : nbrs[i]) {
      if (j <= i) continue;
      for (const std::size_t k : nbrs[j]) {
        if (k <= j) continue;
        if (a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k))) faces.push_back({i, j, k});
      }
    }
  }
  return faces;
}

namespace detail {

/// True when `loop` is the mod-2 boundary of some subset of the faces that
/// lie on the loop and its common neighbours, i.e. the loop is already
/// covered by triangles (the link of a vertex, for example).
inline bool covered_by_faces(const std::vector<std::size_t>& loop, const BinaryMatrix& a,
                             const std::vector<Face>& faces) {
  std::set<std::size_t> local(loop.begin(), loop.end());
  for (Eigen::Index v = 0; v < a.rows(); ++v) {
    std::size_t hits = 0;
    for (const std::size_t u : loop) hits += a(v, static_cast<Eigen::Index>(u)) ? 1 : 0;
    if (hits >= 2) local.insert(static_cast<std::size_t>(v));
  }
  std::map<Edge, std::size_t> edge_id;
  auto id = [&](std::size_t u, std::size_t v) {
    return edge_id.try_emplace(make_edge(u, v), edge_id.size()).first->second;
  };
  std::vector<std::set<std::size_t>> rows;
  for (const auto& f : faces) {
    if (local.count(f[0]) && local.count(f[1]) && local.count(f[2])) {
      rows.push_back({id(f[0], f[1]), id(f[0], f[2]), id(f[1], f[2])});
    }
  }
  std::set<std::size_t> target;
  for (std::size_t k = 0; k < loop.size(); ++k) target.insert(id(loop[k], loop[(k + 1) % loop.size()]));

  // Gaussian elimination over GF(2), pivot = largest edge id of each row
  auto add = [](std::set<std::size_t>& x, const std::set<std::size_t>& y) {
    for (const auto e : y) {
      if (!x.erase(e)) x.insert(e);
    }
  };
  std::map<std::size_t, std::set<std::size_t>> basis;
  for (auto& r : rows) {
    while (!r.empty()) {
      const auto it = basis.find(*r.rbegin());
      if (it == basis.end()) {
        basis.emplace(*r.rbegin(), r);
        break;
      }
      add(r, it->second);
    }
  }
  while (!target.empty()) {
    const auto it = basis.find(*target.rbegin());
    if (it == basis.end()) return false;
    add(target, it->second);
  }
  return true;
}

}  // namespace detail

/// Chordless cycles of length 4..max_loop made of edges that lie on fewer
/// than two faces, excluding cycles already covered by nearby faces.
inline LoopSet detect_loops(const BinaryMatrix& a, const std::vector<Face>& faces,
                            std::size_t max_loop) {
  // edges interior to the face set cannot bound a hole
  BinaryMatrix face_count = BinaryMatrix::Zero(a.rows(), a.cols());
  for (const auto& f : faces) {
    for (const auto& [u, v] : {std::pair{f[0], f[1]}, std::pair{f[0], f[2]}, std::pair{f[1], f[2]}}) {
      const auto i = static_cast<Eigen::Index>(u);
      const auto j = static_cast<Eigen::Index>(v);
      face_count(i, j) = face_count(j, i) = static_cast<std::uint8_t>(std::min(face_count(i, j) + 1, 2));
    }
  }
  const BinaryMatrix work = (a.array() != 0 && face_count.array() < 2).cast<std::uint8_t>();
  const auto nbrs = detail::neighbor_lists(work);
  auto adjacent = [&](std::size_t u, std::size_t v) {
    return a(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v)) != 0;
  };

  LoopSet loops;
  std::vector<std::size_t> path;
  std::vector<char> on_path(nbrs.size(), 0);

  // Extends an induced path rooted at path[0] (its minimum vertex).
  auto extend = [&](auto&& self) -> void {
    const std::size_t start = path.front();
    const std::size_t tail = path.back();
    for (const std::size_t w : nbrs[tail]) {
      if (w <= start || on_path[w]) continue;
      bool chord = false;
      for (std::size_t k = 1; k + 1 < path.size(); ++k) {
        if (adjacent(w, path[k])) {
          chord = true;
          break;
        }
      }
      if (chord) continue;
      if (path.size() >= 2 && adjacent(w, start)) {
        // closes a cycle; extending past w would make (w, start) a chord
        if (path.size() + 1 >= 4 && path[1] < w &&
            work(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(start))) {
          auto cycle = path;
          cycle.push_back(w);
          loops.push_back(std::move(cycle));
        }
        continue;
      }
      if (path.size() + 1 < max_loop) {
        path.push_back(w);
        on_path[w] = 1;
        self(self);
        on_path[w] = 0;
        path.pop_back();
      }
    }
  };
  for (std::size_t s = 0; s < nbrs.size(); ++s) {
    path.assign(1, s);
    on_path[s] = 1;
    extend(extend);
    on_path[s] = 0;
  }
  std::erase_if(loops, [&](const auto& loop) { return detail::covered_by_faces(loop, a, faces); });
  std::sort(loops.begin(), loops.end());
  return loops;
}

/// For every input point, its two nearest skeletal points as a sorted pair.
inline std::vector<Edge> two_nearest_pairs(const Points& cloud, const Points& centers) {
  const KdTree tree(centers);
  std::vector<Edge> pairs(count(cloud));
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto nb = tree.k_nearest(row(cloud, i), 2);
    pairs[i] = make_edge(nb[0].index, nb[1].index);
  }
  return pairs;
}

struct FillResult {
  std::vector<Face> faces;
  std::vector<Edge> edges;
  std::vector<std::size_t> filled_loops;  // indices into the input LoopSet
};

/// Triangulates loop by a fan from its lowest vertex.
inline void fan_triangulate(const std::vector<std::size_t>& loop, FillResult& out) {
  const auto lowest = std::min_element(loop.begin(), loop.end()) - loop.begin();
  std::vector<std::size_t> v(loop.size());
  for (std::size_t k = 0; k < loop.size(); ++k) {
    v[k] = loop[(static_cast<std::size_t>(lowest) + k) % loop.size()];
  }
  for (std::size_t k = 1; k + 1 < v.size(); ++k) {
    out.faces.push_back(make_face(v[0], v[k], v[k + 1]));
    if (k >= 2) out.edges.push_back(make_edge(v[0], v[k]));
  }
}

/// Fills a loop when the link predictor assigns a chord of the loop a
/// probability above the threshold, or when at least fill_point_threshold
/// input points have both of their two nearest skeletal points on the loop.
inline FillResult fill_holes(const LoopSet& loops, const Eigen::MatrixXd& probabilities,
                             const std::vector<Edge>& point_pairs, const MeshBuildConfig& config) {
  FillResult out;
  for (std::size_t l = 0; l < loops.size(); ++l) {
    const auto& loop = loops[l];
    const std::size_t m = loop.size();
    bool fill = false;
    for (std::size_t a = 0; a < m && !fill; ++a) {
      for (std::size_t b = a + 2; b < m; ++b) {
        if (a == 0 && b == m - 1) continue;  // consecutive around the loop
        if (probabilities(static_cast<Eigen::Index>(loop[a]), static_cast<Eigen::Index>(loop[b])) >
            config.link_threshold) {
          fill = true;
          break;
        }
      }
    }
    if (!fill) {
      const std::set<std::size_t> verts(loop.begin(), loop.end());
      std::size_t covered = 0;
      for (const auto& p : point_pairs) {
        if (verts.count(p[0]) && verts.count(p[1]) && ++covered >= config.fill_point_threshold) {
          fill = true;
          break;
        }
      }
    }
    if (fill) {
      out.filled_loops.push_back(l);
      fan_triangulate(loop, out);
    }
  }
  return out;
}

inline FillResult fill_holes(const LoopSet& loops, const Eigen::MatrixXd& probabilities,
                             const Points& cloud, const Points& centers,
                             const MeshBuildConfig& config) {
  return fill_holes(loops, probabilities, two_nearest_pairs(cloud, centers), config);
}

/// Number of faces incident to each edge of the mesh, keyed by edge.
inline std::map<Edge, std::size_t> edge_face_counts(const SkeletalMesh& mesh) {
  std::map<Edge, std::size_t> counts;
  for (const auto& e : mesh.edges) counts[e] = 0;
  for (const auto& f : mesh.faces) {
    ++counts[make_edge(f[0], f[1])];
    ++counts[make_edge(f[0], f[2])];
    ++counts[make_edge(f[1], f[2])];
  }
  return counts;
}

/// Endpoints of edges lying on fewer than two faces.
inline std::vector<std::size_t> boundary_vertices(const SkeletalMesh& mesh) {
  std::set<std::size_t> out;
  for (const auto& [e, n] : edge_face_counts(mesh)) {
    if (n <= 1) {
      out.insert(e[0]);
      out.insert(e[1]);
    }
  }
  return {out.begin(), out.end()};
}

/// Boundary-vertex pairs not yet linked whose predicted link probability
/// exceeds the threshold.
inline std::vector<Edge> refine_boundary(const SkeletalMesh& mesh,
                                         const Eigen::MatrixXd& probabilities, double threshold) {
  const auto boundary = boundary_vertices(mesh);
  std::vector<Edge> added;
  for (std::size_t a = 0; a < boundary.size(); ++a) {
    for (std::size_t b = a + 1; b < boundary.size(); ++b) {
      const Edge e{boundary[a], boundary[b]};
      if (std::binary_search(mesh.edges.begin(), mesh.edges.end(), e)) continue;
      if (probabilities(static_cast<Eigen::Index>(e[0]), static_cast<Eigen::Index>(e[1])) >
          threshold) {
        added.push_back(e);
      }
    }
  }
  return added;
}

inline Vec3 closest_point_on_segment(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return a + t * ab;
}

inline double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  return (p - closest_point_on_segment(p, a, b)).norm();
}

/// Closest point on triangle abc to p (Voronoi-region walk).
inline Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a;
  const Vec3 ac = c - a;
  const Vec3 ap = p - a;
  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  }
  const double denom = va + vb + vc;
  if (denom == 0.0) {
    // degenerate (collinear) triangle
    Vec3 best = closest_point_on_segment(p, a, b);
    for (const Vec3& q : {closest_point_on_segment(p, b, c), closest_point_on_segment(p, c, a)}) {
      if ((p - q).squaredNorm() < (p - best).squaredNorm()) best = q;
    }
    return best;
  }
  const double v = vb / denom;
  const double w = vc / denom;
  return a + v * ab + w * ac;
}

inline double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  return (p - closest_point_on_triangle(p, a, b, c)).norm();
}

/// Distance from p to the nearest vertex, edge segment, or face of the mesh.
inline double distance_to_mesh(const Vec3& p, const SkeletalMesh& mesh) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : mesh.spheres) best = std::min(best, (p - s.center).norm());
  for (const auto& e : mesh.edges) {
    best = std::min(best, point_segment_distance(p, mesh.spheres[e[0]].center,
                                                 mesh.spheres[e[1]].center));
  }
  for (const auto& f : mesh.faces) {
    best = std::min(best, point_triangle_distance(p, mesh.spheres[f[0]].center,
                                                  mesh.spheres[f[1]].center,
                                                  mesh.spheres[f[2]].center));
  }
  return best;
}

struct RadiusUpdate {
  Eigen::VectorXd distances;  // D', one per sampled point
  Eigen::VectorXd radii;      // R' = W^T D'
};

/// D'[i] is the distance from sampled point i to the nearest simplex of the
/// mesh, or to the nearest skeletal point under kVertex; R' = W^T D'.
inline RadiusUpdate recompute_radii(const SkeletalMesh& mesh, const Points& sampled,
                                    const Eigen::MatrixXd& weights,
                                    RadiusDistance mode = RadiusDistance::kSimplex) {
  if (mesh.empty()) throw std::invalid_argument("recompute_radii: empty mesh");
  if (weights.rows() != sampled.rows() ||
      static_cast<std::size_t>(weights.cols()) != mesh.vertex_count()) {
    throw std::invalid_argument("recompute_radii: weight matrix shape mismatch");
  }
  RadiusUpdate out;
  out.distances.resize(sampled.rows());
  if (mode == RadiusDistance::kVertex) {
    out.distances = closest_distances(sampled, mesh.centers());
  } else {
    for (Eigen::Index i = 0; i < sampled.rows(); ++i) {
      out.distances[i] = distance_to_mesh(sampled.row(i).transpose(), mesh);
    }
  }
  out.radii = weights.transpose() * out.distances;
  return out;
}

struct MeshBuildReport {
  std::vector<Face> initial_faces;
  LoopSet loops;
  FillResult fill;
  std::vector<Edge> boundary_edges;
  RadiusUpdate radius_update;
};

/// Initial graph -> triangles -> hole filling -> boundary refinement ->
/// radius recomputation.
inline SkeletalMesh build_mesh(const SkeletonGraph& graph, const Eigen::MatrixXd& probabilities,
                               const Points& cloud, const Points& sampled,
                               const Eigen::MatrixXd& weights,
                               const std::vector<SkeletalSphere>& spheres,
                               const MeshBuildConfig& config, MeshBuildReport* report = nullptr) {
  config.validate();
  const std::size_t n = graph.node_count();
  if (spheres.size() != n || static_cast<std::size_t>(probabilities.rows()) != n) {
    throw std::invalid_argument("build_mesh: inputs disagree on the node count");
  }
  SkeletalMesh mesh;
  mesh.spheres = spheres;
  mesh.edges = graph.edges();
  mesh.faces = extract_triangles(graph.adjacency);
  MeshBuildReport local;
  MeshBuildReport& r = report ? *report : local;
  r.initial_faces = mesh.faces;

  r.loops = detect_loops(graph.adjacency, mesh.faces, config.max_loop);
  r.fill = fill_holes(r.loops, probabilities, cloud, mesh.centers(), config);
  mesh.faces.insert(mesh.faces.end(), r.fill.faces.begin(), r.fill.faces.end());
  mesh.edges.insert(mesh.edges.end(), r.fill.edges.begin(), r.fill.edges.end());
  mesh.canonicalize();

  r.boundary_edges = refine_boundary(mesh, probabilities, config.link_threshold);
  mesh.edges.insert(mesh.edges.end(), r.boundary_edges.begin(), r.boundary_edges.end());
  mesh.canonicalize();

  r.radius_update = recompute_radii(mesh, sampled, weights, config.radius_distance);
  for (std::size_t j = 0; j < n; ++j) mesh.spheres[j].radius = r.radius_update.radii[static_cast<Eigen::Index>(j)];
  mesh.validate();
  return mesh;
}

}  // namespace skelmesh
