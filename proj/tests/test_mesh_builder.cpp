#include <gtest/gtest.h>

#include <functional>

#include <skelmesh/link_gae.hpp>
#include <skelmesh/mesh_builder.hpp>

#include "support/oracles.hpp"

using namespace skelmesh;
using skelmesh::testing::random_cloud;
using skelmesh::testing::random_graph;

namespace {

BinaryMatrix adjacency(std::size_t n, const std::vector<Edge>& edges) {
  BinaryMatrix a = BinaryMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (const auto& [i, j] : edges) {
    a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 1;
    a(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = 1;
  }
  return a;
}

std::vector<Face> brute_force_triangles(const BinaryMatrix& a) {
  std::vector<Face> out;
  const auto n = a.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      for (Eigen::Index k = j + 1; k < n; ++k) {
        if (a(i, j) && a(j, k) && a(i, k)) {
          out.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j), static_cast<std::size_t>(k)});
        }
      }
    }
  }
  return out;
}

// Vertex sets of induced cycles: subsets where every vertex has exactly two
// neighbours inside the subset and the subset is connected.
std::set<std::vector<std::size_t>> induced_cycles(const BinaryMatrix& a, std::size_t lo, std::size_t hi) {
  const auto n = static_cast<std::size_t>(a.rows());
  std::set<std::vector<std::size_t>> out;
  std::vector<std::size_t> subset;
  std::function<void(std::size_t)> rec = [&](std::size_t next) {
    if (subset.size() >= lo) {
      bool ok = true;
      for (const auto v : subset) {
        std::size_t deg = 0;
        for (const auto w : subset) deg += a(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(w)) ? 1 : 0;
        ok = ok && deg == 2;
      }
      if (ok) {
        std::set<std::size_t> seen{subset[0]};
        std::vector<std::size_t> stack{subset[0]};
        while (!stack.empty()) {
          const auto v = stack.back();
          stack.pop_back();
          for (const auto w : subset) {
            if (a(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(w)) && seen.insert(w).second) stack.push_back(w);
          }
        }
        if (seen.size() == subset.size()) out.insert(subset);
      }
    }
    if (subset.size() == hi) return;
    for (std::size_t v = next; v < n; ++v) {
      subset.push_back(v);
      rec(v + 1);
      subset.pop_back();
    }
  };
  rec(0);
  return out;
}

// Whether some subset of the faces on the cycle's vertices and their common
// neighbours has the cycle as its mod-2 boundary, by exhaustive search.
bool covered_by_subset(const std::vector<std::size_t>& cycle_vertices, const BinaryMatrix& a,
                       const std::vector<Face>& faces) {
  // recover the cyclic order from the induced subgraph
  std::vector<std::size_t> order{cycle_vertices[0]};
  while (order.size() < cycle_vertices.size()) {
    for (const auto w : cycle_vertices) {
      if (a(static_cast<Eigen::Index>(order.back()), static_cast<Eigen::Index>(w)) &&
          (order.size() < 2 || w != order[order.size() - 2]) && std::find(order.begin(), order.end(), w) == order.end()) {
        order.push_back(w);
        break;
      }
    }
  }
  std::set<Edge> target;
  for (std::size_t k = 0; k < order.size(); ++k) target.insert(make_edge(order[k], order[(k + 1) % order.size()]));
  std::set<std::size_t> local(cycle_vertices.begin(), cycle_vertices.end());
  for (Eigen::Index v = 0; v < a.rows(); ++v) {
    int hits = 0;
    for (const auto u : cycle_vertices) hits += a(v, static_cast<Eigen::Index>(u)) ? 1 : 0;
    if (hits >= 2) local.insert(static_cast<std::size_t>(v));
  }
  std::vector<Face> near;
  for (const auto& f : faces) {
    if (local.count(f[0]) && local.count(f[1]) && local.count(f[2])) near.push_back(f);
  }
  EXPECT_LE(near.size(), 20u);
  for (std::uint32_t mask = 1; mask < (1u << near.size()); ++mask) {
    std::map<Edge, int> parity;
    for (std::size_t k = 0; k < near.size(); ++k) {
      if (!(mask >> k & 1u)) continue;
      const auto& f = near[k];
      for (const Edge e : {make_edge(f[0], f[1]), make_edge(f[0], f[2]), make_edge(f[1], f[2])}) parity[e] ^= 1;
    }
    std::set<Edge> boundary;
    for (const auto& [e, odd] : parity) {
      if (odd) boundary.insert(e);
    }
    if (boundary == target) return true;
  }
  return false;
}

bool on_fewer_than_two_faces(const std::vector<std::size_t>& cycle_vertices, const BinaryMatrix& a,
                             const std::vector<Face>& faces) {
  for (const auto u : cycle_vertices) {
    for (const auto v : cycle_vertices) {
      if (u >= v || !a(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v))) continue;
      int n = 0;
      for (const auto& f : faces) {
        n += std::count(f.begin(), f.end(), u) && std::count(f.begin(), f.end(), v) ? 1 : 0;
      }
      if (n >= 2) return false;
    }
  }
  return true;
}

// 4x4 vertex grid, vertex (r, c) = 4r + c; cells listed in `triangulated`
// get the diagonal from their top-left corner.
BinaryMatrix grid(const std::set<std::size_t>& triangulated = {}) {
  std::vector<Edge> edges;
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 4; ++c) {
      const std::size_t v = 4 * r + c;
      if (c + 1 < 4) edges.push_back({v, v + 1});
      if (r + 1 < 4) edges.push_back({v, v + 4});
      if (r + 1 < 4 && c + 1 < 4 && triangulated.count(3 * r + c)) edges.push_back({v, v + 5});
    }
  }
  return adjacency(16, edges);
}

std::vector<SkeletalSphere> spheres_at(const Points& c, double r = 0.1) {
  std::vector<SkeletalSphere> s;
  for (std::size_t i = 0; i < count(c); ++i) s.push_back({row(c, i), r});
  return s;
}

}  // namespace

TEST(ExtractTriangles, Examples) {
  EXPECT_EQ(extract_triangles(adjacency(3, {{0, 1}, {1, 2}, {0, 2}})), (std::vector<Face>{{0, 1, 2}}));
  EXPECT_TRUE(extract_triangles(adjacency(4, {{0, 1}, {1, 2}, {2, 3}, {0, 3}})).empty());
}

TEST(ExtractTriangles, MatchesBruteForce) {
  for (const std::size_t n : {5, 30, 200}) {
    const BinaryMatrix a = random_graph(n, n == 200 ? 0.05 : 0.3, n).adjacency;
    EXPECT_EQ(extract_triangles(a), brute_force_triangles(a)) << n;
  }
}

TEST(DetectLoops, SquareAndTriangulatedPatch) {
  const BinaryMatrix square = adjacency(4, {{0, 1}, {1, 2}, {2, 3}, {0, 3}});
  EXPECT_EQ(detect_loops(square, {}, 6), (LoopSet{{0, 1, 2, 3}}));

  const BinaryMatrix patch = grid({0, 1, 2, 3, 4, 5, 6, 7, 8});
  EXPECT_TRUE(detect_loops(patch, extract_triangles(patch), 6).empty());
}

TEST(DetectLoops, GridWithOneUnfilledCell) {
  const BinaryMatrix a = grid({0, 1, 2, 3, 5, 6, 7, 8});
  EXPECT_EQ(detect_loops(a, extract_triangles(a), 6), (LoopSet{{5, 6, 10, 9}}));

  const BinaryMatrix row = grid({0, 1, 2, 6, 7, 8});
  EXPECT_EQ(detect_loops(row, extract_triangles(row), 6), (LoopSet{{4, 5, 9, 8}, {5, 6, 10, 9}, {6, 7, 11, 10}}));
}

TEST(DetectLoops, WheelRimIsCoveredByItsHub) {
  std::vector<Edge> rim{{1, 2}, {2, 3}, {3, 4}, {4, 5}, {1, 5}};
  EXPECT_EQ(detect_loops(adjacency(6, rim), {}, 6), (LoopSet{{1, 2, 3, 4, 5}}));
  auto wheel = rim;
  for (std::size_t v = 1; v <= 5; ++v) wheel.push_back({0, v});
  const BinaryMatrix a = adjacency(6, wheel);
  EXPECT_TRUE(detect_loops(a, extract_triangles(a), 6).empty());
  EXPECT_EQ(detect_loops(a, {}, 6), (LoopSet{{1, 2, 3, 4, 5}}));
}

TEST(DetectLoops, MatchesInducedCycleEnumeration) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const BinaryMatrix a = random_graph(11, 0.3, seed).adjacency;
    const auto faces = brute_force_triangles(a);
    const LoopSet loops = detect_loops(a, faces, 6);
    std::set<std::vector<std::size_t>> got;
    for (const auto& loop : loops) {
      ASSERT_GE(loop.size(), 4u);
      ASSERT_LE(loop.size(), 6u);
      EXPECT_EQ(loop.front(), *std::min_element(loop.begin(), loop.end()));
      for (std::size_t k = 0; k < loop.size(); ++k) {
        EXPECT_TRUE(a(static_cast<Eigen::Index>(loop[k]), static_cast<Eigen::Index>(loop[(k + 1) % loop.size()])));
      }
      auto sorted = loop;
      std::sort(sorted.begin(), sorted.end());
      EXPECT_TRUE(got.insert(sorted).second) << "duplicate loop";
    }
    std::set<std::vector<std::size_t>> expected;
    for (const auto& cycle : induced_cycles(a, 4, 6)) {
      if (!covered_by_subset(cycle, a, faces) && on_fewer_than_two_faces(cycle, a, faces)) expected.insert(cycle);
    }
    EXPECT_EQ(got, expected) << "seed " << seed;
  }
}

TEST(FillHoles, GaeChordRule) {
  const LoopSet loops{{0, 1, 2, 3}};
  Eigen::MatrixXd p = Eigen::MatrixXd::Constant(4, 4, 0.1);
  p(0, 2) = p(2, 0) = 0.9;
  const FillResult r = fill_holes(loops, p, std::vector<Edge>{}, MeshBuildConfig{});
  EXPECT_EQ(r.faces, (std::vector<Face>{{0, 1, 2}, {0, 2, 3}}));
  EXPECT_EQ(r.edges, (std::vector<Edge>{{0, 2}}));
  EXPECT_EQ(r.filled_loops, (std::vector<std::size_t>{0}));
}

TEST(FillHoles, CoverageRule) {
  const LoopSet loops{{0, 1, 2, 3}};
  const Eigen::MatrixXd p = Eigen::MatrixXd::Constant(5, 5, 0.1);
  EXPECT_TRUE(fill_holes(loops, p, std::vector<Edge>{}, MeshBuildConfig{}).faces.empty());

  // centres on a unit square plus one far away; five points inside the square
  const Points centers = to_points({{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {5, 5, 0}});
  const Points cloud = to_points({{0.1, 0.2, 0}, {0.3, 0.1, 0}, {0.8, 0.3, 0}, {0.6, 0.9, 0}, {0.2, 0.7, 0}});
  const FillResult r = fill_holes(loops, p, cloud, centers, MeshBuildConfig{});
  EXPECT_EQ(r.faces.size(), 2u);

  MeshBuildConfig strict;
  strict.fill_point_threshold = 6;
  EXPECT_TRUE(fill_holes(loops, p, cloud, centers, strict).faces.empty());
}

TEST(FillHoles, FanFromLowestVertex) {
  const LoopSet loops{{2, 5, 7, 4, 3}};
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(8, 8);
  p(5, 4) = p(4, 5) = 0.8;
  const FillResult r = fill_holes(loops, p, std::vector<Edge>{}, MeshBuildConfig{});
  EXPECT_EQ(r.faces, (std::vector<Face>{{2, 5, 7}, {2, 4, 7}, {2, 3, 4}}));
  EXPECT_EQ(r.edges, (std::vector<Edge>{{2, 7}, {2, 4}}));
}

TEST(RefineBoundary, Examples) {
  SkeletalMesh closed;
  closed.spheres = spheres_at(random_cloud(4, 1));
  closed.faces = {{0, 1, 2}, {0, 1, 3}, {0, 2, 3}, {1, 2, 3}};
  closed.canonicalize();
  EXPECT_TRUE(boundary_vertices(closed).empty());
  EXPECT_TRUE(refine_boundary(closed, Eigen::MatrixXd::Constant(4, 4, 0.9), 0.5).empty());

  SkeletalMesh tri;
  tri.spheres = spheres_at(random_cloud(5, 2));
  tri.faces = {{0, 1, 2}};
  tri.edges = {{3, 4}};
  tri.canonicalize();
  EXPECT_EQ(boundary_vertices(tri), (std::vector<std::size_t>{0, 1, 2, 3, 4}));
  Eigen::MatrixXd p = Eigen::MatrixXd::Constant(5, 5, 0.2);
  p(2, 3) = p(3, 2) = 0.9;
  p(0, 1) = p(1, 0) = 0.9;  // already linked
  EXPECT_EQ(refine_boundary(tri, p, 0.5), (std::vector<Edge>{{2, 3}}));

  SkeletalMesh chain;
  chain.spheres = spheres_at(random_cloud(4, 3));
  chain.edges = {{0, 1}, {1, 2}, {2, 3}};
  EXPECT_EQ(boundary_vertices(chain), (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(SimplexDistance, SegmentAndTriangle) {
  const Vec3 a(0, 0, 0), b(2, 0, 0), c(0, 2, 0);
  EXPECT_DOUBLE_EQ(point_segment_distance(Vec3(1, 1, 0), a, b), 1.0);
  EXPECT_DOUBLE_EQ(point_segment_distance(Vec3(3, 0, 0), a, b), 1.0);
  EXPECT_DOUBLE_EQ(point_segment_distance(Vec3(1, 1, 0), a, a), std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(point_triangle_distance(Vec3(0.5, 0.5, 3), a, b, c), 3.0);
  EXPECT_DOUBLE_EQ(point_triangle_distance(Vec3(-1, -1, 0), a, b, c), std::sqrt(2.0));
  EXPECT_NEAR(point_triangle_distance(Vec3(2, 2, 0), a, b, c), std::sqrt(2.0), 1e-15);
  EXPECT_DOUBLE_EQ(point_triangle_distance(Vec3(1, 1, 1), a, b, Vec3(4, 0, 0)), std::sqrt(2.0));
}

TEST(SimplexDistance, TriangleMatchesDenseBarycentricScan) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 50; ++t) {
    const Vec3 a(u(rng), u(rng), u(rng)), b(u(rng), u(rng), u(rng)), c(u(rng), u(rng), u(rng));
    const Vec3 p(2 * u(rng), 2 * u(rng), 2 * u(rng));
    const double got = point_triangle_distance(p, a, b, c);
    double scan = std::numeric_limits<double>::infinity();
    const int steps = 400;
    for (int i = 0; i <= steps; ++i) {
      for (int j = 0; i + j <= steps; ++j) {
        const double s = static_cast<double>(i) / steps, r = static_cast<double>(j) / steps;
        scan = std::min(scan, (p - (a + s * (b - a) + r * (c - a))).norm());
      }
    }
    EXPECT_LE(got, scan + 1e-12);
    EXPECT_GE(got, scan - 5e-3 * (b - a).norm() - 5e-3 * (c - a).norm());
  }
}

TEST(RecomputeRadii, SingleVertexMatchesClosestDistances) {
  const Points sampled = random_cloud(30, 4);
  SkeletalMesh mesh;
  mesh.spheres = {{Vec3(0.1, 0.2, 0.3), 0.0}};
  const Eigen::MatrixXd w = Eigen::MatrixXd::Constant(30, 1, 1.0 / 30.0);
  const RadiusUpdate r = recompute_radii(mesh, sampled, w);
  Eigen::VectorXd expected(30);
  for (Eigen::Index i = 0; i < 30; ++i) expected[i] = (sampled.row(i).transpose() - mesh.spheres[0].center).norm();
  EXPECT_LT((r.distances - expected).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_NEAR(r.radii[0], expected.mean(), 1e-15);
}

TEST(RecomputeRadii, PerpendicularToEdge) {
  SkeletalMesh mesh;
  mesh.spheres = {{Vec3(0, 0, 0), 0.0}, {Vec3(2, 0, 0), 0.0}};
  mesh.edges = {{0, 1}};
  const RadiusUpdate r = recompute_radii(mesh, to_points({{1, 0.5, 0}}), Eigen::MatrixXd::Constant(1, 2, 1.0));
  EXPECT_DOUBLE_EQ(r.distances[0], 0.5);
  EXPECT_LE(r.distances[0], std::sqrt(1.25));
  EXPECT_THROW(recompute_radii(SkeletalMesh{}, to_points({{0, 0, 0}}), Eigen::MatrixXd(1, 0)),
               std::invalid_argument);
}

TEST(RecomputeRadii, BruteForceAndMonotone) {
  const Points sampled = random_cloud(80, 6);
  const Points centers = random_cloud(10, 7);
  SkeletalMesh mesh;
  mesh.spheres = spheres_at(centers);
  mesh.edges = random_graph(10, 0.3, 8).edges();
  mesh.faces = extract_triangles(random_graph(10, 0.3, 8).adjacency);
  mesh.canonicalize();
  const Eigen::MatrixXd w = softmax_weights(initial_logits(80, 10, 1.0, 9));
  const RadiusUpdate r = recompute_radii(mesh, sampled, w);

  const Eigen::VectorXd d_vertex = closest_distances(sampled, centers);
  for (Eigen::Index i = 0; i < 80; ++i) {
    const Vec3 p = sampled.row(i).transpose();
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < 10; ++v) best = std::min(best, (p - row(centers, v)).norm());
    for (const auto& e : mesh.edges) best = std::min(best, point_segment_distance(p, row(centers, e[0]), row(centers, e[1])));
    for (const auto& f : mesh.faces) {
      best = std::min(best, point_triangle_distance(p, row(centers, f[0]), row(centers, f[1]), row(centers, f[2])));
    }
    EXPECT_DOUBLE_EQ(r.distances[i], best);
    EXPECT_LE(r.distances[i], d_vertex[i]);
  }
  const Eigen::VectorXd r_vertex = radii(w, d_vertex);
  EXPECT_TRUE((r.radii.array() <= r_vertex.array() + 1e-15).all());

  const RadiusUpdate by_vertex = recompute_radii(mesh, sampled, w, RadiusDistance::kVertex);
  EXPECT_EQ(by_vertex.distances, d_vertex);
  EXPECT_EQ(by_vertex.radii, r_vertex);
}

TEST(BuildMesh, NoPredictionsKeepsInitialGraph) {
  // a triangle plus a pendant vertex, all probabilities zero, no coverage
  SkeletonGraph g(4);
  g.set(0, 1, true);
  g.set(1, 2, true);
  g.set(0, 2, true);
  g.set(2, 3, true);
  g.set(0, 3, false);
  const Points centers = to_points({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 3, 0}});
  const Points sampled = random_cloud(20, 1);
  const Eigen::MatrixXd w = softmax_weights(initial_logits(20, 4, 1.0, 2));
  MeshBuildReport report;
  const SkeletalMesh mesh = build_mesh(g, Eigen::MatrixXd::Zero(4, 4), sampled, sampled, w,
                                       spheres_at(centers), MeshBuildConfig{}, &report);
  EXPECT_EQ(mesh.edges, (std::vector<Edge>{{0, 1}, {0, 2}, {1, 2}, {2, 3}}));
  EXPECT_EQ(mesh.faces, (std::vector<Face>{{0, 1, 2}}));
  EXPECT_TRUE(report.boundary_edges.empty());
  EXPECT_TRUE(report.fill.faces.empty());
  EXPECT_EQ(mesh.radii(), recompute_radii(mesh, sampled, w).radii);
  EXPECT_NO_THROW(mesh.validate());
}

TEST(BuildMesh, MonotoneAndValid) {
  const SkeletonGraph g = random_graph(16, 0.2, 3);
  const Points centers = random_cloud(16, 4);
  const Points cloud = random_cloud(300, 5);
  const Points sampled = cloud.topRows(40);
  const Eigen::MatrixXd w = softmax_weights(initial_logits(40, 16, 1.0, 6));
  const Eigen::MatrixXd p = link_probabilities(2.0 * random_cloud(16, 7));
  MeshBuildReport report;
  const SkeletalMesh mesh = build_mesh(g, p, cloud, sampled, w, spheres_at(centers), MeshBuildConfig{}, &report);
  EXPECT_NO_THROW(mesh.validate());
  for (const auto& e : g.edges()) EXPECT_TRUE(std::binary_search(mesh.edges.begin(), mesh.edges.end(), e));
  for (const auto& f : report.initial_faces) EXPECT_TRUE(std::binary_search(mesh.faces.begin(), mesh.faces.end(), f));
  for (std::size_t j = 0; j < 16; ++j) EXPECT_GE(mesh.spheres[j].radius, 0.0);
}
