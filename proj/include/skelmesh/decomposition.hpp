#pragma once

#include <numeric>
#include <vector>

#include "geometry.hpp"
#include "mesh_builder.hpp"

namespace skelmesh {

enum class PartKind { kCurve, kSheet };

inline const char* to_string(PartKind k) { return k == PartKind::kCurve ? "curve" : "sheet"; }

/// Per-vertex part labels. Junction vertices carry kNoPart.
struct DecompositionLabels {
  static constexpr std::size_t kNoPart = static_cast<std::size_t>(-1);

  std::vector<std::size_t> part_of_vertex;
  std::vector<bool> junction;
  std::vector<PartKind> part_kind;

  std::size_t part_count() const { return part_kind.size(); }
  std::size_t count_kind(PartKind k) const {
    return static_cast<std::size_t>(std::count(part_kind.begin(), part_kind.end(), k));
  }
};

/// Splits the skeletal mesh into curve parts (edges on no face) and sheet
/// parts (edges on at least one face).
///
/// A vertex is a junction when it touches both edge kinds, touches an edge
/// shared by three or more faces, or has three or more curve edges. Parts are
/// connected components of same-kind edges once junctions are removed; a
/// vertex left without edges forms its own part. Part ids follow the lowest
/// vertex index of each part.
inline DecompositionLabels decompose(const SkeletalMesh& mesh) {
  const std::size_t n = mesh.vertex_count();
  const auto face_counts = edge_face_counts(mesh);

  std::vector<std::size_t> curve_deg(n, 0), sheet_deg(n, 0);
  std::vector<bool> nonmanifold(n, false);
  for (const auto& [e, faces] : face_counts) {
    auto& deg = faces == 0 ? curve_deg : sheet_deg;
    ++deg[e[0]];
    ++deg[e[1]];
    if (faces >= 3) nonmanifold[e[0]] = nonmanifold[e[1]] = true;
  }

  DecompositionLabels out;
  out.junction.resize(n);
  for (std::size_t v = 0; v < n; ++v) {
    out.junction[v] = (curve_deg[v] > 0 && sheet_deg[v] > 0) || nonmanifold[v] || curve_deg[v] >= 3;
  }

  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };
  for (const auto& [e, faces] : face_counts) {
    if (out.junction[e[0]] || out.junction[e[1]]) continue;
    const auto a = find(e[0]);
    const auto b = find(e[1]);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }

  out.part_of_vertex.assign(n, DecompositionLabels::kNoPart);
  std::vector<std::size_t> part_of_root(n, DecompositionLabels::kNoPart);
  for (std::size_t v = 0; v < n; ++v) {
    if (out.junction[v]) continue;
    const auto root = find(v);
    if (part_of_root[root] == DecompositionLabels::kNoPart) {
      part_of_root[root] = out.part_kind.size();
      out.part_kind.push_back(sheet_deg[v] > 0 ? PartKind::kSheet : PartKind::kCurve);
    }
    out.part_of_vertex[v] = part_of_root[root];
  }
  return out;
}

}  // namespace skelmesh
