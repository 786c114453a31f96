#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "distances.hpp"
#include "geometry.hpp"
#include "mesh_builder.hpp"
#include "reconstruction.hpp"
#include "sampling.hpp"

namespace skelmesh {

/// Points spread over the skeletal simplices by measure: curve edges (on no
/// face) by length, faces by area, and one point per isolated vertex.
///
/// Curves and sheets share the budget in proportion to curve length times
/// mean curve-edge length against total face area, so a thin sheet and a
/// dense curve of similar extent get comparable coverage.
inline Points sample_skeleton(const SkeletalMesh& mesh, std::size_t count, std::uint64_t seed) {
  if (mesh.empty()) throw std::invalid_argument("sample_skeleton: empty mesh");
  const auto face_counts = edge_face_counts(mesh);

  std::vector<Edge> curves;
  std::vector<double> lengths;
  std::vector<bool> touched(mesh.vertex_count(), false);
  for (const auto& [e, faces] : face_counts) {
    touched[e[0]] = touched[e[1]] = true;
    if (faces != 0) continue;
    const double len = (mesh.spheres[e[1]].center - mesh.spheres[e[0]].center).norm();
    if (len > 0.0) {
      curves.push_back(e);
      lengths.push_back(len);
    }
  }
  std::vector<double> areas;
  for (const auto& f : mesh.faces) {
    const Vec3& a = mesh.spheres[f[0]].center;
    areas.push_back(0.5 * (mesh.spheres[f[1]].center - a).cross(mesh.spheres[f[2]].center - a).norm());
  }

  std::vector<Vec3> out;
  for (std::size_t v = 0; v < mesh.vertex_count(); ++v) {
    if (!touched[v]) out.push_back(mesh.spheres[v].center);
  }

  double total_len = 0.0, total_area = 0.0;
  for (const double l : lengths) total_len += l;
  for (const double a : areas) total_area += a;
  const double curve_measure = curves.empty() ? 0.0 : total_len * total_len / curves.size();
  const double budget = count > out.size() ? static_cast<double>(count - out.size()) : 0.0;

  if (curve_measure + total_area <= 0.0) {
    // every simplex is degenerate; fall back to the vertices themselves
    for (std::size_t v = 0; v < mesh.vertex_count(); ++v) {
      if (touched[v]) out.push_back(mesh.spheres[v].center);
    }
    return to_points(out);
  }

  const auto n_curve = static_cast<std::size_t>(
      std::llround(budget * curve_measure / (curve_measure + total_area)));
  const auto n_sheet = static_cast<std::size_t>(budget) - n_curve;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (n_curve > 0) {
    std::discrete_distribution<std::size_t> pick(lengths.begin(), lengths.end());
    for (std::size_t k = 0; k < n_curve; ++k) {
      const Edge& e = curves[pick(rng)];
      const double t = unit(rng);
      out.push_back((1.0 - t) * mesh.spheres[e[0]].center + t * mesh.spheres[e[1]].center);
    }
  }
  if (n_sheet > 0 && total_area > 0.0) {
    std::discrete_distribution<std::size_t> pick(areas.begin(), areas.end());
    for (std::size_t k = 0; k < n_sheet; ++k) {
      const Face& f = mesh.faces[pick(rng)];
      double s = unit(rng), t = unit(rng);
      if (s + t > 1.0) {
        s = 1.0 - s;
        t = 1.0 - t;
      }
      const Vec3& a = mesh.spheres[f[0]].center;
      out.push_back(a + s * (mesh.spheres[f[1]].center - a) + t * (mesh.spheres[f[2]].center - a));
    }
  }
  return to_points(out);
}

struct MetricReport {
  std::optional<double> cd_recon;
  std::optional<double> hd_recon;
  std::optional<double> cd_mat;
  std::optional<double> hd_mat;
};

struct EvaluationOptions {
  std::size_t sample_count = 2000;
  std::uint64_t seed = 0;
  bool recon = true;
  bool mat = true;
  ReconstructionOptions reconstruction;
};

/// Envelope samples as compared by evaluate(): reconstruct_surface() output
/// reduced to at most `sample_count` points.
inline Points evaluation_envelope(const SkeletalMesh& mesh, const EvaluationOptions& options) {
  const auto env = reconstruct_surface(mesh, options.reconstruction);
  return gather(env.points, random_subset(env.size(), options.sample_count, options.seed));
}

/// CD/HD-Recon against `gt_surface` (or the input cloud when absent) and
/// CD/HD-MAT against `ref_mat`. Chamfer is mean-mode; Hausdorff is symmetric.
inline MetricReport evaluate(const SkeletalMesh& mesh, const Points& input_cloud,
                             const Points* gt_surface, const Points* ref_mat,
                             const EvaluationOptions& options = {}) {
  mesh.validate();
  if (options.sample_count == 0) throw std::invalid_argument("evaluate: sample_count must be > 0");
  MetricReport report;
  if (options.recon) {
    const Points& ref = gt_surface != nullptr ? *gt_surface : input_cloud;
    if (ref.rows() == 0) throw std::invalid_argument("evaluate: empty reconstruction reference");
    const Points env = evaluation_envelope(mesh, options);
    report.cd_recon = chamfer_distance(env, ref, ChamferMode::kMean);
    report.hd_recon = hausdorff_distance(env, ref);
  }
  if (options.mat) {
    if (ref_mat == nullptr || ref_mat->rows() == 0) {
      throw std::invalid_argument("evaluate: MAT metrics requested without reference samples");
    }
    const Points skel = sample_skeleton(mesh, options.sample_count, options.seed);
    report.cd_mat = chamfer_distance(skel, *ref_mat, ChamferMode::kMean);
    report.hd_mat = hausdorff_distance(skel, *ref_mat);
  }
  return report;
}

}  // namespace skelmesh
