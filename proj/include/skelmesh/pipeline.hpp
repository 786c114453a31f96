#pragma once

#include <cstdint>
#include <vector>

#include "geometry.hpp"
#include "graph_init.hpp"
#include "io.hpp"
#include "link_gae.hpp"
#include "mesh_builder.hpp"
#include "sampling.hpp"
#include "skeleton_optimizer.hpp"

namespace skelmesh {

/// Clouds above this size are reduced by farthest point sampling first.
inline constexpr std::size_t kMaxInputPoints = 100000;

struct SkeletonizeResult {
  Points cloud;  // input after the size guard
  OptimizationResult optimization;
  SkeletonGraph graph;
  GAEResult gae;
  Eigen::MatrixXd probabilities;
  MeshBuildReport build;
  SkeletalMesh mesh;
};

/// Point cloud to skeletal mesh: sphere optimization, prior graph, link
/// prediction, then mesh construction.
inline SkeletonizeResult skeletonize(const Points& input, const RunConfig& config) {
  config.validate();
  SkeletonizeResult out;
  out.cloud = count(input) > kMaxInputPoints
                  ? gather(input, farthest_point_sample(input, kMaxInputPoints, config.optimizer.seed))
                  : input;

  out.optimization = optimize(out.cloud, config.optimizer);
  const auto& opt = out.optimization;
  out.graph = init_graph(out.cloud, opt.state.centers, config.prior);

  const Eigen::MatrixXd features = standardize_columns(
      node_features(opt.sampled, opt.state.weights, opt.state.centers, opt.state.radii));
  out.gae = train(out.graph, features, config.gae);
  out.probabilities = link_probabilities(out.gae.latent);

  out.mesh = build_mesh(out.graph, out.probabilities, out.cloud, opt.sampled, opt.state.weights,
                        opt.spheres, config.mesh, &out.build);
  return out;
}

}  // namespace skelmesh
