#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "adam.hpp"
#include "distances.hpp"
#include "geometry.hpp"
#include "kdtree.hpp"
#include "sampling.hpp"

namespace skelmesh {

/// How the point-to-sphere residuals are accumulated. kSigned sums the raw
/// (possibly negative) residuals; kSquared sums their squares.
enum class ResidualMode { kSigned, kSquared };

struct OptimizerConfig {
  std::size_t skeletal_count = 100;
  std::size_t downsample_count = 512;
  double lambda1 = 0.3;
  double lambda2 = 0.4;
  std::size_t pretrain_iters = 500;
  std::size_t main_iters = 1500;
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double init_scale = 1e-2;
  std::uint64_t seed = 0;
  ResidualMode residual_mode = ResidualMode::kSigned;

  void validate() const {
    if (skeletal_count < 2) throw std::invalid_argument("skeletal_count must be >= 2");
    if (downsample_count < skeletal_count) {
      throw std::invalid_argument("downsample_count must be >= skeletal_count");
    }
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  }

  AdamSettings adam() const { return {learning_rate, beta1, beta2, epsilon}; }
};

struct LossBreakdown {
  double sampling = 0.0;
  double point_to_sphere = 0.0;
  double radius = 0.0;
  double total = 0.0;
};

/// Column-wise softmax over the input-point axis (rows), max-shifted.
inline Eigen::MatrixXd softmax_weights(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd w(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const double m = logits.col(j).maxCoeff();
    w.col(j) = (logits.col(j).array() - m).exp();
    w.col(j) /= w.col(j).sum();
  }
  return w;
}

/// C = W^T P'. Each center is a convex combination of the sampled points.
inline Points skeletal_points(const Eigen::MatrixXd& w, const Points& sampled) {
  if (w.rows() != sampled.rows()) {
    throw std::invalid_argument("skeletal_points: weight rows (" + std::to_string(w.rows()) +
                                ") != sampled points (" + std::to_string(sampled.rows()) + ")");
  }
  return w.transpose() * sampled;
}

/// D[i] = distance from sampled point i to its nearest center.
inline Eigen::VectorXd closest_distances(const Points& sampled, const Points& centers) {
  if (centers.rows() == 0) throw std::invalid_argument("closest_distances: no centers");
  const KdTree tree(centers);
  Eigen::VectorXd d(sampled.rows());
  for (Eigen::Index i = 0; i < sampled.rows(); ++i) {
    d[i] = tree.nearest(sampled.row(i).transpose()).distance();
  }
  return d;
}

/// R = W^T D.
inline Eigen::VectorXd radii(const Eigen::MatrixXd& w, const Eigen::VectorXd& d) {
  if (w.rows() != d.size()) {
    throw std::invalid_argument("radii: weight rows do not match distance vector length");
  }
  return w.transpose() * d;
}

inline double radius_regularizer(const Eigen::VectorXd& r) { return -r.sum(); }

namespace detail {

inline Points sphere_samples(const Points& centers, const Eigen::VectorXd& r) {
  const auto& dirs = cube_diagonal_directions();
  Points t(centers.rows() * 8, 3);
  for (Eigen::Index j = 0; j < centers.rows(); ++j) {
    for (int k = 0; k < 8; ++k) {
      t.row(j * 8 + k) = centers.row(j) + r[j] * dirs[static_cast<std::size_t>(k)].transpose();
    }
  }
  return t;
}

/// Unit vector (a - b)/|a - b|, zero when coincident.
inline Vec3 unit_diff(const Vec3& a, const Vec3& b, double dist) {
  return dist > 0.0 ? Vec3((a - b) / dist) : Vec3::Zero();
}

// Argmin choices made during one loss evaluation. Two evaluations with equal
// assignments lie on the same smooth piece of the loss.
struct Assignments {
  std::vector<std::size_t> cloud_to_sample;
  std::vector<std::size_t> sample_to_cloud;
  std::vector<std::size_t> cloud_to_center;
  std::vector<std::size_t> center_to_cloud;

  friend bool operator==(const Assignments&, const Assignments&) = default;
};

// Sum-form Chamfer between sphere samples and the cloud; accumulates
// dL/dC and dL/dR when the gradient outputs are non-null.
inline double sampling_term(const Points& centers, const Eigen::VectorXd& r, const Points& cloud,
                            const KdTree& cloud_tree, Points* g_c, Eigen::VectorXd* g_r,
                            Assignments* assign) {
  const auto& dirs = cube_diagonal_directions();
  const Points t = sphere_samples(centers, r);
  const KdTree sample_tree(t);
  double loss = 0.0;
  if (assign) {
    assign->cloud_to_sample.resize(count(cloud));
    assign->sample_to_cloud.resize(count(t));
  }
  auto accumulate = [&](std::size_t sample, const Vec3& u) {
    const auto j = static_cast<Eigen::Index>(sample / 8);
    g_c->row(j) += u.transpose();
    (*g_r)[j] += u.dot(dirs[sample % 8]);
  };
  for (std::size_t i = 0; i < count(cloud); ++i) {
    const Vec3 p = row(cloud, i);
    const Neighbor nb = sample_tree.nearest(p);
    const double dist = nb.distance();
    loss += dist;
    if (assign) assign->cloud_to_sample[i] = nb.index;
    if (g_c) accumulate(nb.index, unit_diff(row(t, nb.index), p, dist));
  }
  for (std::size_t s = 0; s < count(t); ++s) {
    const Vec3 ts = row(t, s);
    const Neighbor nb = cloud_tree.nearest(ts);
    const double dist = nb.distance();
    loss += dist;
    if (assign) assign->sample_to_cloud[s] = nb.index;
    if (g_c) accumulate(s, unit_diff(ts, row(cloud, nb.index), dist));
  }
  return loss;
}

inline double point_to_sphere_term(const Points& centers, const Eigen::VectorXd& r,
                                   const Points& cloud, const KdTree& cloud_tree,
                                   ResidualMode mode, Points* g_c, Eigen::VectorXd* g_r,
                                   Assignments* assign) {
  const KdTree center_tree(centers);
  const bool squared = mode == ResidualMode::kSquared;
  double loss = 0.0;
  if (assign) {
    assign->cloud_to_center.resize(count(cloud));
    assign->center_to_cloud.resize(count(centers));
  }
  // residual e = |x - c| - r(c); d(e^2) = 2e de.
  auto add = [&](std::size_t c, const Vec3& u, double residual) {
    loss += squared ? residual * residual : residual;
    if (!g_c) return;
    const double scale = squared ? 2.0 * residual : 1.0;
    const auto j = static_cast<Eigen::Index>(c);
    g_c->row(j) += scale * u.transpose();
    (*g_r)[j] -= scale;
  };
  for (std::size_t i = 0; i < count(cloud); ++i) {
    const Vec3 p = row(cloud, i);
    const Neighbor nb = center_tree.nearest(p);
    const double dist = nb.distance();
    if (assign) assign->cloud_to_center[i] = nb.index;
    add(nb.index, unit_diff(row(centers, nb.index), p, dist),
        dist - r[static_cast<Eigen::Index>(nb.index)]);
  }
  for (std::size_t j = 0; j < count(centers); ++j) {
    const Vec3 c = row(centers, j);
    const Neighbor nb = cloud_tree.nearest(c);
    const double dist = nb.distance();
    if (assign) assign->center_to_cloud[j] = nb.index;
    add(j, unit_diff(c, row(cloud, nb.index), dist), dist - r[static_cast<Eigen::Index>(j)]);
  }
  return loss;
}

// Unsigned Chamfer (sum form) between centers and cloud, used for warm-up.
inline double center_chamfer_term(const Points& centers, const Points& cloud,
                                  const KdTree& cloud_tree, Points* g_c) {
  const KdTree center_tree(centers);
  double loss = 0.0;
  for (std::size_t i = 0; i < count(cloud); ++i) {
    const Vec3 p = row(cloud, i);
    const Neighbor nb = center_tree.nearest(p);
    const double dist = nb.distance();
    loss += dist;
    if (g_c) {
      g_c->row(static_cast<Eigen::Index>(nb.index)) +=
          unit_diff(row(centers, nb.index), p, dist).transpose();
    }
  }
  for (std::size_t j = 0; j < count(centers); ++j) {
    const Vec3 c = row(centers, j);
    const Neighbor nb = cloud_tree.nearest(c);
    const double dist = nb.distance();
    loss += dist;
    if (g_c) {
      g_c->row(static_cast<Eigen::Index>(j)) += unit_diff(c, row(cloud, nb.index), dist).transpose();
    }
  }
  return loss;
}

}  // namespace detail

/// Sum-form Chamfer distance between the 8 surface samples of every sphere
/// and the cloud.
inline double sampling_loss(const std::vector<SkeletalSphere>& spheres, const Points& cloud) {
  if (spheres.empty()) throw std::invalid_argument("sampling_loss: no spheres");
  Points c(static_cast<Eigen::Index>(spheres.size()), 3);
  Eigen::VectorXd r(static_cast<Eigen::Index>(spheres.size()));
  for (std::size_t j = 0; j < spheres.size(); ++j) {
    c.row(static_cast<Eigen::Index>(j)) = spheres[j].center.transpose();
    r[static_cast<Eigen::Index>(j)] = spheres[j].radius;
  }
  return detail::sampling_term(c, r, cloud, KdTree(cloud), nullptr, nullptr, nullptr);
}

inline double point_to_sphere_loss(const Points& cloud, const Points& centers,
                                   const Eigen::VectorXd& r, ResidualMode mode) {
  if (centers.rows() != r.size()) {
    throw std::invalid_argument("point_to_sphere_loss: centers and radii differ in length");
  }
  if (cloud.rows() == 0 || centers.rows() == 0) {
    throw std::invalid_argument("point_to_sphere_loss: empty input");
  }
  return detail::point_to_sphere_term(centers, r, cloud, KdTree(cloud), mode, nullptr, nullptr,
                                      nullptr);
}

/// Forward quantities at one set of logits.
struct SkeletonState {
  Eigen::MatrixXd weights;    // K' x N, column-stochastic
  Points centers;             // N x 3
  Eigen::VectorXd distances;  // K', nearest-center distance of each sampled point
  Eigen::VectorXd radii;      // N
};

/// The skeletal-sphere objective for one cloud.
///
/// Gradients treat every argmin (nearest sample, nearest center, nearest
/// cloud point) as fixed at the current iterate, and treat the closest
/// distance vector D as a constant: R = W^T D is differentiated through W
/// only.
class SkeletonObjective {
 public:
  SkeletonObjective(Points cloud, Points sampled, OptimizerConfig config)
      : cloud_(std::move(cloud)),
        sampled_(std::move(sampled)),
        config_(config),
        cloud_tree_(cloud_) {
    if (cloud_.rows() == 0 || sampled_.rows() == 0) {
      throw std::invalid_argument("SkeletonObjective: empty cloud");
    }
  }

  const Points& cloud() const { return cloud_; }
  const Points& sampled() const { return sampled_; }
  const OptimizerConfig& config() const { return config_; }

  /// Forward pass. When `frozen_distances` is given it replaces D.
  SkeletonState forward(const Eigen::MatrixXd& logits,
                        const Eigen::VectorXd* frozen_distances = nullptr) const {
    if (logits.rows() != sampled_.rows()) {
      throw std::invalid_argument("logit rows must match the sampled point count");
    }
    SkeletonState s;
    s.weights = softmax_weights(logits);
    s.centers = skeletal_points(s.weights, sampled_);
    s.distances = frozen_distances ? *frozen_distances : closest_distances(sampled_, s.centers);
    s.radii = radii(s.weights, s.distances);
    return s;
  }

  LossBreakdown loss(const SkeletonState& s, Points* g_c = nullptr,
                     Eigen::VectorXd* g_r = nullptr,
                     detail::Assignments* assign = nullptr) const {
    Points gc_s, gc_p;
    Eigen::VectorXd gr_s, gr_p;
    const bool grad = g_c != nullptr;
    if (grad) {
      gc_s = gc_p = Points::Zero(s.centers.rows(), 3);
      gr_s = gr_p = Eigen::VectorXd::Zero(s.radii.size());
    }
    LossBreakdown out;
    out.sampling = detail::sampling_term(s.centers, s.radii, cloud_, cloud_tree_,
                                         grad ? &gc_s : nullptr, grad ? &gr_s : nullptr, assign);
    out.point_to_sphere = detail::point_to_sphere_term(
        s.centers, s.radii, cloud_, cloud_tree_, config_.residual_mode, grad ? &gc_p : nullptr,
        grad ? &gr_p : nullptr, assign);
    out.radius = radius_regularizer(s.radii);
    out.total = out.sampling + config_.lambda1 * out.point_to_sphere + config_.lambda2 * out.radius;
    if (grad) {
      *g_c = gc_s + config_.lambda1 * gc_p;
      *g_r = gr_s + config_.lambda1 * gr_p;
      g_r->array() -= config_.lambda2;
    }
    return out;
  }

  /// Warm-up objective: sum-form Chamfer between centers and the cloud.
  double warmup_loss(const SkeletonState& s, Points* g_c = nullptr) const {
    if (g_c) *g_c = Points::Zero(s.centers.rows(), 3);
    return detail::center_chamfer_term(s.centers, cloud_, cloud_tree_, g_c);
  }

  /// Chain rule from (dL/dC, dL/dR) back to the logits.
  Eigen::MatrixXd backprop(const SkeletonState& s, const Points& g_c,
                           const Eigen::VectorXd* g_r) const {
    Eigen::MatrixXd g_w = sampled_ * g_c.transpose();
    if (g_r) g_w.noalias() += s.distances * g_r->transpose();
    // softmax: dTheta_ij = W_ij (gW_ij - sum_k W_kj gW_kj)
    const Eigen::RowVectorXd inner = (s.weights.array() * g_w.array()).colwise().sum();
    return (s.weights.array() * (g_w.rowwise() - inner).array()).matrix();
  }

  LossBreakdown value_and_gradient(const Eigen::MatrixXd& logits, Eigen::MatrixXd& gradient) const {
    const SkeletonState s = forward(logits);
    Points g_c;
    Eigen::VectorXd g_r;
    const LossBreakdown l = loss(s, &g_c, &g_r);
    gradient = backprop(s, g_c, &g_r);
    return l;
  }

  double warmup_value_and_gradient(const Eigen::MatrixXd& logits,
                                   Eigen::MatrixXd& gradient) const {
    const SkeletonState s = forward(logits);
    Points g_c;
    const double l = warmup_loss(s, &g_c);
    gradient = backprop(s, g_c, nullptr);
    return l;
  }

 private:
  Points cloud_;
  Points sampled_;
  OptimizerConfig config_;
  KdTree cloud_tree_;
};

inline LossBreakdown total_loss(const Eigen::MatrixXd& logits, const Points& cloud,
                                const Points& sampled, const OptimizerConfig& config) {
  const SkeletonObjective obj(cloud, sampled, config);
  return obj.loss(obj.forward(logits));
}

inline Eigen::MatrixXd loss_gradient(const Eigen::MatrixXd& logits, const Points& cloud,
                                     const Points& sampled, const OptimizerConfig& config) {
  const SkeletonObjective obj(cloud, sampled, config);
  Eigen::MatrixXd g;
  obj.value_and_gradient(logits, g);
  return g;
}

/// Snapshot passed to the optimize() observer after every update.
struct IterationView {
  enum class Phase { kWarmup, kMain };
  Phase phase;
  std::size_t iteration;
  const SkeletonState& state;
};

struct OptimizationResult {
  std::vector<std::size_t> sample_indices;
  Points sampled;
  Eigen::MatrixXd logits;
  SkeletonState state;
  std::vector<SkeletalSphere> spheres;
  std::vector<double> warmup_history;
  std::vector<LossBreakdown> history;
};

inline Eigen::MatrixXd initial_logits(std::size_t rows, std::size_t cols, double scale,
                                      std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, scale);
  Eigen::MatrixXd logits(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    for (Eigen::Index i = 0; i < logits.rows(); ++i) logits(i, j) = normal(rng);
  }
  return logits;
}

/// Per-shape optimization of the combination-weight logits: a Chamfer warm-up
/// phase followed by the full skeletal objective, both with Adam.
inline OptimizationResult optimize(
    const Points& cloud, const OptimizerConfig& config,
    const std::function<void(const IterationView&)>& observer = {}) {
  config.validate();
  if (count(cloud) < std::max(config.downsample_count, kMinCloudSize)) {
    throw std::invalid_argument("optimize: cloud has " + std::to_string(cloud.rows()) +
                                " points, need at least " +
                                std::to_string(config.downsample_count));
  }
  OptimizationResult out;
  out.sample_indices = farthest_point_sample(cloud, config.downsample_count, config.seed);
  out.sampled = gather(cloud, out.sample_indices);
  const SkeletonObjective objective(cloud, out.sampled, config);

  out.logits = initial_logits(config.downsample_count, config.skeletal_count, config.init_scale,
                              config.seed);
  Eigen::MatrixXd grad;

  Adam warmup(config.adam(), out.logits.rows(), out.logits.cols());
  out.warmup_history.reserve(config.pretrain_iters);
  for (std::size_t it = 0; it < config.pretrain_iters; ++it) {
    out.warmup_history.push_back(objective.warmup_value_and_gradient(out.logits, grad));
    warmup.step(out.logits, grad);
    if (observer) observer({IterationView::Phase::kWarmup, it, objective.forward(out.logits)});
  }

  Adam main(config.adam(), out.logits.rows(), out.logits.cols());
  out.history.reserve(config.main_iters);
  for (std::size_t it = 0; it < config.main_iters; ++it) {
    out.history.push_back(objective.value_and_gradient(out.logits, grad));
    main.step(out.logits, grad);
    if (observer) observer({IterationView::Phase::kMain, it, objective.forward(out.logits)});
  }

  out.state = objective.forward(out.logits);
  out.spheres.resize(config.skeletal_count);
  for (std::size_t j = 0; j < config.skeletal_count; ++j) {
    out.spheres[j] = {row(out.state.centers, j), out.state.radii[static_cast<Eigen::Index>(j)]};
  }
  return out;
}

}  // namespace skelmesh
