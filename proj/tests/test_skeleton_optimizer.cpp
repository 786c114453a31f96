#include <gtest/gtest.h>

#include <cmath>

#include <skelmesh/skeleton_optimizer.hpp>

#include "support/oracles.hpp"
#include "support/shapes.hpp"

using namespace skelmesh;
using skelmesh::testing::random_cloud;

namespace {

Points pts(std::initializer_list<Vec3> v) { return to_points(std::vector<Vec3>(v)); }

Eigen::MatrixXd column(std::initializer_list<double> v) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (const double x : v) m(i++, 0) = x;
  return m;
}

// Octahedron vertices scaled to radius 1: a point set symmetric about the origin.
Points octahedron() {
  return pts({{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}});
}

OptimizerConfig small_config() {
  OptimizerConfig c;
  c.skeletal_count = 8;
  c.downsample_count = 96;
  c.pretrain_iters = 25;
  c.main_iters = 25;
  c.seed = 3;
  return c;
}

}  // namespace

TEST(Softmax, UniformAndStable) {
  const Eigen::MatrixXd w = softmax_weights(Eigen::MatrixXd::Zero(4, 3));
  EXPECT_TRUE((w.array() == 0.25).all());
  const Eigen::MatrixXd big = softmax_weights(column({1000, 0, 0, 0}));
  EXPECT_TRUE(big.allFinite());
  EXPECT_DOUBLE_EQ(big(0, 0), 1.0);
  EXPECT_LT(big(1, 0), 1e-300);
}

TEST(Softmax, RandomColumnsAreStochastic) {
  const Eigen::MatrixXd w = softmax_weights(initial_logits(50, 7, 3.0, 1));
  EXPECT_TRUE((w.array() >= 0.0).all() && (w.array() <= 1.0).all());
  for (Eigen::Index j = 0; j < w.cols(); ++j) EXPECT_NEAR(w.col(j).sum(), 1.0, 1e-12);
}

TEST(SkeletalPoints, ConvexCombination) {
  const Points p = pts({{-1, 0, 0}, {1, 0, 0}, {3, 4, 5}});
  EXPECT_EQ(Vec3(skeletal_points(column({0, 0, 1}), p).row(0).transpose()), Vec3(3, 4, 5));
  EXPECT_EQ(Vec3(skeletal_points(column({0.5, 0.5, 0}), p).row(0).transpose()), Vec3::Zero());
  EXPECT_THROW(skeletal_points(column({0.5, 0.5}), p), std::invalid_argument);

  const Points cloud = random_cloud(40, 9);
  const auto box = bounding_box(cloud);
  const Points c = skeletal_points(softmax_weights(initial_logits(40, 20, 4.0, 2)), cloud);
  for (std::size_t j = 0; j < count(c); ++j) EXPECT_TRUE(box.contains(row(c, j), 1e-12));
}

TEST(ClosestDistances, ExamplesAndBruteForce) {
  const Points p = pts({{1, 0, 0}, {-1, 0, 0}});
  const Eigen::VectorXd d = closest_distances(p, pts({{0, 0, 0}}));
  EXPECT_EQ(d, Eigen::Vector2d(1, 1));
  EXPECT_EQ(closest_distances(p, pts({{1, 0, 0}}))[0], 0.0);
  EXPECT_THROW(closest_distances(p, Points(0, 3)), std::invalid_argument);

  const Points s = random_cloud(100, 1), c = random_cloud(13, 2);
  const Eigen::VectorXd got = closest_distances(s, c);
  for (std::size_t i = 0; i < count(s); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < count(c); ++j) best = std::min(best, (row(s, i) - row(c, j)).norm());
    EXPECT_DOUBLE_EQ(got[static_cast<Eigen::Index>(i)], best);
  }
}

TEST(Radii, Examples) {
  const Eigen::Vector3d d(0.3, 0.7, 0.9);
  EXPECT_DOUBLE_EQ(radii(column({0, 1, 0}), d)[0], 0.7);
  EXPECT_DOUBLE_EQ(radii(column({0.5, 0.5}), Eigen::Vector2d(1, 1))[0], 1.0);
  const Eigen::VectorXd r = radii(softmax_weights(initial_logits(3, 5, 2.0, 4)), Eigen::Vector3d::Constant(0.25));
  for (Eigen::Index j = 0; j < r.size(); ++j) EXPECT_NEAR(r[j], 0.25, 1e-15);
  EXPECT_THROW(radii(column({1, 0}), d), std::invalid_argument);
}

TEST(SamplingLoss, ExactSamplesAndDegenerateSphere) {
  const std::vector<SkeletalSphere> spheres = {{Vec3(0, 0, 0), 1.0}, {Vec3(3, 1, 0), 0.5}};
  std::vector<Vec3> samples;
  for (const auto& s : spheres) {
    for (const auto& t : sample_sphere_surface(s)) samples.push_back(t);
  }
  EXPECT_EQ(sampling_loss(spheres, to_points(samples)), 0.0);
  EXPECT_EQ(sampling_loss({{Vec3::Zero(), 0.0}}, pts({{0, 0, 0}})), 0.0);
}

TEST(SamplingLoss, UnitSphereAgainstDirectEvaluation) {
  const Points cloud = skelmesh::testing::unit_sphere(10000, 5);
  const double loss = sampling_loss({{Vec3::Zero(), 1.0}}, cloud);
  const auto samples = sample_sphere_surface({Vec3::Zero(), 1.0});
  double direct = 0.0;
  for (std::size_t i = 0; i < count(cloud); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& t : samples) best = std::min(best, (row(cloud, i) - t).norm());
    direct += best;
  }
  for (const auto& t : samples) direct += nearest_neighbor(t, cloud).distance();
  EXPECT_NEAR(loss, direct, 1e-9 * direct);
  // covering radius of the 8 diagonal directions: chord to an axis direction
  const double gap = std::sqrt(2.0 - 2.0 / std::sqrt(3.0));
  EXPECT_LE(loss, (8.0 + 10000.0) * gap);
}

TEST(PointToSphereLoss, HandExamples) {
  const Points sphere_cloud = octahedron();
  const Points origin = pts({{0, 0, 0}});
  const Eigen::VectorXd one = Eigen::VectorXd::Ones(1);
  EXPECT_EQ(point_to_sphere_loss(sphere_cloud, origin, one, ResidualMode::kSigned), 0.0);
  EXPECT_EQ(point_to_sphere_loss(sphere_cloud, origin, one, ResidualMode::kSquared), 0.0);
  EXPECT_DOUBLE_EQ(point_to_sphere_loss(pts({{2, 0, 0}}), origin, one, ResidualMode::kSigned), 2.0);
  EXPECT_DOUBLE_EQ(point_to_sphere_loss(pts({{2, 0, 0}}), origin, one, ResidualMode::kSquared), 2.0);
  EXPECT_DOUBLE_EQ(point_to_sphere_loss(pts({{0.5, 0, 0}}), origin, one, ResidualMode::kSigned), -1.0);
  EXPECT_DOUBLE_EQ(point_to_sphere_loss(pts({{0.5, 0, 0}}), origin, one, ResidualMode::kSquared), 0.5);
  EXPECT_THROW(point_to_sphere_loss(sphere_cloud, origin, Eigen::VectorXd::Ones(2), ResidualMode::kSigned),
               std::invalid_argument);
}

TEST(RadiusRegularizer, Examples) {
  EXPECT_EQ(radius_regularizer(Eigen::Vector2d(1, 0.5)), -1.5);
  EXPECT_EQ(radius_regularizer(Eigen::VectorXd::Zero(4)), 0.0);
  EXPECT_EQ(radius_regularizer(Eigen::VectorXd::Ones(1)), -1.0);
}

TEST(TotalLoss, InscribedSphereConfiguration) {
  // uniform weights over a centrally symmetric sample: center at the origin,
  // every closest distance 1, so r = 1
  const Points cloud = octahedron();
  OptimizerConfig config;
  config.skeletal_count = 1;
  config.downsample_count = 6;
  const Eigen::MatrixXd logits = Eigen::MatrixXd::Zero(6, 1);
  const LossBreakdown l = total_loss(logits, cloud, cloud, config);
  EXPECT_NEAR(l.point_to_sphere, 0.0, 1e-12);
  EXPECT_NEAR(l.radius, -1.0, 1e-12);
  EXPECT_NEAR(l.total, l.sampling - 0.4, 1e-12);
  EXPECT_NEAR(l.sampling, sampling_loss({{Vec3::Zero(), 1.0}}, cloud), 1e-12);
}

TEST(TotalLoss, ComponentsAndWeights) {
  const Points cloud = random_cloud(120, 4);
  const Points sampled = gather(cloud, farthest_point_sample(cloud, 32, 0));
  const Eigen::MatrixXd logits = initial_logits(32, 5, 1.0, 8);
  OptimizerConfig config;
  config.skeletal_count = 5;
  config.downsample_count = 32;
  const LossBreakdown l = total_loss(logits, cloud, sampled, config);
  EXPECT_EQ(l.total, l.sampling + 0.3 * l.point_to_sphere + 0.4 * l.radius);

  const Eigen::MatrixXd w = softmax_weights(logits);
  const Points c = skeletal_points(w, sampled);
  const Eigen::VectorXd r = radii(w, closest_distances(sampled, c));
  std::vector<SkeletalSphere> spheres;
  for (std::size_t j = 0; j < 5; ++j) spheres.push_back({row(c, j), r[static_cast<Eigen::Index>(j)]});
  EXPECT_NEAR(l.sampling, sampling_loss(spheres, cloud), 1e-12);
  EXPECT_NEAR(l.point_to_sphere, point_to_sphere_loss(cloud, c, r, ResidualMode::kSigned), 1e-12);
  EXPECT_NEAR(l.radius, -r.sum(), 1e-15);

  config.lambda1 = config.lambda2 = 0.0;
  const LossBreakdown plain = total_loss(logits, cloud, sampled, config);
  EXPECT_EQ(plain.total, plain.sampling);
}

TEST(LossGradient, MatchesFiniteDifferences) {
  for (std::uint64_t seed = 100; seed < 103; ++seed) {
    const auto check = skelmesh::testing::skeleton_gradient_check(seed);
    EXPECT_GT(check.compared, 400u);
    EXPECT_LT(check.max_relative_error, 1e-4) << "seed " << seed;
  }
}

TEST(LossGradient, SquaredModeMatchesFiniteDifferences) {
  const auto check = skelmesh::testing::skeleton_gradient_check(7, 64, 8, 1e-4, ResidualMode::kSquared);
  EXPECT_GT(check.compared, 400u);
  EXPECT_LT(check.max_relative_error, 1e-4);
}

TEST(LossGradient, ColumnShiftInvariance) {
  const Points cloud = random_cloud(150, 2);
  const Points sampled = gather(cloud, farthest_point_sample(cloud, 40, 0));
  OptimizerConfig config;
  config.skeletal_count = 6;
  config.downsample_count = 40;
  Eigen::MatrixXd logits = initial_logits(40, 6, 1.0, 5);
  const auto l0 = total_loss(logits, cloud, sampled, config);
  const Eigen::MatrixXd g0 = loss_gradient(logits, cloud, sampled, config);
  logits.col(2).array() += 3.0;
  const auto l1 = total_loss(logits, cloud, sampled, config);
  const Eigen::MatrixXd g1 = loss_gradient(logits, cloud, sampled, config);
  EXPECT_NEAR(l0.total, l1.total, 1e-10 * std::abs(l0.total));
  EXPECT_LT((g0 - g1).norm(), 1e-10 * g0.norm());
  // softmax gradients sum to zero down each column
  for (Eigen::Index j = 0; j < g0.cols(); ++j) EXPECT_NEAR(g0.col(j).sum(), 0.0, 1e-10);
}

TEST(Optimize, InvariantsHoldEveryIteration) {
  const Points cloud = skelmesh::testing::capsule(600, 4);
  const OptimizerConfig config = small_config();
  std::size_t calls = 0;
  const BoundingBox box =
      bounding_box(gather(cloud, farthest_point_sample(cloud, config.downsample_count, config.seed)));
  const auto result = optimize(cloud, config, [&](const IterationView& v) {
    ++calls;
    const auto& s = v.state;
    for (Eigen::Index j = 0; j < s.weights.cols(); ++j) {
      ASSERT_NEAR(s.weights.col(j).sum(), 1.0, 1e-6);
      ASSERT_TRUE((s.weights.col(j).array() >= 0.0).all());
    }
    const double max_d = s.distances.maxCoeff();
    for (Eigen::Index j = 0; j < s.radii.size(); ++j) {
      ASSERT_GE(s.radii[j], 0.0);
      ASSERT_LE(s.radii[j], max_d + 1e-12);
    }
    for (std::size_t j = 0; j < count(s.centers); ++j) ASSERT_TRUE(box.contains(row(s.centers, j), 1e-12));
  });
  EXPECT_EQ(calls, config.pretrain_iters + config.main_iters);
  EXPECT_EQ(result.history.size(), config.main_iters);
  EXPECT_EQ(result.warmup_history.size(), config.pretrain_iters);
  EXPECT_EQ(result.spheres.size(), config.skeletal_count);
}

TEST(Optimize, WarmupDescends) {
  OptimizerConfig config = small_config();
  config.pretrain_iters = 60;
  config.main_iters = 0;
  const auto result = optimize(skelmesh::testing::capsule(600, 1), config);
  ASSERT_EQ(result.warmup_history.size(), 60u);
  EXPECT_LE(result.warmup_history.back(), result.warmup_history.front());
  EXPECT_TRUE(result.history.empty());
}

TEST(Optimize, DeterministicGivenSeed) {
  const Points cloud = skelmesh::testing::torus(600, 2);
  const auto a = optimize(cloud, small_config());
  const auto b = optimize(cloud, small_config());
  EXPECT_EQ(a.logits, b.logits);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) EXPECT_EQ(a.history[i].total, b.history[i].total);
}

TEST(Optimize, RejectsBadInput) {
  EXPECT_THROW(optimize(random_cloud(50, 1), small_config()), std::invalid_argument);
  OptimizerConfig bad = small_config();
  bad.skeletal_count = 1;
  EXPECT_THROW(optimize(random_cloud(200, 1), bad), std::invalid_argument);
  bad = small_config();
  bad.downsample_count = 4;
  EXPECT_THROW(optimize(random_cloud(200, 1), bad), std::invalid_argument);
}
