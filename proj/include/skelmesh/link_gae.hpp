#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/SparseCore>

#include "adam.hpp"
#include "geometry.hpp"
#include "graph_init.hpp"
#include "kdtree.hpp"

namespace skelmesh {

struct GcnArchitecture {
  std::size_t layers = 12;
  std::size_t hidden = 64;
  std::size_t latent = 32;
  /// Normalize each hidden layer's graph-convolution output over the nodes
  /// before the residual sum.
  bool batch_norm = true;
};

struct GAEConfig {
  std::size_t iterations = 1000;
  double learning_rate = 5e-4;
  std::uint64_t seed = 0;
  double link_threshold = 0.5;
  GcnArchitecture architecture;

  void validate() const {
    if (!(link_threshold > 0.0 && link_threshold < 1.0)) {
      throw std::invalid_argument("link_threshold must lie in (0, 1)");
    }
    if (architecture.layers < 1) throw std::invalid_argument("GCN needs at least one layer");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("GAE learning_rate must be > 0");
  }
};

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

/// log(1 + e^x) without overflow.
inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

/// D^{-1/2} (A + I) D^{-1/2} with D the degree matrix of A + I.
inline Eigen::MatrixXd normalize_adjacency(const BinaryMatrix& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("normalize_adjacency: matrix not square");
  const Eigen::Index n = a.rows();
  Eigen::MatrixXd with_loops = a.cast<double>();
  with_loops.diagonal().setOnes();
  const Eigen::VectorXd inv_sqrt = with_loops.rowwise().sum().cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) out(i, j) = inv_sqrt[i] * with_loops(i, j) * inv_sqrt[j];
  }
  return out;
}

/// Layer weights W^0..W^{L-1} plus the input alignment branch. The branch is
/// empty when the first residual needs no alignment (d0 == hidden) or when
/// there is no hidden layer (L == 1).
struct GCNParams {
  std::vector<Eigen::MatrixXd> weights;
  Eigen::MatrixXd branch;
  bool batch_norm = false;

  std::size_t layer_count() const { return weights.size(); }
  bool has_branch() const { return branch.size() > 0; }

  std::size_t parameter_count() const {
    std::size_t n = static_cast<std::size_t>(branch.size());
    for (const auto& w : weights) n += static_cast<std::size_t>(w.size());
    return n;
  }
};

/// Uniform(-s, s) init with s = fan_in^{-1/2}.
inline GCNParams init_params(std::size_t input_dim, const GcnArchitecture& arch,
                             std::uint64_t seed) {
  if (arch.layers < 1) throw std::invalid_argument("GCN needs at least one layer");
  std::mt19937_64 rng(seed);
  auto uniform_block = [&](std::size_t rows, std::size_t cols) {
    const double s = 1.0 / std::sqrt(static_cast<double>(rows));
    std::uniform_real_distribution<double> u(-s, s);
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = u(rng);
    }
    return m;
  };
  GCNParams p;
  p.batch_norm = arch.batch_norm;
  if (arch.layers == 1) {
    p.weights.push_back(uniform_block(input_dim, arch.latent));
    return p;
  }
  p.weights.push_back(uniform_block(input_dim, arch.hidden));
  for (std::size_t l = 1; l + 1 < arch.layers; ++l) {
    p.weights.push_back(uniform_block(arch.hidden, arch.hidden));
  }
  p.weights.push_back(uniform_block(arch.hidden, arch.latent));
  if (input_dim != arch.hidden) p.branch = uniform_block(input_dim, arch.hidden);
  return p;
}

/// Intermediate activations kept for the backward pass.
struct EncoderTrace {
  std::vector<Eigen::MatrixXd> inputs;      // X^0 .. X^{L-1}
  std::vector<Eigen::MatrixXd> propagated;  // A~ X^0 .. A~ X^{L-1}
  std::vector<Eigen::MatrixXd> active;      // ReLU masks of X^1 .. X^{L-1}
  std::vector<Eigen::MatrixXd> normalized;  // batch-normalized convolutions
  std::vector<Eigen::RowVectorXd> inv_std;  // their per-column 1/std
};

inline constexpr double kBatchNormEpsilon = 1e-5;

namespace detail {

template <typename Adj>
Eigen::MatrixXd encode_impl(const Eigen::MatrixXd& x0, const Adj& a_norm, const GCNParams& params,
                            EncoderTrace* trace) {
  const std::size_t layers = params.layer_count();
  if (layers == 0) throw std::invalid_argument("encode: no layers");
  if (x0.rows() != a_norm.rows() || a_norm.rows() != a_norm.cols()) {
    throw std::invalid_argument("encode: feature rows do not match adjacency size");
  }
  if (x0.cols() != params.weights.front().rows()) {
    throw std::invalid_argument("encode: feature width " + std::to_string(x0.cols()) +
                                " != first layer input " +
                                std::to_string(params.weights.front().rows()));
  }
  for (std::size_t l = 1; l < layers; ++l) {
    if (params.weights[l].rows() != params.weights[l - 1].cols()) {
      throw std::invalid_argument("encode: layer " + std::to_string(l) + " dimension mismatch");
    }
  }
  if (layers > 1 && !params.has_branch() && x0.cols() != params.weights.front().cols()) {
    throw std::invalid_argument("encode: input width differs from hidden width without a branch");
  }
  if (trace) *trace = {};

  Eigen::MatrixXd x = x0;
  for (std::size_t l = 0; l + 1 < layers; ++l) {
    Eigen::MatrixXd ax = a_norm * x;
    Eigen::MatrixXd pre = ax * params.weights[l];
    if (params.batch_norm) {
      const double n = static_cast<double>(pre.rows());
      pre.rowwise() -= pre.colwise().sum() / n;
      const Eigen::RowVectorXd inv_std =
          ((pre.colwise().squaredNorm() / n).array() + kBatchNormEpsilon).rsqrt().matrix();
      pre = pre * inv_std.asDiagonal();
      if (trace) {
        trace->normalized.push_back(pre);
        trace->inv_std.push_back(inv_std);
      }
    }
    if (l == 0 && params.has_branch()) {
      pre.noalias() += x * params.branch;
    } else {
      pre += x;
    }
    if (trace) {
      trace->inputs.push_back(std::move(x));
      trace->propagated.push_back(std::move(ax));
      trace->active.push_back((pre.array() > 0.0).cast<double>().matrix());
    }
    x = pre.cwiseMax(0.0);
  }
  Eigen::MatrixXd ax = a_norm * x;
  Eigen::MatrixXd z = ax * params.weights.back();
  if (trace) {
    trace->inputs.push_back(std::move(x));
    trace->propagated.push_back(std::move(ax));
  }
  return z;
}

}  // namespace detail

/// Residual GCN encoder:
///   X^l = ReLU(A~ X^{l-1} W^{l-1} + X^{l-1}),  l = 1..L-1
///   Z   = A~ X^{L-1} W^{L-1}
/// with the first residual routed through `params.branch` when present.
inline Eigen::MatrixXd encode(const Eigen::MatrixXd& x0, const Eigen::MatrixXd& a_norm,
                              const GCNParams& params, EncoderTrace* trace = nullptr) {
  return detail::encode_impl(x0, a_norm, params, trace);
}

/// Inner-product decoder. Returns raw logits Z Z^T; the logistic function is
/// applied by the loss and by link_probabilities().
inline Eigen::MatrixXd decode(const Eigen::MatrixXd& z) { return z * z.transpose(); }

inline Eigen::MatrixXd link_probabilities(const Eigen::MatrixXd& z) {
  return decode(z).unaryExpr([](double x) { return sigmoid(x); });
}

inline BinaryMatrix predict_links(const Eigen::MatrixXd& z, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw std::invalid_argument("predict_links: threshold must lie in (0, 1)");
  }
  const Eigen::MatrixXd p = link_probabilities(z);
  BinaryMatrix out = BinaryMatrix::Zero(p.rows(), p.cols());
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < p.cols(); ++j) {
      if (p(i, j) > threshold) out(i, j) = out(j, i) = 1;
    }
  }
  return out;
}

/// (# known-absent pairs) / (# known-existing pairs) over unordered pairs.
inline double balance_ratio(const SkeletonGraph& g) {
  std::size_t existing = 0;
  std::size_t absent = 0;
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    for (std::size_t j = i + 1; j < g.node_count(); ++j) {
      if (!g.known(i, j)) continue;
      (g.linked(i, j) ? existing : absent) += 1;
    }
  }
  if (existing == 0) throw std::invalid_argument("balance_ratio: graph has no known-existing links");
  return static_cast<double>(absent) / static_cast<double>(existing);
}

/// Masked balanced cross-entropy over known unordered pairs:
///   mean( -xi A log s(x) - (1 - A) log(1 - s(x)) ),  s = logistic.
/// When `grad` is non-null it receives dL/dlogits, split evenly between
/// (i,j) and (j,i) so that it stays symmetric.
inline double mbce_loss(const Eigen::MatrixXd& logits, const SkeletonGraph& g, double xi,
                        Eigen::MatrixXd* grad = nullptr) {
  const auto n = static_cast<Eigen::Index>(g.node_count());
  if (logits.rows() != n || logits.cols() != n) {
    throw std::invalid_argument("mbce_loss: logits shape does not match graph");
  }
  if (grad) *grad = Eigen::MatrixXd::Zero(n, n);
  double sum = 0.0;
  std::size_t known = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (!g.mask(i, j)) continue;
      ++known;
      const double x = logits(i, j);
      if (g.adjacency(i, j)) {
        sum += xi * softplus(-x);
        if (grad) (*grad)(i, j) = -xi * sigmoid(-x);
      } else {
        sum += softplus(x);
        if (grad) (*grad)(i, j) = sigmoid(x);
      }
    }
  }
  if (known == 0) return 0.0;
  const double inv = 1.0 / static_cast<double>(known);
  if (grad) {
    *grad *= 0.5 * inv;
    *grad += Eigen::MatrixXd(grad->transpose());
  }
  return sum * inv;
}

/// Gradient of `loss(Z)` w.r.t. every parameter, given dL/dZ and the trace
/// of the forward pass that produced Z.
template <typename Adj>
GCNParams encoder_backward(const Adj& a_norm, const GCNParams& params, const EncoderTrace& trace,
                           const Eigen::MatrixXd& grad_z) {
  const std::size_t layers = params.layer_count();
  GCNParams g;
  g.weights.resize(layers);
  g.weights[layers - 1] = trace.propagated[layers - 1].transpose() * grad_z;
  if (layers == 1) return g;

  // A~ is symmetric, so A~^T = A~.
  Eigen::MatrixXd grad_x = a_norm * (grad_z * params.weights[layers - 1].transpose());
  for (std::size_t l = layers - 1; l-- > 0;) {
    const Eigen::MatrixXd grad_pre = grad_x.cwiseProduct(trace.active[l]);
    Eigen::MatrixXd grad_conv = grad_pre;
    if (params.batch_norm) {
      // y = (h - mean) / std per column:
      // dh = (dy - mean(dy) - y * mean(dy * y)) / std
      const Eigen::MatrixXd& y = trace.normalized[l];
      const double n = static_cast<double>(y.rows());
      const Eigen::RowVectorXd mean_g = grad_pre.colwise().sum() / n;
      const Eigen::RowVectorXd mean_gy = grad_pre.cwiseProduct(y).colwise().sum() / n;
      grad_conv = ((grad_pre.rowwise() - mean_g) - y * mean_gy.asDiagonal()) *
                  trace.inv_std[l].asDiagonal();
    }
    g.weights[l] = trace.propagated[l].transpose() * grad_conv;
    if (l == 0) {
      if (params.has_branch()) g.branch = trace.inputs[0].transpose() * grad_pre;
      break;
    }
    grad_x = a_norm * (grad_conv * params.weights[l].transpose()) + grad_pre;
  }
  return g;
}

/// Value of the masked loss and its parameter gradient for one set of params.
inline double gae_loss_and_gradient(const Eigen::MatrixXd& x0, const Eigen::MatrixXd& a_norm,
                                    const SkeletonGraph& g, double xi, const GCNParams& params,
                                    GCNParams* grad) {
  EncoderTrace trace;
  const Eigen::MatrixXd z = encode(x0, a_norm, params, grad ? &trace : nullptr);
  Eigen::MatrixXd g_logits;
  const double loss = mbce_loss(decode(z), g, xi, grad ? &g_logits : nullptr);
  if (grad) {
    // logits = Z Z^T with symmetric upstream gradient G: dZ = 2 G Z.
    const Eigen::MatrixXd grad_z = 2.0 * g_logits * z;
    *grad = encoder_backward(a_norm, params, trace, grad_z);
  }
  return loss;
}

struct GAEResult {
  GCNParams params;
  Eigen::MatrixXd latent;
  std::vector<double> history;
  double balance = 1.0;
};

/// Fits the encoder to the known links of `g` with Adam. The graph's own
/// adjacency is the propagation structure.
inline GAEResult train(const SkeletonGraph& g, const Eigen::MatrixXd& x0, const GAEConfig& config) {
  config.validate();
  if (static_cast<std::size_t>(x0.rows()) != g.node_count()) {
    throw std::invalid_argument("train: feature rows do not match node count");
  }
  const Eigen::MatrixXd a_dense = normalize_adjacency(g.adjacency);
  const Eigen::SparseMatrix<double> a_norm = a_dense.sparseView();

  GAEResult out;
  out.balance = balance_ratio(g);
  out.params = init_params(static_cast<std::size_t>(x0.cols()), config.architecture, config.seed);

  const AdamSettings settings{config.learning_rate, 0.9, 0.999, 1e-8};
  std::vector<Adam> weight_opt;
  for (const auto& w : out.params.weights) weight_opt.emplace_back(settings, w.rows(), w.cols());
  Adam branch_opt(settings, out.params.branch.rows(), out.params.branch.cols());

  out.history.reserve(config.iterations);
  EncoderTrace trace;
  Eigen::MatrixXd g_logits;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    const Eigen::MatrixXd z = detail::encode_impl(x0, a_norm, out.params, &trace);
    out.history.push_back(mbce_loss(decode(z), g, out.balance, &g_logits));
    const GCNParams grad = encoder_backward(a_norm, out.params, trace, 2.0 * g_logits * z);
    for (std::size_t l = 0; l < grad.weights.size(); ++l) {
      weight_opt[l].step(out.params.weights[l], grad.weights[l]);
    }
    if (out.params.has_branch()) branch_opt.step(out.params.branch, grad.branch);
  }
  out.latent = detail::encode_impl(x0, a_norm, out.params, nullptr);
  return out;
}

/// Per-point shape descriptor: inverse mean distance to the `neighbors`
/// nearest other points, then the ascending eigenvalues of their covariance.
inline Eigen::MatrixXd local_descriptors(const Points& sampled, std::size_t neighbors = 8) {
  const std::size_t n = count(sampled);
  if (n < 2) throw std::invalid_argument("local_descriptors: need at least 2 points");
  const KdTree tree(sampled);
  Eigen::MatrixXd phi(static_cast<Eigen::Index>(n), 4);
  for (std::size_t i = 0; i < n; ++i) {
    auto nb = tree.k_nearest(row(sampled, i), neighbors + 1);
    std::erase_if(nb, [i](const Neighbor& x) { return x.index == i; });
    if (nb.size() > neighbors) nb.resize(neighbors);
    double mean_dist = 0.0;
    Vec3 mean = Vec3::Zero();
    for (const auto& x : nb) {
      mean_dist += x.distance();
      mean += row(sampled, x.index);
    }
    mean_dist /= static_cast<double>(nb.size());
    mean /= static_cast<double>(nb.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& x : nb) {
      const Vec3 d = row(sampled, x.index) - mean;
      cov += d * d.transpose();
    }
    cov /= static_cast<double>(nb.size());
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov, Eigen::EigenvaluesOnly);
    const auto r = static_cast<Eigen::Index>(i);
    phi(r, 0) = mean_dist > 0.0 ? 1.0 / mean_dist : 0.0;
    phi.block<1, 3>(r, 1) = eig.eigenvalues().transpose();
  }
  return phi;
}

/// Node features [C, R, W^T Phi(P')], N x 8.
inline Eigen::MatrixXd node_features(const Points& sampled, const Eigen::MatrixXd& weights,
                                     const Points& centers, const Eigen::VectorXd& radii) {
  if (weights.rows() != sampled.rows() || weights.cols() != centers.rows() ||
      radii.size() != centers.rows()) {
    throw std::invalid_argument("node_features: inconsistent dimensions");
  }
  Eigen::MatrixXd x(centers.rows(), 8);
  x.leftCols<3>() = centers;
  x.col(3) = radii;
  x.rightCols<4>() = weights.transpose() * local_descriptors(sampled);
  return x;
}

/// Zero-mean, unit-variance columns; constant columns are only centered.
inline Eigen::MatrixXd standardize_columns(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out = x;
  const double n = static_cast<double>(x.rows());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double mean = x.col(j).sum() / n;
    out.col(j).array() -= mean;
    const double sd = std::sqrt(out.col(j).squaredNorm() / n);
    if (sd > 1e-12) out.col(j) /= sd;
  }
  return out;
}

}  // namespace skelmesh
