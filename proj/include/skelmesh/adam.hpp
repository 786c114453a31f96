#pragma once

#include <cmath>

#include <Eigen/Core>

namespace skelmesh {

struct AdamSettings {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction for a single dense parameter block.
class Adam {
 public:
  Adam() = default;
  Adam(AdamSettings settings, Eigen::Index rows, Eigen::Index cols)
      : s_(settings), m_(Eigen::MatrixXd::Zero(rows, cols)), v_(Eigen::MatrixXd::Zero(rows, cols)) {}

  void step(Eigen::MatrixXd& param, const Eigen::MatrixXd& grad) {
    ++t_;
    m_ = s_.beta1 * m_ + (1.0 - s_.beta1) * grad;
    v_ = s_.beta2 * v_ + (1.0 - s_.beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(s_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(s_.beta2, static_cast<double>(t_));
    param.array() -=
        s_.learning_rate * (m_.array() / c1) / ((v_.array() / c2).sqrt() + s_.epsilon);
  }

  long steps() const { return t_; }

 private:
  AdamSettings s_;
  Eigen::MatrixXd m_;
  Eigen::MatrixXd v_;
  long t_ = 0;
};

}  // namespace skelmesh
