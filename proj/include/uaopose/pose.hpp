#pragma once

#include <Eigen/Core>

#include "uaopose/tensor.hpp"

namespace uaopose {

// K rows of (x, y, z) in canonical units (1 unit = 1000 mm), root-relative.
using Pose3D = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
// K rows of (u, v) in normalized image units.
using Pose2D = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;

// Per-joint Gaussian: mean position and log-variance s = ln(sigma^2).
struct GaussianPosePrediction {
  Pose3D mu;
  Eigen::VectorXd s;
};

template <class Derived>
ad::Tensor to_tensor(const Eigen::MatrixBase<Derived>& m) {
  using Row = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Row r = m;
  return ad::Tensor({static_cast<std::size_t>(r.rows()), static_cast<std::size_t>(r.cols())},
                    std::vector<double>(r.data(), r.data() + r.size()));
}

inline Pose3D to_pose3d(const ad::Tensor& t) {
  if (t.size() % 3 != 0) throw std::invalid_argument("tensor is not a 3-D pose");
  return Eigen::Map<const Pose3D>(t.data().data(), static_cast<Eigen::Index>(t.size() / 3), 3);
}

inline Pose2D to_pose2d(const ad::Tensor& t) {
  if (t.size() % 2 != 0) throw std::invalid_argument("tensor is not a 2-D pose");
  return Eigen::Map<const Pose2D>(t.data().data(), static_cast<Eigen::Index>(t.size() / 2), 2);
}

}  // namespace uaopose
