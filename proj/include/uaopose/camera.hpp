#pragma once

#include <Eigen/Core>
#include <cstdint>

#include "uaopose/pose.hpp"

namespace uaopose {

// Linear camera: a 3-D joint row maps to the image row joint * P, with P 3x2.
class ProjectionMatrix {
 public:
  using Matrix = Eigen::Matrix<double, 3, 2>;

  // Validates rank 2 (cond(P^T P) < 1e6) and finiteness.
  explicit ProjectionMatrix(const Matrix& p);
  static ProjectionMatrix orthographic();

  const Matrix& matrix() const noexcept { return p_; }
  double condition_number() const;

  bool operator==(const ProjectionMatrix& o) const { return p_ == o.p_; }

 private:
  Matrix p_;
};

struct CameraDraw {
  double scale = 1.0;     // [0.8, 1.2]
  double rotation = 0.0;  // radians, [-15 deg, 15 deg]
  double skew_a = 0.0;    // [-0.2, 0.2]
  double skew_b = 0.0;    // [-0.2, 0.2]
};

// s * [[cos, -sin], [sin, cos], [a, b]]
ProjectionMatrix camera_from_draw(const CameraDraw& draw);
CameraDraw sample_camera_draw(std::uint64_t seed);
ProjectionMatrix sample_camera(std::uint64_t seed);

Pose2D project(const Pose3D& joints, const ProjectionMatrix& p);
// Differentiable variant for [K,3] (or [B,K,3]) tape values.
ad::Var project(ad::Var joints, const ProjectionMatrix& p);

}  // namespace uaopose
