#include "uaopose/camera.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>
#include <random>

#include "uaopose/errors.hpp"

namespace uaopose {

ProjectionMatrix::ProjectionMatrix(const Matrix& p) : p_(p) {
  if (!p_.allFinite()) throw ContractError("projection matrix has non-finite entries");
  if (!(condition_number() < 1e6)) throw ContractError("projection matrix is not rank 2");
}

ProjectionMatrix ProjectionMatrix::orthographic() {
  Matrix p;
  p << 1, 0, 0, 1, 0, 0;
  return ProjectionMatrix(p);
}

double ProjectionMatrix::condition_number() const {
  const Eigen::Matrix2d gram = p_.transpose() * p_;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(gram);
  const double lo = eig.eigenvalues()(0), hi = eig.eigenvalues()(1);
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

ProjectionMatrix camera_from_draw(const CameraDraw& d) {
  const double c = std::cos(d.rotation), s = std::sin(d.rotation);
  ProjectionMatrix::Matrix p;
  p << c, -s, s, c, d.skew_a, d.skew_b;
  return ProjectionMatrix(d.scale * p);
}

CameraDraw sample_camera_draw(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> scale(0.8, 1.2);
  std::uniform_real_distribution<double> angle(-15.0 * std::numbers::pi / 180.0,
                                               15.0 * std::numbers::pi / 180.0);
  std::uniform_real_distribution<double> skew(-0.2, 0.2);
  CameraDraw d;
  d.scale = scale(rng);
  d.rotation = angle(rng);
  d.skew_a = skew(rng);
  d.skew_b = skew(rng);
  return d;
}

ProjectionMatrix sample_camera(std::uint64_t seed) {
  return camera_from_draw(sample_camera_draw(seed));
}

Pose2D project(const Pose3D& joints, const ProjectionMatrix& p) { return joints * p.matrix(); }

ad::Var project(ad::Var joints, const ProjectionMatrix& p) {
  const ad::Shape& s = joints.shape();
  if (s.empty() || s.back() != 3)
    throw ShapeError("project: expected [...,3] joints, got " + ad::shape_str(s));
  const std::size_t rows = joints.value().size() / 3;
  ad::Var pm = joints.tape()->constant(to_tensor(p.matrix()));
  ad::Var flat = ad::matmul(ad::reshape(joints, {rows, 3}), pm);
  ad::Shape out = s;
  out.back() = 2;
  return ad::reshape(flat, out);
}

}  // namespace uaopose
