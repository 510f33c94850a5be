#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uaopose/camera.hpp"
#include "uaopose/pose.hpp"
#include "uaopose/skeleton.hpp"

namespace uaopose {

struct PoseSample {
  Pose3D j3d;                        // ground truth, root-relative
  std::optional<Pose2D> j2d_clean;   // project(j3d, p) at generation time
  Pose2D j2d;                        // observed (noisy) input
  ProjectionMatrix p = ProjectionMatrix::orthographic();
  Eigen::VectorXd noise_scale;       // per-joint sigma

  std::size_t joints() const { return static_cast<std::size_t>(j3d.rows()); }
};

// Bone lengths (canonical units) for default_h36m_skeleton(), one per edge in
// edge order. Chosen so every joint stays within 0.81 units of the pelvis,
// which keeps projections inside [-1, 1] for all sampled cameras.
std::vector<double> default_bone_lengths();
// Rest direction of each default-skeleton edge (parent -> child), y up.
std::vector<Eigen::Vector3d> default_rest_directions();

// Forward kinematics from the root (joint 0): each child sits at
// parent + length * u, u uniform on the 60-degree cap around the edge's rest
// direction. Empty rest_directions means: default directions for the default
// skeleton, straight up (+y) otherwise. Requires a tree.
Pose3D sample_pose(const SkeletonGraph& graph, std::span<const double> bone_lengths,
                   std::uint64_t seed, std::span<const Eigen::Vector3d> rest_directions = {});

Eigen::VectorXd uniform_noise(std::size_t joints, double sigma);
// Default skeleton: wrists/ankles 2 sigma, elbows/knees 1.5 sigma, everything else sigma.
Eigen::VectorXd limb_end_noise(double sigma);

// n samples on the default skeleton. Sample i depends only on (seed, i).
std::vector<PoseSample> make_dataset(std::size_t n, const Eigen::VectorXd& noise_scale,
                                     std::uint64_t seed);
PoseSample make_sample(const Eigen::VectorXd& noise_scale, std::uint64_t seed, std::size_t index);

// JSON-Lines, one sample per line, 17 significant digits. Paths ending in
// ".gz" are gzip-compressed.
std::string format_sample(const PoseSample& s);
PoseSample parse_sample(const std::string& line, std::size_t line_number, std::size_t expected_joints);
void save_dataset(const std::vector<PoseSample>& samples, const std::string& path);
std::vector<PoseSample> load_dataset(const std::string& path, std::size_t expected_joints = 17);

// Whole-file text I/O shared by the JSONL readers/writers (gzip by suffix).
std::string read_text(const std::string& path);
void write_text(const std::string& path, const std::string& text);

// "%.17g"
std::string format_real(double v);

}  // namespace uaopose
