#pragma once

#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "uaopose/pose.hpp"

namespace uaopose {

class AlignmentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kPckThresholdMm = 150.0;

// Mean joint distance in mm (inputs in canonical units).
double mpjpe_mm(const Pose3D& pred, const Pose3D& gt);
// Per-joint distances in mm.
Eigen::VectorXd joint_errors_mm(const Pose3D& pred, const Pose3D& gt);

// Similarity transform of pred (rotation, uniform scale, translation) that
// best matches gt in least squares. Reflections are excluded.
Pose3D procrustes_align(const Pose3D& pred, const Pose3D& gt);
double pa_mpjpe_mm(const Pose3D& pred, const Pose3D& gt);

// Percent of joints with error strictly below threshold_mm.
double pck(const Pose3D& pred, const Pose3D& gt, double threshold_mm = kPckThresholdMm);
// Mean PCK over thresholds 0, 5, ..., 150 mm.
double auc(const Pose3D& pred, const Pose3D& gt);
std::vector<double> auc_thresholds_mm();

struct RankCorrelation {
  double value = 0.0;
  bool degenerate = false;  // one side constant; value is then 0
};
// Spearman's rho with average ranks for ties.
RankCorrelation spearman(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

struct CalibrationStats {
  Eigen::VectorXd per_joint_mean_s;
  Eigen::VectorXd per_joint_mpjpe_mm;
  RankCorrelation spearman;
};
CalibrationStats calibration_stats(const std::vector<GaussianPosePrediction>& preds,
                                   const std::vector<Pose3D>& gts);

struct EvalReport {
  double mpjpe_mm = 0.0;
  double pa_mpjpe_mm = 0.0;
  double pck_150 = 0.0;
  double auc = 0.0;
  std::vector<double> per_joint_mpjpe_mm;
  std::vector<double> per_joint_mean_s;
  double spearman_s_vs_error = 0.0;
  bool spearman_degenerate = false;

  bool operator==(const EvalReport&) const = default;
};

// Dataset-level metrics; every per-pose metric is averaged over poses.
EvalReport evaluate(const std::vector<GaussianPosePrediction>& preds, const std::vector<Pose3D>& gts);

}  // namespace uaopose
