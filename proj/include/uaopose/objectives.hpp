#pragma once

// Training and test-time losses. All take tape values so they can be
// differentiated; value-level wrappers are provided for evaluation code.
//
// Pose-shaped arguments are [K,3] / [K,2], or batched [B,K,3] / [B,K,2]; the
// batched forms average the per-pose losses over B.

#include "uaopose/camera.hpp"
#include "uaopose/pose.hpp"
#include "uaopose/tensor.hpp"

namespace uaopose {

inline constexpr double kDefaultLambdaProjection = 1.0;
inline constexpr double kDefaultLambdaUncertainty = 0.005;

// Mean per-joint Euclidean distance.
ad::Var mpjpe_loss(ad::Var pred, ad::Var gt);

// (1/2K) sum_k ( |gt_k - mu_k|^2 exp(-s_k) + s_k ).
ad::Var nll_train_loss(ad::Var mu, ad::Var s, ad::Var gt);

// Mean over joints of |(pred * P)_k - j2d_k|.
ad::Var projection_loss(ad::Var pred3d, ad::Var j2d, const ProjectionMatrix& p);

// (1/2K) sum_k |anchor_mu_k - current_k|^2 exp(-anchor_s_k). The anchor is a
// constant: no gradient reaches it.
ad::Var uncertainty_loss(ad::Var current, const GaussianPosePrediction& anchor);
// Same, with the anchor given as tape values; they are detached first.
ad::Var uncertainty_loss(ad::Var current, ad::Var anchor_mu, ad::Var anchor_s);

struct LossBreakdown {
  double total = 0.0;
  double projection = 0.0;
  double uncertainty = 0.0;
  double nll = 0.0;  // training only
};

struct CombinedLoss {
  ad::Var total;
  LossBreakdown values;
};

CombinedLoss combined_loss(ad::Var current3d, ad::Var j2d, const ProjectionMatrix& p,
                           const GaussianPosePrediction& anchor, double lambda_projection,
                           double lambda_uncertainty);

// Value-level conveniences.
double mpjpe_loss(const Pose3D& pred, const Pose3D& gt);
double nll_train_loss(const GaussianPosePrediction& pred, const Pose3D& gt);
double projection_loss(const Pose3D& pred3d, const Pose2D& j2d, const ProjectionMatrix& p);
double uncertainty_loss(const Pose3D& current, const GaussianPosePrediction& anchor);
LossBreakdown combined_loss(const Pose3D& current3d, const Pose2D& j2d, const ProjectionMatrix& p,
                            const GaussianPosePrediction& anchor, double lambda_projection,
                            double lambda_uncertainty);

}  // namespace uaopose
