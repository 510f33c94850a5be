#pragma once

// Test-time refinement with frozen model parameters. The optimized latent is
// either the 2D input itself or the pre-decoder hidden state.

#include <optional>
#include <string>
#include <vector>

#include "uaopose/camera.hpp"
#include "uaopose/gumlp.hpp"
#include "uaopose/objectives.hpp"
#include "uaopose/skeleton.hpp"
#include "uaopose/synthetic.hpp"

namespace uaopose {

enum class LatentVariant { Input, Deep };

LatentVariant parse_variant(const std::string& name);  // "input" | "deep"
std::string variant_name(LatentVariant v);

struct OptimizationConfig {
  double lambda_projection = kDefaultLambdaProjection;
  double lambda_uncertainty = kDefaultLambdaUncertainty;
  long iterations = 5;
  double lr = 1e-2;
  LatentVariant variant = LatentVariant::Input;

  void validate() const;
};

struct TraceRecord {
  double projection = 0.0;
  double uncertainty = 0.0;
  double total = 0.0;
  std::optional<double> mpjpe_mm;
};

// records[t] holds the losses of the pose decoded from the latent after t
// updates, t = 0..T.
struct OptimizationTrace {
  std::vector<TraceRecord> records;
};

std::string trace_csv(const OptimizationTrace& trace);

struct RefinementResult {
  Pose3D pose;
  Eigen::VectorXd log_variance;  // decoder s for the returned pose
  GaussianPosePrediction anchor;  // forward(j2d), fixed for the whole run
  OptimizationTrace trace;
  // Tensor ops recorded for one iteration's forward and loss.
  std::size_t ops_per_iteration = 0;
};

RefinementResult optimize_latent(const ModelParams& params, const ModelConfig& cfg,
                                 const SkeletonGraph& graph, const Pose2D& j2d,
                                 const ProjectionMatrix& p, const OptimizationConfig& ocfg,
                                 const Pose3D* gt = nullptr);

RefinementResult optimize_latent_deep(const ModelParams& params, const ModelConfig& cfg,
                                      const SkeletonGraph& graph, const Pose2D& j2d,
                                      const ProjectionMatrix& p, const OptimizationConfig& ocfg,
                                      const Pose3D* gt = nullptr);

// Dispatches on ocfg.variant.
RefinementResult refine(const ModelParams& params, const ModelConfig& cfg, const SkeletonGraph& graph,
                        const Pose2D& j2d, const ProjectionMatrix& p, const OptimizationConfig& ocfg,
                        const Pose3D* gt = nullptr);

// Refines every sample independently (ground truth feeds the trace only).
// jobs > 1 spreads samples over threads; results match jobs == 1 exactly.
std::vector<RefinementResult> refine_samples(const ModelParams& params, const ModelConfig& cfg,
                                             const SkeletonGraph& graph,
                                             const std::vector<PoseSample>& samples,
                                             const OptimizationConfig& ocfg, std::size_t jobs = 1);

}  // namespace uaopose
