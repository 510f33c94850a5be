#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "uaopose/gumlp.hpp"
#include "uaopose/skeleton.hpp"
#include "uaopose/synthetic.hpp"

namespace uaopose {

struct TrainOptions {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  // Trailing share of the dataset kept out of training for the per-epoch
  // held-out MPJPE. 0 disables the split.
  double holdout_fraction = 0.0;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double train_nll = 0.0;
  double train_mpjpe_mm = 0.0;  // over the epoch's mini-batches, before each update
  std::optional<double> heldout_mpjpe_mm;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&)>;

TrainResult train(ModelParams params, const ModelConfig& cfg, const SkeletonGraph& graph,
                  const std::vector<PoseSample>& dataset, const TrainOptions& options,
                  const EpochCallback& on_epoch = {});

// Batched inference over samples (no gradients).
std::vector<GaussianPosePrediction> predict_batch(const ModelParams& params, const ModelConfig& cfg,
                                                  const SkeletonGraph& graph,
                                                  std::span<const PoseSample> samples);

// Mean MPJPE in mm of the plain forward pass over samples.
double mean_mpjpe_mm(const ModelParams& params, const ModelConfig& cfg, const SkeletonGraph& graph,
                     std::span<const PoseSample> samples);

std::string format_train_log(const std::vector<EpochLog>& log);

}  // namespace uaopose
