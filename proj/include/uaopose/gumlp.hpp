#pragma once

// GUMLP lifting network: skeleton embedding, N blocks of
// (GCN layer -> parallel channel/spatial U-shaped MLPs), and two linear
// decoders for the per-joint mean and log-variance.

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "uaopose/pose.hpp"
#include "uaopose/skeleton.hpp"
#include "uaopose/tensor.hpp"

namespace uaopose {

inline constexpr double kLogVarianceMin = -10.0;
inline constexpr double kLogVarianceMax = 10.0;

struct ModelConfig {
  std::size_t joints = 17;        // K
  std::size_t blocks = 3;         // N
  std::size_t channels = 512;     // C
  std::size_t spatial_mid = 102;  // S_mid = 17 * 6
  double layer_norm_eps = 1e-5;
  std::uint64_t seed = 0;

  // Throws ContractError unless N >= 1, C >= 8, C % 4 == 0, S_mid >= K.
  void validate() const;
  std::size_t bottleneck() const { return channels / 4; }

  bool operator==(const ModelConfig&) const = default;
};

template <class T>
struct ChannelUmlpTensors {
  T ln_gamma, ln_beta;  // [C]
  T down_w, down_b;     // [C, C/4], [C/4]
  T mid_w, mid_b;       // [C/4, C/4], [C/4]
  T up_w, up_b;         // [C/4, C], [C]
};

template <class T>
struct SpatialUmlpTensors {
  T ln_gamma, ln_beta;  // [K]
  T up_w, up_b;         // [K, S], [S]
  T mid_w, mid_b;       // [S, S], [S]
  T down_w, down_b;     // [S, K], [K]
};

template <class T>
struct BlockTensors {
  T gcn_w;  // [C, C]
  ChannelUmlpTensors<T> channel;
  SpatialUmlpTensors<T> spatial;
};

template <class T>
struct ModelTensors {
  T embed_w, embed_b;  // [2, C], [C]
  std::vector<BlockTensors<T>> blocks;
  T mu_w, mu_b;  // [C, 3], [3]
  T s_w, s_b;    // [C, 1], [1]
};

using ModelParams = ModelTensors<ad::Tensor>;
using BoundParams = ModelTensors<ad::Var>;

// Calls fn(name, tensor) for every parameter in canonical (manifest) order.
// Works for const and mutable ModelTensors of any element type.
template <class Params, class Fn>
void for_each_parameter(Params&& p, Fn&& fn) {
  fn(std::string("embed.weight"), p.embed_w);
  fn(std::string("embed.bias"), p.embed_b);
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    auto& b = p.blocks[i];
    const std::string pre = "blocks." + std::to_string(i) + ".";
    fn(pre + "gcn.weight", b.gcn_w);
    fn(pre + "channel.ln.gamma", b.channel.ln_gamma);
    fn(pre + "channel.ln.beta", b.channel.ln_beta);
    fn(pre + "channel.down.weight", b.channel.down_w);
    fn(pre + "channel.down.bias", b.channel.down_b);
    fn(pre + "channel.mid.weight", b.channel.mid_w);
    fn(pre + "channel.mid.bias", b.channel.mid_b);
    fn(pre + "channel.up.weight", b.channel.up_w);
    fn(pre + "channel.up.bias", b.channel.up_b);
    fn(pre + "spatial.ln.gamma", b.spatial.ln_gamma);
    fn(pre + "spatial.ln.beta", b.spatial.ln_beta);
    fn(pre + "spatial.up.weight", b.spatial.up_w);
    fn(pre + "spatial.up.bias", b.spatial.up_b);
    fn(pre + "spatial.mid.weight", b.spatial.mid_w);
    fn(pre + "spatial.mid.bias", b.spatial.mid_b);
    fn(pre + "spatial.down.weight", b.spatial.down_w);
    fn(pre + "spatial.down.bias", b.spatial.down_b);
  }
  fn(std::string("decoder_mu.weight"), p.mu_w);
  fn(std::string("decoder_mu.bias"), p.mu_b);
  fn(std::string("decoder_s.weight"), p.s_w);
  fn(std::string("decoder_s.bias"), p.s_b);
}

// (name, shape) for every parameter, in manifest order.
std::vector<std::pair<std::string, ad::Shape>> parameter_manifest(const ModelConfig& cfg);
// Closed-form parameter count for cfg.
std::size_t parameter_count(const ModelConfig& cfg);
// Sum of tensor sizes actually held by params.
std::size_t count_parameters(const ModelParams& params);

// Glorot-uniform weights, zero biases, unit layer-norm gains; deterministic in cfg.seed.
ModelParams init_params(const ModelConfig& cfg);

// Registers params on a tape as leaves.
BoundParams bind(ad::Tape& tape, const ModelParams& params, bool requires_grad);
// Collects d(loss)/d(param) after backward(); missing gradients come back as zeros.
ModelParams gradients(const ad::Tape& tape, const BoundParams& bound, const ModelParams& like);

// Outputs of a tape-level forward. For a [K,2] input: mu [K,3], s [K],
// hidden [K,C]. For a batched [B,K,2] input every shape gains a leading B.
struct ForwardVars {
  ad::Var mu;
  ad::Var s;
  ad::Var hidden;
};

ad::Var channel_umlp(ad::Var x, const ChannelUmlpTensors<ad::Var>& p, double eps);
ad::Var spatial_umlp(ad::Var x, const SpatialUmlpTensors<ad::Var>& p, double eps);

ad::Var encode(const BoundParams& p, const ModelConfig& cfg, const ad::Tensor& adjacency,
               ad::Var j2d);
ForwardVars decode(const BoundParams& p, const ModelConfig& cfg, ad::Var hidden);
ForwardVars forward(const BoundParams& p, const ModelConfig& cfg, const ad::Tensor& adjacency,
                    ad::Var j2d);

// Value-level inference (no gradients).
GaussianPosePrediction forward(const ModelParams& params, const ModelConfig& cfg,
                               const SkeletonGraph& graph, const Pose2D& j2d);
GaussianPosePrediction forward_from_hidden(const ModelParams& params, const ModelConfig& cfg,
                                           const ad::Tensor& hidden);
// Pre-decoder activation for one pose, [K, C].
ad::Tensor hidden_state(const ModelParams& params, const ModelConfig& cfg,
                        const SkeletonGraph& graph, const Pose2D& j2d);

// SHA-256 over names, shapes and raw float64 bytes of every parameter.
std::string parameter_digest(const ModelParams& params);

// Checkpoint file: one line of JSON header, float32 LE payload in manifest
// order, then a 32-byte SHA-256 of everything before it.
enum class CheckpointErrorKind { Io, Digest, Version, Shape, Header };

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  CheckpointErrorKind kind() const noexcept { return kind_; }

 private:
  CheckpointErrorKind kind_;
};

inline constexpr int kCheckpointFormatVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const ModelParams& params, const ModelConfig& cfg);
std::pair<ModelParams, ModelConfig> deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const ModelParams& params, const ModelConfig& cfg, const std::string& path);
std::pair<ModelParams, ModelConfig> load_checkpoint(const std::string& path);

}  // namespace uaopose
