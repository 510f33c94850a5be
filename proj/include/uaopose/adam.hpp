#pragma once

#include <cstdint>
#include <vector>

#include "uaopose/gumlp.hpp"
#include "uaopose/tensor.hpp"

namespace uaopose {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Moments are allocated on the first step, one buffer per parameter tensor.
struct AdamState {
  AdamHyper hyper;
  std::uint64_t t = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

// One bias-corrected Adam update of params in place. grads[i] pairs with
// params[i]; the pairing and every shape must stay the same across calls.
void adam_step(AdamState& state, const std::vector<ad::Tensor*>& params,
               const std::vector<const ad::Tensor*>& grads);
void adam_step(AdamState& state, ModelParams& params, const ModelParams& grads);

}  // namespace uaopose
