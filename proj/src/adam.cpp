#include "uaopose/adam.hpp"

#include <cmath>

#include "uaopose/errors.hpp"

namespace uaopose {

void adam_step(AdamState& state, const std::vector<ad::Tensor*>& params,
               const std::vector<const ad::Tensor*>& grads) {
  if (params.size() != grads.size())
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients");
  if (state.m.empty() && state.t == 0) {
    for (const ad::Tensor* p : params) {
      state.m.emplace_back(p->size(), 0.0);
      state.v.emplace_back(p->size(), 0.0);
    }
  }
  if (state.m.size() != params.size())
    throw ShapeError("adam_step: parameter list changed between steps");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i]->shape())
      throw ShapeError("adam_step: parameter " + ad::shape_str(params[i]->shape()) +
                       " vs gradient " + ad::shape_str(grads[i]->shape()));
    if (state.m[i].size() != params[i]->size())
      throw ShapeError("adam_step: parameter size changed between steps");
  }

  const AdamHyper& h = state.hyper;
  ++state.t;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto x = params[i]->data();
    auto g = grads[i]->data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < x.size(); ++j) {
      m[j] = h.beta1 * m[j] + (1.0 - h.beta1) * g[j];
      v[j] = h.beta2 * v[j] + (1.0 - h.beta2) * g[j] * g[j];
      x[j] -= h.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + h.eps);
    }
  }
}

void adam_step(AdamState& state, ModelParams& params, const ModelParams& grads) {
  std::vector<ad::Tensor*> ps;
  std::vector<const ad::Tensor*> gs;
  for_each_parameter(params, [&](const std::string&, ad::Tensor& t) { ps.push_back(&t); });
  for_each_parameter(grads, [&](const std::string&, const ad::Tensor& t) { gs.push_back(&t); });
  adam_step(state, ps, gs);
}

}  // namespace uaopose
