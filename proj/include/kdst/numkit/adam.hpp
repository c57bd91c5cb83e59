#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "kdst/common.hpp"
#include "kdst/numkit/tensor.hpp"

namespace kdst::numkit {

// Adam with bias correction and L2 weight decay folded into the gradient.
// m/v buffers are kept per parameter, one shared step counter.
template <class S>
struct AdamStateT {
  std::vector<std::vector<S>> m;
  std::vector<std::vector<S>> v;
  std::int64_t t = 0;
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

using AdamState = AdamStateT<float>;

template <class S>
void adam_step(std::vector<TensorT<S>>& params, AdamStateT<S>& state) {
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t p = 0; p < params.size(); ++p) {
      state.m[p].assign(params[p].numel(), S(0));
      state.v[p].assign(params[p].numel(), S(0));
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam_step: state/param count mismatch");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& w = params[p].values();
    if (state.m[p].size() != w.size()) throw ShapeError("adam_step: moment/param shape mismatch");
    if (!params[p].has_grad()) continue;  // parameter untouched by this loss
    const auto& gv = params[p].grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = static_cast<double>(gv[i]) + state.weight_decay * static_cast<double>(w[i]);
      const double m = state.beta1 * static_cast<double>(state.m[p][i]) + (1.0 - state.beta1) * g;
      const double v = state.beta2 * static_cast<double>(state.v[p][i]) + (1.0 - state.beta2) * g * g;
      state.m[p][i] = static_cast<S>(m);
      state.v[p][i] = static_cast<S>(v);
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      w[i] = static_cast<S>(static_cast<double>(w[i]) - state.lr * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
}

template <class S>
void zero_grads(std::vector<TensorT<S>>& params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace kdst::numkit
