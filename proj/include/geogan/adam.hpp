#pragma once

#include <cmath>

#include "geogan/tensor.hpp"

namespace geogan {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  Tensor<T> m;  // first moment
  Tensor<T> v;  // second moment
  std::int64_t step = 0;
};

// Standard Adam with bias correction. Moments are created lazily on the
// first step so states can be default-constructed per parameter name.
template <typename T>
void adam_step(Tensor<T>& param, const Tensor<T>& grad, AdamState<T>& state,
               const AdamConfig& cfg) {
  if (!(cfg.lr > 0.0)) throw ValidationError("adam: lr must be > 0");
  if (!param.same_shape(grad))
    throw ValidationError("adam: param/grad shape mismatch");
  if (state.m.numel() == 0) {
    state.m.reset(param.shape());
    state.v.reset(param.shape());
  }
  if (!state.m.same_shape(param))
    throw ValidationError("adam: state shape mismatch");

  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::int64_t i = 0; i < param.numel(); ++i) {
    double g = static_cast<double>(grad[i]);
    double m = cfg.beta1 * static_cast<double>(state.m[i]) + (1.0 - cfg.beta1) * g;
    double v = cfg.beta2 * static_cast<double>(state.v[i]) + (1.0 - cfg.beta2) * g * g;
    state.m[i] = static_cast<T>(m);
    state.v[i] = static_cast<T>(v);
    double update = (m / bc1) / (std::sqrt(v / bc2) + cfg.eps);
    param[i] = static_cast<T>(static_cast<double>(param[i]) - cfg.lr * update);
  }
}

}  // namespace geogan
