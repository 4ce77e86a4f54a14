#pragma once

#include <cmath>

#include "capit/nn/params.hpp"

namespace capit::nn {

template <typename Scalar>
struct AdamState {
  ParamStore<Scalar> first;
  ParamStore<Scalar> second;
  long long step = 0;

  static AdamState for_params(const ParamStore<Scalar>& params) {
    return {params.zeros_like(), params.zeros_like(), 0};
  }
};

struct AdamConfig {
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update: params -= lr * m_hat / (sqrt(v_hat) + eps).
template <typename Scalar>
void adam_step(ParamStore<Scalar>& params, const ParamStore<Scalar>& grads, AdamState<Scalar>& state, double lr,
               const AdamConfig& cfg = {}) {
  ++state.step;
  const Scalar b1 = static_cast<Scalar>(cfg.beta1), b2 = static_cast<Scalar>(cfg.beta2);
  const Scalar c1 = static_cast<Scalar>(1.0 - std::pow(cfg.beta1, static_cast<double>(state.step)));
  const Scalar c2 = static_cast<Scalar>(1.0 - std::pow(cfg.beta2, static_cast<double>(state.step)));
  const Scalar step = static_cast<Scalar>(lr), eps = static_cast<Scalar>(cfg.eps);
  for (int k = 0; k < params.size(); ++k) {
    auto& m = state.first[k];
    auto& v = state.second[k];
    m = b1 * m + (1 - b1) * grads[k];
    v = b2 * v + (1 - b2) * grads[k].cwiseAbs2();
    params[k].array() -= step * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
}

}  // namespace capit::nn
