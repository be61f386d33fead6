#pragma once

// AdamW with decoupled weight decay and a linear-warmup cosine schedule.

#include <cmath>
#include <cstddef>
#include <numbers>

#include "nar/model.hpp"

namespace nar {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

struct AdamWState {
  ModelParams first;   // m
  ModelParams second;  // v

  static AdamWState for_params(const ModelParams& p) {
    return {ModelParams::zeros(p.dim(), p.hidden(), p.classes()),
            ModelParams::zeros(p.dim(), p.hidden(), p.classes())};
  }
};

// One update at 1-based step `step`:
//   theta <- theta * (1 - lr * wd)
//   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
//   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)
inline void adamw_step(ModelParams& params, const Gradients& grads, AdamWState& state,
                       std::size_t step, double lr, const AdamWConfig& cfg) {
  const double bias1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bias2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  const double decay = 1.0 - lr * cfg.weight_decay;
  auto p_tensors = params.tensors();
  auto g_tensors = grads.tensors();
  auto m_tensors = state.first.tensors();
  auto v_tensors = state.second.tensors();
  for (std::size_t t = 0; t < p_tensors.size(); ++t) {
    auto p = p_tensors[t]->values();
    auto g = g_tensors[t]->values();
    auto m = m_tensors[t]->values();
    auto v = v_tensors[t]->values();
    for (std::size_t k = 0; k < p.size(); ++k) {
      p[k] *= decay;
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
      const double m_hat = m[k] / bias1;
      const double v_hat = v[k] / bias2;
      p[k] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

// Learning rate for 1-based optimizer step `step` (step 0 gives 0):
// base * step / warmup during warmup, then cosine annealing from base at
// `warmup` down to 0 at `total_steps`.
inline double lr_at(std::size_t step, double base, std::size_t warmup, std::size_t total_steps) {
  if (warmup > 0 && step <= warmup) {
    return base * static_cast<double>(step) / static_cast<double>(warmup);
  }
  if (total_steps <= warmup) return base;
  const double progress = std::min(1.0, static_cast<double>(step - warmup) /
                                            static_cast<double>(total_steps - warmup));
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace nar
