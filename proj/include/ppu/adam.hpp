#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "ppu/error.hpp"
#include "ppu/tensor.hpp"

namespace ppu {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Moment buffers for one parameter tensor.
struct AdamSlot {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
};

struct AdamState {
  AdamConfig config;
  std::vector<AdamSlot> slots;  // one per parameter, in parameter order
};

// Bias-corrected Adam update of a single buffer.
inline void adam_update(std::span<double> param, std::span<const double> grad,
                        AdamSlot& slot, const AdamConfig& cfg) {
  if (grad.size() != param.size()) {
    throw DimensionError("adam: gradient size does not match parameter");
  }
  if (slot.m.empty()) {
    slot.m.assign(param.size(), 0.0);
    slot.v.assign(param.size(), 0.0);
  }
  if (slot.m.size() != param.size() || slot.v.size() != param.size()) {
    throw DimensionError("adam: moment buffers do not match parameter");
  }
  ++slot.step;
  const double t = static_cast<double>(slot.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    slot.m[i] = cfg.beta1 * slot.m[i] + (1.0 - cfg.beta1) * grad[i];
    slot.v[i] = cfg.beta2 * slot.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double m_hat = slot.m[i] / c1;
    const double v_hat = slot.v[i] / c2;
    param[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

// Steps every parameter whose `active` flag is set, using its grad buffer.
inline void adam_step(std::span<Tensor> params, AdamState& state,
                      std::span<const bool> active = {}) {
  if (state.slots.empty()) state.slots.resize(params.size());
  if (state.slots.size() != params.size()) {
    throw DimensionError("adam: state tracks a different parameter count");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!active.empty() && !active[i]) continue;
    Tensor& p = params[i];
    std::span<const double> g = std::as_const(p).grad();
    adam_update(p.data(), g, state.slots[i], state.config);
  }
}

}  // namespace ppu
