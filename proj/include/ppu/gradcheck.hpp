#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "ppu/error.hpp"
#include "ppu/tensor.hpp"

namespace ppu {

// Builds a scalar loss on the given tape from the given inputs.
using LossBuilder =
    std::function<Tensor(Tape&, const std::vector<Tensor>& inputs)>;

// Compares reverse-mode gradients against central differences for every
// input that requires gradients. Returns
//   max |analytic - numeric| / max(1, |numeric|)
// over all checked coordinates.
inline double finite_difference_check(const LossBuilder& fn,
                                      std::vector<Tensor> inputs,
                                      double eps) {
  for (Tensor& t : inputs) {
    if (t.requires_grad()) t.zero_grad();
  }
  {
    Tape tape;
    Tensor loss = fn(tape, inputs);
    if (!std::isfinite(loss.item())) {
      throw NumericError("finite_difference_check: non-finite loss");
    }
    tape.backward(loss);
  }
  auto evaluate = [&]() {
    Tape frozen(false);
    const double v = fn(frozen, inputs).item();
    if (!std::isfinite(v)) {
      throw NumericError("finite_difference_check: non-finite evaluation");
    }
    return v;
  };
  double worst = 0.0;
  for (Tensor& t : inputs) {
    if (!t.requires_grad()) continue;
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    auto x = t.data();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double saved = x[i];
      x[i] = saved + eps;
      const double up = evaluate();
      x[i] = saved - eps;
      const double down = evaluate();
      x[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double err =
          std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace ppu
