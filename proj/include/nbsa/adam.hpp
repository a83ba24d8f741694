#pragma once

#include <cstdint>
#include <vector>

#include "nbsa/tensor.hpp"

namespace nbsa {

// ADAM with bias correction. One state covers an ordered parameter list; the
// list must be identical (same tensors, same order) on every step.
struct AdamState {
  std::int64_t step = 0;
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

AdamState make_adam_state(const std::vector<Tensor>& params, double lr);

// In-place update from explicit gradients.
void adam_step(std::vector<Tensor>& params, const std::vector<std::vector<double>>& grads,
               AdamState& state);

// Convenience: reads each parameter's grad slot (backward must have run).
void adam_step(std::vector<Tensor>& params, AdamState& state);

}  // namespace nbsa
