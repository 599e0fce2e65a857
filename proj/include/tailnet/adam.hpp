#pragma once

#include <vector>

#include "tailnet/tensor.hpp"

namespace tailnet {

// First/second moment accumulators, one pair per parameter tensor.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  int64_t step = 0;
  double beta1_pow = 1.0;  // beta1^step, kept incrementally
  double beta2_pow = 1.0;

  static AdamState init(const std::vector<const Tensor*>& params);
};

// One update over all parameters: bias-corrected Adam plus decoupled weight
// decay (the decay multiplies the parameter directly, outside the moment
// estimates). beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
               AdamState& state, double lr, double l2);

}  // namespace tailnet
