#pragma once

#include <cstdint>
#include <vector>

#include "presslm/autograd.hpp"

namespace presslm {

/// Adam moment accumulators for a fixed parameter list. init() pins the list;
/// the step counter increases by exactly 1 per adam_step call.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;

  std::vector<Tensor> m;
  std::vector<Tensor> v;
  bool initialized = false;

  void init(const std::vector<Parameter*>& params);
};

/// Bias-corrected Adam update over `params` (same list and order as
/// state.init). Gradients are zeroed afterwards.
void adam_step(const std::vector<Parameter*>& params, AdamState& state, double lr);

}  // namespace presslm
