#include "presslm/optim.hpp"

#include <cmath>

#include "presslm/errors.hpp"

namespace presslm {

void AdamState::init(const std::vector<Parameter*>& params) {
  m.clear();
  v.clear();
  m.reserve(params.size());
  v.reserve(params.size());
  for (const Parameter* p : params) {
    m.push_back(Tensor::zeros(p->value.shape()));
    v.push_back(Tensor::zeros(p->value.shape()));
  }
  step = 0;
  initialized = true;
}

void adam_step(const std::vector<Parameter*>& params, AdamState& state, double lr) {
  if (!state.initialized) {
    throw ConfigError("adam_step: state not initialized");
  }
  if (params.size() != state.m.size()) {
    throw ConfigError("adam_step: parameter list does not match state (" +
                      std::to_string(params.size()) + " vs " + std::to_string(state.m.size()) +
                      ")");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    if (!same_shape(p.value, state.m[pi])) {
      throw ShapeError("adam_step: parameter shape " + p.value.shape_str() +
                       " does not match moment shape " + state.m[pi].shape_str());
    }
    if (!p.trainable) {
      p.zero_grad();
      continue;
    }
    Tensor& m = state.m[pi];
    Tensor& v = state.v[pi];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.value[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
    p.value.quantize();
    p.zero_grad();
  }
}

}  // namespace presslm
