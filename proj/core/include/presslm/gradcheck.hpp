#pragma once

#include <functional>

#include "presslm/tensor.hpp"

namespace presslm {

/// Central-difference gradient of a deterministic scalar function:
/// g_i = (f(x + h e_i) - f(x - h e_i)) / (2h). Run under Precision::f64;
/// float rounding makes the estimate useless at h = 1e-4.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h);

/// Worst relative disagreement between an analytic and a numeric gradient.
/// Coordinates where both are below `floor` are treated as matching zeros.
double max_rel_error(const Tensor& analytic, const Tensor& numeric, double floor = 1e-7);

}  // namespace presslm
