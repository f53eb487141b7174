#include "presslm/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "presslm/errors.hpp"

namespace presslm {

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double h) {
  if (h <= 0.0) {
    throw ConfigError("finite_diff_grad: h must be positive");
  }
  Tensor g(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + h;
    const double fp = f(probe);
    probe[i] = saved - h;
    const double fm = f(probe);
    probe[i] = saved;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

double max_rel_error(const Tensor& analytic, const Tensor& numeric, double floor) {
  if (!same_shape(analytic, numeric)) {
    throw ShapeError("max_rel_error: shape mismatch " + analytic.shape_str() + " vs " +
                     numeric.shape_str());
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i];
    const double n = numeric[i];
    const double denom = std::max(std::abs(a), std::abs(n));
    if (denom < floor) continue;
    worst = std::max(worst, std::abs(a - n) / denom);
  }
  return worst;
}

}  // namespace presslm
