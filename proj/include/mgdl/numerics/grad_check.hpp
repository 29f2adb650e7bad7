#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "mgdl/numerics/tensor.hpp"

namespace mgdl::num {

/// Max over coordinates of |analytic − central difference| / max(1e-8, |analytic|)
/// for the scalar `loss()` with respect to the leaf `param`. `param` is
/// perturbed in place and restored; its gradient buffer is left zeroed.
inline double grad_check_param(const std::function<Tensor()>& loss, Tensor param, double h = 1e-5) {
  if (!(h > 0.0)) throw DomainError("grad_check: step must be positive");
  const bool had = param.requires_grad();
  param.set_requires_grad(true);
  param.zero_grad();
  {
    Tensor l = loss();
    if (l.requires_grad()) backward(l);
  }
  std::vector<double> analytic(param.size(), 0.0);
  if (param.has_grad()) std::copy(param.grad().begin(), param.grad().end(), analytic.begin());
  param.zero_grad();

  double worst = 0.0;
  auto values = param.mutable_data();
  NoGradGuard no_grad;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double original = values[i];
    values[i] = original + h;
    const double up = loss().item();
    values[i] = original - h;
    const double down = loss().item();
    values[i] = original;
    const double numeric = (up - down) / (2.0 * h);
    const double err = std::abs(analytic[i] - numeric) / std::max(1e-8, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  param.set_requires_grad(had);
  return worst;
}

/// Same check for a function of a single tensor argument.
inline double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h = 1e-5) {
  Tensor leaf = x.detach(true);
  return grad_check_param([&] { return f(leaf); }, leaf, h);
}

}  // namespace mgdl::num
