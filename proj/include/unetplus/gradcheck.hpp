#pragma once

#include <functional>

#include "unetplus/autodiff.hpp"

namespace unetplus {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;  // gradient at worst_index
  double numeric = 0.0;   // central difference at worst_index
};

// Scalar-valued function of one tensor input, expressed on a tape.
using ScalarFn = std::function<Var<double>(Var<double>)>;

// Compares reverse-mode gradients against central differences:
// max_i |(f(x+eps e_i) - f(x-eps e_i)) / (2 eps) - grad_i| / (|grad_i| + eps).
GradCheckResult finite_diff_check(const ScalarFn& f, const Tensor<double>& x, double eps = 1e-5);

}  // namespace unetplus
