#include "unetplus/gradcheck.hpp"

#include <cmath>

namespace unetplus {
namespace {

double evaluate(const ScalarFn& f, const Tensor<double>& x) {
  Tape<double> tape;
  Var<double> out = f(tape.constant(x));
  return out.value().item();
}

}  // namespace

GradCheckResult finite_diff_check(const ScalarFn& f, const Tensor<double>& x, double eps) {
  if (!(eps > 0.0)) throw ConfigError("finite_diff_check: eps must be positive");
  Tensor<double> analytic;
  {
    Tape<double> tape;
    Var<double> in = tape.leaf(x, true);
    Var<double> out = f(in);
    analytic = tape.backward(out)[in];
  }
  GradCheckResult result;
  Tensor<double> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + eps;
    const double plus = evaluate(f, probe);
    probe[i] = x[i] - eps;
    const double minus = evaluate(f, probe);
    probe[i] = x[i];
    const double numeric = (plus - minus) / (2.0 * eps);
    const double err = std::abs(numeric - analytic[i]) / (std::abs(analytic[i]) + eps);
    if (i == 0 || err > result.max_rel_error) {
      result = GradCheckResult{err, i, analytic[i], numeric};
    }
  }
  return result;
}

}  // namespace unetplus
