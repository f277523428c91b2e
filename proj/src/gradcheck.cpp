#include "quads/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "quads/error.hpp"

namespace quads::ad {
namespace {

double evaluate(const ScalarFn& f, const Shape& shape, std::vector<double> values) {
  Tape tape;
  const Tensor y = f(tape, Tensor(shape, std::move(values), false));
  return y.item();
}

}  // namespace

GradCheckResult finite_diff_check(const ScalarFn& f, const Tensor& x, double eps) {
  if (!(eps > 0.0)) throw Error("finite_diff_check: eps must be positive");
  const std::vector<double> base(x.data().begin(), x.data().end());

  GradCheckResult result;
  {
    Tape tape;
    const Tensor leaf(x.shape(), base, true);
    const Tensor y = f(tape, leaf);
    if (!std::isfinite(y.item())) throw NumericalError("finite_diff_check: f(x) is not finite");
    tape.backward(y);
    result.autodiff_grad.assign(leaf.grad().begin(), leaf.grad().end());
    if (result.autodiff_grad.empty()) result.autodiff_grad.assign(base.size(), 0.0);
  }
  const double f0 = evaluate(f, x.shape(), base);

  result.numeric_grad.resize(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    std::vector<double> plus = base, minus = base;
    plus[i] += eps;
    minus[i] -= eps;
    const double fp = evaluate(f, x.shape(), plus);
    const double fm = evaluate(f, x.shape(), minus);
    const double central = (fp - fm) / (2.0 * eps);
    result.numeric_grad[i] = central;

    const double right = (fp - f0) / eps;
    const double left = (f0 - fm) / eps;
    if (std::fabs(right - left) > 1e-3 * std::max(1.0, std::fabs(central))) {
      result.excluded.push_back(i);
      continue;
    }
    const double ad = result.autodiff_grad[i];
    const double rel = std::fabs(ad - central) / std::max(1.0, std::fabs(ad));
    if (rel > result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_index = i;
    }
  }
  return result;
}

}  // namespace quads::ad
