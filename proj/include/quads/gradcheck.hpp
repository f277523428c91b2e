#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "quads/tensor.hpp"

namespace quads::ad {

struct GradCheckResult {
  // max over checked coordinates of |ad - fd| / max(1, |ad|)
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  // Coordinates where the one-sided difference quotients disagree, i.e. the
  // function has a kink there (abs/relu at exactly zero). Not counted above.
  std::vector<std::size_t> excluded;
  std::vector<double> autodiff_grad;
  std::vector<double> numeric_grad;
};

using ScalarFn = std::function<Tensor(Tape&, const Tensor&)>;

// Compares the tape gradient of f at x against central differences with step
// eps. Throws quads::NumericalError when f(x) is not finite.
GradCheckResult finite_diff_check(const ScalarFn& f, const Tensor& x, double eps = 1e-6);

}  // namespace quads::ad
