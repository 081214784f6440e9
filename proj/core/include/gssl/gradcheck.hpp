#pragma once

#include <functional>

#include "gssl/tensor.hpp"

namespace gssl {

// Compares the reverse-mode gradient of a scalar function against central
// differences. Returns max_i |analytic_i - numeric_i| / max(1, |numeric_i|).
// Throws std::domain_error if f is non-finite at any probed point.
double gradient_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                      double h = 1e-5);

}  // namespace gssl
