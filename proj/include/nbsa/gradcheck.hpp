#pragma once

#include <functional>

#include "nbsa/tensor.hpp"

namespace nbsa {

// Central-difference gradient oracle: (f(x+h·e_i) − f(x−h·e_i)) / 2h per
// coordinate. f must be a pure function of the data; it is evaluated on
// detached copies, so it may build its own tape internally.
Tensor finite_diff_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                            double h = 1e-5);

// Largest scaled mismatch between two gradients of equal length:
// max_i |a_i − b_i| / max(|a_i|, |b_i|, floor). Used by gradient checks.
double max_rel_error(const std::vector<double>& a, const std::vector<double>& b,
                     double floor = 1e-6);

}  // namespace nbsa
