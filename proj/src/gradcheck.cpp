#include "nbsa/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace nbsa {

Tensor finite_diff_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                            double h) {
  if (h <= 0.0) throw ValidationError("finite_diff_gradient: h must be positive");
  Tensor g = Tensor::zeros(x.shape());
  Tensor probe = x.detached_clone();
  double* pd = probe.data();
  double* gd = g.data();
  const int64_t n = x.size();
  for (int64_t i = 0; i < n; ++i) {
    const double orig = pd[i];
    pd[i] = orig + h;
    const double fp = f(probe);
    pd[i] = orig - h;
    const double fm = f(probe);
    pd[i] = orig;
    gd[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

double max_rel_error(const std::vector<double>& a, const std::vector<double>& b, double floor) {
  if (a.size() != b.size()) throw ValidationError("max_rel_error: length mismatch");
  double worst = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::fabs(a[i]), std::fabs(b[i]), floor});
    worst = std::max(worst, std::fabs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace nbsa
