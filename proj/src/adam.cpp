#include "nbsa/adam.hpp"

#include <cmath>

namespace nbsa {

AdamState make_adam_state(const std::vector<Tensor>& params, double lr) {
  AdamState st;
  st.lr = lr;
  st.m.reserve(params.size());
  st.v.reserve(params.size());
  for (const auto& p : params) {
    st.m.emplace_back(static_cast<size_t>(p.size()), 0.0);
    st.v.emplace_back(static_cast<size_t>(p.size()), 0.0);
  }
  return st;
}

void adam_step(std::vector<Tensor>& params, const std::vector<std::vector<double>>& grads,
               AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw ValidationError("adam_step: parameter/gradient/state counts disagree");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const auto& g = grads[i];
    if (static_cast<size_t>(p.size()) != g.size())
      throw ValidationError("adam_step: gradient size mismatch for parameter " + std::to_string(i));
    auto& m = state.m[i];
    auto& v = state.v[i];
    double* pd = p.data();
    for (size_t j = 0; j < g.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      pd[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

void adam_step(std::vector<Tensor>& params, AdamState& state) {
  std::vector<std::vector<double>> grads;
  grads.reserve(params.size());
  for (const auto& p : params) {
    if (!p.has_grad()) throw ValidationError("adam_step: parameter has no gradient");
    grads.push_back(p.grad());
  }
  adam_step(params, grads, state);
}

}  // namespace nbsa
