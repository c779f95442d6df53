#include "fedali/optim.hpp"

#include <cmath>

namespace fedali {

void adam_step(Tensor& param, std::span<const double> grad, AdamState& state,
               const AdamConfig& cfg, const std::string& name) {
  const std::size_t n = param.size();
  FEDALI_CHECK(grad.size() == n, "adam_step: gradient size ", grad.size(),
               " != parameter size ", n, " for '", name, "'");
  for (std::size_t i = 0; i < n; ++i)
    FEDALI_CHECK(std::isfinite(grad[i]), "adam_step: non-finite gradient in '",
                 name, "' at index ", i);

  if (state.m.size() != n) {
    state.m.assign(n, 0.0);
    state.v.assign(n, 0.0);
    state.step = 0;
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, state.step);
  const double bc2 = 1.0 - std::pow(cfg.beta2, state.step);

  double* p = param.data();
  for (std::size_t i = 0; i < n; ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

}  // namespace fedali
