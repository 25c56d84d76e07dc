#include "styleinv/params.hpp"

#include <cmath>

namespace styleinv {

template <typename T>
void adam_step(ModelParams<T>& params, const GradMap<T>& grads, AdamState<T>& state, double lr,
               const AdamConfig& cfg) {
  if (!(lr > 0)) throw Error("adam_step: learning rate must be positive");
  for (const auto& e : params.entries())
    if (e.trainable && !grads.count(e.name))
      throw Error("adam_step: missing gradient for parameter '" + e.name + "'");

  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (auto& e : params.entries()) {
    if (!e.trainable) continue;
    const Tensor<T>& g = grads.at(e.name);
    e.value.same_shape(g, ("adam_step: gradient of " + e.name).c_str());
    auto [it, fresh] = state.moments.try_emplace(e.name, Tensor<T>(g.shape()), Tensor<T>(g.shape()));
    auto& [m, v] = it->second;
    T* w = e.value.data();
    T* md = m.data();
    T* vd = v.data();
    const T* gd = g.data();
    const auto n = static_cast<std::ptrdiff_t>(g.numel());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const double gi = gd[i];
      const double mi = cfg.beta1 * md[i] + (1 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * vd[i] + (1 - cfg.beta2) * gi * gi;
      md[i] = static_cast<T>(mi);
      vd[i] = static_cast<T>(vi);
      w[i] = static_cast<T>(w[i] - lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg.eps));
    }
  }
}

template void adam_step<float>(ModelParams<float>&, const GradMap<float>&, AdamState<float>&,
                               double, const AdamConfig&);
template void adam_step<double>(ModelParams<double>&, const GradMap<double>&, AdamState<double>&,
                                double, const AdamConfig&);

}  // namespace styleinv
