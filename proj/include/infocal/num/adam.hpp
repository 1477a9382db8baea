#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "infocal/num/params.hpp"

namespace infocal::num {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  AdamConfig config;
  std::map<std::string, Tensor<T>> first_moment;
  std::map<std::string, Tensor<T>> second_moment;
  std::int64_t step = 0;
};

/// One bias-corrected Adam update of every parameter in `groups`. Parameters
/// with no entry in `grads` are left alone.
template <typename T>
void adam_step(ParamStore<T>& store, GroupSet groups, const Gradients<T>& grads, AdamState<T>& state) {
  for (const auto& [name, g] : grads) {
    if (!store.contains(name)) throw ContractViolation("adam_step: gradient for unknown parameter '" + name + "'");
    if (!store.value(name).same_shape(g)) throw ContractViolation("adam_step: gradient shape mismatch for '" + name + "'");
  }
  ++state.step;
  const auto& c = state.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (auto& [name, param] : store) {
    if (!groups.contains(param.group)) continue;
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    const auto& g = git->second;
    auto& m = state.first_moment.try_emplace(name, param.value.shape(), T{0}).first->second;
    auto& v = state.second_moment.try_emplace(name, param.value.shape(), T{0}).first->second;
    auto& w = param.value;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      const double mi = c.beta1 * static_cast<double>(m[i]) + (1.0 - c.beta1) * gi;
      const double vi = c.beta2 * static_cast<double>(v[i]) + (1.0 - c.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = c.lr * (mi / bc1) / (std::sqrt(vi / bc2) + c.eps);
      w[i] = static_cast<T>(static_cast<double>(w[i]) - update);
    }
  }
}

}  // namespace infocal::num
