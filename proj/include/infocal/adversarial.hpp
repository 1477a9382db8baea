#pragma once

#include <cmath>

#include "infocal/guider.hpp"

namespace infocal {

/// d -> hidden (tanh) -> 1 (sigmoid). Its parameters form their own group.
template <typename T, typename Rng>
void add_discriminator_params(ParamStore<T>& store, std::size_t features, std::size_t hidden, Rng& rng) {
  const T b1 = static_cast<T>(1.0 / std::sqrt(static_cast<double>(features)));
  const T b2 = static_cast<T>(1.0 / std::sqrt(static_cast<double>(hidden)));
  store.add("disc.w1", num::uniform_tensor<T>({features, hidden}, b1, rng), Group::discriminator);
  store.add("disc.b1", Tensor<T>({1, hidden}), Group::discriminator);
  store.add("disc.w2", num::uniform_tensor<T>({hidden, 1}, b2, rng), Group::discriminator);
  store.add("disc.b2", Tensor<T>({1, 1}), Group::discriminator);
}

/// Probability that `z` [size, d] is a guider feature, clamped to
/// [1e-7, 1 - 1e-7].
template <typename T>
Var<T> discriminate(ParamView<T>& view, Var<T> z) {
  const auto& w1 = view.store().value("disc.w1");
  if (z.cols() != w1.rows()) throw ContractViolation("discriminate: feature dimension " + std::to_string(z.cols()) +
                                     " does not match discriminator input " + std::to_string(w1.rows()));
  const T eps = static_cast<T>(num::kProbEps);
  Var<T> hidden = num::tanh(num::add(num::matmul(z, view("disc.w1")), view("disc.b1")));
  Var<T> out = num::sigmoid(num::add(num::matmul(hidden, view("disc.w2")), view("disc.b2")));
  return num::clamp(out, eps, T{1} - eps);
}

/// Discriminator objective. The default follows
///   L_d = -log D(z_nero) + log D(z~_nero)
/// with z_nero the "real" (guider) feature; `standard` switches the fake term to
/// the usual -log(1 - D(z~_nero)).
template <typename T>
Var<T> d_loss(Var<T> d_real, Var<T> d_fake, bool standard = false) {
  Var<T> real_term = num::neg(num::log_prob(d_real));
  Var<T> fake_term = standard ? num::neg(num::log_prob(num::affine(d_fake, T{-1}, T{1}))) : num::log_prob(d_fake);
  return num::add(num::mean(real_term), num::mean(fake_term));
}

/// Generator side: -log D(z~_nero), batch mean.
template <typename T>
Var<T> g_loss(Var<T> d_fake) {
  return num::neg(num::mean(num::log_prob(d_fake)));
}

}  // namespace infocal
