#pragma once

#include <random>

#include "infocal/predictor.hpp"

namespace infocal {

/// Floor added to the softplus scale so that log(sigma) stays finite.
inline constexpr double kSigmaFloor = 1e-4;

template <typename T, typename Rng>
void add_guider_params(ParamStore<T>& store, const EncoderDims& dims, T embed_scale, Rng& rng) {
  add_embedding_params(store, "guider", dims.vocab, dims.embed, embed_scale, Group::guider, rng);
  add_encoder_params(store, "guider", dims.embed, dims.hidden, Group::guider, rng);
  const std::size_t d = 2 * dims.hidden;
  const T bound = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d)));
  store.add("guider.mean.w", num::uniform_tensor<T>({d, d}, bound, rng), Group::guider);
  store.add("guider.mean.b", Tensor<T>({1, d}), Group::guider);
  store.add("guider.scale.w", num::uniform_tensor<T>({d, d}, bound, rng), Group::guider);
  store.add("guider.scale.b", Tensor<T>({1, d}), Group::guider);
}

template <typename T>
struct GuiderSample {
  Var<T> mu;     // [size, d]
  Var<T> sigma;  // [size, d], strictly positive
  Tensor<T> noise;
  Var<T> z;      // z_nero = noise * sigma + mu
  Var<T> output;
};

template <typename T, typename Rng>
Tensor<T> sample_normal(std::size_t rows, std::size_t cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor<T> t = Tensor<T>::zeros(rows, cols);
  for (auto& v : t.storage()) v = static_cast<T>(normal(rng));
  return t;
}

/// Encodes the full input, forms the Gaussian feature by reparameterisation
/// with the supplied standard-normal `noise` [size, d], and predicts through
/// the shared head.
template <typename T>
GuiderSample<T> guider_forward(ParamView<T>& view, const SequenceBatch& batch, Tensor<T> noise, std::size_t hidden,
                               TaskMode mode) {
  const std::size_t d = 2 * hidden;
  expects(noise.rank() == 2 && noise.rows() == batch.size && noise.cols() == d,
          "guider_forward: noise must be [batch, 2*hidden]");
  auto h = encode(view, "guider", embed(view, "guider", batch.ids), batch, hidden).pooled;
  GuiderSample<T> s;
  s.mu = num::add(num::matmul(h, view("guider.mean.w")), view("guider.mean.b"));
  s.sigma = num::affine(num::softplus(num::add(num::matmul(h, view("guider.scale.w")), view("guider.scale.b"))), T{1},
                        static_cast<T>(kSigmaFloor));
  s.noise = std::move(noise);
  s.z = num::add(num::mul(view.tape().constant(s.noise), s.sigma), s.mu);
  s.output = apply_head(view, s.z, mode);
  return s;
}

template <typename T>
Var<T> guide_loss(Var<T> output, std::span<const double> labels, TaskMode mode) {
  return prediction_loss(output, labels, mode);
}

/// Sum over feature coordinates of 0.5 (mu^2 + sigma^2 - 1 - 2 log sigma),
/// averaged over the batch rows.
template <typename T>
Var<T> mi_loss(Var<T> mu, Var<T> sigma) {
  expects(mu.value().same_shape(sigma.value()), "mi_loss: mu and sigma shapes differ");
  for (auto s : sigma.value().values()) expects(s > T{0}, "mi_loss: sigma must be positive");
  Var<T> terms = num::add(num::add(num::mul(mu, mu), num::mul(sigma, sigma)),
                          num::affine(num::log(sigma), T{-2}, T{-1}));
  return num::affine(num::sum(terms), T{0.5} / static_cast<T>(mu.rows()), T{0});
}

}  // namespace infocal
