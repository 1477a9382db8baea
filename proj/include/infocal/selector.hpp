#pragma once

#include <cmath>
#include <random>

#include "infocal/encoder.hpp"

namespace infocal {

struct EncoderDims {
  std::size_t vocab = 0;
  std::size_t embed = 0;
  std::size_t hidden = 0;
};

template <typename T, typename Rng>
void add_selector_params(ParamStore<T>& store, const EncoderDims& dims, T embed_scale, Rng& rng) {
  add_embedding_params(store, "selector", dims.vocab, dims.embed, embed_scale, Group::generator, rng);
  add_encoder_params(store, "selector", dims.embed, dims.hidden, Group::generator, rng);
  const T bound = static_cast<T>(1.0 / std::sqrt(static_cast<double>(2 * dims.hidden)));
  store.add("selector.head.w", num::uniform_tensor<T>({2 * dims.hidden, 1}, bound, rng), Group::generator);
  store.add("selector.head.b", Tensor<T>({1, 1}), Group::generator);
}

/// Per-token selection probabilities p = sigmoid(H w + b), clamped to
/// [1e-7, 1 - 1e-7]; invalid positions are pinned to 1e-7. Returns [rows, 1].
template <typename T>
Var<T> select_probs(ParamView<T>& view, const SequenceBatch& batch, std::size_t hidden) {
  const T eps = static_cast<T>(num::kProbEps);
  auto enc = encode(view, "selector", embed(view, "selector", batch.ids), batch, hidden);
  Var<T> logits = num::add(num::matmul(enc.states, view("selector.head.w")), view("selector.head.b"));
  Var<T> p = num::clamp(num::sigmoid(logits), eps, T{1} - eps);
  if (batch.valid_count() == batch.rows()) return p;
  auto valid = batch.valid_column<T>();
  Tensor<T> pad_fill(valid.shape());
  for (std::size_t i = 0; i < valid.size(); ++i) pad_fill[i] = valid[i] != T{0} ? T{0} : eps;
  auto& tape = view.tape();
  return num::add(num::mul(p, tape.constant(std::move(valid))), tape.constant(std::move(pad_fill)));
}

/// Gumbel draws for the select / reject logits of every token.
template <typename T>
struct GumbelNoise {
  Tensor<T> select;  // g(1)
  Tensor<T> reject;  // g(0)
};

/// g = -log(-log u), u ~ U(0, 1).
template <typename T>
T gumbel_from_uniform(T u) {
  return -std::log(-std::log(u));
}

template <typename T, typename Rng>
Tensor<T> sample_gumbel(std::size_t rows, Rng& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Tensor<T> g({rows, 1});
  for (auto& v : g.storage()) {
    double u = uniform(rng);
    u = std::clamp(u, 1e-12, 1.0 - 1e-12);
    v = static_cast<T>(gumbel_from_uniform(u));
  }
  return g;
}

template <typename T, typename Rng>
GumbelNoise<T> sample_gumbel_noise(std::size_t rows, Rng& rng) {
  GumbelNoise<T> n;
  n.select = sample_gumbel<T>(rows, rng);
  n.reject = sample_gumbel<T>(rows, rng);
  return n;
}

template <typename T>
struct RelaxedMask {
  Var<T> m;  // [rows, 1], entries in [0, 1]
  T tau{};
  bool hard = false;
  GumbelNoise<T> noise;
};

/// Independent two-class Gumbel-softmax per token:
///   m = e^{(log p + g1)/tau} / (e^{(log p + g1)/tau} + e^{(log(1-p) + g0)/tau})
/// evaluated as sigmoid(((log p + g1) - (log(1-p) + g0)) / tau).
template <typename T>
Var<T> relaxed_mask(Var<T> p, T tau, const GumbelNoise<T>& noise) {
  expects(tau > T{0}, "sample_mask: temperature must be positive");
  expects(noise.select.size() == p.value().size() && noise.reject.size() == p.value().size(),
          "sample_mask: noise does not match probabilities");
  auto& tape = *p.tape;
  Var<T> keep = num::add(num::log_prob(p), tape.constant(noise.select));
  Var<T> drop = num::add(num::log_prob(num::affine(p, T{-1}, T{1})), tape.constant(noise.reject));
  return num::sigmoid(num::affine(num::sub(keep, drop), T{1} / tau, T{0}));
}

/// Deterministic inference mask [p > 0.5].
template <typename T>
Tensor<T> hard_mask(const Tensor<T>& p) {
  Tensor<T> m(p.shape());
  for (std::size_t i = 0; i < p.size(); ++i) m[i] = p[i] > T{0.5} ? T{1} : T{0};
  return m;
}

template <typename T, typename Rng>
RelaxedMask<T> sample_mask(Var<T> p, T tau, Rng& rng, bool hard) {
  expects(tau > T{0}, "sample_mask: temperature must be positive");
  RelaxedMask<T> out;
  out.tau = tau;
  out.hard = hard;
  if (hard) {
    out.m = p.tape->constant(hard_mask(p.value()));
    return out;
  }
  out.noise = sample_gumbel_noise<T>(p.value().size(), rng);
  out.m = relaxed_mask(p, tau, out.noise);
  return out;
}

/// Sum over valid tokens of KL(Bernoulli(p_i) || Bernoulli(r_select)), averaged
/// over the sequences of the batch.
template <typename T>
Var<T> ib_loss(Var<T> p, const SequenceBatch& batch, T r_select) {
  expects(r_select > T{0} && r_select < T{1}, "ib_loss: prior must lie in (0, 1)");
  expects(p.rows() == batch.rows(), "ib_loss: probabilities do not match batch layout");
  auto& tape = *p.tape;
  Var<T> q = num::affine(p, T{-1}, T{1});
  Var<T> sel = num::mul(p, num::affine(num::log_prob(p), T{1}, -std::log(r_select)));
  Var<T> rej = num::mul(q, num::affine(num::log_prob(q), T{1}, -std::log(T{1} - r_select)));
  Var<T> kl = num::mul(num::add(sel, rej), tape.constant(batch.valid_column<T>()));
  return num::affine(num::sum(kl), T{1} / static_cast<T>(batch.size), T{0});
}

}  // namespace infocal
