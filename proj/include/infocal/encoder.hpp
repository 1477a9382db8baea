#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "infocal/batch.hpp"
#include "infocal/num/ops.hpp"
#include "infocal/num/params.hpp"

namespace infocal {

using num::Group;
using num::ParamStore;
using num::ParamView;
using num::Tensor;
using num::Var;

/// Registers a `vocab x dim` table under `<prefix>.embed`. Row 0 (pad) is zero.
template <typename T, typename Rng>
void add_embedding_params(ParamStore<T>& store, const std::string& prefix, std::size_t vocab, std::size_t dim,
                          T scale, Group group, Rng& rng) {
  auto table = num::uniform_tensor<T>({vocab, dim}, scale, rng);
  for (std::size_t c = 0; c < dim; ++c) table(0, c) = T{0};
  store.add(prefix + ".embed", std::move(table), group);
}

template <typename T>
Var<T> embed(ParamView<T>& view, const std::string& prefix, std::span<const TokenId> ids) {
  return num::embedding(view(prefix + ".embed"), ids, kPadId);
}

/// Gated recurrent cell (update gate z, reset gate r, candidate n):
///   r = s(x Wxr + bxr + h Whr + bhr)
///   z = s(x Wxz + bxz + h Whz + bhz)
///   n = tanh(x Wxn + bxn + r * (h Whn + bhn))
///   h' = (1 - z) * n + z * h
/// Gate blocks are packed as columns [r | z | n] of `wx` [in, 3h] and `wh` [h, 3h].
template <typename T, typename Rng>
void add_gru_params(ParamStore<T>& store, const std::string& prefix, std::size_t input, std::size_t hidden,
                    Group group, Rng& rng) {
  const T bound = static_cast<T>(1.0 / std::sqrt(static_cast<double>(hidden)));
  store.add(prefix + ".wx", num::uniform_tensor<T>({input, 3 * hidden}, bound, rng), group);
  store.add(prefix + ".wh", num::uniform_tensor<T>({hidden, 3 * hidden}, bound, rng), group);
  store.add(prefix + ".bx", num::uniform_tensor<T>({1, 3 * hidden}, bound, rng), group);
  store.add(prefix + ".bh", num::uniform_tensor<T>({1, 3 * hidden}, bound, rng), group);
}

/// One cell update from a precomputed input projection `xp = x Wx + bx`.
template <typename T>
Var<T> gru_step(ParamView<T>& view, const std::string& prefix, Var<T> xp, Var<T> h, std::size_t hidden) {
  Var<T> hp = num::add(num::matmul(h, view(prefix + ".wh")), view(prefix + ".bh"));
  Var<T> rz = num::sigmoid(num::add(num::slice_cols(xp, 0, 2 * hidden), num::slice_cols(hp, 0, 2 * hidden)));
  Var<T> r = num::slice_cols(rz, 0, hidden);
  Var<T> z = num::slice_cols(rz, hidden, hidden);
  Var<T> n = num::tanh(num::add(num::slice_cols(xp, 2 * hidden, hidden),
                                num::mul(r, num::slice_cols(hp, 2 * hidden, hidden))));
  // h' = n + z * (h - n)
  return num::add(n, num::mul(z, num::sub(h, n)));
}

template <typename T>
struct EncoderOutput {
  Var<T> states;  // [steps * size, 2h], time-major, forward block then backward block
  Var<T> pooled;  // [size, 2h]: last forward state and last backward state
};

namespace detail {

// Runs one direction; invalid positions carry the previous state unchanged.
template <typename T>
std::vector<Var<T>> run_direction(ParamView<T>& view, const std::string& prefix, Var<T> projected,
                                  const SequenceBatch& batch, std::size_t hidden, bool reverse, Var<T>& last) {
  auto& tape = view.tape();
  Var<T> h = tape.constant(Tensor<T>::zeros(batch.size, hidden));
  std::vector<Var<T>> states(batch.steps);
  for (std::size_t k = 0; k < batch.steps; ++k) {
    const std::size_t t = reverse ? batch.steps - 1 - k : k;
    Var<T> xp = num::slice_rows(projected, t * batch.size, batch.size);
    Var<T> next = gru_step(view, prefix, xp, h, hidden);
    if (!batch.step_all_valid(t)) {
      Var<T> keep = tape.constant(batch.step_valid_column<T>(t));
      next = num::add(h, num::mul(keep, num::sub(next, h)));
    }
    h = next;
    states[t] = h;
  }
  last = h;
  return states;
}

}  // namespace detail

/// Bidirectional gated encoder over time-major input rows [steps * size, in].
template <typename T>
EncoderOutput<T> encode(ParamView<T>& view, const std::string& prefix, Var<T> inputs, const SequenceBatch& batch,
                        std::size_t hidden) {
  expects(batch.steps >= 1, "encode: empty sequence");
  expects(inputs.rows() == batch.rows(), "encode: input rows do not match batch layout");
  Var<T> last_fwd, last_bwd;
  auto project = [&](const std::string& dir) {
    return num::add(num::matmul(inputs, view(prefix + "." + dir + ".wx")), view(prefix + "." + dir + ".bx"));
  };
  auto fwd = detail::run_direction(view, prefix + ".fwd", project("fwd"), batch, hidden, false, last_fwd);
  auto bwd = detail::run_direction(view, prefix + ".bwd", project("bwd"), batch, hidden, true, last_bwd);
  std::vector<Var<T>> rows;
  rows.reserve(batch.steps);
  for (std::size_t t = 0; t < batch.steps; ++t) rows.push_back(num::concat_cols<T>({fwd[t], bwd[t]}));
  return {num::concat_rows(rows), num::concat_cols<T>({last_fwd, last_bwd})};
}

template <typename T, typename Rng>
void add_encoder_params(ParamStore<T>& store, const std::string& prefix, std::size_t input, std::size_t hidden,
                        Group group, Rng& rng) {
  add_gru_params(store, prefix + ".fwd", input, hidden, group, rng);
  add_gru_params(store, prefix + ".bwd", input, hidden, group, rng);
}

}  // namespace infocal
