#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "infocal/encoder.hpp"
#include "infocal/num/adam.hpp"

namespace infocal {

struct LmDims {
  std::size_t vocab = 0;
  std::size_t embed = 0;
  std::size_t hidden = 0;
  std::size_t output = 0;  // width of the output embeddings e_j
};

/// Forward-only recurrent language model with a bilinear output layer:
///   p(x_i | x_<i) = sigmoid(h_i^T M e_{x_i})
/// where h_i is the state after reading x_0 .. x_{i-1} (a learned start state
/// for i = 0). Frozen once pretrained.
template <typename T>
struct LanguageModel {
  LmDims dims;
  ParamStore<T> params;
  bool frozen = false;
};

template <typename T, typename Rng>
LanguageModel<T> make_language_model(const LmDims& dims, Rng& rng) {
  expects(dims.vocab > 2 && dims.embed > 0 && dims.hidden > 0 && dims.output > 0, "language model dims must be positive");
  LanguageModel<T> lm;
  lm.dims = dims;
  add_embedding_params(lm.params, "lm", dims.vocab, dims.embed, T{0.5}, Group::language_model, rng);
  add_gru_params(lm.params, "lm.gru", dims.embed, dims.hidden, Group::language_model, rng);
  lm.params.add("lm.start", Tensor<T>({1, dims.hidden}), Group::language_model);
  lm.params.add("lm.out", num::uniform_tensor<T>({dims.vocab, dims.output}, T{0.5}, rng), Group::language_model);
  const T bound = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dims.hidden)));
  lm.params.add("lm.M", num::uniform_tensor<T>({dims.hidden, dims.output}, bound, rng), Group::language_model);
  return lm;
}

/// Prefix states h_t [rows, hidden], time-major. Prefixes are never masked.
template <typename T>
Var<T> lm_prefix_states(ParamView<T>& view, const SequenceBatch& batch, std::size_t hidden) {
  auto& tape = view.tape();
  Var<T> projected = num::add(num::matmul(embed(view, "lm", batch.ids), view("lm.gru.wx")), view("lm.gru.bx"));
  Var<T> h = num::add(tape.constant(Tensor<T>::zeros(batch.size, hidden)), view("lm.start"));
  std::vector<Var<T>> states;
  states.reserve(batch.steps);
  for (std::size_t t = 0; t < batch.steps; ++t) {
    states.push_back(h);
    if (t + 1 == batch.steps) break;
    Var<T> next = gru_step(view, "lm.gru", num::slice_rows(projected, t * batch.size, batch.size), h, hidden);
    if (!batch.step_all_valid(t)) {
      Var<T> keep = tape.constant(batch.step_valid_column<T>(t));
      next = num::add(h, num::mul(keep, num::sub(next, h)));
    }
    h = next;
  }
  return num::concat_rows(states);
}

/// Bilinear scores of arbitrary target ids against prefix states.
template <typename T>
Var<T> lm_bilinear(ParamView<T>& view, Var<T> projected_states, std::span<const TokenId> targets) {
  return num::row_sum(num::mul(projected_states, num::embedding(view("lm.out"), targets, kPadId)));
}

/// s_t = h_t^T M e_{x_t} for every position, [rows, 1].
template <typename T>
Var<T> lm_scores(ParamView<T>& view, const LmDims& dims, const SequenceBatch& batch) {
  Var<T> hm = num::matmul(lm_prefix_states(view, batch, dims.hidden), view("lm.M"));
  return lm_bilinear(view, hm, batch.ids);
}

template <typename T>
Tensor<T> lm_score_values(const LanguageModel<T>& lm, const SequenceBatch& batch) {
  num::Tape<T> tape;
  ParamView<T> view(tape, lm.params, num::GroupSet::none());
  return lm_scores(view, lm.dims, batch).value();
}

/// p_lm(m * x_i | x_<i) = sigmoid(m * h_i^T M e_{x_i}), clamped.
template <typename T>
T lm_prob(const LanguageModel<T>& lm, const std::vector<TokenId>& prefix, TokenId target, T mask) {
  std::vector<TokenId> seq = prefix;
  seq.push_back(target);
  auto scores = lm_score_values(lm, SequenceBatch::single(seq));
  const T eps = static_cast<T>(num::kProbEps);
  return std::clamp(num::detail::stable_sigmoid(mask * scores[prefix.size()]), eps, T{1} - eps);
}

/// L_lm = -sum_{i>=1} m_{i-1} log p_lm(m_i x_i | x_<i), summed per sequence
/// and averaged over the batch. Position 0 has no predecessor (m_{-1} = 0), so
/// the first token contributes nothing. `scores` are frozen LM scores.
template <typename T>
Var<T> lm_regularizer(Var<T> mask, const Tensor<T>& scores, const SequenceBatch& batch) {
  expects(mask.rows() == batch.rows() && scores.size() == batch.rows(), "lm_regularizer: mask length does not match sequence");
  auto& tape = *mask.tape;
  if (batch.steps < 2) return num::affine(num::sum(mask), T{0}, T{0});
  const std::size_t B = batch.size, n = (batch.steps - 1) * B;
  Var<T> prev = num::slice_rows(mask, 0, n);
  Var<T> cur = num::slice_rows(mask, B, n);
  std::vector<T> s(scores.storage().begin() + static_cast<std::ptrdiff_t>(B), scores.storage().end());
  auto valid = batch.valid_column<T>();
  std::vector<T> v(valid.storage().begin() + static_cast<std::ptrdiff_t>(B), valid.storage().end());
  Var<T> prob = num::sigmoid(num::mul(cur, tape.constant(Tensor<T>({n, 1}, std::move(s)))));
  Var<T> terms = num::mul(num::mul(prev, num::neg(num::log_prob(prob))), tape.constant(Tensor<T>({n, 1}, std::move(v))));
  return num::affine(num::sum(terms), T{1} / static_cast<T>(B), T{0});
}

/// Value-only L_lm of a single sequence under a given soft mask.
template <typename T>
T lm_regularizer_value(const LanguageModel<T>& lm, const std::vector<TokenId>& tokens, const std::vector<T>& mask) {
  expects(mask.size() == tokens.size(), "lm_regularizer: mask length does not match sequence");
  auto batch = SequenceBatch::single(tokens);
  auto scores = lm_score_values(lm, batch);
  num::Tape<T> tape;
  return lm_regularizer(tape.constant(Tensor<T>::column(mask)), scores, batch).item();
}

/// Token occurrence probabilities over a corpus, pad excluded.
class UnigramDistribution {
 public:
  UnigramDistribution() = default;

  UnigramDistribution(std::span<const std::vector<TokenId>> corpus, std::size_t vocab) : probs_(vocab, 0.0) {
    double total = 0;
    for (const auto& seq : corpus)
      for (auto id : seq) {
        expects(id >= 0 && static_cast<std::size_t>(id) < vocab, "unigram: token id outside vocabulary");
        if (id == kPadId) continue;
        probs_[static_cast<std::size_t>(id)] += 1.0;
        total += 1.0;
      }
    expects(total > 0, "unigram: corpus has no tokens");
    for (auto& p : probs_) p /= total;
    dist_ = std::discrete_distribution<TokenId>(probs_.begin(), probs_.end());
  }

  const std::vector<double>& probabilities() const { return probs_; }

  template <typename Rng>
  TokenId sample(Rng& rng) const {
    return dist_(rng);
  }

 private:
  std::vector<double> probs_;
  mutable std::discrete_distribution<TokenId> dist_;
};

struct LmPretrainConfig {
  std::size_t k_neg = 5;
  std::size_t steps = 400;
  std::size_t batch_size = 32;
  double lr = 1e-2;
  std::uint64_t seed = 1;
};

struct LmPretrainReport {
  double first_loss = 0;
  double last_loss = 0;
  std::size_t steps = 0;
};

/// Negative-sampling objective for one batch:
///   -sum_i [ log s(h_i^T M e_{x_i}) - mean_j log s(h_i^T M e_j) ],  j ~ unigram
/// summed over valid positions, averaged over sequences.
template <typename T>
Var<T> lm_pretrain_loss(ParamView<T>& view, const LmDims& dims, const SequenceBatch& batch,
                        const std::vector<std::vector<TokenId>>& negatives) {
  auto& tape = view.tape();
  Var<T> hm = num::matmul(lm_prefix_states(view, batch, dims.hidden), view("lm.M"));
  Var<T> pos = num::log_prob(num::sigmoid(lm_bilinear(view, hm, batch.ids)));
  Var<T> neg_sum;
  for (std::size_t q = 0; q < negatives.size(); ++q) {
    Var<T> term = num::log_prob(num::sigmoid(lm_bilinear(view, hm, negatives[q])));
    neg_sum = q == 0 ? term : num::add(neg_sum, term);
  }
  Var<T> per_pos = num::sub(pos, num::affine(neg_sum, T{1} / static_cast<T>(negatives.size()), T{0}));
  Var<T> masked = num::mul(per_pos, tape.constant(batch.valid_column<T>()));
  return num::affine(num::sum(masked), T{-1} / static_cast<T>(batch.size), T{0});
}

/// Pretrains with Adam for `config.steps` sampled batches and freezes the model.
template <typename T>
LmPretrainReport lm_pretrain(LanguageModel<T>& lm, const std::vector<std::vector<TokenId>>& corpus,
                             const LmPretrainConfig& config) {
  expects(!corpus.empty(), "lm_pretrain: empty corpus");
  expects(config.k_neg >= 1, "lm_pretrain: need at least one negative per position");
  expects(!lm.frozen, "lm_pretrain: model is frozen");
  UnigramDistribution unigram(corpus, lm.dims.vocab);
  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<std::size_t> pick(0, corpus.size() - 1);
  num::AdamState<T> adam;
  adam.config.lr = config.lr;
  LmPretrainReport report;
  std::vector<std::vector<TokenId>> seqs(std::min(config.batch_size, corpus.size()));
  for (std::size_t step = 0; step < config.steps; ++step) {
    for (auto& s : seqs) s = corpus[pick(rng)];
    auto batch = SequenceBatch::from(seqs);
    std::vector<std::vector<TokenId>> negatives(config.k_neg, std::vector<TokenId>(batch.rows()));
    for (auto& row : negatives)
      for (auto& id : row) id = unigram.sample(rng);
    num::Tape<T> tape;
    ParamView<T> view(tape, lm.params, {Group::language_model});
    Var<T> loss = lm_pretrain_loss(view, lm.dims, batch, negatives);
    const double value = static_cast<double>(loss.item());
    if (step == 0) report.first_loss = value;
    report.last_loss = value;
    auto grads = tape.backward(loss);
    num::adam_step(lm.params, {Group::language_model}, grads, adam);
    report.steps = step + 1;
  }
  lm.frozen = true;
  return report;
}

}  // namespace infocal
