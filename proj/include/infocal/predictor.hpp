#pragma once

#include <cmath>
#include <span>

#include "infocal/selector.hpp"

namespace infocal {

enum class TaskMode { classification, regression };

inline const char* task_mode_name(TaskMode m) {
  return m == TaskMode::classification ? "classification" : "regression";
}

/// Output head shared by predictor and guider: y = softmax(z W + b) for
/// classification, sigmoid(z W + b) (one output) for regression.
struct HeadDims {
  std::size_t features = 0;
  std::size_t outputs = 0;
  TaskMode mode = TaskMode::classification;
};

template <typename T, typename Rng>
void add_head_params(ParamStore<T>& store, const HeadDims& dims, Rng& rng) {
  const T bound = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dims.features)));
  store.add("head.w", num::uniform_tensor<T>({dims.features, dims.outputs}, bound, rng), Group::generator);
  store.add("head.b", Tensor<T>({1, dims.outputs}), Group::generator);
}

template <typename T>
Var<T> apply_head(ParamView<T>& view, Var<T> features, TaskMode mode) {
  Var<T> logits = num::add(num::matmul(features, view("head.w")), view("head.b"));
  return mode == TaskMode::classification ? num::softmax_rows(logits) : num::sigmoid(logits);
}

template <typename T, typename Rng>
void add_predictor_params(ParamStore<T>& store, const EncoderDims& dims, T embed_scale, Rng& rng) {
  add_embedding_params(store, "predictor", dims.vocab, dims.embed, embed_scale, Group::generator, rng);
  add_encoder_params(store, "predictor", dims.embed, dims.hidden, Group::generator, rng);
}

template <typename T>
struct Prediction {
  Var<T> features;  // z~_nero [size, 2h]
  Var<T> output;    // [size, K] distribution or [size, 1] score
};

/// Encodes the mask-scaled embeddings m_i * e(x_i) and applies the shared head.
template <typename T>
Prediction<T> predict_masked(ParamView<T>& view, const SequenceBatch& batch, Var<T> mask, std::size_t hidden,
                             TaskMode mode) {
  expects(mask.rows() == batch.rows() && mask.cols() == 1, "predict_masked: mask length does not match sequence");
  Var<T> inputs = num::mul(embed(view, "predictor", batch.ids), mask);
  auto enc = encode(view, "predictor", inputs, batch, hidden);
  return {enc.pooled, apply_head(view, enc.pooled, mode)};
}

/// Validates labels against the head and returns them as a constant column.
template <typename T>
Tensor<T> label_targets(std::span<const double> labels, std::size_t outputs, TaskMode mode) {
  if (mode == TaskMode::classification) {
    Tensor<T> onehot = Tensor<T>::zeros(labels.size(), outputs);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const double y = labels[i];
      if (!(y >= 0 && y < static_cast<double>(outputs) && std::floor(y) == y)) throw ContractViolation("label " + std::to_string(y) + " out of range for " + std::to_string(outputs) + " classes");
      onehot(i, static_cast<std::size_t>(y)) = T{1};
    }
    return onehot;
  }
  Tensor<T> col = Tensor<T>::zeros(labels.size(), 1);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    expects(labels[i] >= 0.0 && labels[i] <= 1.0, "regression label must lie in [0, 1]");
    col[i] = static_cast<T>(labels[i]);
  }
  return col;
}

/// Single-sample prediction loss, mean over the batch: -log y[label] for
/// classification, (y - label)^2 for regression.
template <typename T>
Var<T> prediction_loss(Var<T> output, std::span<const double> labels, TaskMode mode) {
  expects(output.rows() == labels.size(), "prediction loss: label count does not match outputs");
  auto& tape = *output.tape;
  Var<T> target = tape.constant(label_targets<T>(labels, output.cols(), mode));
  if (mode == TaskMode::classification) {
    Var<T> picked = num::row_sum(num::mul(output, target));
    return num::neg(num::mean(num::log_prob(picked)));
  }
  Var<T> diff = num::sub(output, target);
  return num::mean(num::mul(diff, diff));
}

template <typename T>
Var<T> sp_loss(Var<T> output, std::span<const double> labels, TaskMode mode) {
  return prediction_loss(output, labels, mode);
}

}  // namespace infocal
