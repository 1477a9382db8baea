#pragma once

#include <random>

#include "json.hpp"

#include "infocal/adversarial.hpp"

namespace infocal {

/// Shapes of the selector, predictor, shared head, guider and discriminator.
struct ModelConfig {
  std::size_t vocab = 0;
  std::size_t embed = 16;
  std::size_t hidden = 16;
  std::size_t outputs = 4;  // classes, or 1 for regression
  TaskMode mode = TaskMode::classification;
  double embed_scale = 0.5;
  std::size_t disc_hidden = 0;  // 0 means the feature width 2 * hidden

  std::size_t features() const { return 2 * hidden; }
  std::size_t discriminator_width() const { return disc_hidden == 0 ? features() : disc_hidden; }
  EncoderDims encoder_dims() const { return {vocab, embed, hidden}; }

  void validate() const {
    expects(vocab > 2, "model: vocabulary must hold more than <pad> and <unk>");
    expects(embed > 0 && hidden > 0, "model: embed and hidden must be positive");
    expects(embed_scale > 0, "model: embed_scale must be positive");
    if (mode == TaskMode::classification) expects(outputs >= 2, "model: classification needs at least two classes");
    else expects(outputs == 1, "model: regression has exactly one output");
  }
};

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
  return {{"vocab", c.vocab},     {"embed", c.embed},           {"hidden", c.hidden},
          {"outputs", c.outputs}, {"mode", task_mode_name(c.mode)}, {"embed_scale", c.embed_scale},
          {"disc_hidden", c.disc_hidden}};
}

inline TaskMode task_mode_from_name(const std::string& s) {
  if (s == "classification") return TaskMode::classification;
  if (s == "regression") return TaskMode::regression;
  throw ConfigError("unknown mode '" + s + "' (expected classification or regression)");
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.vocab = j.at("vocab").get<std::size_t>();
  c.embed = j.at("embed").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.outputs = j.at("outputs").get<std::size_t>();
  c.mode = task_mode_from_name(j.at("mode").get<std::string>());
  c.embed_scale = j.at("embed_scale").get<double>();
  c.disc_hidden = j.value("disc_hidden", std::size_t{0});
  return c;
}

/// Fresh parameters for every trainable group. Deterministic in `seed`.
template <typename T>
ParamStore<T> init_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  ParamStore<T> store;
  const T scale = static_cast<T>(cfg.embed_scale);
  add_selector_params(store, cfg.encoder_dims(), scale, rng);
  add_predictor_params(store, cfg.encoder_dims(), scale, rng);
  add_head_params(store, HeadDims{cfg.features(), cfg.outputs, cfg.mode}, rng);
  add_guider_params(store, cfg.encoder_dims(), scale, rng);
  add_discriminator_params(store, cfg.features(), cfg.discriminator_width(), rng);
  return store;
}

}  // namespace infocal
