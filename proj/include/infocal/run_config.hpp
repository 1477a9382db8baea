#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "infocal/data.hpp"
#include "infocal/lm.hpp"
#include "infocal/model.hpp"
#include "infocal/training.hpp"

namespace infocal {

struct LmSection {
  std::size_t embed = 16;
  std::size_t hidden = 16;
  std::size_t output = 16;
  LmPretrainConfig pretrain;
};

/// Everything one pipeline run needs. `seed` drives model initialisation,
/// LM pretraining and training; `data.seed` drives corpus generation.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "runs/toy";
  std::string data_dir;  // empty means <out_dir>/data
  SyntheticSpec data;
  ModelConfig model;  // vocab, outputs and mode are derived from the data
  LmSection lm;
  Hyperparams train;
  std::string eval_split = "test";

  std::filesystem::path data_path() const {
    return data_dir.empty() ? std::filesystem::path(out_dir) / "data" : std::filesystem::path(data_dir);
  }
  std::filesystem::path out_path() const { return out_dir; }
};

inline nlohmann::json run_config_to_json(const RunConfig& c) {
  nlohmann::json data = synthetic_spec_to_json(c.data);
  nlohmann::json train = hyperparams_to_json(c.train);
  train.erase("seed");
  train.erase("mode");
  return {{"seed", c.seed},
          {"out_dir", c.out_dir},
          {"data_dir", c.data_dir},
          {"data", data},
          {"model",
           {{"embed", c.model.embed},
            {"hidden", c.model.hidden},
            {"embed_scale", c.model.embed_scale},
            {"disc_hidden", c.model.disc_hidden}}},
          {"lm",
           {{"embed", c.lm.embed},
            {"hidden", c.lm.hidden},
            {"output", c.lm.output},
            {"k_neg", c.lm.pretrain.k_neg},
            {"steps", c.lm.pretrain.steps},
            {"batch_size", c.lm.pretrain.batch_size},
            {"lr", c.lm.pretrain.lr}}},
          {"train", train},
          {"eval", {{"split", c.eval_split}}}};
}

namespace detail {

inline void reject_unknown(const nlohmann::json& given, const nlohmann::json& schema, const std::string& path) {
  if (!given.is_object()) return;
  for (const auto& [key, value] : given.items()) {
    const std::string full = path.empty() ? key : path + "." + key;
    if (!schema.contains(key)) throw ConfigError("unknown config key '" + full + "'");
    if (schema[key].is_object()) {
      if (!value.is_object()) throw ConfigError("config key '" + full + "' must be an object");
      reject_unknown(value, schema[key], full);
    }
  }
}

template <typename V>
V field(const nlohmann::json& j, const char* section, const char* key) {
  const auto& v = section ? j.at(section).at(key) : j.at(key);
  try {
    return v.get<V>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config key '") + (section ? std::string(section) + "." : "") + key +
                      "' has the wrong type: " + v.dump());
  }
}

}  // namespace detail

/// Builds a RunConfig from a complete JSON document (defaults already merged).
inline RunConfig run_config_from_json(const nlohmann::json& j) {
  detail::reject_unknown(j, run_config_to_json(RunConfig{}), "");
  using detail::field;
  RunConfig c;
  c.seed = field<std::uint64_t>(j, nullptr, "seed");
  c.out_dir = field<std::string>(j, nullptr, "out_dir");
  c.data_dir = field<std::string>(j, nullptr, "data_dir");

  auto& d = c.data;
  d.vocab_size = field<std::size_t>(j, "data", "vocab_size");
  d.num_classes = field<std::size_t>(j, "data", "num_classes");
  d.mode = task_mode_from_name(field<std::string>(j, "data", "mode"));
  d.keyphrase_min_len = field<std::size_t>(j, "data", "keyphrase_min_len");
  d.keyphrase_max_len = field<std::size_t>(j, "data", "keyphrase_max_len");
  d.keyphrases_per_class = field<std::size_t>(j, "data", "keyphrases_per_class");
  d.min_len = field<std::size_t>(j, "data", "min_len");
  d.max_len = field<std::size_t>(j, "data", "max_len");
  d.filler_zipf = field<double>(j, "data", "filler_zipf");
  d.noise_rate = field<double>(j, "data", "noise_rate");
  d.sentiment_tokens = field<std::size_t>(j, "data", "sentiment_tokens");
  d.n_train = field<std::size_t>(j, "data", "n_train");
  d.n_dev = field<std::size_t>(j, "data", "n_dev");
  d.n_test = field<std::size_t>(j, "data", "n_test");
  d.seed = field<std::uint64_t>(j, "data", "seed");

  c.model.embed = field<std::size_t>(j, "model", "embed");
  c.model.hidden = field<std::size_t>(j, "model", "hidden");
  c.model.embed_scale = field<double>(j, "model", "embed_scale");
  c.model.disc_hidden = field<std::size_t>(j, "model", "disc_hidden");
  c.model.mode = d.mode;
  c.model.outputs = d.mode == TaskMode::classification ? d.num_classes : 1;

  c.lm.embed = field<std::size_t>(j, "lm", "embed");
  c.lm.hidden = field<std::size_t>(j, "lm", "hidden");
  c.lm.output = field<std::size_t>(j, "lm", "output");
  c.lm.pretrain.k_neg = field<std::size_t>(j, "lm", "k_neg");
  c.lm.pretrain.steps = field<std::size_t>(j, "lm", "steps");
  c.lm.pretrain.batch_size = field<std::size_t>(j, "lm", "batch_size");
  c.lm.pretrain.lr = field<double>(j, "lm", "lr");
  c.lm.pretrain.seed = c.seed;

  auto& h = c.train;
  h.lambda_ib = field<double>(j, "train", "lambda_ib");
  h.lambda_g = field<double>(j, "train", "lambda_g");
  h.lambda_mi = field<double>(j, "train", "lambda_mi");
  h.lambda_lm = field<double>(j, "train", "lambda_lm");
  h.tau = field<double>(j, "train", "tau");
  h.r_select = field<double>(j, "train", "r_select");
  h.lr = field<double>(j, "train", "lr");
  h.batch_size = field<std::size_t>(j, "train", "batch_size");
  h.epochs = field<std::size_t>(j, "train", "epochs");
  h.disable_adv = field<bool>(j, "train", "disable_adv");
  h.disable_lm = field<bool>(j, "train", "disable_lm");
  h.disable_ib = field<bool>(j, "train", "disable_ib");
  h.standard_d_loss = field<bool>(j, "train", "standard_d_loss");
  h.seed = c.seed;
  h.mode = d.mode;

  c.eval_split = field<std::string>(j, "eval", "split");
  if (c.eval_split != "train" && c.eval_split != "dev" && c.eval_split != "test")
    throw ConfigError("eval.split must be train, dev or test");
  h.validate();
  if (c.lm.pretrain.k_neg == 0) throw ConfigError("lm.k_neg must be at least 1");
  if (c.model.embed == 0 || c.model.hidden == 0) throw ConfigError("model.embed and model.hidden must be positive");
  return c;
}

/// Recursively overlays `patch` onto `base`; keys must already exist in base.
inline void merge_config(nlohmann::json& base, const nlohmann::json& patch, const std::string& path = "") {
  if (!patch.is_object()) throw ConfigError("config document must be a JSON object");
  for (const auto& [key, value] : patch.items()) {
    const std::string full = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key '" + full + "'");
    if (base[key].is_object()) {
      if (!value.is_object()) throw ConfigError("config key '" + full + "' must be an object");
      merge_config(base[key], value, full);
    } else {
      base[key] = value;
    }
  }
}

/// `key=value` with a dotted key; the value is parsed as JSON when possible and
/// taken as a string otherwise.
inline void apply_override(nlohmann::json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  nlohmann::json* node = &cfg;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(part)) throw ConfigError("unknown config key '" + key + "'");
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (node->is_object()) throw ConfigError("override '" + key + "' names a section, not a value");
  *node = value;
}

inline void apply_preset(nlohmann::json& cfg, const std::string& name) {
  const Hyperparams h = preset(name);
  auto& t = cfg["train"];
  t["lambda_ib"] = h.lambda_ib;
  t["lambda_g"] = h.lambda_g;
  t["lambda_mi"] = h.lambda_mi;
  t["lambda_lm"] = h.lambda_lm;
  t["r_select"] = h.r_select;
  cfg["data"]["mode"] = task_mode_name(h.mode);
}

struct ConfigSources {
  std::string file;  // optional
  std::string preset;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

/// Precedence: defaults < file < preset < overrides < seed.
inline nlohmann::json resolve_config_json(const ConfigSources& src) {
  nlohmann::json cfg = run_config_to_json(RunConfig{});
  if (!src.file.empty()) {
    std::ifstream in(src.file);
    if (!in) throw ConfigError("cannot open config " + src.file);
    nlohmann::json file;
    try {
      in >> file;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("malformed config " + src.file + ": " + e.what());
    }
    merge_config(cfg, file);
  }
  if (!src.preset.empty()) apply_preset(cfg, src.preset);
  for (const auto& o : src.overrides) apply_override(cfg, o);
  if (src.seed) cfg["seed"] = *src.seed;
  return cfg;
}

inline RunConfig resolve_config(const ConfigSources& src) { return run_config_from_json(resolve_config_json(src)); }

}  // namespace infocal
