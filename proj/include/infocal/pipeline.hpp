#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "json.hpp"

#include "infocal/num/checkpoint.hpp"
#include "infocal/num/gradcheck.hpp"
#include "infocal/run_config.hpp"

namespace infocal {

/// Floating-point type of every pipeline computation; checkpoints are float32.
using Real = double;

inline constexpr const char* kModelTag = "infocal-model";
inline constexpr const char* kLmTag = "infocal-lm";

struct RunPaths {
  std::filesystem::path vocab, train, dev, test, spec;
  std::filesystem::path lm, model, metrics, report, extraction;

  std::filesystem::path split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "dev") return dev;
    if (name == "test") return test;
    throw ConfigError("unknown split '" + name + "'");
  }
};

inline RunPaths run_paths(const RunConfig& c) {
  const auto data = c.data_path();
  const auto out = c.out_path();
  return {data / "vocab.txt", data / "train.jsonl", data / "dev.jsonl", data / "test.jsonl",
          data / "spec.json", out / "lm",      out / "model",       out / "metrics.csv",
          out / "report.json", out / "extract.jsonl"};
}

inline std::string fingerprint_hex(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

/// Records the fully resolved configuration next to a command's outputs.
inline void write_resolved_config(const RunConfig& c, const std::string& command) {
  std::filesystem::create_directories(c.out_path());
  const auto path = c.out_path() / (command + ".config.json");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << run_config_to_json(c).dump(2) << "\n";
}

inline Vocab load_run_vocab(const RunConfig& c) { return Vocab::load(run_paths(c).vocab); }

inline Dataset load_split(const RunConfig& c, const std::string& split, const Vocab& vocab) {
  LoadReport report;
  auto data = load_jsonl(run_paths(c).split(split), vocab, &report);
  if (data.empty()) throw DataError("split '" + split + "' is empty");
  return data;
}

inline std::vector<std::vector<TokenId>> token_corpus(const Dataset& data) {
  std::vector<std::vector<TokenId>> out;
  out.reserve(data.size());
  for (const auto& inst : data) out.push_back(inst.tokens);
  return out;
}

inline SyntheticCorpus cmd_gen_data(const RunConfig& c) {
  auto corpus = generate(c.data);
  const auto p = run_paths(c);
  std::filesystem::create_directories(c.data_path());
  corpus.vocab.save(p.vocab);
  save_jsonl(corpus.train, corpus.vocab, c.data.mode, p.train);
  save_jsonl(corpus.dev, corpus.vocab, c.data.mode, p.dev);
  save_jsonl(corpus.test, corpus.vocab, c.data.mode, p.test);
  std::ofstream(p.spec, std::ios::trunc) << synthetic_spec_to_json(c.data).dump(2) << "\n";
  write_resolved_config(c, "gen-data");
  return corpus;
}

inline LmDims lm_dims(const RunConfig& c, std::size_t vocab) { return {vocab, c.lm.embed, c.lm.hidden, c.lm.output}; }

inline LmPretrainReport cmd_pretrain_lm(const RunConfig& c) {
  const auto vocab = load_run_vocab(c);
  const auto train = load_split(c, "train", vocab);
  std::mt19937_64 rng(c.seed);
  auto lm = make_language_model<Real>(lm_dims(c, vocab.size()), rng);
  auto pre = c.lm.pretrain;
  pre.seed = c.seed;
  auto report = lm_pretrain(lm, token_corpus(train), pre);
  nlohmann::json meta = {{"dims", {{"vocab", vocab.size()}, {"embed", c.lm.embed}, {"hidden", c.lm.hidden},
                                   {"output", c.lm.output}}},
                         {"vocab_fingerprint", fingerprint_hex(vocab.fingerprint())},
                         {"first_loss", report.first_loss},
                         {"last_loss", report.last_loss},
                         {"steps", report.steps}};
  save_checkpoint(lm.params, run_paths(c).lm, kLmTag, meta);
  write_resolved_config(c, "pretrain-lm");
  return report;
}

inline void check_vocab(const nlohmann::json& meta, const Vocab& vocab, const std::string& what) {
  if (meta.value("vocab_fingerprint", "") != fingerprint_hex(vocab.fingerprint()))
    throw DataError(what + " was built for a different vocabulary");
}

inline LanguageModel<Real> load_language_model(const RunConfig& c, const Vocab& vocab) {
  const auto p = run_paths(c);
  if (!num::checkpoint_exists(p.lm)) throw DataError("language model checkpoint missing; run pretrain-lm first");
  auto loaded = num::load_checkpoint<Real>(p.lm, kLmTag);
  check_vocab(loaded.meta, vocab, "language model checkpoint");
  LanguageModel<Real> lm;
  const auto& d = loaded.meta.at("dims");
  lm.dims = {d.at("vocab").get<std::size_t>(), d.at("embed").get<std::size_t>(), d.at("hidden").get<std::size_t>(),
             d.at("output").get<std::size_t>()};
  lm.params = std::move(loaded.params);
  lm.frozen = true;
  return lm;
}

inline ModelConfig model_config(const RunConfig& c, const Vocab& vocab) {
  ModelConfig m = c.model;
  m.vocab = vocab.size();
  return m;
}

inline nlohmann::json model_meta(const ModelConfig& cfg, const Hyperparams& hp, const Vocab& vocab,
                                 const TrainReport& report) {
  return {{"model", model_config_to_json(cfg)},
          {"hyperparams", hyperparams_to_json(hp)},
          {"hyperparams_hash", hyperparams_hash(hp)},
          {"vocab_fingerprint", fingerprint_hex(vocab.fingerprint())},
          {"epochs_completed", report.epochs_completed},
          {"diverged", report.diverged}};
}

/// Trains from scratch and writes the model checkpoint and metrics CSV. A
/// numeric fault still saves the last good parameters before propagating.
inline TrainReport cmd_train(const RunConfig& c, const TrainHooks<Real>& hooks = {}) {
  const auto vocab = load_run_vocab(c);
  const auto train = load_split(c, "train", vocab);
  const auto cfg = model_config(c, vocab);
  std::optional<LanguageModel<Real>> lm;
  if (c.train.uses_lm()) lm = load_language_model(c, vocab);
  auto store = init_model<Real>(cfg, c.seed);
  auto report = infocal::train(store, cfg, train, c.train, lm ? &*lm : nullptr, hooks);
  const auto p = run_paths(c);
  std::filesystem::create_directories(c.out_path());
  save_checkpoint(store, p.model, kModelTag, model_meta(cfg, c.train, vocab, report));
  write_metrics_csv(report.rows, p.metrics);
  write_resolved_config(c, "train");
  if (report.diverged) throw NumericFault("train", report.fault);
  return report;
}

struct LoadedModel {
  ModelConfig config;
  ParamStore<Real> params;
  nlohmann::json meta;
};

inline LoadedModel load_model(const RunConfig& c, const Vocab& vocab) {
  const auto p = run_paths(c);
  if (!num::checkpoint_exists(p.model)) throw DataError("model checkpoint missing; run train first");
  auto loaded = num::load_checkpoint<Real>(p.model, kModelTag);
  check_vocab(loaded.meta, vocab, "model checkpoint");
  LoadedModel m;
  m.config = model_config_from_json(loaded.meta.at("model"));
  m.params = std::move(loaded.params);
  m.meta = std::move(loaded.meta);
  return m;
}

inline nlohmann::json cmd_eval(const RunConfig& c) {
  const auto vocab = load_run_vocab(c);
  const auto data = load_split(c, c.eval_split, vocab);
  const auto model = load_model(c, vocab);
  const auto ev = evaluate(model.params, model.config, data);
  nlohmann::json meta = {{"seed", c.seed},
                         {"split", c.eval_split},
                         {"instances", data.size()},
                         {"hyperparams_hash", model.meta.value("hyperparams_hash", "")},
                         {"epochs_completed", model.meta.value("epochs_completed", 0)}};
  auto report = eval_report(ev.rationale, ev.task, std::move(meta));
  std::ofstream(run_paths(c).report, std::ios::trunc) << report.dump(2) << "\n";
  write_resolved_config(c, "eval");
  return report;
}

inline std::vector<Extraction> cmd_extract(const RunConfig& c) {
  const auto vocab = load_run_vocab(c);
  const auto data = load_split(c, c.eval_split, vocab);
  const auto model = load_model(c, vocab);
  auto records = extract(model.params, model.config, data);
  write_extractions(records, vocab, model.config.mode, run_paths(c).extraction);
  write_resolved_config(c, "extract");
  return records;
}

struct GradCheckSummary {
  num::GradCheckReport generator;      // J_total over generator + guider groups
  num::GradCheckReport discriminator;  // L_d over the discriminator group
  double seconds = 0;
  bool passed() const { return generator.passed && discriminator.passed; }
};

struct GradCheckSetup {
  std::size_t vocab = 20;
  std::size_t embed = 4;
  std::size_t hidden = 4;
  std::size_t length = 6;
  std::size_t classes = 3;
  double fd_step = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 1;
};

/// Finite-difference check of the complete objective at tiny dimensions with
/// all Gumbel and Gaussian noise held fixed. Every loss term is weighted 1.
inline GradCheckSummary full_model_gradcheck(const GradCheckSetup& s = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  ModelConfig cfg;
  cfg.vocab = s.vocab;
  cfg.embed = s.embed;
  cfg.hidden = s.hidden;
  cfg.outputs = s.classes;
  cfg.mode = TaskMode::classification;
  auto store = init_model<Real>(cfg, s.seed);

  std::mt19937_64 rng(s.seed + 1);
  std::uniform_int_distribution<TokenId> token(2, static_cast<TokenId>(s.vocab - 1));
  std::vector<std::vector<TokenId>> seqs(3);
  for (std::size_t b = 0; b < seqs.size(); ++b) {
    seqs[b].resize(b == 2 ? std::max<std::size_t>(1, s.length - 2) : s.length);
    for (auto& id : seqs[b]) id = token(rng);
  }
  const std::vector<double> labels{0.0, 1.0, static_cast<double>(2 % s.classes)};
  auto batch = SequenceBatch::from(seqs);

  auto lm = make_language_model<Real>(LmDims{s.vocab, s.embed, s.hidden, s.embed}, rng);
  lm.frozen = true;
  const auto scores = lm_score_values(lm, batch);

  Hyperparams hp;
  hp.lambda_ib = hp.lambda_g = hp.lambda_mi = hp.lambda_lm = 1.0;
  auto noise = sample_batch_noise<Real>(batch, cfg.features(), rng);

  GradCheckSummary out;
  out.generator = num::grad_check<Real>(
      [&](ParamView<Real>& view) { return compute_losses(view, cfg, batch, labels, hp, noise, &scores).j_total; },
      store, {Group::generator, Group::guider}, s.fd_step, s.tolerance);
  out.discriminator = num::grad_check<Real>(
      [&](ParamView<Real>& view) { return discriminator_objective(view, cfg, batch, hp, noise); }, store,
      {Group::discriminator}, s.fd_step, s.tolerance);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace infocal
