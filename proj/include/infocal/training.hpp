#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "infocal/data.hpp"
#include "infocal/eval.hpp"
#include "infocal/lm.hpp"
#include "infocal/model.hpp"
#include "infocal/num/adam.hpp"

namespace infocal {

struct Hyperparams {
  double lambda_ib = 0.05;
  double lambda_g = 1.0;
  double lambda_mi = 0.5;
  double lambda_lm = 0.005;
  double tau = 0.5;
  double r_select = 0.1;
  double lr = 1e-3;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
  TaskMode mode = TaskMode::classification;
  bool disable_adv = false;
  bool disable_lm = false;
  bool disable_ib = false;
  bool standard_d_loss = false;

  bool adversarial() const { return !disable_adv; }
  bool uses_lm() const { return !disable_lm && lambda_lm > 0; }
  double ib_weight() const { return disable_ib ? 0.0 : lambda_ib; }
  double lm_weight() const { return disable_lm ? 0.0 : lambda_lm; }
  double g_weight() const { return disable_adv ? 0.0 : lambda_g; }
  double mi_weight() const { return disable_adv ? 0.0 : lambda_mi; }

  void validate() const {
    if (lambda_ib < 0 || lambda_g < 0 || lambda_mi < 0 || lambda_lm < 0)
      throw ConfigError("loss weights must be non-negative");
    if (!(tau > 0)) throw ConfigError("tau must be positive");
    if (!(r_select > 0 && r_select < 1)) throw ConfigError("r_select must lie in (0, 1)");
    if (!(lr > 0)) throw ConfigError("lr must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
  }
};

/// Loss weights and priors of the two published settings.
inline Hyperparams preset(const std::string& name) {
  Hyperparams h;
  if (name == "beer-regression") {
    h.lambda_ib = 0.0003;
    h.lambda_g = 1.0;
    h.lambda_mi = 0.1;
    h.lambda_lm = 0.005;
    h.r_select = 0.001;
    h.mode = TaskMode::regression;
  } else if (name == "legal-classification") {
    h.lambda_ib = 0.05;
    h.lambda_g = 1.0;
    h.lambda_mi = 0.5;
    h.lambda_lm = 0.005;
    h.r_select = 0.1;
    h.mode = TaskMode::classification;
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected beer-regression or legal-classification)");
  }
  return h;
}

inline nlohmann::json hyperparams_to_json(const Hyperparams& h) {
  return {{"lambda_ib", h.lambda_ib},     {"lambda_g", h.lambda_g},       {"lambda_mi", h.lambda_mi},
          {"lambda_lm", h.lambda_lm},     {"tau", h.tau},                 {"r_select", h.r_select},
          {"lr", h.lr},                   {"batch_size", h.batch_size},   {"epochs", h.epochs},
          {"seed", h.seed},               {"mode", task_mode_name(h.mode)}, {"disable_adv", h.disable_adv},
          {"disable_lm", h.disable_lm},   {"disable_ib", h.disable_ib},   {"standard_d_loss", h.standard_d_loss}};
}

/// FNV-1a of the canonical JSON dump.
inline std::string hyperparams_hash(const Hyperparams& h) {
  std::uint64_t x = 1469598103934665603ull;
  for (char c : hyperparams_to_json(h).dump()) x = (x ^ static_cast<unsigned char>(c)) * 1099511628211ull;
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << x;
  return out.str();
}

/// Batch-mean loss components.
///   L_adv   = lambda_g L_g + L_guide + lambda_mi L_mi
///   J_total = L_sp + lambda_ib L_ib + L_adv + lambda_lm L_lm
struct LossBreakdown {
  double L_sp = 0;
  double L_ib = 0;
  double L_g = 0;
  double L_guide = 0;
  double L_mi = 0;
  double L_lm = 0;
  double L_adv = 0;
  double J_total = 0;
  double L_d = 0;
};

template <typename T>
struct BatchNoise {
  GumbelNoise<T> gumbel;  // per token
  Tensor<T> gaussian;     // [size, features]
};

template <typename T, typename Rng>
BatchNoise<T> sample_batch_noise(const SequenceBatch& batch, std::size_t features, Rng& rng) {
  BatchNoise<T> n;
  n.gumbel = sample_gumbel_noise<T>(batch.rows(), rng);
  n.gaussian = sample_normal<T>(batch.size, features, rng);
  return n;
}

template <typename T>
struct ForwardPass {
  LossBreakdown losses;
  Var<T> j_total;
  Var<T> p;
  Var<T> mask;  // relaxed mask, zero at invalid positions
  Var<T> fake;  // predictor feature
  std::optional<Var<T>> real;  // guider feature, absent when the adversarial path is off
};

namespace detail {

template <typename F>
auto component(const char* name, F&& f) {
  try {
    return f();
  } catch (const NumericFault& e) {
    throw NumericFault(name, e.what());
  }
}

inline double finite_or_fault(const char* name, double v) {
  if (!std::isfinite(v)) throw NumericFault(name, "non-finite loss component");
  return v;
}

}  // namespace detail

/// One forward pass producing every loss component. Only the parameters that
/// `view` binds as trainable receive gradients from `j_total`; the
/// discriminator is expected to enter as constants. `lm_scores` are frozen
/// language-model scores in batch layout, required when the LM term is on.
template <typename T>
ForwardPass<T> compute_losses(ParamView<T>& view, const ModelConfig& cfg, const SequenceBatch& batch,
                              std::span<const double> labels, const Hyperparams& hp, const BatchNoise<T>& noise,
                              const Tensor<T>* lm_scores) {
  expects(labels.size() == batch.size, "compute_losses: one label per sequence required");
  auto& tape = view.tape();
  ForwardPass<T> f;
  auto& L = f.losses;

  f.p = detail::component("selector", [&] { return select_probs(view, batch, cfg.hidden); });
  f.mask = detail::component("mask", [&] {
    return num::mul(relaxed_mask(f.p, static_cast<T>(hp.tau), noise.gumbel), tape.constant(batch.valid_column<T>()));
  });
  auto pred = detail::component("L_sp", [&] { return predict_masked(view, batch, f.mask, cfg.hidden, cfg.mode); });
  f.fake = pred.features;
  Var<T> sp = detail::component("L_sp", [&] { return sp_loss(pred.output, labels, cfg.mode); });
  Var<T> total = sp;
  L.L_sp = detail::finite_or_fault("L_sp", sp.item());

  if (hp.ib_weight() > 0) {
    Var<T> ib = detail::component("L_ib", [&] { return ib_loss(f.p, batch, static_cast<T>(hp.r_select)); });
    L.L_ib = detail::finite_or_fault("L_ib", ib.item());
    total = num::add(total, num::affine(ib, static_cast<T>(hp.ib_weight()), T{0}));
  }

  if (hp.adversarial()) {
    auto g = detail::component("L_guide", [&] { return guider_forward(view, batch, noise.gaussian, cfg.hidden, cfg.mode); });
    f.real = g.z;
    Var<T> guide = detail::component("L_guide", [&] { return guide_loss(g.output, labels, cfg.mode); });
    Var<T> mi = detail::component("L_mi", [&] { return mi_loss(g.mu, g.sigma); });
    Var<T> d_fake = detail::component("L_g", [&] { return discriminate(view, f.fake); });
    Var<T> gl = detail::component("L_g", [&] { return g_loss(d_fake); });
    Var<T> dl = detail::component("L_d", [&] { return d_loss(discriminate(view, g.z), d_fake, hp.standard_d_loss); });
    L.L_guide = detail::finite_or_fault("L_guide", guide.item());
    L.L_mi = detail::finite_or_fault("L_mi", mi.item());
    L.L_g = detail::finite_or_fault("L_g", gl.item());
    L.L_d = detail::finite_or_fault("L_d", dl.item());
    Var<T> adv = num::add(num::add(num::affine(gl, static_cast<T>(hp.g_weight()), T{0}), guide),
                          num::affine(mi, static_cast<T>(hp.mi_weight()), T{0}));
    L.L_adv = hp.g_weight() * L.L_g + L.L_guide + hp.mi_weight() * L.L_mi;
    total = num::add(total, adv);
  }

  if (hp.lm_weight() > 0) {
    expects(lm_scores != nullptr, "compute_losses: LM term enabled but no language-model scores supplied");
    Var<T> lm = detail::component("L_lm", [&] { return lm_regularizer(f.mask, *lm_scores, batch); });
    L.L_lm = detail::finite_or_fault("L_lm", lm.item());
    total = num::add(total, num::affine(lm, static_cast<T>(hp.lm_weight()), T{0}));
  }

  f.j_total = total;
  L.J_total = L.L_sp + hp.ib_weight() * L.L_ib + L.L_adv + hp.lm_weight() * L.L_lm;
  detail::finite_or_fault("J_total", static_cast<double>(total.item()));
  return f;
}

/// Discriminator objective on features recomputed from the current parameters
/// with the batch's noise. Only the discriminator group is trainable here.
template <typename T>
Var<T> discriminator_objective(ParamView<T>& view, const ModelConfig& cfg, const SequenceBatch& batch,
                               const Hyperparams& hp, const BatchNoise<T>& noise) {
  auto& tape = view.tape();
  return detail::component("L_d", [&] {
    Var<T> p = select_probs(view, batch, cfg.hidden);
    Var<T> m = num::mul(relaxed_mask(p, static_cast<T>(hp.tau), noise.gumbel), tape.constant(batch.valid_column<T>()));
    Var<T> fake = tape.constant(predict_masked(view, batch, m, cfg.hidden, cfg.mode).features.value());
    Var<T> real = tape.constant(guider_forward(view, batch, noise.gaussian, cfg.hidden, cfg.mode).z.value());
    return d_loss(discriminate(view, real), discriminate(view, fake), hp.standard_d_loss);
  });
}

/// Fraction of valid positions with p > 0.5.
template <typename T>
double selection_rate(const Tensor<T>& p, const SequenceBatch& batch) {
  std::size_t selected = 0;
  for (std::size_t i = 0; i < batch.rows(); ++i) selected += batch.valid[i] && p[i] > T{0.5};
  const auto valid = batch.valid_count();
  return valid ? static_cast<double>(selected) / static_cast<double>(valid) : 0.0;
}

/// Frozen LM scores for every instance, computed in chunks.
template <typename T>
std::vector<std::vector<T>> precompute_lm_scores(const LanguageModel<T>& lm, const Dataset& data,
                                                 std::size_t chunk = 64) {
  std::vector<std::vector<T>> out(data.size());
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    const std::size_t n = std::min(chunk, data.size() - start);
    std::vector<std::vector<TokenId>> seqs;
    for (std::size_t i = 0; i < n; ++i) seqs.push_back(data[start + i].tokens);
    auto batch = SequenceBatch::from(seqs);
    auto scores = lm_score_values(lm, batch);
    for (std::size_t i = 0; i < n; ++i) out[start + i] = batch.gather_sequence(scores, i);
  }
  return out;
}

/// Lays per-instance score vectors out in the batch's time-major order.
template <typename T>
Tensor<T> batch_scores(const std::vector<std::vector<T>>& scores, std::span<const std::size_t> indices,
                       const SequenceBatch& batch) {
  Tensor<T> out({batch.rows(), 1});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto& s = scores[indices[b]];
    expects(s.size() == batch.lengths[b], "language-model scores do not match instance length");
    for (std::size_t t = 0; t < s.size(); ++t) out[batch.index(t, b)] = s[t];
  }
  return out;
}

struct MetricsRow {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  LossBreakdown losses;
  double sel_pct = 0;  // percent of valid tokens with p > 0.5
};

inline constexpr const char* kMetricsHeader = "epoch,batch,L_sp,L_ib,L_g,L_guide,L_mi,L_lm,L_d,J_total,sel_pct";

inline void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << kMetricsHeader << "\n" << std::setprecision(10);
  for (const auto& r : rows) {
    const auto& l = r.losses;
    out << r.epoch << ',' << r.batch << ',' << l.L_sp << ',' << l.L_ib << ',' << l.L_g << ',' << l.L_guide << ','
        << l.L_mi << ',' << l.L_lm << ',' << l.L_d << ',' << l.J_total << ',' << r.sel_pct << "\n";
  }
}

enum class TrainPhase { generator, discriminator };

template <typename T>
struct TrainHooks {
  // Called immediately before and after each parameter update.
  std::function<void(TrainPhase, bool after, const ParamStore<T>&)> on_phase;
  std::function<void(const MetricsRow&)> on_batch;
  std::function<void(std::size_t epoch, const ParamStore<T>&)> on_epoch;
};

struct TrainReport {
  std::vector<MetricsRow> rows;
  std::size_t epochs_completed = 0;
  bool diverged = false;
  std::string fault;  // where + message when diverged
};

/// Alternating optimisation: per batch one Adam step on the generator and
/// guider groups against J_total, then one on the discriminator group against
/// L_d. Deterministic in `hp.seed`. On a numeric fault the parameters of the
/// last completed batch are restored and training stops.
template <typename T>
TrainReport train(ParamStore<T>& store, const ModelConfig& cfg, const Dataset& data, const Hyperparams& hp,
                  const LanguageModel<T>* lm = nullptr, const TrainHooks<T>& hooks = {}) {
  expects(!data.empty(), "train: empty dataset");
  hp.validate();
  cfg.validate();
  expects(cfg.mode == hp.mode, "train: model and hyperparameter modes differ");
  std::vector<std::vector<T>> lm_scores;
  if (hp.uses_lm()) {
    expects(lm != nullptr, "train: LM regularizer enabled but no language model given");
    expects(lm->frozen, "train: language model must be pretrained and frozen");
    lm_scores = precompute_lm_scores(*lm, data);
  }

  num::AdamState<T> gen_state, disc_state;
  gen_state.config.lr = disc_state.config.lr = hp.lr;
  const num::GroupSet gen_groups{Group::generator, Group::guider};
  const num::GroupSet disc_groups{Group::discriminator};

  TrainReport report;
  std::vector<std::size_t> order(data.size());
  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    {
      std::seed_seq seq{static_cast<std::uint32_t>(hp.seed), static_cast<std::uint32_t>(hp.seed >> 32),
                        static_cast<std::uint32_t>(epoch), 0xffffffffu};
      std::mt19937_64 shuffle_rng(seq);
      std::shuffle(order.begin(), order.end(), shuffle_rng);
    }
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += hp.batch_size, ++batch_index) {
      const std::size_t n = std::min(hp.batch_size, order.size() - start);
      std::span<const std::size_t> idx(order.data() + start, n);
      std::vector<std::vector<TokenId>> seqs;
      std::vector<double> labels;
      for (auto i : idx) {
        seqs.push_back(data[i].tokens);
        labels.push_back(data[i].label);
      }
      auto batch = SequenceBatch::from(seqs);
      std::seed_seq seq{static_cast<std::uint32_t>(hp.seed), static_cast<std::uint32_t>(hp.seed >> 32),
                        static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(batch_index)};
      std::mt19937_64 rng(seq);
      auto noise = sample_batch_noise<T>(batch, cfg.features(), rng);
      std::optional<Tensor<T>> scores;
      if (hp.uses_lm()) scores = batch_scores(lm_scores, idx, batch);

      const ParamStore<T> last_good = store;
      MetricsRow row;
      row.epoch = epoch;
      row.batch = batch_index;
      try {
        {
          num::Tape<T> tape;
          ParamView<T> view(tape, store, gen_groups);
          auto f = compute_losses(view, cfg, batch, labels, hp, noise, scores ? &*scores : nullptr);
          row.losses = f.losses;
          row.sel_pct = 100.0 * selection_rate(f.p.value(), batch);
          auto grads = detail::component("J_total", [&] { return tape.backward(f.j_total); });
          if (hooks.on_phase) hooks.on_phase(TrainPhase::generator, false, store);
          num::adam_step(store, gen_groups, grads, gen_state);
          if (hooks.on_phase) hooks.on_phase(TrainPhase::generator, true, store);
        }
        if (hp.adversarial()) {
          num::Tape<T> tape;
          ParamView<T> view(tape, store, disc_groups);
          Var<T> ld = discriminator_objective(view, cfg, batch, hp, noise);
          row.losses.L_d = detail::finite_or_fault("L_d", ld.item());
          auto grads = detail::component("L_d", [&] { return tape.backward(ld); });
          if (hooks.on_phase) hooks.on_phase(TrainPhase::discriminator, false, store);
          num::adam_step(store, disc_groups, grads, disc_state);
          if (hooks.on_phase) hooks.on_phase(TrainPhase::discriminator, true, store);
        }
        for (const auto& [name, param] : store)
          if (!param.value.all_finite()) throw NumericFault(name, "parameter became non-finite");
      } catch (const NumericFault& e) {
        store = last_good;
        report.diverged = true;
        report.fault = e.what();
        return report;
      }
      report.rows.push_back(row);
      if (hooks.on_batch) hooks.on_batch(row);
    }
    report.epochs_completed = epoch + 1;
    if (hooks.on_epoch) hooks.on_epoch(epoch, store);
  }
  return report;
}

struct Extraction {
  std::vector<TokenId> tokens;
  std::vector<std::uint8_t> mask;
  std::vector<double> output;  // class distribution or the single score
  double pred = 0;             // argmax class or score
  double sel_pct = 0;          // fraction in [0, 1] of non-pad tokens selected
};

/// Deterministic inference: hard mask [p > 0.5] through the predictor.
template <typename T>
std::vector<Extraction> extract(const ParamStore<T>& store, const ModelConfig& cfg, const Dataset& data,
                                std::size_t chunk = 64) {
  cfg.validate();
  std::vector<Extraction> out;
  out.reserve(data.size());
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    const std::size_t n = std::min(chunk, data.size() - start);
    std::vector<std::vector<TokenId>> seqs;
    for (std::size_t i = 0; i < n; ++i) {
      for (auto id : data[start + i].tokens)
        expects(id >= 0 && static_cast<std::size_t>(id) < cfg.vocab, "extract: token id outside the model vocabulary");
      seqs.push_back(data[start + i].tokens);
    }
    auto batch = SequenceBatch::from(seqs);
    num::Tape<T> tape;
    ParamView<T> view(tape, store, num::GroupSet::none());
    auto p = select_probs(view, batch, cfg.hidden).value();
    Tensor<T> hard = hard_mask(p);
    for (std::size_t i = 0; i < hard.size(); ++i)
      if (!batch.valid[i]) hard[i] = T{0};
    auto output = predict_masked(view, batch, tape.constant(hard), cfg.hidden, cfg.mode).output.value();
    for (std::size_t b = 0; b < n; ++b) {
      Extraction e;
      e.tokens = seqs[b];
      std::size_t selected = 0, valid = 0;
      for (std::size_t t = 0; t < batch.lengths[b]; ++t) {
        const auto r = batch.index(t, b);
        e.mask.push_back(hard[r] != T{0});
        selected += hard[r] != T{0};
        valid += batch.valid[r];
      }
      e.sel_pct = valid ? static_cast<double>(selected) / static_cast<double>(valid) : 0.0;
      for (std::size_t k = 0; k < output.cols(); ++k) e.output.push_back(static_cast<double>(output(b, k)));
      if (cfg.mode == TaskMode::classification)
        e.pred = static_cast<double>(std::max_element(e.output.begin(), e.output.end()) - e.output.begin());
      else
        e.pred = e.output[0];
      out.push_back(std::move(e));
    }
  }
  return out;
}

inline void write_extractions(const std::vector<Extraction>& records, const Vocab& vocab, TaskMode mode,
                              const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& e : records) {
    nlohmann::json j;
    auto& toks = j["tokens"] = nlohmann::json::array();
    for (auto id : e.tokens) toks.push_back(vocab.token(id));
    j["mask"] = e.mask;
    if (mode == TaskMode::classification) j["pred"] = static_cast<std::int64_t>(e.pred);
    else j["pred"] = e.pred;
    j["sel_pct"] = e.sel_pct;
    out << j.dump() << "\n";
  }
}

struct Evaluation {
  std::optional<RationaleScore> rationale;  // present when every instance has a gold mask
  TaskScore task;
};

template <typename T>
Evaluation evaluate(const ParamStore<T>& store, const ModelConfig& cfg, const Dataset& data) {
  expects(!data.empty(), "evaluate: empty dataset");
  auto records = extract(store, cfg, data);
  std::vector<double> preds, golds;
  RationaleCounts counts;
  bool all_gold = true;
  for (std::size_t i = 0; i < data.size(); ++i) {
    preds.push_back(records[i].pred);
    golds.push_back(data[i].label);
    if (data[i].rationale) {
      std::vector<std::uint8_t> valid(data[i].tokens.size());
      for (std::size_t t = 0; t < valid.size(); ++t) valid[t] = data[i].tokens[t] != kPadId;
      counts += rationale_counts(records[i].mask, *data[i].rationale, valid);
    } else {
      all_gold = false;
    }
  }
  Evaluation ev;
  ev.task = task_metrics(preds, golds, cfg.mode);
  if (all_gold) ev.rationale = rationale_score(counts);
  return ev;
}

}  // namespace infocal
