// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <random>
#include <set>
#include <sstream>

#include "infocal/pipeline.hpp"

using namespace infocal;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

RunConfig toy_config(const fs::path& out, std::uint64_t seed) {
  ConfigSources src;
  src.file = INFOCAL_TOY_CONFIG;
  src.overrides = {"out_dir=" + out.string()};
  src.seed = seed;
  return resolve_config(src);
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("infocal_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// ---------------------------------------------------------------------------

Verdict criterion_1() {
  return {true, "informational: published-number reproduction needs the full corpora; criteria 2-10 substitute"};
}

Verdict criterion_2() {
  const auto r = full_model_gradcheck(GradCheckSetup{});
  const double worst = std::max(r.generator.max_rel_error, r.discriminator.max_rel_error);
  const bool ok = r.passed() && worst < 1e-4 && r.seconds < 30;
  return {ok, "max rel error " + fmt(worst) + " (worst " +
                  (r.generator.max_rel_error >= r.discriminator.max_rel_error ? r.generator.worst_param
                                                                              : r.discriminator.worst_param) +
                  "), " + std::to_string(r.generator.checked + r.discriminator.checked) + " scalars, " +
                  fmt(r.seconds, 3) + " s"};
}

Verdict criterion_3() {
  using T = double;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> mu(-4, 4), sigma(1e-3, 5), prob(1e-4, 1 - 1e-4);
  double mi_err = 0, ib_err = 0, min_mi = 1e300;
  for (int i = 0; i < 1000; ++i) {
    const double m = mu(rng), s = sigma(rng);
    num::Tape<T> tape;
    const double v = mi_loss(tape.constant(Tensor<T>::scalar(m)), tape.constant(Tensor<T>::scalar(s))).item();
    mi_err = std::max(mi_err, std::abs(v - 0.5 * (m * m + s * s - 1 - 2 * std::log(s))));
    min_mi = std::min(min_mi, v);
  }
  bool zero_iff_prior = true;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> p(1 + i % 6);
    const double r = prob(rng);
    double kl = 0;
    for (auto& v : p) {
      v = prob(rng);
      kl += v * std::log(v / r) + (1 - v) * std::log((1 - v) / (1 - r));
    }
    num::Tape<T> tape;
    const auto batch = SequenceBatch::single(std::vector<TokenId>(p.size(), 2));
    ib_err = std::max(ib_err, std::abs(ib_loss(tape.constant(Tensor<T>::column(p)), batch, r).item() - kl));
    const double at_prior =
        ib_loss(tape.constant(Tensor<T>::column(std::vector<double>(p.size(), r))), batch, r).item();
    zero_iff_prior = zero_iff_prior && std::abs(at_prior) < 1e-15 && kl > 0;
  }
  const bool ok = mi_err < 1e-9 && min_mi >= 0 && ib_err < 1e-9 && zero_iff_prior;
  return {ok, "mi max error " + fmt(mi_err) + ", min mi " + fmt(min_mi) + ", ib max error " + fmt(ib_err) +
                  ", zero exactly at prior " + (zero_iff_prior ? "yes" : "no")};
}

Verdict criterion_4() {
  using T = double;
  ModelConfig cfg;
  cfg.vocab = 50;
  cfg.embed = 6;
  cfg.hidden = 6;
  const auto store = init_model<T>(cfg, 4);
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<TokenId> tok(1, 49);
  std::uniform_int_distribution<std::size_t> len(1, 20);
  std::uniform_real_distribution<double> u(0, 1);
  auto run = [&](const std::vector<TokenId>& ids, const std::vector<T>& m) {
    num::Tape<T> tape;
    ParamView<T> view(tape, store, num::GroupSet::none());
    auto p = predict_masked(view, SequenceBatch::single(ids), tape.constant(Tensor<T>::column(m)), cfg.hidden,
                            cfg.mode);
    return std::pair{p.features.value(), p.output.value()};
  };
  std::size_t changed = 0, positions = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<TokenId> ids(len(rng));
    std::vector<T> m(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      ids[i] = tok(rng);
      m[i] = u(rng) < 0.5 ? 0.0 : u(rng);
    }
    const auto base = run(ids, m);
    auto other = ids;
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (m[i] == 0) {
        other[i] = tok(rng);
        ++positions;
      }
    const auto after = run(other, m);
    changed += !(after.first == base.first && after.second == base.second);
  }
  return {changed == 0, std::to_string(positions) + " masked positions re-randomised over 100 instances, " +
                            std::to_string(changed) + " outputs changed"};
}

Verdict criterion_5() {
  using T = double;
  const double eps = 0.01;
  const T on = 1 - eps / 2, off = eps / 2;
  std::mt19937_64 rng(5);
  std::size_t cases = 0, violations = 0, premise_failures = 0;
  for (std::uint64_t model = 1; model <= 24; ++model) {
    std::mt19937_64 init(model);
    auto lm = make_language_model<T>(LmDims{12, 3, 4, 3}, init);
    // Saturated gates pin every prefix state to ones; token scores are then
    // the row sums of the output embedding, kept in [1, 2].
    const std::size_t h = lm.dims.hidden;
    for (const char* w : {"lm.gru.wx", "lm.gru.wh", "lm.gru.bh"}) lm.params.value(w).fill(0.0);
    auto& bx = lm.params.value("lm.gru.bx");
    for (std::size_t c = 0; c < 3 * h; ++c) bx[c] = c < h ? 0.0 : (c < 2 * h ? -40.0 : 40.0);
    lm.params.value("lm.start").fill(1.0);
    lm.params.value("lm.M").fill(1.0 / static_cast<double>(h));
    std::uniform_real_distribution<double> total(1.0, 2.0);
    auto& out = lm.params.value("lm.out");
    for (std::size_t v = 0; v < lm.dims.vocab; ++v) {
      const double s = total(rng);
      for (std::size_t c = 0; c < lm.dims.output; ++c) out(v, c) = s / static_cast<double>(lm.dims.output);
    }
    lm.frozen = true;

    std::uniform_int_distribution<TokenId> tok(2, 11);
    for (std::size_t n = 2; n <= 8; ++n) {
      std::vector<TokenId> seq(n);
      for (auto& x : seq) x = tok(rng);
      const auto s = lm_score_values(lm, SequenceBatch::single(seq));
      double lo = 1, hi = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double p = 1 / (1 + std::exp(-off * s[i]));
        lo = std::min(lo, p);
        hi = std::max(hi, p);
      }
      premise_failures += hi - lo >= eps;
      for (std::size_t k = 1; k <= n; ++k) {
        double best = 1e300, best_block = 1e300;
        std::vector<int> sel(n, 0);
        std::fill(sel.end() - static_cast<std::ptrdiff_t>(k), sel.end(), 1);
        do {
          std::vector<T> m(n);
          std::size_t runs = 0;
          for (std::size_t i = 0; i < n; ++i) {
            m[i] = sel[i] ? on : off;
            runs += sel[i] && (i == 0 || !sel[i - 1]);
          }
          const double v = lm_regularizer_value(lm, seq, m);
          best = std::min(best, v);
          if (runs == 1) best_block = std::min(best_block, v);
        } while (std::next_permutation(sel.begin(), sel.end()));
        ++cases;
        violations += best_block > best + 1e-12;
      }
    }
  }
  return {violations == 0 && premise_failures == 0,
          "24 models, " + std::to_string(cases) + " (sequence, cardinality) cases, " + std::to_string(violations) +
              " without a minimising block, " + std::to_string(premise_failures) + " premise failures"};
}

Verdict criterion_6() {
  using T = double;
  std::mt19937_64 rng(6);
  std::string detail;
  bool ok = true;
  for (double p : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    num::Tape<T> tape;
    const auto m = sample_mask(tape.constant(Tensor<T>::filled(10000, 1, p)), T{0.1}, rng, false).m.value();
    std::size_t hits = 0;
    for (auto v : m.values()) hits += v > 0.5;
    const double rate = static_cast<double>(hits) / 10000.0;
    ok = ok && std::abs(rate - p) <= 0.02;
    detail += (detail.empty() ? "" : ", ") + fmt(p, 2) + "->" + fmt(rate, 4);
  }
  return {ok, detail};
}

// Criteria 7 and 8 share the five full-model runs.
struct RunScore {
  double accuracy = 0, precision = 0, recall = 0, f1 = 0, selection = 0, cpu = 0;
  std::size_t epochs = 0;
};

struct ToyRuns {
  std::vector<RunScore> full, no_adv, no_lm;
};

RunScore score_run(const RunConfig& c, const Vocab& vocab, const Dataset& train_data, const Dataset& test,
                   const LanguageModel<Real>& lm) {
  const double t0 = cpu_seconds();
  const auto cfg = model_config(c, vocab);
  auto store = init_model<Real>(cfg, c.seed);
  const auto report = train(store, cfg, train_data, c.train, c.train.uses_lm() ? &lm : nullptr);
  const auto ev = evaluate(store, cfg, test);
  RunScore s;
  s.epochs = report.epochs_completed;
  s.accuracy = ev.task.accuracy;
  s.precision = ev.rationale->precision;
  s.recall = ev.rationale->recall;
  s.f1 = ev.rationale->f1;
  s.selection = ev.rationale->selection_pct;
  s.cpu = cpu_seconds() - t0;
  return s;
}

const ToyRuns& toy_runs() {
  static const ToyRuns runs = [] {
    ToyRuns r;
    const auto root = scratch("toy");
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      auto c = toy_config(root / ("seed" + std::to_string(seed)), seed);
      c.data_dir = (root / "data").string();
      if (seed == 1) cmd_gen_data(c);
      cmd_pretrain_lm(c);
      const auto vocab = load_run_vocab(c);
      const auto train_data = load_split(c, "train", vocab);
      const auto test = load_split(c, "test", vocab);
      const auto lm = load_language_model(c, vocab);
      auto print = [&](const char* name, const RunScore& s) {
        std::cout << "  seed " << seed << " " << name << ": acc " << fmt(s.accuracy) << " P " << fmt(s.precision)
                  << " R " << fmt(s.recall) << " F1 " << fmt(s.f1) << " sel " << fmt(100 * s.selection, 3) << "% "
                  << fmt(s.cpu, 3) << " cpu-s" << std::endl;
      };
      r.full.push_back(score_run(c, vocab, train_data, test, lm));
      print("full", r.full.back());
      auto adv = c;
      adv.train.disable_adv = true;
      r.no_adv.push_back(score_run(adv, vocab, train_data, test, lm));
      print("disable_adv", r.no_adv.back());
      auto nolm = c;
      nolm.train.disable_lm = true;
      r.no_lm.push_back(score_run(nolm, vocab, train_data, test, lm));
      print("disable_lm", r.no_lm.back());
    }
    fs::remove_all(root);
    return r;
  }();
  return runs;
}

double mean_of(const std::vector<RunScore>& v, double RunScore::*field) {
  double s = 0;
  for (const auto& r : v) s += r.*field;
  return s / static_cast<double>(v.size());
}

Verdict criterion_7() {
  const auto& r = toy_runs();
  const double acc = mean_of(r.full, &RunScore::accuracy), f1 = mean_of(r.full, &RunScore::f1);
  const double sel = mean_of(r.full, &RunScore::selection);
  double max_cpu = 0;
  std::size_t max_epochs = 0;
  for (const auto& s : r.full) {
    max_cpu = std::max(max_cpu, s.cpu);
    max_epochs = std::max(max_epochs, s.epochs);
  }
  const bool ok = acc >= 0.90 && f1 >= 0.75 && sel >= 0.15 && sel <= 0.30 && max_epochs <= 30 && max_cpu < 600;
  return {ok, "5 seeds: accuracy " + fmt(acc) + " (>= 0.90), rationale F1 " + fmt(f1) + " (>= 0.75), selection " +
                  fmt(100 * sel, 3) + "% (15-30%), P " + fmt(mean_of(r.full, &RunScore::precision)) + " R " +
                  fmt(mean_of(r.full, &RunScore::recall)) + ", " + std::to_string(max_epochs) + " epochs, max " +
                  fmt(max_cpu, 3) + " cpu-s per run"};
}

Verdict criterion_8() {
  const auto& r = toy_runs();
  const double full_r = mean_of(r.full, &RunScore::recall), adv_r = mean_of(r.no_adv, &RunScore::recall);
  const double full_f = mean_of(r.full, &RunScore::f1), lm_f = mean_of(r.no_lm, &RunScore::f1);
  return {full_r >= adv_r && full_f >= lm_f, "recall full " + fmt(full_r) + " vs disable_adv " + fmt(adv_r) +
                                                 "; F1 full " + fmt(full_f) + " vs disable_lm " + fmt(lm_f)};
}

Verdict criterion_9() {
  const auto root = scratch("isolation");
  auto c = toy_config(root, 1);
  c.train.epochs = 1;
  cmd_gen_data(c);
  cmd_pretrain_lm(c);
  const num::GroupSet gen{Group::generator, Group::guider}, disc{Group::discriminator};
  std::uint64_t gen_before = 0, disc_before = 0;
  std::size_t updates = 0, violations = 0;
  TrainHooks<Real> hooks;
  hooks.on_phase = [&](TrainPhase phase, bool after, const ParamStore<Real>& s) {
    if (!after) {
      gen_before = s.checksum(gen);
      disc_before = s.checksum(disc);
      return;
    }
    ++updates;
    if (phase == TrainPhase::generator) violations += s.checksum(disc) != disc_before;
    else violations += s.checksum(gen) != gen_before;
  };
  const auto report = cmd_train(c, hooks);
  fs::remove_all(root);
  const bool ok = violations == 0 && report.epochs_completed == 1 && updates == 2 * report.rows.size();
  return {ok, std::to_string(updates) + " updates over one epoch (" + std::to_string(report.rows.size()) +
                  " batches), " + std::to_string(violations) + " cross-group changes"};
}

Verdict criterion_10() {
  const auto root = scratch("determinism");
  std::vector<std::string> model, lm, metrics, extraction;
  for (const char* run : {"a", "b"}) {
    const auto c = toy_config(root / run, 1);
    cmd_gen_data(c);
    cmd_pretrain_lm(c);
    cmd_train(c);
    cmd_extract(c);
    const auto p = run_paths(c);
    model.push_back(slurp(p.model.string() + ".bin"));
    lm.push_back(slurp(p.lm.string() + ".bin"));
    metrics.push_back(slurp(p.metrics));
    extraction.push_back(slurp(p.extraction));
  }
  fs::remove_all(root);
  const bool ok = !model[0].empty() && model[0] == model[1] && lm[0] == lm[1] && !metrics[0].empty() &&
                  metrics[0] == metrics[1] && extraction[0] == extraction[1];
  return {ok, "model checkpoint " + std::string(model[0] == model[1] ? "identical" : "differs") + " (" +
                  std::to_string(model[0].size()) + " bytes float32), LM checkpoint " +
                  (lm[0] == lm[1] ? "identical" : "differs") + ", metrics CSV " +
                  (metrics[0] == metrics[1] ? "identical" : "differs")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<Verdict()>> criteria{criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
                                                       criterion_6, criterion_7, criterion_8, criterion_9, criterion_10};
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.contains(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i]();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << v.detail << " [" << fmt(secs, 3)
              << " s]" << std::endl;
    failures += !v.pass;
  }
  return failures == 0 ? 0 : 1;
}
