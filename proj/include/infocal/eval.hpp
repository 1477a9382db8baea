#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"

#include "infocal/errors.hpp"
#include "infocal/predictor.hpp"

namespace infocal {

/// Token overlap counts; corpus scores are computed from summed counts.
struct RationaleCounts {
  std::size_t selected = 0;
  std::size_t gold = 0;
  std::size_t overlap = 0;
  std::size_t tokens = 0;  // non-pad positions

  RationaleCounts& operator+=(const RationaleCounts& o) {
    selected += o.selected;
    gold += o.gold;
    overlap += o.overlap;
    tokens += o.tokens;
    return *this;
  }
};

struct RationaleScore {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  double selection_pct = 0;  // fraction in [0, 1]
};

inline double f1_score(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }

/// Counts for one instance. `valid` marks non-pad positions; empty means all.
inline RationaleCounts rationale_counts(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gold,
                                        std::span<const std::uint8_t> valid = {}) {
  expects(pred.size() == gold.size(), "rationale_prf: predicted and gold masks differ in length");
  expects(valid.empty() || valid.size() == pred.size(), "rationale_prf: validity mask differs in length");
  RationaleCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!valid.empty() && !valid[i]) continue;
    ++c.tokens;
    c.selected += pred[i] != 0;
    c.gold += gold[i] != 0;
    c.overlap += pred[i] != 0 && gold[i] != 0;
  }
  return c;
}

inline RationaleScore rationale_score(const RationaleCounts& c) {
  RationaleScore s;
  s.precision = c.selected ? static_cast<double>(c.overlap) / static_cast<double>(c.selected) : 0.0;
  s.recall = c.gold ? static_cast<double>(c.overlap) / static_cast<double>(c.gold) : 0.0;
  s.f1 = f1_score(s.precision, s.recall);
  s.selection_pct = c.tokens ? static_cast<double>(c.selected) / static_cast<double>(c.tokens) : 0.0;
  return s;
}

inline RationaleScore rationale_prf(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gold,
                                    std::span<const std::uint8_t> valid = {}) {
  return rationale_score(rationale_counts(pred, gold, valid));
}

/// Micro-averaged over every token of every instance.
inline RationaleScore rationale_prf(const std::vector<std::vector<std::uint8_t>>& preds,
                                    const std::vector<std::vector<std::uint8_t>>& golds) {
  expects(preds.size() == golds.size(), "rationale_prf: instance counts differ");
  RationaleCounts total;
  for (std::size_t i = 0; i < preds.size(); ++i) total += rationale_counts(preds[i], golds[i]);
  return rationale_score(total);
}

struct TaskScore {
  TaskMode mode = TaskMode::classification;
  double accuracy = 0;
  double macro_precision = 0;
  double macro_recall = 0;
  double macro_f1 = 0;
  double mse = 0;
};

/// Classification: accuracy plus per-class P/R/F1 averaged over the classes
/// that occur in `golds`. Regression: mean squared error.
inline TaskScore task_metrics(std::span<const double> preds, std::span<const double> golds, TaskMode mode) {
  expects(!golds.empty(), "task_metrics: empty input");
  expects(preds.size() == golds.size(), "task_metrics: prediction and gold counts differ");
  TaskScore s;
  s.mode = mode;
  const auto n = static_cast<double>(golds.size());
  if (mode == TaskMode::regression) {
    double sq = 0;
    for (std::size_t i = 0; i < golds.size(); ++i) sq += (preds[i] - golds[i]) * (preds[i] - golds[i]);
    s.mse = sq / n;
    return s;
  }
  struct Tally {
    std::size_t tp = 0, predicted = 0, gold = 0;
  };
  std::map<long long, Tally> classes;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    const auto g = std::llround(golds[i]);
    const auto p = std::llround(preds[i]);
    classes[g].gold++;
    classes[p].predicted++;
    if (g == p) {
      ++correct;
      classes[g].tp++;
    }
  }
  s.accuracy = static_cast<double>(correct) / n;
  std::size_t present = 0;
  for (const auto& [label, t] : classes) {
    if (t.gold == 0) continue;
    ++present;
    const double p = t.predicted ? static_cast<double>(t.tp) / static_cast<double>(t.predicted) : 0.0;
    const double r = static_cast<double>(t.tp) / static_cast<double>(t.gold);
    s.macro_precision += p;
    s.macro_recall += r;
    s.macro_f1 += f1_score(p, r);
  }
  s.macro_precision /= static_cast<double>(present);
  s.macro_recall /= static_cast<double>(present);
  s.macro_f1 /= static_cast<double>(present);
  return s;
}

inline nlohmann::json rationale_score_to_json(const RationaleScore& s) {
  return {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}, {"selection_pct", s.selection_pct}};
}

inline nlohmann::json task_score_to_json(const TaskScore& s) {
  if (s.mode == TaskMode::regression) return {{"mode", "regression"}, {"mse", s.mse}};
  return {{"mode", "classification"},
          {"accuracy", s.accuracy},
          {"macro_precision", s.macro_precision},
          {"macro_recall", s.macro_recall},
          {"macro_f1", s.macro_f1}};
}

/// Report layout: {"rationale": {...} | null, "task": {...}, "meta": {...}}.
inline nlohmann::json eval_report(const std::optional<RationaleScore>& rationale, const TaskScore& task,
                                  nlohmann::json meta) {
  nlohmann::json j;
  j["rationale"] = rationale ? rationale_score_to_json(*rationale) : nlohmann::json(nullptr);
  j["task"] = task_score_to_json(task);
  j["meta"] = std::move(meta);
  return j;
}

}  // namespace infocal
