#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "infocal/num/params.hpp"

namespace infocal::num {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  bool passed = true;
};

/// Builds a scalar loss from bound parameters. Must be deterministic: any
/// sampling noise is captured as fixed input.
template <typename T>
using LossClosure = std::function<Var<T>(ParamView<T>&)>;

/// Compares reverse-mode gradients against central finite differences for
/// every scalar of every parameter in `groups`. The error measure is
/// |a - b| / max(1, |a|, |b|).
template <typename T>
GradCheckReport grad_check(const LossClosure<T>& loss, ParamStore<T>& store, GroupSet groups,
                           double fd_step, double tolerance) {
  Gradients<T> analytic;
  {
    Tape<T> tape;
    ParamView<T> view(tape, store, groups);
    analytic = tape.backward(loss(view));
  }
  auto evaluate = [&]() {
    Tape<T> tape;
    ParamView<T> view(tape, store, GroupSet::none());
    return static_cast<double>(loss(view).item());
  };

  GradCheckReport report;
  for (auto& [name, param] : store) {
    if (!groups.contains(param.group)) continue;
    auto it = analytic.find(name);
    for (std::size_t i = 0; i < param.value.size(); ++i) {
      const T saved = param.value[i];
      param.value[i] = static_cast<T>(static_cast<double>(saved) + fd_step);
      const double up = evaluate();
      param.value[i] = static_cast<T>(static_cast<double>(saved) - fd_step);
      const double down = evaluate();
      param.value[i] = saved;
      const double numeric = (up - down) / (2.0 * fd_step);
      const double a = it == analytic.end() ? 0.0 : static_cast<double>(it->second[i]);
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      ++report.checked;
      if (report.worst_param.empty() || err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_param = name;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

}  // namespace infocal::num
