#pragma once

#include <algorithm>
#include <cmath>
#include <span>

#include "crrt/nn/graph.hpp"

namespace crrt::nn {

/// Compares reverse-mode gradients with central differences.
///
/// `loss` builds a scalar on a fresh graph from the current parameter values.
/// Returns max over checked coordinates of
/// |analytic - numeric| / max(1, |numeric|). `max_per_param` (0 = all) caps the
/// coordinates visited per parameter, spread evenly across it.
template <class F>
double finite_diff_check(std::span<Parameter<double>* const> params, F&& loss, double eps = 1e-5,
                         std::size_t max_per_param = 0) {
  auto evaluate = [&] {
    Graph<double> g;
    return loss(g).value().item();
  };
  {
    Graph<double> g;
    auto out = loss(g);
    g.backward(out);
  }
  const double base = evaluate();
  if (evaluate() != base) throw ContractError("finite_diff_check: loss is not deterministic");

  double worst = 0;
  for (auto* p : params) {
    const Tensor<double> analytic = p->grad;
    const std::size_t n = p->value.size();
    const std::size_t step = (max_per_param == 0 || n <= max_per_param) ? 1 : n / max_per_param;
    for (std::size_t i = 0; i < n; i += step) {
      const double orig = p->value[i];
      p->value[i] = orig + eps;
      const double up = evaluate();
      p->value[i] = orig - eps;
      const double down = evaluate();
      p->value[i] = orig;
      const double numeric = (up - down) / (2 * eps);
      worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric)));
    }
  }
  return worst;
}

}  // namespace crrt::nn
