#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <string>

#include "opatt/graph.hpp"

namespace opatt {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t entries = 0;
};

// Compares backward() against central finite differences for every entry of
// every parameter. `build` maps a graph to a scalar loss and must be
// deterministic. Error per entry: |a - n| / max(1, |a| + |n|).
template <typename Build>
  requires std::invocable<Build&, Graph<double>&>
GradCheckResult grad_check(ParamSet<double>& params, Build&& build, double eps = 1e-5) {
  GradStore<double> analytic(params);
  {
    Graph<double> g(params, analytic);
    const Var loss = build(g);
    if (!std::isfinite(g.scalar(loss))) throw DomainError("grad_check: loss is not finite at the base point");
    g.backward(loss);
  }

  auto eval = [&](const std::string& name, std::size_t i) {
    const std::string where = name + "[" + std::to_string(i) + "]";
    double v = 0.0;
    try {
      Graph<double> g(params);
      v = g.scalar(build(g));
    } catch (const DomainError& e) {
      throw DomainError("grad_check: perturbing " + where + ": " + e.what());
    }
    if (!std::isfinite(v)) throw DomainError("grad_check: non-finite loss after perturbing " + where);
    return v;
  };

  GradCheckResult out;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& param = params.at(p);
    auto& values = param.value.data;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = eval(param.name, i);
      values[i] = saved - eps;
      const double down = eval(param.name, i);
      values[i] = saved;

      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic.at(p)[i];
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a) + std::abs(numeric));
      ++out.entries;
      if (err > out.max_rel_error) {
        out.max_rel_error = err;
        out.worst_param = param.name;
        out.worst_index = i;
      }
    }
  }
  return out;
}

}  // namespace opatt
