#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "emotl/autodiff.hpp"
#include "emotl/errors.hpp"

namespace emotl {

// Central-difference estimate of d loss / d p for every scalar of every
// parameter. `loss` must read the parameters' current values; they are
// perturbed in place and restored exactly.
inline GradientSet finite_difference_gradient(const std::function<double()>& loss,
                                              const std::vector<Parameter*>& params, double eps = 1e-5) {
  if (!(eps > 0.0)) throw ConfigError("finite-difference step must be positive");
  const double f0 = loss();
  const double f1 = loss();
  if (f0 != f1 && !(std::isnan(f0) && std::isnan(f1)))
    throw OracleUnusableError("loss differs across two identical evaluations");
  GradientSet out;
  for (Parameter* p : params) {
    Tensor g(p->value.shape());
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + eps;
      const double up = loss();
      p->value[i] = saved - eps;
      const double down = loss();
      p->value[i] = saved;
      g[i] = (up - down) / (2.0 * eps);
    }
    out.emplace(p->name, std::move(g));
  }
  return out;
}

// Elementwise |a-b| / max(|a|, |b|, floor); the floor keeps gradients that
// are zero up to round-off from dominating the ratio.
inline double max_relative_error(const Tensor& analytic, const Tensor& numeric, double floor = 1e-6) {
  analytic.require_same_shape(numeric, "relative error");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i], n = numeric[i];
    const double denom = std::max({std::abs(a), std::abs(n), floor});
    worst = std::max(worst, std::abs(a - n) / denom);
  }
  return worst;
}

inline double max_relative_error(const GradientSet& analytic, const GradientSet& numeric, double floor = 1e-6) {
  double worst = 0.0;
  for (const auto& [name, n] : numeric) {
    auto it = analytic.find(name);
    if (it == analytic.end()) throw ContractViolation("no analytic gradient for '" + name + "'");
    worst = std::max(worst, max_relative_error(it->second, n, floor));
  }
  return worst;
}

}  // namespace emotl
