#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "emotl/autodiff.hpp"
#include "emotl/errors.hpp"
#include "emotl/tensor.hpp"

namespace emotl {

struct ClipResult {
  double norm_before = 0.0;
  double norm_after = 0.0;
  bool clipped = false;
};

inline double global_norm(const std::vector<Tensor*>& grads) {
  double s = 0.0;
  for (const Tensor* g : grads) s += g->squared_norm();
  return std::sqrt(s);
}

// Rescales all gradients jointly so that their global L2 norm is at most
// `max_norm`.
inline ClipResult clip_global_norm(const std::vector<Tensor*>& grads, double max_norm) {
  if (!(max_norm > 0.0)) throw ConfigError("clip norm must be positive");
  ClipResult r;
  r.norm_before = global_norm(grads);
  r.norm_after = r.norm_before;
  if (r.norm_before > max_norm) {
    const double factor = max_norm / r.norm_before;
    for (Tensor* g : grads) *g *= factor;
    r.norm_after = global_norm(grads);
    r.clipped = true;
  }
  return r;
}

inline ClipResult clip_global_norm(GradientSet& grads, double max_norm) {
  std::vector<Tensor*> ptrs;
  for (auto& [name, g] : grads) ptrs.push_back(&g);
  return clip_global_norm(ptrs, max_norm);
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam moments keyed by parameter name. Bias correction uses a per-parameter
// step count, so a parameter that starts updating late (after unfreezing)
// gets the same first-step magnitude as one trained from the start.
class AdamState {
 public:
  struct Moments {
    Tensor m;
    Tensor v;
    std::uint64_t t = 0;
  };

  AdamState() = default;
  explicit AdamState(AdamConfig config) : config_(config) {}

  const AdamConfig& config() const { return config_; }
  std::uint64_t steps() const { return steps_; }
  const std::map<std::string, Moments>& moments() const { return moments_; }

  // One update over `params` with gradients `grads` (same order).
  void update(const std::vector<Parameter*>& params, const std::vector<const Tensor*>& grads) {
    if (params.size() != grads.size()) throw DimensionError("adam: parameter and gradient counts differ");
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value.require_same_shape(*grads[i], "adam");
    for (std::size_t i = 0; i < params.size(); ++i) apply(*params[i], *grads[i]);
    ++steps_;
  }

  // Uses each parameter's own accumulated grad.
  void update(const std::vector<Parameter*>& params) {
    std::vector<const Tensor*> grads;
    for (Parameter* p : params) {
      if (!p->has_grad()) p->zero_grad();
      grads.push_back(&p->grad);
    }
    update(params, grads);
  }

 private:
  void apply(Parameter& p, const Tensor& g) {
    Moments& mo = moments_[p.name];
    if (!mo.m.same_shape(p.value)) {
      mo.m = Tensor(p.value.shape());
      mo.v = Tensor(p.value.shape());
      mo.t = 0;
    }
    ++mo.t;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(mo.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(mo.t));
    for (std::size_t i = 0; i < g.size(); ++i) {
      mo.m[i] = b1 * mo.m[i] + (1.0 - b1) * g[i];
      mo.v[i] = b2 * mo.v[i] + (1.0 - b2) * g[i] * g[i];
      const double mhat = mo.m[i] / c1;
      const double vhat = mo.v[i] / c2;
      p.value[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }

  AdamConfig config_;
  std::map<std::string, Moments> moments_;
  std::uint64_t steps_ = 0;
};

inline void adam_update(const std::vector<Parameter*>& params, const std::vector<const Tensor*>& grads,
                        AdamState& state) {
  state.update(params, grads);
}

}  // namespace emotl
