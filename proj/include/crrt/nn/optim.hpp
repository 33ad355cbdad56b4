#pragma once

#include <cmath>
#include <cstdint>
#include <iostream>
#include <numbers>
#include <span>
#include <vector>

#include "crrt/nn/tensor.hpp"

namespace crrt::nn {

/// Cosine annealing without warmup: base * 0.5 * (1 + cos(pi * step / total)).
/// A step past `total` is clamped to a rate of 0 with a warning.
inline double cosine_lr(std::int64_t step, std::int64_t total, double base) {
  if (total <= 0) throw ContractError("cosine_lr: total must be positive");
  if (step < 0) throw ContractError("cosine_lr: negative step");
  if (step > total) {
    std::cerr << "warning: cosine_lr step " << step << " beyond total " << total << ", clamped to 0\n";
    return 0.0;
  }
  if (step == total) return 0.0;
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total)));
}

enum class LrMode { constant, cosine };

struct LrSchedule {
  double base = 1e-4;
  std::int64_t total_steps = 1;
  LrMode mode = LrMode::constant;

  double at(std::int64_t step) const {
    return mode == LrMode::constant ? base : cosine_lr(step, total_steps, base);
  }
};

/// Scales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
template <class T>
double clip_grad_norm(std::span<Parameter<T>* const> params, double max_norm) {
  double sq = 0;
  for (const auto* p : params) {
    if (!p->trainable) continue;
    for (T g : p->grad.values()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const T f = static_cast<T>(max_norm / norm);
    for (auto* p : params)
      if (p->trainable) p->grad.mat() *= f;
  }
  return norm;
}

/// Adam with bias correction. Moment buffers are indexed like the parameter
/// list passed to `step`, which must not change between calls.
template <class T>
class Adam {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double max_grad_norm = 0;  // 0 disables clipping
  };

  Adam() = default;
  explicit Adam(Options opt) : opt_(opt) {}

  const Options& options() const noexcept { return opt_; }
  std::int64_t steps() const noexcept { return t_; }
  const std::vector<Tensor<T>>& first_moments() const noexcept { return m_; }
  const std::vector<Tensor<T>>& second_moments() const noexcept { return v_; }

  void step(std::span<Parameter<T>* const> params, double lr) {
    if (!(lr > 0)) throw ConfigError("lr", "learning rate must be positive, got " + std::to_string(lr));
    if (m_.empty()) {
      for (const auto* p : params) {
        m_.emplace_back(p->value.shape());
        v_.emplace_back(p->value.shape());
      }
    }
    if (m_.size() != params.size()) throw ContractError("adam: parameter list changed between steps");
    if (opt_.max_grad_norm > 0) clip_grad_norm<T>(params, opt_.max_grad_norm);
    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    const T b1 = static_cast<T>(opt_.beta1), b2 = static_cast<T>(opt_.beta2);
    for (std::size_t k = 0; k < params.size(); ++k) {
      Parameter<T>& p = *params[k];
      if (!p.trainable) continue;
      if (m_[k].shape() != p.value.shape()) throw ContractError("adam: moment shape differs from " + p.name);
      auto& m = m_[k].storage();
      auto& v = v_[k].storage();
      auto& w = p.value.storage();
      const auto& g = p.grad.storage();
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = b1 * m[i] + (T(1) - b1) * g[i];
        v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        w[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + opt_.eps));
      }
    }
  }

  /// Restores moment buffers and step count (checkpoint resume).
  void restore(std::vector<Tensor<T>> m, std::vector<Tensor<T>> v, std::int64_t t) {
    if (m.size() != v.size()) throw ContractError("adam: moment lists differ in length");
    m_ = std::move(m);
    v_ = std::move(v);
    t_ = t;
  }

 private:
  Options opt_;
  std::vector<Tensor<T>> m_;
  std::vector<Tensor<T>> v_;
  std::int64_t t_ = 0;
};

}  // namespace crrt::nn
