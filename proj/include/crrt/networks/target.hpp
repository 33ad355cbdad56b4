#pragma once

#include "crrt/nn/layers.hpp"

namespace crrt::networks {

/// target <- tau * online + (1 - tau) * target, parameter by parameter.
///
/// Non-trainable parameters are skipped: they are copies that never change,
/// and the interpolation would only add rounding noise.
template <class T>
void soft_update(nn::ParameterStore<T>& target, const nn::ParameterStore<T>& online, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw ContractError("soft_update: tau must lie in (0, 1]");
  if (target.size() != online.size()) throw ContractError("soft_update: parameter lists differ in length");
  for (std::size_t i = 0; i < online.size(); ++i) {
    if (target[i].name != online[i].name || target[i].value.shape() != online[i].value.shape()) {
      throw ContractError("soft_update: parameter " + online[i].name + " does not match target " + target[i].name);
    }
  }
  const T a = static_cast<T>(tau);
  const T b = static_cast<T>(1.0 - tau);
  for (std::size_t i = 0; i < online.size(); ++i) {
    if (!online[i].trainable) continue;
    if (tau == 1.0) {
      target[i].value = online[i].value;
    } else {
      target[i].value.mat() = a * online[i].value.mat() + b * target[i].value.mat();
    }
  }
}

/// An online network and its slowly tracking copy.
template <class Net>
struct TargetPair {
  Net online;
  Net target;
  double tau = 0.01;

  TargetPair() = default;
  TargetPair(Net net, double t) : online(net), target(std::move(net)), tau(t) {}

  void update() { soft_update(target.parameters(), online.parameters(), tau); }
};

}  // namespace crrt::networks
