#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "synfault/tensor.hpp"

namespace synfault::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <std::floating_point T>
struct AdamState {
  AdamConfig config;
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;
  std::uint64_t step_count = 0;
};

template <std::floating_point T>
AdamState<T> make_adam_state(const ParameterStore<T>& params, AdamConfig config = {}) {
  if (!(config.lr > 0.0) || !(config.beta1 >= 0.0 && config.beta1 < 1.0) || !(config.beta2 >= 0.0 && config.beta2 < 1.0) ||
      !(config.epsilon > 0.0)) {
    throw ParameterError("invalid Adam hyper-parameters");
  }
  AdamState<T> s;
  s.config = config;
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.first_moment.emplace_back(params[i].value.size(), T(0));
    s.second_moment.emplace_back(params[i].value.size(), T(0));
  }
  return s;
}

/// One bias-corrected Adam update of every parameter from its .grad buffer.
template <std::floating_point T>
void adam_step(ParameterStore<T>& params, AdamState<T>& state) {
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw ShapeError("Adam state does not match parameter count");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (p.grad.size() != p.value.size() || state.first_moment[i].size() != p.value.size() ||
        state.second_moment[i].size() != p.value.size()) {
      throw ShapeError("Adam: shape mismatch for parameter " + p.name);
    }
  }
  const auto& c = state.config;
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  const T b1 = static_cast<T>(c.beta1), b2 = static_cast<T>(c.beta2);
  const T step = static_cast<T>(c.lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(c.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < m.size(); ++j) {
      const T g = p.grad[j];
      m[j] = b1 * m[j] + (T(1) - b1) * g;
      v[j] = b2 * v[j] + (T(1) - b2) * g * g;
      p.value[j] -= step * m[j] / (std::sqrt(v[j]) * inv_sqrt_bc2 + eps);
    }
  }
}

/// Uniform(-sqrt(1/fan_in), sqrt(1/fan_in)) weights.
template <std::floating_point T, class R>
void init_uniform_fan_in(Parameter<T>& w, std::size_t fan_in, R& rng) {
  if (fan_in == 0) throw ParameterError("fan_in must be positive");
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (T& v : w.value.data) v = static_cast<T>(u(rng));
}

}  // namespace synfault::nn
