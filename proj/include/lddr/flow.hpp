// Copyright 2026 The LDDR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <optional>

#include "lddr/graph.hpp"
#include "lddr/ops.hpp"
#include "lddr/rng.hpp"

namespace lddr {

/// Linear interpolant between data (t = 0) and noise (t = 1).
template <typename T>
struct FlowSample {
  BasicTensor<T> x0;
  BasicTensor<T> x1;
  double t = 0;
  BasicTensor<T> x_t;       ///< (1 - t) x0 + t x1
  BasicTensor<T> v_target;  ///< x1 - x0
};

/// Builds the sample from explicit endpoints. The endpoints t = 0 and t = 1
/// return x0 and x1 bit-for-bit.
template <typename T>
FlowSample<T> make_flow_sample(const BasicTensor<T>& x0, const BasicTensor<T>& x1, double t);

/// Draws x1 ~ N(0, I) and, unless given, t ~ U(0, 1) from `rng`.
template <typename T>
FlowSample<T> make_flow_sample(const BasicTensor<T>& x0, Rng& rng,
                               std::optional<double> t = std::nullopt);

template <typename T>
BasicTensor<T> gaussian_noise(const Shape& shape, Rng& rng);

/// Mean squared error against sample.v_target.
template <typename T>
Var<T> fm_loss(Var<T> v_pred, const FlowSample<T>& sample);

/// v(x, t) for one integration step.
template <typename T>
using VelocityFn = std::function<BasicTensor<T>(const BasicTensor<T>& x, double t)>;

/// Integrates dx/dt = v from t = 1 (x = x1) to t = 0 on a uniform grid:
/// x <- x - (1/steps) v(x, k/steps) for k = steps..1, then clamps to [-1, 1].
/// Throws NonFiniteError naming the step when the state stops being finite.
template <typename T>
BasicTensor<T> euler_integrate(const VelocityFn<T>& velocity, BasicTensor<T> x1, int steps,
                               bool clamp = true);

/// v_null + scale (v_cond - v_null); scale 1 returns v_cond and scale 0
/// returns v_null exactly.
template <typename T>
BasicTensor<T> guided_velocity(const BasicTensor<T>& v_cond, const BasicTensor<T>& v_null,
                               double scale);

}  // namespace lddr
