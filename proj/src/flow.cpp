// Copyright 2026 The LDDR Authors
// SPDX-License-Identifier: Apache-2.0

#include "lddr/flow.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace lddr {

template <typename T>
FlowSample<T> make_flow_sample(const BasicTensor<T>& x0, const BasicTensor<T>& x1, double t) {
  if (x0.shape() != x1.shape()) {
    throw DimensionError("flow endpoints " + shape_str(x0.shape()) + " and " + shape_str(x1.shape()));
  }
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("flow time outside [0, 1]");
  FlowSample<T> s{x0, x1, t, BasicTensor<T>(x0.shape()), BasicTensor<T>(x0.shape())};
  const T tt = static_cast<T>(t);
  const T one_minus = static_cast<T>(1.0 - t);
  for (std::size_t i = 0; i < x0.size(); ++i) {
    s.v_target[i] = x1[i] - x0[i];
    if (t == 0.0) {
      s.x_t[i] = x0[i];
    } else if (t == 1.0) {
      s.x_t[i] = x1[i];
    } else {
      s.x_t[i] = one_minus * x0[i] + tt * x1[i];
    }
  }
  return s;
}

template <typename T>
BasicTensor<T> gaussian_noise(const Shape& shape, Rng& rng) {
  BasicTensor<T> n(shape);
  for (auto& v : n.vec()) v = static_cast<T>(rng.normal());
  return n;
}

template <typename T>
FlowSample<T> make_flow_sample(const BasicTensor<T>& x0, Rng& rng, std::optional<double> t) {
  BasicTensor<T> x1 = gaussian_noise<T>(x0.shape(), rng);
  const double tt = t ? *t : rng.uniform();
  return make_flow_sample(x0, x1, tt);
}

template <typename T>
Var<T> fm_loss(Var<T> v_pred, const FlowSample<T>& sample) {
  if (v_pred.value().shape() != sample.v_target.shape()) {
    throw DimensionError("fm_loss: prediction " + shape_str(v_pred.value().shape()) +
                         " vs target " + shape_str(sample.v_target.shape()));
  }
  return mse(v_pred, v_pred.graph->constant(sample.v_target));
}

template <typename T>
BasicTensor<T> euler_integrate(const VelocityFn<T>& velocity, BasicTensor<T> x, int steps,
                               bool clamp) {
  if (steps < 1) throw std::invalid_argument("sampler needs steps >= 1");
  const T dt = static_cast<T>(1.0 / steps);
  for (int k = steps; k >= 1; --k) {
    const double t = static_cast<double>(k) / steps;
    const BasicTensor<T> v = velocity(x, t);
    if (v.shape() != x.shape()) throw DimensionError("velocity shape differs from state");
    for (std::size_t i = 0; i < x.size(); ++i) x[i] -= dt * v[i];
    if (!x.all_finite()) {
      throw NonFiniteError("sampler state became non-finite at step " + std::to_string(steps - k + 1) +
                           " (t = " + std::to_string(t) + ")");
    }
  }
  if (clamp) {
    for (auto& v : x.vec()) v = std::clamp(v, T(-1), T(1));
  }
  return x;
}

template <typename T>
BasicTensor<T> guided_velocity(const BasicTensor<T>& v_cond, const BasicTensor<T>& v_null,
                               double scale) {
  if (v_cond.shape() != v_null.shape()) throw DimensionError("guided_velocity: shape mismatch");
  if (scale < 0) throw std::invalid_argument("guidance scale must be >= 0");
  if (scale == 1.0) return v_cond;
  if (scale == 0.0) return v_null;
  BasicTensor<T> out(v_cond.shape());
  const T s = static_cast<T>(scale);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v_null[i] + s * (v_cond[i] - v_null[i]);
  return out;
}

#define LDDR_INSTANTIATE_FLOW(T)                                                              \
  template FlowSample<T> make_flow_sample(const BasicTensor<T>&, const BasicTensor<T>&, double); \
  template FlowSample<T> make_flow_sample(const BasicTensor<T>&, Rng&, std::optional<double>);  \
  template BasicTensor<T> gaussian_noise<T>(const Shape&, Rng&);                               \
  template Var<T> fm_loss(Var<T>, const FlowSample<T>&);                                       \
  template BasicTensor<T> euler_integrate(const VelocityFn<T>&, BasicTensor<T>, int, bool);    \
  template BasicTensor<T> guided_velocity(const BasicTensor<T>&, const BasicTensor<T>&, double);

LDDR_INSTANTIATE_FLOW(float)
LDDR_INSTANTIATE_FLOW(double)

}  // namespace lddr
