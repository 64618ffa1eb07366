// Copyright 2026 The LDDR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "lddr/graph.hpp"
#include "lddr/rng.hpp"

namespace lddr {

struct GradCheckEntry {
  std::string param;
  std::size_t index = 0;
  double analytic = 0;
  double numeric = 0;
  double rel_error = 0;
};

struct GradCheckReport {
  bool passed = true;
  std::size_t coordinates_checked = 0;
  GradCheckEntry worst;
  std::vector<GradCheckEntry> failures;

  std::string summary() const {
    std::ostringstream os;
    os << (passed ? "PASS" : "FAIL") << " checked=" << coordinates_checked
       << " worst=" << worst.param << "[" << worst.index << "] analytic=" << worst.analytic
       << " numeric=" << worst.numeric << " rel=" << worst.rel_error;
    return os.str();
  }
};

struct GradCheckOptions {
  double eps = 1e-5;
  double tol = 1e-3;
  /// Coordinates sampled per param tensor; tensors smaller than this are
  /// checked exhaustively.
  std::size_t coords_per_param = 16;
  std::uint64_t seed = 0;
};

/// Compares reverse-mode gradients of a scalar function with central finite
/// differences. A coordinate fails when
///   |analytic - numeric| / max(1, |numeric|) > tol.
///
/// `fn` must build a fresh scalar output in the graph it receives and be
/// deterministic. `analytic_override`, when given, replaces the tape gradient
/// for a param (used to inject deliberately wrong gradients in tests).
template <typename T>
GradCheckReport grad_check(
    const std::function<Var<T>(Graph<T>&)>& fn, const std::vector<BasicParam<T>*>& params,
    const GradCheckOptions& opts = {},
    const std::function<void(const BasicParam<T>&, BasicTensor<T>&)>& analytic_override = {}) {
  for (BasicParam<T>* p : params) p->zero_grad();
  {
    Graph<T> g(true);
    Var<T> out = fn(g);
    g.backward(out);
    g.accumulate_param_grads();
  }
  auto eval = [&fn]() {
    Graph<T> g(false);
    return static_cast<double>(fn(g).value()[0]);
  };

  GradCheckReport report;
  Rng rng(opts.seed);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    BasicParam<T>& p = *params[pi];
    BasicTensor<T> analytic = p.grad;
    if (analytic_override) analytic_override(p, analytic);
    std::vector<std::size_t> coords;
    const std::size_t n = p.value.size();
    if (n <= opts.coords_per_param) {
      for (std::size_t i = 0; i < n; ++i) coords.push_back(i);
    } else {
      Rng r = rng.stream(p.name, pi);
      while (coords.size() < opts.coords_per_param) {
        const std::size_t c = r.uniform_int(n);
        if (std::find(coords.begin(), coords.end(), c) == coords.end()) coords.push_back(c);
      }
    }
    for (std::size_t idx : coords) {
      const T saved = p.value[idx];
      p.value[idx] = saved + T(opts.eps);
      const double up = eval();
      p.value[idx] = saved - T(opts.eps);
      const double down = eval();
      p.value[idx] = saved;
      const double numeric = (up - down) / (2.0 * opts.eps);
      const double a = static_cast<double>(analytic[idx]);
      const double rel = std::abs(a - numeric) / std::max(1.0, std::abs(numeric));
      GradCheckEntry e{p.name, idx, a, numeric, rel};
      ++report.coordinates_checked;
      if (report.coordinates_checked == 1 || rel > report.worst.rel_error) report.worst = e;
      if (rel > opts.tol) {
        report.passed = false;
        report.failures.push_back(e);
      }
    }
  }
  return report;
}

}  // namespace lddr
