// Copyright 2026 The AFANet Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "afanet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace afanet {

float GradCheckReport::max_rel_error() const {
  float m = 0.0f;
  for (const auto& in : inputs) m = std::max(m, in.max_rel_error);
  return m;
}

namespace {

double evaluate(const ScalarFn& f, const std::vector<Tensor>& inputs) {
  Graph g;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const auto& t : inputs) vars.push_back(g.constant(t));
  const Var out = f(g, vars);
  const Tensor& v = g.value(out);
  if (v.numel() != 1) throw_shape("grad_check: function must return a single element");
  return v[0];
}

}  // namespace

GradCheckReport grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs,
                           const GradCheckOptions& options) {
  GradCheckReport report;
  std::vector<Tensor> analytic;
  {
    Graph g;
    std::vector<Var> vars;
    for (const auto& t : inputs) vars.push_back(g.leaf(t, true));
    const Var out = f(g, vars);
    if (!g.value(out).all_finite()) {
      report.finite = false;
      report.message = "non-finite function value at the base point";
      return report;
    }
    g.backward(out);
    for (Var v : vars) {
      analytic.push_back(g.grad(v));
      if (!analytic.back().all_finite()) report.finite = false;
    }
  }
  if (!report.finite) {
    report.message = "non-finite analytic gradient";
    return report;
  }

  struct Probe {
    std::size_t index;
    double central, forward, backward;
  };
  const double h = options.step;
  const double f0 = evaluate(f, inputs);
  std::vector<Tensor> work = inputs;
  std::vector<std::vector<Probe>> probes(inputs.size());
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const std::size_t n = inputs[k].numel();
    std::size_t stride = 1;
    if (options.max_coords_per_input > 0 && n > options.max_coords_per_input)
      stride = (n + options.max_coords_per_input - 1) / options.max_coords_per_input;
    for (std::size_t i = 0; i < n; i += stride) {
      const float orig = work[k][i];
      work[k][i] = static_cast<float>(orig + h);
      const double fp = evaluate(f, work);
      work[k][i] = static_cast<float>(orig - h);
      const double fm = evaluate(f, work);
      work[k][i] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        report.finite = false;
        report.message = "non-finite value under perturbation of input " + std::to_string(k);
        return report;
      }
      // Use the perturbation actually representable in float32.
      const double hp = static_cast<double>(static_cast<float>(orig + h)) - orig;
      const double hm = orig - static_cast<double>(static_cast<float>(orig - h));
      probes[k].push_back({i, (fp - fm) / (hp + hm), (fp - f0) / hp, (f0 - fm) / hm});
    }
  }

  std::vector<double> scales(inputs.size(), 1e-6);
  double global = 1e-6;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (float a : analytic[k].data())
      scales[k] = std::max(scales[k], std::fabs(static_cast<double>(a)));
    for (const auto& p : probes[k]) scales[k] = std::max(scales[k], std::fabs(p.central));
    global = std::max(global, scales[k]);
  }

  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const double scale = std::max(scales[k], options.full_gradient_scale ? global : 0.0);
    GradCheckInput res;
    res.scale = static_cast<float>(scale);
    res.probed = probes[k].size();
    double worst = 0.0;
    for (const auto& p : probes[k]) {
      const double a = analytic[k][p.index];
      double err;
      if (std::fabs(p.forward - p.backward) > options.rel_tol * scale) {
        ++res.kinks;
        const double lo = std::min(p.forward, p.backward);
        const double hi = std::max(p.forward, p.backward);
        err = a < lo ? lo - a : (a > hi ? a - hi : 0.0);
      } else {
        err = std::fabs(a - p.central);
      }
      worst = std::max(worst, err);
    }
    res.max_abs_error = static_cast<float>(worst);
    res.max_rel_error = static_cast<float>(worst / scale);
    report.inputs.push_back(res);
  }
  report.passed = report.finite && report.max_rel_error() < options.rel_tol;
  std::ostringstream os;
  os << "max relative error " << report.max_rel_error();
  report.message = os.str();
  return report;
}

}  // namespace afanet
