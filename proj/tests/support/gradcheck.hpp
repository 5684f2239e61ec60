#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "multirc/rng.hpp"
#include "multirc/tensor.hpp"

namespace multirc::testing {

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;  // "param[i]" of the largest error
};

/// Relative error with a small absolute floor so exact zeros compare cleanly.
inline double rel_error(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Compares tape gradients of `loss_fn` with five-point central differences
/// on every element of `params`. `loss_fn` must be deterministic.
inline GradCheck check_gradients(const std::vector<Tensor>& params, const std::function<Tensor()>& loss_fn,
                                 double step = 1e-4, double floor = 1e-8) {
  for (auto p : params) p.zero_grad();
  Tape tape;
  Tensor loss;
  {
    Tape::Scope scope(tape);
    loss = loss_fn();
  }
  tape.backward(loss);
  std::vector<std::vector<double>> analytic;
  for (const auto& p : params) analytic.emplace_back(p.grad().begin(), p.grad().end());

  GradCheck out;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor p = params[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p[i];
      auto at = [&](double offset) {
        p.mutable_data()[i] = saved + offset;
        return loss_fn().item();
      };
      const double numeric = (8.0 * (at(step) - at(-step)) - (at(2.0 * step) - at(-2.0 * step))) / (12.0 * step);
      p.mutable_data()[i] = saved;
      const double err = rel_error(analytic[k][i], numeric, floor);
      ++out.checked;
      if (err > out.max_rel_error) {
        out.max_rel_error = err;
        out.worst = "param " + std::to_string(k) + "[" + std::to_string(i) + "] analytic=" +
                    std::to_string(analytic[k][i]) + " numeric=" + std::to_string(numeric);
      }
    }
  }
  return out;
}

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool grad = true) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  Tensor t(std::move(shape), std::move(v));
  if (grad) t.set_requires_grad(true);
  return t;
}

}  // namespace multirc::testing
