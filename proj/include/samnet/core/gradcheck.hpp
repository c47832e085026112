#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "samnet/core/errors.hpp"
#include "samnet/core/params.hpp"
#include "samnet/core/tape.hpp"

namespace samnet::nd {

template <class T>
struct GradCheckResult {
  T max_rel_err = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t entries = 0;
};

/// Compares tape gradients with central differences over every entry of every
/// parameter. `f(tape, params)` must build a scalar and be deterministic.
/// Error per entry: |analytic - numeric| / max(1, |analytic|, |numeric|).
template <class T, class F>
GradCheckResult<T> grad_check(F&& f, ParamStore<T>& params, T eps) {
  if (!(eps >= T(1e-7) && eps <= T(1e-2))) {
    throw InputError("grad_check: eps must lie in [1e-7, 1e-2]");
  }
  GradientSet<T> analytic(params);
  {
    Tape<T> tape;
    Var<T> out = f(tape, static_cast<const ParamStore<T>&>(params));
    if (!std::isfinite(static_cast<double>(out.item()))) throw NumericError("grad_check: non-finite objective");
    tape.backward(out);
    tape.accumulate_param_grads(analytic);
  }
  auto evaluate = [&](const std::string& name) {
    Tape<T> tape;
    const T v = f(tape, static_cast<const ParamStore<T>&>(params)).item();
    if (!std::isfinite(static_cast<double>(v))) {
      throw NumericError("grad_check: non-finite objective when perturbing '" + name + "'");
    }
    return v;
  };

  GradCheckResult<T> result;
  for (auto& p : params) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const T saved = p.value.data[i];
      p.value.data[i] = saved + eps;
      const T up = evaluate(p.name);
      p.value.data[i] = saved - eps;
      const T down = evaluate(p.name);
      p.value.data[i] = saved;
      const T numeric = (up - down) / (T(2) * eps);
      const T a = analytic.grads[p.index][i];
      const T denom = std::max({T(1), std::abs(a), std::abs(numeric)});
      const T err = std::abs(a - numeric) / denom;
      ++result.entries;
      if (err > result.max_rel_err || result.worst_param.empty()) {
        if (err >= result.max_rel_err) {
          result.max_rel_err = err;
          result.worst_param = p.name;
          result.worst_index = i;
        }
      }
    }
  }
  return result;
}

}  // namespace samnet::nd
