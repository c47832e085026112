#pragma once

#include <cmath>
#include <vector>

#include "samnet/core/params.hpp"

namespace samnet::harness {

/// Adam with bias correction.
template <class T>
class Adam {
 public:
  Adam(const nd::ParamStore<T>& store, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), m_(store), v_(store) {}

  std::size_t iterations() const { return t_; }

  void step(nd::ParamStore<T>& store, const nd::GradientSet<T>& g) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (auto& p : store) {
      auto& m = m_.grads[p.index];
      auto& v = v_.grads[p.index];
      const auto& gi = g.grads[p.index];
      for (std::size_t j = 0; j < gi.size(); ++j) {
        const double gj = static_cast<double>(gi[j]);
        m[j] = static_cast<T>(b1_ * static_cast<double>(m[j]) + (1 - b1_) * gj);
        v[j] = static_cast<T>(b2_ * static_cast<double>(v[j]) + (1 - b2_) * gj * gj);
        const double mh = static_cast<double>(m[j]) / c1;
        const double vh = static_cast<double>(v[j]) / c2;
        p.value.data[j] -= static_cast<T>(lr_ * mh / (std::sqrt(vh) + eps_));
      }
    }
  }

 private:
  double lr_, b1_, b2_, eps_;
  std::size_t t_ = 0;
  nd::GradientSet<T> m_, v_;
};

/// Rescales g in place so its global norm is at most max_norm; returns the norm before clipping.
template <class T>
double clip_global_norm(nd::GradientSet<T>& g, double max_norm) {
  const double norm = std::sqrt(g.squared_norm());
  if (norm > max_norm) g.scale(static_cast<T>(max_norm / norm));
  return norm;
}

}  // namespace samnet::harness
