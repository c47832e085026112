#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "samnet/core/errors.hpp"
#include "samnet/core/rng.hpp"
#include "samnet/core/tensor.hpp"

namespace samnet::nd {

template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  std::size_t index = 0;
};

/// Ordered set of named parameters. Registration order fixes checkpoint layout.
template <class T>
class ParamStore {
 public:
  /// Registers a parameter initialized uniformly in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  std::size_t add(const std::string& name, Shape shape, std::size_t fan_in, Rng& rng) {
    Tensor<T> value(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& x : value.data) x = static_cast<T>(rng.uniform(-bound, bound));
    return add(name, std::move(value));
  }

  std::size_t add(const std::string& name, Tensor<T> value) {
    if (by_name_.count(name)) throw InputError("duplicate parameter name '" + name + "'");
    const std::size_t idx = params_.size();
    params_.push_back(Parameter<T>{name, std::move(value), idx});
    by_name_.emplace(name, idx);
    return idx;
  }

  std::size_t size() const { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return params_[i]; }

  const Parameter<T>* find(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : &params_[it->second];
  }
  Parameter<T>* find(const std::string& name) {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : &params_[it->second];
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  template <class U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& p : params_) out.add(p.name, p.value.template cast<U>());
    return out;
  }

 private:
  std::vector<Parameter<T>> params_;
  std::map<std::string, std::size_t> by_name_;
};

/// One gradient buffer per parameter, same layout as a ParamStore.
template <class T>
struct GradientSet {
  std::vector<Buffer<T>> grads;

  GradientSet() = default;
  explicit GradientSet(const ParamStore<T>& store) {
    grads.reserve(store.size());
    for (const auto& p : store) grads.emplace_back(p.value.size(), T(0));
  }

  void zero() {
    for (auto& g : grads) std::fill(g.begin(), g.end(), T(0));
  }

  void add(const GradientSet& other) {
    for (std::size_t i = 0; i < grads.size(); ++i) {
      auto& dst = grads[i];
      const auto& src = other.grads[i];
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
  }

  void scale(T s) {
    for (auto& g : grads)
      for (auto& x : g) x *= s;
  }

  double squared_norm() const {
    double s = 0;
    for (const auto& g : grads)
      for (auto x : g) s += static_cast<double>(x) * static_cast<double>(x);
    return s;
  }
};

}  // namespace samnet::nd
