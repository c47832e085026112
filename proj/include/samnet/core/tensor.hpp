#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "samnet/core/errors.hpp"

namespace samnet::nd {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, std::size_t b) { return a * b; });
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  return os.str();
}

/// Aligned storage so vectorized kernels see the same alignment on every run.
template <class T>
using Buffer = std::vector<T, Eigen::aligned_allocator<T>>;

/// Dense row-major array. Gradient bookkeeping lives on the tape, not here.
template <class T>
struct Tensor {
  Shape shape;
  Buffer<T> data;

  Tensor() = default;

  explicit Tensor(Shape s, T fill = T(0)) : shape(std::move(s)), data(numel(shape), fill) {
    check_extents();
  }

  Tensor(Shape s, Buffer<T> values) : shape(std::move(s)), data(std::move(values)) {
    check_extents();
    if (data.size() != numel(shape)) {
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + to_string(shape));
    }
  }

  static Tensor vector(std::initializer_list<T> values) {
    return Tensor({values.size()}, Buffer<T>(values.begin(), values.end()));
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<T> values) {
    return Tensor({rows, cols}, Buffer<T>(values.begin(), values.end()));
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }

  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  T& at(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
  const T& at(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

  std::span<T> span() { return {data.data(), data.size()}; }
  std::span<const T> span() const { return {data.data(), data.size()}; }

  template <class U>
  Tensor<U> cast() const {
    Buffer<U> out(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out[i] = static_cast<U>(data[i]);
    return Tensor<U>(shape, std::move(out));
  }

 private:
  void check_extents() const {
    for (auto e : shape) {
      if (e == 0) throw ShapeError("tensor extents must be positive, got " + to_string(shape));
    }
  }
};

}  // namespace samnet::nd
