#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <memory>
#include <span>
#include <vector>

#include "samnet/core/errors.hpp"
#include "samnet/core/tape.hpp"

// Differentiable operations over tape variables. Every op records a closure
// that adds its contribution to the gradients of its inputs.
namespace samnet::nd {

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using CMatMap = Eigen::Map<const RowMat<T>>;
template <class T>
using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <class T>
using CVecMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

template <class T>
CMatMap<T> cmat(std::span<const T> s, std::size_t rows, std::size_t cols) {
  return CMatMap<T>(s.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
template <class T>
MatMap<T> mat(Buffer<T>& b, std::size_t rows, std::size_t cols) {
  return MatMap<T>(b.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
template <class T>
CVecMap<T> cvec(std::span<const T> s) {
  return CVecMap<T>(s.data(), static_cast<Eigen::Index>(s.size()));
}
template <class T>
VecMap<T> vec(Buffer<T>& b) {
  return VecMap<T>(b.data(), static_cast<Eigen::Index>(b.size()));
}

inline void require(bool ok, const char* op, const std::string& what) {
  if (!ok) throw ShapeError(std::string(op) + ": " + what);
}

template <class T>
void require_same(Var<T> a, Var<T> b, const char* op) {
  require(a.shape() == b.shape(), op,
          "shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

template <class T>
void require_scalar(Var<T> s, const char* op) {
  require(s.numel() == 1, op, "expected a scalar, got " + to_string(s.shape()));
}

template <class T>
bool any_grad(std::initializer_list<Var<T>> vs) {
  for (auto v : vs)
    if (v.needs_grad()) return true;
  return false;
}

// Elementwise unary op whose derivative is expressed through (input, output).
template <class T, class F, class D>
Var<T> unary(Var<T> x, F f, D dfdx) {
  auto xv = x.value();
  Buffer<T> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  const auto xi = x.id();
  return x.tape().push(x.shape(), std::move(out), x.needs_grad(),
                       [xi, dfdx](Tape<T>& tp, std::uint32_t self) {
                         auto g = tp.grad(self);
                         auto xv = tp.value(xi);
                         auto yv = tp.value(self);
                         auto& gx = tp.grad_mut(xi);
                         for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dfdx(xv[i], yv[i]);
                       });
}

}  // namespace detail

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::require_same(a, b, "add");
  auto av = a.value(), bv = b.value();
  Buffer<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  const auto ai = a.id(), bi = b.id();
  const bool ga = a.needs_grad(), gb = b.needs_grad();
  return a.tape().push(a.shape(), std::move(out), ga || gb,
                       [ai, bi, ga, gb](Tape<T>& tp, std::uint32_t self) {
                         auto g = tp.grad(self);
                         if (ga) {
                           auto& d = tp.grad_mut(ai);
                           for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
                         }
                         if (gb) {
                           auto& d = tp.grad_mut(bi);
                           for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
                         }
                       });
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
  detail::require_same(a, b, "sub");
  auto av = a.value(), bv = b.value();
  Buffer<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
  const auto ai = a.id(), bi = b.id();
  const bool ga = a.needs_grad(), gb = b.needs_grad();
  return a.tape().push(a.shape(), std::move(out), ga || gb,
                       [ai, bi, ga, gb](Tape<T>& tp, std::uint32_t self) {
                         auto g = tp.grad(self);
                         if (ga) {
                           auto& d = tp.grad_mut(ai);
                           for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
                         }
                         if (gb) {
                           auto& d = tp.grad_mut(bi);
                           for (std::size_t i = 0; i < g.size(); ++i) d[i] -= g[i];
                         }
                       });
}

/// Hadamard product.
template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  detail::require_same(a, b, "mul");
  auto av = a.value(), bv = b.value();
  Buffer<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  const auto ai = a.id(), bi = b.id();
  const bool ga = a.needs_grad(), gb = b.needs_grad();
  return a.tape().push(a.shape(), std::move(out), ga || gb,
                       [ai, bi, ga, gb](Tape<T>& tp, std::uint32_t self) {
                         auto g = tp.grad(self);
                         auto av = tp.value(ai), bv = tp.value(bi);
                         if (ga) {
                           auto& d = tp.grad_mut(ai);
                           for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * bv[i];
                         }
                         if (gb) {
                           auto& d = tp.grad_mut(bi);
                           for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * av[i];
                         }
                       });
}

template <class T>
Var<T> operator+(Var<T> a, Var<T> b) { return add(a, b); }
template <class T>
Var<T> operator-(Var<T> a, Var<T> b) { return sub(a, b); }
template <class T>
Var<T> operator*(Var<T> a, Var<T> b) { return mul(a, b); }

/// x * c for a compile-time-free constant c.
template <class T>
Var<T> scale(Var<T> x, T c) {
  return detail::unary(
      x, [c](T v) { return c * v; }, [c](T, T) { return c; });
}

/// Broadcast product of a tensor with a scalar variable (shape {1}).
template <class T>
Var<T> scale(Var<T> x, Var<T> s) {
  detail::require_scalar(s, "scale");
  auto xv = x.value();
  const T sv = s.item();
  Buffer<T> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = sv * xv[i];
  const auto xi = x.id(), si = s.id();
  const bool gx = x.needs_grad(), gs = s.needs_grad();
  return x.tape().push(x.shape(), std::move(out), gx || gs,
                       [xi, si, gx, gs](Tape<T>& tp, std::uint32_t self) {
                         auto g = tp.grad(self);
                         auto xv = tp.value(xi);
                         const T sv = tp.value(si)[0];
                         if (gx) {
                           auto& d = tp.grad_mut(xi);
                           for (std::size_t i = 0; i < g.size(); ++i) d[i] += sv * g[i];
                         }
                         if (gs) {
                           T acc = 0;
                           for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * xv[i];
                           tp.grad_mut(si)[0] += acc;
                         }
                       });
}

/// 1 - x, elementwise.
template <class T>
Var<T> one_minus(Var<T> x) {
  return detail::unary(
      x, [](T v) { return T(1) - v; }, [](T, T) { return T(-1); });
}

template <class T>
Var<T> sigmoid(Var<T> x) {
  return detail::unary(
      x,
      [](T v) {
        if (v >= 0) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Var<T> tanh(Var<T> x) {
  return detail::unary(
      x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

/// ELU with alpha = 1.
template <class T>
Var<T> elu(Var<T> x) {
  return detail::unary(
      x, [](T v) { return v > 0 ? v : std::expm1(v); },
      [](T v, T y) { return v > 0 ? T(1) : y + T(1); });
}

/// Numerically stable softmax over a rank-1 tensor.
template <class T>
Var<T> softmax(Var<T> x) {
  detail::require(x.shape().size() == 1, "softmax", "expected rank-1 input");
  auto xv = x.value();
  T mx = xv[0];
  for (auto v : xv) {
    if (!std::isfinite(v)) throw NumericError("softmax: non-finite input");
    mx = std::max(mx, v);
  }
  Buffer<T> out(xv.size());
  T total = 0;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    out[i] = std::exp(xv[i] - mx);
    total += out[i];
  }
  for (auto& v : out) v /= total;
  const auto xi = x.id();
  return x.tape().push(x.shape(), std::move(out), x.needs_grad(),
                       [xi](Tape<T>& tp, std::uint32_t self) {
                         auto g = tp.grad(self);
                         auto y = tp.value(self);
                         T dot = 0;
                         for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * y[i];
                         auto& d = tp.grad_mut(xi);
                         for (std::size_t i = 0; i < g.size(); ++i) d[i] += y[i] * (g[i] - dot);
                       });
}

/// Affine map y = x W^T + b. x is {in} or {rows, in}; W is {out, in}; b is {out}.
template <class T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> b) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  detail::require(ws.size() == 2, "linear", "weight must be rank-2");
  detail::require(xs.size() == 1 || xs.size() == 2, "linear", "input must be rank-1 or rank-2");
  const std::size_t in = ws[1], outd = ws[0];
  const std::size_t rows = xs.size() == 1 ? 1 : xs[0];
  detail::require(xs.back() == in, "linear",
                  "input width " + std::to_string(xs.back()) + " vs weight " + to_string(ws));
  detail::require(b.numel() == outd, "linear", "bias length mismatch");

  Buffer<T> out(rows * outd);
  auto Y = detail::mat(out, rows, outd);
  Y.noalias() = detail::cmat(x.value(), rows, in) * detail::cmat(w.value(), outd, in).transpose();
  Y.rowwise() += detail::cvec(b.value()).transpose();

  Shape shape = xs.size() == 1 ? Shape{outd} : Shape{rows, outd};
  const auto xi = x.id(), wi = w.id(), bi = b.id();
  const bool gx = x.needs_grad(), gw = w.needs_grad(), gb = b.needs_grad();
  return x.tape().push(
      std::move(shape), std::move(out), gx || gw || gb,
      [=](Tape<T>& tp, std::uint32_t self) {
        auto G = detail::cmat(tp.grad(self), rows, outd);
        if (gx) detail::mat(tp.grad_mut(xi), rows, in).noalias() += G * detail::cmat(tp.value(wi), outd, in);
        if (gw) detail::mat(tp.grad_mut(wi), outd, in).noalias() += G.transpose() * detail::cmat(tp.value(xi), rows, in);
        if (gb) detail::vec(tp.grad_mut(bi)) += G.colwise().sum().transpose();
      });
}

/// y = A x for A {rows, cols}, x {cols}.
template <class T>
Var<T> matvec(Var<T> a, Var<T> x) {
  const auto& as = a.shape();
  detail::require(as.size() == 2 && x.shape().size() == 1 && x.numel() == as[1], "matvec",
                  "shapes " + to_string(as) + " and " + to_string(x.shape()));
  const std::size_t rows = as[0], cols = as[1];
  Buffer<T> out(rows);
  detail::vec(out).noalias() = detail::cmat(a.value(), rows, cols) * detail::cvec(x.value());
  const auto ai = a.id(), xi = x.id();
  const bool ga = a.needs_grad(), gx = x.needs_grad();
  return a.tape().push(Shape{rows}, std::move(out), ga || gx,
                       [=](Tape<T>& tp, std::uint32_t self) {
                         auto g = detail::cvec(tp.grad(self));
                         if (ga) detail::mat(tp.grad_mut(ai), rows, cols).noalias() += g * detail::cvec(tp.value(xi)).transpose();
                         if (gx) detail::vec(tp.grad_mut(xi)).noalias() += detail::cmat(tp.value(ai), rows, cols).transpose() * g;
                       });
}

/// y = A^T w for w {rows}, A {rows, cols}: attention-weighted sum of rows.
template <class T>
Var<T> vecmat(Var<T> w, Var<T> a) {
  const auto& as = a.shape();
  detail::require(as.size() == 2 && w.shape().size() == 1 && w.numel() == as[0], "vecmat",
                  "shapes " + to_string(w.shape()) + " and " + to_string(as));
  const std::size_t rows = as[0], cols = as[1];
  Buffer<T> out(cols);
  detail::vec(out).noalias() = detail::cmat(a.value(), rows, cols).transpose() * detail::cvec(w.value());
  const auto ai = a.id(), wi = w.id();
  const bool ga = a.needs_grad(), gw = w.needs_grad();
  return a.tape().push(Shape{cols}, std::move(out), ga || gw,
                       [=](Tape<T>& tp, std::uint32_t self) {
                         auto g = detail::cvec(tp.grad(self));
                         if (gw) detail::vec(tp.grad_mut(wi)).noalias() += detail::cmat(tp.value(ai), rows, cols) * g;
                         if (ga) detail::mat(tp.grad_mut(ai), rows, cols).noalias() += detail::cvec(tp.value(wi)) * g.transpose();
                       });
}

/// Concatenation of rank-1 tensors.
template <class T>
Var<T> concat(std::span<const Var<T>> parts) {
  detail::require(!parts.empty(), "concat", "no inputs");
  std::size_t total = 0;
  bool needs = false;
  for (auto p : parts) {
    detail::require(p.shape().size() == 1, "concat", "inputs must be rank-1");
    total += p.numel();
    needs = needs || p.needs_grad();
  }
  Buffer<T> out;
  out.reserve(total);
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> sizes;
  for (auto p : parts) {
    auto v = p.value();
    out.insert(out.end(), v.begin(), v.end());
    ids.push_back(p.id());
    sizes.push_back(v.size());
  }
  return parts[0].tape().push(Shape{total}, std::move(out), needs,
                              [ids, sizes](Tape<T>& tp, std::uint32_t self) {
                                auto g = tp.grad(self);
                                std::size_t off = 0;
                                for (std::size_t k = 0; k < ids.size(); ++k) {
                                  if (tp.needs_grad(ids[k])) {
                                    auto& d = tp.grad_mut(ids[k]);
                                    for (std::size_t i = 0; i < sizes[k]; ++i) d[i] += g[off + i];
                                  }
                                  off += sizes[k];
                                }
                              });
}

template <class T>
Var<T> concat(std::initializer_list<Var<T>> parts) {
  std::vector<Var<T>> v(parts);
  return concat(std::span<const Var<T>>(v));
}

/// Contiguous sub-range [offset, offset + length) of a rank-1 tensor.
template <class T>
Var<T> slice(Var<T> x, std::size_t offset, std::size_t length) {
  detail::require(x.shape().size() == 1 && offset + length <= x.numel() && length > 0, "slice",
                  "range out of bounds");
  auto xv = x.value();
  Buffer<T> out(xv.begin() + offset, xv.begin() + offset + length);
  const auto xi = x.id();
  return x.tape().push(Shape{length}, std::move(out), x.needs_grad(),
                       [xi, offset](Tape<T>& tp, std::uint32_t self) {
                         auto g = tp.grad(self);
                         auto& d = tp.grad_mut(xi);
                         for (std::size_t i = 0; i < g.size(); ++i) d[offset + i] += g[i];
                       });
}

/// Single element as a scalar of shape {1}.
template <class T>
Var<T> element(Var<T> x, std::size_t i) {
  detail::require(i < x.numel(), "element", "index out of range");
  const auto xi = x.id();
  return x.tape().push(Shape{1}, Buffer<T>{x.value()[i]}, x.needs_grad(),
                       [xi, i](Tape<T>& tp, std::uint32_t self) { tp.grad_mut(xi)[i] += tp.grad(self)[0]; });
}

/// Row i of a rank-2 tensor.
template <class T>
Var<T> row(Var<T> a, std::size_t i) {
  const auto& as = a.shape();
  detail::require(as.size() == 2 && i < as[0], "row", "index out of range");
  const std::size_t cols = as[1];
  auto av = a.value();
  Buffer<T> out(av.begin() + i * cols, av.begin() + (i + 1) * cols);
  const auto ai = a.id();
  return a.tape().push(Shape{cols}, std::move(out), a.needs_grad(),
                       [ai, i, cols](Tape<T>& tp, std::uint32_t self) {
                         auto g = tp.grad(self);
                         auto& d = tp.grad_mut(ai);
                         for (std::size_t j = 0; j < cols; ++j) d[i * cols + j] += g[j];
                       });
}

/// Stacks equal-length rank-1 tensors into a {count, length} matrix.
template <class T>
Var<T> stack_rows(std::span<const Var<T>> rows) {
  detail::require(!rows.empty(), "stack_rows", "no inputs");
  const std::size_t cols = rows[0].numel();
  bool needs = false;
  Buffer<T> out;
  out.reserve(rows.size() * cols);
  std::vector<std::uint32_t> ids;
  for (auto r : rows) {
    detail::require(r.shape().size() == 1 && r.numel() == cols, "stack_rows", "ragged rows");
    auto v = r.value();
    out.insert(out.end(), v.begin(), v.end());
    ids.push_back(r.id());
    needs = needs || r.needs_grad();
  }
  return rows[0].tape().push(Shape{rows.size(), cols}, std::move(out), needs,
                             [ids, cols](Tape<T>& tp, std::uint32_t self) {
                               auto g = tp.grad(self);
                               for (std::size_t k = 0; k < ids.size(); ++k) {
                                 if (!tp.needs_grad(ids[k])) continue;
                                 auto& d = tp.grad_mut(ids[k]);
                                 for (std::size_t j = 0; j < cols; ++j) d[j] += g[k * cols + j];
                               }
                             });
}

template <class T>
Var<T> sum(Var<T> x) {
  auto xv = x.value();
  T s = 0;
  for (auto v : xv) s += v;
  const auto xi = x.id();
  return x.tape().push(Shape{1}, Buffer<T>{s}, x.needs_grad(),
                       [xi](Tape<T>& tp, std::uint32_t self) {
                         const T g = tp.grad(self)[0];
                         for (auto& d : tp.grad_mut(xi)) d += g;
                       });
}

/// Sum of squared entries, returned as shape {1}.
template <class T>
Var<T> sum_squares(Var<T> x) {
  auto xv = x.value();
  T s = 0;
  for (auto v : xv) s += v * v;
  const auto xi = x.id();
  return x.tape().push(Shape{1}, Buffer<T>{s}, x.needs_grad(),
                       [xi](Tape<T>& tp, std::uint32_t self) {
                         const T g = tp.grad(self)[0];
                         auto xv = tp.value(xi);
                         auto& d = tp.grad_mut(xi);
                         for (std::size_t i = 0; i < xv.size(); ++i) d[i] += T(2) * xv[i] * g;
                       });
}

/// Sum of scalar variables.
template <class T>
Var<T> add_scalars(std::span<const Var<T>> xs) {
  detail::require(!xs.empty(), "add_scalars", "no inputs");
  T s = 0;
  bool needs = false;
  std::vector<std::uint32_t> ids;
  for (auto x : xs) {
    detail::require_scalar(x, "add_scalars");
    s += x.item();
    needs = needs || x.needs_grad();
    ids.push_back(x.id());
  }
  return xs[0].tape().push(Shape{1}, Buffer<T>{s}, needs, [ids](Tape<T>& tp, std::uint32_t self) {
    const T g = tp.grad(self)[0];
    for (auto id : ids)
      if (tp.needs_grad(id)) tp.grad_mut(id)[0] += g;
  });
}

/// Circular shift to the right: y[(i + 1) mod N] = x[i].
template <class T>
Var<T> shift_right(Var<T> x) {
  detail::require(x.shape().size() == 1, "shift_right", "expected rank-1 input");
  auto xv = x.value();
  const std::size_t n = xv.size();
  Buffer<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[(i + 1) % n] = xv[i];
  const auto xi = x.id();
  return x.tape().push(x.shape(), std::move(out), x.needs_grad(),
                       [xi, n](Tape<T>& tp, std::uint32_t self) {
                         auto g = tp.grad(self);
                         auto& d = tp.grad_mut(xi);
                         for (std::size_t i = 0; i < n; ++i) d[i] += g[(i + 1) % n];
                       });
}

/// Row-wise convex blend: out[i] = (1 - w[i]) * m[i] + w[i] * v.
/// Equals M ⊙ (J - w ⊗ 1) + w ⊗ v for M {N, d}, w {N}, v {d}.
template <class T>
Var<T> blend_rows(Var<T> m, Var<T> w, Var<T> v) {
  const auto& ms = m.shape();
  detail::require(ms.size() == 2, "blend_rows", "memory must be rank-2");
  detail::require(w.shape().size() == 1 && w.numel() == ms[0], "blend_rows",
                  "weighting length " + to_string(w.shape()) + " vs memory " + to_string(ms));
  detail::require(v.shape().size() == 1 && v.numel() == ms[1], "blend_rows",
                  "content width " + to_string(v.shape()) + " vs memory " + to_string(ms));
  const std::size_t rows = ms[0], cols = ms[1];
  auto mv = m.value(), wv = w.value(), vv = v.value();
  Buffer<T> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    const T keep = T(1) - wv[i];
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = keep * mv[i * cols + j] + wv[i] * vv[j];
  }
  const auto mi = m.id(), wi = w.id(), vi = v.id();
  const bool gm = m.needs_grad(), gw = w.needs_grad(), gv = v.needs_grad();
  return m.tape().push(ms, std::move(out), gm || gw || gv, [=](Tape<T>& tp, std::uint32_t self) {
    auto g = tp.grad(self);
    auto mv = tp.value(mi), wv = tp.value(wi), vv = tp.value(vi);
    if (gm) {
      auto& d = tp.grad_mut(mi);
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) d[i * cols + j] += (T(1) - wv[i]) * g[i * cols + j];
    }
    if (gw) {
      auto& d = tp.grad_mut(wi);
      for (std::size_t i = 0; i < rows; ++i) {
        T acc = 0;
        for (std::size_t j = 0; j < cols; ++j) acc += g[i * cols + j] * (vv[j] - mv[i * cols + j]);
        d[i] += acc;
      }
    }
    if (gv) {
      auto& d = tp.grad_mut(vi);
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) d[j] += wv[i] * g[i * cols + j];
    }
  });
}

/// Row lookup: out[k] = table[ids[k]].
template <class T>
Var<T> gather_rows(Var<T> table, std::span<const std::size_t> ids) {
  const auto& ts = table.shape();
  detail::require(ts.size() == 2 && !ids.empty(), "gather_rows", "bad arguments");
  const std::size_t cols = ts[1];
  auto tv = table.value();
  Buffer<T> out(ids.size() * cols);
  for (std::size_t k = 0; k < ids.size(); ++k) {
    detail::require(ids[k] < ts[0], "gather_rows", "row index out of range");
    std::copy_n(tv.begin() + ids[k] * cols, cols, out.begin() + k * cols);
  }
  const auto ti = table.id();
  std::vector<std::size_t> idv(ids.begin(), ids.end());
  return table.tape().push(Shape{ids.size(), cols}, std::move(out), table.needs_grad(),
                           [ti, idv, cols](Tape<T>& tp, std::uint32_t self) {
                             auto g = tp.grad(self);
                             auto& d = tp.grad_mut(ti);
                             for (std::size_t k = 0; k < idv.size(); ++k)
                               for (std::size_t j = 0; j < cols; ++j) d[idv[k] * cols + j] += g[k * cols + j];
                           });
}

/// 3x3 convolution with zero ("same") padding.
/// x is {height*width, in_ch} in row-major HWC order; kernel is {out_ch, 3, 3, in_ch};
/// result is {height*width, out_ch}.
template <class T>
Var<T> conv3x3(Var<T> x, std::size_t height, std::size_t width, Var<T> kernel, Var<T> bias) {
  const auto& xs = x.shape();
  const auto& ks = kernel.shape();
  detail::require(height * width > 0, "conv3x3", "empty spatial grid");
  detail::require(xs.size() == 2 && xs[0] == height * width, "conv3x3",
                  "input " + to_string(xs) + " does not match grid " + std::to_string(height) + "x" +
                      std::to_string(width));
  detail::require(ks.size() == 4 && ks[1] == 3 && ks[2] == 3 && ks[3] == xs[1], "conv3x3",
                  "kernel " + to_string(ks) + " incompatible with input " + to_string(xs));
  const std::size_t cin = xs[1], cout = ks[0], pos = height * width, patch = 9 * cin;
  detail::require(bias.numel() == cout, "conv3x3", "bias length mismatch");

  auto cols = std::make_shared<Buffer<T>>(pos * patch, T(0));
  auto xv = x.value();
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      T* dst = cols->data() + (r * width + c) * patch;
      for (std::size_t ky = 0; ky < 3; ++ky) {
        const auto rr = static_cast<std::ptrdiff_t>(r + ky) - 1;
        if (rr < 0 || rr >= static_cast<std::ptrdiff_t>(height)) continue;
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const auto cc = static_cast<std::ptrdiff_t>(c + kx) - 1;
          if (cc < 0 || cc >= static_cast<std::ptrdiff_t>(width)) continue;
          std::copy_n(xv.begin() + (static_cast<std::size_t>(rr) * width + static_cast<std::size_t>(cc)) * cin, cin,
                      dst + (ky * 3 + kx) * cin);
        }
      }
    }
  }
  Buffer<T> out(pos * cout);
  auto Y = detail::mat(out, pos, cout);
  Y.noalias() = detail::cmat(std::span<const T>(*cols), pos, patch) *
                detail::cmat(kernel.value(), cout, patch).transpose();
  Y.rowwise() += detail::cvec(bias.value()).transpose();

  const auto xi = x.id(), ki = kernel.id(), bi = bias.id();
  const bool gx = x.needs_grad(), gk = kernel.needs_grad(), gb = bias.needs_grad();
  return x.tape().push(Shape{pos, cout}, std::move(out), gx || gk || gb, [=](Tape<T>& tp, std::uint32_t self) {
    auto G = detail::cmat(tp.grad(self), pos, cout);
    auto C = detail::cmat(std::span<const T>(*cols), pos, patch);
    if (gk) detail::mat(tp.grad_mut(ki), cout, patch).noalias() += G.transpose() * C;
    if (gb) detail::vec(tp.grad_mut(bi)) += G.colwise().sum().transpose();
    if (gx) {
      detail::RowMat<T> dcols = G * detail::cmat(tp.value(ki), cout, patch);
      auto& d = tp.grad_mut(xi);
      for (std::size_t r = 0; r < height; ++r) {
        for (std::size_t c = 0; c < width; ++c) {
          const T* src = dcols.data() + (r * width + c) * patch;
          for (std::size_t ky = 0; ky < 3; ++ky) {
            const auto rr = static_cast<std::ptrdiff_t>(r + ky) - 1;
            if (rr < 0 || rr >= static_cast<std::ptrdiff_t>(height)) continue;
            for (std::size_t kx = 0; kx < 3; ++kx) {
              const auto cc = static_cast<std::ptrdiff_t>(c + kx) - 1;
              if (cc < 0 || cc >= static_cast<std::ptrdiff_t>(width)) continue;
              T* dst = d.data() + (static_cast<std::size_t>(rr) * width + static_cast<std::size_t>(cc)) * cin;
              const T* s = src + (ky * 3 + kx) * cin;
              for (std::size_t i = 0; i < cin; ++i) dst[i] += s[i];
            }
          }
        }
      }
    }
  });
}

/// Softmax cross-entropy of rank-1 logits against a class index, shape {1}.
template <class T>
Var<T> cross_entropy(Var<T> logits, std::size_t label) {
  detail::require(logits.shape().size() == 1 && label < logits.numel(), "cross_entropy",
                  "label out of range");
  auto z = logits.value();
  T mx = z[0];
  for (auto v : z) mx = std::max(mx, v);
  T total = 0;
  for (auto v : z) total += std::exp(v - mx);
  const T lse = mx + std::log(total);
  const auto zi = logits.id();
  return logits.tape().push(Shape{1}, Buffer<T>{lse - z[label]}, logits.needs_grad(),
                            [zi, label, lse](Tape<T>& tp, std::uint32_t self) {
                              const T g = tp.grad(self)[0];
                              auto z = tp.value(zi);
                              auto& d = tp.grad_mut(zi);
                              for (std::size_t i = 0; i < z.size(); ++i) {
                                d[i] += g * (std::exp(z[i] - lse) - (i == label ? T(1) : T(0)));
                              }
                            });
}

/// Dot-product attention of a query against L keys.
template <class T>
struct Attention {
  Var<T> weights;  // {L}, a distribution
  Var<T> summary;  // {d}, weights^T values
};

template <class T>
Attention<T> dot_attention(Var<T> query, Var<T> keys, Var<T> values, T scale_factor) {
  const auto& ks = keys.shape();
  const auto& vs = values.shape();
  detail::require(ks.size() == 2 && vs.size() == 2 && ks[0] == vs[0], "dot_attention",
                  "keys " + to_string(ks) + " and values " + to_string(vs) + " row counts differ");
  detail::require(query.shape().size() == 1 && query.numel() == ks[1], "dot_attention",
                  "query " + to_string(query.shape()) + " vs keys " + to_string(ks));
  detail::require(scale_factor > 0, "dot_attention", "scale must be positive");
  auto w = softmax(scale(matvec(keys, query), scale_factor));
  return {w, vecmat(w, values)};
}

template <class T>
Attention<T> dot_attention(Var<T> query, Var<T> keys, Var<T> values) {
  return dot_attention(query, keys, values, T(1) / std::sqrt(static_cast<T>(query.numel())));
}

}  // namespace samnet::nd
