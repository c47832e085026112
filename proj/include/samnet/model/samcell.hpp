#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "samnet/core/errors.hpp"
#include "samnet/core/ops.hpp"
#include "samnet/core/params.hpp"
#include "samnet/model/encoders.hpp"

namespace samnet {

namespace detail {

template <class T>
constexpr double distribution_tolerance() {
  return sizeof(T) >= 8 ? 1e-6 : 1e-5;
}

// Runtime distribution check, compiled in for debug builds and when
// SAMNET_DEBUG_CHECKS is defined.
template <class T>
void check_distribution([[maybe_unused]] Var<T> v, [[maybe_unused]] const char* what) {
#if !defined(NDEBUG) || defined(SAMNET_DEBUG_CHECKS)
  double total = 0;
  for (auto x : v.value()) {
    if (!(x >= T(0))) throw NumericError(std::string(what) + " has a negative or NaN entry");
    total += static_cast<double>(x);
  }
  if (std::abs(total - 1.0) > distribution_tolerance<T>()) {
    throw NumericError(std::string(what) + " does not sum to one (" + std::to_string(total) + ")");
  }
#endif
}

}  // namespace detail

enum class GateMode {
  softmax,  // (h_r, h_a, h_none) from a 3-way softmax, so h_r + h_a <= 1
  sigmoid,  // independent sigmoids on h_r and h_a (ablation)
};

template <class T>
struct MemoryState {
  Var<T> M;   // {N, d}
  Var<T> wh;  // {N}
};

template <class T>
struct CellState {
  Var<T> c;   // control state {d}
  Var<T> so;  // summary object {d}
};

template <class T>
struct Gates {
  Var<T> g_v, g_m, h_r, h_a, h_none;  // each {1}
};

/// Distribution over {last, latest, now, none}.
template <class T>
struct TemporalClass {
  Var<T> tau;  // {4}
};

template <class T>
struct ProjectedFrame {
  Var<T> keys;    // {L_v, d}
  Var<T> values;  // {L_v, d}
};

/// Values forced onto gates, e.g. to disable memory writes.
struct GateOverride {
  std::optional<double> g_v, g_m, h_r, h_a;
};

/// Per-step attention vectors, kept for invariant checks and inspection.
template <class T>
struct StepTrace {
  Var<T> qa, va, rh, w, wh, tau;
  Gates<T> gates;
};

struct CellConfig {
  std::size_t d = 64;
  std::size_t steps = 4;
  GateMode gate_mode = GateMode::softmax;
  bool memory_writes = true;
  bool image_mode = false;  // single-image configuration: no memory, no temporal classifier
};

/// Shorthand accessor for parameter leaves.
template <class T>
Var<T> P(Tape<T>& tape, const ParamStore<T>& store, std::size_t idx) {
  return tape.param(store[idx]);
}

/// Sum of squared attention weights; lies in [1/L, 1] for a distribution.
template <class T>
Var<T> attention_aggregate(Var<T> a) {
  return nd::sum_squares(a);
}

/// w = h_r rh + h_a wh_prev;  M_t = M_prev ⊙ (J - w ⊗ 1) + w ⊗ vo.
template <class T>
std::pair<Var<T>, Var<T>> memory_update(Var<T> M_prev, Var<T> wh_prev, Var<T> rh, Var<T> vo, Var<T> h_r, Var<T> h_a) {
  if (rh.numel() != wh_prev.numel() || M_prev.shape().size() != 2 || M_prev.shape()[0] != rh.numel()) {
    throw ShapeError("memory_update: read head, write head and memory rows must have equal length");
  }
  auto w = nd::scale(rh, h_r) + nd::scale(wh_prev, h_a);
  return {nd::blend_rows(M_prev, w, vo), w};
}

/// wh_t = h_a * shift_right(wh_prev) + (1 - h_a) * wh_prev.
template <class T>
Var<T> write_head_update(Var<T> wh_prev, Var<T> h_a) {
  return nd::scale(nd::shift_right(wh_prev), h_a) + nd::scale(wh_prev, nd::one_minus(h_a));
}

template <class T>
class SamCell {
 public:
  SamCell(ParamStore<T>& store, const CellConfig& cfg, Rng& rng) : cfg_(cfg) {
    const std::size_t d = cfg.d;
    if (cfg.steps == 0) throw InputError("reasoning steps must be positive");
    for (std::size_t t = 0; t < cfg.steps; ++t) {
      const std::string p = "controller/step" + std::to_string(t + 1) + "/";
      step_w_.push_back(store.add(p + "w", {d, d}, d, rng));
      step_b_.push_back(store.add(p + "b", {d}, d, rng));
    }
    combine_w_ = store.add("controller/combine/w", {d, 2 * d}, 2 * d, rng);
    combine_b_ = store.add("controller/combine/b", {d}, 2 * d, rng);
    attn_u_ = store.add("controller/attend/u", {d}, d, rng);

    temporal_w1_ = store.add("temporal/l1/w", {d, d}, d, rng);
    temporal_b1_ = store.add("temporal/l1/b", {d}, d, rng);
    temporal_w2_ = store.add("temporal/l2/w", {4, d}, d, rng);
    temporal_b2_ = store.add("temporal/l2/b", {4}, d, rng);

    vq_w_ = store.add("visual/query/w", {d, d}, d, rng);
    vq_b_ = store.add("visual/query/b", {d}, d, rng);
    vk_w_ = store.add("visual/key/w", {d, d}, d, rng);
    vk_b_ = store.add("visual/key/b", {d}, d, rng);
    vv_w_ = store.add("visual/value/w", {d, d}, d, rng);
    vv_b_ = store.add("visual/value/b", {d}, d, rng);

    mq_w_ = store.add("memory/query/w", {d, d}, d, rng);
    mq_b_ = store.add("memory/query/b", {d}, d, rng);

    gate_w1_ = store.add("gates/l1/w", {d, 6}, 6, rng);
    gate_b1_ = store.add("gates/l1/b", {d}, 6, rng);
    gate_w2_ = store.add("gates/l2/w", {d, d}, d, rng);
    gate_b2_ = store.add("gates/l2/b", {d}, d, rng);
    gate_w3_ = store.add("gates/out/w", {5, d}, d, rng);
    gate_b3_ = store.add("gates/out/b", {5}, d, rng);

    summary_w_ = store.add("summary/w", {d, 2 * d}, 2 * d, rng);
    summary_b_ = store.add("summary/b", {d}, 2 * d, rng);

    init_c_ = store.add("init/control", {d}, d, rng);
    init_so_ = store.add("init/summary", {d}, d, rng);
  }

  const CellConfig& config() const { return cfg_; }

  /// Learned per-frame starting state (c0, so0).
  CellState<T> initial_state(Tape<T>& tape, const ParamStore<T>& store) const {
    return {P(tape, store, init_c_), P(tape, store, init_so_)};
  }

  /// Control state for step t (1-based): MAC-style attention over contextual words.
  std::pair<Var<T>, Var<T>> controller_step(Tape<T>& tape, const ParamStore<T>& store, Var<T> q, Var<T> cw,
                                            Var<T> c_prev, std::size_t t) const {
    if (t < 1 || t > cfg_.steps) throw InputError("controller_step: step index out of range");
    if (cw.shape().size() != 2 || cw.shape()[0] == 0) throw ShapeError("controller_step: no contextual words");
    auto q_t = nd::linear(q, P(tape, store, step_w_[t - 1]), P(tape, store, step_b_[t - 1]));
    auto cq = nd::linear(nd::concat({q_t, c_prev}), P(tape, store, combine_w_), P(tape, store, combine_b_));
    auto logits = nd::matvec(cw, cq * P(tape, store, attn_u_));
    auto qa = nd::softmax(logits);
    return {nd::vecmat(qa, cw), qa};
  }

  TemporalClass<T> temporal_classify(Tape<T>& tape, const ParamStore<T>& store, Var<T> c) const {
    auto hidden = nd::elu(nd::linear(c, P(tape, store, temporal_w1_), P(tape, store, temporal_b1_)));
    return {nd::softmax(nd::linear(hidden, P(tape, store, temporal_w2_), P(tape, store, temporal_b2_)))};
  }

  /// Key and value projections of the frame rows; independent of the step.
  ProjectedFrame<T> project_frame(Tape<T>& tape, const ParamStore<T>& store, const FeatureMap<T>& fm) const {
    return {nd::linear(fm.F, P(tape, store, vk_w_), P(tape, store, vk_b_)),
            nd::linear(fm.F, P(tape, store, vv_w_), P(tape, store, vv_b_))};
  }

  /// Returns (vo_t, va_t).
  std::pair<Var<T>, Var<T>> visual_retrieve(Tape<T>& tape, const ParamStore<T>& store, const ProjectedFrame<T>& frame,
                                            Var<T> c) const {
    auto query = nd::linear(c, P(tape, store, vq_w_), P(tape, store, vq_b_));
    auto att = nd::dot_attention(query, frame.keys, frame.values, scale());
    return {att.summary, att.weights};
  }

  /// Returns (mo_t, rh_t): content addressing of memory rows by the projected control state.
  std::pair<Var<T>, Var<T>> memory_retrieve(Tape<T>& tape, const ParamStore<T>& store, Var<T> M, Var<T> c) const {
    if (M.shape().size() != 2 || M.shape()[0] == 0) throw ShapeError("memory_retrieve: memory needs at least one slot");
    auto query = nd::linear(c, P(tape, store, mq_w_), P(tape, store, mq_b_));
    auto att = nd::dot_attention(query, M, M, scale());
    return {att.summary, att.weights};
  }

  Gates<T> reasoning_gates(Tape<T>& tape, const ParamStore<T>& store, Var<T> vs, Var<T> rs,
                           const TemporalClass<T>& tau) const {
    auto x = nd::concat({vs, rs, tau.tau});
    auto h1 = nd::elu(nd::linear(x, P(tape, store, gate_w1_), P(tape, store, gate_b1_)));
    auto h2 = nd::elu(nd::linear(h1, P(tape, store, gate_w2_), P(tape, store, gate_b2_)));
    auto out = nd::linear(h2, P(tape, store, gate_w3_), P(tape, store, gate_b3_));
    Gates<T> g;
    g.g_v = nd::sigmoid(nd::element(out, 0));
    g.g_m = nd::sigmoid(nd::element(out, 1));
    if (cfg_.gate_mode == GateMode::softmax) {
      auto h = nd::softmax(nd::slice(out, 2, 3));
      g.h_r = nd::element(h, 0);
      g.h_a = nd::element(h, 1);
      g.h_none = nd::element(h, 2);
    } else {
      g.h_r = nd::sigmoid(nd::element(out, 2));
      g.h_a = nd::sigmoid(nd::element(out, 3));
      g.h_none = nd::one_minus(g.h_r + g.h_a);
    }
    return g;
  }

  /// ro = g_v vo + g_m mo;  so_t = W [ro; so_prev] + b.
  Var<T> summary_update(Tape<T>& tape, const ParamStore<T>& store, Var<T> vo, Var<T> mo, Var<T> g_v, Var<T> g_m,
                        Var<T> so_prev) const {
    auto ro = nd::scale(vo, g_v) + nd::scale(mo, g_m);
    return nd::linear(nd::concat({ro, so_prev}), P(tape, store, summary_w_), P(tape, store, summary_b_));
  }

  /// One reasoning step: controller, temporal classifier, retrieval, gating,
  /// memory and write-head update, summary update.
  std::pair<CellState<T>, MemoryState<T>> cell_step(Tape<T>& tape, const ParamStore<T>& store, Var<T> q, Var<T> cw,
                                                    const ProjectedFrame<T>& frame, const CellState<T>& state,
                                                    const MemoryState<T>& mem, std::size_t t,
                                                    const GateOverride& force = {},
                                                    StepTrace<T>* trace = nullptr) const {
    auto [c, qa] = controller_step(tape, store, q, cw, state.c, t);
    const std::size_t d = cfg_.d;
    TemporalClass<T> tau = cfg_.image_mode ? TemporalClass<T>{tape.constant(Tensor<T>({4}))}
                                           : temporal_classify(tape, store, c);
    auto [vo, va] = visual_retrieve(tape, store, frame, c);
    Var<T> mo, rh;
    if (cfg_.image_mode) {
      mo = tape.constant(Tensor<T>({d}));
      rh = tape.constant(Tensor<T>({mem.wh.numel()}, T(1) / static_cast<T>(mem.wh.numel())));
    } else {
      std::tie(mo, rh) = memory_retrieve(tape, store, mem.M, c);
    }
    auto vs = attention_aggregate(va);
    auto rs = cfg_.image_mode ? tape.constant(Tensor<T>({1})) : attention_aggregate(rh);
    Gates<T> g = reasoning_gates(tape, store, vs, rs, tau);

    GateOverride eff = force;
    if (cfg_.image_mode) {
      eff.g_m = 0.0;
      eff.h_r = 0.0;
      eff.h_a = 0.0;
    } else if (!cfg_.memory_writes) {
      eff.h_r = 0.0;
      eff.h_a = 0.0;
    }
    auto fix = [&](Var<T>& gate, const std::optional<double>& v) {
      if (v) gate = tape.constant(Tensor<T>::vector({static_cast<T>(*v)}));
    };
    fix(g.g_v, eff.g_v);
    fix(g.g_m, eff.g_m);
    fix(g.h_r, eff.h_r);
    fix(g.h_a, eff.h_a);

    auto [M, w] = memory_update(mem.M, mem.wh, rh, vo, g.h_r, g.h_a);
    auto wh = write_head_update(mem.wh, g.h_a);
    auto so = summary_update(tape, store, vo, mo, g.g_v, g.g_m, state.so);

    detail::check_distribution(qa, "question attention");
    detail::check_distribution(va, "visual attention");
    detail::check_distribution(rh, "read head");
    detail::check_distribution(wh, "write head");

    if (trace) *trace = StepTrace<T>{qa, va, rh, w, wh, tau.tau, g};
    return {CellState<T>{c, so}, MemoryState<T>{M, wh}};
  }

  /// Same as above, projecting the feature map first.
  std::pair<CellState<T>, MemoryState<T>> cell_step(Tape<T>& tape, const ParamStore<T>& store, Var<T> q, Var<T> cw,
                                                    const FeatureMap<T>& fm, const CellState<T>& state,
                                                    const MemoryState<T>& mem, std::size_t t,
                                                    const GateOverride& force = {},
                                                    StepTrace<T>* trace = nullptr) const {
    return cell_step(tape, store, q, cw, project_frame(tape, store, fm), state, mem, t, force, trace);
  }

 private:
  T scale() const { return T(1) / std::sqrt(static_cast<T>(cfg_.d)); }

  CellConfig cfg_;
  std::vector<std::size_t> step_w_, step_b_;
  std::size_t combine_w_ = 0, combine_b_ = 0, attn_u_ = 0;
  std::size_t temporal_w1_ = 0, temporal_b1_ = 0, temporal_w2_ = 0, temporal_b2_ = 0;
  std::size_t vq_w_ = 0, vq_b_ = 0, vk_w_ = 0, vk_b_ = 0, vv_w_ = 0, vv_b_ = 0;
  std::size_t mq_w_ = 0, mq_b_ = 0;
  std::size_t gate_w1_ = 0, gate_b1_ = 0, gate_w2_ = 0, gate_b2_ = 0, gate_w3_ = 0, gate_b3_ = 0;
  std::size_t summary_w_ = 0, summary_b_ = 0;
  std::size_t init_c_ = 0, init_so_ = 0;
};

}  // namespace samnet
