#pragma once

#include <functional>
#include <string>
#include <vector>

#include "samnet/core/gradcheck.hpp"
#include "samnet/core/ops.hpp"
#include "samnet/model/samnet_model.hpp"

namespace samnet::harness {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0;
  double threshold = 0;
  std::string worst_param;
  bool passed() const { return max_rel_err < threshold; }
};

namespace detail {

template <class T>
Tensor<T> random_tensor(nd::Shape shape, Rng& rng, double scale = 1.0) {
  Tensor<T> t(std::move(shape));
  for (auto& x : t.data) x = static_cast<T>(rng.uniform(-scale, scale));
  return t;
}

/// Fixed random linear readout, turning any output into a scalar.
template <class T>
Var<T> readout(Var<T> out, Rng& rng) {
  auto r = random_tensor<T>(out.shape(), rng);
  return nd::sum(out * out.tape().constant(std::move(r)));
}

template <class T>
struct CheckContext {
  static constexpr double eps = sizeof(T) >= 8 ? 1e-6 : 1e-3;
  static constexpr double threshold = sizeof(T) >= 8 ? 1e-5 : 1e-3;
};

template <class T, class F>
GradCheckEntry run_check(const std::string& name, ParamStore<T>& store, F&& f) {
  auto r = nd::grad_check(std::forward<F>(f), store, static_cast<T>(CheckContext<T>::eps));
  return {name, static_cast<double>(r.max_rel_err), CheckContext<T>::threshold, r.worst_param};
}

}  // namespace detail

/// Central-difference checks over every sub-unit, the encoders, two cell steps
/// and a full two-frame episode at toy sizes (d=8, N=3, L=4, L_v=9).
template <class T>
std::vector<GradCheckEntry> gradcheck_suite(std::uint64_t seed = 7) {
  using detail::random_tensor;
  using detail::readout;
  using detail::run_check;
  std::vector<GradCheckEntry> out;
  constexpr std::size_t d = 8, N = 3, L = 4, H = 3, W = 3;

  {
    ParamStore<T> s;
    Rng rng(seed);
    s.add("logits", random_tensor<T>({3}, rng));
    out.push_back(run_check<T>("softmax_cross_entropy", s, [&](Tape<T>& tape, const ParamStore<T>& p) {
      return nd::cross_entropy(tape.param(p[0]), 0);
    }));
  }
  {
    ParamStore<T> s;
    Rng rng(seed + 1);
    s.add("query", random_tensor<T>({4}, rng));
    s.add("keys", random_tensor<T>({3, 4}, rng));
    s.add("values", random_tensor<T>({3, 4}, rng));
    out.push_back(run_check<T>("dot_attention", s, [&](Tape<T>& tape, const ParamStore<T>& p) {
      Rng r(11);
      auto att = nd::dot_attention(tape.param(p[0]), tape.param(p[1]), tape.param(p[2]));
      return readout(att.summary, r) + readout(att.weights, r);
    }));
  }
  {
    ParamStore<T> s;
    Rng rng(seed + 2);
    EncoderConfig ec{d, 6, EmbeddingMode::learned, 5, 4};
    QuestionEncoder<T> enc(s, ec, rng);
    TokenSequence toks{{1, 4, 2, 5}, 6};
    out.push_back(run_check<T>("encode_question", s, [&](Tape<T>& tape, const ParamStore<T>& p) {
      Rng r(12);
      auto e = enc.encode(tape, p, toks);
      return readout(e.cw, r) + readout(e.q, r);
    }));
  }
  {
    ParamStore<T> s;
    Rng rng(seed + 3);
    EncoderConfig ec{d, 6, EmbeddingMode::learned, 5, 4};
    FrameEncoder<T> enc(s, ec, rng);
    auto pixels = random_tensor<T>({H * W, 5}, rng);
    out.push_back(run_check<T>("encode_frame", s, [&](Tape<T>& tape, const ParamStore<T>& p) {
      Rng r(13);
      return readout(enc.encode(tape, p, pixels, H, W).F, r);
    }));
  }

  // Cell sub-units share one cell; inputs are registered as parameters too.
  auto make_cell = [&](ParamStore<T>& s, std::size_t width, Rng& rng) {
    return SamCell<T>(s, CellConfig{width, 2, GateMode::softmax, true, false}, rng);
  };
  {
    ParamStore<T> s;
    Rng rng(seed + 4);
    auto cell = make_cell(s, d, rng);
    auto q = s.add("input/q", random_tensor<T>({d}, rng));
    auto cw = s.add("input/cw", random_tensor<T>({L, d}, rng));
    auto c0 = s.add("input/c_prev", random_tensor<T>({d}, rng));
    out.push_back(run_check<T>("controller_step", s, [&](Tape<T>& tape, const ParamStore<T>& p) {
      Rng r(14);
      auto [c, qa] = cell.controller_step(tape, p, tape.param(p[q]), tape.param(p[cw]), tape.param(p[c0]), 2);
      return readout(c, r) + readout(qa, r);
    }));
  }
  {
    ParamStore<T> s;
    Rng rng(seed + 5);
    auto cell = make_cell(s, d, rng);
    auto c = s.add("input/c", random_tensor<T>({d}, rng));
    out.push_back(run_check<T>("temporal_classify", s, [&](Tape<T>& tape, const ParamStore<T>& p) {
      Rng r(15);
      return readout(cell.temporal_classify(tape, p, tape.param(p[c])).tau, r);
    }));
  }
  {
    ParamStore<T> s;
    Rng rng(seed + 6);
    auto cell = make_cell(s, d, rng);
    auto F = s.add("input/F", random_tensor<T>({H * W, d}, rng));
    auto c = s.add("input/c", random_tensor<T>({d}, rng));
    out.push_back(run_check<T>("visual_retrieve", s, [&](Tape<T>& tape, const ParamStore<T>& p) {
      Rng r(16);
      FeatureMap<T> fm{tape.param(p[F]), H, W};
      auto [vo, va] = cell.visual_retrieve(tape, p, cell.project_frame(tape, p, fm), tape.param(p[c]));
      return readout(vo, r) + readout(va, r);
    }));
  }
  {
    ParamStore<T> s;
    Rng rng(seed + 7);
    auto cell = make_cell(s, d, rng);
    auto M = s.add("input/M", random_tensor<T>({N, d}, rng));
    auto c = s.add("input/c", random_tensor<T>({d}, rng));
    out.push_back(run_check<T>("memory_retrieve", s, [&](Tape<T>& tape, const ParamStore<T>& p) {
      Rng r(17);
      auto [mo, rh] = cell.memory_retrieve(tape, p, tape.param(p[M]), tape.param(p[c]));
      return readout(mo, r) + readout(rh, r);
    }));
  }
  {
    ParamStore<T> s;
    Rng rng(seed + 8);
    auto cell = make_cell(s, 16, rng);
    auto vs = s.add("input/vs", random_tensor<T>({1}, rng));
    auto rs = s.add("input/rs", random_tensor<T>({1}, rng));
    auto tau = s.add("input/tau", random_tensor<T>({4}, rng));
    out.push_back(run_check<T>("reasoning_gates", s, [&](Tape<T>& tape, const ParamStore<T>& p) {
      Rng r(18);
      auto g = cell.reasoning_gates(tape, p, tape.param(p[vs]), tape.param(p[rs]), TemporalClass<T>{tape.param(p[tau])});
      return readout(nd::concat({g.g_v, g.g_m, g.h_r, g.h_a, g.h_none}), r);
    }));
  }
  {
    ParamStore<T> s;
    Rng rng(seed + 9);
    auto M = s.add("input/M", random_tensor<T>({N, d}, rng));
    auto wh = s.add("input/wh", random_tensor<T>({N}, rng));
    auto rh = s.add("input/rh", random_tensor<T>({N}, rng));
    auto vo = s.add("input/vo", random_tensor<T>({d}, rng));
    auto hr = s.add("input/h_r", random_tensor<T>({1}, rng));
    auto ha = s.add("input/h_a", random_tensor<T>({1}, rng));
    out.push_back(run_check<T>("memory_update", s, [&](Tape<T>& tape, const ParamStore<T>& p) {
      Rng r(19);
      auto [Mt, w] = memory_update(tape.param(p[M]), tape.param(p[wh]), tape.param(p[rh]), tape.param(p[vo]),
                                   tape.param(p[hr]), tape.param(p[ha]));
      return readout(Mt, r) + readout(w, r);
    }));
    out.push_back(run_check<T>("write_head_update", s, [&](Tape<T>& tape, const ParamStore<T>& p) {
      Rng r(20);
      return readout(write_head_update(tape.param(p[wh]), tape.param(p[ha])), r);
    }));
  }
  {
    ParamStore<T> s;
    Rng rng(seed + 10);
    auto cell = make_cell(s, d, rng);
    auto vo = s.add("input/vo", random_tensor<T>({d}, rng));
    auto mo = s.add("input/mo", random_tensor<T>({d}, rng));
    auto gv = s.add("input/g_v", random_tensor<T>({1}, rng));
    auto gm = s.add("input/g_m", random_tensor<T>({1}, rng));
    auto so = s.add("input/so_prev", random_tensor<T>({d}, rng));
    out.push_back(run_check<T>("summary_update", s, [&](Tape<T>& tape, const ParamStore<T>& p) {
      Rng r(21);
      return readout(cell.summary_update(tape, p, tape.param(p[vo]), tape.param(p[mo]), tape.param(p[gv]),
                                         tape.param(p[gm]), tape.param(p[so])),
                     r);
    }));
  }
  {
    ParamStore<T> s;
    Rng rng(seed + 11);
    auto cell = make_cell(s, d, rng);
    auto q = s.add("input/q", random_tensor<T>({d}, rng));
    auto cw = s.add("input/cw", random_tensor<T>({L, d}, rng));
    auto F = s.add("input/F", random_tensor<T>({H * W, d}, rng));
    auto M = s.add("input/M", random_tensor<T>({N, d}, rng));
    Tensor<T> wh0({N});
    wh0[0] = T(1);
    out.push_back(run_check<T>("cell_step", s, [&](Tape<T>& tape, const ParamStore<T>& p) {
      Rng r(22);
      FeatureMap<T> fm{tape.param(p[F]), H, W};
      auto frame = cell.project_frame(tape, p, fm);
      MemoryState<T> mem{tape.param(p[M]), tape.constant(wh0)};
      auto state = cell.initial_state(tape, p);
      for (std::size_t t = 1; t <= 2; ++t)
        std::tie(state, mem) = cell.cell_step(tape, p, tape.param(p[q]), tape.param(p[cw]), frame, state, mem, t);
      return readout(state.so, r) + readout(mem.M, r);
    }));
  }
  {
    ModelConfig mc;
    mc.d = d;
    mc.steps = 2;
    mc.mem_slots = N;
    mc.vocab_size = 6;
    mc.num_answers = 5;
    mc.in_channels = 5;
    mc.conv_hidden = 4;
    mc.init_seed = seed + 12;
    SamNet<T> net(mc);
    Rng rng(seed + 13);
    EpisodeInput<T> ep;
    ep.tokens = {{1, 4, 2, 5}, 6};
    ep.height = H;
    ep.width = W;
    for (int k = 0; k < 2; ++k) ep.frames.push_back(random_tensor<T>({H * W, 5}, rng));
    ep.labels = {1, 3};
    out.push_back(run_check<T>("episode", net.params(), [&](Tape<T>& tape, const ParamStore<T>&) {
      return net.episode_loss(tape, ep, N);
    }));
  }
  return out;
}

}  // namespace samnet::harness
