#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "samnet/model/samcell.hpp"

using namespace samnet;

namespace {

template <class T>
Tensor<T> rand_tensor(nd::Shape s, Rng& rng, double lo = -1, double hi = 1) {
  Tensor<T> t(std::move(s));
  for (auto& x : t.data) x = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

Tensor<double> rand_distribution(std::size_t n, Rng& rng) {
  Tensor<double> t({n});
  double total = 0;
  for (auto& x : t.data) total += (x = rng.uniform(0.01, 1));
  for (auto& x : t.data) x /= total;
  return t;
}

double total(const Var<double>& v) {
  auto s = v.value();
  return std::accumulate(s.begin(), s.end(), 0.0);
}

struct CellFixture {
  std::size_t d = 8, N = 3, L = 4, H = 3, W = 3;
  ParamStore<double> store;
  Rng rng;
  SamCell<double> cell;
  explicit CellFixture(std::uint64_t seed, CellConfig cfg = {8, 2, GateMode::softmax, true, false})
      : rng(seed), cell(store, cfg, rng) {}
};

}  // namespace

TEST(MemoryUpdate, WorkedExample) {
  Tape<double> tape;
  auto M = tape.constant(Tensor<double>::matrix(2, 2, {1, 2, 3, 4}));
  auto wh = tape.constant(Tensor<double>::vector({1, 0}));
  auto rh = tape.constant(Tensor<double>::vector({0, 1}));
  auto vo = tape.constant(Tensor<double>::vector({5, 6}));
  auto hr = tape.constant(Tensor<double>::vector({0.5}));
  auto ha = tape.constant(Tensor<double>::vector({0.25}));
  auto [Mt, w] = memory_update(M, wh, rh, vo, hr, ha);
  EXPECT_DOUBLE_EQ(w[0], 0.25);
  EXPECT_DOUBLE_EQ(w[1], 0.5);
  EXPECT_DOUBLE_EQ(Mt[0], 2);
  EXPECT_DOUBLE_EQ(Mt[1], 3);
  EXPECT_DOUBLE_EQ(Mt[2], 4);
  EXPECT_DOUBLE_EQ(Mt[3], 5);
  auto wh_t = write_head_update(wh, ha);
  EXPECT_DOUBLE_EQ(wh_t[0], 0.75);
  EXPECT_DOUBLE_EQ(wh_t[1], 0.25);
}

TEST(MemoryUpdate, FullAppendFillsSlotAndAdvances) {
  Tape<double> tape;
  auto M = tape.constant(Tensor<double>({3, 2}));
  auto wh = tape.constant(Tensor<double>::vector({0, 1, 0}));
  auto rh = tape.constant(Tensor<double>::vector({1.0 / 3, 1.0 / 3, 1.0 / 3}));
  auto vo = tape.constant(Tensor<double>::vector({7, -7}));
  auto zero = tape.constant(Tensor<double>::vector({0}));
  auto one = tape.constant(Tensor<double>::vector({1}));
  auto [Mt, w] = memory_update(M, wh, rh, vo, zero, one);
  EXPECT_EQ(std::vector<double>(Mt.value().begin(), Mt.value().end()), (std::vector<double>{0, 0, 7, -7, 0, 0}));
  auto wh_t = write_head_update(wh, one);
  EXPECT_EQ(std::vector<double>(wh_t.value().begin(), wh_t.value().end()), (std::vector<double>{0, 0, 1}));
  // wraps around from the last slot
  auto wrap = write_head_update(tape.constant(Tensor<double>::vector({0, 0, 1})), one);
  EXPECT_DOUBLE_EQ(wrap[0], 1);
}

TEST(MemoryUpdate, NoWriteKeepsMemory) {
  Rng rng(1);
  Tape<double> tape;
  auto Mv = rand_tensor<double>({4, 3}, rng);
  auto M = tape.constant(Mv);
  auto zero = tape.constant(Tensor<double>::vector({0}));
  auto [Mt, w] = memory_update(M, tape.constant(rand_distribution(4, rng)), tape.constant(rand_distribution(4, rng)),
                               tape.constant(rand_tensor<double>({3}, rng)), zero, zero);
  EXPECT_EQ(std::vector<double>(Mt.value().begin(), Mt.value().end()), std::vector<double>(Mv.data.begin(), Mv.data.end()));
  EXPECT_DOUBLE_EQ(total(w), 0);
}

TEST(MemoryUpdate, RejectsMismatchedShapes) {
  Tape<double> tape;
  auto M = tape.constant(Tensor<double>({3, 2}));
  auto h = tape.constant(Tensor<double>::vector({0.5}));
  EXPECT_THROW(memory_update(M, tape.constant(Tensor<double>({3})), tape.constant(Tensor<double>({2})),
                             tape.constant(Tensor<double>({2})), h, h),
               ShapeError);
}

TEST(MemoryUpdate, LawsHoldOnRandomInputs) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const std::size_t N = 2 + rng.index(6), d = 1 + rng.index(5);
    Tape<double> tape;
    auto Mv = rand_tensor<double>({N, d}, rng);
    auto vov = rand_tensor<double>({d}, rng);
    const double a = rng.uniform(), b = rng.uniform() * (1 - a);
    auto whv = rand_distribution(N, rng);
    auto [Mt, w] = memory_update(tape.constant(Mv), tape.constant(whv), tape.constant(rand_distribution(N, rng)),
                                 tape.constant(vov), tape.constant(Tensor<double>::vector({a})),
                                 tape.constant(Tensor<double>::vector({b})));
    EXPECT_NEAR(total(w), a + b, 1e-12);
    for (std::size_t i = 0; i < N; ++i) {
      EXPECT_GE(w[i], 0);
      EXPECT_LE(w[i], 1);
      for (std::size_t j = 0; j < d; ++j) {
        const double lo = std::min(Mv.at(i, j), vov[j]), hi = std::max(Mv.at(i, j), vov[j]);
        EXPECT_GE(Mt[i * d + j], lo - 1e-12);
        EXPECT_LE(Mt[i * d + j], hi + 1e-12);
      }
    }
    auto wh_t = write_head_update(tape.constant(whv), tape.constant(Tensor<double>::vector({b})));
    EXPECT_NEAR(total(wh_t), 1.0, 1e-12);
  }
}

TEST(AttentionAggregate, Bounds) {
  Tape<double> tape;
  for (std::size_t L : {1u, 2u, 5u, 64u}) {
    auto uniform = attention_aggregate(tape.constant(Tensor<double>({L}, 1.0 / static_cast<double>(L))));
    EXPECT_NEAR(uniform.item(), 1.0 / static_cast<double>(L), 1e-12);
    Tensor<double> hot({L});
    hot[L - 1] = 1;
    EXPECT_DOUBLE_EQ(attention_aggregate(tape.constant(hot)).item(), 1.0);
  }
}

TEST(DistributionCheck, EnabledInThisBuild) {
  Tape<double> tape;
  EXPECT_THROW(detail::check_distribution(tape.constant(Tensor<double>::vector({0.5, 0.6})), "x"), NumericError);
  EXPECT_THROW(detail::check_distribution(tape.constant(Tensor<double>::vector({1.5, -0.5})), "x"), NumericError);
  EXPECT_NO_THROW(detail::check_distribution(tape.constant(Tensor<double>::vector({0.25, 0.75})), "x"));
  // float tolerance is looser than double
  Tape<float> tf;
  EXPECT_NO_THROW(detail::check_distribution(tf.constant(Tensor<float>::vector({0.5f, 0.500004f})), "x"));
  EXPECT_THROW(detail::check_distribution(tape.constant(Tensor<double>::vector({0.5, 0.500004})), "x"),
               NumericError);
}

TEST(SamCell, ControllerStepRange) {
  CellFixture f(1);
  Tape<double> tape;
  auto q = tape.constant(rand_tensor<double>({8}, f.rng));
  auto cw = tape.constant(rand_tensor<double>({4, 8}, f.rng));
  EXPECT_THROW(f.cell.controller_step(tape, f.store, q, cw, q, 0), InputError);
  EXPECT_THROW(f.cell.controller_step(tape, f.store, q, cw, q, 3), InputError);
  auto [c, qa] = f.cell.controller_step(tape, f.store, q, cw, q, 2);
  EXPECT_NEAR(total(qa), 1.0, 1e-12);
  EXPECT_EQ(c.numel(), 8u);
}

TEST(SamCell, StepInvariantsOnRandomInputs) {
  for (GateMode mode : {GateMode::softmax, GateMode::sigmoid}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      CellFixture f(seed, CellConfig{8, 2, mode, true, false});
      Tape<double> tape;
      auto q = tape.constant(rand_tensor<double>({8}, f.rng));
      auto cw = tape.constant(rand_tensor<double>({4, 8}, f.rng));
      FeatureMap<double> fm{tape.constant(rand_tensor<double>({9, 8}, f.rng)), 3, 3};
      auto frame = f.cell.project_frame(tape, f.store, fm);
      Tensor<double> wh0({3});
      wh0[0] = 1;
      MemoryState<double> mem{tape.constant(rand_tensor<double>({3, 8}, f.rng)), tape.constant(wh0)};
      auto state = f.cell.initial_state(tape, f.store);
      for (std::size_t t = 1; t <= 2; ++t) {
        StepTrace<double> tr;
        std::tie(state, mem) = f.cell.cell_step(tape, f.store, q, cw, frame, state, mem, t, {}, &tr);
        for (auto* v : {&tr.qa, &tr.va, &tr.rh, &tr.wh, &tr.tau}) EXPECT_NEAR(total(*v), 1.0, 1e-9);
        for (auto* g : {&tr.gates.g_v, &tr.gates.g_m, &tr.gates.h_r, &tr.gates.h_a}) {
          EXPECT_GT(g->item(), 0.0);
          EXPECT_LT(g->item(), 1.0);
        }
        if (mode == GateMode::softmax) {
          EXPECT_NEAR(tr.gates.h_r.item() + tr.gates.h_a.item() + tr.gates.h_none.item(), 1.0, 1e-12);
          EXPECT_NEAR(total(tr.w), tr.gates.h_r.item() + tr.gates.h_a.item(), 1e-9);
        }
        const double vs = attention_aggregate(tr.va).item();
        EXPECT_GE(vs, 1.0 / 9 - 1e-12);
        EXPECT_LE(vs, 1.0 + 1e-12);
      }
    }
  }
}

TEST(SamCell, DisabledWritesFreezeMemory) {
  CellFixture f(3, CellConfig{8, 2, GateMode::softmax, false, false});
  Tape<double> tape;
  auto q = tape.constant(rand_tensor<double>({8}, f.rng));
  auto cw = tape.constant(rand_tensor<double>({4, 8}, f.rng));
  FeatureMap<double> fm{tape.constant(rand_tensor<double>({9, 8}, f.rng)), 3, 3};
  auto Mv = rand_tensor<double>({3, 8}, f.rng);
  Tensor<double> wh0({3});
  wh0[1] = 1;
  MemoryState<double> mem{tape.constant(Mv), tape.constant(wh0)};
  auto state = f.cell.initial_state(tape, f.store);
  for (std::size_t t = 1; t <= 2; ++t) std::tie(state, mem) = f.cell.cell_step(tape, f.store, q, cw, fm, state, mem, t);
  EXPECT_EQ(std::vector<double>(mem.M.value().begin(), mem.M.value().end()), std::vector<double>(Mv.data.begin(), Mv.data.end()));
  EXPECT_EQ(std::vector<double>(mem.wh.value().begin(), mem.wh.value().end()), std::vector<double>(wh0.data.begin(), wh0.data.end()));
}

TEST(SamCell, ImageModeIgnoresMemory) {
  CellFixture f(4, CellConfig{8, 2, GateMode::softmax, true, true});
  Tape<double> tape;
  auto q = tape.constant(rand_tensor<double>({8}, f.rng));
  auto cw = tape.constant(rand_tensor<double>({4, 8}, f.rng));
  FeatureMap<double> fm{tape.constant(rand_tensor<double>({9, 8}, f.rng)), 3, 3};
  auto frame = f.cell.project_frame(tape, f.store, fm);
  auto run = [&](const Tensor<double>& Mv) {
    Tensor<double> wh0({3});
    wh0[0] = 1;
    MemoryState<double> mem{tape.constant(Mv), tape.constant(wh0)};
    auto state = f.cell.initial_state(tape, f.store);
    StepTrace<double> tr;
    std::tie(state, mem) = f.cell.cell_step(tape, f.store, q, cw, frame, state, mem, 1, {}, &tr);
    EXPECT_EQ(tr.gates.g_m.item(), 0.0);
    return std::vector<double>(state.so.value().begin(), state.so.value().end());
  };
  EXPECT_EQ(run(rand_tensor<double>({3, 8}, f.rng)), run(rand_tensor<double>({3, 8}, f.rng)));
}

TEST(SamCell, GateOverrideIsApplied) {
  CellFixture f(5);
  Tape<double> tape;
  auto q = tape.constant(rand_tensor<double>({8}, f.rng));
  auto cw = tape.constant(rand_tensor<double>({4, 8}, f.rng));
  FeatureMap<double> fm{tape.constant(rand_tensor<double>({9, 8}, f.rng)), 3, 3};
  Tensor<double> wh0({3});
  wh0[0] = 1;
  MemoryState<double> mem{tape.constant(Tensor<double>({3, 8})), tape.constant(wh0)};
  auto state = f.cell.initial_state(tape, f.store);
  StepTrace<double> tr;
  GateOverride force;
  force.h_r = 0.0;
  force.h_a = 1.0;
  std::tie(state, mem) = f.cell.cell_step(tape, f.store, q, cw, fm, state, mem, 1, force, &tr);
  EXPECT_EQ(tr.gates.h_a.item(), 1.0);
  EXPECT_DOUBLE_EQ(mem.wh[1], 1.0);
  // slot 0 now holds the retrieved visual object in full
  EXPECT_DOUBLE_EQ(tr.w[0], 1.0);
}
