// Acceptance suite: one PASS/FAIL line per criterion.

#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "brute_oracle.hpp"
#include "samnet/harness/gradcheck_suite.hpp"
#include "samnet/harness/trainer.hpp"
#include "samnet/transfer/transfer.hpp"

using namespace samnet;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs(SAMNET_CONFIG_DIR);

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

void report(int n, bool ok, const std::string& detail) {
  std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", n, detail.c_str());
  std::fflush(stdout);
  EXPECT_TRUE(ok) << "criterion " << n << ": " << detail;
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

Tensor<double> random_distribution(std::size_t n, Rng& rng) {
  Tensor<double> t({n});
  double total = 0;
  for (auto& x : t.data) total += (x = rng.uniform(0.0, 1.0));
  if (total == 0) t.data[0] = total = 1;
  if (rng.bernoulli(0.1)) {  // put some mass on a single slot
    std::fill(t.data.begin(), t.data.end(), 0.0);
    t.data[rng.index(n)] = total = 1;
  }
  for (auto& x : t.data) x /= total;
  return t;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("samnet_acceptance_" + name);
  fs::remove_all(p);
  return p;
}

harness::TrainConfig canonical() { return harness::load_config(kConfigs / "toy-canonical.cfg"); }

}  // namespace

TEST(Acceptance, Criterion1_MemoryLaws) {
  Stopwatch sw;
  constexpr std::size_t kInputs = 10000;
  std::array<std::size_t, 4> violations{};  // frozen, replace, mass, cycle
  auto scalar = [](Tape<double>& tape, double v) { return tape.constant(Tensor<double>::vector({v})); };
  auto max_diff = [](std::span<const double> a, std::span<const double> b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
  };
  for (std::size_t i = 0; i < kInputs; ++i) {
    Rng rng(derive_seed(101, i));
    const std::size_t N = 1 + rng.index(16), d = 1 + rng.index(8);
    Tensor<double> M({N, d}), vo({d});
    for (auto& x : M.data) x = rng.uniform(-3, 3);
    for (auto& x : vo.data) x = rng.uniform(-3, 3);
    auto wh = random_distribution(N, rng), rh = random_distribution(N, rng);
    Tape<double> tape;

    // (a) no gate mass leaves memory and write head unchanged
    {
      auto [Mt, w] = memory_update(tape.constant(M), tape.constant(wh), tape.constant(rh), tape.constant(vo),
                                   scalar(tape, 0), scalar(tape, 0));
      auto wh_t = write_head_update(tape.constant(wh), scalar(tape, 0));
      if (max_diff(Mt.value(), M.data) > 1e-6 || max_diff(wh_t.value(), wh.data) > 1e-6) ++violations[0];
    }
    // (b) a one-hot full-strength write replaces exactly that row with vo
    {
      const std::size_t slot = rng.index(N);
      Tensor<double> hot({N});
      hot[slot] = 1;
      const bool append = rng.bernoulli(0.5);
      auto [Mt, w] = memory_update(tape.constant(M), tape.constant(append ? hot : wh),
                                   tape.constant(append ? rh : hot), tape.constant(vo),
                                   scalar(tape, append ? 0 : 1), scalar(tape, append ? 1 : 0));
      const auto mv = Mt.value();
      double err = 0;
      for (std::size_t r = 0; r < N; ++r)
        for (std::size_t c = 0; c < d; ++c) err = std::max(err, std::abs(mv[r * d + c] - (r == slot ? vo[c] : M.at(r, c))));
      if (err > 1e-6) ++violations[1];
    }
    // (c) write weights carry exactly h_r + h_a of mass
    {
      const double h_r = rng.uniform(), h_a = rng.uniform() * (1 - h_r);
      auto [Mt, w] = memory_update(tape.constant(M), tape.constant(wh), tape.constant(rh), tape.constant(vo),
                                   scalar(tape, h_r), scalar(tape, h_a));
      const auto wv = w.value();
      if (std::abs(std::accumulate(wv.begin(), wv.end(), 0.0) - (h_r + h_a)) > 1e-6) ++violations[2];
    }
    // (d) N full appends bring the write head back to where it started
    {
      auto head = tape.constant(wh);
      for (std::size_t k = 0; k < N; ++k) head = write_head_update(head, scalar(tape, 1));
      if (max_diff(head.value(), wh.data) > 1e-5) ++violations[3];
    }
  }
  const double t = sw.seconds();
  const std::size_t total = violations[0] + violations[1] + violations[2] + violations[3];
  report(1, total == 0 && t < 10,
         std::to_string(kInputs) + " random inputs; violations: frozen " + std::to_string(violations[0]) +
             ", replace " + std::to_string(violations[1]) + ", mass " + std::to_string(violations[2]) + ", cycle " +
             std::to_string(violations[3]) + "; " + fixed(t, 2) + " s");
}

TEST(Acceptance, Criterion2_AggregateBounds) {
  Stopwatch sw;
  std::size_t violations = 0, total = 0;
  for (std::size_t L : {2u, 4u, 16u, 64u}) {
    const double lo = 1.0 / static_cast<double>(L);
    for (std::size_t i = 0; i < 10000; ++i) {
      Rng rng(derive_seed(L, i));
      Tape<double> tape;
      const double s = attention_aggregate(tape.constant(random_distribution(L, rng))).item();
      ++total;
      if (s < lo - 1e-12 || s > 1 + 1e-12) ++violations;
    }
    // the bounds are attained by the uniform and one-hot distributions
    Tape<double> tape;
    Tensor<double> uniform({L}, lo), hot({L});
    hot[0] = 1;
    if (std::abs(attention_aggregate(tape.constant(uniform)).item() - lo) > 1e-12) ++violations;
    if (attention_aggregate(tape.constant(hot)).item() != 1.0) ++violations;
  }
  const double t = sw.seconds();
  report(2, violations == 0 && t < 5,
         std::to_string(total) + " distributions over L in {2,4,16,64}, " + std::to_string(violations) +
             " outside [1/L, 1], " + fixed(t, 2) + " s");
}

TEST(Acceptance, Criterion3_GradientCheck) {
  Stopwatch sw;
  auto entries = harness::gradcheck_suite<double>();
  double worst = 0;
  std::string worst_name;
  bool has_episode = false;
  for (const auto& e : entries) {
    has_episode |= e.name == "episode";
    if (e.max_rel_err >= worst) worst = e.max_rel_err, worst_name = e.name;
  }
  const double t = sw.seconds();
  report(3, has_episode && worst < 1e-5 && t < 120,
         std::to_string(entries.size()) + " checks in double, max relative error " + fixed(worst * 1e9, 3) +
             "e-9 (" + worst_name + "), " + fixed(t, 1) + " s");
}

TEST(Acceptance, Criterion4_OracleMatchesBruteForce) {
  Stopwatch sw;
  using namespace samnet::minicog;
  const Inventory inv{2, 2};
  const auto singles = brute::all_frames(2, 2, inv, 3);
  std::size_t checks = 0, mismatches = 0, classes = 0;
  for (auto t : all_task_classes()) {
    ++classes;
    for (const auto& a : brute::all_args(t, inv)) {
      auto prog = build_program(t, a);
      for (const auto& f0 : singles) {
        std::vector<SceneGraph> frames = {f0, f0};
        ++checks;
        if (!(oracle_frame(*prog, frames, 0, 1) == brute::answer(t, a, frames, 0, 1))) ++mismatches;
        for (const auto& f1 : singles) {
          frames[1] = f1;
          ++checks;
          if (!(oracle_frame(*prog, frames, 1, 1) == brute::answer(t, a, frames, 1, 1))) ++mismatches;
        }
      }
    }
  }
  const double t = sw.seconds();
  report(4, mismatches == 0 && classes == 23 && t < 300,
         std::to_string(checks) + " exhaustive checks over " + std::to_string(classes) + " classes, " +
             std::to_string(singles.size()) + " frames, " + std::to_string(mismatches) + " mismatches, " +
             fixed(t, 1) + " s");
}

TEST(Acceptance, Criterion5_CanonicalLearns) {
  Stopwatch sw;
  auto cfg = canonical();
  cfg.out_dir = scratch("c5").string();
  const std::size_t episodes = cfg.max_steps * cfg.batch;
  auto res = harness::train(cfg);
  auto lm = harness::load_model(res.best_checkpoint);
  auto val = harness::validation_corpus(cfg);
  auto ev = harness::evaluate(*lm.model, val, cfg.mem_slots);
  const double majority = harness::majority_baseline(val);
  const double acc = ev.row.accuracy, t = sw.seconds();
  report(5, episodes <= 50000 && acc >= 0.9 && acc - majority >= 0.3 && t < 1800,
         "val frame accuracy " + fixed(acc) + " vs majority " + fixed(majority) + " after " +
             std::to_string(res.episodes_seen) + " episodes, " + fixed(t, 0) + " s");
}

TEST(Acceptance, Criterion6_TemporalTransferNeedsMemory) {
  Stopwatch sw;
  auto tc = transfer::TransferConfig::load(kConfigs / "transfer-temporal.cfg");
  auto split = tc.split(transfer::SplitKind::temporal, {});
  if (split.target.max_objects() <= split.source.max_objects()) {
    report(6, false, "target does not raise the object count");
    return;
  }
  std::vector<double> full, ablated;
  std::string detail;
  for (std::uint64_t s = 0; s < 3; ++s) {
    for (bool writes : {true, false}) {
      auto train = tc.train;
      train.seed = 11 + s;
      train.data_seed = 101 + s;
      train.memory_writes = writes;
      train.eval_every = train.max_steps;  // the final model is transferred; skip intermediate validation
      auto rep = transfer::run_protocol(split, {train, tc.target_mem_slots, {}});
      const double src = rep.evaluation("source_test").row.accuracy;
      const double tgt = rep.evaluation("target_zero_shot").row.accuracy;
      const double keep = src > 0 ? tgt / src : 0;
      (writes ? full : ablated).push_back(keep);
      detail += std::string(writes ? " full" : " ablated") + "[" + std::to_string(s) + "] " + fixed(tgt, 3) + "/" +
                fixed(src, 3);
    }
  }
  auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
  const double t = sw.seconds();
  report(6, mean(full) >= 0.7 && mean(ablated) < mean(full) && t < 2700,
         "retention " + fixed(mean(full), 3) + " with writes, " + fixed(mean(ablated), 3) + " without;" + detail +
             ", " + fixed(t, 0) + " s");
}

TEST(Acceptance, Criterion7_DisjointLabelsZeroShot) {
  Stopwatch sw;
  auto train = canonical();
  train.max_steps = 1500;
  train.eval_every = 500;
  train.eval_size = 500;
  // every class answering with a shape is held out; no source class answers with one
  auto split = transfer::build_reasoning_split(train.data, transfer::ReasoningMode::all_but_t,
                                               "GetShape,GetShapeSpace", train.groups());
  auto rep = transfer::run_protocol(split, {train, 0, {}});
  const double t = sw.seconds();
  report(7, !rep.labels.disjoint.empty() && rep.disjoint_frames > 0 && rep.disjoint_zero_shot_accuracy == 0.0 && t < 600,
         "accuracy " + fixed(rep.disjoint_zero_shot_accuracy) + " on " + std::to_string(rep.disjoint_frames) +
             " frames whose label (" + std::to_string(rep.labels.disjoint.size()) +
             " distinct) never occurs in training, " + fixed(t, 0) + " s");
}

TEST(Acceptance, Criterion8_Determinism) {
  Stopwatch sw;
  auto cfg = canonical();
  cfg.deterministic = true;
  cfg.max_steps = 60;
  cfg.eval_every = 20;
  cfg.eval_size = 200;
  cfg.threads = 4;  // ignored under determinism
  auto a = cfg, b = cfg;
  a.out_dir = scratch("c8a").string();
  b.out_dir = scratch("c8b").string();
  auto ra = harness::train(a);
  auto rb = harness::train(b);
  const bool same_ckpt = slurp(ra.final_checkpoint) == slurp(rb.final_checkpoint) &&
                         slurp(ra.best_checkpoint) == slurp(rb.best_checkpoint);
  // metrics name the output directory nowhere, so the files must match byte for byte
  const bool same_metrics = slurp(ra.metrics) == slurp(rb.metrics);
  auto val = harness::validation_corpus(cfg);
  auto la = harness::load_model(ra.final_checkpoint);
  auto e1 = harness::evaluate(*la.model, val, cfg.mem_slots);
  auto resaved = fs::path(a.out_dir) / "resaved.ckpt";
  nd::save_checkpoint(la.model->checkpoint(harness::checkpoint_extras(la.config)), resaved);
  auto lb = harness::load_model(resaved);
  auto e2 = harness::evaluate(*lb.model, val, cfg.mem_slots);
  const bool round_trip = slurp(resaved) == slurp(ra.final_checkpoint) && e1.predictions == e2.predictions &&
                          e1.row.loss == e2.row.loss && e1.row.accuracy == e2.row.accuracy;
  const double t = sw.seconds();
  report(8, same_ckpt && same_metrics && round_trip && t < 300,
         std::string("checkpoints ") + (same_ckpt ? "identical" : "differ") + ", metrics " +
             (same_metrics ? "identical" : "differ") + ", round-trip eval " +
             (round_trip ? "bit-identical" : "differs") + ", " + fixed(t, 1) + " s");
}

TEST(Acceptance, Criterion9_SlotCountIsFree) {
  Stopwatch sw;
  auto cfg = canonical();
  cfg.mem_slots = 4;
  cfg.max_steps = 20;
  cfg.eval_every = 20;
  cfg.eval_size = 100;
  cfg.out_dir = scratch("c9").string();
  auto res = harness::train(cfg);
  const auto on_disk = nd::load_checkpoint(res.final_checkpoint);
  auto lm = harness::load_model(res.final_checkpoint);
  auto hard = harness::load_config(kConfigs / "toy-hard.cfg");
  hard.eval_size = 100;
  auto corpus = harness::validation_corpus(hard);
  auto ev = harness::evaluate(*lm.model, corpus, 8);
  const auto after = lm.model->checkpoint(harness::checkpoint_extras(lm.config));
  auto wide = cfg;
  wide.mem_slots = 8;
  harness::Model fresh(wide.model_config());
  const bool same_manifest = after.manifest_hash() == on_disk.manifest_hash();
  const bool same_layout = fresh.checkpoint().layout() == on_disk.layout();
  const double t = sw.seconds();
  report(9, same_manifest && same_layout && ev.row.frames > 0 && t < 60,
         "N=4 checkpoint evaluated with N=8 on " + std::to_string(ev.row.frames) + " frames (accuracy " +
             fixed(ev.row.accuracy) + "), manifest " + (same_manifest ? "unchanged" : "changed") + ", layout " +
             (same_layout ? "independent of N" : "depends on N") + ", " + fixed(t, 1) + " s");
}

int main(int argc, char** argv) {
  ::testing::InitGoogleTest(&argc, argv);
  return RUN_ALL_TESTS();
}
