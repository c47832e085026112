#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "samnet/harness/gradcheck_suite.hpp"
#include "samnet/harness/trainer.hpp"

using namespace samnet;
using namespace samnet::harness;

namespace {

TrainConfig tiny_config(const std::string& tag) {
  auto c = preset("toy-canonical");
  c.d = 8;
  c.steps = 2;
  c.mem_slots = 3;
  c.batch = 2;
  c.max_steps = 4;
  c.eval_every = 2;
  c.eval_size = 12;
  c.data.height = c.data.width = 3;
  c.out_dir = (std::filesystem::temp_directory_path() / ("harness_" + tag)).string();
  std::filesystem::remove_all(c.out_dir);
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

}  // namespace

TEST(Config, PresetThenOverrides) {
  auto c = parse_config("# comment\npreset = toy-hard\nlr = 0.005  # inline\nmemory_writes = off\n");
  EXPECT_EQ(c.d, 64u);
  EXPECT_EQ(c.data.frames, 8u);
  EXPECT_DOUBLE_EQ(c.lr, 0.005);
  EXPECT_FALSE(c.memory_writes);
  // preset position in the file does not matter
  auto d = parse_config("lr = 0.005\npreset = toy-canonical\n");
  EXPECT_DOUBLE_EQ(d.lr, 0.005);
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(parse_config("bogus = 1\n"), InputError);
  EXPECT_THROW(parse_config("d = -3\n"), InputError);
  EXPECT_THROW(parse_config("d = 12abc\n"), InputError);
  EXPECT_THROW(parse_config("lr = 0\n"), InputError);
  EXPECT_THROW(parse_config("gate_mode = hard\n"), InputError);
  EXPECT_THROW(parse_config("just words\n"), InputError);
  EXPECT_THROW(parse_config("deterministic = maybe\n"), InputError);
  EXPECT_THROW(parse_config("preset = huge\n"), InputError);
}

TEST(Config, ItemsRoundTrip) {
  auto c = parse_config("preset = toy-canonical\nseed = 17\ntasks = Basic,Compare\n");
  auto back = config_from_pairs(c.items());
  EXPECT_EQ(back.items(), c.items());
}

TEST(Config, ShippedConfigsLoad) {
  const std::filesystem::path dir(SAMNET_CONFIG_DIR);
  for (const char* f : {"toy-canonical.cfg", "toy-hard.cfg"}) {
    auto c = load_config(dir / f);
    EXPECT_TRUE(std::filesystem::path(c.group_table).is_absolute()) << f;
    EXPECT_NO_THROW(c.family());
  }
}

TEST(Adam, FirstStepByHand) {
  // Bias-corrected first moments equal g and g^2, so the step is lr * sign(g).
  nd::ParamStore<double> store;
  store.add("p", nd::Tensor<double>::vector({1.0, -2.0}));
  Adam<double> opt(store, 0.1);
  nd::GradientSet<double> g(store);
  g.grads[0] = {0.5, -3.0};
  opt.step(store, g);
  EXPECT_NEAR(store[0].value.data[0], 0.9, 1e-7);
  EXPECT_NEAR(store[0].value.data[1], -1.9, 1e-7);
  // second step with the same gradient: m/c1 and v/c2 stay g and g^2
  opt.step(store, g);
  EXPECT_NEAR(store[0].value.data[0], 0.8, 1e-7);
}

TEST(Adam, ClipGlobalNorm) {
  nd::ParamStore<double> store;
  store.add("a", nd::Tensor<double>::vector({0, 0}));
  nd::GradientSet<double> g(store);
  g.grads[0] = {3, 4};
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 10.0), 5.0);
  EXPECT_EQ(g.grads[0], (nd::Buffer<double>{3, 4}));
  clip_global_norm(g, 1.0);
  EXPECT_NEAR(g.grads[0][0], 0.6, 1e-12);
  EXPECT_NEAR(g.grads[0][1], 0.8, 1e-12);
}

TEST(Metrics, CsvLayout) {
  MetricsRow r;
  r.step = 3;
  r.split = "val";
  r.loss = 0.5;
  r.accuracy = 0.25;
  r.per_class[minicog::TaskClass::GetShape] = 1;
  const auto line = csv_line(r), header = csv_header();
  EXPECT_EQ(std::count(line.begin(), line.end(), ','), std::count(header.begin(), header.end(), ','));
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), 4 + 23);
  EXPECT_EQ(line.rfind("3,val,0.500000,0.250000,0.000,,,,,1.000000,", 0), 0u);
  auto path = std::filesystem::temp_directory_path() / "harness_metrics.csv";
  MetricsWriter w(path);
  w.append(r);
  r.step = 2;
  EXPECT_THROW(w.append(r), InputError);
}

TEST(Trainer, PlateauRule) {
  EXPECT_FALSE(plateaued({0.1, 0.2, 0.3, 0.4, 0.5}));
  EXPECT_TRUE(plateaued({0.5, 0.5, 0.5, 0.5}));
  EXPECT_FALSE(plateaued({0.5, 0.5}));
}

TEST(Trainer, MajorityBaselineByHand) {
  auto cfg = tiny_config("majority");
  auto corpus = minicog::generate_corpus(cfg.data, minicog::TaskFamily::uniform({minicog::TaskClass::GetColor}), 30, 4);
  std::map<std::size_t, std::size_t> counts;
  minicog::AnswerSpace space(cfg.data.inventory);
  std::size_t total = 0;
  for (const auto& ep : corpus.episodes)
    for (const auto& a : ep.answers) ++counts[space.index(a)], ++total;
  std::size_t best = 0;
  for (auto& [k, v] : counts) best = std::max(best, v);
  EXPECT_DOUBLE_EQ(majority_baseline(corpus), static_cast<double>(best) / static_cast<double>(total));
}

TEST(Trainer, ZeroStepsWritesInitialCheckpoint) {
  auto cfg = tiny_config("zero");
  cfg.max_steps = 0;
  auto res = train(cfg);
  EXPECT_EQ(res.steps_done, 0u);
  EXPECT_TRUE(res.rows.empty());
  auto lm = load_model(res.final_checkpoint);
  Model fresh(cfg.model_config());
  EXPECT_EQ(nd::serialize(lm.model->checkpoint()), nd::serialize(fresh.checkpoint()));
}

TEST(Trainer, DeterministicRunsAreByteIdentical) {
  auto a = tiny_config("det_a"), b = tiny_config("det_b");
  a.deterministic = b.deterministic = true;
  b.out_dir = a.out_dir + "_again";
  std::filesystem::remove_all(b.out_dir);
  auto ra = train(a);
  auto rb = train(b);
  EXPECT_EQ(ra.steps_done, 4u);
  EXPECT_EQ(slurp(ra.metrics), slurp(rb.metrics));
  EXPECT_EQ(slurp(ra.final_checkpoint), slurp(rb.final_checkpoint));
  EXPECT_EQ(slurp(ra.best_checkpoint), slurp(rb.best_checkpoint));
  // 2 evaluation points, a train row and a val row each
  EXPECT_EQ(ra.rows.size(), 4u);
}

TEST(Trainer, NonFiniteLossAborts) {
  auto cfg = tiny_config("nan");
  cfg.lr = 1e30;
  cfg.clip_norm = 1e30;
  cfg.max_steps = 50;
  try {
    train(cfg);
    FAIL() << "expected a numeric abort";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("batch seed"), std::string::npos) << e.what();
  }
  EXPECT_NO_THROW(load_model(std::filesystem::path(cfg.out_dir) / "final.ckpt"));
}

TEST(Trainer, EvaluationRoundTripIsBitIdentical) {
  auto cfg = tiny_config("roundtrip");
  auto res = train(cfg);
  Trainer again(cfg);
  auto lm = load_model(res.final_checkpoint);
  auto val = validation_corpus(cfg);
  auto e1 = evaluate(*lm.model, val, cfg.mem_slots);
  auto lm2 = load_model(res.final_checkpoint);
  auto e2 = evaluate(*lm2.model, val, cfg.mem_slots, "val", 3);
  EXPECT_EQ(e1.predictions, e2.predictions);
  EXPECT_EQ(e1.row.loss, e2.row.loss);
  auto restored = lm.config;
  restored.out_dir = cfg.out_dir;
  EXPECT_EQ(restored.items(), cfg.items());
}

TEST(Trainer, EvaluateRejectsForeignInventory) {
  auto cfg = tiny_config("foreign");
  Model m(cfg.model_config());
  auto data = cfg.data;
  data.inventory = {4, 4};
  auto corpus = minicog::generate_corpus(data, minicog::TaskFamily::uniform({minicog::TaskClass::Exist}), 3, 1);
  EXPECT_THROW(evaluate(m, corpus, 3), InputError);
}

TEST(Trainer, ModelVersionIsChecked) {
  auto cfg = tiny_config("version");
  Model m(cfg.model_config());
  auto ck = m.checkpoint(checkpoint_extras(cfg));
  for (auto& [k, v] : ck.hyper)
    if (k == "model_version") v = "samnet-0";
  auto path = std::filesystem::path(cfg.out_dir + ".ckpt");
  nd::save_checkpoint(ck, path);
  EXPECT_THROW(load_model(path), VersionError);
}

TEST(GradCheck, FloatSuitePasses) {
  for (const auto& e : gradcheck_suite<float>()) EXPECT_TRUE(e.passed()) << e.name << " " << e.max_rel_err;
}
