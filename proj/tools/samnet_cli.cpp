#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "samnet/harness/gradcheck_suite.hpp"
#include "samnet/harness/trainer.hpp"
#include "samnet/minicog/corpus.hpp"
#include "samnet/transfer/transfer.hpp"

using namespace samnet;

namespace {

harness::TrainConfig config_or_preset(const std::string& path, const std::string& preset_name) {
  if (!path.empty()) return harness::load_config(path);
  auto c = harness::preset(preset_name);
  c.validate();
  return c;
}

void print_row(const harness::MetricsRow& r) {
  std::printf("%s loss=%s acc=%s frames=%zu\n", r.split.c_str(), harness::fmt(r.loss).c_str(),
              harness::fmt(r.accuracy).c_str(), r.frames);
  for (const auto& [t, a] : r.per_class) std::printf("  %-24s %s\n", minicog::task_name(t).c_str(), harness::fmt(a).c_str());
}

int cmd_gen(const std::string& config, const std::string& preset_name, std::size_t count, std::uint64_t seed,
            const std::string& out) {
  auto cfg = config_or_preset(config, preset_name);
  auto corpus = minicog::generate_corpus(cfg.data, cfg.family(), count, seed);
  if (out.empty() || out == "-") {
    minicog::write_corpus(corpus, std::cout);
  } else {
    minicog::save_corpus(corpus, out);
    std::printf("wrote %zu episodes to %s\n", count, out.c_str());
  }
  return 0;
}

int cmd_train(const std::string& config, const std::string& preset_name, bool deterministic, const std::string& out_dir,
              long max_steps) {
  auto cfg = config_or_preset(config, preset_name);
  if (deterministic) cfg.deterministic = true;
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  if (max_steps >= 0) cfg.max_steps = static_cast<std::size_t>(max_steps);
  auto res = harness::train(cfg);
  for (const auto& r : res.rows)
    if (r.split == "val") std::printf("step %zu val acc %s\n", r.step, harness::fmt(r.accuracy).c_str());
  std::printf("steps %zu episodes %zu best val %s%s\n", res.steps_done, res.episodes_seen,
              harness::fmt(res.best_val_accuracy).c_str(), res.underfit ? " (underfit: no plateau)" : "");
  std::printf("checkpoints %s %s\nmetrics %s\n", res.final_checkpoint.c_str(), res.best_checkpoint.c_str(),
              res.metrics.c_str());
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data, long mem_slots, std::size_t threads) {
  auto lm = harness::load_model(ckpt);
  auto corpus = minicog::load_corpus(data, lm.config.groups());
  const std::size_t slots = mem_slots > 0 ? static_cast<std::size_t>(mem_slots) : lm.config.mem_slots;
  auto ev = harness::evaluate(*lm.model, corpus, slots, "eval", threads);
  std::printf("checkpoint %s manifest %016llx mem_slots %zu\n", ckpt.c_str(),
              static_cast<unsigned long long>(lm.checkpoint.manifest_hash()), slots);
  print_row(ev.row);
  std::printf("majority baseline %s\n", harness::fmt(harness::majority_baseline(corpus)).c_str());
  return 0;
}

int cmd_transfer(const std::string& split, const std::string& mode, const std::string& config, long samples,
                 const std::string& report) {
  auto tc = transfer::TransferConfig::load(config);
  transfer::Protocol protocol;
  if (mode == "finetune") {
    protocol = transfer::Protocol::finetune(samples >= 0 ? static_cast<std::size_t>(samples) : tc.finetune_samples,
                                            tc.finetune_epochs);
  } else if (mode != "zero_shot") {
    throw ValidationError("unknown protocol mode '" + mode + "' (zero_shot or finetune)");
  }
  auto s = tc.split(transfer::parse_split(split), protocol);
  transfer::RunOptions opt{tc.train, tc.target_mem_slots, tc.train.out_dir};
  auto rep = transfer::run_protocol(s, opt);
  const auto path = report.empty() ? tc.report : report;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot write report " + path);
  os << rep.to_json().dump(2) << '\n';
  for (const auto& e : rep.evaluations) print_row(e.row);
  if (rep.underfit) std::printf("warning: source training did not plateau (underfit)\n");
  std::printf("report %s\n", path.c_str());
  return 0;
}

template <class T>
int cmd_gradcheck(std::uint64_t seed) {
  bool ok = true;
  for (const auto& e : harness::gradcheck_suite<T>(seed)) {
    std::printf("%-24s max_rel_err=%.3e threshold=%.0e %s%s\n", e.name.c_str(), e.max_rel_err, e.threshold,
                e.passed() ? "ok" : "FAIL ", e.passed() ? "" : e.worst_param.c_str());
    ok = ok && e.passed();
  }
  std::printf("%s\n", ok ? "gradcheck passed" : "gradcheck FAILED");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"samnet: temporal memory reasoning on synthetic video questions"};
  app.require_subcommand(1);

  std::string config, preset_name = "toy-canonical", out, out_dir, ckpt, data, split, mode = "zero_shot", report;
  std::size_t count = 1000, threads = 1;
  std::uint64_t seed = 1, gc_seed = 7;
  long max_steps = -1, mem_slots = 0, samples = -1;
  bool deterministic = false, f64 = false;

  auto* gen = app.add_subcommand("gen", "generate an episode corpus (JSON lines)");
  gen->add_option("--config", config, "key = value config file");
  gen->add_option("--preset", preset_name, "preset used when no config is given");
  gen->add_option("--count", count, "number of episodes");
  gen->add_option("--seed", seed, "corpus seed");
  gen->add_option("--out", out, "output path (stdout when omitted)");

  auto* train = app.add_subcommand("train", "train on generated episodes");
  train->add_option("--config", config, "key = value config file");
  train->add_option("--preset", preset_name, "preset used when no config is given");
  train->add_option("--out-dir", out_dir, "run directory (overrides out_dir)");
  train->add_option("--max-steps", max_steps, "optimizer steps (overrides max_steps)");
  train->add_flag("--deterministic", deterministic, "single thread, zeroed timings, byte-identical outputs");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a corpus");
  eval->add_option("--ckpt", ckpt, "checkpoint path")->required();
  eval->add_option("--data", data, "corpus path")->required();
  eval->add_option("--mem-slots", mem_slots, "memory slots at evaluation (default: training value)");
  eval->add_option("--threads", threads, "worker threads");

  auto* tr = app.add_subcommand("transfer", "run a transfer protocol");
  tr->add_option("--split", split, "feature, temporal or reasoning")->required();
  tr->add_option("--mode", mode, "zero_shot or finetune");
  tr->add_option("--config", config, "key = value config file")->required();
  tr->add_option("--samples", samples, "fine-tune sample count (overrides finetune_samples)");
  tr->add_option("--report", report, "report path (overrides report)");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  gc->add_flag("--f64", f64, "double precision (threshold 1e-5)");
  gc->add_option("--seed", gc_seed, "parameter seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) return cmd_gen(config, preset_name, count, seed, out);
    if (*train) return cmd_train(config, preset_name, deterministic, out_dir, max_steps);
    if (*eval) return cmd_eval(ckpt, data, mem_slots, threads);
    if (*tr) return cmd_transfer(split, mode, config, samples, report);
    if (*gc) return f64 ? cmd_gradcheck<double>(gc_seed) : cmd_gradcheck<float>(gc_seed);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
