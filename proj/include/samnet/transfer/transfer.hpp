#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "samnet/core/errors.hpp"
#include "samnet/harness/config.hpp"
#include "samnet/harness/trainer.hpp"
#include "samnet/minicog/corpus.hpp"

namespace samnet::transfer {

using minicog::EpisodeConfig;
using minicog::FeatureFamily;
using minicog::TaskFamily;

enum class SplitKind { feature, temporal, reasoning };

inline const char* split_name(SplitKind k) {
  switch (k) {
    case SplitKind::feature: return "feature";
    case SplitKind::temporal: return "temporal";
    case SplitKind::reasoning: return "reasoning";
  }
  return "?";
}

inline SplitKind parse_split(const std::string& s) {
  if (s == "feature") return SplitKind::feature;
  if (s == "temporal") return SplitKind::temporal;
  if (s == "reasoning") return SplitKind::reasoning;
  throw ValidationError("unknown split kind '" + s + "' (feature, temporal or reasoning)");
}

/// n = maximum objects per frame, m = frames per episode.
struct Complexity {
  std::size_t n = 1;
  std::size_t m = 1;
  bool operator==(const Complexity&) const = default;
};

inline Complexity complexity_of(const EpisodeConfig& c) { return {c.max_objects(), c.frames}; }

/// Episode config realizing a complexity on top of `base`: history m-1,
/// distractors n - max_targets, grid widened until it holds 2n cells.
inline EpisodeConfig complexity_config(const EpisodeConfig& base, const Complexity& c) {
  if (c.n < 1 || c.m < 1) throw ValidationError("complexity needs n >= 1 and m >= 1");
  if (c.n < base.max_targets) {
    throw ValidationError("complexity n=" + std::to_string(c.n) + " is below max_targets=" +
                          std::to_string(base.max_targets));
  }
  EpisodeConfig out = base;
  out.frames = c.m;
  out.history = c.m - 1;
  out.distractors = c.n - base.max_targets;
  while (out.height * out.width < 2 * c.n) {
    if (out.width <= out.height) {
      ++out.width;
    } else {
      ++out.height;
    }
  }
  return out;
}

struct Protocol {
  enum class Mode { zero_shot, finetune } mode = Mode::zero_shot;
  std::size_t samples = 5000;
  std::size_t epochs = 1;

  static Protocol zero_shot() { return {}; }
  static Protocol finetune(std::size_t samples, std::size_t epochs = 1) { return {Mode::finetune, samples, epochs}; }

  /// A fine-tune with no target data is a zero-shot run.
  Protocol normalized() const {
    if (mode == Mode::finetune && (samples == 0 || epochs == 0)) return zero_shot();
    return *this;
  }

  nlohmann::json to_json() const {
    auto p = normalized();
    if (p.mode == Mode::zero_shot) return {{"mode", "zero_shot"}};
    return {{"mode", "finetune"}, {"samples", p.samples}, {"epochs", p.epochs}};
  }
};

struct TransferSplit {
  SplitKind kind = SplitKind::feature;
  EpisodeConfig source;
  EpisodeConfig target;
  TaskFamily source_tasks;
  TaskFamily target_tasks;
  Protocol protocol;
  std::string detail;  // human-readable construction summary
};

// ---- feature ----------------------------------------------------------------

/// Families must differ, and every shape is either unrestricted in both or
/// restricted to complementary color sets.
inline void validate_feature_families(const FeatureFamily& a, const FeatureFamily& b) {
  if (a.allowed.size() != b.allowed.size()) throw ValidationError("feature families cover different shape sets");
  if (a == b) throw ValidationError("feature split needs different source and target domains (families are equal)");
  std::uint32_t full = 0;
  for (auto m : a.allowed) full |= m;
  for (auto m : b.allowed) full |= m;
  bool constrained = false;
  for (std::size_t s = 0; s < a.allowed.size(); ++s) {
    const auto x = a.allowed[s], y = b.allowed[s];
    if (x == full && y == full) continue;
    constrained = true;
    if ((x & y) != 0 || (x | y) != full) {
      throw ValidationError("feature families are not complementary for shape " + std::to_string(s));
    }
  }
  if (!constrained) throw ValidationError("feature families constrain no shape");
}

inline TransferSplit build_feature_split(const EpisodeConfig& base, const std::string& family_a,
                                         const std::string& family_b, const TaskFamily& tasks,
                                         Protocol protocol = {}) {
  validate_feature_families(FeatureFamily::by_name(family_a, base.inventory),
                            FeatureFamily::by_name(family_b, base.inventory));
  TransferSplit s;
  s.kind = SplitKind::feature;
  s.source = base;
  s.source.family = family_a;
  s.target = base;
  s.target.family = family_b;
  s.source_tasks = tasks;
  s.target_tasks = tasks;
  s.protocol = protocol;
  s.detail = "family " + family_a + " -> " + family_b;
  return s;
}

// ---- temporal ---------------------------------------------------------------

/// n_T >= n_S and m_T >= m_S, at least one strictly.
inline void validate_complexities(const Complexity& s, const Complexity& t) {
  auto pair = [](const Complexity& c) { return "(" + std::to_string(c.n) + "," + std::to_string(c.m) + ")"; };
  if (t.n < s.n) {
    throw ValidationError("temporal split violates n_T >= n_S: " + std::to_string(t.n) + " < " + std::to_string(s.n));
  }
  if (t.m < s.m) {
    throw ValidationError("temporal split violates m_T >= m_S: " + std::to_string(t.m) + " < " + std::to_string(s.m));
  }
  if (t.n == s.n && t.m == s.m) {
    throw ValidationError("temporal split needs n_T > n_S or m_T > m_S: " + pair(s) + " -> " + pair(t));
  }
}

/// Source and target may differ only in complexity-related knobs.
inline TransferSplit build_temporal_split(const EpisodeConfig& source, const EpisodeConfig& target,
                                          const TaskFamily& tasks, Protocol protocol = {}) {
  source.validate();
  target.validate();
  if (!(source.inventory == target.inventory) || source.family != target.family ||
      source.max_targets != target.max_targets) {
    throw ValidationError("temporal split source and target must share attributes, families and targets");
  }
  const auto cs = complexity_of(source), ct = complexity_of(target);
  validate_complexities(cs, ct);
  TransferSplit s;
  s.kind = SplitKind::temporal;
  s.source = source;
  s.target = target;
  s.source_tasks = tasks;
  s.target_tasks = tasks;
  s.protocol = protocol;
  s.detail = "complexity (" + std::to_string(cs.n) + "," + std::to_string(cs.m) + ") -> (" + std::to_string(ct.n) +
             "," + std::to_string(ct.m) + ")";
  return s;
}

inline TransferSplit build_temporal_split(const EpisodeConfig& base, const Complexity& cs, const Complexity& ct,
                                          const TaskFamily& tasks, Protocol protocol = {}) {
  validate_complexities(cs, ct);
  return build_temporal_split(complexity_config(base, cs), complexity_config(base, ct), tasks, protocol);
}

// ---- reasoning --------------------------------------------------------------

enum class ReasoningMode { train_all, only_t, all_but_t, group };

inline ReasoningMode parse_reasoning_mode(const std::string& s) {
  if (s == "train_all") return ReasoningMode::train_all;
  if (s == "only_t") return ReasoningMode::only_t;
  if (s == "all_but_t") return ReasoningMode::all_but_t;
  if (s == "group") return ReasoningMode::group;
  throw ValidationError("unknown reasoning mode '" + s + "'");
}

inline const char* reasoning_mode_name(ReasoningMode m) {
  switch (m) {
    case ReasoningMode::train_all: return "train_all";
    case ReasoningMode::only_t: return "only_t";
    case ReasoningMode::all_but_t: return "all_but_t";
    case ReasoningMode::group: return "group";
  }
  return "?";
}

/// `t` is a leaf group, or a comma-separated list of task classes.
inline std::vector<minicog::TaskClass> resolve_target(const std::string& t, const minicog::GroupTable& groups) {
  if (groups.leaves.count(t)) return groups.classes(t);
  if (groups.parents.count(t)) {
    throw ValidationError("'" + t + "' is a two-level group; use mode group for it");
  }
  if (t.find(',') == std::string::npos) {
    bool is_class = false;
    for (auto c : minicog::all_task_classes()) is_class = is_class || minicog::task_name(c) == t;
    if (!is_class) throw ValidationError("unknown task group '" + t + "'");
  }
  return TaskFamily::parse(t, groups).classes();
}

inline TransferSplit build_reasoning_split(const EpisodeConfig& base, ReasoningMode mode, const std::string& t,
                                           const minicog::GroupTable& groups = minicog::GroupTable::defaults(),
                                           Protocol protocol = {}) {
  groups.validate();
  std::vector<minicog::TaskClass> source, target;
  const auto all = minicog::all_task_classes();
  if (mode == ReasoningMode::group) {
    if (!groups.parents.count(t)) throw ValidationError("unknown task group '" + t + "' (expected A or B)");
    source = groups.classes(t);
    for (const auto& [name, kids] : groups.parents) {
      if (name == t) continue;
      auto v = groups.classes(name);
      target.insert(target.end(), v.begin(), v.end());
    }
  } else {
    auto tc = resolve_target(t, groups);
    target = tc;
    if (mode == ReasoningMode::only_t) {
      source = tc;
    } else if (mode == ReasoningMode::train_all) {
      source = all;
    } else {
      for (auto c : all)
        if (std::find(tc.begin(), tc.end(), c) == tc.end()) source.push_back(c);
    }
  }
  std::sort(target.begin(), target.end());
  target.erase(std::unique(target.begin(), target.end()), target.end());
  if (source.empty() || target.empty()) throw ValidationError("reasoning split leaves an empty task family");
  TransferSplit s;
  s.kind = SplitKind::reasoning;
  s.source = base;
  s.target = base;
  s.source_tasks = TaskFamily::uniform(source);
  s.target_tasks = TaskFamily::uniform(target);
  s.protocol = protocol;
  s.detail = std::string(reasoning_mode_name(mode)) + " " + t;
  return s;
}

// ---- label spaces -----------------------------------------------------------

struct LabelSpaceReport {
  std::set<std::string> source_labels, target_labels, disjoint;
  bool disjoint_only = false;  // no target label occurs in the source
};

inline std::set<std::string> label_set(const minicog::Corpus& c) {
  minicog::AnswerSpace space(c.config.inventory);
  std::set<std::string> out;
  for (const auto& ep : c.episodes)
    for (const auto& a : ep.answers) out.insert(space.name(a));
  return out;
}

inline LabelSpaceReport label_space_report(const minicog::Corpus& source, const minicog::Corpus& target) {
  LabelSpaceReport r;
  r.source_labels = label_set(source);
  r.target_labels = label_set(target);
  for (const auto& l : r.target_labels)
    if (!r.source_labels.count(l)) r.disjoint.insert(l);
  r.disjoint_only = r.disjoint.size() == r.target_labels.size();
  return r;
}

/// Accuracy over frames whose true label is in `labels`; -1 if there are none.
inline std::pair<double, std::size_t> accuracy_on_labels(const harness::EvalResult& ev, const minicog::Corpus& corpus,
                                                         const std::set<std::string>& labels) {
  minicog::AnswerSpace space(corpus.config.inventory);
  std::size_t hit = 0, n = 0;
  for (std::size_t i = 0; i < ev.labels.size(); ++i) {
    for (std::size_t k = 0; k < ev.labels[i].size(); ++k) {
      if (!labels.count(space.name(ev.labels[i][k]))) continue;
      ++n;
      hit += ev.labels[i][k] == ev.predictions[i][k];
    }
  }
  return {n ? static_cast<double>(hit) / static_cast<double>(n) : -1.0, n};
}

// ---- protocol ---------------------------------------------------------------

struct Evaluation {
  std::string name;
  harness::MetricsRow row;
};

struct TransferReport {
  TransferSplit split;
  harness::TrainConfig train;
  std::size_t target_mem_slots = 0;
  std::vector<Evaluation> evaluations;
  LabelSpaceReport labels;
  double disjoint_zero_shot_accuracy = -1;
  std::size_t disjoint_frames = 0;
  bool underfit = false;
  std::string manifest_hash;

  const Evaluation& evaluation(const std::string& name) const {
    for (const auto& e : evaluations)
      if (e.name == name) return e;
    throw InputError("report has no evaluation '" + name + "'");
  }

  nlohmann::json to_json() const {
    using nlohmann::json;
    auto per_class = [](const harness::MetricsRow& r) {
      json j = json::object();
      for (const auto& [t, a] : r.per_class) j[minicog::task_name(t)] = a;
      return j;
    };
    const auto& headline = evaluations.back();
    json evals = json::object();
    for (const auto& e : evaluations) {
      evals[e.name] = {{"aggregate_accuracy", e.row.accuracy},
                       {"loss", e.row.loss},
                       {"frames", e.row.frames},
                       {"per_class_accuracy", per_class(e.row)}};
    }
    json train_cfg = json::object();
    for (const auto& [k, v] : train.items()) train_cfg[k] = v;
    json src = split.source.to_json(), tgt = split.target.to_json();
    src["tasks"] = split.source_tasks.describe();
    tgt["tasks"] = split.target_tasks.describe();
    tgt["mem_slots"] = target_mem_slots;
    return {{"split_kind", split_name(split.kind)},
            {"split", split.detail},
            {"source_cfg", src},
            {"target_cfg", tgt},
            {"protocol", split.protocol.to_json()},
            {"headline", headline.name},
            {"per_class_accuracy", per_class(headline.row)},
            {"aggregate_accuracy", headline.row.accuracy},
            {"evaluations", evals},
            {"label_space",
             {{"source", labels.source_labels},
              {"target", labels.target_labels},
              {"disjoint", labels.disjoint},
              {"disjoint_zero_shot_accuracy", disjoint_zero_shot_accuracy},
              {"disjoint_frames", disjoint_frames}}},
            {"underfit", underfit},
            {"train_config", train_cfg},
            {"seeds", {{"seed", train.seed}, {"data_seed", train.data_seed}, {"val_seed", train.val_seed}}},
            {"model_manifest_hash", manifest_hash}};
  }
};

/// Budget and evaluation knobs for a protocol run; `train` supplies the model
/// and optimizer settings, its data/tasks fields are replaced by the split.
struct RunOptions {
  harness::TrainConfig train;
  std::size_t target_mem_slots = 0;  // 0 keeps train.mem_slots
  std::filesystem::path out_dir;     // optional checkpoints/metrics
};

namespace detail {

inline minicog::Corpus split_corpus(const EpisodeConfig& cfg, const TaskFamily& tasks, std::size_t count,
                                    std::uint64_t seed, const std::string& tag) {
  return minicog::generate_corpus(cfg, tasks, count, derive_seed(seed, hash_string(tag)));
}

}  // namespace detail

/// Train on the source, evaluate on the target immediately (zero-shot) and,
/// for fine-tuning, again after training on target data, plus once more on
/// the source to measure forgetting.
inline TransferReport run_protocol(TransferSplit split, const RunOptions& opt) {
  split.protocol = split.protocol.normalized();
  TransferReport rep;
  rep.split = split;
  rep.train = opt.train;
  rep.train.data = split.source;
  rep.train.tasks = split.source_tasks.describe();
  rep.train.validate();
  rep.target_mem_slots = opt.target_mem_slots ? opt.target_mem_slots : opt.train.mem_slots;
  const auto& tc = rep.train;

  auto source_val = detail::split_corpus(split.source, split.source_tasks, tc.eval_size, tc.val_seed, "source/val");
  auto source_test = detail::split_corpus(split.source, split.source_tasks, tc.eval_size, tc.val_seed, "source/test");
  auto target_test = detail::split_corpus(split.target, split.target_tasks, tc.eval_size, tc.val_seed, "target/test");

  harness::Trainer trainer(tc);
  auto source = harness::generated_source(split.source_tasks, split.source);
  auto res = trainer.run(tc.max_steps, source, &source_val, opt.out_dir.empty() ? opt.out_dir : opt.out_dir / "source",
                         "source");
  rep.underfit = res.underfit;
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx",
                static_cast<unsigned long long>(trainer.model().checkpoint(harness::checkpoint_extras(tc)).manifest_hash()));
  rep.manifest_hash = hex;

  auto eval = [&](const minicog::Corpus& c, std::size_t slots, const std::string& name) {
    auto ev = harness::evaluate(trainer.model(), c, slots, name, tc.deterministic ? 1 : tc.threads);
    rep.evaluations.push_back({name, ev.row});
    return ev;
  };
  eval(source_test, tc.mem_slots, "source_test");
  auto zs = eval(target_test, rep.target_mem_slots, "target_zero_shot");

  rep.labels = label_space_report(source_test, target_test);
  std::tie(rep.disjoint_zero_shot_accuracy, rep.disjoint_frames) = accuracy_on_labels(zs, target_test, rep.labels.disjoint);

  if (split.protocol.mode == Protocol::Mode::finetune) {
    auto ft_corpus = std::make_shared<minicog::Corpus>(detail::split_corpus(
        split.target, split.target_tasks, split.protocol.samples, tc.data_seed, "target/finetune"));
    harness::TrainConfig ft = tc;
    ft.data = split.target;
    ft.tasks = split.target_tasks.describe();
    ft.mem_slots = rep.target_mem_slots;
    const std::size_t per_epoch = (split.protocol.samples + ft.batch - 1) / ft.batch;
    harness::Trainer tuner(ft);
    tuner.model().load(trainer.model().checkpoint());
    tuner.run(per_epoch * split.protocol.epochs, harness::corpus_source(ft_corpus, ft.batch), nullptr,
              opt.out_dir.empty() ? opt.out_dir : opt.out_dir / "finetune", "finetune");
    auto run_eval = [&](const minicog::Corpus& c, std::size_t slots, const std::string& name) {
      auto ev = harness::evaluate(tuner.model(), c, slots, name, tc.deterministic ? 1 : tc.threads);
      rep.evaluations.push_back({name, ev.row});
    };
    run_eval(source_test, tc.mem_slots, "source_after_finetune");
    run_eval(target_test, rep.target_mem_slots, "target_finetuned");
  }
  return rep;
}

// ---- CLI-level configuration ------------------------------------------------

/// Transfer keys layered on top of a training config file.
struct TransferConfig {
  harness::TrainConfig train;
  std::string source_family = "A";
  std::string target_family = "B";
  std::size_t target_frames = 8;
  std::size_t target_distractors = 4;
  std::size_t target_height = 6;
  std::size_t target_width = 6;
  std::size_t target_mem_slots = 8;
  std::string reasoning_mode = "all_but_t";
  std::string reasoning_target = "Compare";
  std::size_t finetune_samples = 5000;
  std::size_t finetune_epochs = 1;
  std::string report = "transfer_report.json";

  static TransferConfig from_pairs(const std::vector<std::pair<std::string, std::string>>& kv,
                                   const std::filesystem::path& base_dir = {}) {
    TransferConfig c;
    std::vector<std::pair<std::string, std::string>> rest;
    for (const auto& [k, v] : kv) {
      auto num = [&] { return harness::detail::parse_uint(k, v); };
      if (k == "source_family") c.source_family = v;
      else if (k == "target_family") c.target_family = v;
      else if (k == "target_frames") c.target_frames = num();
      else if (k == "target_distractors") c.target_distractors = num();
      else if (k == "target_height") c.target_height = num();
      else if (k == "target_width") c.target_width = num();
      else if (k == "target_mem_slots") c.target_mem_slots = num();
      else if (k == "reasoning_mode") c.reasoning_mode = v;
      else if (k == "reasoning_target") c.reasoning_target = v;
      else if (k == "finetune_samples") c.finetune_samples = num();
      else if (k == "finetune_epochs") c.finetune_epochs = num();
      else if (k == "report") c.report = v;
      else rest.push_back({k, v});
    }
    c.train = harness::config_from_pairs(rest, base_dir);
    return c;
  }

  static TransferConfig load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw InputError("cannot read config " + path.string());
    return from_pairs(harness::parse_key_values(is), path.parent_path());
  }

  TransferSplit split(SplitKind kind, Protocol protocol) const {
    const auto groups = train.groups();
    switch (kind) {
      case SplitKind::feature:
        return build_feature_split(train.data, source_family, target_family, train.family(), protocol);
      case SplitKind::temporal: {
        auto tgt = train.data;
        tgt.frames = target_frames;
        tgt.history = target_frames - 1;
        tgt.distractors = target_distractors;
        tgt.height = target_height;
        tgt.width = target_width;
        return build_temporal_split(train.data, tgt, train.family(), protocol);
      }
      case SplitKind::reasoning:
        return build_reasoning_split(train.data, parse_reasoning_mode(reasoning_mode), reasoning_target, groups,
                                     protocol);
    }
    throw ValidationError("unknown split kind");
  }
};

}  // namespace samnet::transfer
