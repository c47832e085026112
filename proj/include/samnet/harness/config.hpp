#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "samnet/core/errors.hpp"
#include "samnet/minicog/generator.hpp"
#include "samnet/minicog/tasks.hpp"
#include "samnet/model/samnet_model.hpp"

namespace samnet::harness {

/// Everything a training run depends on. Read from `key = value` files; every
/// key is written back verbatim into checkpoints and reports.
struct TrainConfig {
  // model
  std::size_t d = 128;
  std::size_t steps = 8;
  std::size_t mem_slots = 8;
  std::size_t conv_hidden = 0;
  std::string gate_mode = "softmax";
  bool memory_writes = true;
  bool image_mode = false;
  std::string embedding = "learned";
  bool frame_skip = true;
  // optimizer
  double lr = 1e-4;
  std::size_t batch = 32;
  std::size_t max_steps = 1000;
  double clip_norm = 10.0;
  std::size_t eval_every = 100;
  std::size_t eval_size = 2000;
  // data
  minicog::EpisodeConfig data;
  std::string tasks = "Basic";
  std::string group_table;  // optional path; built-in table when empty
  // seeds
  std::uint64_t seed = 1;
  std::uint64_t data_seed = 2;
  std::uint64_t val_seed = 3;
  // execution
  std::size_t threads = 1;
  bool deterministic = false;
  std::string out_dir = "run";
  std::string preset = "none";

  std::vector<std::pair<std::string, std::string>> items() const {
    auto b = [](bool v) { return std::string(v ? "true" : "false"); };
    auto num = [](double v) {
      std::ostringstream os;
      os.precision(17);
      os << v;
      return os.str();
    };
    return {{"preset", preset},
            {"d", std::to_string(d)},
            {"steps", std::to_string(steps)},
            {"mem_slots", std::to_string(mem_slots)},
            {"conv_hidden", std::to_string(conv_hidden)},
            {"gate_mode", gate_mode},
            {"memory_writes", b(memory_writes)},
            {"image_mode", b(image_mode)},
            {"embedding", embedding},
            {"frame_skip", b(frame_skip)},
            {"lr", num(lr)},
            {"batch", std::to_string(batch)},
            {"max_steps", std::to_string(max_steps)},
            {"clip_norm", num(clip_norm)},
            {"eval_every", std::to_string(eval_every)},
            {"eval_size", std::to_string(eval_size)},
            {"frames", std::to_string(data.frames)},
            {"history", std::to_string(data.history)},
            {"distractors", std::to_string(data.distractors)},
            {"max_targets", std::to_string(data.max_targets)},
            {"height", std::to_string(data.height)},
            {"width", std::to_string(data.width)},
            {"colors", std::to_string(data.inventory.num_colors)},
            {"shapes", std::to_string(data.inventory.num_shapes)},
            {"family", data.family},
            {"tasks", tasks},
            {"group_table", group_table},
            {"seed", std::to_string(seed)},
            {"data_seed", std::to_string(data_seed)},
            {"val_seed", std::to_string(val_seed)},
            {"threads", std::to_string(threads)},
            {"deterministic", b(deterministic)},
            {"out_dir", out_dir}};
  }

  void set(const std::string& key, const std::string& value);

  void validate() const {
    auto pos = [](std::size_t v, const char* k) {
      if (v == 0) throw InputError(std::string("config: ") + k + " must be positive");
    };
    pos(d, "d");
    pos(steps, "steps");
    pos(mem_slots, "mem_slots");
    pos(batch, "batch");
    pos(eval_every, "eval_every");
    pos(eval_size, "eval_size");
    pos(threads, "threads");
    if (!(lr > 0)) throw InputError("config: lr must be positive");
    if (!(clip_norm > 0)) throw InputError("config: clip_norm must be positive");
    if (gate_mode != "softmax" && gate_mode != "sigmoid") throw InputError("config: gate_mode is softmax or sigmoid");
    if (embedding != "learned" && embedding != "onehot") throw InputError("config: embedding is learned or onehot");
    data.validate();
  }

  minicog::GroupTable groups() const {
    return group_table.empty() ? minicog::GroupTable::defaults() : minicog::GroupTable::load(group_table);
  }

  minicog::TaskFamily family() const { return minicog::TaskFamily::parse(tasks, groups()); }

  ModelConfig model_config() const {
    ModelConfig m;
    const auto& inv = data.inventory;
    m.d = d;
    m.steps = steps;
    m.mem_slots = mem_slots;
    m.vocab_size = minicog::vocabulary_tokens(inv).size();
    m.num_answers = minicog::AnswerSpace(inv).size();
    m.in_channels = 1 + inv.num_colors + inv.num_shapes;
    m.conv_hidden = conv_hidden;
    m.gate_mode = gate_mode == "sigmoid" ? GateMode::sigmoid : GateMode::softmax;
    m.memory_writes = memory_writes;
    m.image_mode = image_mode;
    m.embedding = embedding == "onehot" ? EmbeddingMode::onehot : EmbeddingMode::learned;
    m.frame_skip = frame_skip;
    m.init_seed = seed;
    return m;
  }
};

/// Named desk-scale presets.
inline TrainConfig preset(const std::string& name) {
  TrainConfig c;
  c.preset = name;
  if (name == "none" || name == "default") {
    c.preset = "none";
    return c;
  }
  if (name != "toy-canonical" && name != "toy-hard") throw InputError("unknown preset '" + name + "'");
  c.d = 64;
  c.steps = 4;
  c.mem_slots = 4;
  c.lr = 1e-3;
  c.batch = 8;
  c.max_steps = 6250;
  c.clip_norm = 1.0;
  c.eval_every = 250;
  c.eval_size = 1000;
  c.data.frames = 4;
  c.data.history = 3;
  c.data.distractors = 1;
  c.data.height = 5;
  c.data.width = 5;
  if (name == "toy-hard") {
    c.data.frames = 8;
    c.data.history = 7;
    c.data.distractors = 4;
    c.data.height = 6;
    c.data.width = 6;
  }
  return c;
}

namespace detail {

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw InputError("config: " + key + " expects a boolean, got '" + v + "'");
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  unsigned long long x = 0;
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    x = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw InputError("config: " + key + " expects an unsigned integer, got '" + v + "'");
  return x;
}

inline double parse_real(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw InputError("config: " + key + " expects a number, got '" + v + "'");
  return x;
}

}  // namespace detail

inline void TrainConfig::set(const std::string& key, const std::string& v) {
  using detail::parse_bool;
  using detail::parse_real;
  using detail::parse_uint;
  if (key == "d") d = parse_uint(key, v);
  else if (key == "steps") steps = parse_uint(key, v);
  else if (key == "mem_slots") mem_slots = parse_uint(key, v);
  else if (key == "conv_hidden") conv_hidden = parse_uint(key, v);
  else if (key == "gate_mode") gate_mode = v;
  else if (key == "memory_writes") memory_writes = parse_bool(key, v);
  else if (key == "image_mode") image_mode = parse_bool(key, v);
  else if (key == "embedding") embedding = v;
  else if (key == "frame_skip") frame_skip = parse_bool(key, v);
  else if (key == "lr") lr = parse_real(key, v);
  else if (key == "batch") batch = parse_uint(key, v);
  else if (key == "max_steps") max_steps = parse_uint(key, v);
  else if (key == "clip_norm") clip_norm = parse_real(key, v);
  else if (key == "eval_every") eval_every = parse_uint(key, v);
  else if (key == "eval_size") eval_size = parse_uint(key, v);
  else if (key == "frames") data.frames = parse_uint(key, v);
  else if (key == "history") data.history = parse_uint(key, v);
  else if (key == "distractors") data.distractors = parse_uint(key, v);
  else if (key == "max_targets") data.max_targets = parse_uint(key, v);
  else if (key == "height") data.height = parse_uint(key, v);
  else if (key == "width") data.width = parse_uint(key, v);
  else if (key == "colors") data.inventory.num_colors = parse_uint(key, v);
  else if (key == "shapes") data.inventory.num_shapes = parse_uint(key, v);
  else if (key == "family") data.family = v;
  else if (key == "tasks") tasks = v;
  else if (key == "group_table") group_table = v;
  else if (key == "seed") seed = parse_uint(key, v);
  else if (key == "data_seed") data_seed = parse_uint(key, v);
  else if (key == "val_seed") val_seed = parse_uint(key, v);
  else if (key == "threads") threads = parse_uint(key, v);
  else if (key == "deterministic") deterministic = parse_bool(key, v);
  else if (key == "out_dir") out_dir = v;
  else throw InputError("config: unknown key '" + key + "'");
}

/// Parsed `key = value` lines, in file order.
inline std::vector<std::pair<std::string, std::string>> parse_key_values(std::istream& is) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t lineno = 0;
  auto trim = [](const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  for (std::string line; std::getline(is, line);) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw InputError("config line " + std::to_string(lineno) + ": expected key = value");
    out.push_back({trim(line.substr(0, eq)), trim(line.substr(eq + 1))});
  }
  return out;
}

/// A `preset` key (if any) is applied first; remaining keys override it.
/// Relative `group_table` paths resolve against `base_dir`.
inline TrainConfig config_from_pairs(const std::vector<std::pair<std::string, std::string>>& kv,
                                     const std::filesystem::path& base_dir = {}) {
  TrainConfig c;
  for (const auto& [k, v] : kv)
    if (k == "preset") c = preset(v);
  for (const auto& [k, v] : kv) {
    if (k == "preset") continue;
    c.set(k, v);
  }
  if (!c.group_table.empty() && !base_dir.empty() && std::filesystem::path(c.group_table).is_relative()) {
    c.group_table = (base_dir / c.group_table).string();
  }
  c.validate();
  return c;
}

inline TrainConfig parse_config(const std::string& text) {
  std::istringstream is(text);
  return config_from_pairs(parse_key_values(is));
}

inline TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot read config " + path.string());
  return config_from_pairs(parse_key_values(is), path.parent_path());
}

}  // namespace samnet::harness
