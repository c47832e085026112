#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "samnet/core/errors.hpp"
#include "samnet/core/rng.hpp"
#include "samnet/minicog/program.hpp"
#include "samnet/minicog/scene.hpp"
#include "samnet/minicog/tasks.hpp"

namespace samnet::minicog {

inline constexpr const char* kGeneratorVersion = "minicog-2";

struct EpisodeConfig {
  std::size_t frames = 4;
  std::size_t history = 3;
  std::size_t distractors = 1;
  std::size_t max_targets = 2;
  std::size_t height = 5;
  std::size_t width = 5;
  Inventory inventory;
  std::string family = "any";  // any | A | B

  std::size_t max_objects() const { return max_targets + distractors; }

  void validate() const {
    inventory.validate();
    if (frames < 1) throw InputError("episode needs at least one frame");
    if (history + 1 > frames) throw InputError("history horizon must be below the frame count");
    if (height * width == 0) throw InputError("grid must have at least one cell");
    if (max_targets < 1) throw InputError("max_targets must be positive");
    FeatureFamily::by_name(family, inventory);
  }

  FeatureFamily feature_family() const { return FeatureFamily::by_name(family, inventory); }

  nlohmann::json to_json() const {
    return {{"frames", frames},  {"history", history}, {"distractors", distractors},
            {"max_targets", max_targets}, {"height", height},   {"width", width},
            {"colors", inventory.num_colors}, {"shapes", inventory.num_shapes}, {"family", family}};
  }

  static EpisodeConfig from_json(const nlohmann::json& j) {
    EpisodeConfig c;
    c.frames = j.at("frames");
    c.history = j.at("history");
    c.distractors = j.at("distractors");
    c.max_targets = j.at("max_targets");
    c.height = j.at("height");
    c.width = j.at("width");
    c.inventory.num_colors = j.at("colors");
    c.inventory.num_shapes = j.at("shapes");
    c.family = j.at("family");
    return c;
  }

  bool operator==(const EpisodeConfig&) const = default;
};

struct Episode {
  std::uint64_t seed = 0;
  TaskClass task = TaskClass::Exist;
  TaskArgs args;
  NodePtr program;
  std::vector<std::string> question;
  std::vector<SceneGraph> frames;
  std::vector<Answer> answers;
};

namespace detail {

constexpr int kFrameAttempts = 40;
constexpr int kEpisodeRestarts = 20;

inline SceneGraph sample_frame(const EpisodeConfig& cfg, const FeatureFamily& fam, const std::vector<Template>& templates,
                               const std::vector<Object>& history_objects, Rng& rng) {
  const auto& inv = cfg.inventory;
  SceneGraph scene{cfg.height, cfg.width, {}};
  std::vector<std::size_t> cells(cfg.height * cfg.width);
  for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = i;
  rng.shuffle(std::span<std::size_t>(cells));
  std::size_t next_cell = 0;
  auto place = [&](std::size_t color, std::size_t shape) {
    const std::size_t cell = cells[next_cell++];
    scene.objects.push_back({cell / cfg.width, cell % cfg.width, color, shape});
  };

  std::vector<std::size_t> order(templates.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(std::span<std::size_t>(order));
  // Distractors and fillers avoid every constrained referent description.
  std::vector<std::pair<std::size_t, std::size_t>> pool;
  for (std::size_t c = 0; c < inv.num_colors; ++c) {
    for (std::size_t s = 0; s < inv.num_shapes; ++s) {
      if (!fam.allows(c, s)) continue;
      bool hit = false;
      for (const auto& t : templates) hit = hit || (t.constrained() && t.matches(c, s));
      if (!hit) pool.push_back({c, s});
    }
  }
  auto place_from_pool = [&] {
    if (pool.empty()) return;
    const auto& [c, s] = pool[rng.index(pool.size())];
    place(c, s);
  };

  // Each referent slot holds a matching object or a non-matching filler, so the
  // object count carries no information about the answer. Referents recur on
  // average every (history + 1) / 2 frames, so look-back scales with the horizon.
  const double p_referent = std::min(1.0, 2.0 / static_cast<double>(cfg.history + 1));
  std::size_t slots = 0;
  for (auto ti : order) {
    if (slots >= cfg.max_targets) break;
    ++slots;
    if (!rng.bernoulli(p_referent)) {
      place_from_pool();
      continue;
    }
    const auto& t = templates[ti];
    std::vector<Object> known = history_objects;
    known.insert(known.end(), scene.objects.begin(), scene.objects.end());
    std::optional<std::pair<std::size_t, std::size_t>> pick;
    for (int attempt = 0; attempt < 20 && !pick; ++attempt) {
      auto free_attr = [&](bool color) {
        if (!known.empty() && rng.bernoulli(0.5)) {
          const auto& o = known[rng.index(known.size())];
          return color ? o.color : o.shape;
        }
        return rng.index(color ? inv.num_colors : inv.num_shapes);
      };
      std::size_t c = t.color ? *t.color : free_attr(true);
      std::size_t s = t.shape ? *t.shape : free_attr(false);
      if (fam.allows(c, s)) pick = {c, s};
    }
    if (pick) {
      place(pick->first, pick->second);
    } else {
      place_from_pool();
    }
  }
  for (std::size_t i = 0; i < cfg.distractors; ++i) place_from_pool();
  return scene;
}

}  // namespace detail

/// Deterministic in (cfg, family, seed).
inline Episode gen_episode(const EpisodeConfig& cfg, const TaskFamily& family, std::uint64_t seed) {
  cfg.validate();
  family.validate();
  if (cfg.max_objects() > cfg.height * cfg.width) {
    throw GenerationError("grid " + std::to_string(cfg.height) + "x" + std::to_string(cfg.width) + " has " +
                          std::to_string(cfg.height * cfg.width) + " cells but frames need up to " +
                          std::to_string(cfg.max_objects()) + " objects (targets + distractors)");
  }
  const auto fam = cfg.feature_family();
  Rng rng(seed);
  Episode ep;
  ep.seed = seed;
  ep.task = family.sample(rng);
  ep.args = sample_args(ep.task, rng, cfg.inventory, fam);
  ep.program = build_program(ep.task, ep.args);
  ep.question = question_tokens(*ep.program, cfg.inventory);
  std::vector<Template> templates;
  collect_templates(*ep.program, templates);
  const bool boolean = boolean_task(ep.task);
  const std::size_t full = cfg.frames - 1;

  for (int restart = 0; restart < detail::kEpisodeRestarts; ++restart) {
    std::vector<SceneGraph> frames;
    std::vector<Object> seen;
    bool ok = true;
    for (std::size_t k = 0; k < cfg.frames && ok; ++k) {
      const bool want = rng.bernoulli(boolean ? 0.5 : 0.85);
      std::optional<SceneGraph> chosen, fallback;
      for (int attempt = 0; attempt < detail::kFrameAttempts && !chosen; ++attempt) {
        frames.push_back(detail::sample_frame(cfg, fam, templates, seen, rng));
        OracleFlags fh, ff;
        auto a_h = oracle_frame(*ep.program, frames, k, cfg.history, &fh);
        auto a_full = oracle_frame(*ep.program, frames, k, full, &ff);
        SceneGraph cand = std::move(frames.back());
        frames.pop_back();
        if (!fh.clean() || !ff.clean() || !(a_h == a_full)) continue;
        const bool hit = boolean ? a_h == Answer::boolean(want) : (a_h.kind != Answer::Kind::invalid) == want;
        if (hit) {
          chosen = std::move(cand);
        } else if (!fallback) {
          fallback = std::move(cand);
        }
      }
      if (!chosen) chosen = std::move(fallback);
      if (!chosen) {
        ok = false;
        break;
      }
      seen.insert(seen.end(), chosen->objects.begin(), chosen->objects.end());
      frames.push_back(std::move(*chosen));
    }
    if (!ok) continue;
    ep.frames = std::move(frames);
    ep.answers = oracle_answer(*ep.program, ep.frames, cfg.history);
    return ep;
  }
  throw GenerationError("no unambiguous scene sequence for task " + task_name(ep.task) + " on a " +
                        std::to_string(cfg.height) + "x" + std::to_string(cfg.width) + " grid with " +
                        std::to_string(cfg.distractors) + " distractors after " +
                        std::to_string(detail::kEpisodeRestarts) + " restarts");
}

/// Episode i of a corpus generated from `seed`.
inline std::uint64_t episode_seed(std::uint64_t seed, std::size_t index) { return derive_seed(seed, index); }

}  // namespace samnet::minicog
