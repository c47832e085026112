#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "samnet/core/errors.hpp"
#include "samnet/minicog/generator.hpp"
#include "samnet/model/encoders.hpp"

namespace samnet::minicog {

/// Line-delimited JSON: a header record, then one record per episode.
struct Corpus {
  EpisodeConfig config;
  TaskFamily family;
  std::uint64_t seed = 0;
  std::vector<Episode> episodes;
};

inline nlohmann::json episode_json(const Episode& ep, std::size_t index, const Inventory& inv) {
  using nlohmann::json;
  AnswerSpace space(inv);
  const auto sig = signature(ep.task);
  json colors = json::array(), shapes = json::array(), frames = json::array(), answers = json::array();
  for (std::size_t i = 0; i < sig.colors; ++i) colors.push_back(inv.color_name(ep.args.colors[i]));
  for (std::size_t i = 0; i < sig.shapes; ++i) shapes.push_back(inv.shape_name(ep.args.shapes[i]));
  for (const auto& f : ep.frames) {
    json objs = json::array();
    for (const auto& o : f.objects) objs.push_back({o.row, o.col, inv.color_name(o.color), inv.shape_name(o.shape)});
    frames.push_back(objs);
  }
  for (const auto& a : ep.answers) answers.push_back(space.name(a));
  json args = {{"colors", colors}, {"shapes", shapes}};
  if (sig.relation) args["relation"] = relation_name(ep.args.relation);
  std::string question;
  for (const auto& t : ep.question) question += (question.empty() ? "" : " ") + t;
  const auto tokens = Vocabulary(vocabulary_tokens(inv)).encode(ep.question).ids;
  return {{"index", index},       {"seed", ep.seed},   {"task", task_name(ep.task)},
          {"args", args},         {"program", program_json(*ep.program, inv)},
          {"question", question}, {"tokens", tokens},  {"frames", frames},
          {"answers", answers}};
}

inline Episode episode_from_json(const nlohmann::json& j, const EpisodeConfig& cfg) {
  const auto& inv = cfg.inventory;
  AnswerSpace space(inv);
  Episode ep;
  try {
    ep.seed = j.at("seed");
    ep.task = parse_task(j.at("task"));
    const auto& args = j.at("args");
    for (std::size_t i = 0; i < args.at("colors").size() && i < 4; ++i) ep.args.colors[i] = inv.color_id(args["colors"][i]);
    for (std::size_t i = 0; i < args.at("shapes").size() && i < 4; ++i) ep.args.shapes[i] = inv.shape_id(args["shapes"][i]);
    if (args.contains("relation")) ep.args.relation = parse_relation(args["relation"]);
    ep.program = program_from_json(j.at("program"), inv);
    check_program(*ep.program);
    ep.question = question_tokens(*ep.program, inv);
    for (const auto& f : j.at("frames")) {
      SceneGraph s{cfg.height, cfg.width, {}};
      for (const auto& o : f) {
        s.objects.push_back({o.at(0).get<std::size_t>(), o.at(1).get<std::size_t>(),
                             inv.color_id(o.at(2).get<std::string>()), inv.shape_id(o.at(3).get<std::string>())});
      }
      s.validate(inv, cfg.height * cfg.width);
      ep.frames.push_back(std::move(s));
    }
    for (const auto& a : j.at("answers")) ep.answers.push_back(space.parse(a.get<std::string>()));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed corpus record: ") + e.what());
  }
  if (ep.answers.size() != ep.frames.size()) throw FormatError("corpus record has one answer per frame");
  return ep;
}

inline nlohmann::json corpus_header(const Corpus& c) {
  return {{"format", "minicog-corpus"},
          {"generator", kGeneratorVersion},
          {"config", c.config.to_json()},
          {"family", c.family.describe()},
          {"seed", c.seed},
          {"count", c.episodes.size()}};
}

/// Generates `count` episodes with per-index derived seeds.
inline Corpus generate_corpus(const EpisodeConfig& cfg, const TaskFamily& family, std::size_t count,
                              std::uint64_t seed) {
  Corpus c{cfg, family, seed, {}};
  c.episodes.reserve(count);
  for (std::size_t i = 0; i < count; ++i) c.episodes.push_back(gen_episode(cfg, family, episode_seed(seed, i)));
  return c;
}

inline void write_corpus(const Corpus& c, std::ostream& os) {
  os << corpus_header(c).dump() << '\n';
  for (std::size_t i = 0; i < c.episodes.size(); ++i)
    os << episode_json(c.episodes[i], i, c.config.inventory).dump() << '\n';
}

inline void save_corpus(const Corpus& c, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot write corpus " + path.string());
  write_corpus(c, os);
}

inline Corpus read_corpus(std::istream& is, const GroupTable& groups = GroupTable::defaults()) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError("empty corpus file");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed corpus header: ") + e.what());
  }
  if (header.value("format", "") != "minicog-corpus") throw FormatError("not a minicog corpus");
  if (header.value("generator", "") != kGeneratorVersion) {
    throw VersionError("corpus generator '" + header.value("generator", "") + "' differs from " + kGeneratorVersion);
  }
  Corpus c;
  c.config = EpisodeConfig::from_json(header.at("config"));
  c.family = TaskFamily::parse(header.at("family").get<std::string>(), groups);
  c.seed = header.at("seed");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("malformed corpus record: ") + e.what());
    }
    c.episodes.push_back(episode_from_json(j, c.config));
  }
  return c;
}

inline Corpus load_corpus(const std::filesystem::path& path, const GroupTable& groups = GroupTable::defaults()) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot read corpus " + path.string());
  return read_corpus(is, groups);
}

}  // namespace samnet::minicog
