#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "samnet/core/errors.hpp"
#include "samnet/core/params.hpp"
#include "samnet/core/rng.hpp"

// On-disk layout:
//   SAMCKPT v1
//   hyper <key> <value>            (zero or more, insertion order)
//   param <name> <AxBx..> <offset> (byte offset into the data block)
//   data <byte count>
//   <little-endian IEEE-754 binary32 values, row-major, manifest order>
namespace samnet::nd {

inline constexpr const char* kCheckpointMagic = "SAMCKPT v1";

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::size_t offset = 0;
};

struct Checkpoint {
  std::vector<std::pair<std::string, std::string>> hyper;
  std::vector<CheckpointEntry> entries;
  std::vector<float> values;

  const std::string* find_hyper(const std::string& key) const {
    for (const auto& [k, v] : hyper)
      if (k == key) return &v;
    return nullptr;
  }

  const std::string& hyper_value(const std::string& key) const {
    if (auto* v = find_hyper(key)) return *v;
    throw FormatError("checkpoint is missing hyperparameter '" + key + "'");
  }

  /// Manifest section as written to disk (everything before the data block).
  std::string manifest() const {
    std::ostringstream os;
    os << kCheckpointMagic << '\n';
    for (const auto& [k, v] : hyper) os << "hyper " << k << ' ' << v << '\n';
    for (const auto& e : entries) os << "param " << e.name << ' ' << to_string(e.shape) << ' ' << e.offset << '\n';
    os << "data " << values.size() * 4 << '\n';
    return os.str();
  }

  /// Parameter names and shapes only; equal for any two models with the same layout.
  std::string layout() const {
    std::ostringstream os;
    for (const auto& e : entries) os << e.name << ' ' << to_string(e.shape) << '\n';
    return os.str();
  }

  std::uint64_t manifest_hash() const { return hash_string(manifest()); }
};

template <class T>
Checkpoint make_checkpoint(const ParamStore<T>& store, std::vector<std::pair<std::string, std::string>> hyper) {
  Checkpoint ck;
  ck.hyper = std::move(hyper);
  for (const auto& p : store) {
    ck.entries.push_back({p.name, p.value.shape, ck.values.size() * 4});
    for (auto v : p.value.data) ck.values.push_back(static_cast<float>(v));
  }
  return ck;
}

template <class T>
std::string layout_of(const ParamStore<T>& store) {
  std::ostringstream os;
  for (const auto& p : store) os << p.name << ' ' << to_string(p.value.shape) << '\n';
  return os.str();
}

inline std::string serialize(const Checkpoint& ck) {
  std::string out = ck.manifest();
  out.reserve(out.size() + ck.values.size() * 4);
  for (float v : ck.values) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
  }
  return out;
}

/// Writes to a sibling temporary file and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot open " + tmp.string() + " for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw FormatError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  write_file_atomic(path, serialize(ck));
}

inline Shape parse_shape(const std::string& s) {
  Shape shape;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    if (part.empty()) throw FormatError("bad shape '" + s + "'");
    shape.push_back(std::stoull(part));
  }
  return shape;
}

inline Checkpoint parse_checkpoint(const std::string& bytes) {
  Checkpoint ck;
  std::size_t pos = 0;
  auto next_line = [&]() {
    const auto end = bytes.find('\n', pos);
    if (end == std::string::npos) throw FormatError("truncated checkpoint manifest");
    std::string line = bytes.substr(pos, end - pos);
    pos = end + 1;
    return line;
  };
  if (next_line() != kCheckpointMagic) throw FormatError("not a SAMCKPT v1 checkpoint");
  std::size_t data_bytes = 0;
  for (;;) {
    const std::string line = next_line();
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "hyper") {
      std::string key, value;
      ls >> key;
      std::getline(ls, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      ck.hyper.emplace_back(key, value);
    } else if (tag == "param") {
      std::string name, shape;
      std::size_t offset = 0;
      if (!(ls >> name >> shape >> offset)) throw FormatError("bad param line: " + line);
      ck.entries.push_back({name, parse_shape(shape), offset});
    } else if (tag == "data") {
      if (!(ls >> data_bytes)) throw FormatError("bad data line");
      break;
    } else {
      throw FormatError("unexpected manifest line: " + line);
    }
  }
  if (bytes.size() - pos != data_bytes || data_bytes % 4 != 0) throw FormatError("checkpoint data block has wrong size");
  ck.values.resize(data_bytes / 4);
  for (std::size_t i = 0; i < ck.values.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + 4 * i + b])) << (8 * b);
    ck.values[i] = std::bit_cast<float>(bits);
  }
  std::size_t expected = 0;
  for (const auto& e : ck.entries) {
    if (e.offset != expected) throw FormatError("parameter '" + e.name + "' has inconsistent offset");
    expected += numel(e.shape) * 4;
  }
  if (expected != data_bytes) throw FormatError("manifest does not cover the data block");
  return ck;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(read_file(path)); }

/// Copies checkpoint values into a store with the same layout. Any missing,
/// unexpected or reshaped parameter is reported in one VersionError.
template <class T>
void load_into(const Checkpoint& ck, ParamStore<T>& store) {
  std::map<std::string, const CheckpointEntry*> by_name;
  for (const auto& e : ck.entries) by_name[e.name] = &e;
  std::vector<std::string> missing, unexpected, reshaped;
  for (const auto& p : store) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) {
      missing.push_back(p.name);
    } else if (it->second->shape != p.value.shape) {
      reshaped.push_back(p.name);
    }
  }
  for (const auto& e : ck.entries)
    if (!store.find(e.name)) unexpected.push_back(e.name);
  if (!missing.empty() || !unexpected.empty() || !reshaped.empty()) {
    auto join = [](const std::vector<std::string>& v) {
      std::string s;
      for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
      return s.empty() ? std::string("none") : s;
    };
    throw VersionError("checkpoint manifest mismatch; missing: " + join(missing) + "; unexpected: " +
                       join(unexpected) + "; reshaped: " + join(reshaped));
  }
  for (auto& p : store) {
    const auto* e = by_name.at(p.name);
    const std::size_t base = e->offset / 4;
    for (std::size_t i = 0; i < p.value.size(); ++i) p.value.data[i] = static_cast<T>(ck.values[base + i]);
  }
}

}  // namespace samnet::nd
