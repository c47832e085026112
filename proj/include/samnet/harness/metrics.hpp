#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>

#include "samnet/core/errors.hpp"
#include "samnet/minicog/tasks.hpp"

namespace samnet::harness {

struct MetricsRow {
  std::size_t step = 0;
  std::string split;
  double loss = 0;
  double accuracy = 0;
  double seconds = 0;
  std::map<minicog::TaskClass, double> per_class;  // only classes present
  std::size_t frames = 0;
};

inline std::string fmt(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string csv_header() {
  std::string s = "step,split,loss,accuracy,seconds";
  for (auto t : minicog::all_task_classes()) s += ",acc_" + minicog::task_name(t);
  return s;
}

inline std::string csv_line(const MetricsRow& r) {
  std::string s = std::to_string(r.step) + "," + r.split + "," + fmt(r.loss) + "," + fmt(r.accuracy) + "," +
                  fmt(r.seconds, 3);
  for (auto t : minicog::all_task_classes()) {
    s += ",";
    if (auto it = r.per_class.find(t); it != r.per_class.end()) s += fmt(it->second);
  }
  return s;
}

/// Append-only CSV; steps must not decrease.
class MetricsWriter {
 public:
  MetricsWriter() = default;
  explicit MetricsWriter(const std::filesystem::path& path) : path_(path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot write metrics " + path.string());
    os << csv_header() << '\n';
  }

  void append(const MetricsRow& r) {
    if (path_.empty()) return;
    if (last_step_ && r.step < *last_step_) throw InputError("metrics rows must be monotone in step");
    last_step_ = r.step;
    std::ofstream os(path_, std::ios::binary | std::ios::app);
    os << csv_line(r) << '\n';
  }

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::optional<std::size_t> last_step_;
};

}  // namespace samnet::harness
