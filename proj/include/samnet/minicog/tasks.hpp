#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "samnet/core/errors.hpp"
#include "samnet/core/rng.hpp"
#include "samnet/minicog/program.hpp"

namespace samnet::minicog {

enum class TaskClass {
  Exist,
  ExistColor,
  ExistShape,
  GetColor,
  GetShape,
  SimpleCompareColor,
  SimpleCompareShape,
  AndSimpleCompareColor,
  AndSimpleCompareShape,
  CompareColor,
  CompareShape,
  AndCompareColor,
  AndCompareShape,
  ExistColorOf,
  ExistShapeOf,
  ExistSpace,
  ExistColorSpace,
  ExistShapeSpace,
  GetColorSpace,
  GetShapeSpace,
  ExistLastColorSameShape,
  ExistLastShapeSameColor,
  ExistLastObjectSameObject,
};

inline constexpr std::size_t kNumTaskClasses = 23;

inline constexpr std::array<const char*, kNumTaskClasses> kTaskNames = {
    "Exist",
    "ExistColor",
    "ExistShape",
    "GetColor",
    "GetShape",
    "SimpleCompareColor",
    "SimpleCompareShape",
    "AndSimpleCompareColor",
    "AndSimpleCompareShape",
    "CompareColor",
    "CompareShape",
    "AndCompareColor",
    "AndCompareShape",
    "ExistColorOf",
    "ExistShapeOf",
    "ExistSpace",
    "ExistColorSpace",
    "ExistShapeSpace",
    "GetColorSpace",
    "GetShapeSpace",
    "ExistLastColorSameShape",
    "ExistLastShapeSameColor",
    "ExistLastObjectSameObject",
};

inline std::vector<TaskClass> all_task_classes() {
  std::vector<TaskClass> v;
  for (std::size_t i = 0; i < kNumTaskClasses; ++i) v.push_back(static_cast<TaskClass>(i));
  return v;
}

inline std::string task_name(TaskClass t) { return kTaskNames.at(static_cast<std::size_t>(t)); }

inline TaskClass parse_task(const std::string& s) {
  for (std::size_t i = 0; i < kNumTaskClasses; ++i)
    if (s == kTaskNames[i]) return static_cast<TaskClass>(i);
  throw ValidationError("unknown task class '" + s + "'");
}

/// Argument slots used by a task class.
struct TaskSignature {
  std::size_t colors = 0;
  std::size_t shapes = 0;
  bool relation = false;
};

inline TaskSignature signature(TaskClass t) {
  using T = TaskClass;
  switch (t) {
    case T::Exist: return {1, 1, false};
    case T::ExistColor: return {1, 0, false};
    case T::ExistShape: return {0, 1, false};
    case T::GetColor: return {0, 1, false};
    case T::GetShape: return {1, 0, false};
    case T::SimpleCompareColor: return {1, 1, false};
    case T::SimpleCompareShape: return {1, 1, false};
    case T::AndSimpleCompareColor: return {2, 2, false};
    case T::AndSimpleCompareShape: return {2, 2, false};
    case T::CompareColor: return {0, 2, false};
    case T::CompareShape: return {2, 0, false};
    case T::AndCompareColor: return {0, 4, false};
    case T::AndCompareShape: return {4, 0, false};
    case T::ExistColorOf: return {0, 2, false};
    case T::ExistShapeOf: return {2, 0, false};
    case T::ExistSpace: return {2, 2, true};
    case T::ExistColorSpace: return {1, 1, true};
    case T::ExistShapeSpace: return {1, 1, true};
    case T::GetColorSpace: return {1, 1, true};
    case T::GetShapeSpace: return {1, 1, true};
    case T::ExistLastColorSameShape: return {0, 1, false};
    case T::ExistLastShapeSameColor: return {1, 0, false};
    case T::ExistLastObjectSameObject: return {0, 1, false};
  }
  return {};
}

/// True when the program answers with true/false.
inline bool boolean_task(TaskClass t) {
  return t != TaskClass::GetColor && t != TaskClass::GetShape && t != TaskClass::GetColorSpace &&
         t != TaskClass::GetShapeSpace;
}

struct TaskArgs {
  std::array<std::size_t, 4> colors{};
  std::array<std::size_t, 4> shapes{};
  Relation relation = Relation::left;
  bool operator==(const TaskArgs&) const = default;
};

/// Extra well-formedness constraints on arguments beyond their ranges.
inline bool args_valid(TaskClass t, const TaskArgs& a, const Inventory& inv) {
  auto sig = signature(t);
  for (std::size_t i = 0; i < sig.colors; ++i)
    if (a.colors[i] >= inv.num_colors) return false;
  for (std::size_t i = 0; i < sig.shapes; ++i)
    if (a.shapes[i] >= inv.num_shapes) return false;
  using T = TaskClass;
  switch (t) {
    case T::CompareColor: return a.shapes[0] != a.shapes[1];
    case T::CompareShape: return a.colors[0] != a.colors[1];
    case T::AndCompareColor: return a.shapes[0] != a.shapes[1] && a.shapes[2] != a.shapes[3];
    case T::AndCompareShape: return a.colors[0] != a.colors[1] && a.colors[2] != a.colors[3];
    case T::ExistColorOf: return a.shapes[0] != a.shapes[1];
    case T::ExistShapeOf: return a.colors[0] != a.colors[1];
    case T::ExistSpace: return a.colors[0] != a.colors[1] || a.shapes[0] != a.shapes[1];
    default: return true;
  }
}

/// Program of a task class with concrete arguments.
inline NodePtr build_program(TaskClass t, const TaskArgs& a) {
  using T = TaskClass;
  const auto& c = a.colors;
  const auto& s = a.shapes;
  auto latest_shape = [](std::size_t sh) { return select(any_attr(), const_attr(sh), When::latest); };
  auto latest_color = [](std::size_t co) { return select(const_attr(co), any_attr(), When::latest); };
  auto color_of = [&](std::size_t sh) { return get_color(latest_shape(sh)); };
  auto shape_of = [&](std::size_t co) { return get_shape(latest_color(co)); };
  switch (t) {
    case T::Exist: return exist(select(const_attr(c[0]), const_attr(s[0]), When::now));
    case T::ExistColor: return exist(select(const_attr(c[0]), any_attr(), When::now));
    case T::ExistShape: return exist(select(any_attr(), const_attr(s[0]), When::now));
    case T::GetColor: return color_of(s[0]);
    case T::GetShape: return shape_of(c[0]);
    case T::SimpleCompareColor: return equal(color_of(s[0]), color_const(c[0]));
    case T::SimpleCompareShape: return equal(shape_of(c[0]), shape_const(s[0]));
    case T::AndSimpleCompareColor:
      return both(equal(color_of(s[0]), color_const(c[0])), equal(color_of(s[1]), color_const(c[1])));
    case T::AndSimpleCompareShape:
      return both(equal(shape_of(c[0]), shape_const(s[0])), equal(shape_of(c[1]), shape_const(s[1])));
    case T::CompareColor: return equal(color_of(s[0]), color_of(s[1]));
    case T::CompareShape: return equal(shape_of(c[0]), shape_of(c[1]));
    case T::AndCompareColor:
      return both(equal(color_of(s[0]), color_of(s[1])), equal(color_of(s[2]), color_of(s[3])));
    case T::AndCompareShape:
      return both(equal(shape_of(c[0]), shape_of(c[1])), equal(shape_of(c[2]), shape_of(c[3])));
    case T::ExistColorOf: return exist(select(dynamic_attr(color_of(s[0])), const_attr(s[1]), When::now));
    case T::ExistShapeOf: return exist(select(const_attr(c[1]), dynamic_attr(shape_of(c[0])), When::now));
    case T::ExistSpace:
      return exist(select(const_attr(c[0]), const_attr(s[0]), When::now,
                          Region{a.relation, select(const_attr(c[1]), const_attr(s[1]), When::latest)}));
    case T::ExistColorSpace:
      return exist(select(const_attr(c[0]), any_attr(), When::now, Region{a.relation, latest_shape(s[0])}));
    case T::ExistShapeSpace:
      return exist(select(any_attr(), const_attr(s[0]), When::now, Region{a.relation, latest_color(c[0])}));
    case T::GetColorSpace:
      return get_color(select(any_attr(), const_attr(s[0]), When::now, Region{a.relation, latest_color(c[0])}));
    case T::GetShapeSpace:
      return get_shape(select(const_attr(c[0]), any_attr(), When::now, Region{a.relation, latest_shape(s[0])}));
    case T::ExistLastColorSameShape:
      return exist(select(dynamic_attr(get_color(select(any_attr(), const_attr(s[0]), When::last))), any_attr(),
                          When::now));
    case T::ExistLastShapeSameColor:
      return exist(select(any_attr(), dynamic_attr(get_shape(select(const_attr(c[0]), any_attr(), When::last))),
                          When::now));
    case T::ExistLastObjectSameObject:
      return exist(select(dynamic_attr(get_color(select(any_attr(), const_attr(s[0]), When::last))),
                          const_attr(s[0]), When::now));
  }
  throw InputError("unknown task class");
}

/// Samples well-formed arguments. Constant (color, shape) pairs that name a
/// single referent are kept legal under `family`.
inline TaskArgs sample_args(TaskClass t, Rng& rng, const Inventory& inv, const FeatureFamily& family) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    TaskArgs a;
    for (auto& c : a.colors) c = rng.index(inv.num_colors);
    for (auto& s : a.shapes) s = rng.index(inv.num_shapes);
    a.relation = kRelations[rng.index(kRelations.size())];
    if (!args_valid(t, a, inv)) continue;
    bool legal = true;
    if (t == TaskClass::Exist || t == TaskClass::ExistSpace) legal = family.allows(a.colors[0], a.shapes[0]);
    if (t == TaskClass::ExistSpace) legal = legal && family.allows(a.colors[1], a.shapes[1]);
    if (legal) return a;
  }
  throw GenerationError("no legal arguments for task " + task_name(t));
}

// ---- groups and families ----------------------------------------------------

inline const std::vector<std::string>& leaf_group_names() {
  static const std::vector<std::string> names = {"Basic", "Obj-Attr", "Compare", "Spatial", "Cognitive"};
  return names;
}

/// Leaf group -> member classes, plus the two-level groups A and B.
struct GroupTable {
  std::map<std::string, std::vector<TaskClass>> leaves;
  std::map<std::string, std::vector<std::string>> parents;

  static GroupTable defaults() {
    using T = TaskClass;
    GroupTable g;
    g.leaves["Basic"] = {T::Exist, T::ExistColor, T::ExistShape, T::GetColor, T::GetShape};
    g.leaves["Obj-Attr"] = {T::SimpleCompareColor, T::SimpleCompareShape, T::AndSimpleCompareColor,
                            T::AndSimpleCompareShape};
    g.leaves["Compare"] = {T::CompareColor,    T::CompareShape, T::AndCompareColor,
                           T::AndCompareShape, T::ExistColorOf, T::ExistShapeOf};
    g.leaves["Spatial"] = {T::ExistSpace, T::ExistColorSpace, T::ExistShapeSpace, T::GetColorSpace,
                           T::GetShapeSpace};
    g.leaves["Cognitive"] = {T::ExistLastColorSameShape, T::ExistLastShapeSameColor, T::ExistLastObjectSameObject};
    g.parents["A"] = {"Basic", "Obj-Attr", "Compare"};
    g.parents["B"] = {"Spatial", "Cognitive"};
    return g;
  }

  /// Lines of the form `Name: Class, Class, ...` for leaves and
  /// `group A: Leaf, Leaf` for parents; `#` starts a comment.
  static GroupTable parse(std::istream& is) {
    GroupTable g;
    std::size_t lineno = 0;
    for (std::string line; std::getline(is, line);) {
      ++lineno;
      if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
      auto colon = line.find(':');
      auto trim = [](std::string s) {
        auto b = s.find_first_not_of(" \t\r");
        auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      if (trim(line).empty()) continue;
      if (colon == std::string::npos) throw FormatError("group table line " + std::to_string(lineno) + ": missing ':'");
      std::string key = trim(line.substr(0, colon));
      std::vector<std::string> items;
      std::stringstream ss(line.substr(colon + 1));
      for (std::string item; std::getline(ss, item, ',');)
        if (!trim(item).empty()) items.push_back(trim(item));
      if (key.rfind("group ", 0) == 0) {
        g.parents[trim(key.substr(6))] = items;
      } else {
        auto& v = g.leaves[key];
        for (const auto& it : items) v.push_back(parse_task(it));
      }
    }
    g.validate();
    return g;
  }

  static GroupTable load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot read group table " + path.string());
    return parse(is);
  }

  /// Every class belongs to exactly one leaf; parents reference known leaves.
  void validate() const {
    std::map<TaskClass, std::string> owner;
    for (const auto& [name, classes] : leaves) {
      for (auto t : classes) {
        if (!owner.emplace(t, name).second) {
          throw ValidationError("task class " + task_name(t) + " listed under both " + owner[t] + " and " + name);
        }
      }
    }
    for (auto t : all_task_classes())
      if (!owner.count(t)) throw ValidationError("task class " + task_name(t) + " belongs to no group");
    for (const auto& [name, kids] : parents)
      for (const auto& k : kids)
        if (!leaves.count(k)) throw ValidationError("group " + name + " names unknown leaf group " + k);
  }

  std::string group_of(TaskClass t) const {
    for (const auto& [name, classes] : leaves)
      for (auto c : classes)
        if (c == t) return name;
    throw ValidationError("task class " + task_name(t) + " belongs to no group");
  }

  bool is_group(const std::string& name) const { return leaves.count(name) || parents.count(name); }

  /// Classes of a leaf or parent group, in class order.
  std::vector<TaskClass> classes(const std::string& name) const {
    std::vector<TaskClass> out;
    if (auto it = leaves.find(name); it != leaves.end()) {
      out = it->second;
    } else if (auto pt = parents.find(name); pt != parents.end()) {
      for (const auto& leaf : pt->second) {
        const auto& v = leaves.at(leaf);
        out.insert(out.end(), v.begin(), v.end());
      }
    } else {
      throw ValidationError("unknown task group '" + name + "'");
    }
    std::sort(out.begin(), out.end());
    return out;
  }
};

/// Probability distribution over task classes.
struct TaskFamily {
  std::vector<std::pair<TaskClass, double>> weights;

  static TaskFamily uniform(const std::vector<TaskClass>& classes) {
    if (classes.empty()) throw ValidationError("task family needs at least one class");
    TaskFamily f;
    for (auto t : classes) f.weights.push_back({t, 1.0 / static_cast<double>(classes.size())});
    return f;
  }

  /// Comma-separated list of group names and/or class names, uniform over the union.
  static TaskFamily parse(const std::string& spec, const GroupTable& groups) {
    std::vector<TaskClass> classes;
    std::stringstream ss(spec);
    for (std::string item; std::getline(ss, item, ',');) {
      auto b = item.find_first_not_of(' ');
      if (b == std::string::npos) continue;
      item = item.substr(b, item.find_last_not_of(' ') - b + 1);
      if (groups.is_group(item)) {
        for (auto t : groups.classes(item)) classes.push_back(t);
      } else {
        classes.push_back(parse_task(item));
      }
    }
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    return uniform(classes);
  }

  void validate() const {
    if (weights.empty()) throw ValidationError("task family needs at least one class");
    double total = 0;
    for (const auto& [t, w] : weights) {
      if (!(w >= 0)) throw ValidationError("task family weight for " + task_name(t) + " is negative");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ValidationError("task family weights sum to " + std::to_string(total));
  }

  std::vector<TaskClass> classes() const {
    std::vector<TaskClass> out;
    for (const auto& [t, w] : weights)
      if (w > 0) out.push_back(t);
    return out;
  }

  TaskClass sample(Rng& rng) const {
    double u = rng.uniform(), acc = 0;
    for (const auto& [t, w] : weights) {
      acc += w;
      if (u < acc) return t;
    }
    return weights.back().first;
  }

  std::string describe() const {
    std::string s;
    for (const auto& [t, w] : weights) {
      if (!s.empty()) s += ',';
      s += task_name(t);
    }
    return s;
  }

  bool operator==(const TaskFamily&) const = default;
};

}  // namespace samnet::minicog
