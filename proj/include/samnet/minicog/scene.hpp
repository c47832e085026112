#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "samnet/core/errors.hpp"

namespace samnet::minicog {

inline constexpr std::array<const char*, 8> kColorNames = {"gray", "blue", "brown", "yellow",
                                                           "red",  "green", "purple", "cyan"};
inline constexpr std::array<const char*, 6> kShapeNames = {"cube", "cylinder", "sphere", "cone", "pyramid", "torus"};

// Color families for the compositional split: indices [0,4) and [4,8).
inline constexpr std::size_t kFamilySize = 4;

enum class Relation { left, right, above, below };
inline constexpr std::array<Relation, 4> kRelations = {Relation::left, Relation::right, Relation::above,
                                                       Relation::below};

inline const char* relation_name(Relation r) {
  switch (r) {
    case Relation::left: return "left";
    case Relation::right: return "right";
    case Relation::above: return "above";
    case Relation::below: return "below";
  }
  return "?";
}

inline Relation parse_relation(const std::string& s) {
  for (auto r : kRelations)
    if (s == relation_name(r)) return r;
  throw FormatError("unknown relation '" + s + "'");
}

/// Attribute inventory: the first `num_colors` colors and `num_shapes` shapes.
struct Inventory {
  std::size_t num_colors = 8;
  std::size_t num_shapes = 6;

  void validate() const {
    if (num_colors < 2 || num_colors > kColorNames.size()) throw InputError("need between 2 and 8 colors");
    if (num_shapes < 2 || num_shapes > kShapeNames.size()) throw InputError("need between 2 and 6 shapes");
  }
  std::string color_name(std::size_t c) const { return kColorNames.at(c); }
  std::string shape_name(std::size_t s) const { return kShapeNames.at(s); }

  std::size_t color_id(const std::string& name) const {
    for (std::size_t c = 0; c < num_colors; ++c)
      if (name == kColorNames[c]) return c;
    throw FormatError("unknown color '" + name + "'");
  }
  std::size_t shape_id(const std::string& name) const {
    for (std::size_t s = 0; s < num_shapes; ++s)
      if (name == kShapeNames[s]) return s;
    throw FormatError("unknown shape '" + name + "'");
  }
  bool operator==(const Inventory&) const = default;
};

struct Object {
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t color = 0;
  std::size_t shape = 0;
  bool operator==(const Object&) const = default;
};

struct SceneGraph {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<Object> objects;

  bool operator==(const SceneGraph&) const = default;

  bool occupied(std::size_t r, std::size_t c) const {
    for (const auto& o : objects)
      if (o.row == r && o.col == c) return true;
    return false;
  }

  void validate(const Inventory& inv, std::size_t max_objects) const {
    if (height * width == 0) throw ShapeError("scene grid must have at least one cell");
    if (objects.size() > max_objects) {
      throw InputError("scene holds " + std::to_string(objects.size()) + " objects, limit is " +
                       std::to_string(max_objects));
    }
    std::vector<bool> used(height * width, false);
    for (const auto& o : objects) {
      if (o.row >= height || o.col >= width) throw InputError("object outside the grid");
      if (o.color >= inv.num_colors || o.shape >= inv.num_shapes) throw InputError("object attribute out of range");
      if (used[o.row * width + o.col]) throw InputError("two objects share a cell");
      used[o.row * width + o.col] = true;
    }
  }
};

/// Per-shape allowed colors, as bit masks over color indices.
struct FeatureFamily {
  std::string name = "any";
  std::vector<std::uint32_t> allowed;  // one mask per shape

  static FeatureFamily unrestricted(const Inventory& inv) {
    return {"any", std::vector<std::uint32_t>(inv.num_shapes, (1u << inv.num_colors) - 1)};
  }

  /// Variant "A": cubes take family-A colors, cylinders family-B colors; "B" swaps
  /// the two. Remaining shapes take any color.
  static FeatureFamily cogent(const std::string& variant, const Inventory& inv) {
    if (inv.num_colors != 2 * kFamilySize || inv.num_shapes < 2) {
      throw InputError("color-family constraints need the full 8-color inventory");
    }
    auto fam = unrestricted(inv);
    const std::uint32_t a = (1u << kFamilySize) - 1, b = a << kFamilySize;
    if (variant == "A") {
      fam.allowed[0] = a;
      fam.allowed[1] = b;
    } else if (variant == "B") {
      fam.allowed[0] = b;
      fam.allowed[1] = a;
    } else {
      throw InputError("unknown family variant '" + variant + "' (expected A or B)");
    }
    fam.name = variant;
    return fam;
  }

  static FeatureFamily by_name(const std::string& name, const Inventory& inv) {
    return name == "any" ? unrestricted(inv) : cogent(name, inv);
  }

  bool allows(std::size_t color, std::size_t shape) const { return (allowed.at(shape) >> color) & 1u; }
  bool operator==(const FeatureFamily& o) const { return allowed == o.allowed; }
};

}  // namespace samnet::minicog
