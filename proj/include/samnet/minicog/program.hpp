#pragma once

#include <algorithm>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "samnet/core/errors.hpp"
#include "samnet/minicog/scene.hpp"

namespace samnet::minicog {

enum class When { now, latest, last };

inline const char* when_name(When w) {
  switch (w) {
    case When::now: return "now";
    case When::latest: return "latest";
    case When::last: return "last";
  }
  return "?";
}

inline When parse_when(const std::string& s) {
  if (s == "now") return When::now;
  if (s == "latest") return When::latest;
  if (s == "last") return When::last;
  throw FormatError("unknown temporal tag '" + s + "'");
}

enum class Op { select, get_color, get_shape, exist, equal, both, color_const, shape_const };

struct Node;
using NodePtr = std::shared_ptr<const Node>;

/// Attribute filter of a select: unconstrained, a constant, or the value of another node.
struct AttrSpec {
  enum class Kind { any, constant, dynamic } kind = Kind::any;
  std::size_t value = 0;
  NodePtr source;
};

struct Region {
  Relation rel = Relation::left;
  NodePtr ref;  // a select that must resolve to exactly one object
};

struct Node {
  Op op = Op::exist;
  AttrSpec color, shape;
  std::optional<Region> region;
  When when = When::now;
  NodePtr a, b;
  std::size_t value = 0;
};

// ---- builders ---------------------------------------------------------------

inline AttrSpec any_attr() { return {}; }
inline AttrSpec const_attr(std::size_t v) { return {AttrSpec::Kind::constant, v, nullptr}; }
inline AttrSpec dynamic_attr(NodePtr n) { return {AttrSpec::Kind::dynamic, 0, std::move(n)}; }

inline NodePtr select(AttrSpec color, AttrSpec shape, When when, std::optional<Region> region = std::nullopt) {
  auto n = std::make_shared<Node>();
  n->op = Op::select;
  n->color = std::move(color);
  n->shape = std::move(shape);
  n->when = when;
  n->region = std::move(region);
  return n;
}

inline NodePtr unary(Op op, NodePtr a) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->a = std::move(a);
  return n;
}

inline NodePtr binary(Op op, NodePtr a, NodePtr b) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}

inline NodePtr get_color(NodePtr s) { return unary(Op::get_color, std::move(s)); }
inline NodePtr get_shape(NodePtr s) { return unary(Op::get_shape, std::move(s)); }
inline NodePtr exist(NodePtr s) { return unary(Op::exist, std::move(s)); }
inline NodePtr equal(NodePtr a, NodePtr b) { return binary(Op::equal, std::move(a), std::move(b)); }
inline NodePtr both(NodePtr a, NodePtr b) { return binary(Op::both, std::move(a), std::move(b)); }

inline NodePtr color_const(std::size_t c) {
  auto n = std::make_shared<Node>();
  n->op = Op::color_const;
  n->value = c;
  return n;
}

inline NodePtr shape_const(std::size_t s) {
  auto n = std::make_shared<Node>();
  n->op = Op::shape_const;
  n->value = s;
  return n;
}

// ---- typing -----------------------------------------------------------------

enum class ValueType { objects, boolean, color, shape };

inline ValueType type_of(const Node& n) {
  auto need = [](bool ok, const char* msg) {
    if (!ok) throw InputError(std::string("ill-typed program: ") + msg);
  };
  switch (n.op) {
    case Op::select:
      if (n.color.kind == AttrSpec::Kind::dynamic) {
        need(n.color.source && type_of(*n.color.source) == ValueType::color, "color filter must be a color");
      }
      if (n.shape.kind == AttrSpec::Kind::dynamic) {
        need(n.shape.source && type_of(*n.shape.source) == ValueType::shape, "shape filter must be a shape");
      }
      if (n.region) need(n.region->ref && n.region->ref->op == Op::select, "region reference must be a select");
      if (n.region) type_of(*n.region->ref);
      return ValueType::objects;
    case Op::get_color:
    case Op::get_shape:
    case Op::exist:
      need(n.a && n.a->op == Op::select, "attribute query needs a select");
      type_of(*n.a);
      return n.op == Op::get_color ? ValueType::color : n.op == Op::get_shape ? ValueType::shape : ValueType::boolean;
    case Op::equal: {
      need(n.a && n.b, "equal needs two operands");
      auto ta = type_of(*n.a), tb = type_of(*n.b);
      need(ta == tb && ta != ValueType::objects, "equal operands must share an attribute type");
      return ValueType::boolean;
    }
    case Op::both:
      need(n.a && n.b && type_of(*n.a) == ValueType::boolean && type_of(*n.b) == ValueType::boolean,
           "and needs two boolean operands");
      return ValueType::boolean;
    case Op::color_const: return ValueType::color;
    case Op::shape_const: return ValueType::shape;
  }
  throw InputError("unknown program node");
}

/// Throws unless the program is well typed and answers with a scalar.
inline void check_program(const Node& root) {
  if (type_of(root) == ValueType::objects) throw InputError("ill-typed program: root must not be a select");
}

// ---- answers ----------------------------------------------------------------

struct Answer {
  enum class Kind { boolean, color, shape, invalid } kind = Kind::invalid;
  std::size_t value = 0;  // 1/0 for booleans

  static Answer invalid() { return {}; }
  static Answer boolean(bool b) { return {Kind::boolean, b ? 1u : 0u}; }
  static Answer color(std::size_t c) { return {Kind::color, c}; }
  static Answer shape(std::size_t s) { return {Kind::shape, s}; }
  bool operator==(const Answer&) const = default;
};

/// Label indices: true, false, colors..., shapes..., invalid.
class AnswerSpace {
 public:
  explicit AnswerSpace(Inventory inv) : inv_(inv) {}

  std::size_t size() const { return 3 + inv_.num_colors + inv_.num_shapes; }

  std::size_t index(const Answer& a) const {
    switch (a.kind) {
      case Answer::Kind::boolean: return a.value ? 0 : 1;
      case Answer::Kind::color: return 2 + a.value;
      case Answer::Kind::shape: return 2 + inv_.num_colors + a.value;
      case Answer::Kind::invalid: return size() - 1;
    }
    return size() - 1;
  }

  Answer answer(std::size_t idx) const {
    if (idx == 0) return Answer::boolean(true);
    if (idx == 1) return Answer::boolean(false);
    if (idx < 2 + inv_.num_colors) return Answer::color(idx - 2);
    if (idx < 2 + inv_.num_colors + inv_.num_shapes) return Answer::shape(idx - 2 - inv_.num_colors);
    if (idx == size() - 1) return Answer::invalid();
    throw InputError("answer index out of range");
  }

  std::string name(const Answer& a) const {
    switch (a.kind) {
      case Answer::Kind::boolean: return a.value ? "true" : "false";
      case Answer::Kind::color: return inv_.color_name(a.value);
      case Answer::Kind::shape: return inv_.shape_name(a.value);
      case Answer::Kind::invalid: return "invalid";
    }
    return "invalid";
  }
  std::string name(std::size_t idx) const { return name(answer(idx)); }

  std::vector<std::string> labels() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < size(); ++i) out.push_back(name(i));
    return out;
  }

  Answer parse(const std::string& s) const {
    for (std::size_t i = 0; i < size(); ++i)
      if (name(i) == s) return answer(i);
    throw FormatError("unknown answer '" + s + "'");
  }

  const Inventory& inventory() const { return inv_; }

 private:
  Inventory inv_;
};

// ---- oracle -----------------------------------------------------------------

struct Located {
  std::size_t frame = 0;
  Object obj;
};

/// Conditions the generator must avoid for an unambiguous episode.
struct OracleFlags {
  bool ambiguous = false;  // a Get or region reference saw several distinct referents
  bool tie = false;        // a relation candidate shares the reference row/column
  bool clean() const { return !ambiguous && !tie; }
};

namespace detail {

struct Value {
  enum class Kind { invalid, objects, boolean, color, shape } kind = Kind::invalid;
  std::vector<Located> objs;
  std::size_t v = 0;
};

inline bool related(const Object& cand, const Object& ref, Relation rel, bool& tie) {
  switch (rel) {
    case Relation::left:
    case Relation::right:
      if (cand.col == ref.col) tie = true;
      return rel == Relation::left ? cand.col < ref.col : cand.col > ref.col;
    case Relation::above:
    case Relation::below:
      if (cand.row == ref.row) tie = true;
      return rel == Relation::above ? cand.row < ref.row : cand.row > ref.row;
  }
  return false;
}

inline Value eval(const Node& n, const std::vector<SceneGraph>& frames, std::size_t k, std::size_t h,
                  OracleFlags& flags);

inline std::optional<std::optional<std::size_t>> resolve(const AttrSpec& spec, const std::vector<SceneGraph>& frames,
                                                         std::size_t k, std::size_t h, OracleFlags& flags) {
  using K = AttrSpec::Kind;
  if (spec.kind == K::any) return std::optional<std::size_t>{};
  if (spec.kind == K::constant) return std::optional<std::size_t>{spec.value};
  auto v = eval(*spec.source, frames, k, h, flags);
  if (v.kind == Value::Kind::invalid) return std::nullopt;  // unresolvable filter
  return std::optional<std::size_t>{v.v};
}

inline Value eval_select(const Node& n, const std::vector<SceneGraph>& frames, std::size_t k, std::size_t h,
                         OracleFlags& flags) {
  Value invalid;
  auto color = resolve(n.color, frames, k, h, flags);
  auto shape = resolve(n.shape, frames, k, h, flags);
  if (!color || !shape) return invalid;
  std::optional<Object> anchor;
  if (n.region) {
    auto ref = eval(*n.region->ref, frames, k, h, flags);
    if (ref.kind != Value::Kind::objects || ref.objs.empty()) return invalid;
    if (ref.objs.size() > 1) {
      flags.ambiguous = true;
      return invalid;
    }
    anchor = ref.objs.front().obj;
  }
  auto frame_matches = [&](std::size_t j) {
    std::vector<Located> out;
    for (const auto& o : frames[j].objects) {
      if (*color && o.color != **color) continue;
      if (*shape && o.shape != **shape) continue;
      if (anchor && !related(o, *anchor, n.region->rel, flags.tie)) continue;
      out.push_back({j, o});
    }
    return out;
  };
  if (n.when == When::now) return {Value::Kind::objects, frame_matches(k), 0};
  const std::size_t lo = k >= h ? k - h : 0;
  const std::size_t start = n.when == When::latest ? k : (k == 0 ? 0 : k - 1);
  if (n.when == When::last && k == 0) return invalid;
  for (std::size_t j = start + 1; j-- > lo;) {
    auto m = frame_matches(j);
    if (!m.empty()) return {Value::Kind::objects, std::move(m), 0};
  }
  return invalid;
}

inline Value eval(const Node& n, const std::vector<SceneGraph>& frames, std::size_t k, std::size_t h,
                  OracleFlags& flags) {
  using VK = Value::Kind;
  Value invalid;
  switch (n.op) {
    case Op::select: return eval_select(n, frames, k, h, flags);
    case Op::get_color:
    case Op::get_shape: {
      auto s = eval(*n.a, frames, k, h, flags);
      if (s.kind != VK::objects || s.objs.empty()) return invalid;
      std::set<std::size_t> distinct;
      for (const auto& l : s.objs) distinct.insert(n.op == Op::get_color ? l.obj.color : l.obj.shape);
      if (distinct.size() > 1) {
        flags.ambiguous = true;
        return invalid;
      }
      return {n.op == Op::get_color ? VK::color : VK::shape, {}, *distinct.begin()};
    }
    case Op::exist: {
      auto s = eval(*n.a, frames, k, h, flags);
      if (s.kind != VK::objects) return invalid;
      return {VK::boolean, {}, s.objs.empty() ? 0u : 1u};
    }
    case Op::equal: {
      auto a = eval(*n.a, frames, k, h, flags);
      auto b = eval(*n.b, frames, k, h, flags);
      if (a.kind == VK::invalid || b.kind == VK::invalid) return invalid;
      return {VK::boolean, {}, a.v == b.v ? 1u : 0u};
    }
    case Op::both: {
      auto a = eval(*n.a, frames, k, h, flags);
      auto b = eval(*n.b, frames, k, h, flags);
      if (a.kind == VK::invalid || b.kind == VK::invalid) return invalid;
      return {VK::boolean, {}, (a.v && b.v) ? 1u : 0u};
    }
    case Op::color_const: return {VK::color, {}, n.value};
    case Op::shape_const: return {VK::shape, {}, n.value};
  }
  return invalid;
}

}  // namespace detail

/// Answer at frame k, looking back at most `history` frames.
inline Answer oracle_frame(const Node& program, const std::vector<SceneGraph>& frames, std::size_t k,
                           std::size_t history, OracleFlags* flags = nullptr) {
  OracleFlags local;
  auto v = detail::eval(program, frames, k, history, flags ? *flags : local);
  using VK = detail::Value::Kind;
  switch (v.kind) {
    case VK::boolean: return Answer::boolean(v.v != 0);
    case VK::color: return Answer::color(v.v);
    case VK::shape: return Answer::shape(v.v);
    default: return Answer::invalid();
  }
}

/// Per-frame answers for the whole sequence.
inline std::vector<Answer> oracle_answer(const Node& program, const std::vector<SceneGraph>& frames,
                                         std::size_t history, OracleFlags* flags = nullptr) {
  std::vector<Answer> out;
  for (std::size_t k = 0; k < frames.size(); ++k) out.push_back(oracle_frame(program, frames, k, history, flags));
  return out;
}

// ---- surface form -----------------------------------------------------------

namespace detail {

inline void realize(const Node& n, const Inventory& inv, std::vector<std::string>& out) {
  switch (n.op) {
    case Op::select:
      if (n.color.kind == AttrSpec::Kind::constant) out.push_back(inv.color_name(n.color.value));
      out.push_back(n.shape.kind == AttrSpec::Kind::constant ? inv.shape_name(n.shape.value) : "object");
      if (n.color.kind == AttrSpec::Kind::dynamic) {
        out.push_back("with");
        realize(*n.color.source, inv, out);
      }
      if (n.shape.kind == AttrSpec::Kind::dynamic) {
        out.push_back("with");
        realize(*n.shape.source, inv, out);
      }
      if (n.region) {
        out.push_back(relation_name(n.region->rel));
        out.push_back("of");
        realize(*n.region->ref, inv, out);
      }
      out.push_back(when_name(n.when));
      return;
    case Op::get_color:
    case Op::get_shape:
      out.push_back(n.op == Op::get_color ? "color" : "shape");
      out.push_back("of");
      realize(*n.a, inv, out);
      return;
    case Op::exist:
      out.push_back("exist");
      realize(*n.a, inv, out);
      return;
    case Op::equal:
    case Op::both:
      out.push_back(n.op == Op::equal ? "equal" : "and");
      realize(*n.a, inv, out);
      realize(*n.b, inv, out);
      return;
    case Op::color_const: out.push_back(inv.color_name(n.value)); return;
    case Op::shape_const: out.push_back(inv.shape_name(n.value)); return;
  }
}

}  // namespace detail

inline std::vector<std::string> question_tokens(const Node& program, const Inventory& inv) {
  std::vector<std::string> out;
  detail::realize(program, inv, out);
  out.push_back("?");
  return out;
}

inline std::string question_text(const Node& program, const Inventory& inv) {
  std::string s;
  for (const auto& t : question_tokens(program, inv)) {
    if (!s.empty()) s += ' ';
    s += t;
  }
  return s;
}

/// Keywords first, then color and shape names of the inventory.
inline std::vector<std::string> vocabulary_tokens(const Inventory& inv) {
  std::vector<std::string> v = {"?",    "exist", "now",  "latest", "last",  "color", "shape", "of",
                                "object", "equal", "and", "with",  "left", "right", "above", "below"};
  for (std::size_t c = 0; c < inv.num_colors; ++c) v.push_back(inv.color_name(c));
  for (std::size_t s = 0; s < inv.num_shapes; ++s) v.push_back(inv.shape_name(s));
  return v;
}

// ---- referent templates -----------------------------------------------------

/// Static attributes of one select node; unset means free.
struct Template {
  std::optional<std::size_t> color, shape;
  bool matches(std::size_t c, std::size_t s) const { return (!color || *color == c) && (!shape || *shape == s); }
  bool constrained() const { return color || shape; }
};

inline void collect_templates(const Node& n, std::vector<Template>& out) {
  if (n.op == Op::select) {
    Template t;
    if (n.color.kind == AttrSpec::Kind::constant) t.color = n.color.value;
    if (n.shape.kind == AttrSpec::Kind::constant) t.shape = n.shape.value;
    out.push_back(t);
    if (n.color.source) collect_templates(*n.color.source, out);
    if (n.shape.source) collect_templates(*n.shape.source, out);
    if (n.region) collect_templates(*n.region->ref, out);
    return;
  }
  if (n.a) collect_templates(*n.a, out);
  if (n.b) collect_templates(*n.b, out);
}

// ---- JSON -------------------------------------------------------------------

namespace detail {

inline nlohmann::json attr_json(const AttrSpec& a, bool is_color, const Inventory& inv);

}

inline nlohmann::json program_json(const Node& n, const Inventory& inv) {
  using nlohmann::json;
  switch (n.op) {
    case Op::select: {
      json j = {{"op", "select"},
                {"color", detail::attr_json(n.color, true, inv)},
                {"shape", detail::attr_json(n.shape, false, inv)},
                {"when", when_name(n.when)}};
      if (n.region) j["region"] = {{"rel", relation_name(n.region->rel)}, {"ref", program_json(*n.region->ref, inv)}};
      return j;
    }
    case Op::get_color: return {{"op", "get_color"}, {"arg", program_json(*n.a, inv)}};
    case Op::get_shape: return {{"op", "get_shape"}, {"arg", program_json(*n.a, inv)}};
    case Op::exist: return {{"op", "exist"}, {"arg", program_json(*n.a, inv)}};
    case Op::equal: return {{"op", "equal"}, {"a", program_json(*n.a, inv)}, {"b", program_json(*n.b, inv)}};
    case Op::both: return {{"op", "and"}, {"a", program_json(*n.a, inv)}, {"b", program_json(*n.b, inv)}};
    case Op::color_const: return {{"op", "color"}, {"value", inv.color_name(n.value)}};
    case Op::shape_const: return {{"op", "shape"}, {"value", inv.shape_name(n.value)}};
  }
  return {};
}

namespace detail {

inline nlohmann::json attr_json(const AttrSpec& a, bool is_color, const Inventory& inv) {
  switch (a.kind) {
    case AttrSpec::Kind::any: return "any";
    case AttrSpec::Kind::constant: return is_color ? inv.color_name(a.value) : inv.shape_name(a.value);
    case AttrSpec::Kind::dynamic: return {{"of", program_json(*a.source, inv)}};
  }
  return "any";
}

inline AttrSpec attr_from_json(const nlohmann::json& j, bool is_color, const Inventory& inv);

}  // namespace detail

inline NodePtr program_from_json(const nlohmann::json& j, const Inventory& inv) {
  try {
    const std::string op = j.at("op").get<std::string>();
    if (op == "select") {
      std::optional<Region> region;
      if (j.contains("region")) {
        region = Region{parse_relation(j["region"].at("rel").get<std::string>()),
                        program_from_json(j["region"].at("ref"), inv)};
      }
      return select(detail::attr_from_json(j.at("color"), true, inv), detail::attr_from_json(j.at("shape"), false, inv),
                    parse_when(j.at("when").get<std::string>()), std::move(region));
    }
    if (op == "get_color") return get_color(program_from_json(j.at("arg"), inv));
    if (op == "get_shape") return get_shape(program_from_json(j.at("arg"), inv));
    if (op == "exist") return exist(program_from_json(j.at("arg"), inv));
    if (op == "equal") return equal(program_from_json(j.at("a"), inv), program_from_json(j.at("b"), inv));
    if (op == "and") return both(program_from_json(j.at("a"), inv), program_from_json(j.at("b"), inv));
    if (op == "color") return color_const(inv.color_id(j.at("value").get<std::string>()));
    if (op == "shape") return shape_const(inv.shape_id(j.at("value").get<std::string>()));
    throw FormatError("unknown program op '" + op + "'");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed program: ") + e.what());
  }
}

namespace detail {

inline AttrSpec attr_from_json(const nlohmann::json& j, bool is_color, const Inventory& inv) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "any") return any_attr();
    return const_attr(is_color ? inv.color_id(s) : inv.shape_id(s));
  }
  return dynamic_attr(program_from_json(j.at("of"), inv));
}

}  // namespace detail

}  // namespace samnet::minicog
