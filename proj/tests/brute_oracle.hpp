#pragma once

// Direct per-class answers written from the task definitions, without the
// program tree. Used to cross-check the program oracle.

#include <functional>
#include <optional>
#include <set>
#include <vector>

#include "samnet/minicog/tasks.hpp"

namespace brute {

using namespace samnet::minicog;

using Objs = std::vector<Object>;
using Pred = std::function<bool(const Object&)>;

inline Objs matches(const SceneGraph& f, const Pred& p) {
  Objs out;
  for (const auto& o : f.objects)
    if (p(o)) out.push_back(o);
  return out;
}

/// Objects in the most recent frame in [lo, start] holding a match.
inline std::optional<Objs> search_back(const std::vector<SceneGraph>& fr, long start, long lo, const Pred& p) {
  for (long j = start; j >= lo && j >= 0; --j) {
    auto m = matches(fr[static_cast<std::size_t>(j)], p);
    if (!m.empty()) return m;
  }
  return std::nullopt;
}

struct View {
  const std::vector<SceneGraph>& fr;
  long k, h;
  long lo() const { return k - h < 0 ? 0 : k - h; }
  std::optional<Objs> latest(const Pred& p) const { return search_back(fr, k, lo(), p); }
  std::optional<Objs> last(const Pred& p) const {
    if (k == 0) return std::nullopt;
    return search_back(fr, k - 1, lo(), p);
  }
  Objs now(const Pred& p) const { return matches(fr[static_cast<std::size_t>(k)], p); }
};

inline std::optional<std::size_t> unique_attr(const std::optional<Objs>& objs, bool color) {
  if (!objs || objs->empty()) return std::nullopt;
  std::set<std::size_t> v;
  for (const auto& o : *objs) v.insert(color ? o.color : o.shape);
  if (v.size() != 1) return std::nullopt;
  return *v.begin();
}

inline bool strictly(const Object& c, const Object& ref, Relation r) {
  switch (r) {
    case Relation::left: return c.col < ref.col;
    case Relation::right: return c.col > ref.col;
    case Relation::above: return c.row < ref.row;
    case Relation::below: return c.row > ref.row;
  }
  return false;
}

inline Pred is_color(std::size_t c) {
  return [c](const Object& o) { return o.color == c; };
}
inline Pred is_shape(std::size_t s) {
  return [s](const Object& o) { return o.shape == s; };
}
inline Pred is_both(std::size_t c, std::size_t s) {
  return [c, s](const Object& o) { return o.color == c && o.shape == s; };
}

inline Answer answer(TaskClass t, const TaskArgs& a, const std::vector<SceneGraph>& frames, std::size_t k,
                     std::size_t h) {
  using T = TaskClass;
  View v{frames, static_cast<long>(k), static_cast<long>(h)};
  const auto& c = a.colors;
  const auto& s = a.shapes;
  auto color_of = [&](std::size_t sh) { return unique_attr(v.latest(is_shape(sh)), true); };
  auto shape_of = [&](std::size_t co) { return unique_attr(v.latest(is_color(co)), false); };
  auto yes = [](bool b) { return Answer::boolean(b); };
  auto cmp = [&](std::optional<std::size_t> x, std::optional<std::size_t> y) -> std::optional<bool> {
    if (!x || !y) return std::nullopt;
    return *x == *y;
  };
  auto both = [&](std::optional<bool> x, std::optional<bool> y) {
    if (!x || !y) return Answer::invalid();
    return yes(*x && *y);
  };
  auto single = [&](std::optional<bool> x) { return x ? yes(*x) : Answer::invalid(); };
  // Unique anchor from a latest-search, or nothing.
  auto anchor = [&](const Pred& p) -> std::optional<Object> {
    auto r = v.latest(p);
    if (!r || r->size() != 1) return std::nullopt;
    return r->front();
  };
  auto near = [&](const Pred& p, const Object& ref) {
    return v.now([&](const Object& o) { return p(o) && strictly(o, ref, a.relation); });
  };
  switch (t) {
    case T::Exist: return yes(!v.now(is_both(c[0], s[0])).empty());
    case T::ExistColor: return yes(!v.now(is_color(c[0])).empty());
    case T::ExistShape: return yes(!v.now(is_shape(s[0])).empty());
    case T::GetColor: {
      auto x = color_of(s[0]);
      return x ? Answer::color(*x) : Answer::invalid();
    }
    case T::GetShape: {
      auto x = shape_of(c[0]);
      return x ? Answer::shape(*x) : Answer::invalid();
    }
    case T::SimpleCompareColor: return single(cmp(color_of(s[0]), c[0]));
    case T::SimpleCompareShape: return single(cmp(shape_of(c[0]), s[0]));
    case T::AndSimpleCompareColor: return both(cmp(color_of(s[0]), c[0]), cmp(color_of(s[1]), c[1]));
    case T::AndSimpleCompareShape: return both(cmp(shape_of(c[0]), s[0]), cmp(shape_of(c[1]), s[1]));
    case T::CompareColor: return single(cmp(color_of(s[0]), color_of(s[1])));
    case T::CompareShape: return single(cmp(shape_of(c[0]), shape_of(c[1])));
    case T::AndCompareColor:
      return both(cmp(color_of(s[0]), color_of(s[1])), cmp(color_of(s[2]), color_of(s[3])));
    case T::AndCompareShape:
      return both(cmp(shape_of(c[0]), shape_of(c[1])), cmp(shape_of(c[2]), shape_of(c[3])));
    case T::ExistColorOf: {
      auto x = color_of(s[0]);
      return x ? yes(!v.now(is_both(*x, s[1])).empty()) : Answer::invalid();
    }
    case T::ExistShapeOf: {
      auto x = shape_of(c[0]);
      return x ? yes(!v.now(is_both(c[1], *x)).empty()) : Answer::invalid();
    }
    case T::ExistSpace: {
      auto ref = anchor(is_both(c[1], s[1]));
      return ref ? yes(!near(is_both(c[0], s[0]), *ref).empty()) : Answer::invalid();
    }
    case T::ExistColorSpace: {
      auto ref = anchor(is_shape(s[0]));
      return ref ? yes(!near(is_color(c[0]), *ref).empty()) : Answer::invalid();
    }
    case T::ExistShapeSpace: {
      auto ref = anchor(is_color(c[0]));
      return ref ? yes(!near(is_shape(s[0]), *ref).empty()) : Answer::invalid();
    }
    case T::GetColorSpace: {
      auto ref = anchor(is_color(c[0]));
      if (!ref) return Answer::invalid();
      auto x = unique_attr(near(is_shape(s[0]), *ref), true);
      return x ? Answer::color(*x) : Answer::invalid();
    }
    case T::GetShapeSpace: {
      auto ref = anchor(is_shape(s[0]));
      if (!ref) return Answer::invalid();
      auto x = unique_attr(near(is_color(c[0]), *ref), false);
      return x ? Answer::shape(*x) : Answer::invalid();
    }
    case T::ExistLastColorSameShape: {
      auto x = unique_attr(v.last(is_shape(s[0])), true);
      return x ? yes(!v.now(is_color(*x)).empty()) : Answer::invalid();
    }
    case T::ExistLastShapeSameColor: {
      auto x = unique_attr(v.last(is_color(c[0])), false);
      return x ? yes(!v.now(is_shape(*x)).empty()) : Answer::invalid();
    }
    case T::ExistLastObjectSameObject: {
      auto x = unique_attr(v.last(is_shape(s[0])), true);
      return x ? yes(!v.now(is_both(*x, s[0])).empty()) : Answer::invalid();
    }
  }
  return Answer::invalid();
}

/// Every frame with at most `max_objects` objects on an h x w grid over the inventory.
inline std::vector<SceneGraph> all_frames(std::size_t height, std::size_t width, const Inventory& inv,
                                          std::size_t max_objects) {
  std::vector<SceneGraph> out;
  const std::size_t cells = height * width, kinds = inv.num_colors * inv.num_shapes;
  // Each cell is empty (0) or holds object kind (1..kinds).
  std::vector<std::size_t> state(cells, 0);
  while (true) {
    std::size_t n = 0;
    for (auto s : state) n += s != 0;
    if (n <= max_objects) {
      SceneGraph g{height, width, {}};
      for (std::size_t p = 0; p < cells; ++p) {
        if (!state[p]) continue;
        const std::size_t kind = state[p] - 1;
        g.objects.push_back({p / width, p % width, kind / inv.num_shapes, kind % inv.num_shapes});
      }
      out.push_back(std::move(g));
    }
    std::size_t i = 0;
    while (i < cells && ++state[i] > kinds) state[i++] = 0;
    if (i == cells) break;
  }
  return out;
}

/// Every argument tuple a class can take, over the inventory.
inline std::vector<TaskArgs> all_args(TaskClass t, const Inventory& inv) {
  const auto sig = signature(t);
  std::vector<TaskArgs> out;
  std::size_t combos = 1;
  for (std::size_t i = 0; i < sig.colors; ++i) combos *= inv.num_colors;
  for (std::size_t i = 0; i < sig.shapes; ++i) combos *= inv.num_shapes;
  const std::size_t rels = sig.relation ? kRelations.size() : 1;
  for (std::size_t code = 0; code < combos * rels; ++code) {
    std::size_t x = code;
    TaskArgs a;
    for (std::size_t i = 0; i < sig.colors; ++i, x /= inv.num_colors) a.colors[i] = x % inv.num_colors;
    for (std::size_t i = 0; i < sig.shapes; ++i, x /= inv.num_shapes) a.shapes[i] = x % inv.num_shapes;
    a.relation = kRelations[x % rels];
    if (args_valid(t, a, inv)) out.push_back(a);
  }
  return out;
}

}  // namespace brute
