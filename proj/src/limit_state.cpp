#include "relup/limit_state.hpp"

#include <algorithm>
#include <stdexcept>
#include <utility>

namespace relup {

double VarFrame::get(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return values[i];
  throw std::invalid_argument("unbound variable: " + std::string(name));
}

struct LimitStateExpression::Node {
  Kind kind;
  std::vector<std::string> leaf_vars;
  std::function<double(const VarFrame&)> fn;
  std::vector<LimitStateExpression> children;
  std::vector<std::vector<std::size_t>> cut_sets;
};

LimitStateExpression::LimitStateExpression(std::shared_ptr<const Node> node)
    : node_(std::move(node)) {}

LimitStateExpression LimitStateExpression::leaf(
    std::vector<std::string> variables, std::function<double(const VarFrame&)> fn) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::Leaf;
  n->leaf_vars = std::move(variables);
  n->fn = std::move(fn);
  return LimitStateExpression(std::move(n));
}

LimitStateExpression LimitStateExpression::intersection(
    std::vector<LimitStateExpression> children) {
  if (children.empty()) throw std::invalid_argument("intersection: no children");
  auto n = std::make_shared<Node>();
  n->kind = Kind::Intersection;
  n->children = std::move(children);
  return LimitStateExpression(std::move(n));
}

LimitStateExpression LimitStateExpression::union_of(
    std::vector<LimitStateExpression> children) {
  if (children.empty()) throw std::invalid_argument("union: no children");
  auto n = std::make_shared<Node>();
  n->kind = Kind::Union;
  n->children = std::move(children);
  return LimitStateExpression(std::move(n));
}

LimitStateExpression LimitStateExpression::cut_set_system(
    std::vector<LimitStateExpression> leaves,
    std::vector<std::vector<std::size_t>> cut_sets) {
  if (leaves.empty() || cut_sets.empty())
    throw std::invalid_argument("cut_set_system: needs leaves and cut sets");
  for (const auto& cs : cut_sets) {
    if (cs.empty()) throw std::invalid_argument("cut_set_system: empty cut set");
    for (std::size_t i : cs)
      if (i >= leaves.size())
        throw std::invalid_argument("cut_set_system: leaf index out of range");
  }
  auto n = std::make_shared<Node>();
  n->kind = Kind::CutSetSystem;
  n->children = std::move(leaves);
  n->cut_sets = std::move(cut_sets);
  return LimitStateExpression(std::move(n));
}

double LimitStateExpression::evaluate(const VarFrame& frame) const {
  switch (node_->kind) {
    case Kind::Leaf:
      return node_->fn(frame);
    case Kind::Intersection: {
      double v = node_->children[0].evaluate(frame);
      for (std::size_t i = 1; i < node_->children.size(); ++i)
        v = std::max(v, node_->children[i].evaluate(frame));
      return v;
    }
    case Kind::Union: {
      double v = node_->children[0].evaluate(frame);
      for (std::size_t i = 1; i < node_->children.size(); ++i)
        v = std::min(v, node_->children[i].evaluate(frame));
      return v;
    }
    case Kind::CutSetSystem: {
      // min over cut sets of max over members
      double sys = 0.0;
      bool first_set = true;
      for (const auto& cs : node_->cut_sets) {
        double m = node_->children[cs[0]].evaluate(frame);
        for (std::size_t j = 1; j < cs.size(); ++j)
          m = std::max(m, node_->children[cs[j]].evaluate(frame));
        sys = first_set ? m : std::min(sys, m);
        first_set = false;
      }
      return sys;
    }
  }
  return 0.0;
}

LimitStateExpression::Kind LimitStateExpression::kind() const { return node_->kind; }

const std::vector<LimitStateExpression>& LimitStateExpression::children() const {
  return node_->children;
}

std::vector<std::string> LimitStateExpression::variables() const {
  std::vector<std::string> out;
  auto add = [&out](const std::string& v) {
    if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
  };
  if (node_->kind == Kind::Leaf) {
    for (const auto& v : node_->leaf_vars) add(v);
  } else {
    for (const auto& c : node_->children)
      for (const auto& v : c.variables()) add(v);
  }
  return out;
}

const LimitStateExpression& LimitStateExpression::active_leaf(
    const VarFrame& frame) const {
  switch (node_->kind) {
    case Kind::Leaf:
      return *this;
    case Kind::Intersection: {
      std::size_t best = 0;
      double bv = node_->children[0].evaluate(frame);
      for (std::size_t i = 1; i < node_->children.size(); ++i) {
        const double v = node_->children[i].evaluate(frame);
        if (v > bv) { bv = v; best = i; }
      }
      return node_->children[best].active_leaf(frame);
    }
    case Kind::Union: {
      std::size_t best = 0;
      double bv = node_->children[0].evaluate(frame);
      for (std::size_t i = 1; i < node_->children.size(); ++i) {
        const double v = node_->children[i].evaluate(frame);
        if (v < bv) { bv = v; best = i; }
      }
      return node_->children[best].active_leaf(frame);
    }
    case Kind::CutSetSystem: {
      // active member of the active cut set
      std::size_t best_leaf = 0;
      double sys = 0.0;
      bool first_set = true;
      for (const auto& cs : node_->cut_sets) {
        std::size_t arg = cs[0];
        double m = node_->children[cs[0]].evaluate(frame);
        for (std::size_t j = 1; j < cs.size(); ++j) {
          const double v = node_->children[cs[j]].evaluate(frame);
          if (v > m) { m = v; arg = cs[j]; }
        }
        if (first_set || m < sys) { sys = m; best_leaf = arg; }
        first_set = false;
      }
      return node_->children[best_leaf].active_leaf(frame);
    }
  }
  return *this;
}

}  // namespace relup
