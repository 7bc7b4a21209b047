#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace relup {

/// Read-only view binding variable names to values. Lookup is a linear scan;
/// models here have at most a dozen variables.
struct VarFrame {
  std::span<const std::string> names;
  std::span<const double> values;

  double get(std::string_view name) const;
};

/// Scalar limit state function over named physical variables, composed into
/// systems: Intersection = max of children, Union = min of children, and
/// general cut-set systems (min over cut sets of max over members).
/// Failure domain is the closed set {evaluate <= 0}. Immutable and pure.
class LimitStateExpression {
 public:
  enum class Kind { Leaf, Intersection, Union, CutSetSystem };

  static LimitStateExpression leaf(std::vector<std::string> variables,
                                   std::function<double(const VarFrame&)> fn);
  static LimitStateExpression intersection(std::vector<LimitStateExpression> children);
  static LimitStateExpression union_of(std::vector<LimitStateExpression> children);
  static LimitStateExpression cut_set_system(std::vector<LimitStateExpression> leaves,
                                             std::vector<std::vector<std::size_t>> cut_sets);

  double evaluate(const VarFrame& frame) const;
  bool failure(const VarFrame& frame) const { return evaluate(frame) <= 0.0; }

  Kind kind() const;
  const std::vector<LimitStateExpression>& children() const;
  /// Declared variables of all leaves, deduplicated, in first-seen order.
  std::vector<std::string> variables() const;

  /// Index path (argmax/argmin per level, ties to the lowest index) of the
  /// leaf whose value the composite takes at this frame. Gradient-based
  /// solvers differentiate that leaf only.
  const LimitStateExpression& active_leaf(const VarFrame& frame) const;

 private:
  struct Node;
  explicit LimitStateExpression(std::shared_ptr<const Node> node);
  std::shared_ptr<const Node> node_;
};

}  // namespace relup
