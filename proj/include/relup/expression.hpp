#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "relup/limit_state.hpp"

namespace relup {

/// Parse failure with source position and the offending token.
struct ExpressionError : std::runtime_error {
  enum class Kind { Syntax, UnknownFunction, WrongArity };
  Kind kind;
  int line;
  int column;
  std::string token;

  ExpressionError(Kind kind, int line, int column, std::string token,
                  const std::string& what);
};

/// Arithmetic expression AST. Grammar:
///   expr   := term (('+'|'-') term)*
///   term   := factor (('*'|'/') factor)*
///   factor := unary ('^' factor)?          -- '^' right-associative
///   unary  := '-'? atom
///   atom   := number | identifier | func '(' args ')' | '(' expr ')'
/// Functions: min, max, pow (binary); exp, ln, sqrt, abs, phi, Phi, Phi_inv
/// (unary). `phi`/`Phi`/`Phi_inv` are the standard Normal density, CDF and
/// quantile. `pi` is a constant.
class Expression {
 public:
  static Expression parse(const std::string& text);

  double evaluate(const VarFrame& frame) const;
  /// Canonical fully parenthesized text; parse(print(e)).print() == e.print().
  std::string print() const;
  /// Free identifiers in first-appearance order (constants excluded).
  std::vector<std::string> variables() const;
  /// Leaf limit state evaluating this expression.
  LimitStateExpression to_limit_state() const;

  struct Node;

 private:
  explicit Expression(std::shared_ptr<const Node> root);
  std::shared_ptr<const Node> root_;
};

}  // namespace relup
