#include "relup/expression.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <sstream>

#include "relup/normal.hpp"

namespace relup {

ExpressionError::ExpressionError(Kind kind, int line, int column,
                                 std::string token, const std::string& what)
    : std::runtime_error(what),
      kind(kind),
      line(line),
      column(column),
      token(std::move(token)) {}

namespace {

enum class Op { Add, Sub, Mul, Div, Pow, Neg };

struct FuncInfo {
  int arity;
  double (*fn1)(double);
  double (*fn2)(double, double);
};

double fn_min(double a, double b) { return std::fmin(a, b); }
double fn_max(double a, double b) { return std::fmax(a, b); }
double fn_ln(double x) { return std::log(x); }

const std::map<std::string, FuncInfo, std::less<>>& functions() {
  static const std::map<std::string, FuncInfo, std::less<>> table = {
      {"min", {2, nullptr, fn_min}},
      {"max", {2, nullptr, fn_max}},
      {"pow", {2, nullptr, std::pow}},
      {"exp", {1, std::exp, nullptr}},
      {"ln", {1, fn_ln, nullptr}},
      {"sqrt", {1, std::sqrt, nullptr}},
      {"abs", {1, std::fabs, nullptr}},
      {"phi", {1, std_normal_pdf, nullptr}},
      {"Phi", {1, std_normal_cdf, nullptr}},
      {"Phi_inv", {1, std_normal_quantile, nullptr}},
  };
  return table;
}

}  // namespace

struct Expression::Node {
  enum class Kind { Number, Variable, Constant, Unary, Binary, Call };
  Kind kind;
  double number = 0.0;
  std::string name;  // variable, constant or function name
  Op op = Op::Add;
  std::vector<std::shared_ptr<const Node>> args;
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;
using Node = Expression::Node;

NodePtr make_number(double v) {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::Number;
  n->number = v;
  return n;
}

NodePtr make_binary(Op op, NodePtr a, NodePtr b) {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::Binary;
  n->op = op;
  n->args = {std::move(a), std::move(b)};
  return n;
}

struct Token {
  enum class Kind { Number, Identifier, Symbol, End };
  Kind kind;
  std::string text;
  double value = 0.0;
  int line = 1;
  int column = 1;
};

class Lexer {
 public:
  explicit Lexer(const std::string& text) : text_(text) { advance(); }

  const Token& peek() const { return current_; }
  Token take() {
    Token t = current_;
    advance();
    return t;
  }

 private:
  void advance() {
    while (pos_ < text_.size() &&
           std::isspace(static_cast<unsigned char>(text_[pos_])))
      step();
    current_.line = line_;
    current_.column = column_;
    if (pos_ >= text_.size()) {
      current_.kind = Token::Kind::End;
      current_.text = "<end of input>";
      return;
    }
    const char c = text_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      std::size_t end = pos_;
      while (end < text_.size() &&
             (std::isdigit(static_cast<unsigned char>(text_[end])) ||
              text_[end] == '.'))
        ++end;
      // exponent part
      if (end < text_.size() && (text_[end] == 'e' || text_[end] == 'E')) {
        std::size_t e = end + 1;
        if (e < text_.size() && (text_[e] == '+' || text_[e] == '-')) ++e;
        if (e < text_.size() && std::isdigit(static_cast<unsigned char>(text_[e]))) {
          while (e < text_.size() &&
                 std::isdigit(static_cast<unsigned char>(text_[e])))
            ++e;
          end = e;
        }
      }
      current_.kind = Token::Kind::Number;
      current_.text = text_.substr(pos_, end - pos_);
      try {
        std::size_t used = 0;
        current_.value = std::stod(current_.text, &used);
        if (used != current_.text.size()) throw std::invalid_argument("");
      } catch (const std::exception&) {
        throw ExpressionError(ExpressionError::Kind::Syntax, line_, column_,
                              current_.text,
                              "malformed number '" + current_.text + "' at " +
                                  where());
      }
      while (pos_ < end) step();
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t end = pos_;
      while (end < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[end])) ||
              text_[end] == '_'))
        ++end;
      current_.kind = Token::Kind::Identifier;
      current_.text = text_.substr(pos_, end - pos_);
      while (pos_ < end) step();
      return;
    }
    current_.kind = Token::Kind::Symbol;
    current_.text = std::string(1, c);
    step();
  }

  void step() {
    if (text_[pos_] == '\n') {
      ++line_;
      column_ = 1;
    } else {
      ++column_;
    }
    ++pos_;
  }

  std::string where() const {
    return "line " + std::to_string(line_) + ", column " + std::to_string(column_);
  }

  const std::string& text_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int column_ = 1;
  Token current_;
};

class Parser {
 public:
  explicit Parser(const std::string& text) : lex_(text) {}

  NodePtr parse() {
    NodePtr e = expr();
    const Token& t = lex_.peek();
    if (t.kind != Token::Kind::End)
      fail(t, "unexpected token '" + t.text + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const Token& t, const std::string& msg,
                         ExpressionError::Kind kind =
                             ExpressionError::Kind::Syntax) {
    throw ExpressionError(kind, t.line, t.column, t.text,
                          msg + " at line " + std::to_string(t.line) +
                              ", column " + std::to_string(t.column));
  }

  bool accept_symbol(char c) {
    const Token& t = lex_.peek();
    if (t.kind == Token::Kind::Symbol && t.text[0] == c) {
      lex_.take();
      return true;
    }
    return false;
  }

  void expect_symbol(char c) {
    const Token& t = lex_.peek();
    if (t.kind != Token::Kind::Symbol || t.text[0] != c)
      fail(t, std::string("expected '") + c + "', found '" + t.text + "'");
    lex_.take();
  }

  NodePtr expr() {
    NodePtr left = term();
    for (;;) {
      if (accept_symbol('+'))
        left = make_binary(Op::Add, left, term());
      else if (accept_symbol('-'))
        left = make_binary(Op::Sub, left, term());
      else
        return left;
    }
  }

  NodePtr term() {
    NodePtr left = factor();
    for (;;) {
      if (accept_symbol('*'))
        left = make_binary(Op::Mul, left, factor());
      else if (accept_symbol('/'))
        left = make_binary(Op::Div, left, factor());
      else
        return left;
    }
  }

  NodePtr factor() {
    NodePtr base = unary();
    if (accept_symbol('^')) return make_binary(Op::Pow, base, factor());
    return base;
  }

  NodePtr unary() {
    if (accept_symbol('-')) {
      auto n = std::make_shared<Node>();
      n->kind = Node::Kind::Unary;
      n->op = Op::Neg;
      n->args = {atom()};
      return n;
    }
    return atom();
  }

  NodePtr atom() {
    const Token t = lex_.take();
    if (t.kind == Token::Kind::Number) return make_number(t.value);
    if (t.kind == Token::Kind::Identifier) {
      if (lex_.peek().kind == Token::Kind::Symbol && lex_.peek().text == "(") {
        const auto& table = functions();
        auto it = table.find(t.text);
        if (it == table.end())
          fail(t, "unknown function '" + t.text + "'",
               ExpressionError::Kind::UnknownFunction);
        lex_.take();  // '('
        std::vector<NodePtr> args;
        if (!accept_symbol(')')) {
          args.push_back(expr());
          while (accept_symbol(',')) args.push_back(expr());
          expect_symbol(')');
        }
        if (static_cast<int>(args.size()) != it->second.arity)
          fail(t,
               "function '" + t.text + "' expects " +
                   std::to_string(it->second.arity) + " argument(s), got " +
                   std::to_string(args.size()),
               ExpressionError::Kind::WrongArity);
        auto n = std::make_shared<Node>();
        n->kind = Node::Kind::Call;
        n->name = t.text;
        n->args = std::move(args);
        return n;
      }
      auto n = std::make_shared<Node>();
      n->kind = t.text == "pi" ? Node::Kind::Constant : Node::Kind::Variable;
      n->name = t.text;
      return n;
    }
    if (t.kind == Token::Kind::Symbol && t.text == "(") {
      NodePtr e = expr();
      expect_symbol(')');
      return e;
    }
    fail(t, t.kind == Token::Kind::End
                ? std::string("unexpected end of input")
                : "unexpected token '" + t.text + "'");
  }

  Lexer lex_;
};

double eval_node(const Node& n, const VarFrame& frame) {
  switch (n.kind) {
    case Node::Kind::Number:
      return n.number;
    case Node::Kind::Constant:
      return std::numbers::pi;
    case Node::Kind::Variable:
      return frame.get(n.name);
    case Node::Kind::Unary:
      return -eval_node(*n.args[0], frame);
    case Node::Kind::Binary: {
      const double a = eval_node(*n.args[0], frame);
      const double b = eval_node(*n.args[1], frame);
      switch (n.op) {
        case Op::Add: return a + b;
        case Op::Sub: return a - b;
        case Op::Mul: return a * b;
        case Op::Div: return a / b;
        case Op::Pow: return std::pow(a, b);
        case Op::Neg: break;
      }
      return 0.0;
    }
    case Node::Kind::Call: {
      const FuncInfo& f = functions().at(n.name);
      if (f.arity == 1) return f.fn1(eval_node(*n.args[0], frame));
      return f.fn2(eval_node(*n.args[0], frame), eval_node(*n.args[1], frame));
    }
  }
  return 0.0;
}

void print_node(const Node& n, std::string& out) {
  switch (n.kind) {
    case Node::Kind::Number: {
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.17g", n.number);
      out += buf;
      return;
    }
    case Node::Kind::Constant:
    case Node::Kind::Variable:
      out += n.name;
      return;
    case Node::Kind::Unary:
      out += "(-";
      print_node(*n.args[0], out);
      out += ')';
      return;
    case Node::Kind::Binary: {
      const char* sym = n.op == Op::Add   ? " + "
                        : n.op == Op::Sub ? " - "
                        : n.op == Op::Mul ? " * "
                        : n.op == Op::Div ? " / "
                                          : "^";
      out += '(';
      print_node(*n.args[0], out);
      out += sym;
      print_node(*n.args[1], out);
      out += ')';
      return;
    }
    case Node::Kind::Call:
      out += n.name;
      out += '(';
      for (std::size_t i = 0; i < n.args.size(); ++i) {
        if (i) out += ", ";
        print_node(*n.args[i], out);
      }
      out += ')';
      return;
  }
}

void collect_variables(const Node& n, std::vector<std::string>& out) {
  if (n.kind == Node::Kind::Variable) {
    for (const auto& v : out)
      if (v == n.name) return;
    out.push_back(n.name);
    return;
  }
  for (const auto& a : n.args) collect_variables(*a, out);
}

}  // namespace

Expression::Expression(std::shared_ptr<const Node> root)
    : root_(std::move(root)) {}

Expression Expression::parse(const std::string& text) {
  if (text.empty())
    throw ExpressionError(ExpressionError::Kind::Syntax, 1, 1, "",
                          "empty expression");
  Parser p(text);
  return Expression(p.parse());
}

double Expression::evaluate(const VarFrame& frame) const {
  return eval_node(*root_, frame);
}

std::string Expression::print() const {
  std::string out;
  print_node(*root_, out);
  return out;
}

std::vector<std::string> Expression::variables() const {
  std::vector<std::string> out;
  collect_variables(*root_, out);
  return out;
}

LimitStateExpression Expression::to_limit_state() const {
  auto root = root_;
  return LimitStateExpression::leaf(
      variables(), [root](const VarFrame& f) { return eval_node(*root, f); });
}

}  // namespace relup
