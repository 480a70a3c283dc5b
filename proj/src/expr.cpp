#include "affreal/expr.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <numbers>
#include <vector>

#include "affreal/error.hpp"

namespace affreal {

struct Expression::Node {
  enum class Op { Num, Var, Neg, Add, Sub, Mul, Div, Pow, Call };
  enum class Fn { Sqrt, Exp, Log, Tanh, Sin, Cos, Abs };
  Op op = Op::Num;
  double value = 0.0;
  int var = 0;
  Fn fn = Fn::Sqrt;
  std::shared_ptr<const Node> a;
  std::shared_ptr<const Node> b;

  double eval(std::span<const double> y) const {
    switch (op) {
      case Op::Num: return value;
      case Op::Var: return y[static_cast<std::size_t>(var - 1)];
      case Op::Neg: return -a->eval(y);
      case Op::Add: return a->eval(y) + b->eval(y);
      case Op::Sub: return a->eval(y) - b->eval(y);
      case Op::Mul: return a->eval(y) * b->eval(y);
      case Op::Div: return a->eval(y) / b->eval(y);
      case Op::Pow: return std::pow(a->eval(y), b->eval(y));
      case Op::Call: {
        const double v = a->eval(y);
        switch (fn) {
          case Fn::Sqrt: return std::sqrt(v);
          case Fn::Exp: return std::exp(v);
          case Fn::Log: return std::log(v);
          case Fn::Tanh: return std::tanh(v);
          case Fn::Sin: return std::sin(v);
          case Fn::Cos: return std::cos(v);
          case Fn::Abs: return std::abs(v);
        }
      }
    }
    return 0.0;
  }
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;
using Node = Expression::Node;

class Parser {
 public:
  Parser(std::string_view text, int n_vars) : s_(text), n_vars_(n_vars) {}

  NodePtr parse() {
    NodePtr n = expr();
    skip();
    if (pos_ != s_.size()) fail("unexpected character");
    return n;
  }

  int max_var() const { return max_var_; }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorKind::ParseError,
                "expression '" + std::string(s_) + "', column " + std::to_string(pos_ + 1) + ": " + what);
  }

  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  static NodePtr binary(Node::Op op, NodePtr a, NodePtr b) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->a = std::move(a);
    n->b = std::move(b);
    return n;
  }

  NodePtr expr() {
    NodePtr lhs = term();
    for (;;) {
      if (accept('+')) {
        lhs = binary(Node::Op::Add, lhs, term());
      } else if (accept('-')) {
        lhs = binary(Node::Op::Sub, lhs, term());
      } else {
        return lhs;
      }
    }
  }

  NodePtr term() {
    NodePtr lhs = unary();
    for (;;) {
      if (accept('*')) {
        lhs = binary(Node::Op::Mul, lhs, unary());
      } else if (accept('/')) {
        lhs = binary(Node::Op::Div, lhs, unary());
      } else {
        return lhs;
      }
    }
  }

  NodePtr unary() {
    if (accept('-')) {
      auto n = std::make_shared<Node>();
      n->op = Node::Op::Neg;
      n->a = unary();
      return n;
    }
    if (accept('+')) return unary();
    NodePtr base = primary();
    if (accept('^')) return binary(Node::Op::Pow, base, unary());
    return base;
  }

  NodePtr primary() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end of input");
    const char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      NodePtr n = expr();
      if (!accept(')')) fail("expected ')'");
      return n;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      double v = 0.0;
      auto [end, ec] = std::from_chars(s_.data() + pos_, s_.data() + s_.size(), v);
      if (ec != std::errc()) fail("bad number");
      pos_ = static_cast<std::size_t>(end - s_.data());
      auto n = std::make_shared<Node>();
      n->value = v;
      return n;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      const std::size_t start = pos_;
      while (pos_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      const std::string_view word = s_.substr(start, pos_ - start);
      if (word == "pi") {
        auto n = std::make_shared<Node>();
        n->value = std::numbers::pi;
        return n;
      }
      if (word.size() > 1 && word[0] == 'y' &&
          word.find_first_not_of("0123456789", 1) == std::string_view::npos) {
        int idx = 0;
        std::from_chars(word.data() + 1, word.data() + word.size(), idx);
        if (idx < 1 || idx > n_vars_) {
          pos_ = start;
          fail("variable " + std::string(word) + " outside y1..y" + std::to_string(n_vars_));
        }
        max_var_ = std::max(max_var_, idx);
        auto n = std::make_shared<Node>();
        n->op = Node::Op::Var;
        n->var = idx;
        return n;
      }
      static const std::pair<std::string_view, Node::Fn> kFns[] = {
          {"sqrt", Node::Fn::Sqrt}, {"exp", Node::Fn::Exp}, {"log", Node::Fn::Log},
          {"tanh", Node::Fn::Tanh}, {"sin", Node::Fn::Sin}, {"cos", Node::Fn::Cos},
          {"abs", Node::Fn::Abs}};
      for (const auto& [name, fn] : kFns) {
        if (word != name) continue;
        if (!accept('(')) fail("expected '(' after " + std::string(name));
        auto n = std::make_shared<Node>();
        n->op = Node::Op::Call;
        n->fn = fn;
        n->a = expr();
        if (!accept(')')) fail("expected ')'");
        return n;
      }
      pos_ = start;
      fail("unknown identifier '" + std::string(word) + "'");
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  int n_vars_;
  int max_var_ = 0;
};

}  // namespace

Expression Expression::parse(std::string_view text, int n_vars) {
  Parser p(text, n_vars);
  Expression e;
  e.root_ = p.parse();
  e.text_ = std::string(text);
  e.max_var_ = p.max_var();
  return e;
}

Expression Expression::constant(double c) {
  auto n = std::make_shared<Node>();
  n->value = c;
  Expression e;
  e.root_ = std::move(n);
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, c);
  e.text_.assign(buf, end);
  return e;
}

double Expression::operator()(std::span<const double> y) const {
  if (!root_) return 1.0;
  if (static_cast<int>(y.size()) < max_var_) {
    throw Error(ErrorKind::InvalidArgument, "expression '" + text_ + "' needs " +
                                                std::to_string(max_var_) + " coordinates");
  }
  return root_->eval(y);
}

}  // namespace affreal
