#pragma once

#include <array>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "fbdsde/errors.hpp"

namespace fbdsde {

// Evaluation slots for model expressions. Index order is the calling
// convention everywhere an expression is evaluated.
enum class Var : int { t = 0, y = 1, Y = 2, z = 3, Z = 4, v = 5, x = 6 };
constexpr int kNumVars = 7;

inline const char* var_name(Var v) {
  static const char* names[kNumVars] = {"t", "y", "Y", "z", "Z", "v", "x"};
  return names[static_cast<int>(v)];
}

inline int var_slot_from_name(const std::string& s) {
  for (int i = 0; i < kNumVars; ++i)
    if (s == var_name(static_cast<Var>(i))) return i;
  return -1;
}

namespace detail {

enum class Func : int { sin, cos, tan, sinh, cosh, tanh, exp, log, sqrt };

inline const char* func_name(Func f) {
  static const char* names[] = {"sin",  "cos", "tan", "sinh", "cosh",
                                "tanh", "exp", "log", "sqrt"};
  return names[static_cast<int>(f)];
}

inline int func_from_name(const std::string& s) {
  for (int i = 0; i < 9; ++i)
    if (s == func_name(static_cast<Func>(i))) return i;
  return -1;
}

inline double apply_func(Func f, double a) {
  switch (f) {
    case Func::sin: return std::sin(a);
    case Func::cos: return std::cos(a);
    case Func::tan: return std::tan(a);
    case Func::sinh: return std::sinh(a);
    case Func::cosh: return std::cosh(a);
    case Func::tanh: return std::tanh(a);
    case Func::exp: return std::exp(a);
    case Func::log: return std::log(a);
    case Func::sqrt: return std::sqrt(a);
  }
  return 0.0;
}

struct ExprNode {
  enum class Kind { number, variable, add, sub, mul, div, pow, neg, call };
  Kind kind;
  double value = 0.0;  // number
  int slot = -1;       // variable
  Func func{};         // call
  std::shared_ptr<const ExprNode> a, b;
};

using NodePtr = std::shared_ptr<const ExprNode>;

inline NodePtr make_num(double v) {
  auto n = std::make_shared<ExprNode>();
  n->kind = ExprNode::Kind::number;
  n->value = v;
  return n;
}

inline NodePtr make_var(int slot) {
  auto n = std::make_shared<ExprNode>();
  n->kind = ExprNode::Kind::variable;
  n->slot = slot;
  return n;
}

inline bool is_num(const NodePtr& n, double v) {
  return n->kind == ExprNode::Kind::number && n->value == v;
}

inline NodePtr make_bin(ExprNode::Kind k, NodePtr a, NodePtr b);
inline NodePtr make_neg(NodePtr a);

inline NodePtr make_add(NodePtr a, NodePtr b) {
  if (is_num(a, 0.0)) return b;
  if (is_num(b, 0.0)) return a;
  if (a->kind == ExprNode::Kind::number && b->kind == ExprNode::Kind::number)
    return make_num(a->value + b->value);
  return make_bin(ExprNode::Kind::add, a, b);
}

inline NodePtr make_sub(NodePtr a, NodePtr b) {
  if (is_num(b, 0.0)) return a;
  if (is_num(a, 0.0)) return make_neg(b);
  if (a->kind == ExprNode::Kind::number && b->kind == ExprNode::Kind::number)
    return make_num(a->value - b->value);
  return make_bin(ExprNode::Kind::sub, a, b);
}

inline NodePtr make_mul(NodePtr a, NodePtr b) {
  if (is_num(a, 0.0) || is_num(b, 0.0)) return make_num(0.0);
  if (is_num(a, 1.0)) return b;
  if (is_num(b, 1.0)) return a;
  if (a->kind == ExprNode::Kind::number && b->kind == ExprNode::Kind::number)
    return make_num(a->value * b->value);
  return make_bin(ExprNode::Kind::mul, a, b);
}

inline NodePtr make_div(NodePtr a, NodePtr b) {
  if (is_num(a, 0.0) && !is_num(b, 0.0)) return make_num(0.0);
  if (is_num(b, 1.0)) return a;
  if (a->kind == ExprNode::Kind::number && b->kind == ExprNode::Kind::number &&
      b->value != 0.0)
    return make_num(a->value / b->value);
  return make_bin(ExprNode::Kind::div, a, b);
}

inline NodePtr make_pow(NodePtr a, NodePtr b) {
  if (is_num(b, 0.0)) return make_num(1.0);
  if (is_num(b, 1.0)) return a;
  if (a->kind == ExprNode::Kind::number && b->kind == ExprNode::Kind::number)
    return make_num(std::pow(a->value, b->value));
  return make_bin(ExprNode::Kind::pow, a, b);
}

inline NodePtr make_neg(NodePtr a) {
  if (a->kind == ExprNode::Kind::number) return make_num(-a->value);
  if (a->kind == ExprNode::Kind::neg) return a->a;
  auto n = std::make_shared<ExprNode>();
  n->kind = ExprNode::Kind::neg;
  n->a = std::move(a);
  return n;
}

inline NodePtr make_bin(ExprNode::Kind k, NodePtr a, NodePtr b) {
  auto n = std::make_shared<ExprNode>();
  n->kind = k;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}

inline NodePtr make_call(Func f, NodePtr a) {
  if (a->kind == ExprNode::Kind::number) return make_num(apply_func(f, a->value));
  auto n = std::make_shared<ExprNode>();
  n->kind = ExprNode::Kind::call;
  n->func = f;
  n->a = std::move(a);
  return n;
}

inline NodePtr differentiate(const NodePtr& n, int slot) {
  using K = ExprNode::Kind;
  switch (n->kind) {
    case K::number: return make_num(0.0);
    case K::variable: return make_num(n->slot == slot ? 1.0 : 0.0);
    case K::add: return make_add(differentiate(n->a, slot), differentiate(n->b, slot));
    case K::sub: return make_sub(differentiate(n->a, slot), differentiate(n->b, slot));
    case K::mul:
      return make_add(make_mul(differentiate(n->a, slot), n->b),
                      make_mul(n->a, differentiate(n->b, slot)));
    case K::div:
      return make_div(make_sub(make_mul(differentiate(n->a, slot), n->b),
                               make_mul(n->a, differentiate(n->b, slot))),
                      make_pow(n->b, make_num(2.0)));
    case K::pow: {
      const NodePtr da = differentiate(n->a, slot);
      const NodePtr db = differentiate(n->b, slot);
      if (is_num(db, 0.0)) {
        // d a^c = c a^(c-1) a'
        return make_mul(make_mul(n->b, make_pow(n->a, make_sub(n->b, make_num(1.0)))), da);
      }
      // d a^b = a^b (b' log a + b a'/a)
      return make_mul(make_pow(n->a, n->b),
                      make_add(make_mul(db, make_call(Func::log, n->a)),
                               make_div(make_mul(n->b, da), n->a)));
    }
    case K::neg: return make_neg(differentiate(n->a, slot));
    case K::call: {
      const NodePtr da = differentiate(n->a, slot);
      if (is_num(da, 0.0)) return make_num(0.0);
      NodePtr outer;
      switch (n->func) {
        case Func::sin: outer = make_call(Func::cos, n->a); break;
        case Func::cos: outer = make_neg(make_call(Func::sin, n->a)); break;
        case Func::tan:
          outer = make_div(make_num(1.0),
                           make_pow(make_call(Func::cos, n->a), make_num(2.0)));
          break;
        case Func::sinh: outer = make_call(Func::cosh, n->a); break;
        case Func::cosh: outer = make_call(Func::sinh, n->a); break;
        case Func::tanh:
          outer = make_div(make_num(1.0),
                           make_pow(make_call(Func::cosh, n->a), make_num(2.0)));
          break;
        case Func::exp: outer = make_call(Func::exp, n->a); break;
        case Func::log: outer = make_div(make_num(1.0), n->a); break;
        case Func::sqrt:
          outer = make_div(make_num(0.5), make_call(Func::sqrt, n->a));
          break;
      }
      return make_mul(outer, da);
    }
  }
  return make_num(0.0);
}

inline void collect_vars(const NodePtr& n, std::array<bool, kNumVars>& used) {
  if (n->kind == ExprNode::Kind::variable) used[n->slot] = true;
  if (n->a) collect_vars(n->a, used);
  if (n->b) collect_vars(n->b, used);
}

inline int precedence(const ExprNode& n) {
  using K = ExprNode::Kind;
  switch (n.kind) {
    case K::add:
    case K::sub: return 1;
    case K::mul:
    case K::div: return 2;
    case K::neg: return 3;
    case K::pow: return 4;
    default: return 5;
  }
}

inline void print_node(const NodePtr& n, std::ostringstream& out, int parent_prec) {
  using K = ExprNode::Kind;
  const int prec = precedence(*n);
  const bool parens = prec < parent_prec;
  if (parens) out << '(';
  switch (n->kind) {
    case K::number: {
      std::ostringstream tmp;
      tmp.precision(15);
      tmp << n->value;
      out << tmp.str();
      break;
    }
    case K::variable: out << var_name(static_cast<Var>(n->slot)); break;
    case K::add:
      print_node(n->a, out, prec);
      out << " + ";
      print_node(n->b, out, prec);
      break;
    case K::sub:
      print_node(n->a, out, prec);
      out << " - ";
      print_node(n->b, out, prec + 1);
      break;
    case K::mul:
      print_node(n->a, out, prec);
      out << "*";
      print_node(n->b, out, prec);
      break;
    case K::div:
      print_node(n->a, out, prec);
      out << "/";
      print_node(n->b, out, prec + 1);
      break;
    case K::pow:
      print_node(n->a, out, prec + 1);
      out << "^";
      print_node(n->b, out, prec);
      break;
    case K::neg:
      out << "-";
      print_node(n->a, out, prec + 1);
      break;
    case K::call:
      out << func_name(n->func) << "(";
      print_node(n->a, out, 0);
      out << ")";
      break;
  }
  if (parens) out << ')';
}

// Flat postfix program; evaluation is allocation free and re-entrant.
struct Instr {
  enum class Op : int { push_num, push_var, add, sub, mul, div, pow, neg, call };
  Op op;
  double value = 0.0;
  int slot = 0;
  Func func{};
};

inline void compile_node(const NodePtr& n, std::vector<Instr>& prog) {
  using K = ExprNode::Kind;
  if (n->a) compile_node(n->a, prog);
  if (n->b) compile_node(n->b, prog);
  Instr ins{};
  switch (n->kind) {
    case K::number: ins.op = Instr::Op::push_num; ins.value = n->value; break;
    case K::variable: ins.op = Instr::Op::push_var; ins.slot = n->slot; break;
    case K::add: ins.op = Instr::Op::add; break;
    case K::sub: ins.op = Instr::Op::sub; break;
    case K::mul: ins.op = Instr::Op::mul; break;
    case K::div: ins.op = Instr::Op::div; break;
    case K::pow: ins.op = Instr::Op::pow; break;
    case K::neg: ins.op = Instr::Op::neg; break;
    case K::call: ins.op = Instr::Op::call; ins.func = n->func; break;
  }
  prog.push_back(ins);
}

class Parser {
 public:
  explicit Parser(const std::string& text) : s_(text) {}

  NodePtr run() {
    NodePtr e = parse_expr();
    skip_ws();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    return e;
  }

 private:
  const std::string& s_;
  size_t pos_ = 0;
  int depth_ = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw input_error("expression parse error at position " +
                      std::to_string(pos_) + ": " + what + " in \"" + s_ + "\"");
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool eat(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  struct DepthGuard {
    Parser* p;
    explicit DepthGuard(Parser* par) : p(par) {
      if (++p->depth_ > 200) p->fail("expression too deeply nested");
    }
    ~DepthGuard() { --p->depth_; }
  };

  NodePtr parse_expr() {
    DepthGuard g(this);
    NodePtr left = parse_term();
    for (;;) {
      if (eat('+')) left = make_add(left, parse_term());
      else if (eat('-')) left = make_sub(left, parse_term());
      else return left;
    }
  }

  NodePtr parse_term() {
    DepthGuard g(this);
    NodePtr left = parse_unary();
    for (;;) {
      if (eat('*')) left = make_mul(left, parse_unary());
      else if (eat('/')) left = make_div(left, parse_unary());
      else return left;
    }
  }

  NodePtr parse_unary() {
    DepthGuard g(this);
    if (eat('-')) return make_neg(parse_unary());
    if (eat('+')) return parse_unary();
    return parse_power();
  }

  NodePtr parse_power() {
    DepthGuard g(this);
    NodePtr base = parse_primary();
    if (eat('^')) return make_pow(base, parse_unary());
    return base;
  }

  NodePtr parse_primary() {
    DepthGuard g(this);
    skip_ws();
    if (pos_ >= s_.size()) fail("unexpected end of expression");
    const char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      NodePtr inner = parse_expr();
      if (!eat(')')) fail("missing ')'");
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const char* start = s_.c_str() + pos_;
      char* end = nullptr;
      const double v = std::strtod(start, &end);
      if (end == start) fail("malformed number");
      pos_ += static_cast<size_t>(end - start);
      return make_num(v);
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t start = pos_;
      while (pos_ < s_.size() &&
             (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
        ++pos_;
      const std::string name = s_.substr(start, pos_ - start);
      if (eat('(')) {
        const int f = func_from_name(name);
        if (f < 0) {
          pos_ = start;
          fail("unknown function '" + name + "'");
        }
        NodePtr arg = parse_expr();
        if (!eat(')')) fail("missing ')' after argument of " + name);
        return make_call(static_cast<Func>(f), arg);
      }
      const int slot = var_slot_from_name(name);
      if (slot < 0) {
        pos_ = start;
        fail("unknown variable '" + name + "' (expected one of t, y, Y, z, Z, v, x)");
      }
      return make_var(slot);
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }
};

}  // namespace detail

// Immutable scalar expression over (t, y, Y, z, Z, v, x) with symbolic first
// derivatives. eval() is re-entrant and allocation free.
class Expression {
 public:
  Expression() : Expression(detail::make_num(0.0)) {}

  static Expression parse(const std::string& text) {
    detail::Parser p(text);
    return Expression(p.run());
  }

  static Expression constant(double v) { return Expression(detail::make_num(v)); }
  static Expression variable(Var v) {
    return Expression(detail::make_var(static_cast<int>(v)));
  }

  double eval(const double* slots) const {
    double stack[64];
    int top = -1;
    for (const auto& ins : prog_) {
      using Op = detail::Instr::Op;
      switch (ins.op) {
        case Op::push_num: stack[++top] = ins.value; break;
        case Op::push_var: stack[++top] = slots[ins.slot]; break;
        case Op::add: --top; stack[top] += stack[top + 1]; break;
        case Op::sub: --top; stack[top] -= stack[top + 1]; break;
        case Op::mul: --top; stack[top] *= stack[top + 1]; break;
        case Op::div: --top; stack[top] /= stack[top + 1]; break;
        case Op::pow: --top; stack[top] = std::pow(stack[top], stack[top + 1]); break;
        case Op::neg: stack[top] = -stack[top]; break;
        case Op::call: stack[top] = detail::apply_func(ins.func, stack[top]); break;
      }
    }
    return top >= 0 ? stack[top] : 0.0;
  }

  Expression diff(Var v) const {
    return Expression(detail::differentiate(root_, static_cast<int>(v)));
  }

  bool uses(Var v) const {
    std::array<bool, kNumVars> used{};
    detail::collect_vars(root_, used);
    return used[static_cast<int>(v)];
  }

  bool is_zero() const { return detail::is_num(root_, 0.0); }

  std::string str() const {
    std::ostringstream out;
    detail::print_node(root_, out, 0);
    return out.str();
  }

 private:
  explicit Expression(detail::NodePtr root) : root_(std::move(root)) {
    int depth = 0, max_depth = 0;
    std::vector<detail::Instr> prog;
    detail::compile_node(root_, prog);
    for (const auto& ins : prog) {
      using Op = detail::Instr::Op;
      if (ins.op == Op::push_num || ins.op == Op::push_var) ++depth;
      else if (ins.op != Op::neg && ins.op != Op::call) --depth;
      max_depth = std::max(max_depth, depth);
    }
    require(max_depth <= 64, "expression evaluation stack too deep");
    prog_ = std::move(prog);
  }

  detail::NodePtr root_;
  std::vector<detail::Instr> prog_;
};

}  // namespace fbdsde
