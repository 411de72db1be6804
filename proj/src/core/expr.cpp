#include "expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <numbers>

#include "error.hpp"

namespace dvb {

struct Expr::Node {
  enum class Op { num, var_t, var_x, var_v, comp_x, comp_v, add, sub, mul, div, neg, pow, sin, cos, exp, sqrt, cross, dot, norm2, vec };
  Op op = Op::num;
  bool vec = false;
  double value = 0;
  int comp = 0;
  std::vector<std::shared_ptr<const Node>> kids;
};

namespace {

using NodeP = std::shared_ptr<const Expr::Node>;
using Op = Expr::Node::Op;

class Parser {
 public:
  explicit Parser(const std::string& s) : s_(s) {}

  NodeP parse() {
    NodeP n = expr();
    skip();
    if (pos_ != s_.size()) error("unexpected '" + std::string(1, s_[pos_]) + "'");
    return n;
  }

 private:
  [[noreturn]] void error(const std::string& msg) const {
    fail(Errc::config, "expression \"" + s_ + "\": " + msg + " at position " + std::to_string(pos_));
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

  void expect(char c) {
    if (!accept(c)) error(std::string("expected '") + c + "'");
  }

  static NodeP make(Op op, bool vec, std::vector<NodeP> kids = {}, double value = 0, int comp = 0) {
    auto n = std::make_shared<Expr::Node>();
    n->op = op;
    n->vec = vec;
    n->kids = std::move(kids);
    n->value = value;
    n->comp = comp;
    return n;
  }

  NodeP binary(Op op, NodeP a, NodeP b) {
    switch (op) {
      case Op::add:
      case Op::sub:
        if (a->vec != b->vec) error("cannot add a scalar and a vector");
        return make(op, a->vec, {a, b});
      case Op::mul:
        if (a->vec && b->vec) error("'*' between two vectors; use dot or cross");
        return make(op, a->vec || b->vec, {a, b});
      case Op::div:
        if (b->vec) error("division by a vector");
        return make(op, a->vec, {a, b});
      case Op::pow:
        if (a->vec || b->vec) error("'^' needs scalars");
        return make(op, false, {a, b});
      default: error("internal");
    }
  }

  NodeP expr() {
    NodeP n = term();
    for (;;) {
      if (accept('+'))
        n = binary(Op::add, n, term());
      else if (accept('-'))
        n = binary(Op::sub, n, term());
      else
        return n;
    }
  }

  NodeP term() {
    NodeP n = unary();
    for (;;) {
      if (accept('*'))
        n = binary(Op::mul, n, unary());
      else if (accept('/'))
        n = binary(Op::div, n, unary());
      else
        return n;
    }
  }

  NodeP unary() {
    if (accept('-')) {
      NodeP a = unary();
      return make(Op::neg, a->vec, {a});
    }
    if (accept('+')) return unary();
    return power();
  }

  NodeP power() {
    NodeP a = primary();
    if (accept('^')) return binary(Op::pow, a, unary());
    return a;
  }

  NodeP primary() {
    skip();
    if (pos_ >= s_.size()) error("unexpected end");
    char c = s_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const char* begin = s_.c_str() + pos_;
      char* end = nullptr;
      double v = std::strtod(begin, &end);
      if (end == begin) error("bad number");
      pos_ += static_cast<std::size_t>(end - begin);
      return make(Op::num, false, {}, v);
    }
    if (accept('(')) {
      NodeP n = expr();
      expect(')');
      return n;
    }
    if (accept('[')) {
      NodeP a = expr();
      expect(',');
      NodeP b = expr();
      expect(',');
      NodeP d = expr();
      expect(']');
      if (a->vec || b->vec || d->vec) error("vector literal components must be scalars");
      return make(Op::vec, true, {a, b, d});
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      std::size_t start = pos_;
      while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
      std::string name = s_.substr(start, pos_ - start);
      skip();
      if (pos_ < s_.size() && s_[pos_] == '(') return call(name);
      return variable(name);
    }
    error(std::string("unexpected '") + c + "'");
  }

  NodeP variable(const std::string& name) {
    if (name == "t") return make(Op::var_t, false);
    if (name == "x") return make(Op::var_x, true);
    if (name == "v") return make(Op::var_v, true);
    if (name == "pi") return make(Op::num, false, {}, std::numbers::pi);
    if (name == "e") return make(Op::num, false, {}, std::numbers::e);
    if (name.size() == 2 && (name[0] == 'x' || name[0] == 'v') && name[1] >= '1' && name[1] <= '3')
      return make(name[0] == 'x' ? Op::comp_x : Op::comp_v, false, {}, 0, name[1] - '1');
    error("unknown name '" + name + "'");
  }

  NodeP call(const std::string& name) {
    expect('(');
    std::vector<NodeP> args;
    if (!accept(')')) {
      do args.push_back(expr());
      while (accept(','));
      expect(')');
    }
    auto arity = [&](std::size_t k) {
      if (args.size() != k) error(name + " takes " + std::to_string(k) + " argument(s)");
    };
    auto scalar_args = [&] {
      for (auto& a : args)
        if (a->vec) error(name + " needs scalar arguments");
    };
    auto vector_args = [&] {
      for (auto& a : args)
        if (!a->vec) error(name + " needs vector arguments");
    };
    if (name == "sin" || name == "cos" || name == "exp" || name == "sqrt") {
      arity(1);
      scalar_args();
      Op op = name == "sin" ? Op::sin : name == "cos" ? Op::cos : name == "exp" ? Op::exp : Op::sqrt;
      return make(op, false, args);
    }
    if (name == "cross" || name == "dot") {
      arity(2);
      vector_args();
      return make(name == "cross" ? Op::cross : Op::dot, name == "cross", args);
    }
    if (name == "norm2") {
      arity(1);
      vector_args();
      return make(Op::norm2, false, args);
    }
    error("unknown function '" + name + "'");
  }

  const std::string& s_;
  std::size_t pos_ = 0;
};

Expr::Value eval_node(const Expr::Node& n, const Expr::Env& env) {
  using V = Expr::Value;
  auto S = [](double s) { return V{false, s, {}}; };
  auto Vv = [](Vec3 v) { return V{true, 0, v}; };
  switch (n.op) {
    case Op::num: return S(n.value);
    case Op::var_t: return S(env.t);
    case Op::var_x: return Vv(env.x);
    case Op::var_v: return Vv(env.v);
    case Op::comp_x: return S(env.x[n.comp]);
    case Op::comp_v: return S(env.v[n.comp]);
    case Op::neg: {
      V a = eval_node(*n.kids[0], env);
      return a.is_vector ? Vv({-a.v[0], -a.v[1], -a.v[2]}) : S(-a.s);
    }
    case Op::add:
    case Op::sub: {
      V a = eval_node(*n.kids[0], env), b = eval_node(*n.kids[1], env);
      double sg = n.op == Op::add ? 1.0 : -1.0;
      if (!a.is_vector) return S(a.s + sg * b.s);
      return Vv({a.v[0] + sg * b.v[0], a.v[1] + sg * b.v[1], a.v[2] + sg * b.v[2]});
    }
    case Op::mul: {
      V a = eval_node(*n.kids[0], env), b = eval_node(*n.kids[1], env);
      if (!a.is_vector && !b.is_vector) return S(a.s * b.s);
      if (a.is_vector) std::swap(a, b);
      return Vv({a.s * b.v[0], a.s * b.v[1], a.s * b.v[2]});
    }
    case Op::div: {
      V a = eval_node(*n.kids[0], env), b = eval_node(*n.kids[1], env);
      if (!a.is_vector) return S(a.s / b.s);
      return Vv({a.v[0] / b.s, a.v[1] / b.s, a.v[2] / b.s});
    }
    case Op::pow: return S(std::pow(eval_node(*n.kids[0], env).s, eval_node(*n.kids[1], env).s));
    case Op::sin: return S(std::sin(eval_node(*n.kids[0], env).s));
    case Op::cos: return S(std::cos(eval_node(*n.kids[0], env).s));
    case Op::exp: return S(std::exp(eval_node(*n.kids[0], env).s));
    case Op::sqrt: return S(std::sqrt(eval_node(*n.kids[0], env).s));
    case Op::cross: return Vv(cross(eval_node(*n.kids[0], env).v, eval_node(*n.kids[1], env).v));
    case Op::dot: return S(dot(eval_node(*n.kids[0], env).v, eval_node(*n.kids[1], env).v));
    case Op::norm2: return S(norm2(eval_node(*n.kids[0], env).v));
    case Op::vec:
      return Vv({eval_node(*n.kids[0], env).s, eval_node(*n.kids[1], env).s, eval_node(*n.kids[2], env).s});
  }
  return S(0);
}

}  // namespace

Expr Expr::parse(const std::string& text) {
  Expr e;
  e.text_ = text;
  e.root_ = Parser(e.text_).parse();
  return e;
}

Expr::Value Expr::eval(const Env& env) const {
  require(root_ != nullptr, Errc::invalid_argument, "empty expression");
  return eval_node(*root_, env);
}

double Expr::eval_scalar(const Env& env) const {
  Value v = eval(env);
  require(!v.is_vector, Errc::config, "expression \"" + text_ + "\" is a vector, expected a scalar");
  return v.s;
}

Vec3 Expr::eval_vector(const Env& env) const {
  Value v = eval(env);
  require(v.is_vector, Errc::config, "expression \"" + text_ + "\" is a scalar, expected a vector");
  return v.v;
}

bool Expr::is_vector() const { return root_ && root_->vec; }

}  // namespace dvb
