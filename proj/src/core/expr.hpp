#pragma once

#include <memory>
#include <string>
#include <vector>

#include "velocity_space.hpp"

namespace dvb {

// Closed-form expressions over (t, x, v) used for custom force fields and initial data.
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := primary ('^' unary)?
//   primary := number | name | name '(' expr (',' expr)* ')' | '(' expr ')' | '[' expr ',' expr ',' expr ']'
//
// Names: t, x, x1..x3, v, v1..v3, pi, e. Functions: sin, cos, exp, sqrt, cross, dot, norm2.
// x and v are vectors; every node is statically typed as scalar or vector.
class Expr {
 public:
  struct Env {
    double t = 0;
    Vec3 x{};
    Vec3 v{};
  };
  struct Value {
    bool is_vector = false;
    double s = 0;
    Vec3 v{};
  };

  static Expr parse(const std::string& text);

  Value eval(const Env& env) const;
  double eval_scalar(const Env& env) const;
  Vec3 eval_vector(const Env& env) const;

  bool is_vector() const;
  const std::string& text() const { return text_; }

  struct Node;

 private:
  std::string text_;
  std::shared_ptr<const Node> root_;
};

}  // namespace dvb
