#pragma once

// Closed-form scalar expressions used to describe tensor entries, radial
// coefficient profiles and twist angles in scenario files.
//
// Grammar (whitespace insensitive):
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := ('-' | '+') unary | power
//   power   := primary ('^' unary)?          right associative
//   primary := number | name | func '(' expr ')' | '(' expr ')'
//
// Names: x y z (Cartesian), r (= |x|), th / theta (polar angle; in 2D the
// angle atan2(y, x)), ph / phi (azimuth, 3D only), pi, plus any parameter
// bound at parse time. Functions: sin cos tan sqrt exp log abs.

#include <map>
#include <memory>
#include <string>
#include <string_view>

#include <Eigen/Core>

namespace cloak {

enum class Var { X, Y, Z, R, Th, Ph };

struct Variables {
  double x = 0.0, y = 0.0, z = 0.0;
  double r = 0.0, th = 0.0, ph = 0.0;

  /// Fills every slot from a Cartesian point of dimension 1, 2 or 3.
  static Variables from_point(const Eigen::Ref<const Eigen::VectorXd>& p);
  static Variables radius(double r) {
    Variables v;
    v.r = r;
    return v;
  }
  double get(Var v) const;
};

using Parameters = std::map<std::string, double, std::less<>>;

class Expression {
 public:
  struct Node;

  Expression();  // constant zero
  static Expression parse(std::string_view text, const Parameters& params = {});
  static Expression constant(double value);
  static Expression variable(Var v);

  double eval(const Variables& vars) const;
  double operator()(double r) const { return eval(Variables::radius(r)); }

  /// Symbolic derivative with light constant folding.
  Expression derivative(Var v) const;
  bool depends_on(Var v) const;
  bool is_constant() const;

  /// Canonical printed form; re-parses to an equivalent expression.
  std::string str() const;

 private:
  explicit Expression(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  std::shared_ptr<const Node> node_;
};

}  // namespace cloak
