#include "cloak/expression.hpp"

#include <charconv>
#include <cmath>
#include <numbers>
#include <vector>

#include "cloak/errors.hpp"

namespace cloak {

double Variables::get(Var v) const {
  switch (v) {
    case Var::X: return x;
    case Var::Y: return y;
    case Var::Z: return z;
    case Var::R: return r;
    case Var::Th: return th;
    case Var::Ph: return ph;
  }
  return 0.0;
}

Variables Variables::from_point(const Eigen::Ref<const Eigen::VectorXd>& p) {
  Variables v;
  const auto n = p.size();
  if (n >= 1) v.x = p[0];
  if (n >= 2) v.y = p[1];
  if (n >= 3) v.z = p[2];
  v.r = p.norm();
  if (n == 2) {
    v.th = std::atan2(v.y, v.x);
  } else if (n >= 3) {
    v.th = v.r > 0.0 ? std::acos(std::clamp(v.z / v.r, -1.0, 1.0)) : 0.0;
    v.ph = std::atan2(v.y, v.x);
  }
  return v;
}

namespace {

enum class Op { Const, Variable, Neg, Add, Sub, Mul, Div, Pow, Func };
enum class Fn { Sin, Cos, Tan, Sqrt, Exp, Log, Abs, Sign };

}  // namespace

struct Expression::Node {
  Op op = Op::Const;
  double value = 0.0;
  Var var = Var::R;
  Fn fn = Fn::Sin;
  std::shared_ptr<const Node> a, b;
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;

NodePtr make_const(double v) {
  auto n = std::make_shared<Expression::Node>();
  n->op = Op::Const;
  n->value = v;
  return n;
}

NodePtr make_var(Var v) {
  auto n = std::make_shared<Expression::Node>();
  n->op = Op::Variable;
  n->var = v;
  return n;
}

bool is_const(const NodePtr& n, double v) { return n->op == Op::Const && n->value == v; }

double eval_node(const Expression::Node& n, const Variables& vars);

NodePtr make_unary(Op op, NodePtr a, Fn fn = Fn::Sin) {
  auto n = std::make_shared<Expression::Node>();
  n->op = op;
  n->fn = fn;
  n->a = std::move(a);
  if (n->a->op == Op::Const) return make_const(eval_node(*n, Variables{}));
  return n;
}

NodePtr make_binary(Op op, NodePtr a, NodePtr b) {
  if (a->op == Op::Const && b->op == Op::Const) {
    Expression::Node tmp;
    tmp.op = op;
    tmp.a = a;
    tmp.b = b;
    return make_const(eval_node(tmp, Variables{}));
  }
  switch (op) {
    case Op::Add:
      if (is_const(a, 0.0)) return b;
      if (is_const(b, 0.0)) return a;
      break;
    case Op::Sub:
      if (is_const(b, 0.0)) return a;
      if (is_const(a, 0.0)) return make_unary(Op::Neg, b);
      break;
    case Op::Mul:
      if (is_const(a, 0.0) || is_const(b, 0.0)) return make_const(0.0);
      if (is_const(a, 1.0)) return b;
      if (is_const(b, 1.0)) return a;
      break;
    case Op::Div:
      if (is_const(a, 0.0)) return make_const(0.0);
      if (is_const(b, 1.0)) return a;
      break;
    case Op::Pow:
      if (is_const(b, 0.0)) return make_const(1.0);
      if (is_const(b, 1.0)) return a;
      break;
    default:
      break;
  }
  auto n = std::make_shared<Expression::Node>();
  n->op = op;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}

double eval_fn(Fn fn, double x) {
  switch (fn) {
    case Fn::Sin: return std::sin(x);
    case Fn::Cos: return std::cos(x);
    case Fn::Tan: return std::tan(x);
    case Fn::Sqrt: return std::sqrt(x);
    case Fn::Exp: return std::exp(x);
    case Fn::Log: return std::log(x);
    case Fn::Abs: return std::abs(x);
    case Fn::Sign: return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
  }
  return 0.0;
}

double eval_node(const Expression::Node& n, const Variables& vars) {
  switch (n.op) {
    case Op::Const: return n.value;
    case Op::Variable: return vars.get(n.var);
    case Op::Neg: return -eval_node(*n.a, vars);
    case Op::Add: return eval_node(*n.a, vars) + eval_node(*n.b, vars);
    case Op::Sub: return eval_node(*n.a, vars) - eval_node(*n.b, vars);
    case Op::Mul: return eval_node(*n.a, vars) * eval_node(*n.b, vars);
    case Op::Div: return eval_node(*n.a, vars) / eval_node(*n.b, vars);
    case Op::Pow: {
      const double base = eval_node(*n.a, vars);
      if (n.b->op == Op::Const) {
        const double e = n.b->value;
        if (e == 2.0) return base * base;
        if (e == 3.0) return base * base * base;
      }
      return std::pow(base, eval_node(*n.b, vars));
    }
    case Op::Func: return eval_fn(n.fn, eval_node(*n.a, vars));
  }
  return 0.0;
}

bool depends(const Expression::Node& n, Var v) {
  switch (n.op) {
    case Op::Const: return false;
    case Op::Variable: return n.var == v;
    case Op::Neg:
    case Op::Func: return depends(*n.a, v);
    default: return depends(*n.a, v) || depends(*n.b, v);
  }
}

NodePtr mul(NodePtr a, NodePtr b) { return make_binary(Op::Mul, std::move(a), std::move(b)); }
NodePtr add(NodePtr a, NodePtr b) { return make_binary(Op::Add, std::move(a), std::move(b)); }
NodePtr sub(NodePtr a, NodePtr b) { return make_binary(Op::Sub, std::move(a), std::move(b)); }
NodePtr divide(NodePtr a, NodePtr b) { return make_binary(Op::Div, std::move(a), std::move(b)); }
NodePtr func(Fn fn, NodePtr a) { return make_unary(Op::Func, std::move(a), fn); }

NodePtr diff(const NodePtr& n, Var v) {
  if (!depends(*n, v)) return make_const(0.0);
  switch (n->op) {
    case Op::Const: return make_const(0.0);
    case Op::Variable: return make_const(1.0);
    case Op::Neg: return make_unary(Op::Neg, diff(n->a, v));
    case Op::Add: return add(diff(n->a, v), diff(n->b, v));
    case Op::Sub: return sub(diff(n->a, v), diff(n->b, v));
    case Op::Mul: return add(mul(diff(n->a, v), n->b), mul(n->a, diff(n->b, v)));
    case Op::Div:
      return divide(sub(mul(diff(n->a, v), n->b), mul(n->a, diff(n->b, v))),
                    mul(n->b, n->b));
    case Op::Pow: {
      if (!depends(*n->b, v)) {
        // d(u^c) = c u^(c-1) u'
        auto reduced = make_binary(Op::Pow, n->a, sub(n->b, make_const(1.0)));
        return mul(mul(n->b, reduced), diff(n->a, v));
      }
      // d(u^w) = u^w (w' ln u + w u'/u)
      auto term1 = mul(diff(n->b, v), func(Fn::Log, n->a));
      auto term2 = divide(mul(n->b, diff(n->a, v)), n->a);
      return mul(n, add(term1, term2));
    }
    case Op::Func: {
      const NodePtr& u = n->a;
      NodePtr du = diff(u, v);
      switch (n->fn) {
        case Fn::Sin: return mul(func(Fn::Cos, u), du);
        case Fn::Cos: return mul(make_unary(Op::Neg, func(Fn::Sin, u)), du);
        case Fn::Tan: {
          auto c = func(Fn::Cos, u);
          return divide(du, mul(c, c));
        }
        case Fn::Sqrt: return divide(du, mul(make_const(2.0), n));
        case Fn::Exp: return mul(n, du);
        case Fn::Log: return divide(du, u);
        case Fn::Abs: return mul(func(Fn::Sign, u), du);
        case Fn::Sign: return make_const(0.0);
      }
    }
  }
  return make_const(0.0);
}

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, res.ptr);
  if (v < 0.0) return "(" + s + ")";
  return s;
}

std::string_view var_name(Var v) {
  switch (v) {
    case Var::X: return "x";
    case Var::Y: return "y";
    case Var::Z: return "z";
    case Var::R: return "r";
    case Var::Th: return "th";
    case Var::Ph: return "ph";
  }
  return "?";
}

std::string_view fn_name(Fn fn) {
  switch (fn) {
    case Fn::Sin: return "sin";
    case Fn::Cos: return "cos";
    case Fn::Tan: return "tan";
    case Fn::Sqrt: return "sqrt";
    case Fn::Exp: return "exp";
    case Fn::Log: return "log";
    case Fn::Abs: return "abs";
    case Fn::Sign: return "sign";
  }
  return "?";
}

std::string print(const Expression::Node& n) {
  switch (n.op) {
    case Op::Const: return format_number(n.value);
    case Op::Variable: return std::string(var_name(n.var));
    case Op::Neg: return "(-" + print(*n.a) + ")";
    case Op::Func: return std::string(fn_name(n.fn)) + "(" + print(*n.a) + ")";
    case Op::Add: return "(" + print(*n.a) + "+" + print(*n.b) + ")";
    case Op::Sub: return "(" + print(*n.a) + "-" + print(*n.b) + ")";
    case Op::Mul: return "(" + print(*n.a) + "*" + print(*n.b) + ")";
    case Op::Div: return "(" + print(*n.a) + "/" + print(*n.b) + ")";
    case Op::Pow: return "(" + print(*n.a) + "^" + print(*n.b) + ")";
  }
  return "";
}

class Parser {
 public:
  Parser(std::string_view text, const Parameters& params) : text_(text), params_(params) {}

  NodePtr parse() {
    NodePtr e = expr();
    skip_ws();
    if (pos_ != text_.size()) error("unexpected trailing input");
    return e;
  }

 private:
  [[noreturn]] void error(const std::string& what) const {
    fail(ErrorKind::ParseError,
         what + " at offset " + std::to_string(pos_) + " in \"" + std::string(text_) + "\"");
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  NodePtr expr() {
    NodePtr lhs = term();
    for (;;) {
      if (accept('+')) {
        lhs = add(lhs, term());
      } else if (accept('-')) {
        lhs = sub(lhs, term());
      } else {
        return lhs;
      }
    }
  }

  NodePtr term() {
    NodePtr lhs = unary();
    for (;;) {
      if (accept('*')) {
        lhs = mul(lhs, unary());
      } else if (accept('/')) {
        lhs = divide(lhs, unary());
      } else {
        return lhs;
      }
    }
  }

  NodePtr unary() {
    if (accept('-')) return make_unary(Op::Neg, unary());
    if (accept('+')) return unary();
    return power();
  }

  NodePtr power() {
    NodePtr base = primary();
    if (accept('^')) return make_binary(Op::Pow, base, unary());
    return base;
  }

  NodePtr primary() {
    skip_ws();
    if (pos_ >= text_.size()) error("unexpected end of input");
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      NodePtr e = expr();
      if (!accept(')')) error("expected ')'");
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return name();
    error(std::string("unexpected character '") + c + "'");
  }

  NodePtr number() {
    double v = 0.0;
    const char* begin = text_.data() + pos_;
    const char* end = text_.data() + text_.size();
    auto res = std::from_chars(begin, end, v);
    if (res.ec != std::errc()) error("malformed number");
    pos_ += static_cast<std::size_t>(res.ptr - begin);
    return make_const(v);
  }

  NodePtr name() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
      ++pos_;
    const std::string_view id = text_.substr(start, pos_ - start);

    static const std::map<std::string_view, Fn> functions = {
        {"sin", Fn::Sin}, {"cos", Fn::Cos},   {"tan", Fn::Tan}, {"sqrt", Fn::Sqrt},
        {"exp", Fn::Exp}, {"log", Fn::Log},   {"abs", Fn::Abs},
    };
    if (auto it = functions.find(id); it != functions.end()) {
      if (!accept('(')) error("expected '(' after function " + std::string(id));
      NodePtr arg = expr();
      if (!accept(')')) error("expected ')'");
      return func(it->second, arg);
    }
    static const std::map<std::string_view, Var> variables = {
        {"x", Var::X},   {"y", Var::Y},      {"z", Var::Z},  {"r", Var::R},
        {"th", Var::Th}, {"theta", Var::Th}, {"ph", Var::Ph}, {"phi", Var::Ph},
    };
    if (auto it = variables.find(id); it != variables.end()) return make_var(it->second);
    if (id == "pi") return make_const(std::numbers::pi);
    if (auto it = params_.find(id); it != params_.end()) return make_const(it->second);
    error("unknown name '" + std::string(id) + "'");
  }

  std::string_view text_;
  const Parameters& params_;
  std::size_t pos_ = 0;
};

}  // namespace

Expression::Expression() : node_(make_const(0.0)) {}

Expression Expression::parse(std::string_view text, const Parameters& params) {
  return Expression(Parser(text, params).parse());
}

Expression Expression::constant(double value) { return Expression(make_const(value)); }

Expression Expression::variable(Var v) { return Expression(make_var(v)); }

double Expression::eval(const Variables& vars) const { return eval_node(*node_, vars); }

Expression Expression::derivative(Var v) const { return Expression(diff(node_, v)); }

bool Expression::depends_on(Var v) const { return depends(*node_, v); }

bool Expression::is_constant() const { return node_->op == Op::Const; }

std::string Expression::str() const { return print(*node_); }

}  // namespace cloak
