#include <cmath>
#include <numbers>

#include "cloak/expression.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cloak;

TEST_CASE("expression: arithmetic and precedence") {
  CHECK(Expression::parse("1 + 2 * 3")(0.0) == 7.0);
  CHECK(Expression::parse("(1 + 2) * 3")(0.0) == 9.0);
  CHECK(Expression::parse("2 ^ 3 ^ 2")(0.0) == 512.0);
  CHECK(Expression::parse("-2 ^ 2")(0.0) == -4.0);
  CHECK(Expression::parse("8 / 4 / 2")(0.0) == 1.0);
  CHECK(Expression::parse("1e-3 * 2.5E2")(0.0) == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("expression: radial profiles of the catalogue") {
  const auto cloak_alpha = Expression::parse("2*(r-1)^2");
  CHECK(cloak_alpha(1.5) == doctest::Approx(0.5).epsilon(1e-15));
  const auto cyl = Expression::parse("(r-1)*rho^2", {{"rho", 0.2}});
  CHECK(cyl(2.0) == doctest::Approx(0.04).epsilon(1e-15));
  CHECK(Expression::parse("pi")(0.0) == std::numbers::pi);
}

TEST_CASE("expression: coordinate variables") {
  Vec p(3);
  p << 0.0, 1.0, 0.0;
  const auto v = Variables::from_point(p);
  CHECK(v.r == doctest::Approx(1.0));
  CHECK(v.th == doctest::Approx(std::numbers::pi / 2));
  CHECK(v.ph == doctest::Approx(std::numbers::pi / 2));
  CHECK(Expression::parse("sin(th) * r + y")(1.0) == doctest::Approx(0.0));
  CHECK(Expression::parse("sin(th) * r + y").eval(v) == doctest::Approx(2.0));
  CHECK(Expression::parse("theta + phi").eval(v) == doctest::Approx(std::numbers::pi));

  Vec q(2);
  q << -1.0, 0.0;
  CHECK(Variables::from_point(q).th == doctest::Approx(std::numbers::pi));
}

TEST_CASE("expression: functions") {
  CHECK(Expression::parse("sqrt(16) + exp(0) + log(1) + abs(-2)")(0.0) == 7.0);
  CHECK(Expression::parse("cos(0) + tan(0)")(0.0) == 1.0);
}

TEST_CASE("expression: derivative matches finite differences") {
  const char* texts[] = {"2*(r-1)^2", "(r-1)^-1", "r^2*sin(r)", "sqrt(r)/(1+r)", "exp(-r)*log(r)",
                         "0.5*(1-r)^2", "r^2.5"};
  for (const char* t : texts) {
    const auto f = Expression::parse(t);
    const auto df = f.derivative(Var::R);
    for (double r : {1.2, 1.5, 1.9}) {
      const double h = 1e-6;
      const double fd = (f(r + h) - f(r - h)) / (2 * h);
      CHECK(testutil::rel_err(df(r), fd) < 1e-7);
    }
  }
}

TEST_CASE("expression: printed form re-parses to the same values") {
  const char* texts[] = {"2*(r-1)^2", "-(r-1)^-1", "r^2*sin(th)", "1/sin(th)", "0.1", "-x+y*z",
                         "2^3^2"};
  Vec p(3);
  p << 0.3, -0.7, 1.1;
  const auto v = Variables::from_point(p);
  for (const char* t : texts) {
    const auto e = Expression::parse(t);
    const auto back = Expression::parse(e.str());
    CHECK(back.eval(v) == e.eval(v));
  }
}

TEST_CASE("expression: dependency queries") {
  CHECK(Expression::parse("3*2").is_constant());
  CHECK(Expression::parse("r*sin(th)").depends_on(Var::Th));
  CHECK_FALSE(Expression::parse("r*sin(th)").depends_on(Var::Ph));
  CHECK(Expression::parse("r^2").derivative(Var::Th).is_constant());
}

TEST_CASE("expression: parse errors") {
  for (const char* bad : {"", "1 +", "(r", "foo", "sin r", "2 ** 3", "1 2", "r)"})
    CHECK(testutil::kind_of([&] { Expression::parse(bad); }) == ErrorKind::ParseError);
}
