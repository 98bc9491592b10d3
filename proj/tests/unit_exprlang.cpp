#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "psopt/exprlang.hpp"

using namespace psopt::expr;

namespace {

double ev(const std::string& text, const Env& env) { return eval(parse(text), env); }

Env path_env(const double* x, int nx, const double* u, int nu, double t,
             const std::map<std::string, double>* c = nullptr) {
  Env e;
  e.x = x;
  e.nx = nx;
  e.u = u;
  e.nu = nu;
  e.t = t;
  e.constants = c;
  return e;
}

}  // namespace

TEST_CASE("arithmetic precedence and associativity") {
  Env e;
  CHECK(ev("2 + 3 * 4", e) == 14.0);
  CHECK(ev("(2 + 3) * 4", e) == 20.0);
  CHECK(ev("2 ^ 3 ^ 2", e) == 512.0);  // right-associative
  CHECK(ev("-2 ^ 2", e) == -4.0);      // ^ binds tighter than unary minus
  CHECK(ev("8 / 4 / 2", e) == 1.0);
  CHECK(ev("1 - 2 - 3", e) == -4.0);
  CHECK(ev("-3 * -2", e) == 6.0);
}

TEST_CASE("variables and functions evaluate") {
  double x[2] = {0.5, -1.5};
  double u[1] = {2.0};
  Env e = path_env(x, 2, u, 1, 0.25);
  CHECK(ev("x[0] + x[1] * u[0]", e) == doctest::Approx(-2.5));
  CHECK(ev("sin(x[0])^2 + cos(x[0])^2", e) == doctest::Approx(1.0));
  CHECK(ev("atan2(1, 1)", e) == doctest::Approx(std::atan2(1.0, 1.0)));
  CHECK(ev("sqrt(abs(x[1]))", e) == doctest::Approx(std::sqrt(1.5)));
  CHECK(ev("exp(log(u[0]))", e) == doctest::Approx(2.0));
  CHECK(ev("t * 4", e) == doctest::Approx(1.0));
}

TEST_CASE("named constants resolve at eval time") {
  std::map<std::string, double> c{{"g", 9.81}};
  Env e = path_env(nullptr, 0, nullptr, 0, 0.0, &c);
  CHECK(ev("g / 2", e) == doctest::Approx(4.905));
  CHECK_THROWS_AS(ev("missing + 1", e), EvalError);
}

TEST_CASE("domain violations yield NaN and a warning, not a throw") {
  Env e;
  std::vector<psopt::Diagnostic> warn;
  double v = eval(parse("log(0 - 1)"), e, &warn);
  CHECK(std::isnan(v));
  CHECK(!warn.empty());
  CHECK(std::isnan(eval(parse("sqrt(0 - 4)"), e)));
}

TEST_CASE("syntax errors carry position") {
  try {
    parse("1 + * 2");
    FAIL("expected SyntaxError");
  } catch (const SyntaxError& s) {
    CHECK(s.line >= 1);
    CHECK(s.column > 0);
  }
  CHECK_THROWS_AS(parse("sin(1"), SyntaxError);
  CHECK_THROWS_AS(parse("x["), SyntaxError);
  CHECK_THROWS_AS(parse(""), SyntaxError);
}

TEST_CASE("out of range indices throw at eval") {
  double x[1] = {1.0};
  Env e = path_env(x, 1, nullptr, 0, 0.0);
  CHECK_THROWS_AS(ev("x[3]", e), EvalError);
  CHECK_THROWS_AS(ev("u[0]", e), EvalError);
}

TEST_CASE("symbolic derivatives match closed forms") {
  double x[1] = {0.7};
  Env e = path_env(x, 1, nullptr, 0, 0.0);
  auto d = [&](const std::string& text) {
    return eval(diff(parse(text), Slot::X, 0), e);
  };
  CHECK(d("x[0]^3") == doctest::Approx(3 * 0.7 * 0.7));
  CHECK(d("sin(x[0])") == doctest::Approx(std::cos(0.7)));
  CHECK(d("cos(x[0])") == doctest::Approx(-std::sin(0.7)));
  CHECK(d("exp(2 * x[0])") == doctest::Approx(2 * std::exp(1.4)));
  CHECK(d("log(x[0])") == doctest::Approx(1 / 0.7));
  CHECK(d("sqrt(x[0])") == doctest::Approx(0.5 / std::sqrt(0.7)));
  CHECK(d("tan(x[0])") == doctest::Approx(1 + std::pow(std::tan(0.7), 2)));
  CHECK(d("x[0] * sin(x[0])") ==
        doctest::Approx(std::sin(0.7) + 0.7 * std::cos(0.7)));
  CHECK(d("sin(x[0]) / x[0]") ==
        doctest::Approx((0.7 * std::cos(0.7) - std::sin(0.7)) / (0.7 * 0.7)));
  CHECK(d("atan2(x[0], 2)") == doctest::Approx(2.0 / (0.7 * 0.7 + 4.0)));
  CHECK(d("abs(x[0])") == doctest::Approx(1.0));
}

TEST_CASE("derivative of an unrelated slot folds to zero") {
  NodePtr n = diff(parse("sin(u[0]) + 4"), Slot::X, 0);
  CHECK(n->kind == Kind::Number);
  CHECK(n->number == 0.0);
}

TEST_CASE("to_string round-trips through the parser") {
  for (const char* text :
       {"x[0] * sin(u[1]) - 3 / t", "-x[0]^2 + atan2(t, 2)", "g * x[0] + 1"}) {
    NodePtr a = parse(text);
    NodePtr b = parse(to_string(a));
    CHECK(equal(a, b));
  }
}

TEST_CASE("dependency probe and constant collection") {
  NodePtr n = parse("x[0] * mass + u[1] - t0");
  CHECK(depends_on(n, Slot::X));
  CHECK(depends_on(n, Slot::U));
  CHECK(depends_on(n, Slot::T0));
  CHECK(!depends_on(n, Slot::TF));
  std::vector<std::string> names;
  collect_constants(n, names);
  REQUIRE(names.size() == 1);
  CHECK(names[0] == "mass");
}
