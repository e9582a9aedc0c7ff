#include <gtest/gtest.h>

#include <cmath>
#include <string>
#include <vector>

#include "fbdsde/expression.hpp"

using namespace fbdsde;

namespace {

double eval_at(const Expression& e, std::initializer_list<double> slots) {
  double s[kNumVars] = {0};
  int i = 0;
  for (double v : slots) s[i++] = v;
  return e.eval(s);
}

}  // namespace

TEST(ExpressionTest, ArithmeticAndPrecedence) {
  EXPECT_DOUBLE_EQ(eval_at(Expression::parse("2+3*4"), {}), 14.0);
  EXPECT_DOUBLE_EQ(eval_at(Expression::parse("(2+3)*4"), {}), 20.0);
  EXPECT_DOUBLE_EQ(eval_at(Expression::parse("2^3^2"), {}), 512.0);
  EXPECT_DOUBLE_EQ(eval_at(Expression::parse("-2^2"), {}), -4.0);
  EXPECT_DOUBLE_EQ(eval_at(Expression::parse("6/4/2"), {}), 0.75);
  EXPECT_DOUBLE_EQ(eval_at(Expression::parse("1 - 2 - 3"), {}), -4.0);
  EXPECT_DOUBLE_EQ(eval_at(Expression::parse("2^-1"), {}), 0.5);
  EXPECT_DOUBLE_EQ(eval_at(Expression::parse("1.5e2 + .5"), {}), 150.5);
}

TEST(ExpressionTest, VariablesBindToSlots) {
  // Slot order: t, y, Y, z, Z, v, x.
  auto e = Expression::parse("t + 2*y + 3*Y + 4*z + 5*Z + 6*v + 7*x");
  EXPECT_DOUBLE_EQ(eval_at(e, {1, 1, 1, 1, 1, 1, 1}), 28.0);
  EXPECT_DOUBLE_EQ(eval_at(e, {0, 1, 0, 0, 0, 0, 0}), 2.0);
  EXPECT_DOUBLE_EQ(eval_at(e, {0, 0, 1, 0, 0, 0, 0}), 3.0);
  EXPECT_DOUBLE_EQ(eval_at(e, {0, 0, 0, 0, 0, 0, 1}), 7.0);
}

TEST(ExpressionTest, Functions) {
  auto e = Expression::parse("sin(t)^2 + cos(t)^2");
  for (double t : {0.0, 0.7, 2.3}) EXPECT_NEAR(eval_at(e, {t}), 1.0, 1e-14);
  EXPECT_NEAR(eval_at(Expression::parse("exp(log(y))"), {0, 2.5}), 2.5, 1e-14);
  EXPECT_NEAR(eval_at(Expression::parse("sqrt(x^2)"), {0, 0, 0, 0, 0, 0, 3.0}), 3.0,
              1e-14);
  EXPECT_NEAR(eval_at(Expression::parse("tanh(1000)"), {}), 1.0, 1e-12);
}

TEST(ExpressionTest, ParseErrorsCarryPosition) {
  for (const char* bad : {"2 +", "foo(3)", "w + 1", "(2", "2 3", "", "1..2 + ", "sin 3"}) {
    try {
      Expression::parse(bad);
      FAIL() << "expected parse failure for: " << bad;
    } catch (const input_error& err) {
      EXPECT_NE(std::string(err.what()).find("position"), std::string::npos) << bad;
    }
  }
}

TEST(ExpressionTest, RejectsDeepNesting) {
  std::string s(300, '(');
  s += "y";
  s.append(300, ')');
  EXPECT_THROW(Expression::parse(s), input_error);
}

TEST(ExpressionTest, SymbolicDerivativesMatchFiniteDifferences) {
  const std::vector<std::string> exprs = {
      "y^2*Z - 3*y + t*v",
      "sin(t*y) + cos(Y)*tanh(z)",
      "exp(y/2)*sqrt(1 + Z^2)",
      "log(2 + y^2) / (1 + v^2)",
      "Y^3/(1+Y^2) + z*Z*v",
      "tan(0.3*y) + sinh(0.2*x)*cosh(0.1*t)",
      "(y + 2*Y)^3 - x^2*z",
  };
  const double base[kNumVars] = {0.4, 0.7, -0.3, 0.9, -0.6, 0.2, 1.1};
  const double h = 1e-5;
  for (const auto& text : exprs) {
    auto e = Expression::parse(text);
    for (int s = 0; s < kNumVars; ++s) {
      auto d = e.diff(static_cast<Var>(s));
      double lo[kNumVars], hi[kNumVars];
      for (int i = 0; i < kNumVars; ++i) lo[i] = hi[i] = base[i];
      lo[s] -= h;
      hi[s] += h;
      const double fd = (e.eval(hi) - e.eval(lo)) / (2 * h);
      EXPECT_NEAR(d.eval(base), fd, 1e-6 * (1 + std::fabs(fd))) << text << " d/d"
          << var_name(static_cast<Var>(s));
    }
  }
}

TEST(ExpressionTest, GeneralPowerRule) {
  // d/dy Y^y = Y^y log(Y).
  auto e = Expression::parse("Y^y");
  auto d = e.diff(Var::y);
  const double slots[kNumVars] = {0, 0.8, 2.0, 0, 0, 0, 0};
  EXPECT_NEAR(d.eval(slots), std::pow(2.0, 0.8) * std::log(2.0), 1e-12);
}

TEST(ExpressionTest, DerivativeOfUnusedVariableIsZero) {
  auto e = Expression::parse("y + sin(Z)");
  EXPECT_TRUE(e.diff(Var::x).is_zero());
  EXPECT_TRUE(e.uses(Var::y));
  EXPECT_TRUE(e.uses(Var::Z));
  EXPECT_FALSE(e.uses(Var::x));
}

TEST(ExpressionTest, PrintedFormRoundTrips) {
  const std::vector<std::string> exprs = {
      "y^2*Z - 3*y + t*v",
      "-(y + Y)/(1 - z*Z)",
      "sin(t*y) + cos(Y)*tanh(z) - exp(-(t^2))",
      "2^-1 + y^(z + 1)",
  };
  const double pts[3][kNumVars] = {{0.3, 0.5, -0.2, 0.8, -0.1, 0.6, 1.2},
                                   {1.0, 0.4, 0.9, 0.1, 0.7, -0.5, 0.2},
                                   {0.0, 1.5, 0.3, -0.9, 0.4, 0.8, -1.1}};
  for (const auto& text : exprs) {
    auto e = Expression::parse(text);
    auto r = Expression::parse(e.str());
    for (const auto& p : pts)
      EXPECT_NEAR(e.eval(p), r.eval(p), 1e-12 * (1 + std::fabs(e.eval(p)))) << text
          << " printed as " << e.str();
  }
}
