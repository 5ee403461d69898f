#include "radnerlab/exprlang.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <string>
#include <vector>

using namespace radnerlab;

TEST(Parse, SingleFunction) {
    Expr e = parse("exp(x1)", 1);
    EXPECT_EQ(e.root().kind, NodeKind::exp);
    EXPECT_EQ(e.root().lhs->kind, NodeKind::variable);
    EXPECT_EQ(e.root().lhs->var, 1);
}

TEST(Parse, Precedence) {
    Expr e = parse("2*x1 + t^2", 1);
    ASSERT_EQ(e.root().kind, NodeKind::add);
    EXPECT_EQ(e.root().lhs->kind, NodeKind::mul);
    EXPECT_EQ(e.root().rhs->kind, NodeKind::pow);
}

TEST(Parse, VariableOutOfRange) {
    try {
        parse("x2", 1);
        FAIL() << "expected a parse error";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("variable index out of range"), std::string::npos);
    }
}

TEST(Parse, PowerIsRightAssociative) {
    EXPECT_DOUBLE_EQ(parse("2^3^2", 0)(0.0, {}), 512.0);
    EXPECT_DOUBLE_EQ(parse("-2^2", 0)(0.0, {}), -4.0);
    EXPECT_DOUBLE_EQ(parse("2^-1", 0)(0.0, {}), 0.5);
    EXPECT_DOUBLE_EQ(parse("8 / 4 / 2", 0)(0.0, {}), 1.0);
    EXPECT_DOUBLE_EQ(parse("1 - 2 - 3", 0)(0.0, {}), -4.0);
}

TEST(Parse, SyntaxErrorsCarryPosition) {
    try {
        parse("1 + * 2", 1);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.position(), 4u);
    }
    EXPECT_THROW(parse("foo(x1)", 1), ParseError);
    EXPECT_THROW(parse("exp(x1", 1), ParseError);
    EXPECT_THROW(parse("x1 x1", 1), ParseError);
    EXPECT_THROW(parse("", 1), ParseError);
    EXPECT_THROW(parse("y", 1), ParseError);
    EXPECT_THROW(parse("x0", 1), ParseError);
}

TEST(Parse, WhitespaceAndScientificLiterals) {
    EXPECT_DOUBLE_EQ(parse("  1.5e-1 *\tx1 ", 1)(0.0, {2.0}), 0.3);
    EXPECT_DOUBLE_EQ(parse("sqrt(4) + cos(0) + sin(0) + log(1) + neg(2)", 0)(0.0, {}), 1.0);
}

TEST(Evaluate, Examples) {
    EXPECT_EQ(parse("exp(x1)", 1)(0.0, {0.0}), 1.0);
    EXPECT_EQ(parse("2*x1 + t^2", 1)(2.0, {3.0}), 10.0);
}

TEST(Evaluate, DomainErrorsNameSubexpression) {
    try {
        parse("1 + log(x1)", 1)(0.0, {0.0});
        FAIL();
    } catch (const DomainError& e) {
        EXPECT_EQ(e.subexpression(), "log(x1)");
    }
    try {
        parse("x1 / (x1 - 1)", 1)(0.0, {1.0});
        FAIL();
    } catch (const DomainError& e) {
        EXPECT_NE(e.subexpression().find('/'), std::string::npos);
    }
    EXPECT_THROW(parse("sqrt(x1)", 1)(0.0, {-1.0}), DomainError);
    EXPECT_THROW(parse("exp(x1)", 1)(0.0, {1000.0}), DomainError);
}

TEST(Differentiate, Examples) {
    Expr d1 = differentiate(parse("x1^2", 1), 1);
    EXPECT_TRUE(d1.same_as(parse("2*x1", 1))) << d1.to_string();
    Expr d2 = differentiate(parse("exp(2*x1)", 1), 1);
    for (double x : {-1.0, 0.0, 0.7}) EXPECT_NEAR(d2(0.0, {x}), 2.0 * std::exp(2.0 * x), 1e-12);
    Expr d3 = differentiate(parse("x1", 1), time_variable);
    EXPECT_TRUE(d3.is_constant());
    EXPECT_EQ(d3(0.3, {1.0}), 0.0);
}

TEST(Differentiate, AllPrimitives) {
    struct Case {
        const char* text;
        double (*exact)(double);
    };
    const Case cases[] = {
        {"log(x1)", [](double x) { return 1.0 / x; }},
        {"sqrt(x1)", [](double x) { return 0.5 / std::sqrt(x); }},
        {"sin(x1)", [](double x) { return std::cos(x); }},
        {"cos(x1)", [](double x) { return -std::sin(x); }},
        {"x1^x1", [](double x) { return std::pow(x, x) * (std::log(x) + 1.0); }},
        {"2^x1", [](double x) { return std::pow(2.0, x) * std::log(2.0); }},
        {"1/x1", [](double x) { return -1.0 / (x * x); }},
        {"-x1^3", [](double x) { return -3.0 * x * x; }},
    };
    for (const auto& c : cases) {
        Expr d = differentiate(parse(c.text, 1), 1);
        for (double x : {0.3, 1.0, 2.5}) EXPECT_NEAR(d(0.0, {x}), c.exact(x), 1e-12) << c.text;
    }
}

TEST(Substitute, PinsTime) {
    Expr e = substitute(parse("t * x1 + t", 1), time_variable, 2.0);
    EXPECT_DOUBLE_EQ(e(0.0, {3.0}), 8.0);
}

TEST(Print, NegativeConstantsRoundTrip) {
    Expr e = parse("-3 * x1 - (-2)", 1);
    Expr back = parse(e.to_string(), 1);
    EXPECT_TRUE(back.same_as(e)) << e.to_string();
}

namespace {

// Random smooth expressions over (t, x1, x2). Arguments of log, sqrt and
// division are kept away from zero so every sample point is in the domain.
class RandomTree {
public:
    explicit RandomTree(std::uint64_t seed) : rng_(seed) {}

    std::string make(int depth) {
        std::uniform_int_distribution<int> pick(0, depth <= 1 ? 1 : 11);
        switch (pick(rng_)) {
        case 0: return leaf_const();
        case 1: return leaf_var();
        case 2: return "(" + make(depth - 1) + " + " + make(depth - 1) + ")";
        case 3: return "(" + make(depth - 1) + " - " + make(depth - 1) + ")";
        case 4: return "(" + make(depth - 1) + " * " + make(depth - 1) + ")";
        case 5: return "(" + make(depth - 1) + " / (1.5 + (" + make(depth - 1) + ")^2))";
        case 6: return "sin(" + make(depth - 1) + ")";
        case 7: return "cos(" + make(depth - 1) + ")";
        case 8: return "exp(sin(" + make(depth - 1) + "))";
        case 9: return "log(1 + (" + make(depth - 1) + ")^2)";
        case 10: return "sqrt(2 + cos(" + make(depth - 1) + "))";
        default: return "(-(" + make(depth - 1) + ")^" + std::to_string(1 + pick(rng_) % 3) + ")";
        }
    }

    std::vector<double> point() {
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        return {u(rng_), u(rng_), u(rng_)};
    }

private:
    std::string leaf_const() {
        std::uniform_real_distribution<double> u(-2.0, 2.0);
        return "(" + std::to_string(u(rng_)) + ")";
    }
    std::string leaf_var() {
        const char* names[] = {"t", "x1", "x2"};
        return names[std::uniform_int_distribution<int>(0, 2)(rng_)];
    }

    std::mt19937_64 rng_;
};

} // namespace

TEST(Property, DerivativeMatchesCenteredDifference) {
    RandomTree gen(42);
    const double h = 1e-5;
    int checked = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        Expr e = parse(gen.make(6), 2);
        auto p = gen.point();
        for (int var = 0; var <= 2; ++var) {
            Expr d = differentiate(e, var);
            auto up = p;
            auto dn = p;
            up[var] += h;
            dn[var] -= h;
            auto at = [&](const std::vector<double>& q) { return e(q[0], {q[1], q[2]}); };
            const double fd = (at(up) - at(dn)) / (2.0 * h);
            const double exact = d(p[0], {p[1], p[2]});
            ASSERT_NEAR(exact, fd, 1e-6 * (1.0 + std::abs(exact))) << e.to_string() << " var " << var;
            ++checked;
        }
    }
    EXPECT_EQ(checked, 3000);
}

TEST(Property, PrintParseRoundTrip) {
    RandomTree gen(7);
    for (int trial = 0; trial < 500; ++trial) {
        Expr e = parse(gen.make(6), 2);
        Expr once = parse(e.to_string(), 2);
        Expr twice = parse(once.to_string(), 2);
        ASSERT_TRUE(once.same_as(twice)) << e.to_string();
        ASSERT_EQ(once.to_string(), twice.to_string());
        ASSERT_TRUE(once.same_as(e)) << e.to_string();
        ASSERT_TRUE(parse(differentiate(e, 1).to_string(), 2).same_as(differentiate(e, 1)));
    }
}

TEST(Property, DifferentiationIsLinear) {
    RandomTree gen(99);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> coef(-3.0, 3.0);
    for (int trial = 0; trial < 500; ++trial) {
        Expr e1 = parse(gen.make(5), 2);
        Expr e2 = parse(gen.make(5), 2);
        const double a = coef(rng);
        auto p = gen.point();
        for (int var = 0; var <= 2; ++var) {
            const double lhs = differentiate(a * e1 + e2, var)(p[0], {p[1], p[2]});
            const double rhs = a * differentiate(e1, var)(p[0], {p[1], p[2]}) + differentiate(e2, var)(p[0], {p[1], p[2]});
            ASSERT_NEAR(lhs, rhs, 1e-12 * (1.0 + std::abs(rhs)));
        }
    }
}

TEST(Evaluate, DeepTreesFallBackToWalker) {
    std::string text = "x1";
    for (int i = 0; i < 100; ++i) text = "(1 + " + text + ")";
    std::string nested = "1";
    for (int i = 0; i < 80; ++i) nested = "(x1 + " + nested + ")";
    EXPECT_DOUBLE_EQ(parse(text, 1)(0.0, {0.5}), 100.5);
    EXPECT_DOUBLE_EQ(parse(nested, 1)(0.0, {0.5}), 41.0);
}
