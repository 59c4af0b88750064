#include <ccas/poly.hpp>

#include <gtest/gtest.h>

using ccas::Poly;
using ccas::Rational;

TEST(Poly, ArithmeticAndPrinting)
{
    const Poly n = Poly::n();
    const Poly w = Poly::w();
    Poly p = (w + n) * (w - Poly(4));
    EXPECT_EQ(p.to_string(), "n*w + w^2 - 4*n - 4*w");
    EXPECT_TRUE((p - p).is_zero());
    EXPECT_EQ(p.degree_n(), 1);
    EXPECT_EQ(p.degree_w(), 2);
}

TEST(Poly, SubstitutionMatchesEvaluation)
{
    const Poly n = Poly::n();
    const Poly w = Poly::w();
    const Poly p = w * w + Rational(3, 2) * n * w - Poly(7);
    const Poly q = p.substitute_w(Poly(Rational(-1, 2)) * n);
    for (int k = 4; k <= 12; k += 2) {
        const double v = p.evaluate(k, -k / 2.0);
        EXPECT_DOUBLE_EQ(q.evaluate(k, 0.0), v);
        EXPECT_EQ(q.substitute_n(Poly(k)).constant_value(), Rational(k * k, 4) - Rational(3 * k * k, 4) - 7);
    }
}

TEST(Poly, ExactDivisionByLinearFactor)
{
    const Poly n = Poly::n();
    const Poly p = (n - Poly(4)) * (n + Poly(2)) * Poly::w();
    auto q = p.divide_by_n_minus(4);
    ASSERT_TRUE(q.has_value());
    EXPECT_EQ(*q, (n + Poly(2)) * Poly::w());
    EXPECT_FALSE(p.divide_by_n_minus(6).has_value());
}

TEST(Poly, ParseRational)
{
    EXPECT_EQ(ccas::parse_rational("-3/6"), Rational(-1, 2));
    EXPECT_THROW(ccas::parse_rational("x"), std::invalid_argument);
}
