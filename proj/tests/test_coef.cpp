#include <ccas/coef.hpp>

#include <gtest/gtest.h>

using ccas::Coef;
using ccas::Dim;
using ccas::Poly;
using ccas::Rational;

TEST(Coef, CancelsCommonLinearFactors)
{
    const Dim n = Dim::symbolic();
    Coef c = Coef(Poly::n() + Poly(2)) * Coef::inverse_n_plus(0, n);
    EXPECT_EQ(c.to_string(), "(n + 2)/n");
    c *= Coef(Poly::n());
    EXPECT_TRUE(c.denominator().empty());
    EXPECT_EQ(c.numerator(), Poly::n() + Poly(2));
}

TEST(Coef, SumOverCommonDenominator)
{
    const Dim n = Dim::symbolic();
    // 1/n - 1/(n+2) = 2/(n(n+2))
    Coef c = Coef::inverse_n_plus(0, n) - Coef::inverse_n_plus(2, n);
    for (int k = 4; k <= 20; k += 2) {
        EXPECT_EQ(c.substitute_n(k).constant_value(), ccas::ratio(2, k * (k + 2)));
    }
}

TEST(Coef, ConcreteDimensionGivesPlainRationals)
{
    Coef c = Coef::inverse_n_plus(2, Dim::of(6));
    EXPECT_TRUE(c.is_constant());
    EXPECT_EQ(c.constant_value(), Rational(1, 8));
    EXPECT_THROW(Coef::inverse_n_plus(-4, Dim::of(4)), std::domain_error);
}

TEST(Coef, ConstantRatio)
{
    const Dim n = Dim::symbolic();
    Coef a = Coef(Poly::n() + Poly(4)) * Coef::inverse_n_plus(2, n);
    Coef b = Rational(-3, 2) * a;
    auto k = Coef::constant_ratio(b, a);
    ASSERT_TRUE(k.has_value());
    EXPECT_EQ(*k, Rational(-3, 2));
    EXPECT_FALSE(Coef::constant_ratio(Coef(Poly::n()), a).has_value());
}

TEST(Coef, DivisionByLinearNumerator)
{
    const Dim n = Dim::symbolic();
    Coef a(Poly(1));
    Coef d = Coef(Poly::n() - Poly(4));
    Coef q = a.divided_by(d);
    EXPECT_EQ(q.substitute_n(10).constant_value(), Rational(1, 6));
    EXPECT_THROW(a.divided_by(Coef(Poly::n() * Poly::n())), std::domain_error);
}
