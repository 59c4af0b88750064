#include <ccas/weights.hpp>

#include <gtest/gtest.h>

using namespace ccas;

namespace
{

// Independent oracle: <lambda, lambda + 2 rho> computed with integer
// arithmetic directly from the tuple.
long oracle_casimir(const std::vector<long> &lambda, int n)
{
    const int m = n / 2;
    long s = 0;
    for (int i = 0; i <= m; ++i) {
        const long a = i < static_cast<int>(lambda.size()) ? lambda[static_cast<std::size_t>(i)] : 0;
        s += a * (a + 2L * (m - i));
    }
    return s;
}

} // namespace

TEST(Weights, RhoAndInner)
{
    const Weight r = rho(3);
    EXPECT_EQ(r.to_string(), "(3 | 2, 1, 0)");
    EXPECT_EQ(inner(r, r).constant_value(), Rational(14));
    EXPECT_THROW(rho(1), ConfigError);
    EXPECT_THROW(inner(rho(2), rho(3)), ConfigError);
}

TEST(Weights, CasimirMatchesOracleForConcreteWeights)
{
    for (int n = 4; n <= 16; n += 2) {
        for (long w = -12; w <= 6; ++w) {
            for (int k = 0; k <= 3; ++k) {
                auto spec = IrreducibleBundleSpec::sym(k, Poly(w));
                const long expect = oracle_casimir({w - k, k}, n);
                EXPECT_EQ(bundle_casimir(spec, Dim::of(n)).constant_value(), Rational(expect));
            }
            auto two = IrreducibleBundleSpec::two_form(Poly(w));
            EXPECT_EQ(bundle_casimir(two, Dim::of(n)).constant_value(), Rational(oracle_casimir({w - 2, 1, 1}, n)));
        }
    }
}

TEST(Weights, SymbolicCasimirSpecializes)
{
    const Dim sym = Dim::symbolic();
    for (int k = 0; k <= 3; ++k) {
        const Poly beta = bundle_casimir(IrreducibleBundleSpec::sym(k, Poly::w()), sym);
        for (int n = 4; n <= 20; n += 2) {
            for (long w = -9; w <= 5; ++w) {
                const Rational v = beta.substitute_w(Poly(w)).substitute_n(Poly(n)).constant_value();
                EXPECT_EQ(v, Rational(oracle_casimir({w - k, k}, n)));
            }
        }
    }
    // density: w (w + n)
    EXPECT_EQ(bundle_casimir(IrreducibleBundleSpec::density(Poly::w()), sym), Poly::w() * (Poly::w() + Poly::n()));
}

TEST(Weights, SelfDualFormsOnlyInDimensionFour)
{
    IrreducibleBundleSpec sd{BundleKind::two_form_selfdual, 2, Poly(0)};
    EXPECT_EQ(bundle_to_weight(sd, Dim::of(4)).to_string(), "(-2 | 1, 1)");
    EXPECT_THROW(bundle_to_weight(sd, Dim::of(6)), ConfigError);
    // same Casimir for both dualities
    IrreducibleBundleSpec asd{BundleKind::two_form_antiselfdual, 2, Poly(0)};
    EXPECT_EQ(bundle_casimir(sd, Dim::of(4)), bundle_casimir(asd, Dim::of(4)));
}

TEST(Weights, DimensionValidation)
{
    EXPECT_THROW(check_dimension(Dim::of(5)), ConfigError);
    EXPECT_THROW(check_dimension(Dim::of(2)), ConfigError);
    EXPECT_THROW(check_dimension(Dim::of(66)), ConfigError);
    EXPECT_NO_THROW(check_dimension(Dim::of(64)));
}
