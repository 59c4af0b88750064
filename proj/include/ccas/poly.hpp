#ifndef CCAS_POLY_HPP
#define CCAS_POLY_HPP

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>

#include <gmpxx.h>

namespace ccas
{

using Rational = mpq_class;

/// Parses "p", "-p/q" into an exact rational; throws std::invalid_argument.
Rational parse_rational(const std::string &text);
std::string to_string(const Rational &q);
/// p/q in lowest terms (mpq_class does not canonicalize on construction).
Rational ratio(long p, long q);

/// Exact polynomial over Q in the two indeterminates n (dimension) and w
/// (weight). Monomials are keyed by (deg_n, deg_w); zero coefficients are
/// never stored.
class Poly
{
public:
    using Monomial = std::pair<int, int>;
    using TermMap = std::map<Monomial, Rational>;

    Poly() = default;
    Poly(const Rational &c);
    Poly(long c) : Poly(Rational(c)) {}
    Poly(int c) : Poly(Rational(c)) {}

    static Poly n();
    static Poly w();
    static Poly monomial(const Rational &c, int deg_n, int deg_w);

    [[nodiscard]] bool is_zero() const noexcept { return terms_.empty(); }
    [[nodiscard]] bool is_constant() const noexcept;
    [[nodiscard]] bool depends_on_n() const noexcept;
    [[nodiscard]] bool depends_on_w() const noexcept;
    /// Constant term value; throws if the polynomial is not constant.
    [[nodiscard]] Rational constant_value() const;
    [[nodiscard]] const TermMap &terms() const noexcept { return terms_; }
    [[nodiscard]] int degree_n() const noexcept;
    [[nodiscard]] int degree_w() const noexcept;

    Poly &operator+=(const Poly &o);
    Poly &operator-=(const Poly &o);
    Poly &operator*=(const Poly &o);
    Poly &operator*=(const Rational &c);

    friend Poly operator+(Poly a, const Poly &b) { return a += b; }
    friend Poly operator-(Poly a, const Poly &b) { return a -= b; }
    friend Poly operator*(const Poly &a, const Poly &b)
    {
        Poly r = a;
        r *= b;
        return r;
    }
    friend Poly operator-(Poly a)
    {
        a *= Rational(-1);
        return a;
    }
    friend bool operator==(const Poly &a, const Poly &b) { return a.terms_ == b.terms_; }
    friend bool operator<(const Poly &a, const Poly &b) { return a.terms_ < b.terms_; }

    /// Replaces n by a polynomial (usually a rational constant).
    [[nodiscard]] Poly substitute_n(const Poly &value) const;
    /// Replaces w by a polynomial, e.g. w -> -n/2.
    [[nodiscard]] Poly substitute_w(const Poly &value) const;
    [[nodiscard]] Poly pow(unsigned e) const;

    /// Divides by (n - root) when the division is exact (as a polynomial in
    /// n with coefficients in Q[w]).
    [[nodiscard]] std::optional<Poly> divide_by_n_minus(const Rational &root) const;

    [[nodiscard]] double evaluate(double n, double w) const;
    [[nodiscard]] std::string to_string() const;

private:
    void add_term(const Monomial &m, const Rational &c);
    TermMap terms_;
};

} // namespace ccas

#endif
