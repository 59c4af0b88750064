#ifndef CCAS_COEF_HPP
#define CCAS_COEF_HPP

#include <map>
#include <optional>
#include <string>

#include <ccas/poly.hpp>

namespace ccas
{

/// The dimension parameter n: either a concrete even integer or the
/// indeterminate n.
class Dim
{
public:
    static Dim symbolic() { return Dim{}; }
    static Dim of(int n);

    [[nodiscard]] bool is_symbolic() const noexcept { return !value_.has_value(); }
    [[nodiscard]] int value() const;
    [[nodiscard]] Poly as_poly() const;
    [[nodiscard]] std::string to_string() const;

    friend bool operator==(const Dim &, const Dim &) = default;

private:
    std::optional<int> value_;
};

/// Exact rational function in (n, w) whose denominator is a product of
/// linear factors (n + k). This covers every coefficient that occurs in the
/// tractor action tables (1/n, (n+2)/n, (n+4)/(n+2), ...). The representation
/// is canonical: no denominator factor divides the numerator.
class Coef
{
public:
    Coef() = default;
    Coef(const Poly &num) : num_(num) {}
    Coef(const Rational &c) : num_(c) {}
    Coef(long c) : num_(c) {}
    Coef(int c) : num_(c) {}

    /// 1 / (n + shift) for symbolic n, or the plain reciprocal when n is
    /// concrete.
    static Coef inverse_n_plus(const Rational &shift, const Dim &n);

    [[nodiscard]] bool is_zero() const noexcept { return num_.is_zero(); }
    [[nodiscard]] bool is_constant() const noexcept { return den_.empty() && num_.is_constant(); }
    [[nodiscard]] Rational constant_value() const;
    [[nodiscard]] const Poly &numerator() const noexcept { return num_; }
    /// Denominator factors as shift -> multiplicity, meaning prod (n + shift)^m.
    [[nodiscard]] const std::map<Rational, int> &denominator() const noexcept { return den_; }
    [[nodiscard]] Poly denominator_poly() const;

    Coef &operator+=(const Coef &o);
    Coef &operator-=(const Coef &o);
    Coef &operator*=(const Coef &o);

    friend Coef operator+(Coef a, const Coef &b) { return a += b; }
    friend Coef operator-(Coef a, const Coef &b) { return a -= b; }
    friend Coef operator*(Coef a, const Coef &b) { return a *= b; }
    friend Coef operator-(Coef a)
    {
        a.num_ *= Rational(-1);
        return a;
    }
    friend bool operator==(const Coef &a, const Coef &b) { return a.num_ == b.num_ && a.den_ == b.den_; }

    /// Division by a coefficient whose numerator is a nonzero constant or
    /// linear in n alone; throws std::domain_error otherwise.
    [[nodiscard]] Coef divided_by(const Coef &d) const;

    /// If a / b is a rational constant, returns it.
    static std::optional<Rational> constant_ratio(const Coef &a, const Coef &b);

    [[nodiscard]] Coef substitute_n(const Rational &n) const;
    [[nodiscard]] Coef substitute_w(const Poly &value) const;
    [[nodiscard]] double evaluate(double n, double w) const;
    [[nodiscard]] std::string to_string() const;

private:
    void normalize();
    Poly num_;
    std::map<Rational, int> den_;
};

} // namespace ccas

#endif
