#include <ccas/coef.hpp>

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ccas
{

Dim Dim::of(int n)
{
    Dim d;
    d.value_ = n;
    return d;
}

int Dim::value() const
{
    if (!value_) {
        throw std::logic_error("dimension is symbolic");
    }
    return *value_;
}

Poly Dim::as_poly() const
{
    return value_ ? Poly(Rational(*value_)) : Poly::n();
}

std::string Dim::to_string() const
{
    return value_ ? std::to_string(*value_) : std::string("n");
}

namespace
{
Poly linear_factor(const Rational &shift)
{
    return Poly::n() + Poly(shift);
}
} // namespace

Coef Coef::inverse_n_plus(const Rational &shift, const Dim &n)
{
    if (!n.is_symbolic()) {
        const Rational v = Rational(n.value()) + shift;
        if (v == 0) {
            throw std::domain_error("division by zero: n + shift vanishes");
        }
        return Coef(Rational(1) / v);
    }
    Coef c(1);
    c.den_[shift] = 1;
    return c;
}

Rational Coef::constant_value() const
{
    if (!is_constant()) {
        throw std::logic_error("coefficient is not constant: " + to_string());
    }
    return num_.constant_value();
}

Poly Coef::denominator_poly() const
{
    Poly d(1);
    for (const auto &[shift, mult] : den_) {
        d *= linear_factor(shift).pow(static_cast<unsigned>(mult));
    }
    return d;
}

void Coef::normalize()
{
    if (num_.is_zero()) {
        den_.clear();
        return;
    }
    for (auto it = den_.begin(); it != den_.end();) {
        while (it->second > 0) {
            auto q = num_.divide_by_n_minus(-it->first);
            if (!q) {
                break;
            }
            num_ = std::move(*q);
            --it->second;
        }
        if (it->second == 0) {
            it = den_.erase(it);
        } else {
            ++it;
        }
    }
}

Coef &Coef::operator+=(const Coef &o)
{
    if (o.is_zero()) {
        return *this;
    }
    if (is_zero()) {
        *this = o;
        return *this;
    }
    if (den_ == o.den_) {
        num_ += o.num_;
        normalize();
        return *this;
    }
    std::map<Rational, int> lcm = den_;
    for (const auto &[s, m] : o.den_) {
        lcm[s] = std::max(lcm[s], m);
    }
    auto lift = [&lcm](const Poly &num, const std::map<Rational, int> &den) {
        Poly r = num;
        for (const auto &[s, m] : lcm) {
            auto it = den.find(s);
            const int have = it == den.end() ? 0 : it->second;
            if (m > have) {
                r *= linear_factor(s).pow(static_cast<unsigned>(m - have));
            }
        }
        return r;
    };
    num_ = lift(num_, den_) + lift(o.num_, o.den_);
    den_ = std::move(lcm);
    normalize();
    return *this;
}

Coef &Coef::operator-=(const Coef &o)
{
    return *this += -o;
}

Coef &Coef::operator*=(const Coef &o)
{
    num_ *= o.num_;
    if (num_.is_zero()) {
        den_.clear();
        return *this;
    }
    for (const auto &[s, m] : o.den_) {
        den_[s] += m;
    }
    normalize();
    return *this;
}

Coef Coef::divided_by(const Coef &d) const
{
    if (d.is_zero()) {
        throw std::domain_error("division by zero coefficient");
    }
    // Multiply by the divisor's denominator, divide by its numerator.
    Coef r = *this;
    r.num_ *= d.denominator_poly();
    const Poly &dn = d.num_;
    if (dn.is_constant()) {
        r.num_ *= Rational(1) / dn.constant_value();
    } else if (!dn.depends_on_w() && dn.degree_n() == 1) {
        // dn = a*n + b = a*(n + b/a)
        Rational a = 0;
        Rational b = 0;
        for (const auto &[m, c] : dn.terms()) {
            (m.first == 1 ? a : b) = c;
        }
        r.num_ *= Rational(1) / a;
        r.den_[b / a] += 1;
    } else {
        throw std::domain_error("unsupported divisor: " + d.to_string());
    }
    r.normalize();
    return r;
}

std::optional<Rational> Coef::constant_ratio(const Coef &a, const Coef &b)
{
    if (b.is_zero()) {
        return std::nullopt;
    }
    if (a.is_zero()) {
        return Rational(0);
    }
    if (a.den_ != b.den_) {
        return std::nullopt;
    }
    // Both canonical with equal denominators: compare numerators.
    const auto &ta = a.num_.terms();
    const auto &tb = b.num_.terms();
    if (ta.size() != tb.size()) {
        return std::nullopt;
    }
    const Rational k = ta.begin()->second / tb.begin()->second;
    Poly scaled = b.num_;
    scaled *= k;
    if (!(scaled == a.num_)) {
        return std::nullopt;
    }
    return k;
}

Coef Coef::substitute_n(const Rational &n) const
{
    Poly num = num_.substitute_n(Poly(n));
    Rational den = 1;
    for (const auto &[s, m] : den_) {
        Rational f = n + s;
        if (f == 0) {
            throw std::domain_error("pole at n = " + n.get_str());
        }
        for (int i = 0; i < m; ++i) {
            den *= f;
        }
    }
    num *= Rational(1) / den;
    return Coef(num);
}

Coef Coef::substitute_w(const Poly &value) const
{
    Coef r = *this;
    r.num_ = num_.substitute_w(value);
    r.normalize();
    return r;
}

double Coef::evaluate(double n, double w) const
{
    double d = 1.0;
    for (const auto &[s, m] : den_) {
        d *= std::pow(n + s.get_d(), m);
    }
    return num_.evaluate(n, w) / d;
}

std::string Coef::to_string() const
{
    if (den_.empty()) {
        return num_.to_string();
    }
    std::ostringstream out;
    const bool compound = num_.terms().size() > 1;
    out << (compound ? "(" : "") << num_.to_string() << (compound ? ")" : "") << "/";
    std::ostringstream d;
    bool first = true;
    int count = 0;
    for (const auto &[s, m] : den_) {
        count += m;
    }
    for (const auto &[s, m] : den_) {
        if (!first) {
            d << "*";
        }
        first = false;
        std::string f = s == 0 ? std::string("n")
                               : "(n " + std::string(s > 0 ? "+ " : "- ") + Rational(abs(s)).get_str() + ")";
        d << f;
        if (m > 1) {
            d << "^" << m;
        }
    }
    if (count > 1) {
        out << "(" << d.str() << ")";
    } else {
        out << d.str();
    }
    return out.str();
}

} // namespace ccas
