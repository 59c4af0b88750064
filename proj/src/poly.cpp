#include <ccas/poly.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace ccas
{

Rational parse_rational(const std::string &text)
{
    if (text.empty()) {
        throw std::invalid_argument("empty rational literal");
    }
    Rational q;
    if (q.set_str(text, 10) != 0) {
        throw std::invalid_argument("not a rational literal: " + text);
    }
    if (q.get_den() == 0) {
        throw std::invalid_argument("zero denominator: " + text);
    }
    q.canonicalize();
    return q;
}

std::string to_string(const Rational &q)
{
    return q.get_str();
}

Rational ratio(long p, long q)
{
    Rational r(p, q);
    r.canonicalize();
    return r;
}

Poly::Poly(const Rational &c)
{
    add_term({0, 0}, c);
}

Poly Poly::n()
{
    return monomial(1, 1, 0);
}

Poly Poly::w()
{
    return monomial(1, 0, 1);
}

Poly Poly::monomial(const Rational &c, int deg_n, int deg_w)
{
    Poly p;
    p.add_term({deg_n, deg_w}, c);
    return p;
}

void Poly::add_term(const Monomial &m, const Rational &c)
{
    if (c == 0) {
        return;
    }
    auto [it, inserted] = terms_.emplace(m, c);
    if (!inserted) {
        it->second += c;
        if (it->second == 0) {
            terms_.erase(it);
        }
    }
}

bool Poly::is_constant() const noexcept
{
    return terms_.empty() || (terms_.size() == 1 && terms_.begin()->first == Monomial{0, 0});
}

bool Poly::depends_on_n() const noexcept
{
    for (const auto &[m, c] : terms_) {
        if (m.first > 0) {
            return true;
        }
    }
    return false;
}

bool Poly::depends_on_w() const noexcept
{
    for (const auto &[m, c] : terms_) {
        if (m.second > 0) {
            return true;
        }
    }
    return false;
}

Rational Poly::constant_value() const
{
    if (!is_constant()) {
        throw std::logic_error("polynomial is not constant: " + to_string());
    }
    return terms_.empty() ? Rational(0) : terms_.begin()->second;
}

int Poly::degree_n() const noexcept
{
    int d = -1;
    for (const auto &[m, c] : terms_) {
        d = std::max(d, m.first);
    }
    return d;
}

int Poly::degree_w() const noexcept
{
    int d = -1;
    for (const auto &[m, c] : terms_) {
        d = std::max(d, m.second);
    }
    return d;
}

Poly &Poly::operator+=(const Poly &o)
{
    for (const auto &[m, c] : o.terms_) {
        add_term(m, c);
    }
    return *this;
}

Poly &Poly::operator-=(const Poly &o)
{
    for (const auto &[m, c] : o.terms_) {
        add_term(m, -c);
    }
    return *this;
}

Poly &Poly::operator*=(const Poly &o)
{
    Poly r;
    for (const auto &[ma, ca] : terms_) {
        for (const auto &[mb, cb] : o.terms_) {
            r.add_term({ma.first + mb.first, ma.second + mb.second}, ca * cb);
        }
    }
    terms_ = std::move(r.terms_);
    return *this;
}

Poly &Poly::operator*=(const Rational &c)
{
    if (c == 0) {
        terms_.clear();
        return *this;
    }
    for (auto &[m, v] : terms_) {
        v *= c;
    }
    return *this;
}

Poly Poly::pow(unsigned e) const
{
    Poly r(1);
    for (unsigned i = 0; i < e; ++i) {
        r *= *this;
    }
    return r;
}

Poly Poly::substitute_n(const Poly &value) const
{
    Poly r;
    std::vector<Poly> powers{Poly(1)};
    for (const auto &[m, c] : terms_) {
        while (static_cast<int>(powers.size()) <= m.first) {
            powers.push_back(powers.back() * value);
        }
        r += powers[m.first] * monomial(c, 0, m.second);
    }
    return r;
}

Poly Poly::substitute_w(const Poly &value) const
{
    Poly r;
    std::vector<Poly> powers{Poly(1)};
    for (const auto &[m, c] : terms_) {
        while (static_cast<int>(powers.size()) <= m.second) {
            powers.push_back(powers.back() * value);
        }
        r += powers[m.second] * monomial(c, m.first, 0);
    }
    return r;
}

std::optional<Poly> Poly::divide_by_n_minus(const Rational &root) const
{
    if (is_zero()) {
        return Poly{};
    }
    // Synthetic division in n; coefficients are polynomials in w.
    const int dn = degree_n();
    std::vector<Poly> coeff(dn + 1);
    for (const auto &[m, c] : terms_) {
        coeff[m.first] += monomial(c, 0, m.second);
    }
    std::vector<Poly> quot(dn > 0 ? dn : 0);
    Poly carry;
    for (int k = dn; k >= 1; --k) {
        carry = coeff[k] + carry * Poly(root);
        quot[k - 1] = carry;
    }
    const Poly remainder = coeff[0] + carry * Poly(root);
    if (!remainder.is_zero()) {
        return std::nullopt;
    }
    Poly q;
    for (int k = 0; k < static_cast<int>(quot.size()); ++k) {
        q += quot[k] * monomial(1, k, 0);
    }
    return q;
}

double Poly::evaluate(double n, double w) const
{
    double s = 0.0;
    for (const auto &[m, c] : terms_) {
        s += c.get_d() * std::pow(n, m.first) * std::pow(w, m.second);
    }
    return s;
}

std::string Poly::to_string() const
{
    if (terms_.empty()) {
        return "0";
    }
    std::ostringstream out;
    bool first = true;
    // Highest total degree first, then by n degree.
    std::vector<std::pair<Monomial, Rational>> ordered(terms_.begin(), terms_.end());
    std::stable_sort(ordered.begin(), ordered.end(), [](const auto &a, const auto &b) {
        const int da = a.first.first + a.first.second;
        const int db = b.first.first + b.first.second;
        if (da != db) {
            return da > db;
        }
        return a.first.first > b.first.first;
    });
    for (const auto &[m, c] : ordered) {
        Rational mag = abs(c);
        const bool neg = c < 0;
        if (first) {
            if (neg) {
                out << "-";
            }
        } else {
            out << (neg ? " - " : " + ");
        }
        first = false;
        const bool unit = (mag == 1);
        const bool has_var = m.first > 0 || m.second > 0;
        if (!unit || !has_var) {
            out << mag.get_str();
            if (has_var) {
                out << "*";
            }
        }
        bool need_star = false;
        if (m.first > 0) {
            out << "n";
            if (m.first > 1) {
                out << "^" << m.first;
            }
            need_star = true;
        }
        if (m.second > 0) {
            if (need_star) {
                out << "*";
            }
            out << "w";
            if (m.second > 1) {
                out << "^" << m.second;
            }
        }
    }
    return out.str();
}

} // namespace ccas
