#include <ccas/weights.hpp>

#include <sstream>

namespace ccas
{

void check_dimension(const Dim &n)
{
    if (n.is_symbolic()) {
        return;
    }
    const int v = n.value();
    if (v < 4 || v % 2 != 0 || v > max_dimension) {
        throw ConfigError("dimension must be even with 4 <= n <= " + std::to_string(max_dimension) +
                          ", got " + std::to_string(v));
    }
}

Weight::Weight(std::vector<Poly> entries, Dim n) : entries_(std::move(entries)), dim_(n)
{
    check_dimension(dim_);
    if (!dim_.is_symbolic()) {
        const std::size_t len = static_cast<std::size_t>(dim_.value() / 2 + 1);
        if (entries_.size() > len) {
            throw ConfigError("weight has more than m+1 entries");
        }
        entries_.resize(len);
    } else {
        while (!entries_.empty() && entries_.back().is_zero()) {
            entries_.pop_back();
        }
    }
}

Poly Weight::entry(std::size_t i) const
{
    return i < entries_.size() ? entries_[i] : Poly{};
}

std::string Weight::to_string() const
{
    std::ostringstream out;
    out << "(";
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (i == 1) {
            out << " | ";
        } else if (i > 1) {
            out << ", ";
        }
        out << entries_[i].to_string();
    }
    if (dim_.is_symbolic()) {
        out << (entries_.size() <= 1 ? " | 0, ..., 0" : ", 0, ..., 0");
    }
    out << ")";
    return out.str();
}

bool operator==(const Weight &a, const Weight &b)
{
    return a.dim_ == b.dim_ && a.entries_ == b.entries_;
}

Weight rho(int m)
{
    if (m < 2) {
        throw ConfigError("rho: m must be at least 2 (dimension >= 4)");
    }
    std::vector<Poly> e;
    for (int i = m; i >= 0; --i) {
        e.emplace_back(i);
    }
    return Weight(std::move(e), Dim::of(2 * m));
}

Poly inner(const Weight &lhs, const Weight &rhs)
{
    if (!(lhs.dim() == rhs.dim())) {
        throw ConfigError("inner: weights of different length");
    }
    Poly s;
    const std::size_t len = std::max(lhs.entries().size(), rhs.entries().size());
    for (std::size_t i = 0; i < len; ++i) {
        s += lhs.entry(i) * rhs.entry(i);
    }
    return s;
}

Poly casimir_eigenvalue(const Weight &lambda)
{
    // rho_i = m - i, with m = n/2 possibly symbolic; only stored entries
    // contribute because the others vanish.
    const Poly m = lambda.dim().as_poly() * Poly(Rational(1, 2));
    Poly s;
    for (std::size_t i = 0; i < lambda.entries().size(); ++i) {
        const Poly &a = lambda.entries()[i];
        const Poly rho_i = m - Poly(static_cast<long>(i));
        s += a * (a + Poly(2) * rho_i);
    }
    return s;
}

IrreducibleBundleSpec IrreducibleBundleSpec::sym(int k, Poly w)
{
    if (k < 0 || k > 3) {
        throw ConfigError("symmetric tracefree rank must be 0..3");
    }
    if (k == 0) {
        return density(std::move(w));
    }
    return {BundleKind::sym_tracefree, k, std::move(w)};
}

std::string IrreducibleBundleSpec::name() const
{
    std::string base;
    switch (kind) {
    case BundleKind::density:
        base = "E";
        break;
    case BundleKind::sym_tracefree:
        base = rank == 1 ? "E_a" : rank == 2 ? "E_(ab)0" : "E_(abc)0";
        break;
    case BundleKind::two_form:
        base = "E_[ab]";
        break;
    case BundleKind::two_form_selfdual:
        base = "E_[ab]+";
        break;
    case BundleKind::two_form_antiselfdual:
        base = "E_[ab]-";
        break;
    }
    return base + "[" + weight.to_string() + "]";
}

Weight bundle_to_weight(const IrreducibleBundleSpec &spec, const Dim &n)
{
    check_dimension(n);
    const Poly &w = spec.weight;
    switch (spec.kind) {
    case BundleKind::density:
        return Weight({w}, n);
    case BundleKind::sym_tracefree: {
        if (spec.rank < 1 || spec.rank > 3) {
            throw ConfigError("symmetric tracefree rank must be 1..3");
        }
        const Poly k(spec.rank);
        return Weight({w - k, k}, n);
    }
    case BundleKind::two_form:
        return Weight({w - Poly(2), Poly(1), Poly(1)}, n);
    case BundleKind::two_form_selfdual:
    case BundleKind::two_form_antiselfdual:
        if (n.is_symbolic() || n.value() != 4) {
            throw ConfigError("self-dual / anti-self-dual two-forms exist only in dimension 4");
        }
        return Weight({w - Poly(2), Poly(1), Poly(spec.kind == BundleKind::two_form_selfdual ? 1 : -1)}, n);
    }
    throw ConfigError("unknown bundle kind");
}

Poly bundle_casimir(const IrreducibleBundleSpec &spec, const Dim &n)
{
    return casimir_eigenvalue(bundle_to_weight(spec, n));
}

} // namespace ccas
