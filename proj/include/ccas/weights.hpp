#ifndef CCAS_WEIGHTS_HPP
#define CCAS_WEIGHTS_HPP

#include <stdexcept>
#include <string>
#include <vector>

#include <ccas/coef.hpp>
#include <ccas/poly.hpp>

namespace ccas
{

/// Largest even dimension accepted anywhere in the library.
inline constexpr int max_dimension = 64;

/// Raised for inputs outside the supported dimensions or bundle kinds.
class ConfigError : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

/// Throws ConfigError unless n is even with 4 <= n <= max_dimension.
void check_dimension(const Dim &n);

/// Weight (a1 | a2, ..., a_{m+1}) of the conformal algebra in dimension
/// n = 2m. Entries are exact polynomials in (n, w) so that generic-weight
/// tables can be produced; trailing entries that are not stored are zero.
/// For concrete n the tuple is padded to its full length m + 1.
class Weight
{
public:
    Weight(std::vector<Poly> entries, Dim n);

    [[nodiscard]] const std::vector<Poly> &entries() const noexcept { return entries_; }
    [[nodiscard]] const Dim &dim() const noexcept { return dim_; }
    [[nodiscard]] Poly entry(std::size_t i) const;
    [[nodiscard]] std::string to_string() const;

    friend bool operator==(const Weight &a, const Weight &b);

private:
    std::vector<Poly> entries_;
    Dim dim_;
};

/// Half sum of positive roots, (m, m-1, ..., 1, 0).
Weight rho(int m);

/// Standard inner product; both weights must belong to the same dimension.
Poly inner(const Weight &lhs, const Weight &rhs);

/// <lambda, lambda + 2 rho>.
Poly casimir_eigenvalue(const Weight &lambda);

enum class BundleKind
{
    density,
    sym_tracefree,
    two_form,
    two_form_selfdual,
    two_form_antiselfdual,
};

/// Irreducible bundle with its total conformal weight, e.g.
/// sym_tracefree(2) at weight w+1 is E_{(ab)_0}[w+1].
struct IrreducibleBundleSpec
{
    BundleKind kind = BundleKind::density;
    int rank = 0; // symmetric rank k for sym_tracefree, 2 for two-forms
    Poly weight;

    static IrreducibleBundleSpec density(Poly w) { return {BundleKind::density, 0, std::move(w)}; }
    static IrreducibleBundleSpec sym(int k, Poly w);
    static IrreducibleBundleSpec two_form(Poly w) { return {BundleKind::two_form, 2, std::move(w)}; }

    /// Number of tensor indices carried by sections.
    [[nodiscard]] int tensor_rank() const noexcept { return rank; }
    [[nodiscard]] std::string name() const;

    friend bool operator==(const IrreducibleBundleSpec &, const IrreducibleBundleSpec &) = default;
};

Weight bundle_to_weight(const IrreducibleBundleSpec &spec, const Dim &n);
Poly bundle_casimir(const IrreducibleBundleSpec &spec, const Dim &n);

} // namespace ccas

#endif
