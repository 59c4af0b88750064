#ifndef CCAS_TENSOR_HPP
#define CCAS_TENSOR_HPP

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <ccas/coef.hpp>

namespace ccas
{

/// Abstract index label. Labels below dummy_base are reserved for free
/// indices chosen by callers; canonical dummies start at dummy_base and
/// temporaries produced during substitution at fresh_base.
using Label = int;
inline constexpr Label dummy_base = 500;
inline constexpr Label fresh_base = 1'000'000;

/// Returns a process-wide unique temporary label.
Label fresh_label();

enum class Symmetry
{
    none,
    symmetric,
    antisymmetric,
};

struct SymbolInfo
{
    std::string name;    // unique, e.g. "symsq0.mu"
    std::string display; // plain-text name, e.g. "mu"
    std::string latex;   // e.g. "\\mu"
    int rank = 0;
    Symmetry symmetry = Symmetry::none;
    bool tracefree = false;
    bool curvature = false; // dropped by the flat symbol calculus
    bool parallel = false;  // covariantly constant (the metric)
};

using SymbolId = int;

/// Global registry of tensor symbols. All symbols used by the library are
/// registered up front so identifiers (and therefore canonical term order)
/// do not depend on call history.
class SymbolTable
{
public:
    static SymbolTable &instance();

    [[nodiscard]] SymbolId find(const std::string &name) const;
    [[nodiscard]] const SymbolInfo &info(SymbolId id) const { return symbols_.at(static_cast<std::size_t>(id)); }
    [[nodiscard]] std::size_t size() const noexcept { return symbols_.size(); }

    SymbolId metric() const { return metric_; }
    SymbolId schouten() const { return schouten_; }
    SymbolId schouten_trace() const { return trace_; }
    SymbolId phi() const { return phi_; }
    /// Placeholder for the source component of an action pattern.
    SymbolId source(int rank) const { return source_.at(static_cast<std::size_t>(rank)); }
    /// Placeholder for phi (x) source fused into one object (phi index first).
    SymbolId fused(int rank) const { return fused_.at(static_cast<std::size_t>(rank)); }

private:
    SymbolTable();
    SymbolId add(SymbolInfo info);

    std::vector<SymbolInfo> symbols_;
    std::map<std::string, SymbolId> by_name_;
    SymbolId metric_ = -1;
    SymbolId schouten_ = -1;
    SymbolId trace_ = -1;
    SymbolId phi_ = -1;
    std::vector<SymbolId> source_;
    std::vector<SymbolId> fused_;
};

/// nabla_{deriv[0]} ... nabla_{deriv.back()} applied to symbol_{idx...}.
struct Factor
{
    SymbolId symbol = 0;
    std::vector<Label> deriv;
    std::vector<Label> idx;

    friend bool operator==(const Factor &, const Factor &) = default;
};

struct Term
{
    Coef coef;
    std::vector<Factor> factors;
};

/// Two normalization regimes: exact curved calculus (derivatives do not
/// commute except the innermost pair on scalars) and the flat symbol
/// calculus (P = 0 and all derivatives commute).
enum class Calculus
{
    curved,
    flat,
};

class IndexError : public std::logic_error
{
public:
    using std::logic_error::logic_error;
};

/// Sum of tensor monomials with a declared set of free indices.
class Expr
{
public:
    Expr() = default;
    explicit Expr(std::vector<Label> free) : free_(std::move(free)) {}

    static Expr symbol(SymbolId sym, std::vector<Label> idx);
    static Expr scalar(const Coef &c);
    static Expr metric(Label a, Label b);

    [[nodiscard]] const std::vector<Label> &free() const noexcept { return free_; }
    [[nodiscard]] const std::vector<Term> &terms() const noexcept { return terms_; }
    [[nodiscard]] bool is_zero() const noexcept { return terms_.empty(); }

    void add_term(Term t) { terms_.push_back(std::move(t)); }

    Expr &operator+=(const Expr &o);
    Expr &operator-=(const Expr &o);
    Expr &operator*=(const Coef &c);
    friend Expr operator+(Expr a, const Expr &b) { return a += b; }
    friend Expr operator-(Expr a, const Expr &b) { return a -= b; }
    friend Expr operator*(const Coef &c, Expr e) { return e *= c; }
    friend Expr operator-(Expr e) { return e *= Coef(-1); }

    /// Reorders the declared free list (must be a permutation).
    [[nodiscard]] Expr with_free_order(std::vector<Label> order) const;

    /// Largest derivative chain length over all factors of the given symbol
    /// (or of any symbol when sym < 0).
    [[nodiscard]] int max_derivative_order(SymbolId sym = -1) const;
    [[nodiscard]] bool contains_symbol(SymbolId sym) const;
    [[nodiscard]] std::vector<SymbolId> symbols() const;

private:
    std::vector<Label> free_;
    std::vector<Term> terms_;
};

/// Tensor product; labels shared between the free sets become contracted.
Expr product(const Expr &a, const Expr &b);

/// Renames free labels (dummies are untouched).
Expr relabel(const Expr &e, const std::map<Label, Label> &map);

/// Contracts two free indices of e.
Expr trace(const Expr &e, Label a, Label b);

/// Covariant derivative nabla_label e (Leibniz rule; the metric is parallel).
Expr nabla(const Expr &e, Label label);

/// Replaces every occurrence of sym by repl. The free list of repl is matched
/// positionally to the occurrence's indices; derivative chains on the
/// occurrence are applied to repl. Labels of repl that occur once and are not
/// in its free list are treated as external and kept verbatim.
Expr substitute(const Expr &e, SymbolId sym, const Expr &repl);

/// Drops every term containing sym.
Expr drop_symbol(const Expr &e, SymbolId sym);
/// Keeps only the terms containing sym.
Expr keep_symbol(const Expr &e, SymbolId sym);
/// Keeps only terms whose total derivative count equals order.
Expr keep_order(const Expr &e, int order);

// Projectors; they expand immediately.
Expr symmetrize(const Expr &e, const std::vector<Label> &labels);
Expr alternate(const Expr &e, Label a, Label b);
/// Symmetric tracefree part over 1, 2 or 3 free labels.
Expr sym_tracefree(const Expr &e, const std::vector<Label> &labels, const Dim &n);

/// Canonical form: metric contractions resolved, symmetries applied, dummy
/// indices renamed canonically, like terms merged, zero terms removed and the
/// term list sorted by a fixed total order.
Expr normalize(const Expr &e, const Dim &n, Calculus calculus = Calculus::curved);

/// Structural equality of two normalized expressions (free sets compared as
/// sets).
bool same(const Expr &a, const Expr &b);

/// If a == k * b for a rational constant k, returns k.
std::optional<Rational> proportionality(const Expr &a, const Expr &b);

/// Evaluates coefficients at concrete n (and optionally w).
Expr specialize(const Expr &e, const std::optional<Rational> &n, const std::optional<Poly> &w = std::nullopt);

/// Label -> letter used for rendering free indices (a, b, c, ...).
std::string free_label_name(Label l);
std::string to_text(const Expr &e);
std::string to_latex(const Expr &e);

} // namespace ccas

#endif
