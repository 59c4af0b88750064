#ifndef CCAS_SYMOP_HPP
#define CCAS_SYMOP_HPP

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include <ccas/bundles.hpp>

namespace ccas
{

/// Raised when a requested operator is not induced by the given factors.
class DerivationError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

struct CasimirOptions
{
    /// Sign in front of the P-coupling, C(s) = beta s - 2 sum phi^l.(nabla_l s - p P(xi_l).s).
    /// +1 is the Schouten convention; -1 exists only for calibration tests.
    int p_sign = 1;
    Calculus calculus = Calculus::curved;
};

/// The curved Casimir operator on a section, slot by slot.
Section casimir_apply(const CompositionSeries &series, const ActionTable &table, const Section &s,
                      const CasimirOptions &opts = {});

/// C(s) - beta s.
Section shifted_apply(const CompositionSeries &series, const ActionTable &table, const Poly &beta, const Section &s,
                      const CasimirOptions &opts = {});

struct CasimirFactor
{
    std::string label; // e.g. "beta_2^1"
    Poly beta;
};

/// Factors looked up by eigenvalue label, in written order.
std::vector<CasimirFactor> factors_by_label(const CompositionSeries &series, const std::vector<std::string> &labels);

/// (C - b_1) o (C - b_2) o ... o (C - b_k) s; the rightmost factor acts first.
Section apply_factors(const CompositionSeries &series, const ActionTable &table,
                      const std::vector<CasimirFactor> &factors, const Section &s, const CasimirOptions &opts = {});

enum class OperatorTag
{
    invariant,
    splitting,
    zero,
    zero_flat, // vanishes in the flat symbol calculus; curved status left to numerics
};

std::string tag_name(OperatorTag t);

struct OperatorFormula
{
    Family family = Family::oneform;
    Dim n;
    Poly w;
    SlotRef source;
    SlotRef target;
    IrreducibleBundleSpec source_spec;
    IrreducibleBundleSpec target_spec;
    SymbolId source_symbol = -1;
    std::vector<CasimirFactor> factors;
    Expr body; // free labels 0..rank(target)-1, linear in source_symbol
    int order = 0;
    OperatorTag tag = OperatorTag::invariant;
    /// Calculus in which the filtration / extension conditions were verified.
    Calculus verified = Calculus::curved;
    /// Slots above the target level (or target-level slots) that stay
    /// nonzero in the curved calculus when verification fell back to flat.
    std::vector<SlotRef> curved_residual;
    /// Other target-level components reached by the composite.
    std::vector<SlotRef> same_level_nonzero;
};

struct InducedOptions
{
    CasimirOptions casimir;
    /// Verify the filtration and extension conditions on a generic section.
    bool check = true;
    /// Allow falling back to the flat calculus when the curved check is
    /// inconclusive (the engine has no Riemann commutation rules).
    bool allow_flat_fallback = true;
};

/// Operator between irreducible subquotients induced by the factors.
OperatorFormula induced_operator(const CompositionSeries &series, const ActionTable &table, SlotRef source,
                                 SlotRef target, const std::vector<CasimirFactor> &factors,
                                 const InducedOptions &opts = {});

struct SplittingFormula
{
    SlotRef component;
    std::vector<CasimirFactor> factors;
    Poly scale; // coefficient of the identity in the component's own slot
    Section value;
};

/// Splitting operator built from all deeper eigenvalues; throws
/// DerivationError if one of them equals the component's eigenvalue.
SplittingFormula splitting_operator(const CompositionSeries &series, const ActionTable &table, SlotRef component,
                                    const CasimirOptions &opts = {});

/// Highest-order part in the flat symbol calculus.
Expr principal_part(const OperatorFormula &f);
Expr principal_part(const Expr &body, const Dim &n);

/// outer o inner, with outer.source matching inner.target.
OperatorFormula compose(const OperatorFormula &outer, const OperatorFormula &inner);

struct MaxwellResult
{
    OperatorFormula raw;
    Expr expanded;  // raw with projectors expanded (first two identities)
    Expr rewritten; // after commuting nabla_a nabla^c mu_c (third identity)
};

/// Dimension four, symmetric square at w = -2: the operator T from level 1
/// to level 3 and its reduction.
MaxwellResult maxwell_reduction(const InducedOptions &opts = {});

/// The directed rewrite nabla_a nabla^c mu_c -> nabla^c nabla_a mu_c
/// - 2 P_a^c mu_c - J mu_a, valid in dimension four.
Expr commute_divergence_gradient(const Expr &e, SymbolId mu);

/// Cube at w = -n/2: top -> level-3 trace slot and level-3 trace slot ->
/// bottom, with the factors of the dimension-ten construction.
std::pair<OperatorFormula, OperatorFormula> dim10_intermediate_operators(int n = 10, const InducedOptions &opts = {});

/// Cube, dimension ten: the composite with one (C - beta_0) removed.
OperatorFormula dim10_cube(const InducedOptions &opts = {});

struct Dim4Probe
{
    OperatorFormula psi1;
    OperatorFormula phi;
    OperatorFormula psi2;
    OperatorFormula phi_psi1;
    OperatorFormula psi2_phi;
};

Dim4Probe dim4_cube_obstruction_probe(const InducedOptions &opts = {});

struct Dim6T
{
    OperatorFormula t;
    OperatorFormula d;
    OperatorFormula delta;
    OperatorFormula t_d;
    OperatorFormula delta_t;
};

Dim6T dim6_T_operator(const InducedOptions &opts = {});

/// Generic top-to-bottom composites: the product of (C - beta) over every
/// non-top slot (symmetric square), the composite (cubecomp) for the cube,
/// and the four-factor variant in dimension four.
std::vector<CasimirFactor> top_to_bottom_factors(const CompositionSeries &series);
std::vector<CasimirFactor> symsq0_dim4_factors(const CompositionSeries &series);

std::string to_text(const OperatorFormula &f);
std::string to_latex(const OperatorFormula &f);
nlohmann::json to_json(const Expr &e);
nlohmann::json to_json(const OperatorFormula &f);

} // namespace ccas

#endif
