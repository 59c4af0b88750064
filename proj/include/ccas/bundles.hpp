#ifndef CCAS_BUNDLES_HPP
#define CCAS_BUNDLES_HPP

#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include <ccas/tensor.hpp>
#include <ccas/weights.hpp>

namespace ccas
{

/// The three tractor-product bundles: E_a[w] (x) E^A, E^{(AB)_0}[w] and
/// S^3_0 E^A [w].
enum class Family
{
    oneform,
    symsq0,
    cube,
};

std::string family_name(Family f);
/// Accepts "oneform", "symsq0", "cube"; throws ConfigError otherwise.
Family parse_family(const std::string &name);

/// (level, component index) of a slot; level 0 is the projecting slot.
struct SlotRef
{
    int level = 0;
    int index = 0;

    friend auto operator<=>(const SlotRef &, const SlotRef &) = default;
};

struct Slot
{
    SlotRef ref;
    IrreducibleBundleSpec spec;
    std::string name;  // slot variable, e.g. "A"
    std::string label; // eigenvalue label, e.g. "beta_2^1"
    SymbolId symbol = -1;
    Poly beta;
};

class CompositionSeries
{
public:
    Family family = Family::oneform;
    Dim n;
    Poly w;
    std::vector<std::vector<Slot>> levels;

    [[nodiscard]] const Slot &at(SlotRef r) const;
    [[nodiscard]] const Slot &top() const { return levels.front().front(); }
    [[nodiscard]] const Slot &bottom() const { return levels.back().front(); }
    [[nodiscard]] int depth() const { return static_cast<int>(levels.size()); }
    [[nodiscard]] std::vector<const Slot *> slots() const;
    /// Finds a slot by variable name ("A", "nu", ...); throws ConfigError.
    [[nodiscard]] const Slot &named(const std::string &name) const;
};

/// Layout with Casimir scalars. w may be a polynomial in n and the symbol w;
/// for concrete n it is evaluated at that n first.
CompositionSeries composition_series(Family family, const Poly &w, const Dim &n);

/// beta_0 - beta for every slot, by level.
std::vector<std::vector<Poly>> eigenvalue_differences(const CompositionSeries &series);

struct CriticalWeight
{
    Poly w; // polynomial in n only
    std::vector<SlotRef> slots;
};

/// Weights at which the top eigenvalue coincides with a lower one, sorted by
/// the slot first reached.
std::vector<CriticalWeight> critical_weights(Family family, const Dim &n);

struct CoincidenceGroup
{
    Poly beta;
    std::vector<SlotRef> slots;
};

struct CoincidenceReport
{
    std::vector<CoincidenceGroup> groups;
    bool regular = true; // top eigenvalue is not shared
    std::vector<SlotRef> top_group;
};

CoincidenceReport coincidence_report(const CompositionSeries &series);

/// One entry of the p_+ action: the target component as a bilinear pattern
/// in phi_q and the placeholder X carrying the source indices. The pattern's
/// free labels are the target indices 0, 1, ...
struct ActionEntry
{
    SlotRef source;
    SlotRef target;
    Expr pattern;
};

struct ActionTable
{
    Family family = Family::oneform;
    Dim n;
    std::vector<ActionEntry> entries;

    [[nodiscard]] std::vector<const ActionEntry *> into(SlotRef target) const;
};

ActionTable pplus_action_table(Family family, const Dim &n);

/// Slot-wise section in vector notation; absent slots are zero. Slot
/// expressions use free labels 0, 1, ... for their indices.
struct Section
{
    std::map<SlotRef, Expr> slots;

    [[nodiscard]] Expr get(SlotRef r, int rank) const;
};

/// Every slot set to its own slot variable.
Section generic_section(const CompositionSeries &series);

/// Pointwise action of a one-form (an expression with a single free index)
/// on a section.
Section act(const CompositionSeries &series, const ActionTable &table, const Section &s, const Expr &oneform);

/// Labels 0..rank-1.
std::vector<Label> slot_labels(int rank);

nlohmann::json to_json(const Poly &p);
nlohmann::json to_json(const CompositionSeries &series);
nlohmann::json to_json(const CompositionSeries &series, const CoincidenceReport &report);
nlohmann::json to_json(const ActionTable &table);

} // namespace ccas

#endif
