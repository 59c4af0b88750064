#include <ccas/symop.hpp>

#include <algorithm>
#include <map>
#include <sstream>

namespace ccas
{

namespace
{

// Free label of the frame direction xi_l while the Casimir is assembled.
constexpr Label frame_label = 10;
constexpr Label pattern_aux = 11;

int term_order(const Term &t)
{
    int d = 0;
    for (const auto &f : t.factors) {
        d += static_cast<int>(f.deriv.size());
    }
    return d;
}

int expr_order(const Expr &e)
{
    int m = 0;
    for (const auto &t : e.terms()) {
        m = std::max(m, term_order(t));
    }
    return m;
}

/// Same terms, different declared free list (for expressions carrying an
/// external label).
Expr with_free(const Expr &e, std::vector<Label> free)
{
    Expr r(std::move(free));
    for (const auto &t : e.terms()) {
        r.add_term(t);
    }
    return r;
}

/// Replaces phi_q X_I in every term of the pattern by Y_{q I}, then
/// substitutes y (free list [l, I...]) for Y.
Expr fuse(const Expr &pattern, int src_rank, const Expr &y)
{
    const auto &tab = SymbolTable::instance();
    const SymbolId x = tab.source(src_rank);
    const SymbolId fused = tab.fused(src_rank);
    Expr f(pattern.free());
    for (const auto &t : pattern.terms()) {
        Term nt;
        nt.coef = t.coef;
        const Factor *ph = nullptr;
        const Factor *xs = nullptr;
        for (const auto &fac : t.factors) {
            if (fac.symbol == tab.phi()) {
                ph = &fac;
            } else if (fac.symbol == x) {
                xs = &fac;
            } else {
                nt.factors.push_back(fac);
            }
        }
        if (ph == nullptr || xs == nullptr) {
            throw std::logic_error("action pattern is not bilinear in phi and the source");
        }
        Factor yf{fused, {}, {ph->idx[0]}};
        yf.idx.insert(yf.idx.end(), xs->idx.begin(), xs->idx.end());
        nt.factors.push_back(std::move(yf));
        f.add_term(std::move(nt));
    }
    return substitute(f, fused, y);
}

Section casimir_shifted(const CompositionSeries &series, const ActionTable &table, const Section &s,
                        const Poly &shift, const CasimirOptions &opts)
{
    const auto &tab = SymbolTable::instance();
    std::map<SlotRef, Expr> ycache;
    // Y_src = nabla_l s_src - p (P(xi_l) . s)_src, free list [l, src indices]
    auto y_of = [&](const Slot &src) -> const Expr & {
        auto it = ycache.find(src.ref);
        if (it != ycache.end()) {
            return it->second;
        }
        const int r = src.spec.tensor_rank();
        std::vector<Label> free{frame_label};
        for (Label l : slot_labels(r)) {
            free.push_back(l);
        }
        Expr y(free);
        const Expr s_src = s.get(src.ref, r);
        if (!s_src.is_zero()) {
            y += nabla(s_src, frame_label);
        }
        for (const auto *e : table.into(src.ref)) {
            const Slot &from = series.at(e->source);
            const Expr s_from = s.get(e->source, from.spec.tensor_rank());
            if (s_from.is_zero()) {
                continue;
            }
            const Expr p =
                Expr::symbol(tab.schouten(), {frame_label, pattern_aux}).with_free_order({pattern_aux, frame_label});
            Expr term = substitute(e->pattern, tab.phi(), p);
            term = substitute(term, tab.source(from.spec.tensor_rank()), s_from);
            y += Coef(-opts.p_sign) * with_free(term, free);
        }
        return ycache.emplace(src.ref, normalize(y, series.n, opts.calculus)).first->second;
    };

    Section out;
    for (const auto *slot : series.slots()) {
        const int rank = slot->spec.tensor_rank();
        Expr acc(slot_labels(rank));
        const Expr own = s.get(slot->ref, rank);
        if (!own.is_zero()) {
            const Coef c(slot->beta - shift);
            if (!c.is_zero()) {
                acc += c * own;
            }
        }
        for (const auto *e : table.into(slot->ref)) {
            const Slot &from = series.at(e->source);
            const Expr &y = y_of(from);
            if (y.is_zero()) {
                continue;
            }
            acc += Coef(-2) * fuse(e->pattern, from.spec.tensor_rank(), y).with_free_order(acc.free());
        }
        acc = normalize(acc, series.n, opts.calculus);
        if (!acc.is_zero()) {
            out.slots[slot->ref] = std::move(acc);
        }
    }
    return out;
}

} // namespace

Section casimir_apply(const CompositionSeries &series, const ActionTable &table, const Section &s,
                      const CasimirOptions &opts)
{
    return casimir_shifted(series, table, s, Poly(0), opts);
}

Section shifted_apply(const CompositionSeries &series, const ActionTable &table, const Poly &beta, const Section &s,
                      const CasimirOptions &opts)
{
    return casimir_shifted(series, table, s, beta, opts);
}

std::vector<CasimirFactor> factors_by_label(const CompositionSeries &series, const std::vector<std::string> &labels)
{
    std::vector<CasimirFactor> out;
    for (const auto &l : labels) {
        const Slot *found = nullptr;
        for (const auto *s : series.slots()) {
            if (s->label == l) {
                found = s;
            }
        }
        if (found == nullptr) {
            throw ConfigError("no eigenvalue labelled " + l + " in " + family_name(series.family));
        }
        out.push_back({l, found->beta});
    }
    return out;
}

Section apply_factors(const CompositionSeries &series, const ActionTable &table,
                      const std::vector<CasimirFactor> &factors, const Section &s, const CasimirOptions &opts)
{
    Section cur = s;
    for (auto it = factors.rbegin(); it != factors.rend(); ++it) {
        cur = casimir_shifted(series, table, cur, it->beta, opts);
    }
    return cur;
}

std::string tag_name(OperatorTag t)
{
    switch (t) {
    case OperatorTag::invariant:
        return "invariant";
    case OperatorTag::splitting:
        return "splitting";
    case OperatorTag::zero:
        return "zero";
    case OperatorTag::zero_flat:
        return "zero-flat";
    }
    return "?";
}

namespace
{

struct CheckResult
{
    bool ok = true;
    std::vector<SlotRef> offending;
    std::vector<SlotRef> same_level;
    Section value;
};

CheckResult run_check(const CompositionSeries &series, const ActionTable &table, SlotRef source, SlotRef target,
                      const std::vector<CasimirFactor> &factors, bool generic_below, const CasimirOptions &opts)
{
    const Slot &src = series.at(source);
    Section s;
    s.slots[source] = Expr::symbol(src.symbol, slot_labels(src.spec.tensor_rank()));
    if (generic_below) {
        for (const auto *slot : series.slots()) {
            if (slot->ref.level > source.level) {
                s.slots[slot->ref] = Expr::symbol(slot->symbol, slot_labels(slot->spec.tensor_rank()));
            }
        }
    }
    CheckResult r;
    r.value = apply_factors(series, table, factors, s, opts);
    for (const auto &[ref, e] : r.value.slots) {
        if (ref.level < target.level) {
            r.ok = false;
            r.offending.push_back(ref);
        } else if (ref.level == target.level && ref != target) {
            r.same_level.push_back(ref);
        }
    }
    auto it = r.value.slots.find(target);
    if (it != r.value.slots.end()) {
        for (SymbolId sym : it->second.symbols()) {
            const auto &inf = SymbolTable::instance().info(sym);
            if (sym != src.symbol && !inf.curvature && !inf.parallel) {
                r.ok = false;
                r.offending.push_back(target);
                break;
            }
        }
    }
    return r;
}

std::string refs_text(const CompositionSeries &series, const std::vector<SlotRef> &refs)
{
    std::string s;
    for (auto r : refs) {
        if (!s.empty()) {
            s += ", ";
        }
        s += series.at(r).name + " (" + series.at(r).label + ")";
    }
    return s;
}

} // namespace

OperatorFormula induced_operator(const CompositionSeries &series, const ActionTable &table, SlotRef source,
                                 SlotRef target, const std::vector<CasimirFactor> &factors, const InducedOptions &opts)
{
    if (target.level < source.level) {
        throw ConfigError("target slot lies above the source slot");
    }
    OperatorFormula f;
    f.family = series.family;
    f.n = series.n;
    f.w = series.w;
    f.source = source;
    f.target = target;
    f.source_spec = series.at(source).spec;
    f.target_spec = series.at(target).spec;
    f.source_symbol = series.at(source).symbol;
    f.factors = factors;
    f.verified = opts.casimir.calculus;

    CheckResult r = run_check(series, table, source, target, factors, opts.check, opts.casimir);
    if (opts.check && !r.ok) {
        if (opts.casimir.calculus == Calculus::curved && opts.allow_flat_fallback) {
            CasimirOptions flat = opts.casimir;
            flat.calculus = Calculus::flat;
            CheckResult rf = run_check(series, table, source, target, factors, true, flat);
            if (!rf.ok) {
                throw DerivationError("not well-defined: residual slots " + refs_text(series, rf.offending));
            }
            f.verified = Calculus::flat;
            f.curved_residual = r.offending;
        } else {
            throw DerivationError("not well-defined: residual slots " + refs_text(series, r.offending));
        }
    }
    f.same_level_nonzero = r.same_level;
    const Expr tv = r.value.get(target, f.target_spec.tensor_rank());
    f.body = normalize(keep_symbol(tv, f.source_symbol), series.n, opts.casimir.calculus);
    f.order = expr_order(f.body);
    if (f.body.is_zero()) {
        f.tag = opts.casimir.calculus == Calculus::flat ? OperatorTag::zero_flat : OperatorTag::zero;
    } else if (normalize(f.body, series.n, Calculus::flat).is_zero()) {
        f.tag = OperatorTag::zero_flat;
    } else {
        f.tag = OperatorTag::invariant;
    }
    return f;
}

SplittingFormula splitting_operator(const CompositionSeries &series, const ActionTable &table, SlotRef component,
                                    const CasimirOptions &opts)
{
    const Slot &c = series.at(component);
    SplittingFormula sf;
    sf.component = component;
    sf.scale = Poly(1);
    std::vector<Poly> seen;
    for (const auto *s : series.slots()) {
        if (s->ref.level <= component.level) {
            continue;
        }
        if (s->beta == c.beta) {
            throw DerivationError("eigenvalue of " + c.name + " coincides with " + s->label + " (" + s->name +
                                  "); use induced_operator");
        }
        if (std::find(seen.begin(), seen.end(), s->beta) != seen.end()) {
            continue;
        }
        seen.push_back(s->beta);
        sf.factors.push_back({s->label, s->beta});
        sf.scale *= c.beta - s->beta;
    }
    Section s;
    s.slots[component] = Expr::symbol(c.symbol, slot_labels(c.spec.tensor_rank()));
    sf.value = apply_factors(series, table, sf.factors, s, opts);
    return sf;
}

Expr principal_part(const Expr &body, const Dim &n)
{
    const Expr flat = normalize(body, n, Calculus::flat);
    return normalize(keep_order(flat, expr_order(flat)), n, Calculus::flat);
}

Expr principal_part(const OperatorFormula &f)
{
    return principal_part(f.body, f.n);
}

OperatorFormula compose(const OperatorFormula &outer, const OperatorFormula &inner)
{
    if (outer.family != inner.family || outer.source != inner.target) {
        throw ConfigError("compose: inner target does not match outer source");
    }
    OperatorFormula f = outer;
    f.source = inner.source;
    f.source_spec = inner.source_spec;
    f.source_symbol = inner.source_symbol;
    f.factors = outer.factors;
    f.factors.insert(f.factors.end(), inner.factors.begin(), inner.factors.end());
    const Calculus calc = (outer.verified == Calculus::flat || inner.verified == Calculus::flat) ? Calculus::flat
                                                                                                : Calculus::curved;
    f.verified = calc;
    f.body = normalize(substitute(outer.body, outer.source_symbol, inner.body), f.n, Calculus::curved);
    f.order = expr_order(f.body);
    f.curved_residual.clear();
    f.same_level_nonzero.clear();
    if (f.body.is_zero()) {
        f.tag = OperatorTag::zero;
    } else if (normalize(f.body, f.n, Calculus::flat).is_zero()) {
        f.tag = OperatorTag::zero_flat;
    } else {
        f.tag = OperatorTag::invariant;
    }
    return f;
}

std::vector<CasimirFactor> top_to_bottom_factors(const CompositionSeries &series)
{
    switch (series.family) {
    case Family::oneform:
        return factors_by_label(series, {"beta_2", "beta_1^1", "beta_1^2", "beta_1^3"});
    case Family::symsq0:
        return factors_by_label(series, {"beta_4", "beta_3", "beta_2^1", "beta_2^2", "beta_1"});
    case Family::cube:
        return factors_by_label(series, {"beta_0", "beta_1", "beta_1", "beta_2^1", "beta_2^1", "beta_2^2", "beta_2^2",
                                         "beta_3^1", "beta_3^2"});
    }
    return {};
}

std::vector<CasimirFactor> symsq0_dim4_factors(const CompositionSeries &series)
{
    return factors_by_label(series, {"beta_4", "beta_4", "beta_2^1", "beta_2^2"});
}

Expr commute_divergence_gradient(const Expr &e, SymbolId mu)
{
    const auto &tab = SymbolTable::instance();
    Expr out(e.free());
    for (const auto &t : e.terms()) {
        std::size_t hit = t.factors.size();
        for (std::size_t i = 0; i < t.factors.size(); ++i) {
            const Factor &f = t.factors[i];
            if (f.symbol == mu && f.deriv.size() == 2 && f.idx.size() == 1 && f.deriv[1] == f.idx[0] &&
                f.deriv[0] != f.deriv[1]) {
                hit = i;
                break;
            }
        }
        if (hit == t.factors.size()) {
            out.add_term(t);
            continue;
        }
        const Factor f = t.factors[hit];
        const Label a = f.deriv[0];
        const Label c = f.deriv[1];
        auto with = [&](std::vector<Factor> repl, const Coef &k) {
            Term nt;
            nt.coef = t.coef * k;
            for (std::size_t i = 0; i < t.factors.size(); ++i) {
                if (i != hit) {
                    nt.factors.push_back(t.factors[i]);
                }
            }
            nt.factors.insert(nt.factors.end(), repl.begin(), repl.end());
            out.add_term(std::move(nt));
        };
        // nabla^c nabla_a mu_c - 2 P_a^c mu_c - J mu_a
        with({Factor{mu, {c, a}, {c}}}, Coef(1));
        with({Factor{tab.schouten(), {}, {a, c}}, Factor{mu, {}, {c}}}, Coef(-2));
        with({Factor{tab.schouten_trace(), {}, {}}, Factor{mu, {}, {a}}}, Coef(-1));
    }
    return out;
}

MaxwellResult maxwell_reduction(const InducedOptions &opts)
{
    const Dim n = Dim::of(4);
    const auto series = composition_series(Family::symsq0, Poly(-2), n);
    const auto table = pplus_action_table(Family::symsq0, n);
    MaxwellResult m;
    m.raw = induced_operator(series, table, {1, 0}, {3, 0},
                             factors_by_label(series, {"beta_1", "beta_2^1", "beta_2^2"}), opts);
    m.expanded = m.raw.body;
    m.rewritten = normalize(commute_divergence_gradient(m.raw.body, m.raw.source_symbol), n);
    return m;
}

std::pair<OperatorFormula, OperatorFormula> dim10_intermediate_operators(int nv, const InducedOptions &opts)
{
    const Dim n = Dim::of(nv);
    const auto series = composition_series(Family::cube, Poly(-nv / 2), n);
    const auto table = pplus_action_table(Family::cube, n);
    const SlotRef top{0, 0}, nu{3, 1}, bottom{6, 0};
    auto first = induced_operator(series, table, top, nu,
                                  factors_by_label(series, {"beta_3^2", "beta_2^1", "beta_2^2", "beta_1"}), opts);
    auto second = induced_operator(series, table, nu, bottom,
                                   factors_by_label(series, {"beta_5", "beta_4^1", "beta_4^2", "beta_3^2"}), opts);
    return {std::move(first), std::move(second)};
}

OperatorFormula dim10_cube(const InducedOptions &opts)
{
    const Dim n = Dim::of(10);
    const auto series = composition_series(Family::cube, Poly(-5), n);
    const auto table = pplus_action_table(Family::cube, n);
    return induced_operator(series, table, {0, 0}, {6, 0},
                            factors_by_label(series, {"beta_1", "beta_1", "beta_2^1", "beta_2^1", "beta_2^2",
                                                      "beta_2^2", "beta_3^1", "beta_3^2"}),
                            opts);
}

Dim4Probe dim4_cube_obstruction_probe(const InducedOptions &opts)
{
    const Dim n = Dim::of(4);
    const auto series = composition_series(Family::cube, Poly(-2), n);
    const auto table = pplus_action_table(Family::cube, n);
    const SlotRef top{0, 0}, A{2, 0}, B{4, 0}, bottom{6, 0};
    Dim4Probe p;
    p.psi1 = induced_operator(series, table, top, A, factors_by_label(series, {"beta_0", "beta_1"}), opts);
    p.phi = induced_operator(series, table, A, B, factors_by_label(series, {"beta_0", "beta_3^1", "beta_3^2"}), opts);
    p.psi2 = induced_operator(series, table, B, bottom, factors_by_label(series, {"beta_0", "beta_1"}), opts);
    p.phi_psi1 = compose(p.phi, p.psi1);
    p.psi2_phi = compose(p.psi2, p.phi);
    return p;
}

Dim6T dim6_T_operator(const InducedOptions &opts)
{
    const Dim n = Dim::of(6);
    const auto series = composition_series(Family::cube, Poly(-3), n);
    const auto table = pplus_action_table(Family::cube, n);
    const SlotRef top{0, 0}, mu{1, 0}, tau{5, 0}, bottom{6, 0};
    Dim6T r;
    r.t = induced_operator(
        series, table, mu, tau,
        factors_by_label(series, {"beta_0", "beta_2^1", "beta_2^1", "beta_2^2", "beta_2^2", "beta_3^1", "beta_3^2"}),
        opts);
    r.d = induced_operator(series, table, top, mu, factors_by_label(series, {"beta_0"}), opts);
    r.delta = induced_operator(series, table, tau, bottom, factors_by_label(series, {"beta_0"}), opts);
    r.t_d = compose(r.t, r.d);
    r.delta_t = compose(r.delta, r.t);
    return r;
}

// ---------------------------------------------------------------------------
// Export

namespace
{
std::string factor_list(const OperatorFormula &f)
{
    std::string s;
    for (const auto &c : f.factors) {
        s += "(C - " + c.label + ")";
    }
    return s.empty() ? "id" : s;
}
} // namespace

std::string to_text(const OperatorFormula &f)
{
    std::ostringstream out;
    out << f.source_spec.name() << " -> " << f.target_spec.name() << " [" << factor_list(f) << ", order " << f.order
        << ", " << tag_name(f.tag) << "]: " << to_text(f.body);
    return out.str();
}

std::string to_latex(const OperatorFormula &f)
{
    return to_latex(f.body);
}

nlohmann::json to_json(const Expr &e)
{
    const auto &tab = SymbolTable::instance();
    nlohmann::json j;
    j["free"] = e.free();
    j["text"] = to_text(e);
    j["latex"] = to_latex(e);
    j["terms"] = nlohmann::json::array();
    for (const auto &t : e.terms()) {
        nlohmann::json factors = nlohmann::json::array();
        for (const auto &f : t.factors) {
            factors.push_back({{"symbol", tab.info(f.symbol).name}, {"deriv", f.deriv}, {"idx", f.idx}});
        }
        j["terms"].push_back({{"coef", t.coef.to_string()}, {"factors", factors}});
    }
    return j;
}

nlohmann::json to_json(const OperatorFormula &f)
{
    nlohmann::json j;
    j["family"] = family_name(f.family);
    j["n"] = f.n.to_string();
    j["w"] = f.w.to_string();
    j["source"] = {{"slot", {f.source.level, f.source.index}}, {"bundle", f.source_spec.name()}};
    j["target"] = {{"slot", {f.target.level, f.target.index}}, {"bundle", f.target_spec.name()}};
    j["factors"] = nlohmann::json::array();
    for (const auto &c : f.factors) {
        j["factors"].push_back({{"label", c.label}, {"beta", c.beta.to_string()}});
    }
    j["order"] = f.order;
    j["tag"] = tag_name(f.tag);
    j["verified"] = f.verified == Calculus::curved ? "curved" : "flat";
    j["body"] = to_json(f.body);
    return j;
}

} // namespace ccas
