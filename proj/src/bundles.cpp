#include <ccas/bundles.hpp>

#include <algorithm>

namespace ccas
{

std::string family_name(Family f)
{
    switch (f) {
    case Family::oneform:
        return "oneform";
    case Family::symsq0:
        return "symsq0";
    case Family::cube:
        return "cube";
    }
    return "?";
}

Family parse_family(const std::string &name)
{
    if (name == "oneform") {
        return Family::oneform;
    }
    if (name == "symsq0") {
        return Family::symsq0;
    }
    if (name == "cube") {
        return Family::cube;
    }
    throw ConfigError("unknown family '" + name + "' (expected oneform, symsq0 or cube)");
}

std::vector<Label> slot_labels(int rank)
{
    std::vector<Label> l(static_cast<std::size_t>(rank));
    for (int i = 0; i < rank; ++i) {
        l[static_cast<std::size_t>(i)] = i;
    }
    return l;
}

namespace
{

struct SlotDef
{
    int level;
    const char *symbol;
    BundleKind kind;
    int rank;
    int shift; // bundle weight is w + shift
};

// Layouts in vector-notation order (middle slots left to right).
const std::vector<SlotDef> &layout(Family f)
{
    static const std::vector<SlotDef> oneform{
        {0, "oneform.sigma", BundleKind::sym_tracefree, 1, 1},
        {1, "oneform.A", BundleKind::sym_tracefree, 2, 1},
        {1, "oneform.alpha", BundleKind::density, 0, -1},
        {1, "oneform.B", BundleKind::two_form, 2, 1},
        {2, "oneform.rho", BundleKind::sym_tracefree, 1, -1},
    };
    static const std::vector<SlotDef> symsq0{
        {0, "symsq0.sigma", BundleKind::density, 0, 2}, {1, "symsq0.mu", BundleKind::sym_tracefree, 1, 2},
        {2, "symsq0.A", BundleKind::sym_tracefree, 2, 2}, {2, "symsq0.alpha", BundleKind::density, 0, 0},
        {3, "symsq0.nu", BundleKind::sym_tracefree, 1, 0}, {4, "symsq0.rho", BundleKind::density, 0, -2},
    };
    static const std::vector<SlotDef> cube{
        {0, "cube.sigma", BundleKind::density, 0, 3},  {1, "cube.mu", BundleKind::sym_tracefree, 1, 3},
        {2, "cube.A", BundleKind::sym_tracefree, 2, 3}, {2, "cube.alpha", BundleKind::density, 0, 1},
        {3, "cube.Phi", BundleKind::sym_tracefree, 3, 3}, {3, "cube.nu", BundleKind::sym_tracefree, 1, 1},
        {4, "cube.B", BundleKind::sym_tracefree, 2, 1}, {4, "cube.beta", BundleKind::density, 0, -1},
        {5, "cube.tau", BundleKind::sym_tracefree, 1, -1}, {6, "cube.rho", BundleKind::density, 0, -3},
    };
    switch (f) {
    case Family::oneform:
        return oneform;
    case Family::symsq0:
        return symsq0;
    case Family::cube:
        return cube;
    }
    throw ConfigError("unsupported family");
}

} // namespace

const Slot &CompositionSeries::at(SlotRef r) const
{
    if (r.level < 0 || r.level >= depth() || r.index < 0 ||
        r.index >= static_cast<int>(levels[static_cast<std::size_t>(r.level)].size())) {
        throw ConfigError("no slot (" + std::to_string(r.level) + ", " + std::to_string(r.index) + ") in " +
                          family_name(family));
    }
    return levels[static_cast<std::size_t>(r.level)][static_cast<std::size_t>(r.index)];
}

std::vector<const Slot *> CompositionSeries::slots() const
{
    std::vector<const Slot *> out;
    for (const auto &lvl : levels) {
        for (const auto &s : lvl) {
            out.push_back(&s);
        }
    }
    return out;
}

const Slot &CompositionSeries::named(const std::string &name) const
{
    for (const auto *s : slots()) {
        if (s->name == name) {
            return *s;
        }
    }
    throw ConfigError("family " + family_name(family) + " has no slot named '" + name + "'");
}

CompositionSeries composition_series(Family family, const Poly &w, const Dim &n)
{
    check_dimension(n);
    CompositionSeries s;
    s.family = family;
    s.n = n;
    s.w = n.is_symbolic() ? w : w.substitute_n(Poly(n.value()));
    const auto &tab = SymbolTable::instance();
    for (const auto &d : layout(family)) {
        if (static_cast<int>(s.levels.size()) <= d.level) {
            s.levels.resize(static_cast<std::size_t>(d.level + 1));
        }
        auto &lvl = s.levels[static_cast<std::size_t>(d.level)];
        Slot slot;
        slot.ref = {d.level, static_cast<int>(lvl.size())};
        slot.spec = IrreducibleBundleSpec{d.kind, d.rank, s.w + Poly(d.shift)};
        slot.symbol = tab.find(d.symbol);
        slot.name = tab.info(slot.symbol).display;
        slot.beta = bundle_casimir(slot.spec, n);
        lvl.push_back(std::move(slot));
    }
    for (auto &lvl : s.levels) {
        for (auto &slot : lvl) {
            slot.label = "beta_" + std::to_string(slot.ref.level);
            if (lvl.size() > 1) {
                slot.label += "^" + std::to_string(slot.ref.index + 1);
            }
        }
    }
    return s;
}

std::vector<std::vector<Poly>> eigenvalue_differences(const CompositionSeries &series)
{
    std::vector<std::vector<Poly>> out;
    const Poly b0 = series.top().beta;
    for (const auto &lvl : series.levels) {
        std::vector<Poly> row;
        for (const auto &s : lvl) {
            row.push_back(b0 - s.beta);
        }
        out.push_back(std::move(row));
    }
    return out;
}

std::vector<CriticalWeight> critical_weights(Family family, const Dim &n)
{
    const CompositionSeries s = composition_series(family, Poly::w(), n);
    const auto diffs = eigenvalue_differences(s);
    std::vector<CriticalWeight> out;
    for (std::size_t l = 1; l < diffs.size(); ++l) {
        for (std::size_t i = 0; i < diffs[l].size(); ++i) {
            const Poly &d = diffs[l][i];
            if (d.degree_w() > 1) {
                throw std::logic_error("eigenvalue difference is not linear in w");
            }
            // d = a w + b with a, b polynomials in n
            Poly a;
            Poly b;
            for (const auto &[m, c] : d.terms()) {
                (m.second == 1 ? a : b) += Poly::monomial(c, m.first, 0);
            }
            if (a.is_zero()) {
                continue;
            }
            if (!a.is_constant()) {
                throw std::logic_error("eigenvalue difference has n-dependent slope");
            }
            Poly root = -b;
            root *= Rational(1) / a.constant_value();
            const SlotRef ref{static_cast<int>(l), static_cast<int>(i)};
            auto it = std::find_if(out.begin(), out.end(), [&](const CriticalWeight &c) { return c.w == root; });
            if (it == out.end()) {
                out.push_back({root, {ref}});
            } else {
                it->slots.push_back(ref);
            }
        }
    }
    return out;
}

CoincidenceReport coincidence_report(const CompositionSeries &series)
{
    CoincidenceReport r;
    for (const auto *s : series.slots()) {
        auto it = std::find_if(r.groups.begin(), r.groups.end(),
                               [&](const CoincidenceGroup &g) { return g.beta == s->beta; });
        if (it == r.groups.end()) {
            r.groups.push_back({s->beta, {s->ref}});
        } else {
            it->slots.push_back(s->ref);
        }
    }
    r.top_group = r.groups.front().slots;
    r.regular = r.top_group.size() == 1;
    return r;
}

std::vector<const ActionEntry *> ActionTable::into(SlotRef target) const
{
    std::vector<const ActionEntry *> out;
    for (const auto &e : entries) {
        if (e.target == target) {
            out.push_back(&e);
        }
    }
    return out;
}

namespace
{

constexpr Label lq = 20; // contracted phi index in patterns
constexpr Label lr = 21;

Expr phi(Label l)
{
    return Expr::symbol(SymbolTable::instance().phi(), {l});
}

Expr src(std::vector<Label> idx)
{
    const int rank = static_cast<int>(idx.size());
    return Expr::symbol(SymbolTable::instance().source(rank), std::move(idx));
}

Expr scaled(const Coef &c, Expr e)
{
    return c * std::move(e);
}

/// c * phi_a X (scalar source), target E_a
Expr phi_times_scalar(const Coef &c)
{
    return scaled(c, product(src({}), phi(0)));
}

/// c * phi^i X_i, target scalar
Expr phi_contract_vector(const Coef &c)
{
    return scaled(c, product(phi(lq), src({lq})));
}

/// c * phi^i X_{ia}, target E_a
Expr phi_contract_first(const Coef &c)
{
    return scaled(c, product(phi(lq), src({lq, 0})));
}

/// c * phi_(a X_b)_0, target E_(ab)_0
Expr phi_stf_vector(const Coef &c, const Dim &n)
{
    return scaled(c, sym_tracefree(product(phi(0), src({1})), {0, 1}, n));
}

ActionTable oneform_table(const Dim &n)
{
    ActionTable t;
    const SlotRef sigma{0, 0}, A{1, 0}, alpha{1, 1}, B{1, 2}, rho{2, 0};
    // -sigma_(a phi_b)_0 | -sigma^i phi_i | -sigma_[a phi_b]
    t.entries.push_back({sigma, A, phi_stf_vector(Coef(-1), n)});
    t.entries.push_back({sigma, alpha, phi_contract_vector(Coef(-1))});
    t.entries.push_back({sigma, B, scaled(Coef(-1), alternate(product(src({0}), phi(1)), 0, 1))});
    // A_ab phi^b + (1/n) alpha phi_a + B_ab phi^b
    t.entries.push_back({A, rho, product(src({0, lq}), phi(lq))});
    t.entries.push_back({alpha, rho, phi_times_scalar(Coef::inverse_n_plus(0, n))});
    t.entries.push_back({B, rho, product(src({0, lq}), phi(lq))});
    return t;
}

ActionTable symsq0_table(const Dim &n)
{
    ActionTable t;
    const SlotRef sigma{0, 0}, mu{1, 0}, A{2, 0}, alpha{2, 1}, nu{3, 0}, rho{4, 0};
    const Coef np2_over_n = Coef(n.as_poly() + Poly(2)) * Coef::inverse_n_plus(0, n);
    t.entries.push_back({sigma, mu, phi_times_scalar(Coef(-2))});
    t.entries.push_back({mu, A, phi_stf_vector(Coef(-1), n)});
    t.entries.push_back({mu, alpha, phi_contract_vector(Coef(1))});
    t.entries.push_back({A, nu, phi_contract_first(Coef(2))});
    t.entries.push_back({alpha, nu, phi_times_scalar(-np2_over_n)});
    t.entries.push_back({nu, rho, phi_contract_vector(Coef(1))});
    return t;
}

ActionTable cube_table(const Dim &n)
{
    ActionTable t;
    const SlotRef sigma{0, 0}, mu{1, 0}, A{2, 0}, alpha{2, 1}, Phi{3, 0}, nu{3, 1}, B{4, 0}, beta{4, 1}, tau{5, 0},
        rho{6, 0};
    const Coef np2_over_n = Coef(n.as_poly() + Poly(2)) * Coef::inverse_n_plus(0, n);
    const Coef np4_over_np2 = Coef(n.as_poly() + Poly(4)) * Coef::inverse_n_plus(2, n);
    const Coef np4_over_n = Coef(n.as_poly() + Poly(4)) * Coef::inverse_n_plus(0, n);
    t.entries.push_back({sigma, mu, phi_times_scalar(Coef(-3))});
    t.entries.push_back({mu, A, phi_stf_vector(Coef(-2), n)});
    t.entries.push_back({mu, alpha, phi_contract_vector(Coef(1))});
    // -phi_(a A_bc)_0 | -2 (n+2)/n alpha phi_a + 2 phi^i A_ia
    t.entries.push_back({A, Phi, scaled(Coef(-1), sym_tracefree(product(phi(0), src({1, 2})), {0, 1, 2}, n))});
    t.entries.push_back({A, nu, phi_contract_first(Coef(2))});
    t.entries.push_back({alpha, nu, phi_times_scalar(Coef(-2) * np2_over_n)});
    // -(n+4)/(n+2) phi_(a nu_b)_0 + 3 phi^i Phi_iab | phi^i nu_i
    t.entries.push_back({Phi, B, scaled(Coef(3), product(phi(lq), src({lq, 0, 1})))});
    t.entries.push_back({nu, B, phi_stf_vector(-np4_over_np2, n)});
    t.entries.push_back({nu, beta, phi_contract_vector(Coef(1))});
    // -(n+4)/n beta phi_a + 2 phi^i B_ia
    t.entries.push_back({B, tau, phi_contract_first(Coef(2))});
    t.entries.push_back({beta, tau, phi_times_scalar(-np4_over_n)});
    t.entries.push_back({tau, rho, phi_contract_vector(Coef(1))});
    (void)lr;
    return t;
}

} // namespace

ActionTable pplus_action_table(Family family, const Dim &n)
{
    check_dimension(n);
    ActionTable t;
    switch (family) {
    case Family::oneform:
        t = oneform_table(n);
        break;
    case Family::symsq0:
        t = symsq0_table(n);
        break;
    case Family::cube:
        t = cube_table(n);
        break;
    }
    t.family = family;
    t.n = n;
    for (auto &e : t.entries) {
        e.pattern = normalize(e.pattern, n);
    }
    return t;
}

Expr Section::get(SlotRef r, int rank) const
{
    auto it = slots.find(r);
    if (it == slots.end()) {
        return Expr(slot_labels(rank));
    }
    return it->second;
}

Section generic_section(const CompositionSeries &series)
{
    Section s;
    for (const auto *slot : series.slots()) {
        s.slots[slot->ref] = Expr::symbol(slot->symbol, slot_labels(slot->spec.tensor_rank()));
    }
    return s;
}

Section act(const CompositionSeries &series, const ActionTable &table, const Section &s, const Expr &oneform)
{
    const auto &tab = SymbolTable::instance();
    Section out;
    for (const auto *slot : series.slots()) {
        const int rank = slot->spec.tensor_rank();
        Expr acc(slot_labels(rank));
        for (const auto *e : table.into(slot->ref)) {
            const Slot &from = series.at(e->source);
            const Expr x = s.get(e->source, from.spec.tensor_rank());
            if (x.is_zero()) {
                continue;
            }
            Expr term = substitute(e->pattern, tab.phi(), oneform);
            term = substitute(term, tab.source(from.spec.tensor_rank()), x);
            acc += term.with_free_order(acc.free());
        }
        acc = normalize(acc, series.n);
        if (!acc.is_zero()) {
            out.slots[slot->ref] = std::move(acc);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON

nlohmann::json to_json(const Poly &p)
{
    return p.to_string();
}

namespace
{
nlohmann::json slot_json(const Slot &s, const Poly &beta0)
{
    return {{"level", s.ref.level},
            {"index", s.ref.index},
            {"name", s.name},
            {"bundle", s.spec.name()},
            {"label", s.label},
            {"beta", to_json(s.beta)},
            {"difference", to_json(beta0 - s.beta)}};
}

nlohmann::json ref_json(SlotRef r)
{
    return nlohmann::json::array({r.level, r.index});
}
} // namespace

nlohmann::json to_json(const CompositionSeries &series)
{
    nlohmann::json j;
    j["family"] = family_name(series.family);
    j["n"] = series.n.to_string();
    j["w"] = to_json(series.w);
    j["levels"] = nlohmann::json::array();
    j["slots"] = nlohmann::json::array();
    j["beta"] = nlohmann::json::array();
    j["differences"] = nlohmann::json::array();
    const Poly b0 = series.top().beta;
    for (const auto &lvl : series.levels) {
        nlohmann::json level = nlohmann::json::array();
        nlohmann::json betas = nlohmann::json::array();
        nlohmann::json diffs = nlohmann::json::array();
        for (const auto &s : lvl) {
            level.push_back(s.name);
            betas.push_back(to_json(s.beta));
            diffs.push_back(to_json(b0 - s.beta));
            j["slots"].push_back(slot_json(s, b0));
        }
        j["levels"].push_back(level);
        j["beta"].push_back(betas);
        j["differences"].push_back(diffs);
    }
    return j;
}

nlohmann::json to_json(const CompositionSeries &series, const CoincidenceReport &report)
{
    nlohmann::json j = to_json(series);
    j["groups"] = nlohmann::json::array();
    for (const auto &g : report.groups) {
        nlohmann::json slots = nlohmann::json::array();
        for (auto r : g.slots) {
            slots.push_back(ref_json(r));
        }
        j["groups"].push_back({{"beta", to_json(g.beta)}, {"slots", slots}});
    }
    j["regular"] = report.regular;
    return j;
}

nlohmann::json to_json(const ActionTable &table)
{
    nlohmann::json j;
    j["family"] = family_name(table.family);
    j["n"] = table.n.to_string();
    j["entries"] = nlohmann::json::array();
    for (const auto &e : table.entries) {
        j["entries"].push_back(
            {{"source", ref_json(e.source)}, {"target", ref_json(e.target)}, {"pattern", to_text(e.pattern)}});
    }
    return j;
}

} // namespace ccas
