// Acceptance run: one PASS/FAIL line per criterion. Tolerances are pinned
// here; the process exits nonzero only on an unexpected result.

#include <ccas/numeric.hpp>
#include <ccas/symop.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>

using namespace ccas;

namespace
{

// ---------------------------------------------------------------------------
// pinned settings

constexpr double vanish_tol = 1e-6;    // absolute residual accepted without a fit
constexpr double oracle_tol = 1e-6;    // flat-grid oracle, relative
constexpr double principal_tol = 1e-5; // dimension ten principal part, relative
constexpr double dominance = 1e3;      // perturbed over conformally flat residual
constexpr double stall_residual = 1e-2;
constexpr double stall_order = 1.0;
constexpr double eps = 0.05;
const std::vector<int> study{32, 48, 64};

// Criteria whose literal check is known to fail, see the README.
const std::set<int> expected_fail{4};

// ---------------------------------------------------------------------------
// helpers

const Dim sym_n = Dim::symbolic();

Expr S(const std::string &name, std::vector<Label> idx)
{
    return Expr::symbol(SymbolTable::instance().find(name), std::move(idx));
}

Expr P(Label a, Label b)
{
    return Expr::symbol(SymbolTable::instance().schouten(), {a, b});
}

Expr J()
{
    return Expr::symbol(SymbolTable::instance().schouten_trace(), {});
}

Coef k(long p, long q = 1)
{
    return Coef(ratio(p, q));
}

Expr nf(const Expr &e, const Dim &n = sym_n, Calculus c = Calculus::curved)
{
    return normalize(e, n, c);
}

bool same_nf(const Expr &a, const Expr &b, const Dim &n = sym_n)
{
    return same(nf(a, n), nf(b, n));
}

std::string str(const Rational &r)
{
    return Poly(r).to_string();
}

std::string sci(double x)
{
    std::ostringstream s;
    s << std::scientific << std::setprecision(2) << x;
    return s.str();
}

std::vector<Poly> betas(const CompositionSeries &s)
{
    std::vector<Poly> out;
    for (const auto *slot : s.slots()) {
        out.push_back(slot->beta);
    }
    return out;
}

std::vector<Poly> flatten(const std::vector<std::vector<Poly>> &v)
{
    std::vector<Poly> out;
    for (const auto &row : v) {
        out.insert(out.end(), row.begin(), row.end());
    }
    return out;
}

Expr laplacian_power(const Expr &base, int k)
{
    Expr e = base;
    for (int i = 0; i < k; ++i) {
        const Label a = 100 + 2 * i;
        e = trace(nabla(nabla(e, a + 1), a), a, a + 1);
    }
    return e;
}

OperatorFormula oneform_op(const Poly &w, const Dim &n, SlotRef a, SlotRef b, const std::vector<std::string> &labels,
                           int p_sign = 1)
{
    const auto series = composition_series(Family::oneform, w, n);
    const auto table = pplus_action_table(Family::oneform, n);
    InducedOptions o;
    o.casimir.p_sign = p_sign;
    return induced_operator(series, table, a, b, factors_by_label(series, labels), o);
}

const std::vector<std::string> oneform_second{"beta_2", "beta_1^1", "beta_1^2", "beta_1^3"};

OperatorFormula top_to_bottom(Family fam, const Poly &w, const Dim &n, int p_sign = 1, bool check = true)
{
    const auto series = composition_series(fam, w, n);
    const auto table = pplus_action_table(fam, n);
    InducedOptions o;
    o.casimir.p_sign = p_sign;
    o.check = check;
    return induced_operator(series, table, series.top().ref, series.bottom().ref, top_to_bottom_factors(series), o);
}

double phi_small(const std::array<double, 3> &x)
{
    return 0.1 * std::sin(x[0]) + 0.05 * std::cos(x[0] + x[1]);
}

double sin_sin(const std::array<double, 3> &x)
{
    return std::sin(x[0]) * std::sin(x[1]);
}

double rel(Field got, const Field &want)
{
    const double s = max_abs(want);
    got -= want;
    return max_abs(got) / s;
}

bool converged(const ConvergenceFit &fit, int fd)
{
    const bool small = std::all_of(fit.residuals.begin(), fit.residuals.end(), [](double r) { return r <= vanish_tol; });
    return small || fit.order >= fd - 0.5;
}

bool stalled(const ConvergenceFit &fit)
{
    return fit.residuals.back() > stall_residual && fit.order < stall_order;
}

std::string fit_text(const ConvergenceFit &fit)
{
    std::ostringstream s;
    s << "[";
    for (std::size_t i = 0; i < fit.residuals.size(); ++i) {
        s << (i ? " " : "") << sci(fit.residuals[i]);
    }
    s << "] order " << std::fixed << std::setprecision(2) << fit.order;
    return s.str();
}

ConvergenceFit invariance_fit(const OperatorFormula &f, bool curved_base, int fd, double offset = 0)
{
    std::vector<double> r;
    for (int res : study) {
        const auto dom = make_domain(f.n.value(), 2, res);
        const auto g = curved_base ? perturbed_metric(dom, eps) : flat_metric(dom);
        const auto c = curvature_pipeline(g, fd);
        std::mt19937_64 rng(7);
        const Field s = random_field(f.source_spec, c, rng);
        r.push_back(invariance_residual(f, g, phi_small, s, {fd, offset}));
    }
    return fit_convergence(study, r);
}

double vanishing_at(const OperatorFormula &f, const GridMetric &g, int fd)
{
    const auto c = curvature_pipeline(g, fd);
    std::mt19937_64 rng(5);
    return vanishing_residual(f, c, random_field(f.source_spec, c, rng));
}

ConvergenceFit conformally_flat_fit(const OperatorFormula &f, int fd)
{
    std::vector<double> r;
    for (int res : study) {
        r.push_back(vanishing_at(f, conformally_flat_metric(make_domain(f.n.value(), 2, res), phi_small), fd));
    }
    return fit_convergence(study, r);
}

// ---------------------------------------------------------------------------
// reporting

struct Outcome
{
    bool pass = true;
    std::vector<std::string> notes;

    void check(bool ok, const std::string &what)
    {
        pass = pass && ok;
        notes.push_back(std::string(ok ? "ok " : "FAILED ") + what);
    }
    void note(const std::string &what) { notes.push_back("info " + what); }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// symbolic criteria

Outcome eigenvalue_table()
{
    Outcome o;
    const auto t0 = Clock::now();
    const Poly n = Poly::n(), w = Poly::w();
    const Poly a0 = w * (w + n);
    const std::vector<Poly> want{a0 + n - Poly(1), a0 - Poly(2) * w + n + Poly(1), a0 - Poly(2) * w - n + Poly(1),
                                 a0 - Poly(2) * w + n - Poly(3), a0 - Poly(4) * w - n + Poly(3)};
    o.check(betas(composition_series(Family::oneform, w, sym_n)) == want, "symbolic n");
    for (int nv : {4, 6, 8, 10}) {
        std::vector<Poly> wk;
        for (const auto &p : want) {
            wk.push_back(p.substitute_n(Poly(nv)));
        }
        o.check(betas(composition_series(Family::oneform, w, Dim::of(nv))) == wk, "n=" + std::to_string(nv));
    }
    const double dt = seconds_since(t0);
    o.check(dt < 0.5, "runtime " + sci(dt) + " s");
    return o;
}

Outcome difference_vectors()
{
    Outcome o;
    const Poly n = Poly::n(), w = Poly::w(), crit = Poly(ratio(-1, 2)) * n;
    const auto diffs = [](Family f, const Poly &wv) {
        auto d = flatten(eigenvalue_differences(composition_series(f, wv, sym_n)));
        d.erase(d.begin()); // the top slot
        return d;
    };
    o.check(diffs(Family::oneform, w) == std::vector<Poly>{Poly(2) * w - Poly(2), Poly(2) * w + Poly(2) * n - Poly(2),
                                                           Poly(2) * w + Poly(2),
                                                           Poly(4) * w + Poly(2) * n - Poly(4)},
            "oneform c-vector");
    o.check(diffs(Family::symsq0, w) == std::vector<Poly>{Poly(2) * w + Poly(4), Poly(4) * w + Poly(4),
                                                          Poly(4) * w + Poly(2) * n + Poly(4),
                                                          Poly(6) * w + Poly(2) * n + Poly(4),
                                                          Poly(8) * w + Poly(4) * n},
            "symsq0 generic w");
    o.check(flatten(eigenvalue_differences(composition_series(Family::symsq0, crit, sym_n))) ==
                std::vector<Poly>{Poly(0), Poly(4) - n, Poly(4) - Poly(2) * n, Poly(4), Poly(4) - n, Poly(0)},
            "symsq0 at w=-n/2");
    o.check(flatten(eigenvalue_differences(composition_series(Family::cube, crit, sym_n))) ==
                std::vector<Poly>{Poly(0), Poly(6) - n, Poly(2) * (Poly(4) - n), Poly(8), Poly(6) - Poly(3) * n,
                                  Poly(10) - n, Poly(2) * (Poly(4) - n), Poly(8), Poly(6) - n, Poly(0)},
            "cube at w=-n/2");
    return o;
}

// C(s) - beta s slot by slot on a generic section
Section casimir_minus_diagonal(const CompositionSeries &series, const ActionTable &table)
{
    const Section g = generic_section(series);
    Section c = casimir_apply(series, table, g);
    for (const auto *slot : series.slots()) {
        const int r = slot->spec.tensor_rank();
        c.slots[slot->ref] = nf(c.get(slot->ref, r) - Coef(slot->beta) * g.get(slot->ref, r), series.n);
    }
    return c;
}

Outcome casimir_displays()
{
    Outcome o;
    const Coef ninv = Coef::inverse_n_plus(Rational(0), sym_n);
    const Coef n2n = Coef(Poly::n() + Poly(2)) * ninv;
    {
        const auto series = composition_series(Family::symsq0, Poly::w(), sym_n);
        const Section c = casimir_minus_diagonal(series, pplus_action_table(Family::symsq0, sym_n));
        const Expr sigma = S("symsq0.sigma", {});
        const Expr pmu = trace(sym_tracefree(product(P(5, 6), S("symsq0.mu", {0})), {6, 0}, sym_n), 5, 6);
        const bool ok =
            c.get({0, 0}, 0).is_zero() && same_nf(c.get({1, 0}, 1), k(4) * nabla(sigma, 0)) &&
            same_nf(c.get({2, 0}, 2), k(2) * sym_tracefree(nabla(S("symsq0.mu", {1}), 0), {0, 1}, sym_n) +
                                          k(4) * sym_tracefree(product(P(0, 1), sigma), {0, 1}, sym_n)) &&
            same_nf(c.get({2, 1}, 0),
                    k(-2) * trace(nabla(S("symsq0.mu", {5}), 6), 5, 6) - k(4) * product(J(), sigma)) &&
            same_nf(c.get({3, 0}, 1), k(-4) * trace(nabla(S("symsq0.A", {5, 0}), 6), 5, 6) - k(4) * pmu +
                                          n2n * k(2) * nabla(S("symsq0.alpha", {}), 0) -
                                          n2n * k(2) * product(P(0, 5), S("symsq0.mu", {5}))) &&
            same_nf(c.get({4, 0}, 0), k(-2) * trace(nabla(S("symsq0.nu", {5}), 6), 5, 6) +
                                          k(4) * product(P(5, 6), S("symsq0.A", {5, 6})) -
                                          n2n * k(2) * product(J(), S("symsq0.alpha", {})));
        o.check(ok, "symsq0 display, all six slots");
    }
    {
        const auto series = composition_series(Family::oneform, Poly::w(), sym_n);
        const Section c = casimir_minus_diagonal(series, pplus_action_table(Family::oneform, sym_n));
        const Expr dsig = nabla(S("oneform.sigma", {1}), 0);
        const Expr sig = S("oneform.sigma", {0});
        const Expr nv = Expr::scalar(ninv);
        const Expr p_stf = trace(sym_tracefree(product(P(6, 5), sig), {5, 0}, sym_n), 5, 6);
        const Expr p_alt = trace(alternate(product(P(6, 5), sig), 5, 0), 5, 6);
        const Expr bottom = k(-2) * trace(nabla(S("oneform.A", {5, 0}), 6), 5, 6) - k(2) * p_stf -
                            k(2) * product(nv, nabla(S("oneform.alpha", {}), 0)) -
                            k(2) * product(nv, product(P(0, 5), S("oneform.sigma", {5}))) -
                            k(2) * trace(nabla(S("oneform.B", {5, 0}), 6), 5, 6) - k(2) * p_alt;
        // the display orients the two-form slot opposite to the action table
        const Expr flip_b = -S("oneform.B", {0, 1});
        const Expr b_slot = substitute(k(2) * alternate(dsig, 0, 1), SymbolTable::instance().find("oneform.B"), flip_b);
        const bool ok = c.get({0, 0}, 1).is_zero() &&
                        same_nf(c.get({1, 0}, 2), k(2) * sym_tracefree(dsig, {0, 1}, sym_n)) &&
                        same_nf(c.get({1, 1}, 0), k(2) * trace(nabla(S("oneform.sigma", {5}), 6), 5, 6)) &&
                        same_nf(c.get({1, 2}, 2), -b_slot) &&
                        same_nf(c.get({2, 0}, 1),
                                substitute(bottom, SymbolTable::instance().find("oneform.B"), flip_b));
        o.check(ok, "oneform display, all five slots (two-form orientation B -> -B)");
    }
    return o;
}

Outcome induced_operators()
{
    Outcome o;
    const auto scaled = [&](const std::string &what, const OperatorFormula &f, const Expr &want) {
        const auto r = proportionality(f.body, nf(want));
        o.check(r.has_value() && *r != 0, what + (r ? " scale " + str(*r) : " not proportional"));
    };
    const Expr dsig = nabla(S("oneform.sigma", {1}), 0);
    scaled("conformal Killing w=1", oneform_op(Poly(1), sym_n, {0, 0}, {1, 0}, {"beta_1^1"}),
           sym_tracefree(dsig, {0, 1}, sym_n));
    scaled("exterior derivative w=-1", oneform_op(Poly(-1), sym_n, {0, 0}, {1, 2}, {"beta_1^3"}),
           alternate(dsig, 0, 1));
    scaled("divergence w=1-n", oneform_op(Poly(1) - Poly::n(), sym_n, {0, 0}, {1, 1}, {"beta_1^2"}),
           trace(nabla(S("oneform.sigma", {5}), 6), 5, 6));
    scaled("adjoint conformal Killing w=1-n", oneform_op(Poly(1) - Poly::n(), sym_n, {1, 0}, {2, 0}, {"beta_2"}),
           k(-2) * trace(nabla(S("oneform.A", {5, 0}), 6), 5, 6));

    const Poly w = Poly(1) - Poly::n() * Poly(ratio(1, 2));
    const auto series = composition_series(Family::oneform, w, sym_n);
    const auto f = oneform_op(w, sym_n, {0, 0}, {2, 0}, oneform_second);
    const Coef c1 = Coef(series.top().beta - series.at({1, 0}).beta);
    const Coef c2 = Coef(series.top().beta - series.at({1, 1}).beta);
    const Coef c3 = Coef(series.top().beta - series.at({1, 2}).beta);
    const Expr sig = S("oneform.sigma", {0});
    const Expr t1 = trace(nabla(sym_tracefree(nabla(sig, 5), {5, 0}, sym_n), 6), 5, 6);
    const Expr t2 = trace(sym_tracefree(product(P(6, 5), sig), {5, 0}, sym_n), 5, 6);
    const Expr t3 = nabla(trace(nabla(S("oneform.sigma", {5}), 6), 5, 6), 0);
    const Expr t4 = product(P(0, 5), S("oneform.sigma", {5}));
    const Expr t5 = trace(nabla(alternate(nabla(sig, 5), 5, 0), 6), 5, 6);
    const Expr t6 = trace(alternate(product(P(6, 0), S("oneform.sigma", {5})), 0, 5), 5, 6);
    const Expr ninv = Expr::scalar(Coef::inverse_n_plus(Rational(0), sym_n));
    const Expr sym_part = k(-2) * c2 * c3 * (k(2) * t1 + c1 * t2) - k(2) * c1 * c3 * product(ninv, k(2) * t3 + c2 * t4);
    const Expr alt_part = k(2) * c1 * c2 * (k(2) * t5 - c3 * t6);
    const auto literal = proportionality(f.body, nf(sym_part + alt_part));
    const auto flipped = proportionality(f.body, nf(sym_part - alt_part));
    o.check(literal.has_value(), "A_a(sigma) w=1-n/2 against the literal display");
    if (flipped) {
        o.note("A_a(sigma) matches with the alternation group negated, scale " + str(*flipped));
    }
    return o;
}

Outcome principal_parts()
{
    Outcome o;
    const auto lead = [&](const std::string &what, const OperatorFormula &f, const Expr &pattern, long pinned) {
        const auto r = proportionality(principal_part(f), nf(pattern, f.n, Calculus::flat));
        o.check(r.has_value() && *r == Rational(pinned), what + (r ? " constant " + str(*r) : " not proportional"));
    };
    const Poly n = Poly::n();
    const Expr lap = laplacian_power(S("oneform.sigma", {0}), 1);
    const Expr grad_div = nabla(trace(nabla(S("oneform.sigma", {5}), 6), 5, 6), 0);
    lead("oneform second order", top_to_bottom(Family::oneform, Poly(1) - n * Poly(ratio(1, 2)), sym_n),
         Coef(n - Poly(2)) * (Coef(n) * lap - k(4) * grad_div), 4);
    lead("symsq0 at w=-n/2", top_to_bottom(Family::symsq0, n * Poly(ratio(-1, 2)), sym_n),
         Coef(n - Poly(4)) * laplacian_power(S("symsq0.sigma", {}), 2), -64);
    const Poly cube_factor = (n - Poly(4)) * (n - Poly(6)) * (n - Poly(10));
    lead("cube at w=-n/2", top_to_bottom(Family::cube, n * Poly(ratio(-1, 2)), sym_n, 1, false),
         Coef(cube_factor) * laplacian_power(S("cube.sigma", {}), 3), 4608);

    struct Case
    {
        Family fam;
        int order;
        std::vector<int> excluded;
    };
    for (const Case &c : {Case{Family::oneform, 2, {2}}, Case{Family::symsq0, 4, {4}},
                          Case{Family::cube, 6, {4, 6, 10}}}) {
        std::vector<int> vanish;
        for (int nv = 4; nv <= 16; nv += 2) {
            const Dim nd = Dim::of(nv);
            const Poly w = c.fam == Family::oneform ? Poly(ratio(2 - nv, 2)) : Poly(ratio(-nv, 2));
            const auto f = top_to_bottom(c.fam, w, nd, 1, false);
            if (normalize(keep_order(normalize(f.body, nd, Calculus::flat), c.order), nd, Calculus::flat).is_zero()) {
                vanish.push_back(nv);
            }
        }
        std::vector<int> want;
        std::copy_if(c.excluded.begin(), c.excluded.end(), std::back_inserter(want), [](int x) { return x >= 4; });
        std::ostringstream s;
        s << family_name(c.fam) << " leading coefficient vanishes in 4..16 at {";
        for (std::size_t i = 0; i < vanish.size(); ++i) {
            s << (i ? "," : "") << vanish[i];
        }
        s << "}";
        o.check(vanish == want, s.str());
    }
    return o;
}

Outcome maxwell()
{
    Outcome o;
    const Dim n4 = Dim::of(4);
    const auto m = maxwell_reduction();
    const Expr mu = S("symsq0.mu", {0});
    const Expr t1 = trace(nabla(sym_tracefree(nabla(mu, 5), {5, 0}, n4), 6), 5, 6);
    const Expr t2 = nabla(trace(nabla(S("symsq0.mu", {5}), 6), 5, 6), 0);
    const Expr t3 = trace(sym_tracefree(product(P(6, 5), mu), {5, 0}, n4), 5, 6);
    const Expr t4 = product(P(0, 5), S("symsq0.mu", {5}));
    const Expr display = k(-4) * t1 + k(3) * t2 + k(8) * t3 + k(6) * t4;
    // the raw operator carries the product of the Casimir differences
    const Rational raw_scale(8);
    o.check(same_nf(m.raw.body, Coef(raw_scale) * display, n4), "raw T = " + str(raw_scale) + " x display");
    // nabla^c nabla_[a mu_c] with the bracket read as the plain difference
    const Expr curl = trace(nabla(nabla(S("symsq0.mu", {5}), 0), 6), 5, 6) -
                      trace(nabla(nabla(S("symsq0.mu", {0}), 5), 6), 5, 6);
    o.check(same_nf(m.rewritten, Coef(raw_scale) * k(2) * curl, n4),
            "rewritten T / " + str(raw_scale) + " = 2 (nabla^c nabla_a mu_c - nabla^c nabla_c mu_a)");

    const auto series = composition_series(Family::symsq0, Poly(-2), n4);
    const auto table = pplus_action_table(Family::symsq0, n4);
    const auto d = induced_operator(series, table, {0, 0}, {1, 0}, factors_by_label(series, {"beta_4"}));
    const auto delta = induced_operator(series, table, {3, 0}, {4, 0}, factors_by_label(series, {"beta_4"}));
    o.check(normalize(compose(m.raw, d).body, n4, Calculus::flat).is_zero(), "flat T o d = 0");
    o.check(normalize(compose(delta, m.raw).body, n4, Calculus::flat).is_zero(), "flat delta o T = 0");
    return o;
}

// ---------------------------------------------------------------------------
// numeric criteria

Outcome flat_oracle()
{
    Outcome o;
    constexpr int res = 64, fd = 6, sections = 10;
    const auto n4 = Dim::of(4), n6 = Dim::of(6);
    const auto s4 = composition_series(Family::symsq0, Poly(-2), n4);
    const auto p4 = dim4_cube_obstruction_probe();
    const auto t6 = dim6_T_operator();
    struct OperatorGroup
    {
        std::string name;
        std::vector<std::pair<std::string, OperatorFormula>> ops;
    };
    const std::vector<OperatorGroup> families{
        {"oneform",
         {{"A_a(sigma) n=4", oneform_op(Poly(-1), n4, {0, 0}, {2, 0}, oneform_second)},
          {"A_a(sigma) n=6", oneform_op(Poly(-2), n6, {0, 0}, {2, 0}, oneform_second)}}},
        {"symsq0",
         {{"square n=4", induced_operator(s4, pplus_action_table(Family::symsq0, n4), s4.top().ref, s4.bottom().ref,
                                          symsq0_dim4_factors(s4))},
          {"composite n=6", top_to_bottom(Family::symsq0, Poly(-3), n6)}}},
        {"cube",
         {{"psi1 n=4", p4.psi1},
          {"phi n=4", p4.phi},
          {"psi2 n=4", p4.psi2},
          {"T n=6", t6.t},
          {"d n=6", t6.d},
          {"delta n=6", t6.delta}}},
    };
    for (const auto &fam : families) {
        const auto t0 = Clock::now();
        for (const auto &[name, f] : fam.ops) {
            const auto series = composition_series(f.family, f.w, f.n);
            const NumericCasimir nc(series, pplus_action_table(f.family, f.n));
            const auto c = curvature_pipeline(flat_metric(make_domain(f.n.value(), 2, res)), fd);
            std::mt19937_64 rng(11);
            double worst = 0;
            for (int i = 0; i < sections; ++i) {
                const Field s = random_field(f.source_spec, c, rng);
                const auto out = nc.apply_factors(c, f.factors, {{f.source, s}});
                worst = std::max(worst, rel(out.at(f.target), evaluate_formula(f, c, s)));
            }
            o.check(worst <= oracle_tol, fam.name + " " + name + " max rel " + sci(worst));
        }
        const double dt = seconds_since(t0);
        o.check(dt <= 60, fam.name + " runtime " + sci(dt) + " s");
    }
    return o;
}

Outcome invariance()
{
    Outcome o;
    constexpr int fd = 4;
    const Dim n6 = Dim::of(6);
    const std::vector<std::pair<std::string, OperatorFormula>> ops{
        {"conformal Killing", oneform_op(Poly(1), n6, {0, 0}, {1, 0}, {"beta_1^1"})},
        {"exterior derivative", oneform_op(Poly(-1), n6, {0, 0}, {1, 2}, {"beta_1^3"})},
        {"divergence", oneform_op(Poly(-5), n6, {0, 0}, {1, 1}, {"beta_1^2"})},
        {"adjoint conformal Killing", oneform_op(Poly(-5), n6, {1, 0}, {2, 0}, {"beta_2"})},
        {"A_a(sigma)", oneform_op(Poly(-2), n6, {0, 0}, {2, 0}, oneform_second)},
        {"symsq0 composite", top_to_bottom(Family::symsq0, Poly(-3), n6)},
    };
    for (const auto &[name, f] : ops) {
        for (bool curved : {false, true}) {
            const auto fit = invariance_fit(f, curved, fd);
            o.check(converged(fit, fd), name + (curved ? " perturbed base " : " flat base ") + fit_text(fit));
        }
    }
    const auto wrong = invariance_fit(ops[0].second, false, fd, 1.0);
    o.check(stalled(wrong), "wrong output weight stalls " + fit_text(wrong));
    return o;
}

Outcome dimension_ten()
{
    Outcome o;
    const auto t0 = Clock::now();
    constexpr int fd = 4;
    const auto [a, b] = dim10_intermediate_operators();
    for (const auto &[name, f] : {std::pair{"first intermediate", &a}, std::pair{"second intermediate", &b}}) {
        const auto fit = conformally_flat_fit(*f, fd);
        o.check(converged(fit, fd), std::string(name) + " conformally flat " + fit_text(fit));
    }
    // flat principal part: symbolic constant c with P(D) = c Delta^3, checked
    // on sin x1 sin x2 where Delta^3 = -8
    const auto f = dim10_cube();
    const Dim n10 = Dim::of(10);
    const auto c = proportionality(principal_part(f), nf(laplacian_power(S("cube.sigma", {}), 3), n10, Calculus::flat));
    o.check(c.has_value() && *c != 0, "symbolic principal part " + (c ? str(*c) : std::string("?")) + " Delta^3");
    if (c) {
        const auto dom = make_domain(10, 2, 64);
        const auto conn = curvature_pipeline(flat_metric(dom), 6);
        const Field s = sample(dom, sin_sin);
        Field want = s;
        want *= -8.0 * c->get_d();
        const double err = rel(evaluate_formula(f, conn, s), want);
        o.check(err <= principal_tol, "flat grid against c Delta^3, rel " + sci(err));
    }
    const double dt = seconds_since(t0);
    o.check(dt <= 600, "runtime " + sci(dt) + " s");
    return o;
}

Outcome dimension_four_cube()
{
    Outcome o;
    // fd 4 leaves the conformally flat residual too large for the ratio
    constexpr int fd = 6;
    const auto p = dim4_cube_obstruction_probe();
    for (const auto &[name, f] : {std::pair{"phi o psi1", &p.phi_psi1}, std::pair{"psi2 o phi", &p.psi2_phi}}) {
        const auto fit = conformally_flat_fit(*f, fd);
        o.check(converged(fit, fd), std::string(name) + " conformally flat " + fit_text(fit));
        const double rp = vanishing_at(*f, perturbed_metric(make_domain(4, 2, study.back()), eps), fd);
        const double ratio = rp / fit.residuals.back();
        o.check(ratio >= dominance, std::string(name) + " perturbed " + sci(rp) + ", ratio " + sci(ratio));
    }
    return o;
}

Outcome sign_calibration()
{
    Outcome o;
    constexpr int fd = 4;
    const Dim n6 = Dim::of(6);
    const auto a = invariance_fit(oneform_op(Poly(-2), n6, {0, 0}, {2, 0}, oneform_second, -1), false, fd);
    const auto s = invariance_fit(top_to_bottom(Family::symsq0, Poly(-3), n6, -1), false, fd);
    o.note("A_a(sigma) flipped " + fit_text(a));
    o.note("symsq0 composite flipped " + fit_text(s));
    o.check(stalled(a) || stalled(s), "flipped P coupling breaks a second-order invariance check");
    const auto ck = invariance_fit(oneform_op(Poly(1), n6, {0, 0}, {1, 0}, {"beta_1^1"}, -1), false, fd);
    o.note("conformal Killing flipped (no P terms) " + fit_text(ck));
    return o;
}

} // namespace

int main()
{
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"eigenvalue table", eigenvalue_table},
        {"difference vectors", difference_vectors},
        {"Casimir displays", casimir_displays},
        {"induced operators", induced_operators},
        {"principal parts", principal_parts},
        {"dimension four square", maxwell},
        {"flat grid oracle", flat_oracle},
        {"invariance", invariance},
        {"dimension ten cube", dimension_ten},
        {"dimension four cube obstruction", dimension_four_cube},
        {"sign calibration", sign_calibration},
    };
    int unexpected = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception &e) {
            o.check(false, std::string("exception: ") + e.what());
        }
        const bool xfail = expected_fail.contains(id);
        std::string status = o.pass ? "PASS" : "FAIL";
        if (xfail) {
            status += o.pass ? " (unexpected pass)" : " (expected)";
        }
        if (o.pass == xfail) {
            ++unexpected;
        }
        std::cout << status << " " << id << " " << criteria[i].first << " (" << std::fixed << std::setprecision(1)
                  << seconds_since(t0) << " s)\n";
        for (const auto &n : o.notes) {
            std::cout << "    " << n << "\n";
        }
        std::cout.flush();
    }
    std::cout << (unexpected ? "unexpected results: " + std::to_string(unexpected) : std::string("all as expected"))
              << "\n";
    return unexpected ? 1 : 0;
}
