#include <ccas/cli.hpp>

#include <CLI11.hpp>

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#ifndef CCAS_VERSION
#define CCAS_VERSION "dev"
#endif

namespace ccas
{

// ---------------------------------------------------------------------------
// Argument grammar

namespace
{

class PolyParser
{
public:
    explicit PolyParser(const std::string &text) : s_(text) {}

    Poly parse()
    {
        Poly p = expr();
        skip();
        if (pos_ != s_.size()) {
            fail("unexpected '" + std::string(1, s_[pos_]) + "'");
        }
        return p;
    }

private:
    [[noreturn]] void fail(const std::string &why) const
    {
        throw ConfigError("cannot parse '" + s_ + "': " + why);
    }

    void skip()
    {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) {
            ++pos_;
        }
    }

    bool eat(char c)
    {
        skip();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    Poly expr()
    {
        Poly p = term();
        for (;;) {
            if (eat('+')) {
                p += term();
            } else if (eat('-')) {
                p -= term();
            } else {
                return p;
            }
        }
    }

    Poly term()
    {
        Poly p = unary();
        for (;;) {
            if (eat('*')) {
                p *= unary();
            } else if (eat('/')) {
                const Poly d = unary();
                if (!d.is_constant() || d.is_zero()) {
                    fail("division by a non-constant or zero");
                }
                p *= Rational(1) / d.constant_value();
            } else {
                return p;
            }
        }
    }

    Poly unary()
    {
        if (eat('-')) {
            return -unary();
        }
        if (eat('+')) {
            return unary();
        }
        return primary();
    }

    Poly primary()
    {
        skip();
        if (eat('(')) {
            Poly p = expr();
            if (!eat(')')) {
                fail("missing ')'");
            }
            return p;
        }
        if (pos_ < s_.size() && s_[pos_] == 'n') {
            ++pos_;
            return Poly::n();
        }
        const std::size_t start = pos_;
        while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
            ++pos_;
        }
        if (start == pos_) {
            fail(pos_ < s_.size() ? "unexpected '" + std::string(1, s_[pos_]) + "'" : "unexpected end");
        }
        return Poly(Rational(s_.substr(start, pos_ - start)));
    }

    std::string s_;
    std::size_t pos_ = 0;
};

std::vector<int> parse_int_list(const std::string &text, const std::string &what)
{
    std::vector<int> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stoi(item, &used));
            if (used != item.size()) {
                throw std::invalid_argument(item);
            }
        } catch (const std::exception &) {
            throw ConfigError("bad " + what + " list '" + text + "'");
        }
    }
    if (out.empty()) {
        throw ConfigError("empty " + what + " list");
    }
    return out;
}

} // namespace

Poly parse_poly(const std::string &text)
{
    return PolyParser(text).parse();
}

Dim parse_dim(const std::string &text)
{
    if (text == "sym") {
        return Dim::symbolic();
    }
    const Poly p = parse_poly(text);
    if (!p.is_constant() || p.constant_value().get_den() != 1) {
        throw ConfigError("dimension must be an integer or 'sym', got '" + text + "'");
    }
    const Dim d = Dim::of(static_cast<int>(p.constant_value().get_num().get_si()));
    check_dimension(d);
    return d;
}

FdDefaults fd_defaults()
{
    FdDefaults d;
    const char *env = std::getenv("CCAS_FD");
    if (env == nullptr || *env == '\0') {
        return d;
    }
    std::stringstream in(env);
    std::string item;
    while (std::getline(in, item, ';')) {
        const auto eq = item.find('=');
        const std::string key = item.substr(0, eq);
        const std::string val = eq == std::string::npos ? "" : item.substr(eq + 1);
        if (key == "order") {
            d.order = parse_int_list(val, "fd order").front();
        } else if (key == "res") {
            d.resolutions = parse_int_list(val, "resolution");
        } else {
            throw ConfigError("CCAS_FD: unknown key '" + key + "'");
        }
    }
    return d;
}

// ---------------------------------------------------------------------------
// Commands

namespace
{

struct RunConfig
{
    std::string command;
    std::string suite;
    std::string family = "oneform";
    std::string n_text = "sym";
    std::string w_text = "sym";
    std::string w_top_text;
    std::string format = "text";
    std::string out_path;
    std::uint64_t seed = 1;
    std::string source = "top";
    std::string target;
    std::vector<std::string> factors;
    std::string variant = "default";
    bool wrong_weight = false;
    bool flip_coupling = false;
    // numeric
    std::string res_text;
    int fd_order = 0;
    double eps = 0.05;
    int axes = 2;
    double tolerance = 1e-6;
    std::string metric;

    [[nodiscard]] bool numeric() const
    {
        return command == "verify" || command == "probe-dim4" || command == "probe-dim6";
    }
};

struct Report
{
    nlohmann::json json;
    std::string text;
    std::string latex;
    bool pass = true;
};

std::string fmt(double x)
{
    std::ostringstream s;
    s << std::setprecision(3) << std::scientific << x;
    return s.str();
}

std::string ref_text(SlotRef r)
{
    return "(" + std::to_string(r.level) + "," + std::to_string(r.index) + ")";
}

nlohmann::json ref_json(SlotRef r)
{
    return nlohmann::json::array({r.level, r.index});
}

struct Setup
{
    Family family;
    Dim n;
    Poly w;
    CompositionSeries series;
    ActionTable table;
};

Setup setup(const RunConfig &cfg)
{
    const Family fam = parse_family(cfg.family);
    const Dim n = parse_dim(cfg.n_text);
    Poly w;
    if (!cfg.w_top_text.empty()) {
        // weight of the top slot minus its offset from the series weight
        const Poly offset = composition_series(fam, Poly::w(), n).top().spec.weight - Poly::w();
        w = parse_poly(cfg.w_top_text) - offset;
    } else if (cfg.w_text == "sym") {
        w = Poly::w();
    } else {
        w = parse_poly(cfg.w_text);
    }
    if (!n.is_symbolic()) {
        w = w.substitute_n(n.as_poly());
    }
    auto series = composition_series(fam, w, n);
    auto table = pplus_action_table(fam, n);
    return {fam, n, w, std::move(series), std::move(table)};
}

SlotRef parse_slot(const CompositionSeries &series, const std::string &text)
{
    if (text == "top") {
        return series.top().ref;
    }
    if (text == "bottom") {
        return series.bottom().ref;
    }
    if (const auto comma = text.find(','); comma != std::string::npos) {
        const auto v = parse_int_list(text, "slot");
        if (v.size() != 2) {
            throw ConfigError("slot must be 'level,index', got '" + text + "'");
        }
        const SlotRef r{v[0], v[1]};
        (void)series.at(r);
        return r;
    }
    return series.named(text).ref;
}

struct Selection
{
    SlotRef source;
    SlotRef target;
    std::vector<CasimirFactor> factors;
    std::string rule;
};

/// Own eigenvalue of the target and every slot strictly between the levels.
std::vector<CasimirFactor> default_factors(const CompositionSeries &series, SlotRef source, SlotRef target)
{
    std::vector<std::string> labels{series.at(target).label};
    for (int l = source.level + 1; l < target.level; ++l) {
        for (const auto &s : series.levels[static_cast<std::size_t>(l)]) {
            labels.push_back(s.label);
        }
    }
    return factors_by_label(series, labels);
}

Selection select_operator(const Setup &st, const RunConfig &cfg)
{
    const auto &series = st.series;
    Selection sel;
    sel.source = parse_slot(series, cfg.source);
    if (cfg.variant == "dim4") {
        if (st.family != Family::symsq0 || st.n != Dim::of(4)) {
            throw ConfigError("variant dim4 needs --family symsq0 --n 4");
        }
        return {series.top().ref, series.bottom().ref, symsq0_dim4_factors(series), "dimension-four variant"};
    }
    if (cfg.variant != "default") {
        throw ConfigError("unknown variant '" + cfg.variant + "'");
    }
    if (!cfg.target.empty()) {
        sel.target = parse_slot(series, cfg.target);
    } else {
        // the bottom slot if it shares the top eigenvalue, else the lowest one that does
        const auto rep = coincidence_report(series);
        std::optional<SlotRef> best;
        for (auto r : rep.top_group) {
            if (r == series.bottom().ref) {
                best = r;
                break;
            }
            if (r != series.top().ref && (!best || r.level < best->level)) {
                best = r;
            }
        }
        if (!best) {
            throw ConfigError("the top eigenvalue is not shared at this weight; pass --target (and --factors)");
        }
        sel.target = *best;
    }
    if (sel.target.level <= sel.source.level) {
        throw ConfigError("target must lie below the source");
    }
    if (!cfg.factors.empty()) {
        sel.factors = factors_by_label(series, cfg.factors);
        sel.rule = "explicit factors";
    } else if (sel.source == series.top().ref && sel.target == series.bottom().ref) {
        sel.factors = top_to_bottom_factors(series);
        sel.rule = "top-to-bottom composite";
    } else {
        sel.factors = default_factors(series, sel.source, sel.target);
        sel.rule = "target eigenvalue and intermediate levels";
    }
    return sel;
}

InducedOptions induced_options(const RunConfig &cfg)
{
    InducedOptions o;
    o.casimir.p_sign = cfg.flip_coupling ? -1 : 1;
    return o;
}

std::string classification(const OperatorFormula &f)
{
    std::string c;
    switch (f.tag) {
    case OperatorTag::invariant:
    case OperatorTag::splitting:
        c = "invariant operator of order " + std::to_string(f.order);
        break;
    case OperatorTag::zero:
        c = "identically zero";
        break;
    case OperatorTag::zero_flat:
        c = "zero leading coefficient";
        if (f.family == Family::cube && !f.n.is_symbolic()) {
            if (f.n.value() == 4) {
                c += "; obstruction probe available (probe-dim4)";
            } else if (f.n.value() == 6) {
                c += "; residual probe available (probe-dim6)";
            } else if (f.n.value() == 10) {
                c += "; dimension-ten composite available (--variant dim10)";
            }
        }
        break;
    }
    if (f.verified == Calculus::flat) {
        c += "; verified in the flat calculus, curved residual in";
        for (auto r : f.curved_residual) {
            c += " " + ref_text(r);
        }
    }
    return c;
}

OperatorFormula derive_formula(const Setup &st, const RunConfig &cfg, Selection *used = nullptr)
{
    if (st.family == Family::cube && st.n == Dim::of(10) && cfg.variant == "dim10") {
        auto f = dim10_cube(induced_options(cfg));
        if (used) {
            *used = {f.source, f.target, f.factors, "dimension-ten composite"};
        }
        return f;
    }
    const Selection sel = select_operator(st, cfg);
    if (used) {
        *used = sel;
    }
    return induced_operator(st.series, st.table, sel.source, sel.target, sel.factors, induced_options(cfg));
}

Report cmd_table(const RunConfig &cfg)
{
    const Setup st = setup(cfg);
    const auto rep = coincidence_report(st.series);
    Report r;
    r.json = to_json(st.series, rep);
    std::ostringstream t;
    t << family_name(st.family) << "  n = " << st.n.to_string() << "  w = " << st.w.to_string() << "\n";
    const Poly b0 = st.series.top().beta;
    for (const auto *s : st.series.slots()) {
        t << "  " << ref_text(s->ref) << "  " << std::left << std::setw(6) << s->name << std::setw(22)
          << s->spec.name() << std::setw(10) << s->label << "beta = " << s->beta.to_string()
          << "   beta_0 - beta = " << (b0 - s->beta).to_string() << "\n";
    }
    t << "coincidence groups:\n";
    for (const auto &g : rep.groups) {
        if (g.slots.size() < 2) {
            continue;
        }
        t << "  beta = " << g.beta.to_string() << ":";
        for (auto ref : g.slots) {
            t << " " << ref_text(ref);
        }
        t << "\n";
    }
    r.text = t.str();
    std::ostringstream l;
    l << "\\begin{tabular}{llll}\nslot & bundle & $\\beta$ & $\\beta_0-\\beta$ \\\\\n";
    for (const auto *s : st.series.slots()) {
        l << s->name << " & " << s->spec.name() << " & $" << s->beta.to_string() << "$ & $"
          << (b0 - s->beta).to_string() << "$ \\\\\n";
    }
    l << "\\end{tabular}\n";
    r.latex = l.str();
    return r;
}

Report cmd_critical(const RunConfig &cfg)
{
    const Family fam = parse_family(cfg.family);
    const Dim n = parse_dim(cfg.n_text);
    Report r;
    r.json["family"] = family_name(fam);
    r.json["n"] = n.to_string();
    r.json["critical"] = nlohmann::json::array();
    std::ostringstream t;
    std::ostringstream l;
    for (const auto &c : critical_weights(fam, n)) {
        nlohmann::json slots = nlohmann::json::array();
        t << "w = " << c.w.to_string() << ":";
        for (auto ref : c.slots) {
            slots.push_back(ref_json(ref));
            t << " " << ref_text(ref);
        }
        t << "\n";
        l << "$w = " << c.w.to_string() << "$\\\\\n";
        r.json["critical"].push_back({{"w", c.w.to_string()}, {"slots", slots}});
    }
    r.text = t.str();
    r.latex = l.str();
    return r;
}

Report cmd_derive(const RunConfig &cfg)
{
    const Setup st = setup(cfg);
    Selection sel;
    const OperatorFormula f = derive_formula(st, cfg, &sel);
    Report r;
    r.json = to_json(f);
    r.json["classification"] = classification(f);
    r.json["rule"] = sel.rule;
    r.json["latex"] = to_latex(f);
    r.text = to_text(f) + "\nclassification: " + classification(f) + "\n";
    r.latex = to_latex(f) + "\n";
    return r;
}

Report cmd_principal(const RunConfig &cfg)
{
    const Setup st = setup(cfg);
    const OperatorFormula f = derive_formula(st, cfg);
    const Expr pp = principal_part(f);
    Report r;
    r.json["operator"] = to_json(f);
    r.json["principal"] = to_json(pp);
    r.json["order"] = f.order;
    std::ostringstream t;
    t << "order " << f.order << ": " << to_text(pp) << "\n";
    if (st.n.is_symbolic()) {
        nlohmann::json zeros = nlohmann::json::array();
        t << "leading coefficient vanishes at n =";
        for (int n = 4; n <= 64; n += 2) {
            if (normalize(specialize(pp, Rational(n)), Dim::of(n), Calculus::flat).terms().empty()) {
                zeros.push_back(n);
                t << " " << n;
            }
        }
        if (zeros.empty()) {
            t << " none in 4..64";
        }
        t << "\n";
        r.json["vanishes_at"] = zeros;
    }
    r.text = t.str();
    r.latex = to_latex(pp) + "\n";
    return r;
}

// ---------------------------------------------------------------------------
// Numeric suites

double default_phi(const std::array<double, 3> &x)
{
    return 0.1 * std::sin(x[0]) + 0.05 * std::cos(x[0] + x[1]);
}

struct NumericSettings
{
    std::vector<int> res;
    int fd;
    double eps;
    int axes;
    double tol;
};

NumericSettings numeric_settings(const RunConfig &cfg, int default_fd)
{
    const FdDefaults d = fd_defaults();
    NumericSettings s{d.resolutions, cfg.fd_order ? cfg.fd_order : default_fd, cfg.eps, cfg.axes, cfg.tolerance};
    if (!cfg.res_text.empty()) {
        s.res = parse_int_list(cfg.res_text, "resolution");
    }
    if (s.fd != 2 && s.fd != 4 && s.fd != 6) {
        throw ConfigError("fd order must be 2, 4 or 6");
    }
    if (s.eps < 0) {
        throw ConfigError("epsilon must be nonnegative");
    }
    return s;
}

nlohmann::json numeric_json(const NumericSettings &s, const std::string &metric)
{
    return {{"resolutions", s.res}, {"fd_order", s.fd}, {"epsilon", s.eps},
            {"active_axes", s.axes}, {"tolerance", s.tol}, {"metric", metric}};
}

GridMetric make_metric(const std::string &kind, const GridDomain &dom, double eps)
{
    if (kind == "flat") {
        return flat_metric(dom);
    }
    if (kind == "conformally_flat") {
        return conformally_flat_metric(dom, default_phi);
    }
    if (kind == "perturbed") {
        return perturbed_metric(dom, eps);
    }
    throw ConfigError("unknown metric '" + kind + "' (flat, conformally_flat, perturbed)");
}

bool converged(const ConvergenceFit &fit, int fd, double tol)
{
    const bool small = std::all_of(fit.residuals.begin(), fit.residuals.end(), [&](double r) { return r <= tol; });
    return small || fit.order >= fd - 0.5;
}

void require_concrete(const Setup &st)
{
    if (st.n.is_symbolic() || st.w.depends_on_w() || st.w.depends_on_n()) {
        throw ConfigError("numeric checks need concrete --n and --w");
    }
}

VerificationReport vanishing_study(const std::string &id, const OperatorFormula &f, const NumericSettings &s,
                                   const std::string &metric, std::uint64_t seed)
{
    std::vector<double> r;
    for (int res : s.res) {
        const auto dom = make_domain(f.n.value(), s.axes, res);
        const auto c = curvature_pipeline(make_metric(metric, dom, s.eps), s.fd);
        std::mt19937_64 rng(seed);
        r.push_back(vanishing_residual(f, c, random_field(f.source_spec, c, rng)));
    }
    VerificationReport rep{id, to_text(f), fit_convergence(s.res, r), s.fd - 0.5, false, ""};
    rep.pass = converged(rep.fit, s.fd, s.tol);
    return rep;
}

std::string report_line(const VerificationReport &r, bool counts)
{
    std::ostringstream t;
    t << (!counts ? "INFO " : r.pass ? "PASS " : "FAIL ") << r.id << ": residuals";
    for (double x : r.fit.residuals) {
        t << " " << fmt(x);
    }
    t << "  order " << std::fixed << std::setprecision(2) << r.fit.order;
    if (!r.note.empty()) {
        t << "  (" << r.note << ")";
    }
    t << "\n";
    return t.str();
}

void add_check(Report &rep, const VerificationReport &v, bool counts = true)
{
    rep.json["checks"].push_back(to_json(v));
    rep.text += report_line(v, counts);
    if (counts) {
        rep.pass = rep.pass && v.pass;
    }
}

Report verify_invariance(const RunConfig &cfg)
{
    const Setup st = setup(cfg);
    require_concrete(st);
    const NumericSettings s = numeric_settings(cfg, fd_defaults().order);
    const std::string metric = cfg.metric.empty() ? "flat" : cfg.metric;
    const OperatorFormula f = derive_formula(st, cfg);
    Report rep;
    rep.json["config"]["numeric"] = numeric_json(s, metric);
    rep.json["operator"] = to_text(f);
    rep.json["checks"] = nlohmann::json::array();
    std::vector<double> r;
    for (int res : s.res) {
        const auto dom = make_domain(st.n.value(), s.axes, res);
        const auto g = make_metric(metric, dom, s.eps);
        const auto c = curvature_pipeline(g, s.fd);
        std::mt19937_64 rng(cfg.seed);
        const Field src = random_field(f.source_spec, c, rng);
        r.push_back(invariance_residual(f, g, default_phi, src, {s.fd, cfg.wrong_weight ? 1.0 : 0.0}));
    }
    VerificationReport v{"invariance", to_text(f), fit_convergence(s.res, r), s.fd - 0.5, false, ""};
    v.pass = converged(v.fit, s.fd, s.tol);
    if (cfg.wrong_weight) {
        v.note = "target weight shifted by one";
    }
    rep.pass = true;
    add_check(rep, v);
    return rep;
}

Report verify_vanishing(const RunConfig &cfg)
{
    const Family fam = parse_family(cfg.family);
    const Dim n = parse_dim(cfg.n_text);
    if (fam != Family::cube || n.is_symbolic() || (n.value() != 4 && n.value() != 6 && n.value() != 10)) {
        throw ConfigError("vanishing checks exist for --family cube with --n 4, 6 or 10");
    }
    const NumericSettings s = numeric_settings(cfg, fd_defaults().order);
    const std::string metric = cfg.metric.empty() ? "conformally_flat" : cfg.metric;
    Report rep;
    rep.json["config"]["numeric"] = numeric_json(s, metric);
    rep.json["checks"] = nlohmann::json::array();
    const InducedOptions o = induced_options(cfg);
    if (n.value() == 10) {
        const auto [a, b] = dim10_intermediate_operators(10, o);
        add_check(rep, vanishing_study("dim10-first", a, s, metric, cfg.seed));
        add_check(rep, vanishing_study("dim10-second", b, s, metric, cfg.seed));
    } else if (n.value() == 4) {
        const auto p = dim4_cube_obstruction_probe(o);
        add_check(rep, vanishing_study("phi-psi1", p.phi_psi1, s, metric, cfg.seed));
        add_check(rep, vanishing_study("psi2-phi", p.psi2_phi, s, metric, cfg.seed));
    } else {
        // whether these vanish on curved metrics is not known; report only
        const auto t = dim6_T_operator(o);
        for (auto [id, f] : {std::pair{"T-d", &t.t_d}, std::pair{"delta-T", &t.delta_t}}) {
            auto v = vanishing_study(id, *f, s, metric, cfg.seed);
            v.note = "reported only";
            add_check(rep, v, false);
        }
    }
    return rep;
}

Report verify_eigenvalue(const RunConfig &cfg)
{
    const Setup st = setup(cfg);
    require_concrete(st);
    const NumericSettings s = numeric_settings(cfg, fd_defaults().order);
    const std::string metric = cfg.metric.empty() ? "perturbed" : cfg.metric;
    const NumericCasimir nc(st.series, st.table, induced_options(cfg).casimir);
    const auto dom = make_domain(st.n.value(), s.axes, s.res.front());
    const auto c = curvature_pipeline(make_metric(metric, dom, s.eps), s.fd);
    std::mt19937_64 rng(cfg.seed);
    Report rep;
    rep.json["config"]["numeric"] = numeric_json(s, metric);
    rep.json["checks"] = nlohmann::json::array();
    for (const auto *slot : st.series.slots()) {
        const NumericSection sec{{slot->ref, random_field(slot->spec, c, rng)}};
        const double beta = slot->beta.evaluate(st.n.value(), 0);
        const auto out = nc.apply(c, sec, beta);
        double r = 0;
        if (auto it = out.find(slot->ref); it != out.end()) {
            r = max_abs(it->second) / (max_abs(sec.at(slot->ref)) * std::max(1.0, std::abs(beta)));
        }
        VerificationReport v{"eigenvalue " + slot->label + " " + ref_text(slot->ref), slot->spec.name(),
                             ConvergenceFit{{s.res.front()}, {r}, 0}, s.tol, r <= s.tol, ""};
        add_check(rep, v);
    }
    return rep;
}

Report verify_convergence(const RunConfig &cfg)
{
    const Dim n = parse_dim(cfg.n_text == "sym" ? "6" : cfg.n_text);
    const NumericSettings s = numeric_settings(cfg, fd_defaults().order);
    std::vector<double> r;
    for (int res : s.res) {
        const auto dom = make_domain(n.value(), s.axes, res);
        const auto c = curvature_pipeline(conformally_flat_metric(dom, default_phi), s.fd);
        // P of e^{2 phi} delta in closed form
        double err = 0, scale = 0;
        for (std::size_t p = 0; p < dom.points(); ++p) {
            const auto x = dom.coords(p);
            const double a1 = s.axes > 1 ? 1.0 : 0.0;
            const double sc = std::sin(x[0] + x[1]), cc = std::cos(x[0] + x[1]);
            const double d[2] = {0.1 * std::cos(x[0]) - 0.05 * sc, -0.05 * sc * a1};
            const double dd[2][2] = {{-0.1 * std::sin(x[0]) - 0.05 * cc, -0.05 * cc * a1},
                                     {-0.05 * cc * a1, -0.05 * cc * a1}};
            const double q = d[0] * d[0] + d[1] * d[1];
            for (int a = 0; a < n.value(); ++a) {
                for (int b = 0; b < n.value(); ++b) {
                    double v = (a < 2 && b < 2) ? -dd[a][b] + d[a] * d[b] : 0.0;
                    if (a == b) {
                        v -= q / 2;
                    }
                    const double got = c.P.comp(static_cast<std::size_t>(a * n.value() + b))[p];
                    err = std::max(err, std::abs(got - v));
                    scale = std::max(scale, std::abs(v));
                }
            }
        }
        r.push_back(err / scale);
    }
    Report rep;
    rep.json["config"]["numeric"] = numeric_json(s, "conformally_flat");
    rep.json["checks"] = nlohmann::json::array();
    VerificationReport v{"schouten", "Schouten tensor of a conformally flat metric", fit_convergence(s.res, r),
                         s.fd - 0.5, false, ""};
    v.pass = converged(v.fit, s.fd, s.tol);
    add_check(rep, v);
    return rep;
}

Report cmd_verify(const RunConfig &cfg)
{
    if (cfg.suite == "invariance") {
        return verify_invariance(cfg);
    }
    if (cfg.suite == "vanishing") {
        return verify_vanishing(cfg);
    }
    if (cfg.suite == "eigenvalue") {
        return verify_eigenvalue(cfg);
    }
    return verify_convergence(cfg);
}

Report cmd_probe_dim4(const RunConfig &cfg)
{
    const NumericSettings s = numeric_settings(cfg, 6);
    const auto p = dim4_cube_obstruction_probe(induced_options(cfg));
    Report rep;
    rep.json["config"]["numeric"] = numeric_json(s, "conformally_flat,perturbed");
    rep.json["checks"] = nlohmann::json::array();
    rep.json["operators"] = {{"psi1", to_text(p.psi1)}, {"phi", to_text(p.phi)}, {"psi2", to_text(p.psi2)}};
    rep.text = "psi1: " + to_text(p.psi1) + "\nphi:  " + to_text(p.phi) + "\npsi2: " + to_text(p.psi2) + "\n";
    for (auto [id, f] : {std::pair{"phi-psi1", &p.phi_psi1}, std::pair{"psi2-phi", &p.psi2_phi}}) {
        auto cf = vanishing_study(std::string(id) + " conformally flat", *f, s, "conformally_flat", cfg.seed);
        const int res = s.res.back();
        const auto dom = make_domain(4, s.axes, res);
        const auto c = curvature_pipeline(perturbed_metric(dom, s.eps), s.fd);
        std::mt19937_64 rng(cfg.seed);
        const double rp = vanishing_residual(*f, c, random_field(f->source_spec, c, rng));
        const double ratio = rp / std::max(cf.fit.residuals.back(), 1e-300);
        VerificationReport pt{std::string(id) + " perturbed", to_text(*f), ConvergenceFit{{res}, {rp}, 0}, 1e3,
                              ratio >= 1e3, "ratio to conformally flat " + fmt(ratio)};
        add_check(rep, cf);
        add_check(rep, pt);
    }
    return rep;
}

Report cmd_probe_dim6(const RunConfig &cfg)
{
    const NumericSettings s = numeric_settings(cfg, fd_defaults().order);
    const auto t = dim6_T_operator(induced_options(cfg));
    Report rep;
    rep.json["config"]["numeric"] = numeric_json(s, "conformally_flat,perturbed");
    rep.json["checks"] = nlohmann::json::array();
    rep.json["operators"] = {{"T", to_json(t.t)}, {"d", to_text(t.d)}, {"delta", to_text(t.delta)}};
    rep.text = "T: " + to_text(t.t) + "\nd: " + to_text(t.d) + "\ndelta: " + to_text(t.delta) + "\n";
    for (const std::string metric : {"conformally_flat", "perturbed"}) {
        for (auto [id, f] : {std::pair{"T-d", &t.t_d}, std::pair{"delta-T", &t.delta_t}}) {
            auto v = vanishing_study(std::string(id) + " " + metric, *f, s, metric, cfg.seed);
            v.note = "reported only";
            add_check(rep, v, false);
        }
    }
    return rep;
}

nlohmann::json config_echo(const RunConfig &cfg)
{
    nlohmann::json j{{"command", cfg.command}, {"family", cfg.family}, {"n", cfg.n_text},
                     {"w", cfg.w_top_text.empty() ? cfg.w_text : "top:" + cfg.w_top_text},
                     {"format", cfg.format}, {"seed", cfg.seed}};
    if (!cfg.suite.empty()) {
        j["suite"] = cfg.suite;
    }
    if (!cfg.target.empty()) {
        j["target"] = cfg.target;
    }
    if (cfg.source != "top") {
        j["source"] = cfg.source;
    }
    if (!cfg.factors.empty()) {
        j["factors"] = cfg.factors;
    }
    if (cfg.variant != "default") {
        j["variant"] = cfg.variant;
    }
    if (cfg.wrong_weight) {
        j["wrong_weight"] = true;
    }
    if (cfg.flip_coupling) {
        j["flip_coupling"] = true;
    }
    return j;
}

std::vector<std::string> claims(const RunConfig &cfg)
{
    if (cfg.command == "table") {
        return {"casimir-eigenvalues", "eigenvalue-differences", "coincidences"};
    }
    if (cfg.command == "critical") {
        return {"critical-weights"};
    }
    if (cfg.command == "derive") {
        return {"induced-operator"};
    }
    if (cfg.command == "principal") {
        return {"principal-part"};
    }
    if (cfg.command == "probe-dim4") {
        return {"cube-dim4-compositions-vanish-conformally-flat", "cube-dim4-compositions-detect-weyl"};
    }
    if (cfg.command == "probe-dim6") {
        return {"cube-dim6-compositions-residuals"};
    }
    if (cfg.suite == "invariance") {
        return {cfg.wrong_weight ? "invariance-negative-control" : "conformal-invariance"};
    }
    if (cfg.suite == "vanishing") {
        return {"cube-intermediate-operators-vanish"};
    }
    if (cfg.suite == "eigenvalue") {
        return {"slot-eigenvalues"};
    }
    return {"schouten-convergence"};
}

Report dispatch(const RunConfig &cfg)
{
    if (cfg.command == "table") {
        return cmd_table(cfg);
    }
    if (cfg.command == "critical") {
        return cmd_critical(cfg);
    }
    if (cfg.command == "derive") {
        return cmd_derive(cfg);
    }
    if (cfg.command == "principal") {
        return cmd_principal(cfg);
    }
    if (cfg.command == "verify") {
        return cmd_verify(cfg);
    }
    if (cfg.command == "probe-dim4") {
        return cmd_probe_dim4(cfg);
    }
    return cmd_probe_dim6(cfg);
}

void add_common(CLI::App *sub, RunConfig &cfg, bool weight)
{
    sub->add_option("--family", cfg.family, "oneform, symsq0 or cube")->check(CLI::IsMember({"oneform", "symsq0", "cube"}));
    sub->add_option("--n", cfg.n_text, "dimension: even integer or 'sym'");
    if (weight) {
        auto *w = sub->add_option("--w", cfg.w_text, "weight: 'sym' or an expression in n such as 1-n/2");
        sub->add_option("--w-top", cfg.w_top_text, "weight of the top slot instead of --w")->excludes(w);
    }
}

void add_operator(CLI::App *sub, RunConfig &cfg)
{
    sub->add_option("--source", cfg.source, "source slot: top, bottom, level,index or slot name");
    sub->add_option("--target", cfg.target, "target slot (default: bottom if it shares the top eigenvalue, else the lowest slot that does)");
    sub->add_option("--factors", cfg.factors, "eigenvalue labels of the Casimir factors, outermost first")
        ->delimiter(',');
    sub->add_option("--variant", cfg.variant, "default, dim4 (symsq0, n=4) or dim10 (cube, n=10)");
    sub->add_flag("--flip-coupling", cfg.flip_coupling, "flip the sign of the P coupling (calibration only)");
}

void add_numeric(CLI::App *sub, RunConfig &cfg)
{
    sub->add_option("--res", cfg.res_text, "comma separated resolutions");
    sub->add_option("--fd", cfg.fd_order, "finite-difference order (2, 4, 6)");
    sub->add_option("--eps", cfg.eps, "perturbation size of the non-conformally-flat metric");
    sub->add_option("--axes", cfg.axes, "active coordinate axes (1-3)");
    sub->add_option("--tolerance", cfg.tolerance, "absolute residual accepted without a convergence fit");
    sub->add_option("--metric", cfg.metric, "flat, conformally_flat or perturbed");
}

} // namespace

int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err)
{
    RunConfig cfg;
    CLI::App app{"Curved Casimir operators: eigenvalues, induced operators and numeric checks", "ccas"};
    app.require_subcommand(1);
    app.add_option("--format", cfg.format, "text, json or latex")->check(CLI::IsMember({"text", "json", "latex"}));
    app.add_option("--out", cfg.out_path, "also write the JSON report to this file");
    app.add_option("--seed", cfg.seed, "seed for random sections");
    app.add_flag_callback("--version", [&] { throw CLI::CallForVersion(CCAS_VERSION, 0); }, "print the version");

    auto *table = app.add_subcommand("table", "composition series, eigenvalues, differences and coincidences");
    add_common(table, cfg, true);
    auto *critical = app.add_subcommand("critical", "weights where the top eigenvalue is shared");
    add_common(critical, cfg, false);
    auto *derive = app.add_subcommand("derive", "operator induced by Casimir factors");
    add_common(derive, cfg, true);
    add_operator(derive, cfg);
    auto *principal = app.add_subcommand("principal", "principal part of a derived operator");
    add_common(principal, cfg, true);
    add_operator(principal, cfg);
    auto *verify = app.add_subcommand("verify", "numeric suites: invariance, vanishing, eigenvalue, convergence");
    verify->add_option("suite", cfg.suite, "suite name")
        ->required()
        ->check(CLI::IsMember({"invariance", "vanishing", "eigenvalue", "convergence"}));
    add_common(verify, cfg, true);
    add_operator(verify, cfg);
    add_numeric(verify, cfg);
    verify->add_flag("--wrong-weight", cfg.wrong_weight, "shift the target weight by one (negative control)");
    auto *dim4 = app.add_subcommand("probe-dim4", "cube compositions in dimension four");
    add_numeric(dim4, cfg);
    auto *dim6 = app.add_subcommand("probe-dim6", "operator T and its compositions in dimension six");
    add_numeric(dim6, cfg);
    for (auto *sub : {table, critical, derive, principal, verify, dim4, dim6}) {
        sub->fallthrough();
    }

    std::vector<std::string> argv_store{"ccas"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char *> argv;
    for (auto &a : argv_store) {
        argv.push_back(a.data());
    }
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_pass : exit_invalid_config;
    }
    cfg.command = app.get_subcommands().front()->get_name();
    if (cfg.command == "probe-dim4") {
        cfg.family = "cube";
        cfg.n_text = "4";
        cfg.w_text = "-2";
    } else if (cfg.command == "probe-dim6") {
        cfg.family = "cube";
        cfg.n_text = "6";
        cfg.w_text = "-3";
    }

    Report rep;
    try {
        rep = dispatch(cfg);
    } catch (const ConfigError &e) {
        err << "invalid configuration: " << e.what() << "\n";
        return exit_invalid_config;
    } catch (const DerivationError &e) {
        err << "derivation failed: " << e.what() << "\n";
        return exit_derivation_failed;
    } catch (const std::exception &e) {
        err << "internal error: " << e.what() << "\n";
        return exit_derivation_failed;
    }

    nlohmann::json j;
    j["schema"] = 1;
    j["tool"] = "ccas";
    j["version"] = CCAS_VERSION;
    j["config"] = config_echo(cfg);
    if (rep.json.contains("config")) {
        j["config"].update(rep.json["config"]);
        rep.json.erase("config");
    }
    j["claims"] = claims(cfg);
    j["result"] = rep.json;
    j["pass"] = rep.pass;

    if (cfg.format == "json") {
        out << j.dump(2) << "\n";
    } else if (cfg.format == "latex") {
        out << (rep.latex.empty() ? rep.text : rep.latex);
    } else {
        out << rep.text;
        if (cfg.numeric()) {
            out << (rep.pass ? "PASS" : "FAIL") << "\n";
        }
    }
    if (!cfg.out_path.empty()) {
        std::ofstream f(cfg.out_path);
        if (!f) {
            err << "invalid configuration: cannot write " << cfg.out_path << "\n";
            return exit_invalid_config;
        }
        f << j.dump(2) << "\n";
    }
    return rep.pass ? exit_pass : exit_check_failed;
}

} // namespace ccas
