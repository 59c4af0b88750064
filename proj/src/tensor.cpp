#include <ccas/tensor.hpp>

#include <algorithm>
#include <atomic>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

namespace ccas
{

Label fresh_label()
{
    static std::atomic<Label> next{fresh_base};
    return next.fetch_add(1);
}

// ---------------------------------------------------------------------------
// Symbol table

namespace
{

struct SlotSymbol
{
    const char *name;
    const char *display;
    const char *latex;
    int rank;
    Symmetry symmetry;
    bool tracefree;
};

// Slot variables of the three tractor families, in vector-notation order.
constexpr SlotSymbol slot_symbols[] = {
    {"oneform.sigma", "sigma", "\\sigma", 1, Symmetry::none, false},
    {"oneform.A", "A", "A", 2, Symmetry::symmetric, true},
    {"oneform.alpha", "alpha", "\\alpha", 0, Symmetry::none, false},
    {"oneform.B", "B", "B", 2, Symmetry::antisymmetric, false},
    {"oneform.rho", "rho", "\\rho", 1, Symmetry::none, false},
    {"symsq0.sigma", "sigma", "\\sigma", 0, Symmetry::none, false},
    {"symsq0.mu", "mu", "\\mu", 1, Symmetry::none, false},
    {"symsq0.A", "A", "A", 2, Symmetry::symmetric, true},
    {"symsq0.alpha", "alpha", "\\alpha", 0, Symmetry::none, false},
    {"symsq0.nu", "nu", "\\nu", 1, Symmetry::none, false},
    {"symsq0.rho", "rho", "\\rho", 0, Symmetry::none, false},
    {"cube.sigma", "sigma", "\\sigma", 0, Symmetry::none, false},
    {"cube.mu", "mu", "\\mu", 1, Symmetry::none, false},
    {"cube.A", "A", "A", 2, Symmetry::symmetric, true},
    {"cube.alpha", "alpha", "\\alpha", 0, Symmetry::none, false},
    {"cube.Phi", "Phi", "\\Phi", 3, Symmetry::symmetric, true},
    {"cube.nu", "nu", "\\nu", 1, Symmetry::none, false},
    {"cube.B", "B", "B", 2, Symmetry::symmetric, true},
    {"cube.beta", "beta", "\\beta", 0, Symmetry::none, false},
    {"cube.tau", "tau", "\\tau", 1, Symmetry::none, false},
    {"cube.rho", "rho", "\\rho", 0, Symmetry::none, false},
    // Generic fields used when operators are composed or tested in isolation.
    {"field.f", "f", "f", 0, Symmetry::none, false},
    {"field.v", "v", "v", 1, Symmetry::none, false},
    {"field.S", "S", "S", 2, Symmetry::symmetric, true},
    {"field.F", "F", "F", 2, Symmetry::antisymmetric, false},
};

} // namespace

SymbolTable &SymbolTable::instance()
{
    static SymbolTable table;
    return table;
}

SymbolTable::SymbolTable()
{
    metric_ = add({"g", "g", "g", 2, Symmetry::symmetric, false, false, true});
    schouten_ = add({"P", "P", "\\mathsf{P}", 2, Symmetry::symmetric, false, true, false});
    trace_ = add({"J", "J", "\\mathsf{J}", 0, Symmetry::none, false, true, false});
    phi_ = add({"phi", "phi", "\\varphi", 1, Symmetry::none, false, false, false});
    for (int r = 0; r <= 3; ++r) {
        source_.push_back(add({"X" + std::to_string(r), "X", "X", r, Symmetry::none, false, false, false}));
    }
    for (int r = 0; r <= 3; ++r) {
        fused_.push_back(add({"Y" + std::to_string(r), "Y", "Y", r + 1, Symmetry::none, false, false, false}));
    }
    for (const auto &s : slot_symbols) {
        add({s.name, s.display, s.latex, s.rank, s.symmetry, s.tracefree, false, false});
    }
}

SymbolId SymbolTable::add(SymbolInfo info)
{
    const auto id = static_cast<SymbolId>(symbols_.size());
    by_name_.emplace(info.name, id);
    symbols_.push_back(std::move(info));
    return id;
}

SymbolId SymbolTable::find(const std::string &name) const
{
    auto it = by_name_.find(name);
    if (it == by_name_.end()) {
        throw std::out_of_range("unknown tensor symbol: " + name);
    }
    return it->second;
}

// ---------------------------------------------------------------------------
// Term helpers

namespace
{

const SymbolInfo &info_of(SymbolId s)
{
    return SymbolTable::instance().info(s);
}

template <typename F>
void for_each_label(const Term &t, F &&f)
{
    for (const auto &fac : t.factors) {
        for (Label l : fac.deriv) {
            f(l);
        }
        for (Label l : fac.idx) {
            f(l);
        }
    }
}

template <typename F>
void map_labels(Term &t, F &&f)
{
    for (auto &fac : t.factors) {
        for (Label &l : fac.deriv) {
            l = f(l);
        }
        for (Label &l : fac.idx) {
            l = f(l);
        }
    }
}

std::map<Label, int> label_counts(const Term &t)
{
    std::map<Label, int> counts;
    for_each_label(t, [&](Label l) { ++counts[l]; });
    return counts;
}

/// Renames every label that occurs twice in t to a fresh temporary.
void freshen_dummies(Term &t)
{
    std::map<Label, Label> ren;
    for (const auto &[l, c] : label_counts(t)) {
        if (c == 2) {
            ren[l] = fresh_label();
        }
    }
    if (ren.empty()) {
        return;
    }
    map_labels(t, [&](Label l) {
        auto it = ren.find(l);
        return it == ren.end() ? l : it->second;
    });
}

Term raw_product(const Term &a, const Term &b)
{
    Term r;
    r.coef = a.coef * b.coef;
    r.factors = a.factors;
    r.factors.insert(r.factors.end(), b.factors.begin(), b.factors.end());
    return r;
}

} // namespace

// ---------------------------------------------------------------------------
// Expr basics

Expr Expr::symbol(SymbolId sym, std::vector<Label> idx)
{
    if (static_cast<int>(idx.size()) != info_of(sym).rank) {
        throw IndexError("symbol " + info_of(sym).name + " expects " + std::to_string(info_of(sym).rank) +
                         " indices");
    }
    Expr e(idx);
    e.terms_.push_back(Term{Coef(1), {Factor{sym, {}, std::move(idx)}}});
    return e;
}

Expr Expr::scalar(const Coef &c)
{
    Expr e;
    if (!c.is_zero()) {
        e.terms_.push_back(Term{c, {}});
    }
    return e;
}

Expr Expr::metric(Label a, Label b)
{
    return symbol(SymbolTable::instance().metric(), {a, b});
}

namespace
{
bool same_label_set(std::vector<Label> a, std::vector<Label> b)
{
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    return a == b;
}
} // namespace

Expr &Expr::operator+=(const Expr &o)
{
    if (terms_.empty() && free_.empty()) {
        free_ = o.free_;
    } else if (!o.terms_.empty() || !o.free_.empty()) {
        if (!same_label_set(free_, o.free_)) {
            throw IndexError("adding expressions with different free indices");
        }
    }
    terms_.insert(terms_.end(), o.terms_.begin(), o.terms_.end());
    return *this;
}

Expr &Expr::operator-=(const Expr &o)
{
    return *this += -o;
}

Expr &Expr::operator*=(const Coef &c)
{
    if (c.is_zero()) {
        terms_.clear();
        return *this;
    }
    for (auto &t : terms_) {
        t.coef *= c;
    }
    return *this;
}

Expr Expr::with_free_order(std::vector<Label> order) const
{
    if (!same_label_set(order, free_)) {
        throw IndexError("with_free_order: not a permutation of the free indices");
    }
    Expr r = *this;
    r.free_ = std::move(order);
    return r;
}

int Expr::max_derivative_order(SymbolId sym) const
{
    int m = -1;
    for (const auto &t : terms_) {
        for (const auto &f : t.factors) {
            if (sym < 0 || f.symbol == sym) {
                m = std::max(m, static_cast<int>(f.deriv.size()));
            }
        }
    }
    return m;
}

bool Expr::contains_symbol(SymbolId sym) const
{
    for (const auto &t : terms_) {
        for (const auto &f : t.factors) {
            if (f.symbol == sym) {
                return true;
            }
        }
    }
    return false;
}

std::vector<SymbolId> Expr::symbols() const
{
    std::set<SymbolId> s;
    for (const auto &t : terms_) {
        for (const auto &f : t.factors) {
            s.insert(f.symbol);
        }
    }
    return {s.begin(), s.end()};
}

Expr product(const Expr &a, const Expr &b)
{
    std::vector<Label> free;
    for (Label l : a.free()) {
        if (std::find(b.free().begin(), b.free().end(), l) == b.free().end()) {
            free.push_back(l);
        }
    }
    for (Label l : b.free()) {
        if (std::find(a.free().begin(), a.free().end(), l) == a.free().end()) {
            free.push_back(l);
        }
    }
    Expr r(free);
    for (const auto &ta : a.terms()) {
        Term fa = ta;
        freshen_dummies(fa);
        for (const auto &tb : b.terms()) {
            Term fb = tb;
            freshen_dummies(fb);
            r.add_term(raw_product(fa, fb));
        }
    }
    return r;
}

Expr relabel(const Expr &e, const std::map<Label, Label> &map)
{
    std::vector<Label> free = e.free();
    for (Label &l : free) {
        auto it = map.find(l);
        if (it != map.end()) {
            l = it->second;
        }
    }
    Expr r(free);
    std::set<Label> old_free(e.free().begin(), e.free().end());
    for (const auto &t : e.terms()) {
        Term nt = t;
        // Dummies may collide with targets; move them out of the way first.
        freshen_dummies(nt);
        map_labels(nt, [&](Label l) {
            if (!old_free.count(l)) {
                return l;
            }
            auto it = map.find(l);
            return it == map.end() ? l : it->second;
        });
        r.add_term(std::move(nt));
    }
    return r;
}

Expr trace(const Expr &e, Label a, Label b)
{
    std::vector<Label> free;
    for (Label l : e.free()) {
        if (l != a && l != b) {
            free.push_back(l);
        }
    }
    if (free.size() + 2 != e.free().size()) {
        throw IndexError("trace: labels are not free indices");
    }
    Expr r(free);
    for (const auto &t : e.terms()) {
        Term nt = t;
        freshen_dummies(nt);
        const Label d = fresh_label();
        map_labels(nt, [&](Label l) { return (l == a || l == b) ? d : l; });
        r.add_term(std::move(nt));
    }
    return r;
}

Expr nabla(const Expr &e, Label label)
{
    std::vector<Label> free{label};
    free.insert(free.end(), e.free().begin(), e.free().end());
    if (std::count(free.begin(), free.end(), label) != 1) {
        throw IndexError("nabla: derivative label already free");
    }
    Expr r(free);
    for (const auto &t : e.terms()) {
        Term base = t;
        bool clash = false;
        for_each_label(base, [&](Label l) { clash = clash || l == label; });
        if (clash) {
            freshen_dummies(base);
        }
        for (std::size_t i = 0; i < base.factors.size(); ++i) {
            if (info_of(base.factors[i].symbol).parallel) {
                continue;
            }
            Term nt = base;
            auto &d = nt.factors[i].deriv;
            d.insert(d.begin(), label);
            r.add_term(std::move(nt));
        }
    }
    return r;
}

Expr substitute(const Expr &e, SymbolId sym, const Expr &repl)
{
    const auto &rinfo = info_of(sym);
    if (static_cast<int>(repl.free().size()) < rinfo.rank) {
        throw IndexError("substitute: replacement for " + rinfo.name + " has too few free indices");
    }
    Expr r(e.free());
    for (const auto &t : e.terms()) {
        Term rest;
        rest.coef = t.coef;
        std::vector<const Factor *> occ;
        for (const auto &f : t.factors) {
            if (f.symbol == sym) {
                occ.push_back(&f);
            } else {
                rest.factors.push_back(f);
            }
        }
        if (occ.empty()) {
            r.add_term(t);
            continue;
        }
        std::vector<Term> acc{rest};
        for (const Factor *o : occ) {
            // Build the instance on temporaries, then move it onto the
            // occurrence's labels (which may be contracted with each other).
            std::map<Label, Label> m;
            std::map<Label, Label> back;
            for (std::size_t k = 0; k < o->idx.size(); ++k) {
                const Label tmp = fresh_label();
                m[repl.free()[k]] = tmp;
                back[tmp] = o->idx[k];
            }
            Expr inst = relabel(repl, m);
            for (auto it = o->deriv.rbegin(); it != o->deriv.rend(); ++it) {
                const Label tmp = fresh_label();
                inst = nabla(inst, tmp);
                back[tmp] = *it;
            }
            std::vector<Term> next;
            for (const auto &b : inst.terms()) {
                Term fb = b;
                freshen_dummies(fb);
                map_labels(fb, [&](Label l) {
                    auto it2 = back.find(l);
                    return it2 == back.end() ? l : it2->second;
                });
                for (const auto &a : acc) {
                    next.push_back(raw_product(a, fb));
                }
            }
            acc = std::move(next);
        }
        for (auto &a : acc) {
            r.add_term(std::move(a));
        }
    }
    return r;
}

Expr drop_symbol(const Expr &e, SymbolId sym)
{
    Expr r(e.free());
    for (const auto &t : e.terms()) {
        bool has = false;
        for (const auto &f : t.factors) {
            has = has || f.symbol == sym;
        }
        if (!has) {
            r.add_term(t);
        }
    }
    return r;
}

Expr keep_symbol(const Expr &e, SymbolId sym)
{
    Expr r(e.free());
    for (const auto &t : e.terms()) {
        bool has = false;
        for (const auto &f : t.factors) {
            has = has || f.symbol == sym;
        }
        if (has) {
            r.add_term(t);
        }
    }
    return r;
}

Expr keep_order(const Expr &e, int order)
{
    Expr r(e.free());
    for (const auto &t : e.terms()) {
        int d = 0;
        for (const auto &f : t.factors) {
            d += static_cast<int>(f.deriv.size());
        }
        if (d == order) {
            r.add_term(t);
        }
    }
    return r;
}

// ---------------------------------------------------------------------------
// Projectors

Expr symmetrize(const Expr &e, const std::vector<Label> &labels)
{
    std::vector<Label> perm = labels;
    std::sort(perm.begin(), perm.end());
    Expr r(e.free());
    long count = 0;
    do {
        std::map<Label, Label> m;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            m[labels[i]] = perm[i];
        }
        Expr p = relabel(e, m).with_free_order(e.free());
        r += p;
        ++count;
    } while (std::next_permutation(perm.begin(), perm.end()));
    r *= Coef(Rational(1, count));
    return r;
}

Expr alternate(const Expr &e, Label a, Label b)
{
    Expr swapped = relabel(e, {{a, b}, {b, a}}).with_free_order(e.free());
    Expr r = e - swapped;
    r *= Coef(Rational(1, 2));
    return r;
}

Expr sym_tracefree(const Expr &e, const std::vector<Label> &labels, const Dim &n)
{
    if (labels.size() <= 1) {
        return e;
    }
    Expr s = symmetrize(e, labels);
    if (labels.size() == 2) {
        const Label a = labels[0];
        const Label b = labels[1];
        Expr tr = product(Expr::metric(a, b), trace(s, a, b));
        tr = tr.with_free_order(e.free());
        Coef k = Coef::inverse_n_plus(0, n);
        return s - k * tr;
    }
    if (labels.size() == 3) {
        // S_abc - 1/(n+2) (g_ab S_cii + g_ac S_bii + g_bc S_aii)
        Expr r = s;
        const Coef k = Coef::inverse_n_plus(2, n);
        const std::array<std::array<Label, 3>, 3> pairs{{{labels[0], labels[1], labels[2]},
                                                         {labels[0], labels[2], labels[1]},
                                                         {labels[1], labels[2], labels[0]}}};
        for (const auto &p : pairs) {
            // trace s over (p0, p1) then rename remaining slot order
            Expr t = product(Expr::metric(p[0], p[1]), trace(s, p[0], p[1]));
            r -= k * t.with_free_order(e.free());
        }
        return r;
    }
    throw IndexError("sym_tracefree supports at most three indices");
}

// ---------------------------------------------------------------------------
// Canonicalization

namespace
{

struct CanonResult
{
    bool zero = false;
    int sign = 1;
    std::vector<Factor> factors;
    std::vector<int> key;
};

std::vector<int> factor_key(const Factor &f)
{
    std::vector<int> k;
    k.reserve(2 + f.deriv.size() + f.idx.size());
    k.push_back(f.symbol);
    k.push_back(static_cast<int>(f.deriv.size()));
    k.insert(k.end(), f.deriv.begin(), f.deriv.end());
    k.insert(k.end(), f.idx.begin(), f.idx.end());
    return k;
}

/// Applies index symmetries in place; returns the sign (0 for a vanishing
/// factor).
int canonical_factor(Factor &f, Calculus calc)
{
    const auto &inf = info_of(f.symbol);
    int sign = 1;
    if (inf.symmetry == Symmetry::symmetric) {
        std::sort(f.idx.begin(), f.idx.end());
    } else if (inf.symmetry == Symmetry::antisymmetric) {
        // bubble sort with parity
        for (std::size_t i = 0; i < f.idx.size(); ++i) {
            for (std::size_t j = 0; j + 1 < f.idx.size() - i; ++j) {
                if (f.idx[j] > f.idx[j + 1]) {
                    std::swap(f.idx[j], f.idx[j + 1]);
                    sign = -sign;
                } else if (f.idx[j] == f.idx[j + 1]) {
                    return 0;
                }
            }
        }
    }
    if (calc == Calculus::flat) {
        std::sort(f.deriv.begin(), f.deriv.end());
    } else if (inf.rank == 0 && f.deriv.size() >= 2) {
        // nabla_a nabla_b of a scalar is symmetric (torsion-free)
        auto &d = f.deriv;
        if (d[d.size() - 2] > d[d.size() - 1]) {
            std::swap(d[d.size() - 2], d[d.size() - 1]);
        }
    }
    return sign;
}

/// Searches all dummy relabelings for the lexicographically smallest key.
CanonResult canonical_search(const std::vector<Factor> &factors, const std::vector<Label> &dummies, Calculus calc)
{
    CanonResult best;
    bool have = false;
    std::vector<int> perm(dummies.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::map<Label, int> pos;
    for (std::size_t i = 0; i < dummies.size(); ++i) {
        pos[dummies[i]] = static_cast<int>(i);
    }
    std::vector<Factor> cand;
    std::vector<std::vector<int>> keys;
    std::vector<std::size_t> order(factors.size());
    do {
        cand = factors;
        int sign = 1;
        for (auto &f : cand) {
            auto remap = [&](Label l) {
                auto it = pos.find(l);
                return it == pos.end() ? l : dummy_base + perm[static_cast<std::size_t>(it->second)];
            };
            for (Label &l : f.deriv) {
                l = remap(l);
            }
            for (Label &l : f.idx) {
                l = remap(l);
            }
            sign *= canonical_factor(f, calc);
        }
        if (sign == 0) {
            best.zero = true;
            return best;
        }
        keys.clear();
        for (const auto &f : cand) {
            keys.push_back(factor_key(f));
        }
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
        std::vector<int> key;
        for (std::size_t i : order) {
            key.push_back(-1);
            key.insert(key.end(), keys[i].begin(), keys[i].end());
        }
        if (!have || key < best.key) {
            have = true;
            best.key = std::move(key);
            best.sign = sign;
            best.factors.clear();
            for (std::size_t i : order) {
                best.factors.push_back(cand[i]);
            }
        } else if (key == best.key && sign != best.sign) {
            best.zero = true;
            return best;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

struct PreparedTerm
{
    bool zero = false;
    Coef coef;
    std::vector<Factor> factors;
};

void replace_label(Term &t, std::size_t skip, Label from, Label to)
{
    for (std::size_t i = 0; i < t.factors.size(); ++i) {
        if (i == skip) {
            continue;
        }
        for (Label &l : t.factors[i].deriv) {
            if (l == from) {
                l = to;
                return;
            }
        }
        for (Label &l : t.factors[i].idx) {
            if (l == from) {
                l = to;
                return;
            }
        }
    }
}

bool occurs_elsewhere(const Term &t, std::size_t skip, Label l)
{
    for (std::size_t i = 0; i < t.factors.size(); ++i) {
        if (i == skip) {
            continue;
        }
        const auto &f = t.factors[i];
        if (std::find(f.deriv.begin(), f.deriv.end(), l) != f.deriv.end() ||
            std::find(f.idx.begin(), f.idx.end(), l) != f.idx.end()) {
            return true;
        }
    }
    return false;
}

/// Metric elimination, Schouten trace and Bianchi rewrites, vanishing checks.
PreparedTerm prepare(Term t, const Dim &n, Calculus calc)
{
    PreparedTerm out;
    const auto &tab = SymbolTable::instance();
    if (t.coef.is_zero()) {
        out.zero = true;
        return out;
    }
    for (const auto &f : t.factors) {
        if (calc == Calculus::flat && info_of(f.symbol).curvature) {
            out.zero = true;
            return out;
        }
        if (info_of(f.symbol).parallel && !f.deriv.empty()) {
            out.zero = true;
            return out;
        }
    }
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t i = 0; i < t.factors.size(); ++i) {
            Factor &f = t.factors[i];
            if (f.symbol == tab.metric()) {
                const Label x = f.idx[0];
                const Label y = f.idx[1];
                if (x == y) {
                    t.coef *= Coef(n.as_poly());
                } else if (occurs_elsewhere(t, i, x)) {
                    replace_label(t, i, x, y);
                } else if (occurs_elsewhere(t, i, y)) {
                    replace_label(t, i, y, x);
                } else {
                    continue;
                }
                t.factors.erase(t.factors.begin() + static_cast<long>(i));
                changed = true;
                break;
            }
            if (f.symbol == tab.schouten()) {
                if (f.idx[0] == f.idx[1]) {
                    f.symbol = tab.schouten_trace();
                    f.idx.clear();
                    changed = true;
                    break;
                }
                if (calc == Calculus::curved && !f.deriv.empty()) {
                    // contracted Bianchi identity: nabla^a P_ab = nabla_b J
                    const Label inner = f.deriv.back();
                    if (inner == f.idx[0] || inner == f.idx[1]) {
                        const Label other = inner == f.idx[0] ? f.idx[1] : f.idx[0];
                        f.deriv.back() = other;
                        f.symbol = tab.schouten_trace();
                        f.idx.clear();
                        changed = true;
                        break;
                    }
                }
            }
        }
    }
    for (const auto &f : t.factors) {
        const auto &inf = info_of(f.symbol);
        if (inf.tracefree || inf.symmetry == Symmetry::antisymmetric) {
            std::set<Label> seen(f.idx.begin(), f.idx.end());
            if (seen.size() != f.idx.size()) {
                out.zero = true;
                return out;
            }
        }
    }
    if (t.coef.is_zero()) {
        out.zero = true;
        return out;
    }
    out.coef = std::move(t.coef);
    out.factors = std::move(t.factors);
    return out;
}

struct CacheKeyHash
{
    std::size_t operator()(const std::vector<int> &v) const noexcept
    {
        std::size_t h = v.size();
        for (int x : v) {
            h ^= static_cast<std::size_t>(x) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
        }
        return h;
    }
};

/// Canonical factors for a prepared term; memoized per thread.
CanonResult canonicalize_factors(std::vector<Factor> factors, Calculus calc)
{
    // first-appearance relabeling of dummies gives the cache key
    std::map<Label, int> counts;
    for (const auto &f : factors) {
        for (Label l : f.deriv) {
            ++counts[l];
        }
        for (Label l : f.idx) {
            ++counts[l];
        }
    }
    for (const auto &[l, c] : counts) {
        if (c > 2) {
            throw IndexError("index label occurs more than twice in a term");
        }
    }
    std::map<Label, Label> first;
    Label next = fresh_base - 1000;
    auto touch = [&](Label l) {
        if (counts[l] == 2 && !first.count(l)) {
            first[l] = next++;
        }
    };
    // order factors by a label-independent signature first so the key is
    // stable under factor permutations
    std::stable_sort(factors.begin(), factors.end(), [](const Factor &a, const Factor &b) {
        if (a.symbol != b.symbol) {
            return a.symbol < b.symbol;
        }
        return a.deriv.size() < b.deriv.size();
    });
    for (const auto &f : factors) {
        for (Label l : f.deriv) {
            touch(l);
        }
        for (Label l : f.idx) {
            touch(l);
        }
    }
    std::vector<int> cache_key{static_cast<int>(calc)};
    for (auto &f : factors) {
        for (Label &l : f.deriv) {
            auto it = first.find(l);
            if (it != first.end()) {
                l = it->second;
            }
        }
        for (Label &l : f.idx) {
            auto it = first.find(l);
            if (it != first.end()) {
                l = it->second;
            }
        }
        auto k = factor_key(f);
        cache_key.push_back(-1);
        cache_key.insert(cache_key.end(), k.begin(), k.end());
    }
    thread_local std::unordered_map<std::vector<int>, CanonResult, CacheKeyHash> cache;
    auto it = cache.find(cache_key);
    if (it != cache.end()) {
        return it->second;
    }
    std::vector<Label> dummies;
    for (const auto &[orig, relab] : first) {
        dummies.push_back(relab);
    }
    std::sort(dummies.begin(), dummies.end());
    CanonResult res = canonical_search(factors, dummies, calc);
    if (cache.size() > 2'000'000) {
        cache.clear();
    }
    cache.emplace(std::move(cache_key), res);
    return res;
}

} // namespace

Expr normalize(const Expr &e, const Dim &n, Calculus calculus)
{
    std::set<Label> free(e.free().begin(), e.free().end());
    if (free.size() != e.free().size()) {
        throw IndexError("duplicate free index");
    }
    std::map<std::vector<int>, std::pair<std::vector<Factor>, Coef>> acc;
    for (const auto &t : e.terms()) {
        // free index check
        std::map<Label, int> counts = label_counts(t);
        for (const auto &[l, c] : counts) {
            if (c == 1 && !free.count(l)) {
                throw IndexError("term has unexpected free index " + std::to_string(l));
            }
            if (c == 2 && free.count(l)) {
                throw IndexError("free index contracted inside a term");
            }
            if (c > 2) {
                throw IndexError("index label occurs more than twice in a term");
            }
        }
        for (Label l : free) {
            if (!counts.count(l)) {
                throw IndexError("term is missing free index " + std::to_string(l));
            }
        }
        PreparedTerm p = prepare(t, n, calculus);
        if (p.zero) {
            continue;
        }
        CanonResult c = canonicalize_factors(std::move(p.factors), calculus);
        if (c.zero) {
            continue;
        }
        Coef coef = p.coef;
        if (c.sign < 0) {
            coef = -coef;
        }
        auto [it, inserted] = acc.try_emplace(c.key, c.factors, coef);
        if (!inserted) {
            it->second.second += coef;
        }
    }
    Expr r(e.free());
    for (auto &[key, fc] : acc) {
        if (!fc.second.is_zero()) {
            r.add_term(Term{std::move(fc.second), std::move(fc.first)});
        }
    }
    return r;
}

bool same(const Expr &a, const Expr &b)
{
    if (!same_label_set(a.free(), b.free())) {
        return false;
    }
    if (a.terms().size() != b.terms().size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.terms().size(); ++i) {
        if (!(a.terms()[i].coef == b.terms()[i].coef) || !(a.terms()[i].factors == b.terms()[i].factors)) {
            return false;
        }
    }
    return true;
}

std::optional<Rational> proportionality(const Expr &a, const Expr &b)
{
    if (!same_label_set(a.free(), b.free()) || a.terms().size() != b.terms().size() || b.terms().empty()) {
        return std::nullopt;
    }
    std::optional<Rational> k;
    for (std::size_t i = 0; i < a.terms().size(); ++i) {
        if (!(a.terms()[i].factors == b.terms()[i].factors)) {
            return std::nullopt;
        }
        auto r = Coef::constant_ratio(a.terms()[i].coef, b.terms()[i].coef);
        if (!r || (k && *k != *r)) {
            return std::nullopt;
        }
        k = r;
    }
    return k;
}

Expr specialize(const Expr &e, const std::optional<Rational> &n, const std::optional<Poly> &w)
{
    Expr r(e.free());
    for (const auto &t : e.terms()) {
        Term nt = t;
        if (w) {
            nt.coef = nt.coef.substitute_w(*w);
        }
        if (n) {
            nt.coef = nt.coef.substitute_n(*n);
        }
        if (!nt.coef.is_zero()) {
            r.add_term(std::move(nt));
        }
    }
    return r;
}

// ---------------------------------------------------------------------------
// Rendering

std::string free_label_name(Label l)
{
    if (l >= 0 && l < 8) {
        return std::string(1, static_cast<char>('a' + l));
    }
    return "x" + std::to_string(l);
}

namespace
{

constexpr const char *dummy_names[] = {"i", "j", "k", "l", "m", "p", "q", "r", "s", "t", "u", "v", "x", "y", "z"};

struct IndexRender
{
    std::string name;
    bool upper = false;
};

std::vector<std::vector<IndexRender>> render_indices(const Term &t, std::vector<std::vector<IndexRender>> *derivs)
{
    std::map<Label, int> counts = label_counts(t);
    std::map<Label, std::string> names;
    std::set<Label> seen;
    int next = 0;
    std::vector<std::vector<IndexRender>> idx;
    auto render = [&](Label l) {
        IndexRender r;
        if (counts[l] == 2) {
            auto it = names.find(l);
            if (it == names.end()) {
                const int k = next++;
                std::string nm = k < 15 ? dummy_names[k] : "d" + std::to_string(k);
                names[l] = nm;
                r.name = nm;
                r.upper = true;
            } else {
                r.name = it->second;
            }
        } else {
            r.name = free_label_name(l);
        }
        return r;
    };
    for (const auto &f : t.factors) {
        std::vector<IndexRender> d;
        for (Label l : f.deriv) {
            d.push_back(render(l));
        }
        derivs->push_back(std::move(d));
        std::vector<IndexRender> ix;
        for (Label l : f.idx) {
            ix.push_back(render(l));
        }
        idx.push_back(std::move(ix));
    }
    return idx;
}

std::string coef_text(const Coef &c, bool leading, bool latex, bool has_factors)
{
    std::string sign;
    Coef mag = c;
    if (c.is_constant() && c.constant_value() < 0) {
        sign = "-";
        mag = -c;
    } else if (!c.is_constant()) {
        // sign stays inside the parenthesised expression
    }
    std::string body;
    if (mag.is_constant()) {
        const Rational v = mag.constant_value();
        if (v == 1 && has_factors) {
            body = "";
        } else if (latex && v.get_den() != 1) {
            body = "\\tfrac{" + v.get_num().get_str() + "}{" + v.get_den().get_str() + "}";
        } else {
            body = v.get_str();
        }
    } else {
        body = latex ? "\\left(" + mag.to_string() + "\\right)" : "(" + mag.to_string() + ")";
    }
    if (leading) {
        return sign + body;
    }
    return (sign.empty() ? " + " : " - ") + body;
}

std::string index_block(const std::vector<IndexRender> &ix, bool latex)
{
    std::string s;
    int mode = -1; // 0 lower, 1 upper
    for (const auto &r : ix) {
        const int m = r.upper ? 1 : 0;
        if (latex) {
            s += std::string(m ? "^{" : "_{") + r.name + "}";
        } else {
            if (m != mode) {
                s += m ? "^" : "_";
            }
            s += r.name;
        }
        mode = m;
    }
    if (latex) {
        // merge adjacent groups: _{a}_{b} -> _{ab}
        std::string merged;
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i] == '}' && i + 2 < s.size() && (s[i + 1] == '_' || s[i + 1] == '^') && s[i + 2] == '{' &&
                !merged.empty()) {
                // find the opener of the current group
                const auto open = merged.rfind('{');
                const char cur = open > 0 ? merged[open - 1] : ' ';
                if (cur == s[i + 1]) {
                    i += 2;
                    continue;
                }
            }
            merged += s[i];
        }
        return merged;
    }
    return s;
}

std::string render(const Expr &e, bool latex)
{
    if (e.terms().empty()) {
        return "0";
    }
    std::string out;
    bool leading = true;
    for (const auto &t : e.terms()) {
        std::vector<std::vector<IndexRender>> derivs;
        auto idx = render_indices(t, &derivs);
        std::string body;
        for (std::size_t i = 0; i < t.factors.size(); ++i) {
            const auto &inf = info_of(t.factors[i].symbol);
            std::string f;
            for (const auto &d : derivs[i]) {
                if (latex) {
                    f += std::string("\\nabla") + (d.upper ? "^{" : "_{") + d.name + "}";
                } else {
                    f += std::string("nabla") + (d.upper ? "^" : "_") + d.name + " ";
                }
            }
            f += latex ? inf.latex : inf.display;
            f += index_block(idx[i], latex);
            if (!body.empty()) {
                body += latex ? "\\," : " ";
            }
            body += f;
        }
        std::string c = coef_text(t.coef, leading, latex, !t.factors.empty());
        if (!c.empty() && c.back() != ' ' && !body.empty() && !(c == "-" || c == " - " || c == " + ")) {
            c += latex ? "\\," : " ";
        }
        out += c + body;
        leading = false;
    }
    return out;
}

} // namespace

std::string to_text(const Expr &e)
{
    return render(e, false);
}

std::string to_latex(const Expr &e)
{
    return render(e, true);
}

} // namespace ccas
