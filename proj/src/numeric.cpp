#include <ccas/numeric.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace ccas
{

// ---------------------------------------------------------------------------
// Grid

std::size_t GridDomain::points() const noexcept
{
    std::size_t p = 1;
    for (int i = 0; i < axes; ++i) {
        p *= static_cast<std::size_t>(res);
    }
    return p;
}

double GridDomain::h() const noexcept
{
    return 2 * std::numbers::pi / res;
}

std::array<double, 3> GridDomain::coords(std::size_t p) const noexcept
{
    std::array<double, 3> x{0, 0, 0};
    for (int a = 0; a < axes; ++a) {
        x[static_cast<std::size_t>(a)] = static_cast<double>(p % static_cast<std::size_t>(res)) * h();
        p /= static_cast<std::size_t>(res);
    }
    return x;
}

GridDomain make_domain(int n, int axes, int res)
{
    check_dimension(Dim::of(n));
    if (axes < 1 || axes > 3 || axes > n) {
        throw ConfigError("active axes must be between 1 and 3, got " + std::to_string(axes));
    }
    if (res < 8) {
        throw ConfigError("resolution must be at least 8, got " + std::to_string(res));
    }
    return GridDomain{n, axes, res};
}

Field::Field(int rank_, int n_, std::size_t points_) : rank(rank_), n(n_), points(points_)
{
    std::size_t c = 1;
    for (int i = 0; i < rank; ++i) {
        c *= static_cast<std::size_t>(n);
    }
    data.assign(c * points, 0.0);
}

Field &Field::operator+=(const Field &o)
{
    for (std::size_t i = 0; i < data.size(); ++i) {
        data[i] += o.data[i];
    }
    return *this;
}

Field &Field::operator-=(const Field &o)
{
    for (std::size_t i = 0; i < data.size(); ++i) {
        data[i] -= o.data[i];
    }
    return *this;
}

Field &Field::operator*=(double s)
{
    for (double &x : data) {
        x *= s;
    }
    return *this;
}

double max_abs(const Field &f)
{
    double m = 0;
    for (double x : f.data) {
        m = std::max(m, std::abs(x));
    }
    return m;
}

Field sample(const GridDomain &dom, const GridFunction &fn)
{
    Field f(0, dom.n, dom.points());
    for (std::size_t p = 0; p < dom.points(); ++p) {
        f.data[p] = fn(dom.coords(p));
    }
    return f;
}

namespace
{

std::size_t ipow(int n, int r)
{
    std::size_t c = 1;
    for (int i = 0; i < r; ++i) {
        c *= static_cast<std::size_t>(n);
    }
    return c;
}

std::vector<int> digits(std::size_t c, int n, int r)
{
    std::vector<int> d(static_cast<std::size_t>(r));
    for (int k = r - 1; k >= 0; --k) {
        d[static_cast<std::size_t>(k)] = static_cast<int>(c % static_cast<std::size_t>(n));
        c /= static_cast<std::size_t>(n);
    }
    return d;
}

std::size_t undigits(const std::vector<int> &d, int n)
{
    std::size_t c = 0;
    for (int x : d) {
        c = c * static_cast<std::size_t>(n) + static_cast<std::size_t>(x);
    }
    return c;
}

void axpy(double a, const double *x, double *y, std::size_t m)
{
    for (std::size_t i = 0; i < m; ++i) {
        y[i] += a * x[i];
    }
}

// y += x * z pointwise
void fma_points(const double *x, const double *z, double *y, std::size_t m)
{
    for (std::size_t i = 0; i < m; ++i) {
        y[i] += x[i] * z[i];
    }
}

} // namespace

void fd_derivative(const GridDomain &dom, const double *in, double *out, int axis, int fd_order)
{
    static const std::vector<double> c2{0.5};
    static const std::vector<double> c4{2.0 / 3.0, -1.0 / 12.0};
    static const std::vector<double> c6{3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0};
    const std::vector<double> *c = nullptr;
    switch (fd_order) {
    case 2:
        c = &c2;
        break;
    case 4:
        c = &c4;
        break;
    case 6:
        c = &c6;
        break;
    default:
        throw ConfigError("fd_order must be 2, 4 or 6, got " + std::to_string(fd_order));
    }
    if (static_cast<int>(c->size()) * 2 >= dom.res) {
        throw ConfigError("stencil wider than the grid");
    }
    const std::size_t R = static_cast<std::size_t>(dom.res);
    const std::size_t stride = ipow(dom.res, axis);
    const double inv_h = 1.0 / dom.h();
    const std::size_t np = dom.points();
    for (std::size_t p = 0; p < np; ++p) {
        const std::size_t i = (p / stride) % R;
        const std::size_t base = p - i * stride;
        double acc = 0;
        for (std::size_t k = 1; k <= c->size(); ++k) {
            const std::size_t ip = (i + k) % R;
            const std::size_t im = (i + R - k) % R;
            acc += (*c)[k - 1] * (in[base + ip * stride] - in[base + im * stride]);
        }
        out[p] = acc * inv_h;
    }
}

// ---------------------------------------------------------------------------
// Metrics

std::string metric_kind_name(MetricKind k)
{
    switch (k) {
    case MetricKind::flat:
        return "flat";
    case MetricKind::conformally_flat:
        return "conformally_flat";
    case MetricKind::perturbed:
        return "perturbed";
    }
    return "?";
}

GridMetric flat_metric(const GridDomain &dom)
{
    GridMetric m{dom, MetricKind::flat, 0, Field(2, dom.n, dom.points())};
    for (int a = 0; a < dom.n; ++a) {
        std::fill_n(m.g.comp(static_cast<std::size_t>(a * dom.n + a)), dom.points(), 1.0);
    }
    return m;
}

GridMetric rescale(const GridMetric &g, const GridFunction &phi)
{
    GridMetric m = g;
    const Field f = sample(g.dom, phi);
    for (std::size_t c = 0; c < m.g.components(); ++c) {
        double *d = m.g.comp(c);
        for (std::size_t p = 0; p < m.g.points; ++p) {
            d[p] *= std::exp(2 * f.data[p]);
        }
    }
    if (m.kind == MetricKind::flat) {
        m.kind = MetricKind::conformally_flat;
    }
    return m;
}

GridMetric conformally_flat_metric(const GridDomain &dom, const GridFunction &phi)
{
    return rescale(flat_metric(dom), phi);
}

GridMetric perturbed_metric(const GridDomain &dom, double eps)
{
    GridMetric m = flat_metric(dom);
    m.kind = MetricKind::perturbed;
    m.eps = eps;
    // h couples an active axis with a passive one (or two active axes) with
    // different profiles, which has nonzero Weyl curvature.
    const int n = dom.n;
    auto add = [&](int a, int b, const GridFunction &fn) {
        for (std::size_t p = 0; p < dom.points(); ++p) {
            const double v = eps * fn(dom.coords(p));
            m.g.comp(static_cast<std::size_t>(a * n + b))[p] += v;
            if (a != b) {
                m.g.comp(static_cast<std::size_t>(b * n + a))[p] += v;
            }
        }
    };
    const int last = n - 1;
    add(0, 0, [](const auto &x) { return std::sin(x[0]) * std::cos(x[1]); });
    add(0, 1, [](const auto &x) { return std::cos(x[0] + x[1]); });
    add(1, 1, [](const auto &x) { return std::sin(2 * x[1]) + 0.5 * std::cos(x[0]); });
    add(last, last, [](const auto &x) { return std::cos(x[0]) * std::sin(x[1]); });
    add(1, last, [](const auto &x) { return std::sin(x[0] - x[1]); });
    return m;
}

// ---------------------------------------------------------------------------
// Curvature

Connection curvature_pipeline(const GridMetric &metric, int fd_order)
{
    const GridDomain &dom = metric.dom;
    const int n = dom.n;
    const std::size_t np = dom.points();
    const std::size_t un = static_cast<std::size_t>(n);
    Connection c;
    c.dom = dom;
    c.fd_order = fd_order;
    c.g = metric.g;
    c.ginv = Field(2, n, np);
    c.flat = metric.kind == MetricKind::flat;

    Eigen::MatrixXd gm(n, n);
    for (std::size_t p = 0; p < np; ++p) {
        for (int a = 0; a < n; ++a) {
            for (int b = 0; b < n; ++b) {
                gm(a, b) = c.g.comp(static_cast<std::size_t>(a * n + b))[p];
            }
        }
        Eigen::LLT<Eigen::MatrixXd> llt(gm);
        if (llt.info() != Eigen::Success) {
            throw ConfigError("metric is not positive definite at grid point " + std::to_string(p));
        }
        const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(n, n));
        for (int a = 0; a < n; ++a) {
            for (int b = 0; b < n; ++b) {
                c.ginv.comp(static_cast<std::size_t>(a * n + b))[p] = inv(a, b);
            }
        }
    }

    // dg[(c, a, b)] = d_c g_ab
    Field dg(3, n, np);
    for (int ax = 0; ax < dom.axes; ++ax) {
        for (std::size_t ab = 0; ab < un * un; ++ab) {
            fd_derivative(dom, c.g.comp(ab), dg.comp(static_cast<std::size_t>(ax) * un * un + ab), ax, fd_order);
        }
    }
    auto DG = [&](int cc, int a, int b) { return dg.comp((static_cast<std::size_t>(cc) * un + a) * un + b); };

    // lower Christoffel Gamma_{d a b}
    Field low(3, n, np);
    for (int d = 0; d < n; ++d) {
        for (int a = 0; a < n; ++a) {
            for (int b = 0; b < n; ++b) {
                double *out = low.comp((static_cast<std::size_t>(d) * un + a) * un + b);
                const double *t1 = DG(a, b, d);
                const double *t2 = DG(b, a, d);
                const double *t3 = DG(d, a, b);
                for (std::size_t p = 0; p < np; ++p) {
                    out[p] = 0.5 * (t1[p] + t2[p] - t3[p]);
                }
            }
        }
    }
    c.gamma = Field(3, n, np);
    for (int cc = 0; cc < n; ++cc) {
        for (int a = 0; a < n; ++a) {
            for (int b = 0; b < n; ++b) {
                double *out = c.gamma.comp((static_cast<std::size_t>(cc) * un + a) * un + b);
                for (int d = 0; d < n; ++d) {
                    fma_points(c.ginv.comp(static_cast<std::size_t>(cc * n + d)),
                               low.comp((static_cast<std::size_t>(d) * un + a) * un + b), out, np);
                }
            }
        }
    }
    for (int cc = 0; cc < n; ++cc) {
        for (int a = 0; a < n; ++a) {
            for (int b = 0; b < n; ++b) {
                const double *g = c.gamma.comp((static_cast<std::size_t>(cc) * un + a) * un + b);
                if (std::any_of(g, g + np, [](double x) { return x != 0.0; })) {
                    c.gamma_support.push_back({cc, a, b});
                }
            }
        }
    }
    auto G = [&](int cc, int a, int b) { return c.gamma.comp((static_cast<std::size_t>(cc) * un + a) * un + b); };

    // Ric_bd = d_a G^a_db - d_d G^a_ab + G^a_ae G^e_db - G^a_de G^e_ab
    c.ricci = Field(2, n, np);
    Field trace_gamma(1, n, np); // G^a_ab
    for (int b = 0; b < n; ++b) {
        for (int a = 0; a < n; ++a) {
            axpy(1.0, G(a, a, b), trace_gamma.comp(static_cast<std::size_t>(b)), np);
        }
    }
    std::vector<double> tmp(np);
    for (int b = 0; b < n; ++b) {
        for (int d = 0; d < n; ++d) {
            double *out = c.ricci.comp(static_cast<std::size_t>(b * n + d));
            for (int a = 0; a < dom.axes; ++a) {
                fd_derivative(dom, G(a, d, b), tmp.data(), a, fd_order);
                axpy(1.0, tmp.data(), out, np);
            }
            if (d < dom.axes) {
                fd_derivative(dom, trace_gamma.comp(static_cast<std::size_t>(b)), tmp.data(), d, fd_order);
                axpy(-1.0, tmp.data(), out, np);
            }
            for (int e = 0; e < n; ++e) {
                fma_points(trace_gamma.comp(static_cast<std::size_t>(e)), G(e, d, b), out, np);
            }
            for (int a = 0; a < n; ++a) {
                for (int e = 0; e < n; ++e) {
                    const double *x = G(a, d, e);
                    const double *y = G(e, a, b);
                    for (std::size_t p = 0; p < np; ++p) {
                        out[p] -= x[p] * y[p];
                    }
                }
            }
        }
    }
    c.scal = Field(0, n, np);
    for (std::size_t ab = 0; ab < un * un; ++ab) {
        fma_points(c.ginv.comp(ab), c.ricci.comp(ab), c.scal.comp(0), np);
    }
    c.P = Field(2, n, np);
    const double k = 1.0 / (2.0 * (n - 1));
    for (std::size_t ab = 0; ab < un * un; ++ab) {
        const double *r = c.ricci.comp(ab);
        const double *g = c.g.comp(ab);
        const double *s = c.scal.comp(0);
        double *out = c.P.comp(ab);
        for (std::size_t p = 0; p < np; ++p) {
            out[p] = (r[p] - k * s[p] * g[p]) / (n - 2);
        }
    }
    c.J = Field(0, n, np);
    for (std::size_t ab = 0; ab < un * un; ++ab) {
        fma_points(c.ginv.comp(ab), c.P.comp(ab), c.J.comp(0), np);
    }
    return c;
}

Field covariant_derivative(const Connection &conn, const Field &t)
{
    const int n = t.n;
    const int r = t.rank;
    const std::size_t np = t.points;
    const std::size_t inner = ipow(n, r);
    Field out(r + 1, n, np);
    for (int a = 0; a < conn.dom.axes; ++a) {
        for (std::size_t c = 0; c < inner; ++c) {
            fd_derivative(conn.dom, t.comp(c), out.comp(static_cast<std::size_t>(a) * inner + c), a, conn.fd_order);
        }
    }
    if (r == 0 || conn.gamma_support.empty()) {
        return out;
    }
    // - sum_k Gamma^c_{a b_k} T_{.. c ..}
    const std::size_t rest = ipow(n, r - 1);
    for (const auto &[cc, a, b] : conn.gamma_support) {
        const double *gam = conn.gamma.comp((static_cast<std::size_t>(cc) * n + a) * n + b);
        for (int k = 0; k < r; ++k) {
            const std::size_t hi = ipow(n, k);          // indices before position k
            const std::size_t lo = ipow(n, r - 1 - k);  // indices after position k
            for (std::size_t i = 0; i < hi; ++i) {
                for (std::size_t j = 0; j < lo; ++j) {
                    const std::size_t src = (i * n + cc) * lo + j;
                    const std::size_t dst = (i * n + b) * lo + j;
                    const double *x = t.comp(src);
                    double *y = out.comp(static_cast<std::size_t>(a) * inner + dst);
                    for (std::size_t p = 0; p < np; ++p) {
                        y[p] -= gam[p] * x[p];
                    }
                }
            }
            (void)rest;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Expression evaluation

namespace
{

struct LField
{
    Field f;
    std::vector<Label> labels;
};

/// Contracts index positions i < j with the inverse metric.
LField contract(const Connection &conn, const LField &x, std::size_t i, std::size_t j)
{
    const int n = x.f.n;
    const int r = x.f.rank;
    const std::size_t np = x.f.points;
    LField out{Field(r - 2, n, np), {}};
    for (std::size_t k = 0; k < x.labels.size(); ++k) {
        if (k != i && k != j) {
            out.labels.push_back(x.labels[k]);
        }
    }
    const std::size_t oc = ipow(n, r - 2);
    for (std::size_t c = 0; c < oc; ++c) {
        const auto od = digits(c, n, r - 2);
        std::vector<int> d(static_cast<std::size_t>(r));
        for (std::size_t k = 0, m = 0; k < static_cast<std::size_t>(r); ++k) {
            if (k != i && k != j) {
                d[k] = od[m++];
            }
        }
        double *y = out.f.comp(c);
        for (int a = 0; a < n; ++a) {
            for (int b = 0; b < n; ++b) {
                if (conn.flat && a != b) {
                    continue;
                }
                d[i] = a;
                d[j] = b;
                const double *xv = x.f.comp(undigits(d, n));
                if (conn.flat) {
                    axpy(1.0, xv, y, np);
                } else {
                    fma_points(conn.ginv.comp(static_cast<std::size_t>(a * n + b)), xv, y, np);
                }
            }
        }
    }
    return out;
}

void contract_repeated(const Connection &conn, LField &x)
{
    for (bool again = true; again;) {
        again = false;
        for (std::size_t i = 0; i < x.labels.size() && !again; ++i) {
            for (std::size_t j = i + 1; j < x.labels.size(); ++j) {
                if (x.labels[i] == x.labels[j]) {
                    x = contract(conn, x, i, j);
                    again = true;
                    break;
                }
            }
        }
    }
}

/// Raises index position k.
Field raise(const Connection &conn, const Field &t, std::size_t k)
{
    if (conn.flat) {
        return t;
    }
    const int n = t.n;
    const int r = t.rank;
    const std::size_t np = t.points;
    Field out(r, n, np);
    const std::size_t lo = ipow(n, r - 1 - static_cast<int>(k));
    const std::size_t hi = ipow(n, static_cast<int>(k));
    for (std::size_t i = 0; i < hi; ++i) {
        for (std::size_t j = 0; j < lo; ++j) {
            for (int a = 0; a < n; ++a) {
                double *y = out.comp((i * n + a) * lo + j);
                for (int b = 0; b < n; ++b) {
                    fma_points(conn.ginv.comp(static_cast<std::size_t>(a * n + b)), t.comp((i * n + b) * lo + j), y, np);
                }
            }
        }
    }
    return out;
}

/// Tensor product with shared labels contracted.
LField combine(const Connection &conn, const LField &a, const LField &b)
{
    std::vector<Label> shared;
    for (Label l : a.labels) {
        if (std::find(b.labels.begin(), b.labels.end(), l) != b.labels.end()) {
            shared.push_back(l);
        }
    }
    Field ar = a.f;
    for (Label l : shared) {
        const auto pos = static_cast<std::size_t>(std::find(a.labels.begin(), a.labels.end(), l) - a.labels.begin());
        ar = raise(conn, ar, pos);
    }
    LField out;
    std::vector<std::size_t> a_out, b_out; // positions kept
    for (std::size_t k = 0; k < a.labels.size(); ++k) {
        if (std::find(shared.begin(), shared.end(), a.labels[k]) == shared.end()) {
            a_out.push_back(k);
            out.labels.push_back(a.labels[k]);
        }
    }
    for (std::size_t k = 0; k < b.labels.size(); ++k) {
        if (std::find(shared.begin(), shared.end(), b.labels[k]) == shared.end()) {
            b_out.push_back(k);
            out.labels.push_back(b.labels[k]);
        }
    }
    const int n = a.f.n;
    const std::size_t np = a.f.points;
    const int ro = static_cast<int>(out.labels.size());
    const int rs = static_cast<int>(shared.size());
    out.f = Field(ro, n, np);
    std::vector<std::size_t> a_sh, b_sh;
    for (Label l : shared) {
        a_sh.push_back(static_cast<std::size_t>(std::find(a.labels.begin(), a.labels.end(), l) - a.labels.begin()));
        b_sh.push_back(static_cast<std::size_t>(std::find(b.labels.begin(), b.labels.end(), l) - b.labels.begin()));
    }
    std::vector<int> da(a.labels.size()), db(b.labels.size());
    const std::size_t oc = ipow(n, ro);
    const std::size_t sc = ipow(n, rs);
    for (std::size_t c = 0; c < oc; ++c) {
        const auto od = digits(c, n, ro);
        for (std::size_t k = 0; k < a_out.size(); ++k) {
            da[a_out[k]] = od[k];
        }
        for (std::size_t k = 0; k < b_out.size(); ++k) {
            db[b_out[k]] = od[a_out.size() + k];
        }
        double *y = out.f.comp(c);
        for (std::size_t s = 0; s < sc; ++s) {
            const auto sd = digits(s, n, rs);
            for (std::size_t k = 0; k < sd.size(); ++k) {
                da[a_sh[k]] = sd[k];
                db[b_sh[k]] = sd[k];
            }
            fma_points(ar.comp(undigits(da, n)), b.f.comp(undigits(db, n)), y, np);
        }
    }
    return out;
}

Field permute_to(const LField &x, const std::vector<Label> &order)
{
    const int n = x.f.n;
    const int r = x.f.rank;
    if (x.labels == order) {
        return x.f;
    }
    std::vector<std::size_t> pos; // pos[k] = position in x of order[k]
    for (Label l : order) {
        const auto it = std::find(x.labels.begin(), x.labels.end(), l);
        if (it == x.labels.end()) {
            throw IndexError("evaluate: free index missing from a term");
        }
        pos.push_back(static_cast<std::size_t>(it - x.labels.begin()));
    }
    Field out(r, n, x.f.points);
    std::vector<int> src(static_cast<std::size_t>(r));
    for (std::size_t c = 0; c < out.components(); ++c) {
        const auto d = digits(c, n, r);
        for (std::size_t k = 0; k < d.size(); ++k) {
            src[pos[k]] = d[k];
        }
        std::copy_n(x.f.comp(undigits(src, n)), x.f.points, out.comp(c));
    }
    return out;
}

class Evaluator
{
public:
    Evaluator(const Connection &conn, const Bindings &fields, double w) : conn_(conn), fields_(fields), w_(w) {}

    /// Value of one term (coefficient included) in the label order `free`,
    /// or an empty optional if a symbol is unbound.
    std::optional<Field> term(const Term &t, const std::vector<Label> &free)
    {
        const auto &tab = SymbolTable::instance();
        std::vector<LField> parts;
        for (const auto &f : t.factors) {
            if (f.symbol != tab.metric() && f.symbol != tab.schouten() && f.symbol != tab.schouten_trace() &&
                !fields_.contains(f.symbol)) {
                return std::nullopt;
            }
            parts.push_back(factor(f));
        }
        const double c = t.coef.evaluate(conn_.dom.n, w_);
        if (parts.empty()) {
            Field s(0, conn_.dom.n, conn_.dom.points());
            std::fill(s.data.begin(), s.data.end(), c);
            return permute_to({s, {}}, free);
        }
        // greedy: combine with the part sharing most labels
        LField acc = std::move(parts.front());
        parts.erase(parts.begin());
        while (!parts.empty()) {
            std::size_t best = 0;
            long best_score = -1;
            for (std::size_t i = 0; i < parts.size(); ++i) {
                long shared = 0;
                for (Label l : parts[i].labels) {
                    shared += std::count(acc.labels.begin(), acc.labels.end(), l);
                }
                const long score = shared * 16 - static_cast<long>(parts[i].labels.size());
                if (score > best_score) {
                    best_score = score;
                    best = i;
                }
            }
            acc = combine(conn_, acc, parts[best]);
            parts.erase(parts.begin() + static_cast<long>(best));
        }
        Field out = permute_to(acc, free);
        out *= c;
        return out;
    }

private:
    LField base(const Factor &f)
    {
        const auto &tab = SymbolTable::instance();
        if (f.symbol == tab.metric()) {
            return {conn_.g, f.idx};
        }
        if (f.symbol == tab.schouten()) {
            return {conn_.P, f.idx};
        }
        if (f.symbol == tab.schouten_trace()) {
            return {conn_.J, f.idx};
        }
        return {fields_.at(f.symbol), f.idx};
    }

    LField factor(const Factor &f)
    {
        // cache on the factor with labels renamed by first appearance
        std::map<Label, Label> canon;
        std::vector<Label> seq;
        for (Label l : f.deriv) {
            seq.push_back(l);
        }
        for (Label l : f.idx) {
            seq.push_back(l);
        }
        std::ostringstream key;
        key << f.symbol << ':' << f.deriv.size() << ':';
        for (Label l : seq) {
            auto it = canon.find(l);
            if (it == canon.end()) {
                it = canon.emplace(l, static_cast<Label>(canon.size())).first;
            }
            key << it->second << ',';
        }
        auto hit = cache_.find(key.str());
        if (hit == cache_.end()) {
            Factor cf = f;
            for (auto &l : cf.deriv) {
                l = canon.at(l);
            }
            for (auto &l : cf.idx) {
                l = canon.at(l);
            }
            LField x = base(cf);
            contract_repeated(conn_, x);
            for (auto it = cf.deriv.rbegin(); it != cf.deriv.rend(); ++it) {
                LField d{covariant_derivative(conn_, x.f), {*it}};
                d.labels.insert(d.labels.end(), x.labels.begin(), x.labels.end());
                x = std::move(d);
                contract_repeated(conn_, x);
            }
            hit = cache_.emplace(key.str(), std::move(x)).first;
        }
        std::map<Label, Label> back;
        for (const auto &[orig, c] : canon) {
            back[c] = orig;
        }
        LField out = hit->second;
        for (auto &l : out.labels) {
            l = back.at(l);
        }
        return out;
    }

    const Connection &conn_;
    const Bindings &fields_;
    double w_;
    std::map<std::string, LField> cache_;
};

int free_rank(const Expr &e)
{
    return static_cast<int>(e.free().size());
}

} // namespace

Field evaluate(const Expr &e, const Connection &conn, const Bindings &fields, double w)
{
    Evaluator ev(conn, fields, w);
    Field out(free_rank(e), conn.dom.n, conn.dom.points());
    for (const auto &t : e.terms()) {
        if (auto v = ev.term(t, e.free())) {
            out += *v;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Casimir and formulas

double weight_value(const Poly &w, int n)
{
    return w.evaluate(n, 0);
}

NumericCasimir::NumericCasimir(const CompositionSeries &series, const ActionTable &table, const CasimirOptions &opts)
    : series_(series)
{
    if (series.n.is_symbolic() || series.w.depends_on_w()) {
        throw ConfigError("numeric Casimir needs concrete n and w");
    }
    const Section c = casimir_apply(series, table, generic_section(series), opts);
    for (const auto *slot : series.slots()) {
        formula_[slot->ref] = c.get(slot->ref, slot->spec.tensor_rank());
    }
}

NumericSection NumericCasimir::apply(const Connection &conn, const NumericSection &s, double shift) const
{
    Bindings b;
    for (const auto &[ref, f] : s) {
        b.emplace(series_.at(ref).symbol, f);
    }
    const double w = weight_value(series_.w, conn.dom.n);
    NumericSection out;
    for (const auto *slot : series_.slots()) {
        const Expr &e = formula_.at(slot->ref);
        bool touched = s.contains(slot->ref);
        for (const auto &t : e.terms()) {
            for (const auto &f : t.factors) {
                touched = touched || b.contains(f.symbol);
            }
        }
        if (!touched) {
            continue;
        }
        Field v = evaluate(e, conn, b, w);
        if (shift != 0) {
            if (auto it = s.find(slot->ref); it != s.end()) {
                Field own = it->second;
                own *= shift;
                v -= own;
            }
        }
        out.emplace(slot->ref, std::move(v));
    }
    return out;
}

NumericSection NumericCasimir::apply_factors(const Connection &conn, const std::vector<CasimirFactor> &factors,
                                             const NumericSection &s) const
{
    NumericSection cur = s;
    for (auto it = factors.rbegin(); it != factors.rend(); ++it) {
        cur = apply(conn, cur, it->beta.evaluate(conn.dom.n, 0));
    }
    return cur;
}

Field evaluate_formula(const OperatorFormula &f, const Connection &conn, const Field &source)
{
    if (source.rank != f.source_spec.tensor_rank()) {
        throw ConfigError("source field rank does not match the operator");
    }
    Bindings b;
    b.emplace(f.source_symbol, source);
    const double w = f.w.depends_on_w() ? 0.0 : weight_value(f.w, conn.dom.n);
    return evaluate(f.body, conn, b, w);
}

// ---------------------------------------------------------------------------
// Random sections and projections

Field project(const IrreducibleBundleSpec &spec, const Connection &conn, const Field &f)
{
    const int n = f.n;
    const std::size_t np = f.points;
    const std::size_t un = static_cast<std::size_t>(n);
    if (spec.kind == BundleKind::density || spec.rank <= 1) {
        return f;
    }
    if (spec.rank == 2 && spec.kind != BundleKind::sym_tracefree) {
        Field out(2, n, np);
        for (int a = 0; a < n; ++a) {
            for (int b = 0; b < n; ++b) {
                double *y = out.comp(static_cast<std::size_t>(a * n + b));
                axpy(0.5, f.comp(static_cast<std::size_t>(a * n + b)), y, np);
                axpy(-0.5, f.comp(static_cast<std::size_t>(b * n + a)), y, np);
            }
        }
        return out;
    }
    // symmetrize
    const int r = spec.rank;
    Field s(r, n, np);
    for (std::size_t c = 0; c < s.components(); ++c) {
        auto d = digits(c, n, r);
        std::sort(d.begin(), d.end());
        int count = 0;
        do {
            axpy(1.0, f.comp(undigits(d, n)), s.comp(c), np);
            ++count;
        } while (std::next_permutation(d.begin(), d.end()));
        // average over all r! orderings; repeated values give fewer distinct
        // permutations but the same average
        double fact = 1;
        for (int i = 2; i <= r; ++i) {
            fact *= i;
        }
        (void)fact;
        for (std::size_t p = 0; p < np; ++p) {
            s.comp(c)[p] /= count;
        }
    }
    // remove traces
    if (r == 2) {
        Field tr(0, n, np);
        for (std::size_t ab = 0; ab < un * un; ++ab) {
            fma_points(conn.ginv.comp(ab), s.comp(ab), tr.comp(0), np);
        }
        for (std::size_t ab = 0; ab < un * un; ++ab) {
            const double *g = conn.g.comp(ab);
            double *y = s.comp(ab);
            for (std::size_t p = 0; p < np; ++p) {
                y[p] -= g[p] * tr.data[p] / n;
            }
        }
        return s;
    }
    if (r == 3) {
        Field t(1, n, np); // t_c = g^ij S_ijc
        for (int c = 0; c < n; ++c) {
            for (std::size_t ij = 0; ij < un * un; ++ij) {
                fma_points(conn.ginv.comp(ij), s.comp(ij * un + static_cast<std::size_t>(c)),
                           t.comp(static_cast<std::size_t>(c)), np);
            }
        }
        const double k = 1.0 / (n + 2);
        for (int a = 0; a < n; ++a) {
            for (int b = 0; b < n; ++b) {
                for (int c = 0; c < n; ++c) {
                    double *y = s.comp((static_cast<std::size_t>(a) * un + b) * un + c);
                    const double *gab = conn.g.comp(static_cast<std::size_t>(a * n + b));
                    const double *gac = conn.g.comp(static_cast<std::size_t>(a * n + c));
                    const double *gbc = conn.g.comp(static_cast<std::size_t>(b * n + c));
                    const double *tc = t.comp(static_cast<std::size_t>(c));
                    const double *tb = t.comp(static_cast<std::size_t>(b));
                    const double *ta = t.comp(static_cast<std::size_t>(a));
                    for (std::size_t p = 0; p < np; ++p) {
                        y[p] -= k * (gab[p] * tc[p] + gac[p] * tb[p] + gbc[p] * ta[p]);
                    }
                }
            }
        }
        return s;
    }
    throw ConfigError("projection implemented for ranks up to 3");
}

Field random_field(const IrreducibleBundleSpec &spec, const Connection &conn, std::mt19937_64 &rng)
{
    const GridDomain &dom = conn.dom;
    Field f(spec.tensor_rank(), dom.n, dom.points());
    std::normal_distribution<double> amp(0.0, 1.0);
    std::uniform_real_distribution<double> phase(0.0, 2 * std::numbers::pi);
    std::uniform_int_distribution<int> mode(-2, 2);
    for (std::size_t c = 0; c < f.components(); ++c) {
        const double a0 = 0.3 * amp(rng);
        struct Mode
        {
            std::array<int, 3> k;
            double a, th;
        };
        std::vector<Mode> modes;
        for (int m = 0; m < 3; ++m) {
            Mode md{{0, 0, 0}, 0, phase(rng)};
            int norm2 = 0;
            for (int ax = 0; ax < dom.axes; ++ax) {
                md.k[static_cast<std::size_t>(ax)] = mode(rng);
                norm2 += md.k[static_cast<std::size_t>(ax)] * md.k[static_cast<std::size_t>(ax)];
            }
            md.a = amp(rng) / (1.0 + norm2);
            modes.push_back(md);
        }
        double *y = f.comp(c);
        for (std::size_t p = 0; p < dom.points(); ++p) {
            const auto x = dom.coords(p);
            double v = a0;
            for (const auto &md : modes) {
                v += md.a * std::sin(md.k[0] * x[0] + md.k[1] * x[1] + md.k[2] * x[2] + md.th);
            }
            y[p] = v;
        }
    }
    return project(spec, conn, f);
}

// ---------------------------------------------------------------------------
// Invariance and vanishing

double invariance_residual(const OperatorFormula &f, const GridMetric &base, const GridFunction &phi,
                           const Field &source, const InvarianceOptions &opts)
{
    const int n = base.dom.n;
    const double w_in = weight_value(f.source_spec.weight, n);
    const double w_out = weight_value(f.target_spec.weight, n) + opts.weight_offset;
    const Connection c0 = curvature_pipeline(base, opts.fd_order);
    const Connection c1 = curvature_pipeline(rescale(base, phi), opts.fd_order);
    const Field ph = sample(base.dom, phi);
    const std::size_t np = base.dom.points();

    Field s1 = source;
    for (std::size_t c = 0; c < s1.components(); ++c) {
        double *y = s1.comp(c);
        for (std::size_t p = 0; p < np; ++p) {
            y[p] *= std::exp(w_in * ph.data[p]);
        }
    }
    Field d1 = evaluate_formula(f, c1, s1);
    Field ref = evaluate_formula(f, c0, source);
    for (std::size_t c = 0; c < ref.components(); ++c) {
        double *y = ref.comp(c);
        for (std::size_t p = 0; p < np; ++p) {
            y[p] *= std::exp(w_out * ph.data[p]);
        }
    }
    const double scale = max_abs(ref);
    d1 -= ref;
    return scale > 0 ? max_abs(d1) / scale : max_abs(d1);
}

double vanishing_residual(const OperatorFormula &f, const Connection &conn, const Field &source)
{
    Bindings b;
    b.emplace(f.source_symbol, source);
    const double w = f.w.depends_on_w() ? 0.0 : weight_value(f.w, conn.dom.n);
    Evaluator ev(conn, b, w);
    const int r = free_rank(f.body);
    Field sum(r, conn.dom.n, conn.dom.points());
    Field mag(r, conn.dom.n, conn.dom.points());
    for (const auto &t : f.body.terms()) {
        if (auto v = ev.term(t, f.body.free())) {
            sum += *v;
            for (std::size_t i = 0; i < v->data.size(); ++i) {
                mag.data[i] += std::abs(v->data[i]);
            }
        }
    }
    const double m = max_abs(mag);
    return m > 0 ? max_abs(sum) / m : 0.0;
}

ConvergenceFit fit_convergence(const std::vector<int> &resolutions, const std::vector<double> &residuals)
{
    ConvergenceFit fit{resolutions, residuals, 0};
    const std::size_t m = resolutions.size();
    if (m < 2) {
        return fit;
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < m; ++i) {
        const double x = std::log(2 * std::numbers::pi / resolutions[i]);
        const double y = std::log(std::max(residuals[i], 1e-300));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double den = m * sxx - sx * sx;
    fit.order = den != 0 ? (m * sxy - sx * sy) / den : 0;
    return fit;
}

nlohmann::json to_json(const VerificationReport &r)
{
    nlohmann::json j;
    j["id"] = r.id;
    j["description"] = r.description;
    j["resolutions"] = r.fit.resolutions;
    j["residuals"] = r.fit.residuals;
    j["order"] = r.fit.order;
    j["threshold"] = r.threshold;
    j["pass"] = r.pass;
    if (!r.note.empty()) {
        j["note"] = r.note;
    }
    return j;
}

std::string to_csv(const VerificationReport &r)
{
    std::ostringstream out;
    out << "id,resolution,h,residual\n";
    out.precision(17);
    for (std::size_t i = 0; i < r.fit.resolutions.size(); ++i) {
        out << r.id << ',' << r.fit.resolutions[i] << ',' << 2 * std::numbers::pi / r.fit.resolutions[i] << ','
            << r.fit.residuals[i] << '\n';
    }
    return out.str();
}

} // namespace ccas
