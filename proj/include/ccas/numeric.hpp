#ifndef CCAS_NUMERIC_HPP
#define CCAS_NUMERIC_HPP

#include <array>
#include <cstddef>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include <ccas/symop.hpp>

namespace ccas
{

/// Periodic grid [0, 2pi)^k on the first k coordinate axes; fields are
/// constant along the remaining n - k axes, tensor indices run over all n.
struct GridDomain
{
    int n = 4;
    int axes = 2;
    int res = 32;

    [[nodiscard]] std::size_t points() const noexcept;
    [[nodiscard]] double h() const noexcept;
    /// Coordinates of a grid point (unused axes are 0).
    [[nodiscard]] std::array<double, 3> coords(std::size_t p) const noexcept;
};

/// Validates n (even, 4..64), 1 <= axes <= 3 and res >= 8.
GridDomain make_domain(int n, int axes, int res);

/// Grid function evaluated at (x_1, x_2, x_3).
using GridFunction = std::function<double(const std::array<double, 3> &)>;

/// Rank-r covariant tensor field, stored component-major:
/// data[comp * points + p], comp = row-major multi-index over n^r.
struct Field
{
    int rank = 0;
    int n = 0;
    std::size_t points = 0;
    std::vector<double> data;

    Field() = default;
    Field(int rank, int n, std::size_t points);

    [[nodiscard]] std::size_t components() const noexcept { return data.size() / (points ? points : 1); }
    double *comp(std::size_t c) { return data.data() + c * points; }
    [[nodiscard]] const double *comp(std::size_t c) const { return data.data() + c * points; }

    Field &operator+=(const Field &o);
    Field &operator-=(const Field &o);
    Field &operator*=(double s);
};

/// Largest absolute entry.
double max_abs(const Field &f);

enum class MetricKind
{
    flat,
    conformally_flat,
    perturbed,
};

std::string metric_kind_name(MetricKind k);

struct GridMetric
{
    GridDomain dom;
    MetricKind kind = MetricKind::flat;
    double eps = 0;
    Field g; // rank 2
};

GridMetric flat_metric(const GridDomain &dom);
/// e^{2 phi} delta.
GridMetric conformally_flat_metric(const GridDomain &dom, const GridFunction &phi);
/// delta + eps h with h a fixed smooth symmetric field on the active axes that
/// is not conformally flat.
GridMetric perturbed_metric(const GridDomain &dom, double eps);
/// e^{2 phi} g.
GridMetric rescale(const GridMetric &g, const GridFunction &phi);

/// Periodic central difference along an active axis, order 2, 4 or 6.
void fd_derivative(const GridDomain &dom, const double *in, double *out, int axis, int fd_order);

struct Connection
{
    GridDomain dom;
    int fd_order = 4;
    Field g;
    Field ginv;
    Field gamma; // Gamma^c_ab at component (c, a, b)
    Field ricci;
    Field scal; // rank 0
    Field P;    // Schouten
    Field J;    // trace of P
    /// Components (c, a, b) of gamma that are not identically zero.
    std::vector<std::array<int, 3>> gamma_support;
    bool flat = false;
};

/// Christoffel symbols, Ricci, scalar curvature and Schouten tensor from
/// finite differences of g. Throws ConfigError if g is not positive definite
/// at some point.
Connection curvature_pipeline(const GridMetric &metric, int fd_order);

/// nabla T with the new index in front.
Field covariant_derivative(const Connection &conn, const Field &t);

/// Field values for symbols of an expression, indices in label order 0..r-1.
using Bindings = std::map<SymbolId, Field>;

/// Evaluates e (free indices in the order of e.free()) with g, P and J taken
/// from the connection and every other symbol from the bindings. Terms with
/// an unbound symbol are treated as zero. w is used for coefficients that
/// still depend on the weight.
Field evaluate(const Expr &e, const Connection &conn, const Bindings &fields, double w = 0);

using NumericSection = std::map<SlotRef, Field>;

/// The curved Casimir on grid sections, compiled once from the slot-wise
/// symbolic formula of the series.
class NumericCasimir
{
public:
    NumericCasimir(const CompositionSeries &series, const ActionTable &table, const CasimirOptions &opts = {});

    [[nodiscard]] NumericSection apply(const Connection &conn, const NumericSection &s, double shift = 0) const;
    [[nodiscard]] NumericSection apply_factors(const Connection &conn, const std::vector<CasimirFactor> &factors,
                                               const NumericSection &s) const;
    [[nodiscard]] const CompositionSeries &series() const noexcept { return series_; }

private:
    CompositionSeries series_;
    std::map<SlotRef, Expr> formula_; // C(generic section), slot by slot
};

/// Numeric value of an operator formula on a source field.
Field evaluate_formula(const OperatorFormula &f, const Connection &conn, const Field &source);

/// Random smooth field of the given bundle: a few low Fourier modes per
/// component, projected to the bundle's symmetry type with respect to g.
Field random_field(const IrreducibleBundleSpec &spec, const Connection &conn, std::mt19937_64 &rng);
/// Symmetric tracefree or antisymmetric projection with respect to g.
Field project(const IrreducibleBundleSpec &spec, const Connection &conn, const Field &f);
/// Samples a scalar function.
Field sample(const GridDomain &dom, const GridFunction &fn);

double weight_value(const Poly &w, int n);

struct InvarianceOptions
{
    int fd_order = 4;
    /// Added to the target weight; nonzero values give a negative control.
    double weight_offset = 0;
};

/// || D_ghat(e^{w_in phi} s) - e^{w_out phi} D_g(s) || / || e^{w_out phi} D_g(s) ||
/// with ghat = e^{2 phi} g.
double invariance_residual(const OperatorFormula &f, const GridMetric &base, const GridFunction &phi,
                           const Field &source, const InvarianceOptions &opts = {});

/// || D(s) || / || sum of |term| ||, the cancellation ratio of the formula.
double vanishing_residual(const OperatorFormula &f, const Connection &conn, const Field &source);

struct ConvergenceFit
{
    std::vector<int> resolutions;
    std::vector<double> residuals;
    double order = 0; // least-squares slope of log r against log h
};

ConvergenceFit fit_convergence(const std::vector<int> &resolutions, const std::vector<double> &residuals);

struct VerificationReport
{
    std::string id;
    std::string description;
    ConvergenceFit fit;
    double threshold = 0;
    bool pass = false;
    std::string note;
};

nlohmann::json to_json(const VerificationReport &r);
/// resolution,h,residual lines with a header.
std::string to_csv(const VerificationReport &r);

} // namespace ccas

#endif
