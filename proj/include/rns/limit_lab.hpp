#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "rns/dynamics.hpp"
#include "rns/energy_diag.hpp"
#include "rns/errors.hpp"
#include "rns/parallel.hpp"

/// Parameter sweeps for the limits eps -> 0 and lambda -> 0.
///
/// The convergences of the theory are weak or weak-star along subsequences;
/// the reports here measure strong-norm gaps to a reference run, which is the
/// falsifiable surrogate available at desk scale.
namespace rns::limit {

enum class Axis { eps, lambda };
/// finest_run: the smallest swept value is the reference.
/// limit_run: a direct run at eps = 0 (resp. lambda = 0) is the reference.
enum class ReferencePolicy { finest_run, limit_run };

inline std::string axis_name(Axis a) { return a == Axis::eps ? "eps" : "lambda"; }
inline std::string policy_name(ReferencePolicy p) { return p == ReferencePolicy::finest_run ? "finest_run" : "limit_run"; }

struct SweepPlan {
    Axis axis = Axis::eps;
    std::vector<double> values;  // strictly decreasing, positive, at least 3
    StepperConfig stepper;
    double eps = 0.0;            // held fixed on the lambda axis
    RegularizerParams params;    // held fixed on the eps axis (lambda taken from values otherwise)
    ReferencePolicy reference = ReferencePolicy::limit_run;

    void validate() const {
        stepper.validate();
        if (values.size() < 3) throw ConfigError("sweep: at least 3 parameter values required");
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (!(values[i] > 0.0) || !std::isfinite(values[i])) throw ConfigError("sweep: values must be positive");
            if (i && !(values[i] < values[i - 1])) throw ConfigError("sweep: values must be strictly decreasing");
        }
        if (axis == Axis::lambda && params.custom_rho) throw ConfigError("sweep: lambda axis is incompatible with a custom rho");
    }
};

/// Gap norms between a run and the reference.
struct GapNorms {
    double linf_l2 = 0;   // sup_t ||v - u||_2
    double l2_h1 = 0;     // (int ||grad(v - u)||^2 dt)^(1/2)
    double linf_lr = 0;   // sup_t ||v - u||_r
    double local_l2 = 0;  // (int int_{B} |v - u|^2 dx dt)^(1/2), B = ball of radius L/4 about the center
    double grad_pow = 0;  // (int ||grad |v|^(r/2) - grad |u|^(r/2)||^2 dt)^(1/2)
};

inline constexpr std::array<const char*, 5> gap_names{"linf_l2", "l2_h1", "linf_lr", "local_l2", "grad_pow"};

inline std::array<double, 5> gap_array(const GapNorms& g) { return {g.linf_l2, g.l2_h1, g.linf_lr, g.local_l2, g.grad_pow}; }

struct SweepEntry {
    double value = 0;
    GapNorms gaps;
    double sqrt_eps_weighted = 0;  // sqrt(eps) sup_t ||v||_{L^2(w)}
    double l2_identity_max = 0;
};

struct ConvergenceReport {
    Axis axis = Axis::eps;
    ReferencePolicy reference = ReferencePolicy::limit_run;
    double reference_value = 0;
    std::vector<SweepEntry> entries;  // sorted by decreasing parameter
    std::array<double, 5> rates{};    // fitted log-log slopes
    std::array<bool, 5> monotone{};   // strictly decreasing along the sweep
    bool all_monotone = false;
    double reference_l2_identity_max = 0;
    bool aborted = false;
    std::string abort_reason;
    std::string note = "strong-norm gaps against a reference run; the theory asserts weak convergence along subsequences";
};

namespace detail {

/// Chain-form gradient of |v|^(r/2): d_a |v|^(r/2) = (r/2) |v|^(r/2-2) (v . d_a v).
inline std::array<std::vector<double>, 3> grad_power(const VectorField& vh, double r) {
    const VectorField v = spectral::to_physical(vh);
    const VectorField vs = spectral::to_spectral(vh);
    std::array<std::array<ScalarField, 3>, 3> G;
    parallel::for_blocks(9, [&](int b) {
        G[std::size_t(b / 3)][std::size_t(b % 3)] = spectral::to_physical(spectral::partial(vs[b % 3], b / 3));
    });
    const std::size_t N = vh.grid().physical_size();
    std::array<std::vector<double>, 3> out;
    for (auto& o : out) o.assign(N, 0.0);
    auto v0 = v[0].values(), v1 = v[1].values(), v2 = v[2].values();
    for (int a = 0; a < 3; ++a) {
        auto g0 = G[std::size_t(a)][0].values(), g1 = G[std::size_t(a)][1].values(), g2 = G[std::size_t(a)][2].values();
        for (std::size_t i = 0; i < N; ++i) {
            const double s = std::sqrt(v0[i] * v0[i] + v1[i] * v1[i] + v2[i] * v2[i]);
            if (s == 0.0) continue;
            out[std::size_t(a)][i] = (r / 2.0) * std::pow(s, r / 2.0 - 2.0) * (v0[i] * g0[i] + v1[i] * g1[i] + v2[i] * g2[i]);
        }
    }
    return out;
}

inline double trapezoid(const std::vector<double>& t, const std::vector<double>& f) {
    double s = 0.0;
    for (std::size_t k = 1; k < t.size(); ++k) s += 0.5 * (t[k] - t[k - 1]) * (f[k] + f[k - 1]);
    return s;
}

}  // namespace detail

/// Gaps of trajectory a against reference b on their common snapshot times.
inline GapNorms gap_norms(const Trajectory& a, const Trajectory& b, double r = central_r) {
    require_same_grid(a.grid, b.grid);
    if (a.snapshot_times != b.snapshot_times) throw ConfigError("gap_norms: snapshot times differ");
    GapNorms g;
    const GridSpec& grid = a.grid;
    const double c = 0.5 * grid.box_length, radius = 0.25 * grid.box_length, h = grid.spacing();
    const int n = grid.n;
    std::vector<double> h1, loc, gp;
    for (std::size_t k = 0; k < a.snapshots.size(); ++k) {
        VectorField d = a.snapshots[k];
        for (int comp = 0; comp < 3; ++comp) {
            auto x = d[comp].coeffs();
            auto y = b.snapshots[k][comp].coeffs();
            for (std::size_t i = 0; i < x.size(); ++i) x[i] -= y[i];
        }
        g.linf_l2 = std::max(g.linf_l2, spectral::l2_norm(d));
        h1.push_back(spectral::grad_norm_sq(d));
        const VectorField dp = spectral::to_physical(d);
        g.linf_lr = std::max(g.linf_lr, spectral::lp_norm(dp, r));
        auto d0 = dp[0].values(), d1 = dp[1].values(), d2 = dp[2].values();
        double local = 0.0;
        for (int kz = 0; kz < n; ++kz)
            for (int ky = 0; ky < n; ++ky)
                for (int kx = 0; kx < n; ++kx) {
                    const double x = kx * h - c, y = ky * h - c, z = kz * h - c;
                    if (x * x + y * y + z * z > radius * radius) continue;
                    const std::size_t i = std::size_t(kx) + std::size_t(n) * (ky + std::size_t(n) * kz);
                    local += d0[i] * d0[i] + d1[i] * d1[i] + d2[i] * d2[i];
                }
        loc.push_back(local * grid.cell_volume());
        const auto ga = detail::grad_power(a.snapshots[k], r), gb = detail::grad_power(b.snapshots[k], r);
        double s = 0.0;
        for (int comp = 0; comp < 3; ++comp)
            for (std::size_t i = 0; i < ga[std::size_t(comp)].size(); ++i) {
                const double e = ga[std::size_t(comp)][i] - gb[std::size_t(comp)][i];
                s += e * e;
            }
        gp.push_back(s * grid.cell_volume());
    }
    g.l2_h1 = std::sqrt(detail::trapezoid(a.snapshot_times, h1));
    g.local_l2 = std::sqrt(detail::trapezoid(a.snapshot_times, loc));
    g.grad_pow = std::sqrt(detail::trapezoid(a.snapshot_times, gp));
    return g;
}

/// sup over snapshots in [t0, t1] of ||v - u||_2.
inline double linf_l2_gap_on(const Trajectory& a, const Trajectory& b, double t0, double t1) {
    double m = 0.0;
    for (std::size_t k = 0; k < a.snapshots.size(); ++k) {
        if (a.snapshot_times[k] < t0 || a.snapshot_times[k] > t1) continue;
        VectorField d = a.snapshots[k];
        for (int c = 0; c < 3; ++c) {
            auto x = d[c].coeffs();
            auto y = b.snapshots[k][c].coeffs();
            for (std::size_t i = 0; i < x.size(); ++i) x[i] -= y[i];
        }
        m = std::max(m, spectral::l2_norm(d));
    }
    return m;
}

/// Result of a sweep: the report plus the trajectories (reference last).
struct SweepResult {
    ConvergenceReport report;
    std::vector<Trajectory> runs;  // one per swept value, in plan order
    std::optional<Trajectory> reference;
};

inline SweepResult run_sweep(const VectorField& u0, const SweepPlan& plan, const SolveOptions& options = {}) {
    plan.validate();
    SweepResult res;
    ConvergenceReport& rep = res.report;
    rep.axis = plan.axis;
    rep.reference = plan.reference;
    const std::size_t nv = plan.values.size();
    // Jobs: every swept value, plus the limit run if requested.
    std::vector<double> job_values = plan.values;
    if (plan.reference == ReferencePolicy::limit_run) job_values.push_back(0.0);
    const std::size_t jobs = job_values.size();
    std::vector<std::optional<Trajectory>> out(jobs);
    std::vector<std::string> errors(jobs);
    // Shared weight: every eps run uses the weight of the same u0.
    SolveOptions opt = options;
    if (plan.axis == Axis::eps && !opt.weight) opt.weight = tightness::initial_weight(u0);
    parallel::for_blocks(int(jobs), [&](int j) {
        const double value = job_values[std::size_t(j)];
        double eps = plan.eps;
        RegularizerParams params = plan.params;
        if (plan.axis == Axis::eps)
            eps = value;
        else
            params.lambda = value;
        try {
            out[std::size_t(j)] = solve(u0, eps, params, plan.stepper, opt);
        } catch (const BlowUpError& e) {
            errors[std::size_t(j)] = e.what();
        }
    });
    for (std::size_t j = 0; j < jobs; ++j)
        if (!out[j]) {
            rep.aborted = true;
            rep.abort_reason = axis_name(plan.axis) + " = " + fmt::number(job_values[j]) + ": " + errors[j];
            break;
        }
    std::size_t ref_index = plan.reference == ReferencePolicy::limit_run ? nv : nv - 1;
    rep.reference_value = job_values[ref_index];
    if (!out[ref_index]) {
        rep.aborted = true;
        if (rep.abort_reason.empty()) rep.abort_reason = "reference run failed";
        return res;
    }
    const Trajectory& ref = *out[ref_index];
    rep.reference_l2_identity_max = diag::max_of(diag::check_energy_identity(ref.ledger, diag::IdentityKind::L2));
    const std::size_t compared = plan.reference == ReferencePolicy::limit_run ? nv : nv - 1;
    for (std::size_t j = 0; j < compared; ++j) {
        if (!out[j]) break;
        SweepEntry e;
        e.value = job_values[j];
        e.gaps = gap_norms(*out[j], ref, options.r);
        const double eps = plan.axis == Axis::eps ? e.value : plan.eps;
        double wm = 0.0;
        for (const auto& row : out[j]->ledger.rows) wm = std::max(wm, row.weighted_mass);
        e.sqrt_eps_weighted = std::sqrt(eps) * std::sqrt(wm);
        e.l2_identity_max = diag::max_of(diag::check_energy_identity(out[j]->ledger, diag::IdentityKind::L2));
        rep.entries.push_back(e);
    }
    // Rates and monotonicity per gap column.
    rep.all_monotone = rep.entries.size() >= 2;
    for (std::size_t c = 0; c < 5; ++c) {
        bool mono = rep.entries.size() >= 2;
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        std::size_t m = 0;
        for (std::size_t j = 0; j < rep.entries.size(); ++j) {
            const double gcol = gap_array(rep.entries[j].gaps)[c];
            if (j && !(gcol < gap_array(rep.entries[j - 1].gaps)[c])) mono = false;
            if (gcol > 0.0) {
                const double x = std::log(rep.entries[j].value), y = std::log(gcol);
                sx += x;
                sy += y;
                sxx += x * x;
                sxy += x * y;
                ++m;
            }
        }
        rep.rates[c] = m >= 2 ? (double(m) * sxy - sx * sy) / (double(m) * sxx - sx * sx) : 0.0;
        // all-zero columns (zero data) count as monotone
        bool all_zero = true;
        for (const auto& e : rep.entries) all_zero = all_zero && gap_array(e.gaps)[c] == 0.0;
        rep.monotone[c] = mono || all_zero;
        rep.all_monotone = rep.all_monotone && rep.monotone[c];
    }
    for (std::size_t j = 0; j < nv; ++j)
        if (out[j]) res.runs.push_back(std::move(*out[j]));
    res.reference = std::move(out[ref_index]);
    if (ref_index < nv) res.reference = res.runs[ref_index];
    return res;
}

inline ConvergenceReport sweep_epsilon(const VectorField& u0, const std::vector<double>& eps_list, const StepperConfig& cfg,
                                       const RegularizerParams& params = {},
                                       ReferencePolicy reference = ReferencePolicy::limit_run) {
    SweepPlan plan;
    plan.axis = Axis::eps;
    plan.values = eps_list;
    plan.stepper = cfg;
    plan.params = params;
    plan.reference = reference;
    return run_sweep(u0, plan).report;
}

inline ConvergenceReport sweep_lambda(const VectorField& u0, const std::vector<double>& lambda_list, const StepperConfig& cfg,
                                      ReferencePolicy reference = ReferencePolicy::limit_run) {
    SweepPlan plan;
    plan.axis = Axis::lambda;
    plan.values = lambda_list;
    plan.stepper = cfg;
    plan.reference = reference;
    return run_sweep(u0, plan).report;
}

// ---------------------------------------------------------------------------

struct LimitEnergyReport {
    double a = 0;
    double C_emp = 0;                 // max over rows of LHS / (int |u0|^r + t (1 + (int |u0|^2)^a))
    double C_data = 0;                // max over rows of LHS / int |u0|^r
    bool hessian_dominates = true;    // hessian_cum >= int int |u|^(r-2) |grad u|^2 on every row
    std::vector<double> lhs;          // int |u(t)|^r + int int |u|^(r-2) |grad u|^2
};

inline LimitEnergyReport limit_energy_estimate_check(const Trajectory& tr) {
    LimitEnergyReport rep;
    const double r = tr.ledger.r;
    rep.a = diag::exponent_table(r).a;
    if (tr.ledger.rows.empty()) return rep;
    const LedgerRow& r0 = tr.ledger.rows.front();
    const double lr0 = r * r0.lr_norm;
    const double energy0 = 2.0 * r0.kinetic;
    for (const auto& row : tr.ledger.rows) {
        const double lhs = r * row.lr_norm + row.lr_dissipation_cum;
        rep.lhs.push_back(lhs);
        const double bracket = lr0 + row.time * (1.0 + std::pow(energy0, rep.a));
        if (bracket > 0.0 && lhs > 0.0) rep.C_emp = std::max(rep.C_emp, lhs / bracket);
        if (lr0 > 0.0) rep.C_data = std::max(rep.C_data, lhs / lr0);
        if (row.hessian_cum < row.lr_dissipation_cum * (1.0 - 1e-12) - 1e-300) rep.hessian_dominates = false;
    }
    return rep;
}

/// Serrin time exponent for spatial exponent beta: 2/alpha + 3/beta = 1.
inline double serrin_time_exponent(double beta) {
    if (!(beta > 3.0)) throw DomainError("serrin_norm: beta must exceed 3");
    return 2.0 * beta / (beta - 3.0);
}

/// (int ||u(t)||_beta^alpha dt)^(1/alpha), trapezoid over snapshots.
inline double serrin_norm(const Trajectory& tr, double beta) {
    const double alpha = serrin_time_exponent(beta);
    std::vector<double> f;
    for (const auto& s : tr.snapshots) f.push_back(std::pow(spectral::lp_norm(spectral::to_physical(s), beta), alpha));
    return std::pow(detail::trapezoid(tr.snapshot_times, f), 1.0 / alpha);
}

struct InterpolationReport {
    double theta = 0;
    double mixed_l4 = 0;         // ||u||_{L^(r/theta) L^4}
    double bound = 0;            // sup ||u||_r^(1-theta) ||u||_{L^r L^(3r)}^theta
    bool pointwise_ok = true;    // ||u||_4 <= ||u||_r^(1-theta) ||u||_(3r)^theta per snapshot
    bool mixed_ok = true;
    double serrin = 0;           // serrin_norm with beta = r
    double serrin_bound = 0;     // T^(1/alpha_S) sup ||u||_r
};

inline InterpolationReport interpolation_check(const Trajectory& tr, double r = central_r) {
    InterpolationReport rep;
    rep.theta = (3.0 - std::sqrt(3.0)) / 4.0;
    const double th = rep.theta;
    std::vector<double> f4, f3r;
    double sup_r = 0.0;
    for (const auto& s : tr.snapshots) {
        const VectorField p = spectral::to_physical(s);
        const double n4 = spectral::lp_norm(p, 4.0), nr = spectral::lp_norm(p, r), n3r = spectral::lp_norm(p, 3.0 * r);
        if (n4 > std::pow(nr, 1.0 - th) * std::pow(n3r, th) * (1.0 + 1e-12) + 1e-300) rep.pointwise_ok = false;
        f4.push_back(std::pow(n4, r / th));
        f3r.push_back(std::pow(n3r, r));
        sup_r = std::max(sup_r, nr);
    }
    rep.mixed_l4 = std::pow(detail::trapezoid(tr.snapshot_times, f4), th / r);
    rep.bound = std::pow(sup_r, 1.0 - th) * std::pow(detail::trapezoid(tr.snapshot_times, f3r), th / r);
    rep.mixed_ok = rep.mixed_l4 <= rep.bound * (1.0 + 1e-12) + 1e-300;
    rep.serrin = serrin_norm(tr, r);
    const double T = tr.snapshot_times.empty() ? 0.0 : tr.snapshot_times.back() - tr.snapshot_times.front();
    rep.serrin_bound = std::pow(T, 1.0 / serrin_time_exponent(r)) * sup_r;
    return rep;
}

}  // namespace rns::limit
