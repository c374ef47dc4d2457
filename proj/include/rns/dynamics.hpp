#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "rns/errors.hpp"
#include "rns/field.hpp"
#include "rns/format.hpp"
#include "rns/initial_data.hpp"
#include "rns/ledger.hpp"
#include "rns/parallel.hpp"
#include "rns/regularizer.hpp"
#include "rns/spectral.hpp"
#include "rns/tightness.hpp"

/// Time integration of the regularized system
///   d_t v + DIV(R o v) - Laplace v + eps w v = -grad p,  div v = 0
/// with an integrating factor for the Laplacian.
namespace rns {

enum class Scheme { imex_euler, imex_bdf2 };

inline std::string scheme_name(Scheme s) { return s == Scheme::imex_euler ? "imex_euler" : "imex_bdf2"; }
inline Scheme parse_scheme(const std::string& s) {
    if (s == "imex_euler") return Scheme::imex_euler;
    if (s == "imex_bdf2") return Scheme::imex_bdf2;
    throw ConfigError("unknown scheme '" + s + "'");
}

struct StepperConfig {
    double dt = 1e-3;
    Scheme scheme = Scheme::imex_bdf2;
    double t_end = 0.5;
    int snapshot_stride = 20;

    void validate() const {
        if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("stepper: dt must be positive");
        if (!(t_end > 0.0) || !std::isfinite(t_end)) throw ConfigError("stepper: t_end must be positive");
        if (snapshot_stride < 1) throw ConfigError("stepper: snapshot_stride must be >= 1");
        const double ratio = t_end / dt;
        if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio)
            throw ConfigError("stepper: t_end must be an integer multiple of dt");
    }
    long steps() const { return std::lround(t_end / dt); }
    bool operator==(const StepperConfig&) const = default;
};

/// Radial profile phi(x) = g(|x|) entering the renormalized identities.
struct RadialProfile {
    enum class Kind { power, smooth } kind = Kind::power;
    double r = 2.0;

    static RadialProfile power(double r) { return {Kind::power, r}; }
    /// h(x) = g(|x|^2 / 2) with g(q) = q / (1 + q): bounded Hessian, h(0) = 0, Dh(0) = 0.
    static RadialProfile smooth() { return {Kind::smooth, 2.0}; }

    double value(double s) const {
        if (kind == Kind::power) return std::pow(s, r) / r;
        const double q = 0.5 * s * s;
        return q / (1.0 + q);
    }
    /// g'(s) / s.
    double slope_over_s(double s) const {
        if (kind == Kind::power) return r == 2.0 ? 1.0 : (s > 0.0 ? std::pow(s, r - 2.0) : 0.0);
        const double q = 0.5 * s * s;
        return 1.0 / ((1.0 + q) * (1.0 + q));
    }
    /// g''(s).
    double curvature(double s) const {
        if (kind == Kind::power) return r == 2.0 ? 1.0 : (r - 1.0) * (s > 0.0 ? std::pow(s, r - 2.0) : 0.0);
        const double q = 0.5 * s * s;
        return 1.0 / ((1.0 + q) * (1.0 + q)) - 2.0 * s * s / ((1.0 + q) * (1.0 + q) * (1.0 + q));
    }
};

/// Velocity gradient at a point: G[i][j] = d_i v_j.
using Gradient = std::array<std::array<double, 3>, 3>;

namespace detail {

/// Sum_i D^2 phi(v)[d_i v, d_i v] and DIV(D phi o v) = sum_ij D^2 phi(v)_ij d_i v_j at one point.
inline std::pair<double, double> profile_terms(const RadialProfile& prof, const std::array<double, 3>& v,
                                               const Gradient& G) {
    const double s = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    const double a = prof.slope_over_s(s), b = prof.curvature(s);
    double grad_sq = 0.0, trace = 0.0;
    for (int i = 0; i < 3; ++i) {
        trace += G[i][i];
        for (int j = 0; j < 3; ++j) grad_sq += G[i][j] * G[i][j];
    }
    // The radial terms carry the factor (b - a), continuous at v = 0; the floor only avoids 0/0.
    const double floor_s = std::max(s, 1e-300);
    const std::array<double, 3> e{v[0] / floor_s, v[1] / floor_s, v[2] / floor_s};
    double radial_sq = 0.0, radial_div = 0.0;
    for (int i = 0; i < 3; ++i) {
        const double di = e[0] * G[i][0] + e[1] * G[i][1] + e[2] * G[i][2];
        radial_sq += di * di;
        radial_div += e[i] * di;
    }
    return {a * grad_sq + (b - a) * radial_sq, a * trace + (b - a) * radial_div};
}

/// Deterministic multi-column quadrature: fn(index, acc) adds into acc.
template <std::size_t K, class Fn>
std::array<double, K> integrate_many(const GridSpec& g, Fn&& fn) {
    const std::size_t plane = std::size_t(g.n) * g.n;
    std::vector<std::array<double, K>> partial(std::size_t(g.n));
    parallel::for_blocks(g.n, [&](int k) {
        std::array<double, K> acc{};
        const std::size_t base = plane * std::size_t(k);
        for (std::size_t p = 0; p < plane; ++p) fn(base + p, acc);
        partial[std::size_t(k)] = acc;
    });
    std::array<double, K> total{};
    for (const auto& a : partial)
        for (std::size_t c = 0; c < K; ++c) total[c] += a[c];
    for (double& t : total) t *= g.cell_volume();
    return total;
}

}  // namespace detail

/// D^2 phi(x)[u, u] for phi(x) = |x|^r / r:
/// (r - 2) |x|^(r-4) <x, u>^2 + |x|^(r-2) |u|^2.
inline double hessian_form(const std::array<double, 3>& x, const std::array<double, 3>& u, double r) {
    const double s2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
    const double u2 = u[0] * u[0] + u[1] * u[1] + u[2] * u[2];
    if (s2 == 0.0) {
        if (r < 2.0) throw DomainError("hessian_form: x = 0 requires r >= 2");
        return r == 2.0 ? u2 : 0.0;
    }
    const double s = std::sqrt(s2);
    const double xu = x[0] * u[0] + x[1] * u[1] + x[2] * u[2];
    const double floor_s = std::max(s, 1e-300);
    return (r - 2.0) * std::pow(floor_s, r - 4.0) * xu * xu + std::pow(s, r - 2.0) * u2;
}

// ---------------------------------------------------------------------------
// Model: right-hand side and instantaneous diagnostics.

/// Instantaneous functionals at one time level.
struct Rates {
    double kinetic = 0, dissipation = 0, weighted_mass = 0, timederiv = 0, convective = 0;
    double lr_value = 0, hessian = 0, pressure = 0, lr_dissipation = 0;
    double quad_value = 0, quad_hessian = 0, quad_pressure = 0;
    double smooth_value = 0, smooth_hessian = 0, smooth_pressure = 0;
    double divergence = 0, mean_mode = 0;
};

class Model {
public:
    Model(const GridSpec& grid, double eps, RegularizerParams params, ScalarField weight, double r = central_r)
        : grid_(grid), eps_(eps), map_(std::move(params)), weight_(std::move(weight)), r_(r), wn_(grid) {
        grid_.validate();
        if (!(eps_ >= 0.0)) throw ConfigError("model: eps must be >= 0");
        if (eps_ > 0.0) {
            if (weight_.grid().n == 0) throw ConfigError("model: eps > 0 requires a weight");
            require_same_grid(grid_, weight_.grid());
            weight_ = spectral::to_physical(weight_);
        }
        ksq_.resize(grid_.spectral_size());
        spectral::for_each_mode(grid_, [&](std::size_t idx, int mx, int my, int mz) {
            ksq_[idx] = wn_.square[std::size_t(mx)] + wn_.square[std::size_t(my)] + wn_.square[std::size_t(mz)];
        });
    }

    const GridSpec& grid() const { return grid_; }
    double eps() const { return eps_; }
    const TruncationMap& map() const { return map_; }
    const ScalarField& weight() const { return weight_; }
    const std::vector<double>& k_squared() const { return ksq_; }
    double r() const { return r_; }

    struct Evaluation {
        VectorField forcing;  // -P(DIV(R o v) + eps w v), mean and Nyquist removed
        std::optional<Rates> rates;
    };

    Evaluation evaluate(const VectorField& vhat, bool diagnostics) const {
        const VectorField v = spectral::to_physical(vhat);
        TensorField t = to_spectral(tensor_R(v, map_));
        if (grid_.dealias)
            for (int s = 0; s < 6; ++s) spectral::dealias(t.unique(s));
        const VectorField div_R = tensor_divergence(t);
        VectorField total = div_R;
        if (eps_ > 0.0) {
            VectorField wv = VectorField::zeros(grid_);
            auto w = weight_.values();
            for (int c = 0; c < 3; ++c) {
                auto src = v[c].values();
                auto dst = wv[c].values();
                spectral::for_each_point(grid_, [&](std::size_t i) { dst[i] = eps_ * w[i] * src[i]; });
            }
            const VectorField wvh = spectral::to_spectral(wv);
            for (int c = 0; c < 3; ++c) {
                auto a = total[c].coeffs();
                auto b = wvh[c].coeffs();
                for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
            }
        }
        // Pressure of the full forcing: p = i k . F / |k|^2.
        ScalarField phat = ScalarField::zeros(grid_, Representation::spectral);
        if (diagnostics) {
            auto o = phat.coeffs();
            auto a = total[0].coeffs(), b = total[1].coeffs(), c = total[2].coeffs();
            spectral::for_each_mode(grid_, [&](std::size_t idx, int mx, int my, int mz) {
                const double kx = wn_.deriv[std::size_t(mx)], ky = wn_.deriv[std::size_t(my)], kz = wn_.deriv[std::size_t(mz)];
                const double k2 = kx * kx + ky * ky + kz * kz;
                if (k2 == 0.0) return;
                o[idx] = Complex(0.0, 1.0) * (kx * a[idx] + ky * b[idx] + kz * c[idx]) / k2;
            });
            spectral::zero_nyquist(phat);
        }
        VectorField forcing = spectral::leray_project(total);
        spectral::zero_nyquist(forcing);
        for (int c = 0; c < 3; ++c) {
            auto f = forcing[c].coeffs();
            for (Complex& z : f) z = -z;
            f[0] = Complex{};
        }
        Evaluation ev{std::move(forcing), std::nullopt};
        if (diagnostics) ev.rates = rates(vhat, v, div_R, ev.forcing, phat);
        return ev;
    }

    /// v' = -|k|^2 vhat + forcing.
    VectorField time_derivative(const VectorField& vhat, const VectorField& forcing) const {
        VectorField d = forcing;
        for (int c = 0; c < 3; ++c) {
            auto o = d[c].coeffs();
            auto in = vhat[c].coeffs();
            for (std::size_t i = 0; i < o.size(); ++i) o[i] -= ksq_[i] * in[i];
        }
        return d;
    }

private:
    Rates rates(const VectorField& vhat, const VectorField& v, const VectorField& div_R, const VectorField& forcing,
                const ScalarField& phat) const {
        Rates rt;
        rt.kinetic = 0.5 * spectral::spectral_inner(vhat, vhat);
        rt.dissipation = spectral::grad_norm_sq(vhat);
        const VectorField vp = time_derivative(vhat, forcing);
        rt.timederiv = spectral::spectral_inner(vp, vp);
        rt.convective = spectral::spectral_inner(div_R, vp);
        rt.divergence = spectral::divergence_ratio(vhat);
        for (int c = 0; c < 3; ++c) rt.mean_mode = std::max(rt.mean_mode, std::abs(spectral::mean_mode(vhat)[std::size_t(c)]));

        std::array<std::array<ScalarField, 3>, 3> grad;
        parallel::for_blocks(9, [&](int b) {
            const int i = b / 3, j = b % 3;
            grad[std::size_t(i)][std::size_t(j)] = spectral::to_physical(spectral::partial(vhat[j], i));
        });
        const ScalarField p = spectral::to_physical(phat);
        auto pv = p.values();
        auto v0 = v[0].values(), v1 = v[1].values(), v2 = v[2].values();
        std::array<std::array<std::span<const double>, 3>, 3> gv;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) gv[std::size_t(i)][std::size_t(j)] = grad[std::size_t(i)][std::size_t(j)].values();
        const bool weighted = eps_ > 0.0;
        std::span<const double> w;
        if (weighted) w = weight_.values();
        const RadialProfile pr = RadialProfile::power(r_), p2 = RadialProfile::power(2.0), ps = RadialProfile::smooth();
        const double r = r_;
        const auto sums = detail::integrate_many<12>(grid_, [&](std::size_t i, std::array<double, 12>& acc) {
            const std::array<double, 3> x{v0[i], v1[i], v2[i]};
            Gradient G;
            double gsq = 0.0;
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) {
                    G[std::size_t(a)][std::size_t(b)] = gv[std::size_t(a)][std::size_t(b)][i];
                    gsq += G[std::size_t(a)][std::size_t(b)] * G[std::size_t(a)][std::size_t(b)];
                }
            const double s2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
            const double s = std::sqrt(s2);
            const auto [hr, dr] = detail::profile_terms(pr, x, G);
            const auto [h2, d2] = detail::profile_terms(p2, x, G);
            const auto [hs, ds] = detail::profile_terms(ps, x, G);
            acc[0] += std::pow(s, r) / r;
            acc[1] += hr;
            acc[2] += pv[i] * dr;
            acc[3] += (s > 0.0 ? std::pow(s, r - 2.0) : 0.0) * gsq;
            acc[4] += 0.5 * s2;
            acc[5] += h2;
            acc[6] += pv[i] * d2;
            acc[7] += ps.value(s);
            acc[8] += hs;
            acc[9] += pv[i] * ds;
            acc[10] += weighted ? w[i] * s2 : 0.0;
        });
        rt.lr_value = sums[0];
        rt.hessian = sums[1];
        rt.pressure = sums[2];
        rt.lr_dissipation = sums[3];
        rt.quad_value = sums[4];
        rt.quad_hessian = sums[5];
        rt.quad_pressure = sums[6];
        rt.smooth_value = sums[7];
        rt.smooth_hessian = sums[8];
        rt.smooth_pressure = sums[9];
        rt.weighted_mass = sums[10];
        return rt;
    }

    GridSpec grid_;
    double eps_;
    TruncationMap map_;
    ScalarField weight_;
    double r_;
    spectral::Wavenumbers wn_;
    std::vector<double> ksq_;
};

// ---------------------------------------------------------------------------
// Stepping

struct SolverState {
    VectorField v;  // spectral
    double time = 0.0;
    double eps = 0.0;
    RegularizerParams params;
    ScalarField weight;  // used iff eps > 0
    long step_index = 0;
    std::optional<VectorField> prev_v;        // v at the previous level (BDF2)
    std::optional<VectorField> prev_forcing;  // forcing at the previous level (BDF2)
};

namespace detail {

inline void check_finite(const VectorField& v, long step, double time) {
    for (int c = 0; c < 3; ++c)
        for (const Complex& z : v[c].coeffs())
            if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
                throw BlowUpError("non-finite field at step " + std::to_string(step) + ", t = " + fmt::number(time) +
                                  ", component " + std::to_string(c));
}

/// One integrating-factor step from (v_n, N_n) with optional (v_{n-1}, N_{n-1}).
inline VectorField advance(const Model& m, const VectorField& v, const VectorField& N, const VectorField* v_prev,
                           const VectorField* N_prev, double dt, Scheme scheme) {
    const auto& ksq = m.k_squared();
    VectorField out = VectorField::zeros(m.grid(), Representation::spectral);
    const bool bdf2 = scheme == Scheme::imex_bdf2 && v_prev && N_prev;
    for (int c = 0; c < 3; ++c) {
        auto o = out[c].coeffs();
        auto a = v[c].coeffs();
        auto f = N[c].coeffs();
        if (bdf2) {
            auto ap = (*v_prev)[c].coeffs();
            auto fp = (*N_prev)[c].coeffs();
            for (std::size_t i = 0; i < o.size(); ++i) {
                const double E = std::exp(-ksq[i] * dt), E2 = E * E;
                o[i] = (4.0 / 3.0) * E * a[i] - (1.0 / 3.0) * E2 * ap[i] + (2.0 * dt / 3.0) * (2.0 * E * f[i] - E2 * fp[i]);
            }
        } else {
            for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::exp(-ksq[i] * dt) * (a[i] + dt * f[i]);
        }
        o[0] = a[0];  // no mean force: the k = 0 mode is carried over exactly
    }
    out = spectral::leray_project(out);
    spectral::zero_nyquist(out);
    return out;
}

inline ScalarField unit_weight(const GridSpec& g) {
    ScalarField w = ScalarField::zeros(g);
    for (double& x : w.values()) x = 1.0;
    return w;
}

}  // namespace detail

/// One IMEX step; the first step of BDF2 (no history in the state) is an Euler step.
inline SolverState step(const SolverState& state, const StepperConfig& config) {
    config.validate();
    const VectorField vhat = spectral::to_spectral(state.v);
    const Model model(vhat.grid(), state.eps, state.params,
                      state.eps > 0.0 ? state.weight : ScalarField{});
    const auto ev = model.evaluate(vhat, false);
    SolverState next = state;
    next.v = detail::advance(model, vhat, ev.forcing, state.prev_v ? &*state.prev_v : nullptr,
                             state.prev_forcing ? &*state.prev_forcing : nullptr, config.dt, config.scheme);
    detail::check_finite(next.v, state.step_index + 1, state.time + config.dt);
    next.prev_v = vhat;
    next.prev_forcing = ev.forcing;
    next.time = state.time + config.dt;
    next.step_index = state.step_index + 1;
    return next;
}

// ---------------------------------------------------------------------------
// Trajectories

/// Low-mode coefficient history used by the weak-residual check.
struct ProbeHistory {
    int band = 2;                          // |k_i| <= band
    std::vector<std::size_t> index;        // half-spectrum indices
    std::vector<double> parseval_weight;   // 1 or 2
    std::vector<double> k_squared;         // |k|^2 (derivative wavevector)
    std::vector<double> times;
    std::vector<std::vector<Complex>> v;   // per step: 3 * index.size()
    std::vector<std::vector<Complex>> forcing;

    void init(const GridSpec& g, int b) {
        band = b;
        index.clear();
        parseval_weight.clear();
        k_squared.clear();
        const spectral::Wavenumbers w(g);
        for (int mz = 0; mz < g.n; ++mz)
            for (int my = 0; my < g.n; ++my)
                for (int mx = 0; mx < g.half(); ++mx) {
                    if (std::abs(g.wavenumber(mx)) > band || std::abs(g.wavenumber(my)) > band ||
                        std::abs(g.wavenumber(mz)) > band)
                        continue;
                    index.push_back(w.index(mx, my, mz));
                    parseval_weight.push_back((mx == 0 || mx == g.n / 2) ? 1.0 : 2.0);
                    const double kx = w.deriv[std::size_t(mx)], ky = w.deriv[std::size_t(my)], kz = w.deriv[std::size_t(mz)];
                    k_squared.push_back(kx * kx + ky * ky + kz * kz);
                }
    }
    void record(double t, const VectorField& vhat, const VectorField& N) {
        times.push_back(t);
        std::vector<Complex> a, b;
        a.reserve(3 * index.size());
        b.reserve(3 * index.size());
        for (int c = 0; c < 3; ++c)
            for (std::size_t i : index) {
                a.push_back(vhat[c].coeffs()[i]);
                b.push_back(N[c].coeffs()[i]);
            }
        v.push_back(std::move(a));
        forcing.push_back(std::move(b));
    }
};

struct Trajectory {
    GridSpec grid;
    double eps = 0.0;
    RegularizerParams params;
    StepperConfig config;
    ScalarField weight;
    VectorField u0;  // spectral initial datum after projection
    std::vector<double> snapshot_times;
    std::vector<VectorField> snapshots;  // spectral
    EnergyLedger ledger;
    ProbeHistory probes;
    double max_divergence = 0.0;        // over all steps
    double max_energy_increase = 0.0;   // max (E_{n+1} - E_n) / E_0
    double max_mean_drift = 0.0;        // max |mean(t) - mean(0)|, bitwise comparison
    bool mean_bitwise_invariant = true;
    std::vector<std::string> warnings;
};

struct SolveOptions {
    bool diagnostics = true;  // full ledger columns (otherwise kinetic, divergence, mean only)
    int probe_band = 2;
    std::optional<ScalarField> weight;  // default: tightness::initial_weight(u0) when eps > 0
    double r = central_r;
};

/// Advisory CFL number dt * speed * n / L with the speed cap 1/lambda^2 (max |u0| for lambda = 0 or custom rho).
inline double cfl_number(const GridSpec& g, const RegularizerParams& params, const StepperConfig& cfg, const VectorField& u0) {
    double speed;
    if (!params.custom_rho && params.lambda > 0.0)
        speed = 1.0 / (params.lambda * params.lambda);
    else
        speed = spectral::lp_norm(spectral::to_physical(u0), INFINITY);
    return cfg.dt * speed * g.n / g.box_length;
}

inline Trajectory solve(const VectorField& u0_in, double eps, const RegularizerParams& params, const StepperConfig& config,
                        const SolveOptions& options = {}) {
    config.validate();
    params.validate();
    if (!(eps >= 0.0) || !std::isfinite(eps)) throw ConfigError("solve: eps must be >= 0");
    Trajectory tr;
    VectorField u0 = spectral::leray_project(spectral::to_spectral(u0_in));
    spectral::zero_nyquist(u0);
    const GridSpec g = u0.grid();
    tr.grid = g;
    tr.eps = eps;
    tr.params = params;
    tr.config = config;
    tr.u0 = u0;
    if (eps > 0.0)
        tr.weight = options.weight ? spectral::to_physical(*options.weight) : tightness::initial_weight(u0);
    else
        tr.weight = detail::unit_weight(g);
    tr.ledger.r = options.r;
    tr.ledger.eps = eps;
    const double cfl = cfl_number(g, params, config, u0);
    if (cfl > 0.5) tr.warnings.push_back("advisory CFL number " + fmt::number(cfl) + " exceeds 0.5");

    const Model model(g, eps, params, tr.weight, options.r);
    tr.probes.init(g, options.probe_band);
    const long steps = config.steps();
    const double dt = config.dt;
    const std::array<Complex, 3> mean0{u0[0].coeffs()[0], u0[1].coeffs()[0], u0[2].coeffs()[0]};

    VectorField v = u0;
    std::optional<VectorField> v_prev, N_prev;
    std::optional<Rates> last;
    LedgerRow row;
    for (long n = 0; n <= steps; ++n) {
        const double t = n * dt;
        auto ev = model.evaluate(v, options.diagnostics);
        tr.probes.record(t, v, ev.forcing);
        if (n % config.snapshot_stride == 0 || n == steps) {
            tr.snapshot_times.push_back(t);
            tr.snapshots.push_back(v);
        }
        // ledger row at t_n
        row.time = t;
        if (ev.rates) {
            const Rates& c = *ev.rates;
            const auto trap = [&](double prev_rate, double rate) { return last ? 0.5 * dt * (prev_rate + rate) : 0.0; };
            const Rates p = last ? *last : c;
            row.kinetic = c.kinetic;
            row.dissipation_cum += trap(p.dissipation, c.dissipation);
            row.weighted_cum += trap(eps * p.weighted_mass, eps * c.weighted_mass);
            row.timederiv_cum += trap(p.timederiv, c.timederiv);
            row.grad_energy = 0.5 * c.dissipation + 0.5 * eps * c.weighted_mass;
            row.convective_work_cum += trap(p.convective, c.convective);
            row.lr_norm = c.lr_value;
            row.hessian_cum += trap(p.hessian, c.hessian);
            row.pressure_work_cum += trap(p.pressure, c.pressure);
            row.lr_dissipation_cum += trap(p.lr_dissipation, c.lr_dissipation);
            row.quad_value = c.quad_value;
            row.quad_hessian_cum += trap(p.quad_hessian, c.quad_hessian);
            row.quad_pressure_work_cum += trap(p.quad_pressure, c.quad_pressure);
            row.smooth_value = c.smooth_value;
            row.smooth_hessian_cum += trap(p.smooth_hessian, c.smooth_hessian);
            row.smooth_pressure_work_cum += trap(p.smooth_pressure, c.smooth_pressure);
            row.weighted_mass = c.weighted_mass;
            row.divergence = c.divergence;
            row.mean_mode = c.mean_mode;
            last = c;
        } else {
            row.kinetic = 0.5 * spectral::spectral_inner(v, v);
            row.divergence = spectral::divergence_ratio(v);
            row.mean_mode = 0.0;
            for (int c = 0; c < 3; ++c) row.mean_mode = std::max(row.mean_mode, std::abs(spectral::mean_mode(v)[std::size_t(c)]));
        }
        if (!tr.ledger.rows.empty()) {
            const double e0 = tr.ledger.rows.front().kinetic;
            if (e0 > 0.0)
                tr.max_energy_increase = std::max(tr.max_energy_increase, (row.kinetic - tr.ledger.rows.back().kinetic) / e0);
        }
        tr.max_divergence = std::max(tr.max_divergence, row.divergence);
        for (int c = 0; c < 3; ++c) {
            const Complex m = v[c].coeffs()[0];
            if (m != mean0[std::size_t(c)]) tr.mean_bitwise_invariant = false;
            tr.max_mean_drift = std::max(tr.max_mean_drift, std::abs(m - mean0[std::size_t(c)]) / g.physical_size());
        }
        tr.ledger.rows.push_back(row);
        if (n == steps) break;
        VectorField next = detail::advance(model, v, ev.forcing, v_prev ? &*v_prev : nullptr,
                                           N_prev ? &*N_prev : nullptr, dt, config.scheme);
        detail::check_finite(next, n + 1, t + dt);
        v_prev = std::move(v);
        N_prev = std::move(ev.forcing);
        v = std::move(next);
    }
    return tr;
}

// ---------------------------------------------------------------------------
// Pressure

/// p solving -Laplace p = sum_ij d_i d_j (r_i r_j), zero mean, spectral form:
/// p = inv_laplacian(-div_op(DIV R)).
inline ScalarField recover_pressure(const VectorField& v, const TruncationMap& map) {
    const VectorField phys = spectral::to_physical(v);
    const TensorField t = to_spectral(tensor_R(phys, map));
    const ScalarField f = spectral::div_op(tensor_divergence(t));
    ScalarField neg = f;
    for (Complex& z : neg.coeffs()) z = -z;
    return spectral::inv_laplacian(neg);
}
inline ScalarField recover_pressure(const VectorField& v, const RegularizerParams& params) {
    return recover_pressure(v, TruncationMap(params));
}

/// Second route: p(k) = -sum_ij k_i k_j Rhat_ij(k) / |k|^2 with Rhat_ij formed by
/// direct convolution of the Fourier coefficients of r(v). Requires r(v) to
/// have at most `max_modes` significant coefficients.
inline ScalarField recover_pressure_quadratic(const VectorField& v, const TruncationMap& map, std::size_t max_modes = 4096) {
    const VectorField phys = spectral::to_physical(v);
    const VectorField rh = spectral::to_spectral(truncate(phys, map));
    const GridSpec& g = v.grid();
    const int n = g.n, half = g.half();
    const spectral::Wavenumbers w(g);
    double scale = 0.0;
    for (int c = 0; c < 3; ++c)
        for (const Complex& z : rh[c].coeffs()) scale = std::max(scale, std::abs(z));
    struct Mode {
        int mx, my, mz;
        std::array<Complex, 3> a;
    };
    std::vector<Mode> modes;
    const auto coeff = [&](int c, int mx, int my, int mz) {
        // full-spectrum coefficient from the half spectrum via conjugate symmetry
        if (mx < half) return rh[c].coeffs()[w.index(mx, my, mz)];
        return std::conj(rh[c].coeffs()[w.index((n - mx) % n, (n - my) % n, (n - mz) % n)]);
    };
    for (int mz = 0; mz < n; ++mz)
        for (int my = 0; my < n; ++my)
            for (int mx = 0; mx < n; ++mx) {
                std::array<Complex, 3> a{coeff(0, mx, my, mz), coeff(1, mx, my, mz), coeff(2, mx, my, mz)};
                if (std::max({std::abs(a[0]), std::abs(a[1]), std::abs(a[2])}) <= 1e-13 * scale) continue;
                modes.push_back({mx, my, mz, a});
                if (modes.size() > max_modes)
                    throw DomainError("recover_pressure_quadratic: truncated field is not sparse in Fourier space");
            }
    ScalarField p = ScalarField::zeros(g, Representation::spectral);
    auto o = p.coeffs();
    const double n3 = double(n) * n * n;
    for (const Mode& P : modes)
        for (const Mode& Q : modes) {
            const int kx = (P.mx + Q.mx) % n, ky = (P.my + Q.my) % n, kz = (P.mz + Q.mz) % n;
            if (kx >= half) continue;
            const double qx = w.deriv[std::size_t(kx)], qy = w.deriv[std::size_t(ky)], qz = w.deriv[std::size_t(kz)];
            const double k2 = w.square[std::size_t(kx)] + w.square[std::size_t(ky)] + w.square[std::size_t(kz)];
            if (k2 == 0.0) continue;
            const Complex kp = qx * P.a[0] + qy * P.a[1] + qz * P.a[2];
            const Complex kq = qx * Q.a[0] + qy * Q.a[1] + qz * Q.a[2];
            o[w.index(kx, ky, kz)] -= kp * kq / (k2 * n3);
        }
    return p;
}

/// max |Laplace p + sum_ij d_i d_j R_ij| / max |sum_ij d_i d_j R_ij| in Fourier space.
inline double pressure_equation_residual(const ScalarField& p_spec, const VectorField& v, const TruncationMap& map) {
    const TensorField t = to_spectral(tensor_R(spectral::to_physical(v), map));
    const ScalarField f = spectral::div_op(tensor_divergence(t));
    const ScalarField lp = spectral::laplacian(spectral::to_spectral(p_spec));
    double num = 0.0, den = 0.0;
    auto a = lp.coeffs(), b = f.coeffs();
    for (std::size_t i = 0; i < a.size(); ++i) {
        num = std::max(num, std::abs(a[i] + b[i]));
        den = std::max(den, std::abs(b[i]));
    }
    return den == 0.0 ? num : num / den;
}

/// Calderon-Zygmund ratio ||p||_q / || |r o v|^2 ||_q (= ||p||_q / ||r o v||_{2q}^2).
inline double cz_ratio(const VectorField& v, const TruncationMap& map, double q) {
    const VectorField phys = spectral::to_physical(v);
    const ScalarField p = spectral::to_physical(recover_pressure(phys, map));
    const VectorField r = truncate(phys, map);
    const double rn = spectral::lp_norm(r, 2.0 * q);
    return rn == 0.0 ? 0.0 : spectral::lp_norm(p, q) / (rn * rn);
}

// ---------------------------------------------------------------------------
// Weak formulation

/// Space-time test field phi(t, x) = theta(t) psi(x) with a C-infinity bump theta
/// supported in (t_a, t_b) and psi divergence-free and band limited.
struct TestField {
    VectorField psi;  // spectral
    double t_a = 0.0, t_b = 1.0;

    double theta(double t) const {
        if (t <= t_a || t >= t_b) return 0.0;
        const double s = (2.0 * t - (t_a + t_b)) / (t_b - t_a);
        return std::exp(1.0 - 1.0 / (1.0 - s * s));
    }
    double theta_prime(double t) const {
        if (t <= t_a || t >= t_b) return 0.0;
        const double s = (2.0 * t - (t_a + t_b)) / (t_b - t_a);
        const double d = 1.0 - s * s;
        return theta(t) * (-2.0 * s / (d * d)) * (2.0 / (t_b - t_a));
    }
};

inline TestField make_test_field(const GridSpec& g, std::uint64_t seed, double t_a, double t_b, int band = 2) {
    return TestField{initial::random_unit(g, band, seed), t_a, t_b};
}

struct WeakResidual {
    double residual = 0.0;   // int [-theta' <v, psi> + theta (<grad v, grad psi> - <N, psi>)] dt
    double scale = 0.0;      // same integral of absolute values
    double relative = 0.0;
    std::vector<double> ic_times;  // early times t_k
    std::vector<double> ic_gaps;   // |<v(t_k) - u0, psi>|
};

/// Weak-form residual of a trajectory against test fields (trapezoid rule over every step).
inline std::vector<WeakResidual> weak_residual(const Trajectory& tr, const std::vector<TestField>& tests, int ic_samples = 10) {
    const ProbeHistory& h = tr.probes;
    const std::size_t M = h.index.size();
    std::vector<WeakResidual> out;
    for (const TestField& tf : tests) {
        require_same_grid(tf.psi.grid(), tr.grid);
        const VectorField psi = spectral::to_spectral(tf.psi);
        // psi must live on the probed modes
        std::vector<Complex> coeffs(3 * M);
        double inside = 0.0;
        for (int c = 0; c < 3; ++c)
            for (std::size_t m = 0; m < M; ++m) coeffs[std::size_t(c) * M + m] = psi[c].coeffs()[h.index[m]];
        double total = 0.0;
        for (int c = 0; c < 3; ++c)
            for (const Complex& z : psi[c].coeffs()) total += std::norm(z);
        for (const Complex& z : coeffs) inside += std::norm(z);
        if (total > 0.0 && total - inside > 1e-24 * total)
            throw ConfigError("weak_residual: test field exceeds the probed band");
        const double norm = tr.grid.cell_volume() / double(tr.grid.physical_size());
        const auto pair = [&](const std::vector<Complex>& a, bool with_k2) {
            double s = 0.0;
            for (int c = 0; c < 3; ++c)
                for (std::size_t m = 0; m < M; ++m) {
                    const Complex x = a[std::size_t(c) * M + m], y = coeffs[std::size_t(c) * M + m];
                    s += h.parseval_weight[m] * (with_k2 ? h.k_squared[m] : 1.0) * (x.real() * y.real() + x.imag() * y.imag());
                }
            return s * norm;
        };
        WeakResidual wr;
        const std::size_t S = h.times.size();
        for (std::size_t k = 0; k < S; ++k) {
            const double t = h.times[k];
            const double th = tf.theta(t), thp = tf.theta_prime(t);
            const double a = pair(h.v[k], false), b = pair(h.v[k], true), c = pair(h.forcing[k], false);
            const double f = -thp * a + th * (b - c);
            const double fa = std::abs(thp * a) + th * (std::abs(b) + std::abs(c));
            const double wgt = (k == 0 || k + 1 == S) ? 0.5 : 1.0;
            const double dt = S > 1 ? (h.times.back() - h.times.front()) / double(S - 1) : 0.0;
            wr.residual += wgt * dt * f;
            wr.scale += wgt * dt * fa;
        }
        wr.relative = wr.scale == 0.0 ? 0.0 : std::abs(wr.residual) / wr.scale;
        if (S > 0) {
            const double a0 = pair(h.v[0], false);
            for (std::size_t k = 1; k < S && int(k) <= ic_samples; ++k) {
                wr.ic_times.push_back(h.times[k]);
                wr.ic_gaps.push_back(std::abs(pair(h.v[k], false) - a0));
            }
        }
        out.push_back(std::move(wr));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Uniqueness probe

struct UniquenessReport {
    std::vector<double> times;
    std::vector<double> gap;       // ||d(t)||_2
    double slope = 0.0;            // least-squares slope of log ||d|| versus t
    double growth_rate = 0.0;      // 2 * slope: fitted C in d/dt |d|^2 <= C |d|^2
    double lipschitz = 0.0;        // measured sup ||D R||
    double bound = 0.0;            // Lip^2 / 2, Gronwall constant for |d|^2
    bool envelope_holds = true;    // log ||d(t)|| <= log ||d(0)|| + (1.2 bound / 2) t at every step
    bool bitwise_identical = false;
};

inline UniquenessReport uniqueness_probe(const VectorField& u0, double delta, double eps, const RegularizerParams& params,
                                         const StepperConfig& config, std::uint64_t seed = 7, int band = 4) {
    if (!(delta >= 0.0)) throw ConfigError("uniqueness_probe: delta must be >= 0");
    UniquenessReport rep;
    VectorField base = spectral::leray_project(spectral::to_spectral(u0));
    spectral::zero_nyquist(base);
    VectorField pert = base;
    if (delta > 0.0) {
        const VectorField d = initial::random_unit(base.grid(), band, seed, delta);
        for (int c = 0; c < 3; ++c) {
            auto a = pert[c].coeffs();
            auto b = d[c].coeffs();
            for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
        }
    }
    const GridSpec g = base.grid();
    config.validate();
    const ScalarField weight = eps > 0.0 ? tightness::initial_weight(base) : detail::unit_weight(g);
    const Model model(g, eps, params, weight);
    // Twin trajectories advanced in lockstep.
    std::array<VectorField, 2> v{base, pert};
    std::array<std::optional<VectorField>, 2> vp, Np;
    const long steps = config.steps();
    rep.bitwise_identical = true;
    for (long n = 0; n <= steps; ++n) {
        VectorField diff = v[0];
        for (int c = 0; c < 3; ++c) {
            auto a = diff[c].coeffs();
            auto b = v[1][c].coeffs();
            for (std::size_t i = 0; i < a.size(); ++i) {
                if (a[i] != b[i]) rep.bitwise_identical = false;
                a[i] -= b[i];
            }
        }
        rep.times.push_back(n * config.dt);
        rep.gap.push_back(spectral::l2_norm(diff));
        if (n == steps) break;
        for (std::size_t k = 0; k < 2; ++k) {
            auto ev = model.evaluate(v[k], false);
            VectorField next = detail::advance(model, v[k], ev.forcing, vp[k] ? &*vp[k] : nullptr,
                                               Np[k] ? &*Np[k] : nullptr, config.dt, config.scheme);
            detail::check_finite(next, n + 1, (n + 1) * config.dt);
            vp[k] = std::move(v[k]);
            Np[k] = std::move(ev.forcing);
            v[k] = std::move(next);
        }
    }
    const TruncationMap map(params);
    rep.lipschitz = map.lipschitz_R();
    rep.bound = 0.5 * rep.lipschitz * rep.lipschitz;
    if (delta > 0.0 && rep.gap.front() > 0.0) {
        double st = 0, sy = 0, stt = 0, sty = 0;
        const double m = double(rep.times.size());
        for (std::size_t k = 0; k < rep.times.size(); ++k) {
            const double t = rep.times[k], y = std::log(rep.gap[k]);
            st += t;
            sy += y;
            stt += t * t;
            sty += t * y;
        }
        rep.slope = (m * sty - st * sy) / (m * stt - st * st);
        rep.growth_rate = 2.0 * rep.slope;
        const double y0 = std::log(rep.gap.front());
        for (std::size_t k = 0; k < rep.times.size(); ++k)
            if (std::log(rep.gap[k]) > y0 + 0.5 * 1.2 * rep.bound * rep.times[k] + 1e-9) rep.envelope_holds = false;
    }
    return rep;
}

}  // namespace rns
