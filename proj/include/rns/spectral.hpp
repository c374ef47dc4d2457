#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "rns/fft.hpp"
#include "rns/field.hpp"
#include "rns/parallel.hpp"

/// Periodic-box spectral calculus.
///
/// Normalization: the forward transform is unnormalized, the inverse divides
/// by n^3. Continuous integrals are approximated by the trapezoid rule with
/// weight (L/n)^3 per lattice point, so
///   integral(f g) = (L/n)^3 sum_x f g = (L/n)^3 / n^3 sum_k fhat conj(ghat).
///
/// First derivatives use the wavevector with the Nyquist component set to
/// zero (keeps derivatives of real fields real); the Laplacian uses the full
/// |2 pi k / L|^2.
namespace rns::spectral {

enum class Direction { to_spectral, to_physical };

/// Wavenumber tables for one grid.
struct Wavenumbers {
    explicit Wavenumbers(const GridSpec& g) : n(g.n), half(g.half()) {
        const double base = g.base_wavenumber();
        deriv.resize(std::size_t(n));
        square.resize(std::size_t(n));
        integer.resize(std::size_t(n));
        for (int m = 0; m < n; ++m) {
            const int w = g.wavenumber(m);
            integer[std::size_t(m)] = w;
            deriv[std::size_t(m)] = g.is_nyquist(m) ? 0.0 : base * w;
            square[std::size_t(m)] = (base * w) * (base * w);
        }
    }
    int n;
    int half;
    std::vector<double> deriv;   // Nyquist -> 0
    std::vector<double> square;  // full (2 pi k / L)^2
    std::vector<int> integer;

    std::size_t index(int mx, int my, int mz) const {
        return std::size_t(mx) + std::size_t(half) * (std::size_t(my) + std::size_t(n) * mz);
    }
};

/// Calls fn(index, mx, my, mz) for every stored half-spectrum mode; parallel over mz planes.
template <class Fn>
void for_each_mode(const GridSpec& g, Fn&& fn) {
    const int n = g.n, half = g.half();
    parallel::for_blocks(n, [&](int mz) {
        for (int my = 0; my < n; ++my)
            for (int mx = 0; mx < half; ++mx)
                fn(std::size_t(mx) + std::size_t(half) * (std::size_t(my) + std::size_t(n) * mz), mx, my, mz);
    });
}

/// Calls fn(index) for every physical lattice point; parallel over z planes.
template <class Fn>
void for_each_point(const GridSpec& g, Fn&& fn) {
    const std::size_t plane = std::size_t(g.n) * g.n;
    parallel::for_blocks(g.n, [&](int k) {
        const std::size_t base = plane * std::size_t(k);
        for (std::size_t p = 0; p < plane; ++p) fn(base + p);
    });
}

/// Deterministic quadrature sum of fn(index) over the lattice, times (L/n)^3.
template <class Fn>
double integrate_points(const GridSpec& g, Fn&& fn) {
    const std::size_t plane = std::size_t(g.n) * g.n;
    const double s = parallel::reduce_blocks(g.n, [&](int k) {
        double acc = 0.0;
        const std::size_t base = plane * std::size_t(k);
        for (std::size_t p = 0; p < plane; ++p) acc += fn(base + p);
        return acc;
    });
    return s * g.cell_volume();
}

/// Deterministic max of fn(index) over the lattice (fn must be >= 0).
template <class Fn>
double max_points(const GridSpec& g, Fn&& fn) {
    const std::size_t plane = std::size_t(g.n) * g.n;
    return parallel::max_blocks(g.n, [&](int k) {
        double m = 0.0;
        const std::size_t base = plane * std::size_t(k);
        for (std::size_t p = 0; p < plane; ++p) m = std::max(m, fn(base + p));
        return m;
    });
}

// ---------------------------------------------------------------------------
// Transforms

inline ScalarField transform(const ScalarField& f, Direction dir) {
    const GridSpec& g = f.grid();
    const auto& plan = fft::plans(g.n);
    if (dir == Direction::to_spectral) {
        if (!f.is_physical()) throw ConfigError("transform: field already spectral");
        ScalarField out = ScalarField::zeros(g, Representation::spectral);
        plan.forward(f.values(), out.coeffs());
        return out;
    }
    if (!f.is_spectral()) throw ConfigError("transform: field already physical");
    ScalarField out = ScalarField::zeros(g, Representation::physical);
    plan.backward(f.coeffs(), out.values());
    return out;
}

inline VectorField transform(const VectorField& u, Direction dir) {
    std::array<ScalarField, 3> c;
    parallel::for_blocks(3, [&](int i) { c[std::size_t(i)] = transform(u[i], dir); });
    return VectorField(std::move(c));
}

inline ScalarField to_spectral(const ScalarField& f) {
    return f.is_spectral() ? f : transform(f, Direction::to_spectral);
}
inline ScalarField to_physical(const ScalarField& f) {
    return f.is_physical() ? f : transform(f, Direction::to_physical);
}
inline VectorField to_spectral(const VectorField& u) {
    return u.is_spectral() ? u : transform(u, Direction::to_spectral);
}
inline VectorField to_physical(const VectorField& u) {
    return u.is_physical() ? u : transform(u, Direction::to_physical);
}

// ---------------------------------------------------------------------------
// Differential operators (inputs must be spectral)

inline void require_spectral(const ScalarField& f, const char* op) {
    if (!f.is_spectral()) throw ConfigError(std::string(op) + ": spectral representation required");
}

/// d f / d x_axis.
inline ScalarField partial(const ScalarField& f, int axis) {
    require_spectral(f, "partial");
    const GridSpec& g = f.grid();
    const Wavenumbers w(g);
    ScalarField out = ScalarField::zeros(g, Representation::spectral);
    auto in = f.coeffs();
    auto o = out.coeffs();
    for_each_mode(g, [&](std::size_t idx, int mx, int my, int mz) {
        const double k = axis == 0 ? w.deriv[std::size_t(mx)] : (axis == 1 ? w.deriv[std::size_t(my)] : w.deriv[std::size_t(mz)]);
        o[idx] = Complex(0.0, k) * in[idx];
    });
    return out;
}

inline VectorField grad(const ScalarField& f) {
    return VectorField({partial(f, 0), partial(f, 1), partial(f, 2)});
}

inline ScalarField div_op(const VectorField& u) {
    for (int i = 0; i < 3; ++i) require_spectral(u[i], "div_op");
    const GridSpec& g = u.grid();
    const Wavenumbers w(g);
    ScalarField out = ScalarField::zeros(g, Representation::spectral);
    auto o = out.coeffs();
    auto a = u[0].coeffs(), b = u[1].coeffs(), c = u[2].coeffs();
    for_each_mode(g, [&](std::size_t idx, int mx, int my, int mz) {
        o[idx] = Complex(0.0, 1.0) * (w.deriv[std::size_t(mx)] * a[idx] + w.deriv[std::size_t(my)] * b[idx] +
                                      w.deriv[std::size_t(mz)] * c[idx]);
    });
    return out;
}

inline ScalarField laplacian(const ScalarField& f) {
    require_spectral(f, "laplacian");
    const GridSpec& g = f.grid();
    const Wavenumbers w(g);
    ScalarField out = ScalarField::zeros(g, Representation::spectral);
    auto in = f.coeffs();
    auto o = out.coeffs();
    for_each_mode(g, [&](std::size_t idx, int mx, int my, int mz) {
        o[idx] = -(w.square[std::size_t(mx)] + w.square[std::size_t(my)] + w.square[std::size_t(mz)]) * in[idx];
    });
    return out;
}

inline VectorField laplacian(const VectorField& u) {
    return VectorField({laplacian(u[0]), laplacian(u[1]), laplacian(u[2])});
}

/// Solves laplacian(g) = f for zero-mean g. The k = 0 coefficient of f must
/// vanish to within 1e-10 of the largest coefficient.
inline ScalarField inv_laplacian(const ScalarField& f) {
    require_spectral(f, "inv_laplacian");
    const GridSpec& g = f.grid();
    auto in = f.coeffs();
    double scale = 0.0;
    for (const Complex& c : in) scale = std::max(scale, std::abs(c));
    if (std::abs(in[0]) > 1e-10 * scale)
        throw DomainError("inv_laplacian: input has nonzero mean (k = 0 coefficient " +
                          std::to_string(std::abs(in[0])) + ")");
    const Wavenumbers w(g);
    ScalarField out = ScalarField::zeros(g, Representation::spectral);
    auto o = out.coeffs();
    for_each_mode(g, [&](std::size_t idx, int mx, int my, int mz) {
        if (idx == 0) return;
        const double k2 = w.square[std::size_t(mx)] + w.square[std::size_t(my)] + w.square[std::size_t(mz)];
        o[idx] = -in[idx] / k2;
    });
    return out;
}

/// Removes the gradient part of u: uhat <- uhat - k (k . uhat) / |k|^2 for
/// every mode with a nonzero derivative wavevector. k = 0 is left unchanged.
inline VectorField leray_project(const VectorField& u) {
    for (int i = 0; i < 3; ++i) require_spectral(u[i], "leray_project");
    const GridSpec& g = u.grid();
    const Wavenumbers w(g);
    VectorField out = u;
    auto a = out[0].coeffs(), b = out[1].coeffs(), c = out[2].coeffs();
    for_each_mode(g, [&](std::size_t idx, int mx, int my, int mz) {
        const double kx = w.deriv[std::size_t(mx)], ky = w.deriv[std::size_t(my)], kz = w.deriv[std::size_t(mz)];
        const double k2 = kx * kx + ky * ky + kz * kz;
        if (k2 == 0.0) return;
        const Complex dot = (kx * a[idx] + ky * b[idx] + kz * c[idx]) / k2;
        a[idx] -= kx * dot;
        b[idx] -= ky * dot;
        c[idx] -= kz * dot;
    });
    return out;
}

/// Zeroes every coefficient with a Nyquist index on any axis.
inline void zero_nyquist(ScalarField& f) {
    require_spectral(f, "zero_nyquist");
    const GridSpec& g = f.grid();
    auto c = f.coeffs();
    for_each_mode(g, [&](std::size_t idx, int mx, int my, int mz) {
        if (g.is_nyquist(mx) || g.is_nyquist(my) || g.is_nyquist(mz)) c[idx] = Complex{};
    });
}
inline void zero_nyquist(VectorField& u) {
    for (int i = 0; i < 3; ++i) zero_nyquist(u[i]);
}

/// 2/3-rule filter: zeroes modes with |k| > n/3 on any axis.
inline void dealias(ScalarField& f) {
    require_spectral(f, "dealias");
    const GridSpec& g = f.grid();
    const int cut = g.n / 3;
    auto c = f.coeffs();
    for_each_mode(g, [&](std::size_t idx, int mx, int my, int mz) {
        if (std::abs(g.wavenumber(mx)) > cut || std::abs(g.wavenumber(my)) > cut || std::abs(g.wavenumber(mz)) > cut)
            c[idx] = Complex{};
    });
}

// ---------------------------------------------------------------------------
// Norms and inner products

/// Quadrature integral of a physical scalar field.
inline double integral(const ScalarField& f) {
    auto v = f.values();
    return integrate_points(f.grid(), [&](std::size_t i) { return v[i]; });
}

/// Discrete L^2 inner product of two physical vector fields.
inline double inner(const VectorField& a, const VectorField& b) {
    require_same_grid(a.grid(), b.grid());
    auto a0 = a[0].values(), a1 = a[1].values(), a2 = a[2].values();
    auto b0 = b[0].values(), b1 = b[1].values(), b2 = b[2].values();
    return integrate_points(a.grid(), [&](std::size_t i) { return a0[i] * b0[i] + a1[i] * b1[i] + a2[i] * b2[i]; });
}

/// Discrete L^2 inner product evaluated from half-spectrum coefficients (Parseval).
inline double spectral_inner(const ScalarField& a, const ScalarField& b) {
    require_spectral(a, "spectral_inner");
    require_spectral(b, "spectral_inner");
    require_same_grid(a.grid(), b.grid());
    const GridSpec& g = a.grid();
    const int n = g.n, half = g.half();
    auto x = a.coeffs(), y = b.coeffs();
    const double s = parallel::reduce_blocks(n, [&](int mz) {
        double acc = 0.0;
        for (int my = 0; my < n; ++my)
            for (int mx = 0; mx < half; ++mx) {
                const std::size_t idx = std::size_t(mx) + std::size_t(half) * (std::size_t(my) + std::size_t(n) * mz);
                const double weight = (mx == 0 || mx == n / 2) ? 1.0 : 2.0;
                acc += weight * (x[idx].real() * y[idx].real() + x[idx].imag() * y[idx].imag());
            }
        return acc;
    });
    const double n3 = double(n) * n * n;
    return s * g.cell_volume() / n3;
}

inline double spectral_inner(const VectorField& a, const VectorField& b) {
    return spectral_inner(a[0], b[0]) + spectral_inner(a[1], b[1]) + spectral_inner(a[2], b[2]);
}

/// Discrete L^2 norm; works for either representation.
inline double l2_norm(const VectorField& u) {
    if (u.is_spectral()) return std::sqrt(std::max(0.0, spectral_inner(u, u)));
    return std::sqrt(std::max(0.0, inner(u, u)));
}

/// ||grad u||_2^2 = sum_i ||d_i u||^2, evaluated in Fourier space.
inline double grad_norm_sq(const VectorField& u) {
    for (int i = 0; i < 3; ++i) require_spectral(u[i], "grad_norm_sq");
    const GridSpec& g = u.grid();
    const Wavenumbers w(g);
    const int n = g.n, half = g.half();
    const double s = parallel::reduce_blocks(n, [&](int mz) {
        double acc = 0.0;
        for (int my = 0; my < n; ++my)
            for (int mx = 0; mx < half; ++mx) {
                const std::size_t idx = w.index(mx, my, mz);
                const double weight = (mx == 0 || mx == n / 2) ? 1.0 : 2.0;
                const double kx = w.deriv[std::size_t(mx)], ky = w.deriv[std::size_t(my)], kz = w.deriv[std::size_t(mz)];
                const double k2 = kx * kx + ky * ky + kz * kz;
                double amp = 0.0;
                for (int c = 0; c < 3; ++c) amp += std::norm(u[c].coeffs()[idx]);
                acc += weight * k2 * amp;
            }
        return acc;
    });
    return s * g.cell_volume() / (double(n) * n * n);
}

/// Pointwise L^p norm of |u| for a physical vector field (p = infinity allowed).
inline double lp_norm(const VectorField& u, double p) {
    auto a = u[0].values(), b = u[1].values(), c = u[2].values();
    const GridSpec& g = u.grid();
    if (std::isinf(p))
        return max_points(g, [&](std::size_t i) { return std::sqrt(a[i] * a[i] + b[i] * b[i] + c[i] * c[i]); });
    const double s = integrate_points(g, [&](std::size_t i) {
        return std::pow(std::sqrt(a[i] * a[i] + b[i] * b[i] + c[i] * c[i]), p);
    });
    return std::pow(s, 1.0 / p);
}

inline double lp_norm(const ScalarField& f, double p) {
    auto v = f.values();
    const GridSpec& g = f.grid();
    if (std::isinf(p)) return max_points(g, [&](std::size_t i) { return std::abs(v[i]); });
    return std::pow(integrate_points(g, [&](std::size_t i) { return std::pow(std::abs(v[i]), p); }), 1.0 / p);
}

inline double max_abs(const ScalarField& f) {
    if (f.is_physical()) return lp_norm(f, INFINITY);
    double m = 0.0;
    for (const Complex& c : f.coeffs()) m = std::max(m, std::abs(c));
    return m;
}

/// max_k |k . uhat(k)| / max_k |k| |uhat(k)|: dimensionless spectral divergence.
inline double divergence_ratio(const VectorField& u) {
    for (int i = 0; i < 3; ++i) require_spectral(u[i], "divergence_ratio");
    const GridSpec& g = u.grid();
    const Wavenumbers w(g);
    auto a = u[0].coeffs(), b = u[1].coeffs(), c = u[2].coeffs();
    double num = 0.0, den = 0.0;
    for (int mz = 0; mz < g.n; ++mz)
        for (int my = 0; my < g.n; ++my)
            for (int mx = 0; mx < g.half(); ++mx) {
                const std::size_t idx = w.index(mx, my, mz);
                const double kx = w.deriv[std::size_t(mx)], ky = w.deriv[std::size_t(my)], kz = w.deriv[std::size_t(mz)];
                num = std::max(num, std::abs(kx * a[idx] + ky * b[idx] + kz * c[idx]));
                const double amp = std::sqrt(std::norm(a[idx]) + std::norm(b[idx]) + std::norm(c[idx]));
                den = std::max(den, std::sqrt(kx * kx + ky * ky + kz * kz) * amp);
            }
    return den == 0.0 ? 0.0 : num / den;
}

/// Mean (k = 0) coefficient of each component divided by n^3, i.e. the spatial average.
inline std::array<double, 3> mean_mode(const VectorField& u) {
    std::array<double, 3> m{};
    const double n3 = double(u.grid().n) * u.grid().n * u.grid().n;
    for (int i = 0; i < 3; ++i) m[std::size_t(i)] = u[i].coeffs()[0].real() / n3;
    return m;
}

}  // namespace rns::spectral
