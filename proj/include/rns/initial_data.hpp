#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "rns/errors.hpp"
#include "rns/field.hpp"
#include "rns/spectral.hpp"

/// Reproducible initial data recipes. Every recipe returns a spectral,
/// divergence-free, zero-mean field with vanishing Nyquist modes.
namespace rns::initial {

struct InitialDataSpec {
    std::string recipe = "taylor_green";  // taylor_green | random_lowmode | single_mode | zero
    double amplitude = 1.0;
    int wavenumber = 1;  // taylor_green, single_mode
    int modes = 3;       // random_lowmode: |k_i| <= modes
    std::uint64_t seed = 0;

    void validate() const {
        if (recipe != "taylor_green" && recipe != "random_lowmode" && recipe != "single_mode" && recipe != "zero")
            throw ConfigError("initial data: unknown recipe '" + recipe + "'");
        if (!std::isfinite(amplitude)) throw ConfigError("initial data: amplitude must be finite");
        if (wavenumber < 1) throw ConfigError("initial data: wavenumber must be >= 1");
        if (modes < 1) throw ConfigError("initial data: modes must be >= 1");
    }
    bool operator==(const InitialDataSpec&) const = default;
};

/// A (sin kx cos ky cos kz, -cos kx sin ky cos kz, 0) with k = 2 pi m / L.
inline VectorField taylor_green(const GridSpec& g, double amplitude = 1.0, int m = 1) {
    const double k = g.base_wavenumber() * m;
    return VectorField::sample(g, [&](double x, double y, double z) {
        return std::array<double, 3>{amplitude * std::sin(k * x) * std::cos(k * y) * std::cos(k * z),
                                     -amplitude * std::cos(k * x) * std::sin(k * y) * std::cos(k * z), 0.0};
    });
}

/// Closed-form kinetic energy (1/2)||u||^2 of the Taylor-Green datum: A^2 L^3 / 8.
inline double taylor_green_kinetic(const GridSpec& g, double amplitude = 1.0) {
    return amplitude * amplitude * g.volume() / 8.0;
}

/// e_2 A sin(2 pi m x_1 / L).
inline VectorField single_mode(const GridSpec& g, double amplitude = 1.0, int m = 1) {
    const double k = g.base_wavenumber() * m;
    return VectorField::sample(g, [&](double x, double, double) {
        return std::array<double, 3>{0.0, amplitude * std::sin(k * x), 0.0};
    });
}

/// Seeded random field with Fourier support |k_i| <= kmax (k != 0), coefficient
/// amplitudes exp(-decay |k|), Leray projected, Nyquist and mean removed.
/// Coefficients are scaled by n^3, so one seed gives the same physical field on
/// every grid that resolves the band. Returned in spectral form, not normalized.
inline VectorField random_bandlimited(const GridSpec& g, int kmax, double decay, std::uint64_t seed) {
    if (2 * kmax >= g.n) throw ConfigError("random field: band limit must stay below the Nyquist index");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    VectorField u = VectorField::zeros(g, Representation::spectral);
    const int n = g.n;
    const double n3 = double(n) * n * n;
    // Deterministic traversal order: component, kz, ky, kx.
    for (int c = 0; c < 3; ++c) {
        auto co = u[c].coeffs();
        for (int kz = -kmax; kz <= kmax; ++kz)
            for (int ky = -kmax; ky <= kmax; ++ky)
                for (int kx = 0; kx <= kmax; ++kx) {
                    const double re = uni(rng), im = uni(rng);
                    if (kx == 0 && ky == 0 && kz == 0) continue;
                    const double mag = std::sqrt(double(kx * kx + ky * ky + kz * kz));
                    const std::size_t idx = std::size_t(kx) + std::size_t(g.half()) * (std::size_t((ky + n) % n) +
                                                                                      std::size_t(n) * ((kz + n) % n));
                    co[idx] = n3 * std::exp(-decay * mag) * Complex(re, im);
                }
        // Conjugate symmetry on the kx = 0 plane: c(0, -ky, -kz) = conj c(0, ky, kz).
        const auto at = [&](int ky, int kz) {
            return std::size_t(g.half()) * (std::size_t((ky + n) % n) + std::size_t(n) * ((kz + n) % n));
        };
        for (int kz = 0; kz <= kmax; ++kz)
            for (int ky = -kmax; ky <= kmax; ++ky) {
                if (kz == 0 && ky <= 0) continue;
                co[at(-ky, -kz)] = std::conj(co[at(ky, kz)]);
            }
    }
    u = spectral::leray_project(u);
    spectral::zero_nyquist(u);
    for (int c = 0; c < 3; ++c) u[c].coeffs()[0] = Complex{};
    return u;
}

/// Random divergence-free field with ||u||_2 = norm.
inline VectorField random_unit(const GridSpec& g, int kmax, std::uint64_t seed, double norm = 1.0) {
    VectorField u = random_bandlimited(g, kmax, 0.0, seed);
    const double s = spectral::l2_norm(u);
    if (s == 0.0) return u;
    for (int c = 0; c < 3; ++c)
        for (Complex& z : u[c].coeffs()) z *= norm / s;
    return u;
}

/// Builds the initial datum for a recipe (spectral, projected, Nyquist-free).
inline VectorField make(const GridSpec& g, const InitialDataSpec& spec) {
    g.validate();
    spec.validate();
    VectorField u;
    if (spec.recipe == "zero")
        u = VectorField::zeros(g, Representation::spectral);
    else if (spec.recipe == "taylor_green")
        u = spectral::to_spectral(taylor_green(g, spec.amplitude, spec.wavenumber));
    else if (spec.recipe == "single_mode")
        u = spectral::to_spectral(single_mode(g, spec.amplitude, spec.wavenumber));
    else {
        // Normalized so that (1/2)||u||^2 = A^2 L^3 / 8, matching the Taylor-Green energy.
        u = random_unit(g, spec.modes, spec.seed, std::abs(spec.amplitude) * std::sqrt(g.volume() / 4.0));
        return u;
    }
    u = spectral::leray_project(u);
    spectral::zero_nyquist(u);
    return u;
}

}  // namespace rns::initial
