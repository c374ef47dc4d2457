#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>

#include "rns/errors.hpp"

namespace rns {

/// Periodic cube [0, L)^3 sampled with n points per axis.
///
/// Physical lattices are stored x-fastest: index = i + n*(j + n*k).
/// Spectral lattices use the real-to-complex half layout with the x axis
/// halved: index = kx + (n/2+1)*(ky + n*kz), kx in [0, n/2].
struct GridSpec {
    int n = 32;
    double box_length = 2.0 * std::numbers::pi;
    bool dealias = false;

    void validate() const {
        if (n < 8 || n % 2 != 0)
            throw ConfigError("grid: n_per_axis must be even and >= 8, got " + std::to_string(n));
        if (!(box_length > 0.0) || !std::isfinite(box_length))
            throw ConfigError("grid: box_length must be positive");
    }

    std::size_t physical_size() const { return std::size_t(n) * n * n; }
    int half() const { return n / 2 + 1; }
    std::size_t spectral_size() const { return std::size_t(half()) * n * n; }

    /// Quadrature weight (L/N)^3 of one lattice point.
    double cell_volume() const {
        const double h = box_length / n;
        return h * h * h;
    }
    double spacing() const { return box_length / n; }
    double volume() const { return box_length * box_length * box_length; }

    /// 2*pi/L, the physical wavenumber of the fundamental mode.
    double base_wavenumber() const { return 2.0 * std::numbers::pi / box_length; }

    /// Signed integer wavenumber of full-axis index m.
    int wavenumber(int m) const { return m <= n / 2 ? m : m - n; }

    bool is_nyquist(int m) const { return m == n / 2; }

    std::array<double, 3> position(int i, int j, int k) const {
        const double h = spacing();
        return {i * h, j * h, k * h};
    }

    bool operator==(const GridSpec& o) const {
        return n == o.n && box_length == o.box_length && dealias == o.dealias;
    }
};

inline void require_same_grid(const GridSpec& a, const GridSpec& b) {
    if (a.n != b.n || a.box_length != b.box_length)
        throw ConfigError("grid mismatch: n=" + std::to_string(a.n) + " vs n=" + std::to_string(b.n));
}

}  // namespace rns
