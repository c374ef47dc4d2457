#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "rns/errors.hpp"
#include "rns/grid.hpp"

namespace rns {

using Complex = std::complex<double>;

enum class Representation : std::uint8_t { physical = 0, spectral = 1 };

/// A real scalar lattice on a periodic grid, held either as physical samples
/// or as half-spectrum Fourier coefficients (never both).
class ScalarField {
public:
    ScalarField() = default;

    static ScalarField zeros(const GridSpec& grid, Representation rep = Representation::physical) {
        ScalarField f;
        f.grid_ = grid;
        f.rep_ = rep;
        if (rep == Representation::physical)
            f.phys_.assign(grid.physical_size(), 0.0);
        else
            f.spec_.assign(grid.spectral_size(), Complex{});
        return f;
    }

    static ScalarField physical(const GridSpec& grid, std::vector<double> values) {
        if (values.size() != grid.physical_size()) throw ConfigError("scalar field: lattice size mismatch");
        ScalarField f;
        f.grid_ = grid;
        f.rep_ = Representation::physical;
        f.phys_ = std::move(values);
        return f;
    }

    static ScalarField spectral(const GridSpec& grid, std::vector<Complex> coeffs) {
        if (coeffs.size() != grid.spectral_size()) throw ConfigError("scalar field: spectrum size mismatch");
        ScalarField f;
        f.grid_ = grid;
        f.rep_ = Representation::spectral;
        f.spec_ = std::move(coeffs);
        return f;
    }

    /// Samples fn(x, y, z) at the lattice points.
    static ScalarField sample(const GridSpec& grid, const std::function<double(double, double, double)>& fn) {
        ScalarField f = zeros(grid);
        const int n = grid.n;
        const double h = grid.spacing();
        for (int k = 0; k < n; ++k)
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < n; ++i)
                    f.phys_[std::size_t(i) + std::size_t(n) * (j + std::size_t(n) * k)] = fn(i * h, j * h, k * h);
        return f;
    }

    const GridSpec& grid() const { return grid_; }
    Representation representation() const { return rep_; }
    bool is_physical() const { return rep_ == Representation::physical; }
    bool is_spectral() const { return rep_ == Representation::spectral; }

    std::span<double> values() {
        require(Representation::physical);
        return phys_;
    }
    std::span<const double> values() const {
        require(Representation::physical);
        return phys_;
    }
    std::span<Complex> coeffs() {
        require(Representation::spectral);
        return spec_;
    }
    std::span<const Complex> coeffs() const {
        require(Representation::spectral);
        return spec_;
    }

private:
    void require(Representation rep) const {
        if (rep_ != rep)
            throw ConfigError(rep == Representation::physical ? "field is in spectral representation"
                                                              : "field is in physical representation");
    }

    GridSpec grid_{};
    Representation rep_ = Representation::physical;
    std::vector<double> phys_;
    std::vector<Complex> spec_;
};

/// Three-component field on a common grid.
class VectorField {
public:
    VectorField() = default;

    explicit VectorField(std::array<ScalarField, 3> components) : c_(std::move(components)) {
        for (int i = 1; i < 3; ++i) {
            require_same_grid(c_[0].grid(), c_[i].grid());
            if (c_[i].representation() != c_[0].representation())
                throw ConfigError("vector field: mixed component representations");
        }
    }

    static VectorField zeros(const GridSpec& grid, Representation rep = Representation::physical) {
        return VectorField({ScalarField::zeros(grid, rep), ScalarField::zeros(grid, rep),
                            ScalarField::zeros(grid, rep)});
    }

    static VectorField sample(const GridSpec& grid, const std::function<std::array<double, 3>(double, double, double)>& fn) {
        VectorField v = zeros(grid);
        const int n = grid.n;
        const double h = grid.spacing();
        for (int k = 0; k < n; ++k)
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < n; ++i) {
                    const auto u = fn(i * h, j * h, k * h);
                    const std::size_t idx = std::size_t(i) + std::size_t(n) * (j + std::size_t(n) * k);
                    for (int c = 0; c < 3; ++c) v.c_[c].values()[idx] = u[c];
                }
        return v;
    }

    const GridSpec& grid() const { return c_[0].grid(); }
    Representation representation() const { return c_[0].representation(); }
    bool is_physical() const { return c_[0].is_physical(); }
    bool is_spectral() const { return c_[0].is_spectral(); }

    ScalarField& operator[](int i) { return c_[std::size_t(i)]; }
    const ScalarField& operator[](int i) const { return c_[std::size_t(i)]; }

private:
    std::array<ScalarField, 3> c_;
};

/// Symmetric 3x3 tensor lattice. Six independent components are stored;
/// (i, j) and (j, i) address the same lattice.
class TensorField {
public:
    TensorField() = default;

    static TensorField zeros(const GridSpec& grid, Representation rep = Representation::physical) {
        TensorField t;
        for (auto& c : t.c_) c = ScalarField::zeros(grid, rep);
        return t;
    }

    static constexpr int slot(int i, int j) {
        if (i > j) std::swap(i, j);
        // (0,0) (0,1) (0,2) (1,1) (1,2) (2,2)
        return i == 0 ? j : (i == 1 ? 2 + j : 5);
    }

    ScalarField& operator()(int i, int j) { return c_[std::size_t(slot(i, j))]; }
    const ScalarField& operator()(int i, int j) const { return c_[std::size_t(slot(i, j))]; }

    ScalarField& unique(int s) { return c_[std::size_t(s)]; }
    const ScalarField& unique(int s) const { return c_[std::size_t(s)]; }

    const GridSpec& grid() const { return c_[0].grid(); }
    bool is_physical() const { return c_[0].is_physical(); }

private:
    std::array<ScalarField, 6> c_;
};

}  // namespace rns
