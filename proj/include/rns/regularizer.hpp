#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "rns/field.hpp"
#include "rns/spectral.hpp"

namespace rns {

/// A user-supplied truncation profile rho with its declared derivative.
struct CustomRho {
    std::string tag;
    std::function<double(double)> rho;
    std::function<double(double)> derivative;
};

/// Truncation family parameters. lambda = 0 is the identity truncation
/// (rho = 1, no regularization); a custom profile, when present, replaces the
/// rho_lambda family entirely.
struct RegularizerParams {
    double lambda = 1.0;
    std::optional<CustomRho> custom_rho;

    void validate() const {
        if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("regularizer: lambda must be >= 0");
    }
};

// ---------------------------------------------------------------------------
// The rho_lambda family: rho_lambda(t) = 1 / sqrt(1 + lambda^2 t^2).

inline double rho_eval(double lambda, double t) {
    const double lt = lambda * t;
    return 1.0 / std::sqrt(1.0 + lt * lt);
}

/// rho_lambda'(t) = -lambda^2 t rho_lambda(t)^3.
inline double rho_deriv(double lambda, double t) {
    const double r = rho_eval(lambda, t);
    return -lambda * lambda * t * r * r * r;
}

/// alpha_lambda(t) = rho_lambda(t) t, bounded by 1/lambda.
inline double alpha_eval(double lambda, double t) { return rho_eval(lambda, t) * t; }

/// Inverse of alpha_lambda by safeguarded Newton iteration (bisection fallback).
/// Tolerance 1e-12 relative, at most 200 iterations.
inline double alpha_invert(double lambda, double s) {
    if (!(lambda > 0.0)) throw DomainError("alpha_invert: lambda must be > 0");
    if (!(std::abs(s) * lambda < 1.0))
        throw OutOfRangeError("alpha_invert: |s| must be < 1/lambda (range of alpha_lambda)");
    if (s == 0.0) return 0.0;
    const double sign = s < 0.0 ? -1.0 : 1.0;
    const double target = std::abs(s);
    double lo = 0.0, hi = std::max(target, 1.0);
    while (alpha_eval(lambda, hi) < target) {
        hi *= 2.0;
        if (!std::isfinite(hi)) throw OutOfRangeError("alpha_invert: target too close to 1/lambda");
    }
    double t = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        const double f = alpha_eval(lambda, t) - target;
        if (f > 0.0)
            hi = t;
        else
            lo = t;
        const double r = rho_eval(lambda, t);
        const double df = r * r * r;
        double next = t - f / df;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        const bool done = std::abs(next - t) <= 1e-12 * std::max(1.0, std::abs(next)) || hi - lo <= 1e-15 * hi;
        t = next;
        if (done) break;
    }
    return sign * t;
}

// ---------------------------------------------------------------------------
// Audit of a custom profile against sup|x rho(x)| + sup|x rho'(x)| < infinity.

struct RhoAudit {
    bool passed = false;
    double sup_x_rho = 0.0;
    double sup_x_rho_prime = 0.0;
    double rho_prime_at_zero = 0.0;
    double max_derivative_mismatch = 0.0;
    std::string reason;
};

/// Samples the profile on [-R, R] for R = 10, 100, 1000, 10000; the suprema
/// must stop growing (ratio between the last two ranges <= 1.05), rho'(0) must
/// vanish, and the declared derivative must agree with central differences.
inline RhoAudit audit_rho(const std::function<double(double)>& rho, const std::function<double(double)>& drho) {
    RhoAudit a;
    std::array<double, 4> sup_r{}, sup_d{};
    const std::array<double, 4> ranges{10.0, 100.0, 1000.0, 10000.0};
    for (std::size_t r = 0; r < ranges.size(); ++r) {
        const int samples = 20001;
        for (int i = 0; i < samples; ++i) {
            // Geometric spacing resolves both the core and the far tail.
            const double u = double(i) / (samples - 1);
            const double x = ranges[r] * (std::expm1(6.0 * u) / std::expm1(6.0));
            for (double s : {x, -x}) {
                const double v = rho(s), d = drho(s);
                if (!std::isfinite(v) || !std::isfinite(d)) {
                    a.reason = "non-finite profile value";
                    return a;
                }
                sup_r[r] = std::max(sup_r[r], std::abs(s * v));
                sup_d[r] = std::max(sup_d[r], std::abs(s * d));
                if (r == 0 && i % 50 == 0) {
                    const double h = 1e-5 * std::max(1.0, std::abs(s));
                    const double fd = (rho(s + h) - rho(s - h)) / (2.0 * h);
                    a.max_derivative_mismatch =
                        std::max(a.max_derivative_mismatch, std::abs(fd - d) / std::max(1.0, std::abs(d)));
                }
            }
        }
    }
    a.sup_x_rho = sup_r.back();
    a.sup_x_rho_prime = sup_d.back();
    a.rho_prime_at_zero = drho(0.0);
    const auto grows = [](double prev, double last) { return last > 1.05 * prev + 1e-300; };
    if (grows(sup_r[2], sup_r[3]))
        a.reason = "sup |x rho(x)| grows with the sampling range";
    else if (grows(sup_d[2], sup_d[3]))
        a.reason = "sup |x rho'(x)| grows with the sampling range";
    else if (std::abs(a.rho_prime_at_zero) > 1e-12)
        a.reason = "rho'(0) != 0";
    else if (a.max_derivative_mismatch > 1e-5)
        a.reason = "declared derivative disagrees with finite differences";
    else
        a.passed = true;
    return a;
}

/// Named profiles accepted by the configuration layer.
inline std::optional<CustomRho> named_rho(const std::string& tag) {
    if (tag == "inverse_sqrt")
        return CustomRho{tag, [](double t) { return rho_eval(1.0, t); }, [](double t) { return rho_deriv(1.0, t); }};
    if (tag == "rational")
        return CustomRho{tag, [](double t) { return 1.0 / (1.0 + t * t); },
                         [](double t) { return -2.0 * t / ((1.0 + t * t) * (1.0 + t * t)); }};
    if (tag == "gaussian")
        return CustomRho{tag, [](double t) { return std::exp(-t * t); }, [](double t) { return -2.0 * t * std::exp(-t * t); }};
    if (tag == "identity") return CustomRho{tag, [](double) { return 1.0; }, [](double) { return 0.0; }};
    if (tag == "abs_kink")
        return CustomRho{tag, [](double t) { return 1.0 / (1.0 + std::abs(t)); },
                         [](double t) { return -(t < 0 ? -1.0 : 1.0) / ((1.0 + std::abs(t)) * (1.0 + std::abs(t))); }};
    return std::nullopt;
}

// ---------------------------------------------------------------------------

/// Pointwise maps r(u) = rho(|u|) u and R(u) = r(u) (x) r(u).
class TruncationMap {
public:
    explicit TruncationMap(RegularizerParams params) : p_(std::move(params)) {
        p_.validate();
        if (p_.custom_rho) {
            if (!p_.custom_rho->rho || !p_.custom_rho->derivative)
                throw ConfigError("regularizer: custom rho needs both profile and derivative");
            const RhoAudit audit = audit_rho(p_.custom_rho->rho, p_.custom_rho->derivative);
            if (!audit.passed)
                throw DomainError("regularizer: custom rho '" + p_.custom_rho->tag + "' rejected: " + audit.reason);
        }
    }

    const RegularizerParams& params() const { return p_; }
    bool is_identity() const { return !p_.custom_rho && p_.lambda == 0.0; }

    double rho(double s) const {
        if (p_.custom_rho) return p_.custom_rho->rho(s);
        return rho_eval(p_.lambda, s);
    }
    double rho_prime(double s) const {
        if (p_.custom_rho) return p_.custom_rho->derivative(s);
        return rho_deriv(p_.lambda, s);
    }

    /// sup over s of rho(s); equals 1 for the rho_lambda family.
    double rho_sup() const {
        if (!p_.custom_rho) return 1.0;
        double m = 0.0;
        for (int i = 0; i <= 20000; ++i) m = std::max(m, std::abs(rho(1e-3 * i)));
        return m;
    }

    std::array<double, 3> r(const std::array<double, 3>& u) const {
        const double s = std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
        const double f = rho(s);
        return {f * u[0], f * u[1], f * u[2]};
    }

    /// Jacobian D r(u) = rho(|u|) I + rho'(|u|) u u^T / |u|.
    Eigen::Matrix3d jacobian_r(const std::array<double, 3>& u) const {
        const Eigen::Vector3d x(u[0], u[1], u[2]);
        const double s = x.norm();
        Eigen::Matrix3d J = rho(s) * Eigen::Matrix3d::Identity();
        if (s > 0.0) J += rho_prime(s) * x * x.transpose() / s;
        return J;
    }

    /// Operator norm of D R(u): h -> (Dr h) r^T + r (Dr h)^T, with the
    /// Frobenius norm on 3x3 matrices.
    double jacobian_R_norm(const std::array<double, 3>& u) const {
        const Eigen::Matrix3d J = jacobian_r(u);
        const auto rv = r(u);
        const Eigen::Vector3d rr(rv[0], rv[1], rv[2]);
        Eigen::Matrix<double, 9, 3> M;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                for (int k = 0; k < 3; ++k) M(3 * i + j, k) = J(i, k) * rr(j) + rr(i) * J(j, k);
        const Eigen::Matrix3d G = M.transpose() * M;
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(G, Eigen::EigenvaluesOnly);
        return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
    }

    /// Measured sup_{|u| <= s_max} ||D R(u)||, by radial symmetry sampled on u = s e_1.
    double lipschitz_R(double s_max, int samples = 20001) const {
        double m = 0.0;
        for (int i = 0; i < samples; ++i) {
            const double s = s_max * double(i) / (samples - 1);
            m = std::max(m, jacobian_R_norm({s, 0.0, 0.0}));
        }
        return m;
    }

    /// Sampling range that covers the whole sup for the rho_lambda family.
    double lipschitz_R() const {
        if (is_identity()) return std::numeric_limits<double>::infinity();
        const double scale = p_.custom_rho ? 100.0 : 100.0 / p_.lambda;
        return lipschitz_R(scale);
    }

private:
    RegularizerParams p_;
};

/// Pointwise r(u) of a physical vector field.
inline VectorField truncate(const VectorField& u, const TruncationMap& map) {
    if (!u.is_physical()) throw ConfigError("truncate: physical representation required");
    VectorField out = VectorField::zeros(u.grid());
    auto a = u[0].values(), b = u[1].values(), c = u[2].values();
    auto x = out[0].values(), y = out[1].values(), z = out[2].values();
    spectral::for_each_point(u.grid(), [&](std::size_t i) {
        const double s = std::sqrt(a[i] * a[i] + b[i] * b[i] + c[i] * c[i]);
        const double f = map.rho(s);
        x[i] = f * a[i];
        y[i] = f * b[i];
        z[i] = f * c[i];
    });
    return out;
}

inline VectorField truncate(const VectorField& u, const RegularizerParams& params) {
    return truncate(u, TruncationMap(params));
}

/// Pointwise R(u) = r(u) (x) r(u) of a physical vector field.
inline TensorField tensor_R(const VectorField& u, const TruncationMap& map) {
    const VectorField r = truncate(u, map);
    TensorField t = TensorField::zeros(u.grid());
    for (int i = 0; i < 3; ++i)
        for (int j = i; j < 3; ++j) {
            auto ri = r[i].values(), rj = r[j].values();
            auto o = t(i, j).values();
            spectral::for_each_point(u.grid(), [&](std::size_t p) { o[p] = ri[p] * rj[p]; });
        }
    return t;
}

inline TensorField tensor_R(const VectorField& u, const RegularizerParams& params) {
    return tensor_R(u, TruncationMap(params));
}

/// Spectral divergence DIV(R) of a symmetric tensor: (DIV R)_i = sum_j d_j R_ij.
inline VectorField tensor_divergence(const TensorField& spectral_tensor) {
    const GridSpec& g = spectral_tensor.grid();
    const spectral::Wavenumbers w(g);
    VectorField out = VectorField::zeros(g, Representation::spectral);
    for (int i = 0; i < 3; ++i) {
        auto o = out[i].coeffs();
        auto t0 = spectral_tensor(i, 0).coeffs(), t1 = spectral_tensor(i, 1).coeffs(), t2 = spectral_tensor(i, 2).coeffs();
        spectral::for_each_mode(g, [&](std::size_t idx, int mx, int my, int mz) {
            o[idx] = Complex(0.0, 1.0) * (w.deriv[std::size_t(mx)] * t0[idx] + w.deriv[std::size_t(my)] * t1[idx] +
                                          w.deriv[std::size_t(mz)] * t2[idx]);
        });
    }
    return out;
}

inline TensorField to_spectral(const TensorField& t) {
    TensorField out;
    parallel::for_blocks(6, [&](int s) { out.unique(s) = spectral::to_spectral(t.unique(s)); });
    return out;
}

/// DIV(R o v) in spectral form, optionally Leray projected. v may be in either representation.
inline VectorField convective_div(const VectorField& v, const TruncationMap& map, bool project = false) {
    const VectorField phys = spectral::to_physical(v);
    TensorField t = to_spectral(tensor_R(phys, map));
    if (v.grid().dealias)
        for (int s = 0; s < 6; ++s) spectral::dealias(t.unique(s));
    VectorField out = tensor_divergence(t);
    return project ? spectral::leray_project(out) : out;
}

inline VectorField convective_div(const VectorField& v, const RegularizerParams& params, bool project = false) {
    return convective_div(v, TruncationMap(params), project);
}

/// Advective evaluation (r(v) . grad) r(v): pointwise products of r(v) with its
/// spectral gradient. Returned in spectral form.
inline VectorField convective_advective(const VectorField& v, const TruncationMap& map) {
    const VectorField phys = spectral::to_physical(v);
    const VectorField r = truncate(phys, map);
    const VectorField rhat = spectral::to_spectral(r);
    VectorField out = VectorField::zeros(v.grid());
    for (int i = 0; i < 3; ++i) {
        auto o = out[i].values();
        for (int j = 0; j < 3; ++j) {
            const ScalarField d = spectral::to_physical(spectral::partial(rhat[i], j));
            auto dv = d.values();
            auto rj = r[j].values();
            spectral::for_each_point(v.grid(), [&](std::size_t p) { o[p] += rj[p] * dv[p]; });
        }
    }
    return spectral::to_spectral(out);
}

}  // namespace rns
