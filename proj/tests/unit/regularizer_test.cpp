#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "rns/initial_data.hpp"
#include "rns/regularizer.hpp"

using namespace rns;

namespace {

GridSpec grid(int n = 16) {
    GridSpec g;
    g.n = n;
    return g;
}

RegularizerParams lam(double l) {
    RegularizerParams p;
    p.lambda = l;
    return p;
}

}  // namespace

TEST(Rho, ClosedFormValues) {
    for (double l : {0.0, 0.3, 1.0, 7.0}) EXPECT_EQ(rho_eval(l, 0.0), 1.0);
    EXPECT_NEAR(rho_eval(1.0, 1.0), 1.0 / std::sqrt(2.0), 1e-15);
    EXPECT_LT(rho_eval(1.0, 3.0), rho_eval(0.5, 3.0));
    EXPECT_LT(rho_eval(0.5, 3.0), rho_eval(0.25, 3.0));
    EXPECT_LT(rho_eval(0.25, 3.0), 1.0);
}

TEST(Rho, DerivativeClosedForm) {
    for (double l : {0.0, 0.5, 2.0}) EXPECT_EQ(rho_deriv(l, 0.0), 0.0);
    EXPECT_NEAR(rho_deriv(1.0, 1.0), -std::pow(2.0, -1.5), 1e-15);
    double sup = 0.0;
    for (int i = -200000; i <= 200000; ++i) {
        const double t = i * 1e-3;
        sup = std::max(sup, std::abs(t * rho_deriv(1.0, t)));
    }
    EXPECT_TRUE(std::isfinite(sup));
    EXPECT_LE(sup, 1.0);
}

TEST(Rho, FiniteDifferenceIsSecondOrder) {
    const double t = 0.7;
    const auto fd = [&](double h) { return (rho_eval(1.0, t + h) - rho_eval(1.0, t - h)) / (2.0 * h); };
    const double e3 = std::abs(fd(1e-3) - rho_deriv(1.0, t));
    const double e4 = std::abs(fd(1e-4) - rho_deriv(1.0, t));
    EXPECT_NEAR(e3 / e4, 100.0, 5.0);
}

TEST(Rho, BoundsAndLambdaMonotonicity) {
    for (int i = 0; i <= 2000; ++i) {
        const double t = -50.0 + 0.05 * i;
        double prev = 1.0;
        for (double l : {0.1, 0.5, 1.0, 2.0, 5.0}) {
            const double r = rho_eval(l, t);
            EXPECT_GT(r, 0.0);
            EXPECT_LE(r, 1.0);
            EXPECT_LE(r, prev);
            prev = r;
        }
    }
}

TEST(Alpha, InvertRoundTripAndRange) {
    EXPECT_EQ(alpha_invert(1.0, 0.0), 0.0);
    const double s = alpha_eval(1.0, 2.5);
    EXPECT_NEAR(alpha_invert(1.0, s), 2.5, 1e-10);
    EXPECT_NEAR(alpha_invert(2.0, -0.3), -alpha_invert(2.0, 0.3), 1e-12);
    EXPECT_THROW(alpha_invert(1.0, 1.0), OutOfRangeError);
    EXPECT_THROW(alpha_invert(0.5, -2.5), OutOfRangeError);
    double prev = -INFINITY;
    for (int i = -99; i <= 99; ++i) {
        const double t = alpha_invert(1.0, i / 100.0);
        EXPECT_GT(t, prev);
        EXPECT_NEAR(alpha_eval(1.0, t), i / 100.0, 1e-12);
        prev = t;
    }
}

TEST(Truncate, ZeroAndConstant) {
    const GridSpec g = grid(8);
    const auto z = truncate(VectorField::zeros(g), lam(1.0));
    for (int c = 0; c < 3; ++c)
        for (double v : z[c].values()) EXPECT_EQ(v, 0.0);
    const auto u = VectorField::sample(g, [](double, double, double) { return std::array<double, 3>{1.0, 0.0, 0.0}; });
    const auto r = truncate(u, lam(1.0));
    for (double v : r[0].values()) EXPECT_NEAR(v, 1.0 / std::sqrt(2.0), 1e-15);
    for (double v : r[1].values()) EXPECT_EQ(v, 0.0);
    const auto R = tensor_R(u, lam(1.0));
    for (double v : R(0, 0).values()) EXPECT_NEAR(v, 0.5, 1e-15);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            if (i || j)
                for (double v : R(i, j).values()) EXPECT_EQ(v, 0.0);
}

TEST(Truncate, PointwiseBoundsOnRandomFields) {
    const GridSpec g = grid(16);
    const auto u = spectral::to_physical(initial::random_unit(g, 4, 3, 40.0));
    for (double l : {0.25, 1.0, 3.0}) {
        const auto r = truncate(u, lam(l));
        const auto R = tensor_R(u, lam(l));
        for (std::size_t i = 0; i < g.physical_size(); ++i) {
            const double uu = std::hypot(u[0].values()[i], u[1].values()[i], u[2].values()[i]);
            const double rr = std::hypot(r[0].values()[i], r[1].values()[i], r[2].values()[i]);
            EXPECT_LE(rr, std::min(1.0 / l, uu) * (1.0 + 1e-14));
            double fro = 0.0;
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) fro += R(a, b).values()[i] * R(a, b).values()[i];
            EXPECT_LE(std::sqrt(fro), std::min(1.0 / (l * l), uu * uu) * (1.0 + 1e-14));
        }
        // ||R o u||_1 <= ||rho||_inf^2 ||u||_2^2 with ||rho||_inf = 1
        double l1 = 0.0;
        for (std::size_t i = 0; i < g.physical_size(); ++i) {
            double fro = 0.0;
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) fro += R(a, b).values()[i] * R(a, b).values()[i];
            l1 += std::sqrt(fro);
        }
        l1 *= g.cell_volume();
        const double n2 = spectral::l2_norm(u);
        EXPECT_LE(l1, n2 * n2 * (1.0 + 1e-12));
    }
}

TEST(Truncate, JacobianMatchesFiniteDifferences) {
    const TruncationMap map(lam(0.8));
    std::mt19937 rng(5);
    std::normal_distribution<double> nd(0.0, 2.0);
    for (int s = 0; s < 50; ++s) {
        const std::array<double, 3> u{nd(rng), nd(rng), nd(rng)};
        const Eigen::Matrix3d J = map.jacobian_r(u);
        for (int j = 0; j < 3; ++j) {
            auto up = u, um = u;
            const double h = 1e-6;
            up[std::size_t(j)] += h;
            um[std::size_t(j)] -= h;
            const auto rp = map.r(up), rm = map.r(um);
            for (int i = 0; i < 3; ++i) EXPECT_NEAR(J(i, j), (rp[std::size_t(i)] - rm[std::size_t(i)]) / (2 * h), 1e-8);
        }
    }
}

TEST(Truncate, LipschitzBoundDominatesSampledQuotients) {
    const TruncationMap map(lam(1.0));
    const double lip = map.lipschitz_R();
    EXPECT_TRUE(std::isfinite(lip));
    std::mt19937 rng(9);
    std::normal_distribution<double> nd(0.0, 3.0);
    const auto R = [&](const std::array<double, 3>& u) {
        const auto r = map.r(u);
        std::array<double, 9> t{};
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) t[std::size_t(3 * i + j)] = r[std::size_t(i)] * r[std::size_t(j)];
        return t;
    };
    for (int s = 0; s < 20000; ++s) {
        const std::array<double, 3> u{nd(rng), nd(rng), nd(rng)};
        std::array<double, 3> v = u;
        for (double& x : v) x += 0.01 * nd(rng);
        const auto a = R(u), b = R(v);
        double num = 0.0, den = 0.0;
        for (std::size_t k = 0; k < 9; ++k) num += (a[k] - b[k]) * (a[k] - b[k]);
        for (std::size_t k = 0; k < 3; ++k) den += (u[k] - v[k]) * (u[k] - v[k]);
        EXPECT_LE(std::sqrt(num / den), lip * (1.0 + 1e-6));
    }
    // stable under refinement of the sampling
    EXPECT_NEAR(map.lipschitz_R(1e3, 40001) / map.lipschitz_R(1e3, 20001), 1.0, 1e-3);
}

TEST(Convective, ConstantGivesZero) {
    const GridSpec g = grid(8);
    const auto u = VectorField::sample(g, [](double, double, double) { return std::array<double, 3>{0.3, -1.0, 2.0}; });
    const auto d = convective_div(spectral::to_spectral(u), TruncationMap(lam(1.0)));
    for (int c = 0; c < 3; ++c)
        for (const Complex& z : d[c].coeffs()) EXPECT_LT(std::abs(z), 1e-9);
}

TEST(Convective, DivergenceAndAdvectiveFormsAgree) {
    // Band 3 data on N = 32: every product is resolved, and v is divergence free,
    // so div(v (x) v) and (v . grad) v coincide for the identity map.
    const GridSpec g = grid(32);
    const auto v = initial::random_bandlimited(g, 3, 0.8, 21);
    const TruncationMap id(lam(0.0));
    auto a = spectral::to_physical(convective_div(v, id));
    auto b = spectral::to_physical(convective_advective(v, id));
    double num = 0.0, den = 0.0;
    for (int c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < g.physical_size(); ++i) {
            num += std::pow(a[c].values()[i] - b[c].values()[i], 2);
            den += std::pow(b[c].values()[i], 2);
        }
    EXPECT_GT(den, 0.0);
    EXPECT_LT(std::sqrt(num / den), 1e-6);
}

TEST(Convective, ProjectedFormIsDivergenceFree) {
    const GridSpec g = grid(16);
    const auto v = initial::random_bandlimited(g, 4, 0.8, 3);
    const auto d = convective_div(v, TruncationMap(lam(1.0)), true);
    EXPECT_LT(spectral::divergence_ratio(d), 1e-12);
}

TEST(CustomRho, AuditAcceptsAdmissibleProfiles) {
    for (const char* tag : {"inverse_sqrt", "rational", "gaussian"}) {
        const auto r = named_rho(tag);
        ASSERT_TRUE(r);
        const auto a = audit_rho(r->rho, r->derivative);
        EXPECT_TRUE(a.passed) << tag << ": " << a.reason;
    }
}

TEST(CustomRho, AuditRejectsInadmissibleProfiles) {
    const auto id = named_rho("identity");
    EXPECT_FALSE(audit_rho(id->rho, id->derivative).passed);  // sup |x rho(x)| unbounded
    const auto kink = named_rho("abs_kink");
    EXPECT_FALSE(audit_rho(kink->rho, kink->derivative).passed);  // rho'(0) != 0
    const auto bad_derivative = audit_rho([](double t) { return 1.0 / (1.0 + t * t); }, [](double) { return 0.0; });
    EXPECT_FALSE(bad_derivative.passed);
}

TEST(CustomRho, TruncationMapRejectsFailedAudit) {
    RegularizerParams p;
    p.custom_rho = named_rho("identity");
    EXPECT_THROW(TruncationMap{p}, DomainError);
    p.custom_rho = named_rho("rational");
    const TruncationMap m(p);
    EXPECT_NEAR(m.rho(2.0), 0.2, 1e-15);
}
