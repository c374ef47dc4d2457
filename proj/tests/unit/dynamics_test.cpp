#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "rns/dynamics.hpp"
#include "rns/initial_data.hpp"
#include "rns/parallel.hpp"

using namespace rns;

namespace {

GridSpec grid(int n) {
    GridSpec g;
    g.n = n;
    return g;
}

StepperConfig cfg(double dt, double t_end, int stride = 10) {
    StepperConfig c;
    c.dt = dt;
    c.t_end = t_end;
    c.snapshot_stride = stride;
    return c;
}

RegularizerParams lam(double l) {
    RegularizerParams p;
    p.lambda = l;
    return p;
}

double max_coeff(const VectorField& v) {
    double m = 0.0;
    for (int c = 0; c < 3; ++c)
        for (const Complex& z : v[c].coeffs()) m = std::max(m, std::abs(z));
    return m;
}

}  // namespace

TEST(Stepper, ValidatesTimeGrid) {
    EXPECT_THROW(cfg(0.0, 1.0).validate(), ConfigError);
    EXPECT_THROW(cfg(0.3, 1.0).validate(), ConfigError);
    EXPECT_NO_THROW(cfg(0.25, 1.0).validate());
    EXPECT_EQ(cfg(1e-3, 0.5).steps(), 500);
    EXPECT_EQ(parse_scheme("imex_euler"), Scheme::imex_euler);
    EXPECT_THROW(parse_scheme("rk4"), ConfigError);
}

TEST(Solve, ZeroDataStaysZero) {
    const auto tr = solve(VectorField::zeros(grid(8)), 0.0, lam(1.0), cfg(0.01, 0.1));
    ASSERT_EQ(tr.ledger.rows.size(), 11u);
    for (const auto& row : tr.ledger.rows) {
        EXPECT_EQ(row.kinetic, 0.0);
        EXPECT_EQ(row.dissipation_cum, 0.0);
        EXPECT_EQ(row.convective_work_cum, 0.0);
    }
    for (const auto& s : tr.snapshots) EXPECT_EQ(max_coeff(s), 0.0);
}

TEST(Solve, ShearFlowDecaysLikeHeatKernel) {
    // u = (a sin(m y), 0, 0): r(u) (x) r(u) depends on y only through its xx entry,
    // so DIV R = 0 and the flow is an exact Stokes solution a e^{-m^2 t} sin(m y).
    const GridSpec g = grid(16);
    for (int m : {1, 3}) {
        const double a = 2.0;
        const auto u0 = VectorField::sample(g, [&](double, double y, double) {
            return std::array<double, 3>{a * std::sin(m * y), 0.0, 0.0};
        });
        for (Scheme s : {Scheme::imex_euler, Scheme::imex_bdf2}) {
            StepperConfig c = cfg(0.01, 0.2);
            c.scheme = s;
            const auto tr = solve(u0, 0.0, lam(1.0), c);
            const VectorField vT = spectral::to_physical(tr.snapshots.back());
            double err = 0.0;
            const double t = tr.snapshot_times.back();
            EXPECT_DOUBLE_EQ(t, 0.2);
            const auto exact = VectorField::sample(g, [&](double, double y, double) {
                return std::array<double, 3>{a * std::exp(-m * m * t) * std::sin(m * y), 0.0, 0.0};
            });
            for (int comp = 0; comp < 3; ++comp)
                for (std::size_t i = 0; i < g.physical_size(); ++i)
                    err = std::max(err, std::abs(vT[comp].values()[i] - exact[comp].values()[i]));
            EXPECT_LT(err, 1e-12) << "m = " << m << " scheme " << scheme_name(s);
            // kinetic energy (1/2)||u||^2 = (1/4) a^2 |box| e^{-2 m^2 t}
            const double box = std::pow(g.box_length, 3);
            EXPECT_NEAR(tr.ledger.rows.back().kinetic, 0.25 * a * a * box * std::exp(-2.0 * m * m * t), 1e-9);
        }
    }
}

TEST(Solve, TaylorGreenStructuralInvariants) {
    const GridSpec g = grid(16);
    const auto tr = solve(initial::taylor_green(g), 0.0, lam(1.0), cfg(0.005, 0.2));
    EXPECT_LE(tr.max_energy_increase, 0.0);
    EXPECT_LT(tr.max_divergence, 1e-12);
    EXPECT_TRUE(tr.mean_bitwise_invariant);
    for (std::size_t i = 1; i < tr.ledger.rows.size(); ++i) {
        EXPECT_LE(tr.ledger.rows[i].kinetic, tr.ledger.rows[i - 1].kinetic);
        EXPECT_GE(tr.ledger.rows[i].dissipation_cum, tr.ledger.rows[i - 1].dissipation_cum);
    }
    EXPECT_EQ(tr.snapshots.size(), tr.snapshot_times.size());
    EXPECT_EQ(tr.snapshot_times.front(), 0.0);
}

TEST(Solve, ThreadCountDoesNotChangeResults) {
    const GridSpec g = grid(16);
    const auto u0 = initial::random_bandlimited(g, 3, 1.0, 11);
    Trajectory a, b;
    {
        parallel::ScopedThreads one(1);
        a = solve(u0, 0.05, lam(1.0), cfg(0.01, 0.05));
    }
    {
        parallel::ScopedThreads three(3);
        b = solve(u0, 0.05, lam(1.0), cfg(0.01, 0.05));
    }
    ASSERT_EQ(a.ledger.rows.size(), b.ledger.rows.size());
    for (std::size_t i = 0; i < a.ledger.rows.size(); ++i) EXPECT_EQ(a.ledger.rows[i], b.ledger.rows[i]);
    for (int c = 0; c < 3; ++c) {
        const auto x = a.snapshots.back()[c].coeffs(), y = b.snapshots.back()[c].coeffs();
        for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(x[i], y[i]);
    }
}

TEST(Solve, RejectsNegativeEps) {
    EXPECT_THROW(solve(VectorField::zeros(grid(8)), -1.0, lam(1.0), cfg(0.01, 0.1)), ConfigError);
}

TEST(Pressure, ZeroAndShearGiveZero) {
    const GridSpec g = grid(16);
    const TruncationMap map(lam(1.0));
    const auto p0 = recover_pressure(VectorField::zeros(g), map);
    for (const Complex& z : p0.coeffs()) EXPECT_EQ(z, Complex(0.0, 0.0));
    const auto shear = VectorField::sample(g, [](double, double y, double) { return std::array<double, 3>{std::sin(y), 0.0, 0.0}; });
    for (const Complex& z : recover_pressure(shear, map).coeffs()) EXPECT_LT(std::abs(z), 1e-12);
}

TEST(Pressure, DirectConvolutionAgreesOnTaylorGreen) {
    const GridSpec g = grid(16);
    const auto u = initial::taylor_green(g);
    for (double l : {0.0, 1.0}) {
        const TruncationMap map(lam(l));
        const auto a = spectral::to_physical(recover_pressure(u, map));
        const auto b = spectral::to_physical(recover_pressure_quadratic(u, map));
        double err = 0.0, scale = 0.0;
        for (std::size_t i = 0; i < g.physical_size(); ++i) {
            err = std::max(err, std::abs(a.values()[i] - b.values()[i]));
            scale = std::max(scale, std::abs(a.values()[i]));
        }
        EXPECT_GT(scale, 0.0);
        EXPECT_LT(err, 1e-10 * std::max(1.0, scale));
        EXPECT_LT(pressure_equation_residual(recover_pressure(u, map), u, map), 1e-12);
    }
}

TEST(Pressure, TaylorGreenClosedForm) {
    // For u = (sin x cos y cos z, -cos x sin y cos z, 0) the pressure of the
    // untruncated problem is (1/16)(cos 2x + cos 2y)(cos 2z + 2).
    const GridSpec g = grid(16);
    const auto p = spectral::to_physical(recover_pressure(initial::taylor_green(g), TruncationMap(lam(0.0))));
    const auto exact = ScalarField::sample(g, [](double x, double y, double z) {
        return (std::cos(2 * x) + std::cos(2 * y)) * (std::cos(2 * z) + 2.0) / 16.0;
    });
    for (std::size_t i = 0; i < g.physical_size(); ++i) EXPECT_NEAR(p.values()[i], exact.values()[i], 1e-13);
}

TEST(WeakForm, ResidualIsSmallForComputedTrajectory) {
    const GridSpec g = grid(16);
    const auto tr = solve(initial::taylor_green(g), 0.0, lam(1.0), cfg(0.002, 0.2));
    std::vector<TestField> tests;
    for (std::uint64_t s = 0; s < 3; ++s) tests.push_back(make_test_field(g, s, 0.02, 0.18));
    const auto res = weak_residual(tr, tests);
    ASSERT_EQ(res.size(), 3u);
    for (const auto& r : res) {
        EXPECT_GT(r.scale, 0.0);
        EXPECT_LT(r.relative, 1e-4);
        ASSERT_FALSE(r.ic_gaps.empty());
        // initial data attained: the gaps shrink toward t = 0
        EXPECT_LE(r.ic_gaps.front(), r.ic_gaps.back() + 1e-15);
    }
}

TEST(Uniqueness, ZeroPerturbationIsBitwiseIdentical) {
    const GridSpec g = grid(8);
    const auto rep = uniqueness_probe(initial::taylor_green(g), 0.0, 0.0, lam(1.0), cfg(0.01, 0.05));
    EXPECT_TRUE(rep.bitwise_identical);
    for (double d : rep.gap) EXPECT_EQ(d, 0.0);
    EXPECT_THROW(uniqueness_probe(initial::taylor_green(g), -1.0, 0.0, lam(1.0), cfg(0.01, 0.05)), ConfigError);
}

TEST(Uniqueness, SmallPerturbationStaysInsideEnvelope) {
    const GridSpec g = grid(16);
    const auto rep = uniqueness_probe(initial::taylor_green(g), 1e-8, 0.0, lam(1.0), cfg(0.01, 0.1));
    EXPECT_FALSE(rep.bitwise_identical);
    EXPECT_TRUE(rep.envelope_holds);
    EXPECT_LE(rep.slope, 1.2 * rep.bound);
    EXPECT_NEAR(rep.bound, 0.5 * rep.lipschitz * rep.lipschitz, 1e-15);
}

TEST(Hessian, ClosedFormValues) {
    const std::array<double, 3> e1{1.0, 0.0, 0.0}, e2{0.0, 1.0, 0.0};
    EXPECT_DOUBLE_EQ(hessian_form({0.3, -2.0, 1.0}, {1.0, 2.0, 3.0}, 2.0), 14.0);
    // phi = |x|^3 / 3: radial second derivative 2|x|, tangential |x|
    EXPECT_DOUBLE_EQ(hessian_form({2.0, 0.0, 0.0}, e1, 3.0), 4.0);
    EXPECT_DOUBLE_EQ(hessian_form({2.0, 0.0, 0.0}, e2, 3.0), 2.0);
    EXPECT_EQ(hessian_form({0.0, 0.0, 0.0}, e1, 3.0), 0.0);
    EXPECT_THROW(hessian_form({0.0, 0.0, 0.0}, e1, 1.5), DomainError);
}

TEST(Hessian, MatchesFiniteDifferencesOfPhi) {
    std::mt19937 rng(4);
    std::normal_distribution<double> nd;
    for (double r : {1.5, 2.0, 2.25, 3.0}) {
        const auto phi = [&](const std::array<double, 3>& x) {
            return std::pow(std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]), r) / r;
        };
        for (int s = 0; s < 50; ++s) {
            const std::array<double, 3> x{nd(rng), nd(rng), nd(rng)}, u{nd(rng), nd(rng), nd(rng)};
            const double h = 1e-4;
            std::array<double, 3> xp, xm;
            for (int i = 0; i < 3; ++i) {
                xp[std::size_t(i)] = x[std::size_t(i)] + h * u[std::size_t(i)];
                xm[std::size_t(i)] = x[std::size_t(i)] - h * u[std::size_t(i)];
            }
            const double fd = (phi(xp) - 2.0 * phi(x) + phi(xm)) / (h * h);
            const double exact = hessian_form(x, u, r);
            EXPECT_NEAR(fd, exact, 1e-5 * std::max(1.0, std::abs(exact))) << "r = " << r;
        }
    }
}

TEST(Hessian, NonNegativeForExponentsAtLeastOne) {
    std::mt19937 rng(8);
    std::normal_distribution<double> nd(0.0, 5.0);
    for (int s = 0; s < 1'000'000; ++s) {
        const std::array<double, 3> x{nd(rng), nd(rng), nd(rng)}, u{nd(rng), nd(rng), nd(rng)};
        const double r = 1.0 + 3.0 * (s % 97) / 96.0;
        ASSERT_GE(hessian_form(x, u, r), 0.0);
    }
}
