// Desk-scale acceptance harness: one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "rns/rns.hpp"
#include "rns/runner.hpp"

using namespace rns;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = true;
    std::string detail;
};

int failures = 0;

/// Runs one criterion, prints its verdict line and the wall time against the budget.
void criterion(int id, const char* title, double budget_s, const std::function<Outcome()>& body) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    if (budget_s > 0.0 && secs > budget_s) {
        o.pass = false;
        o.detail += "; runtime budget exceeded";
    }
    if (!o.pass) ++failures;
    std::printf("%s %2d %s (%.1f s): %s\n", o.pass ? "PASS" : "FAIL", id, title, secs, o.detail.c_str());
    std::fflush(stdout);
}

std::string num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", x);
    return buf;
}

GridSpec grid(int n) {
    GridSpec g;
    g.n = n;
    return g;
}

StepperConfig golden_stepper(double dt = 1e-3) {
    StepperConfig c;
    c.dt = dt;
    c.t_end = 0.5;
    c.snapshot_stride = int(std::lround(0.02 / dt));
    return c;
}

RegularizerParams lam(double l) {
    RegularizerParams p;
    p.lambda = l;
    return p;
}

/// Structural invariants of every run, accumulated for the last criterion.
struct InvariantLog {
    double max_divergence = 0.0;
    double max_energy_increase = 0.0;
    bool mean_invariant = true;
    int runs = 0;
    std::vector<std::string> notes;

    void add(const Trajectory& tr, const std::string& label) {
        ++runs;
        max_divergence = std::max(max_divergence, tr.max_divergence);
        max_energy_increase = std::max(max_energy_increase, tr.max_energy_increase);
        if (!tr.mean_bitwise_invariant) {
            mean_invariant = false;
            notes.push_back(label + ": mean mode drifted");
        }
    }
};

InvariantLog invariants;

Trajectory run(const VectorField& u0, double eps, const RegularizerParams& p, const StepperConfig& c, const std::string& label) {
    Trajectory tr = solve(u0, eps, p, c);
    invariants.add(tr, label);
    return tr;
}

double l2_max(const Trajectory& tr) { return diag::max_of(diag::check_energy_identity(tr.ledger, diag::IdentityKind::L2)); }
double grad_max(const Trajectory& tr) { return diag::max_of(diag::check_energy_identity(tr.ledger, diag::IdentityKind::GRAD)); }

bool within(double a, double b, double rel) {
    if (a == 0.0 && b == 0.0) return true;
    return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b));
}

bool bitwise_equal(const Trajectory& a, const Trajectory& b) {
    if (a.ledger.rows != b.ledger.rows || a.snapshots.size() != b.snapshots.size()) return false;
    for (std::size_t k = 0; k < a.snapshots.size(); ++k)
        for (int c = 0; c < 3; ++c) {
            const auto x = a.snapshots[k][c].coeffs(), y = b.snapshots[k][c].coeffs();
            for (std::size_t i = 0; i < x.size(); ++i)
                if (x[i] != y[i]) return false;
        }
    return true;
}

double max_abs_diff(const ScalarField& a, const ScalarField& b, double& scale) {
    double err = 0.0;
    scale = 0.0;
    for (std::size_t i = 0; i < a.values().size(); ++i) {
        err = std::max(err, std::abs(a.values()[i] - b.values()[i]));
        scale = std::max(scale, std::abs(a.values()[i]));
    }
    return err;
}

}  // namespace

int main() {
    parallel::set_threads(3);
    const GridSpec g32 = grid(32), g64 = grid(64);
    const VectorField tg32 = initial::taylor_green(g32), tg64 = initial::taylor_green(g64);

    criterion(1, "exponent audit", 1.0, [] {
        const auto au = diag::exponent_audit();
        const auto& t = au.table;
        Outcome o;
        o.pass = au.passed && std::abs(t.r - (2.0 + 2.0 / std::sqrt(3.0))) <= 1e-15 &&
                 std::abs(t.theta - (3.0 - std::sqrt(3.0)) / 4.0) <= 1e-12;
        o.detail = "alpha=" + num(t.alpha) + " sum=" + num(t.sum) + " chain=" + num(t.chain_exponent) + " a=" + num(t.a) +
                   " serrin=" + num(t.serrin_check);
        for (const auto& [name, ok] : au.checks)
            if (!ok) o.detail += "; failed: " + name;
        return o;
    });

    // Golden run shared by criteria 2, 4, 5, 7, 8 and the thread check.
    const Trajectory golden = run(tg32, 0.0, lam(1.0), golden_stepper(), "golden");

    criterion(2, "L2 energy identity", 120.0, [&] {
        const Trajectory half = run(tg32, 0.0, lam(1.0), golden_stepper(5e-4), "golden dt/2");
        const double a = l2_max(golden), b = l2_max(half);
        Outcome o;
        o.pass = a < 1e-3 && b < 1e-3 && a >= 3.0 * b;
        o.detail = "max residual " + num(a) + " (dt), " + num(b) + " (dt/2), ratio " + num(b > 0 ? a / b : INFINITY);
        return o;
    });

    criterion(3, "weighted L2 energy identity", 120.0, [&] {
        const Trajectory w = run(tg32, 0.1, lam(1.0), golden_stepper(), "eps=0.1");
        const double a = l2_max(w);
        bool positive = true;
        for (const auto& row : w.ledger.rows) {
            if (!(row.weighted_mass > 0.0)) positive = false;
            if (row.time > 0.0 && !(row.weighted_cum > 0.0)) positive = false;
        }
        Outcome o;
        o.pass = a < 1e-3 && positive;
        o.detail = "max residual " + num(a) + ", weighted column " + (positive ? "positive" : "not positive");
        return o;
    });

    criterion(4, "gradient-flow identity", 0.0, [&] {
        const Trajectory coarse = run(tg32, 0.0, lam(1.0), golden_stepper(2e-3), "golden 2dt");
        const Trajectory fine = run(tg32, 0.0, lam(1.0), golden_stepper(5e-4), "golden dt/2");
        const double a = grad_max(coarse), b = grad_max(golden), c = grad_max(fine);
        Outcome o;
        o.pass = b < 5e-3 && a > b && b > c;
        o.detail = "max residual " + num(a) + " > " + num(b) + " > " + num(c);
        return o;
    });

    criterion(5, "renormalized identity", 0.0, [&] {
        const double rs = diag::max_of(diag::renorm_identity_check(golden, diag::HSpec::power(central_r)));
        const auto r2 = diag::renorm_defect(golden.ledger, diag::HSpec::power(2.0));
        const auto l2 = diag::l2_defect(golden.ledger);
        double agree = 0.0;
        for (std::size_t i = 0; i < r2.size(); ++i) agree = std::max(agree, std::abs(r2[i] - l2[i]));
        Outcome o;
        o.pass = rs < 5e-3 && agree <= 1e-10 && r2.size() == l2.size();
        o.detail = "residual at r* " + num(rs) + ", r=2 vs L2 identity " + num(agree);
        return o;
    });

    criterion(6, "vanishing convection", 0.0, [&] {
        const auto one = [](double) { return 1.0; };
        const auto sq = [](double s) { return s * s; };
        double worst = 0.0, worst32 = 0.0, worst64 = 0.0;
        for (std::uint64_t k = 0; k < 100; ++k) {
            const VectorField v = initial::random_bandlimited(g32, 10, 1.0, 2 * k + 1);
            const VectorField u = initial::random_bandlimited(g32, 10, 1.0, 2 * k + 2);
            const auto c = diag::convec_null_check(one, v, u);
            worst = std::max(worst, std::abs(c.value) / c.scale);
        }
        // s^2 integrand: same fields on both grids, error measured against the exact value 0
        for (std::uint64_t k = 0; k < 5; ++k) {
            const auto a = diag::convec_null_check(sq, initial::random_bandlimited(g32, 10, 1.0, 2 * k + 1),
                                                   initial::random_bandlimited(g32, 10, 1.0, 2 * k + 2));
            const auto b = diag::convec_null_check(sq, initial::random_bandlimited(g64, 10, 1.0, 2 * k + 1),
                                                   initial::random_bandlimited(g64, 10, 1.0, 2 * k + 2));
            worst32 = std::max(worst32, std::abs(a.value) / a.scale);
            worst64 = std::max(worst64, std::abs(b.value) / b.scale);
        }
        Outcome o;
        o.pass = worst < 1e-10 && worst64 <= worst32 / 4.0;
        o.detail = "f=1 worst |I|/scale " + num(worst) + " over 100 cases; f=s^2 " + num(worst32) + " (N=32) -> " +
                   num(worst64) + " (N=64)";
        return o;
    });

    // N = 64 golden run, used for the resolution checks of criteria 7 and 8.
    diag::CentralEstimateReport ce32, ce64;
    std::vector<double> cz32_2, cz32_q, cz64_2, cz64_q;
    const double q_central = 1.5 * central_r;
    const TruncationMap map1(lam(1.0));
    const auto cz_series = [&](const Trajectory& tr, std::vector<double>& a, std::vector<double>& b) {
        for (const auto& s : tr.snapshots) {
            a.push_back(cz_ratio(s, map1, 2.0));
            b.push_back(cz_ratio(s, map1, q_central));
        }
    };
    const auto t64 = Clock::now();
    {
        const Trajectory fine = run(tg64, 0.0, lam(1.0), golden_stepper(), "golden N=64");
        ce64 = diag::central_estimate_check(fine, 0.5);
        cz_series(fine, cz64_2, cz64_q);
    }
    const double secs64 = std::chrono::duration<double>(Clock::now() - t64).count();
    std::printf("     (N=64 golden run and diagnostics: %.1f s)\n", secs64);

    criterion(7, "central estimate chain", 0.0, [&] {
        ce32 = diag::central_estimate_check(golden, 0.5);
        Outcome o;
        const bool stable = within(ce32.C_emp, ce64.C_emp, 0.2) && within(ce32.C_ult, ce64.C_ult, 0.2) &&
                            within(ce32.cz_max, ce64.cz_max, 0.2) && within(ce32.sobolev_max, ce64.sobolev_max, 0.2) &&
                            within(ce32.chain_max, ce64.chain_max, 0.2);
        o.pass = ce32.links_hold && ce64.links_hold && ce32.estimate_holds && ce64.estimate_holds && stable;
        o.detail = "links " + std::string(ce32.links_hold && ce64.links_hold ? "hold" : "fail") + " on " +
                   std::to_string(ce32.snapshots.size()) + "+" + std::to_string(ce64.snapshots.size()) + " snapshots; C_emp " +
                   num(ce32.C_emp) + " -> " + num(ce64.C_emp) + ", C_ult " + num(ce32.C_ult) + " -> " + num(ce64.C_ult) +
                   ", CZ " + num(ce32.cz_max) + " -> " + num(ce64.cz_max) + ", chain " + num(ce32.chain_max) + " -> " +
                   num(ce64.chain_max);
        return o;
    });

    criterion(8, "pressure recovery and CZ ratio", 0.0, [&] {
        double dual = 0.0, eq = 0.0;
        for (double l : {0.0, 1.0}) {
            const TruncationMap map(lam(l));
            double scale = 0.0;
            const auto a = spectral::to_physical(recover_pressure(tg32, map));
            const auto b = spectral::to_physical(recover_pressure_quadratic(tg32, map, 1u << 15));
            dual = std::max(dual, max_abs_diff(a, b, scale) / scale);
            for (const auto& s : golden.snapshots) eq = std::max(eq, pressure_equation_residual(recover_pressure(s, map), s, map));
        }
        cz_series(golden, cz32_2, cz32_q);
        bool stable = cz32_2.size() == cz64_2.size();
        double worst = 0.0, sup = 0.0;
        for (std::size_t k = 0; stable && k < cz32_2.size(); ++k) {
            stable = stable && within(cz32_2[k], cz64_2[k], 0.2) && within(cz32_q[k], cz64_q[k], 0.2);
            worst = std::max({worst, std::abs(cz32_2[k] / cz64_2[k] - 1.0), std::abs(cz32_q[k] / cz64_q[k] - 1.0)});
            sup = std::max({sup, cz32_2[k], cz32_q[k], cz64_2[k], cz64_q[k]});
        }
        Outcome o;
        o.pass = dual < 1e-10 && eq < 1e-10 && stable && std::isfinite(sup);
        o.detail = "dual route " + num(dual) + ", equation residual " + num(eq) + ", CZ q=2 " + num(cz32_2.back()) +
                   ", q=3r/2 " + num(cz32_q.back()) + ", max N-drift " + num(worst) + ", sup " + num(sup);
        return o;
    });

    criterion(9, "uniqueness probe", 0.0, [&] {
        const auto zero = uniqueness_probe(tg32, 0.0, 0.0, lam(1.0), golden_stepper());
        const auto pert = uniqueness_probe(tg32, 1e-8, 0.0, lam(1.0), golden_stepper());
        Outcome o;
        o.pass = zero.bitwise_identical && pert.slope <= 1.2 * pert.bound && pert.envelope_holds;
        o.detail = std::string("delta=0 ") + (zero.bitwise_identical ? "bitwise identical" : "differs") + ", delta=1e-8 slope " +
                   num(pert.slope) + " vs bound " + num(pert.bound);
        return o;
    });

    criterion(10, "eps sweep", 600.0, [&] {
        limit::SweepPlan plan;
        plan.axis = limit::Axis::eps;
        plan.values = {1e-1, 1e-2, 1e-3};
        plan.stepper = golden_stepper();
        plan.params = lam(1.0);
        auto res = limit::run_sweep(tg32, plan);
        for (const auto& t : res.runs) invariants.add(t, "eps sweep");
        if (res.reference) invariants.add(*res.reference, "eps sweep reference");
        const auto& rep = res.report;
        double first = rep.entries.empty() ? 0.0 : rep.entries.front().sqrt_eps_weighted, mx = 0.0;
        for (const auto& e : rep.entries) mx = std::max(mx, e.sqrt_eps_weighted);
        Outcome o;
        o.pass = !rep.aborted && rep.entries.size() == 3 && rep.all_monotone && mx <= 2.0 * first;
        o.detail = std::string(rep.all_monotone ? "gaps monotone" : "gaps not monotone") + ", linf_l2 rate " + num(rep.rates[0]) +
                   ", sqrt(eps)||v||_w max/first " + num(first > 0 ? mx / first : 0.0);
        return o;
    });

    criterion(11, "lambda sweep", 900.0, [&] {
        limit::SweepPlan plan;
        plan.axis = limit::Axis::lambda;
        plan.values = {1.0, 0.5, 0.25, 0.125};
        plan.stepper = golden_stepper();
        auto res = limit::run_sweep(tg32, plan);
        for (const auto& t : res.runs) invariants.add(t, "lambda sweep");
        const auto& rep = res.report;
        Outcome o;
        if (rep.aborted || !res.reference) return Outcome{false, "sweep aborted: " + rep.abort_reason};
        invariants.add(*res.reference, "lambda sweep limit");
        const double ident = l2_max(*res.reference);
        const auto le32 = limit::limit_energy_estimate_check(*res.reference);
        const Trajectory limit64 = run(tg64, 0.0, lam(0.0), golden_stepper(), "limit N=64");
        const auto le64 = limit::limit_energy_estimate_check(limit64);
        const bool finite = std::isfinite(le32.C_emp) && std::isfinite(le64.C_emp) && le32.C_emp > 0.0;
        o.pass = rep.entries.size() == 4 && rep.all_monotone && ident < 1e-3 && finite && within(le32.C_emp, le64.C_emp, 0.2) &&
                 le32.hessian_dominates;
        o.detail = std::string(rep.all_monotone ? "gaps monotone" : "gaps not monotone") + ", rates " + num(rep.rates[0]) + "/" +
                   num(rep.rates[1]) + "/" + num(rep.rates[2]) + "/" + num(rep.rates[3]) + "/" + num(rep.rates[4]) +
                   ", limit identity " + num(ident) + ", C_emp " + num(le32.C_emp) + " -> " + num(le64.C_emp) + " (N=64)";
        return o;
    });

    criterion(12, "tightness round trip", 5.0, [] {
        const auto geo = cli::parse_family_file(std::string(RNS_FIXTURE_DIR) + "/geometric_family.json");
        const auto w = tightness::is_tight_witness(geo.family, geo.space, 20);
        Outcome o;
        if (!w.tight) return Outcome{false, "geometric family reported non-tight"};
        const auto tr = tightness::build_tightener(geo.family, geo.space, w);
        const auto cv = tightness::tightness_from_weight(tr.weight, geo.family, geo.space, 20);
        bool converse = cv.all_hold && cv.rows.size() == 20;
        for (const auto& row : cv.rows) converse = converse && row.certified && row.tail_norm <= 2.0 / row.n;
        const auto bump = cli::parse_family_file(std::string(RNS_FIXTURE_DIR) + "/shifting_bump_family.json");
        bool never = true;
        for (std::size_t budget : {std::size_t(10), std::size_t(1000), std::size_t(100000), std::size_t(1000000)})
            never = never && !tightness::is_tight_witness(bump.family, bump.space, 20, budget).tight;
        o.pass = tr.sup_weighted_norm <= 2.0 + 1e-12 && converse && never;
        o.detail = "sup ||t u|| " + num(tr.sup_weighted_norm) + ", converse " + (converse ? "holds" : "fails") +
                   ", shifting bump " + (never ? "non-tight at every budget" : "reported tight");
        return o;
    });

    criterion(13, "structural invariants", 0.0, [&] {
        Trajectory serial;
        {
            parallel::set_threads(1);
            serial = solve(tg32, 0.0, lam(1.0), golden_stepper());
            parallel::set_threads(3);
        }
        invariants.add(serial, "golden 1 thread");
        const bool det = bitwise_equal(serial, golden);
        Outcome o;
        o.pass = invariants.max_divergence <= 1e-10 && invariants.max_energy_increase <= 1e-12 && invariants.mean_invariant && det;
        o.detail = std::to_string(invariants.runs) + " runs: divergence " + num(invariants.max_divergence) + ", energy increase " +
                   num(invariants.max_energy_increase) + ", mean " + (invariants.mean_invariant ? "bitwise invariant" : "drifted") +
                   ", 1 vs 3 threads " + (det ? "bitwise identical" : "differ");
        for (const auto& n : invariants.notes) o.detail += "; " + n;
        return o;
    });

    std::printf("%s: %d criteria failed\n", failures ? "FAIL" : "PASS", failures);
    return failures ? 1 : 0;
}
