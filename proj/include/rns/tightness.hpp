#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "rns/errors.hpp"
#include "rns/field.hpp"
#include "rns/spectral.hpp"

/// Tight families in L^p of a countable measure space, tightening weights, and
/// the two constructions relating them.
///
/// Points are indexed by k = 0, 1, 2, ... . Sets A_n are index prefixes
/// {0, ..., m(n) - 1}; witness sets are therefore encoded by their lengths.
/// An infinite weight value is represented by +infinity, and t * u is taken
/// to be 0 wherever u = 0.
namespace rns::tightness {

inline constexpr double inf = std::numeric_limits<double>::infinity();

/// Relative size of the neglected remainder at which tail sums stop.
inline constexpr double truncation_tolerance = 1e-14;

enum class TailLaw { counting, geometric, none };

/// Countable weighted point space: explicit weights for a finite prefix, then a
/// tail law (mu_k = 1, mu_k = q^k, or no further points).
struct DiscreteMeasureSpace {
    std::vector<double> prefix_weights;
    TailLaw tail = TailLaw::counting;
    double tail_ratio = 1.0;

    static DiscreteMeasureSpace counting() { return {}; }
    static DiscreteMeasureSpace geometric(double q) { return {{}, TailLaw::geometric, q}; }
    static DiscreteMeasureSpace finite(std::vector<double> weights) { return {std::move(weights), TailLaw::none, 1.0}; }

    void validate() const {
        for (double w : prefix_weights)
            if (!(w > 0.0) || !std::isfinite(w)) throw ConfigError("measure space: weights must be positive");
        if (tail == TailLaw::geometric && !(tail_ratio > 0.0 && tail_ratio <= 1.0))
            throw ConfigError("measure space: geometric tail ratio must lie in (0, 1]");
    }

    /// Number of points, or max size_t for an infinite index set.
    std::size_t size() const {
        return tail == TailLaw::none ? prefix_weights.size() : std::numeric_limits<std::size_t>::max();
    }
    double weight(std::size_t k) const {
        if (k < prefix_weights.size()) return prefix_weights[k];
        switch (tail) {
            case TailLaw::counting: return 1.0;
            case TailLaw::geometric: return std::pow(tail_ratio, double(k));
            case TailLaw::none: return 0.0;
        }
        return 0.0;
    }
    /// Bound q on mu_{k+1} / mu_k beyond the prefix.
    double tail_weight_ratio() const { return tail == TailLaw::geometric ? tail_ratio : 1.0; }
};

/// One element (or parametric sub-family) of a family in L^p.
struct Member {
    enum class Kind { zero, geometric, power_law, explicit_values, shifting_bump };
    Kind kind = Kind::zero;
    double amplitude = 1.0;  // c
    double ratio = 0.5;      // geometric: u_k = c ratio^k
    double exponent = 1.0;   // power_law: u_k = c (k+1)^(-exponent)
    std::vector<double> values;  // explicit_values: u_k for k < size, 0 after
    std::string label;

    static Member zero() { return {}; }
    static Member geometric(double c, double ratio) { return {Kind::geometric, c, ratio, 1.0, {}, "geometric"}; }
    static Member power_law(double c, double s) { return {Kind::power_law, c, 0.5, s, {}, "power_law"}; }
    static Member explicit_values(std::vector<double> v) { return {Kind::explicit_values, 1.0, 0.5, 1.0, std::move(v), "explicit"}; }
    /// The parametric family {c e_j : j >= 0} of unit bumps moving to infinity.
    static Member shifting_bump(double c) { return {Kind::shifting_bump, c, 0.5, 1.0, {}, "shifting_bump"}; }

    /// Value u_k (for shifting_bump: the supremum over the family at k).
    double value(std::size_t k) const {
        switch (kind) {
            case Kind::zero: return 0.0;
            case Kind::geometric: return amplitude * std::pow(ratio, double(k));
            case Kind::power_law: return amplitude * std::pow(double(k) + 1.0, -exponent);
            case Kind::explicit_values: return k < values.size() ? values[k] : 0.0;
            case Kind::shifting_bump: return amplitude;
        }
        return 0.0;
    }
};

/// Finite family F of members and its exponent p in [1, infinity].
struct FunctionFamily {
    std::vector<Member> members;
    double p = 2.0;

    void validate() const {
        if (!(p >= 1.0)) throw ConfigError("family: p must lie in [1, infinity]");
    }
};

/// Tail norm ||chi_{k >= m} u||_p and the bound on what the summation neglected.
struct TailValue {
    double value = 0.0;
    double remainder_bound = 0.0;
};

namespace detail {

/// Sum of terms a_k for k >= m where a_{k+1} <= q a_k beyond index `from`;
/// stops when the geometric remainder bound falls below the tolerance.
inline TailValue geometric_sum(const std::function<double(std::size_t)>& term, std::size_t m, std::size_t end,
                               double ratio_bound) {
    double partial = 0.0;
    std::size_t k = m;
    for (; k < end; ++k) {
        const double a = term(k);
        partial += a;
        if (ratio_bound < 1.0) {
            const double remainder = a * ratio_bound / (1.0 - ratio_bound);
            if (remainder <= truncation_tolerance * partial || a == 0.0) return {partial, remainder};
        }
        if (k - m > 50'000'000) break;
    }
    return {partial, 0.0};
}

}  // namespace detail

/// ||chi_{k >= m} u||_p for one member (sup over the sub-family for shifting bumps).
/// Throws DomainError for a member outside L^p.
inline TailValue tail_norm(const Member& u, const DiscreteMeasureSpace& space, std::size_t m, double p) {
    const std::size_t end = space.size();
    if (m >= end) return {};
    const bool infinite_p = std::isinf(p);
    using K = Member::Kind;
    switch (u.kind) {
        case K::zero: return {};
        case K::explicit_values: {
            const std::size_t stop = std::min(end, u.values.size());
            double acc = 0.0;
            for (std::size_t k = m; k < stop; ++k) {
                const double a = std::abs(u.values[k]);
                if (infinite_p)
                    acc = std::max(acc, a);
                else
                    acc += std::pow(a, p) * space.weight(k);
            }
            return {infinite_p ? acc : std::pow(acc, 1.0 / p), 0.0};
        }
        case K::shifting_bump: {
            // sup_j ||chi_{>=m} c e_j||_p = c sup_{j >= m} mu_j^(1/p)
            if (u.amplitude == 0.0) return {};
            if (infinite_p) return {std::abs(u.amplitude), 0.0};
            double sup_mu = 0.0;
            const std::size_t prefix = space.prefix_weights.size();
            for (std::size_t k = m; k < std::min(prefix, end); ++k) sup_mu = std::max(sup_mu, space.weight(k));
            if (end > prefix) sup_mu = std::max(sup_mu, space.weight(std::max(m, prefix)));
            return {std::abs(u.amplitude) * std::pow(sup_mu, 1.0 / p), 0.0};
        }
        case K::geometric: {
            const double a = std::abs(u.ratio);
            if (u.amplitude == 0.0) return {};
            if (infinite_p) {
                if (a > 1.0 && end == std::numeric_limits<std::size_t>::max())
                    throw DomainError("tail_norm: geometric member with |ratio| > 1 is not in L^inf");
                return {std::abs(u.amplitude) * std::pow(a, double(m)), 0.0};
            }
            const double q = std::pow(a, p) * space.tail_weight_ratio();
            const std::size_t prefix = space.prefix_weights.size();
            if (end == std::numeric_limits<std::size_t>::max() && q >= 1.0)
                throw DomainError("tail_norm: divergent tail (member not in L^p)");
            double acc = 0.0, rem = 0.0;
            std::size_t k = m;
            for (; k < std::min(prefix, end); ++k) acc += std::pow(std::abs(u.value(k)), p) * space.weight(k);
            if (end > prefix) {
                const auto tv = detail::geometric_sum(
                    [&](std::size_t j) { return std::pow(std::abs(u.value(j)), p) * space.weight(j); }, k, end, q);
                acc += tv.value;
                rem = tv.remainder_bound;
            }
            const double norm = std::pow(acc, 1.0 / p);
            const double bound = acc > 0.0 ? std::pow(acc + rem, 1.0 / p) - norm : std::pow(rem, 1.0 / p);
            return {norm, bound};
        }
        case K::power_law: {
            if (u.amplitude == 0.0) return {};
            if (infinite_p) return {std::abs(u.amplitude) * std::pow(double(m) + 1.0, -u.exponent), 0.0};
            const double ps = p * u.exponent;
            const std::size_t prefix = space.prefix_weights.size();
            const bool infinite_space = end == std::numeric_limits<std::size_t>::max();
            if (infinite_space && space.tail == TailLaw::counting && ps <= 1.0)
                throw DomainError("tail_norm: divergent tail (member not in L^p)");
            double acc = 0.0;
            std::size_t k = m;
            for (; k < std::min(prefix, end); ++k) acc += std::pow(std::abs(u.value(k)), p) * space.weight(k);
            if (!infinite_space) return {std::pow(acc, 1.0 / p), 0.0};
            const double cp = std::pow(std::abs(u.amplitude), p);
            double rem = 0.0;
            if (space.tail == TailLaw::geometric && space.tail_ratio < 1.0) {
                const auto tv = detail::geometric_sum(
                    [&](std::size_t j) { return std::pow(std::abs(u.value(j)), p) * space.weight(j); }, k, end,
                    space.tail_ratio);
                acc += tv.value;
                rem = tv.remainder_bound;
            } else {
                // Euler-Maclaurin for sum_{x >= x0} x^(-ps), x = k + 1. The integrand is
                // completely monotone, so the error is below the first omitted term.
                for (;; ++k) {
                    const double x0 = double(k) + 1.0;
                    const double s1 = ps, s3 = s1 * (s1 + 1.0) * (s1 + 2.0), s5 = s3 * (s1 + 3.0) * (s1 + 4.0);
                    const double s7 = s5 * (s1 + 5.0) * (s1 + 6.0);
                    const double base = std::pow(x0, -ps);
                    const double em = x0 * base / (ps - 1.0) + 0.5 * base + s1 * base / (12.0 * x0) -
                                      s3 * base / (720.0 * x0 * x0 * x0) + s5 * base / (30240.0 * std::pow(x0, 5));
                    rem = cp * s7 * base / (1209600.0 * std::pow(x0, 7));
                    if (rem <= truncation_tolerance * (acc + cp * em) || k - m > 10'000'000) {
                        acc += cp * em;
                        break;
                    }
                    acc += cp * base;
                }
            }
            const double norm = std::pow(acc, 1.0 / p);
            return {norm, std::pow(acc + rem, 1.0 / p) - norm};
        }
    }
    return {};
}

/// sup over the family of the tail norm beyond prefix m.
inline TailValue sup_tail(const FunctionFamily& F, const DiscreteMeasureSpace& space, std::size_t m) {
    TailValue best;
    for (const Member& u : F.members) {
        const TailValue t = tail_norm(u, space, m, F.p);
        if (t.value + t.remainder_bound > best.value + best.remainder_bound) best = t;
    }
    return best;
}

/// Result of the witness search.
struct Witness {
    bool tight = false;
    std::vector<std::size_t> prefix_lengths;  // m(n) for n = 1..n_max
    std::vector<double> tail_norms;           // sup tail at m(n)
    std::vector<double> tolerances;           // eps_n
    bool stabilized = false;  // family vanishes beyond the last prefix
    int failed_at = 0;        // n at which the budget was exhausted (0 if none)
    double best_tail = 0.0;   // sup tail at the budget when failing
    std::string report;
};

inline double dyadic_schedule(int n) { return std::ldexp(1.0, -n); }

/// Greedy search for prefixes A_n with sup_{u in F} ||chi_{not A_n} u||_p <= eps_n.
/// Each m(n) is the smallest admissible prefix length (ties resolved toward
/// the lowest index), so A_n is contained in A_{n+1} for a decreasing schedule.
inline Witness is_tight_witness(const FunctionFamily& F, const DiscreteMeasureSpace& space, int n_max = 20,
                                std::size_t prefix_budget = 1'000'000,
                                const std::function<double(int)>& schedule = dyadic_schedule) {
    F.validate();
    space.validate();
    Witness w;
    // Prefix sums for explicit members keep the scan linear in the support size.
    std::vector<std::vector<double>> suffix(F.members.size());
    for (std::size_t i = 0; i < F.members.size(); ++i) {
        const Member& u = F.members[i];
        if (u.kind != Member::Kind::explicit_values || std::isinf(F.p)) continue;
        const std::size_t stop = std::min(space.size(), u.values.size());
        suffix[i].assign(stop + 1, 0.0);
        for (std::size_t k = stop; k-- > 0;)
            suffix[i][k] = suffix[i][k + 1] + std::pow(std::abs(u.values[k]), F.p) * space.weight(k);
    }
    const auto sup_at = [&](std::size_t m) {
        double best = 0.0;
        for (std::size_t i = 0; i < F.members.size(); ++i) {
            double v;
            if (!suffix[i].empty())
                v = m < suffix[i].size() ? std::pow(suffix[i][m], 1.0 / F.p) : 0.0;
            else {
                const TailValue t = tail_norm(F.members[i], space, m, F.p);
                v = t.value + t.remainder_bound;
            }
            best = std::max(best, v);
        }
        return best;
    };

    const std::size_t limit = std::min(prefix_budget, space.size());
    std::size_t m = 0;
    for (int n = 1; n <= n_max; ++n) {
        const double eps = schedule(n);
        double tail = sup_at(m);
        while (tail > eps && m < limit) tail = sup_at(++m);
        if (tail > eps) {
            w.failed_at = n;
            w.best_tail = tail;
            w.report = "prefix budget " + std::to_string(prefix_budget) + " exhausted at n = " + std::to_string(n) +
                       ": sup tail norm " + std::to_string(tail) + " > " + std::to_string(eps);
            return w;
        }
        w.prefix_lengths.push_back(m);
        w.tail_norms.push_back(tail);
        w.tolerances.push_back(eps);
    }
    w.tight = true;
    w.stabilized = n_max > 0 && w.tail_norms.back() == 0.0;
    return w;
}

/// A weight t: index -> [0, infinity], stored as explicit prefix values plus a
/// constant tail value (possibly infinite).
struct TighteningWeight {
    std::vector<double> prefix;
    double tail = inf;
    std::vector<std::size_t> witness_sets;  // prefix lengths m(n), n = 1..
    double truncated_tail_bound = 0.0;      // sum_{n > n_max} n eps_n

    double operator()(std::size_t k) const { return k < prefix.size() ? prefix[k] : tail; }

    /// ess inf of t over the complement of the prefix {0..m-1}.
    double essinf_outside(std::size_t m, std::size_t space_size = std::numeric_limits<std::size_t>::max()) const {
        double e = inf;
        for (std::size_t k = m; k < std::min(prefix.size(), space_size); ++k) e = std::min(e, prefix[k]);
        if (space_size > prefix.size()) e = std::min(e, tail);
        return e;
    }
};

/// ||t u||_p for one member (sup over the sub-family for shifting bumps).
inline double weighted_norm(const TighteningWeight& t, const Member& u, const DiscreteMeasureSpace& space, double p) {
    const std::size_t M = t.prefix.size();
    const std::size_t end = std::min(space.size(), M);
    const bool infinite_p = std::isinf(p);
    const auto product = [](double tk, double uk) { return uk == 0.0 ? 0.0 : tk * std::abs(uk); };
    if (u.kind == Member::Kind::shifting_bump) {
        double s = 0.0;
        for (std::size_t k = 0; k < end; ++k)
            s = std::max(s, product(t.prefix[k], u.amplitude) * (infinite_p ? 1.0 : std::pow(space.weight(k), 1.0 / p)));
        if (space.size() > M) {
            const TailValue tv = tail_norm(u, space, M, p);
            s = std::max(s, tv.value == 0.0 ? 0.0 : t.tail * tv.value);
        }
        return s;
    }
    double acc = 0.0;
    for (std::size_t k = 0; k < end; ++k) {
        const double v = product(t.prefix[k], u.value(k));
        if (infinite_p)
            acc = std::max(acc, v);
        else
            acc += std::pow(v, p) * space.weight(k);
    }
    double tail_part = 0.0;
    if (space.size() > M) {
        const TailValue tv = tail_norm(u, space, M, p);
        tail_part = tv.value == 0.0 ? 0.0 : t.tail * tv.value;
    }
    if (infinite_p) return std::max(acc, tail_part);
    if (std::isinf(tail_part)) return inf;
    return std::pow(acc + std::pow(tail_part, p), 1.0 / p);
}

inline double sup_weighted_norm(const TighteningWeight& t, const FunctionFamily& F, const DiscreteMeasureSpace& space) {
    double s = 0.0;
    for (const Member& u : F.members) s = std::max(s, weighted_norm(t, u, space, F.p));
    return s;
}

struct TightenerReport {
    TighteningWeight weight;
    double sup_weighted_norm = 0.0;  // sup_u ||t u||_p, measured by direct summation
    double series_bound = 0.0;       // sum_{n <= n_max} n eps_n
    double truncated_tail_bound = 0.0;
    bool essinf_verified = false;    // ess inf off A_n of t >= n for every n
    bool bound_verified = false;     // measured <= series bound
};

/// t = sum_n n chi_{complement of A_n} from a successful witness.
inline TightenerReport build_tightener(const FunctionFamily& F, const DiscreteMeasureSpace& space, const Witness& w,
                                       const std::function<double(int)>& schedule = dyadic_schedule) {
    if (!w.tight) throw DomainError("build_tightener: family is not tight (" + w.report + ")");
    TightenerReport r;
    const int n_max = int(w.prefix_lengths.size());
    const std::size_t M = n_max > 0 ? w.prefix_lengths.back() : 0;
    TighteningWeight& t = r.weight;
    t.witness_sets = w.prefix_lengths;
    t.prefix.assign(M, 0.0);
    for (std::size_t k = 0; k < M; ++k)
        for (int n = 1; n <= n_max; ++n)
            if (w.prefix_lengths[std::size_t(n - 1)] <= k) t.prefix[k] += n;
    t.tail = w.stabilized ? inf : 0.5 * n_max * (n_max + 1.0);
    for (int n = 1; n <= n_max; ++n) r.series_bound += n * schedule(n);
    // sum_{n > N} n 2^-n = (N + 2) 2^-N for the dyadic schedule; generic schedules
    // are summed numerically.
    double tail_bound = 0.0;
    for (int n = n_max + 1; n <= n_max + 2000; ++n) tail_bound += n * schedule(n);
    r.truncated_tail_bound = t.truncated_tail_bound = tail_bound;
    r.sup_weighted_norm = sup_weighted_norm(t, F, space);
    r.bound_verified = r.sup_weighted_norm <= r.series_bound * (1.0 + 1e-12) + 1e-300;
    r.essinf_verified = true;
    for (int n = 1; n <= n_max; ++n)
        if (t.essinf_outside(w.prefix_lengths[std::size_t(n - 1)], space.size()) < n) r.essinf_verified = false;
    return r;
}

struct ConverseRow {
    int n = 0;
    bool certified = false;      // a finite witness set exists for this n
    std::size_t prefix_length = 0;
    double tail_norm = 0.0;      // measured sup tail norm off A_n
    double bound = 0.0;          // sup ||t u|| / n
    bool holds = false;
};

struct ConverseReport {
    double sup_weighted_norm = 0.0;
    std::vector<ConverseRow> rows;
    bool all_hold = true;
};

/// From a weight with sup ||t u||_p < infinity, sets A_n = {t < n} (as a prefix)
/// and the quantitative bound sup tail norm off A_n <= sup ||t u||_p / n.
inline ConverseReport tightness_from_weight(const TighteningWeight& t, const FunctionFamily& F,
                                            const DiscreteMeasureSpace& space, int n_max = 20) {
    F.validate();
    ConverseReport rep;
    rep.sup_weighted_norm = sup_weighted_norm(t, F, space);
    if (!std::isfinite(rep.sup_weighted_norm))
        throw DomainError("tightness_from_weight: sup ||t u|| is unbounded");
    const std::size_t visible = std::min(space.size(), t.prefix.size());
    for (int n = 1; n <= n_max; ++n) {
        ConverseRow row;
        row.n = n;
        const bool tail_ok = space.size() <= t.prefix.size() || t.tail >= n;
        if (tail_ok) {
            std::size_t m = 0;
            for (std::size_t k = visible; k-- > 0;)
                if (t.prefix[k] < n) {
                    m = k + 1;
                    break;
                }
            row.certified = true;
            row.prefix_length = m;
            row.tail_norm = sup_tail(F, space, m).value;
            row.bound = rep.sup_weighted_norm / n;
            row.holds = row.tail_norm <= row.bound * (1.0 + 1e-12) + 1e-300;
        }
        rep.all_hold = rep.all_hold && (!row.certified || row.holds);
        rep.rows.push_back(row);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Initial-data weight on the periodic box.

/// w(x) = max{1, min{|x - x_c|, t(x)}} where t tightens {|u0|} in L^2 over the
/// lattice points ordered by distance from the box center x_c.
inline ScalarField initial_weight(const VectorField& u0_any, int n_max = 200) {
    const VectorField u0 = spectral::to_physical(u0_any);
    const GridSpec& g = u0.grid();
    const int n = g.n;
    const double h = g.spacing(), c = 0.5 * g.box_length;
    const std::size_t N = g.physical_size();
    std::vector<double> dist(N);
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                const double dx = i * h - c, dy = j * h - c, dz = k * h - c;
                dist[std::size_t(i) + std::size_t(n) * (j + std::size_t(n) * k)] = std::sqrt(dx * dx + dy * dy + dz * dz);
            }
    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });

    std::vector<double> mag(N);
    auto a = u0[0].values(), b = u0[1].values(), d = u0[2].values();
    for (std::size_t q = 0; q < N; ++q) {
        const std::size_t i = order[q];
        mag[q] = std::sqrt(a[i] * a[i] + b[i] * b[i] + d[i] * d[i]);
    }
    FunctionFamily F{{Member::explicit_values(mag)}, 2.0};
    const auto space = DiscreteMeasureSpace::finite(std::vector<double>(N, g.cell_volume()));
    const Witness w = is_tight_witness(F, space, n_max, N);
    const TightenerReport tr = build_tightener(F, space, w);

    ScalarField out = ScalarField::zeros(g);
    auto o = out.values();
    for (std::size_t q = 0; q < N; ++q) {
        const std::size_t i = order[q];
        o[i] = std::max(1.0, std::min(dist[i], tr.weight(q)));
    }
    return out;
}

/// Weighted energy integral of w |u|^2.
inline double weighted_l2_sq(const ScalarField& w, const VectorField& u_any) {
    const VectorField u = spectral::to_physical(u_any);
    auto wv = w.values();
    auto a = u[0].values(), b = u[1].values(), c = u[2].values();
    return spectral::integrate_points(u.grid(), [&](std::size_t i) { return wv[i] * (a[i] * a[i] + b[i] * b[i] + c[i] * c[i]); });
}

}  // namespace rns::tightness
