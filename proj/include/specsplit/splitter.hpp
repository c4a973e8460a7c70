#pragma once

// Splitting degenerate eigenvalue clusters with localized boundary bumps, and
// the iterative loop that makes the first K eigenvalues simple.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "specsplit/eigensolver.hpp"
#include "specsplit/error.hpp"
#include "specsplit/fem.hpp"
#include "specsplit/geometry.hpp"
#include "specsplit/mesh.hpp"
#include "specsplit/shape_derivative.hpp"

namespace specsplit {

struct SolverConfig {
    double h = 0.02;
    double tol = 1e-9;
    double tau = 0.0;  ///< <= 0: calibrate from the unit square at h
    MeshOptions mesh;
};

/// A domain together with its mesh, discrete system and clustered spectrum.
struct SolvedDomain {
    PolygonalDomain domain;
    TriMesh mesh;
    DiscreteSystem system;
    Spectrum spectrum;
};

inline SolvedDomain solve_domain(const PolygonalDomain& domain, int k, const SolverConfig& cfg, double tau) {
    TriMesh mesh = triangulate(domain, cfg.h, cfg.mesh);
    DiscreteSystem sys = assemble(mesh, domain.bc(), domain.sigma());
    Spectrum spec = detect_clusters(solve_lowest(sys, k, cfg.tol), tau);
    return {domain, std::move(mesh), std::move(sys), std::move(spec)};
}

inline double resolve_tau(const SolverConfig& cfg) {
    return cfg.tau > 0.0 ? cfg.tau : calibrate_tau(cfg.h);
}

struct SplitBudget {
    double M = 0.4;
    double d_r = 0.0;
    int r = 1;
    int m = 1;
    double tail_floor = 0.0;  ///< lambda_r

    double shift_cap() const { return M * d_r; }
};

inline SplitBudget make_budget(double M, const Spectrum& spectrum, int r, int m) {
    require(M > 0.0 && M < 0.5, ErrorKind::budget_violation, "budget constant M must lie in (0, 1/2)");
    SplitBudget b;
    b.M = M;
    b.r = r;
    b.m = m;
    b.d_r = gap_quantity(spectrum, r, m);
    b.tail_floor = spectrum.lambda(r);
    require(b.shift_cap() > 0.0, ErrorKind::budget_violation, "shift cap must be positive");
    return b;
}

struct Ball {
    Vec2 center;
    double radius = 0.0;
};

struct SplitConfig {
    double split_factor = 10.0;  ///< post-split gap over pre-split width
    double c1_budget = 0.1;      ///< C^1 budget of the deformation, divided by n + 1
    int bisection_steps = 12;
    int center_rounds = 4;
    int extra_pairs = 5;  ///< eigenpairs solved beyond r + m + 1 for tail checks
};

/// Per-iteration record of a split attempt.
struct SplitRecord {
    int n = 0;
    Ball ball;
    double M = 0.0;
    double d_r = 0.0;
    int r = 0;
    int m = 0;
    int edge = -1;
    double s0 = 0.0;
    double c = 0.0;
    double t = 0.0;
    double t_cap = 0.0;
    double c1_norm = 0.0;
    std::vector<double> pre;
    std::vector<double> post;
    std::vector<double> shifts;
    std::vector<double> ratios;
    double pre_rel_width = 0.0;
    double post_rel_gap = 0.0;
    bool point1 = false;  ///< symmetric difference inside the ball
    bool point2 = false;  ///< shifts within M d_r
    bool point3 = false;  ///< multiplicity strictly reduced
    bool point4 = false;  ///< tail stays above lambda_r
    bool accepted = false;
    int evaluations = 0;
    std::vector<double> predicted_rates;
    std::string note;

    double shift_max() const {
        double v = 0.0;
        for (double s : shifts) v = std::max(v, std::fabs(s));
        return v;
    }
    double ratio_max() const {
        double v = 0.0;
        for (double s : ratios) v = std::max(v, s);
        return v;
    }
};

/// ratio_n = |lambda~_n - lambda_n| / (max(lambda~_n, lambda_n, 1) * c1_norm).
inline std::vector<double> stability_ratio(const Spectrum& pre, const Spectrum& post, double c1_norm, int n_max) {
    require(c1_norm > 0.0, ErrorKind::invalid_parameter, "C1 norm must be positive");
    require(pre.k() >= static_cast<std::size_t>(n_max) && post.k() >= static_cast<std::size_t>(n_max),
            ErrorKind::invalid_parameter, "spectra too short for n_max");
    std::vector<double> out;
    for (int n = 1; n <= n_max; ++n) {
        double a = pre.lambda(n), b = post.lambda(n);
        out.push_back(std::fabs(b - a) / (std::max({a, b, 1.0}) * c1_norm));
    }
    return out;
}

struct WeylFit {
    double slope = 0.0;
    double intercept = 0.0;
    double expected = 0.0;   ///< 4 pi / area
    double deviation = 0.0;  ///< (slope - expected) / expected
};

/// Least-squares line through (n, lambda_n) over the upper half of the range.
inline WeylFit weyl_check(const Spectrum& spectrum, double area) {
    require(spectrum.k() >= 10, ErrorKind::invalid_parameter, "Weyl fit needs at least 10 eigenvalues");
    require(area > 0.0, ErrorKind::invalid_parameter, "area must be positive");
    int k = static_cast<int>(spectrum.k());
    int first = k / 2 + 1;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int cnt = 0;
    for (int n = first; n <= k; ++n) {
        double x = n, y = spectrum.lambda(n);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++cnt;
    }
    WeylFit f;
    f.slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
    f.intercept = (sy - f.slope * sx) / cnt;
    f.expected = 4.0 * std::numbers::pi / area;
    f.deviation = (f.slope - f.expected) / f.expected;
    return f;
}

struct Placement {
    int edge = -1;
    double s_lo = 0.0;  ///< admissible range for the bump center
    double s_hi = 0.0;
};

/// Longest window of bump centers (radius c) on a flat, bump-free part of a
/// base edge such that the bump stays inside the ball.
inline std::optional<Placement> find_placement(const PolygonalDomain& domain, const Ball& ball, double c) {
    std::optional<Placement> best;
    double reach = ball.radius - 1.05 * c;
    if (reach < 0.0) return best;
    for (const Edge& e : domain.edges()) {
        // centers p(s) with |p(s) - center| <= reach
        Vec2 d = e.a - ball.center;
        double bq = dot(d, e.tangent);
        double cq = dot(d, d) - reach * reach;
        double disc = bq * bq - cq;
        if (disc < 0.0) continue;
        double lo = std::max(-bq - std::sqrt(disc), c * 1.0001);
        double hi = std::min(-bq + std::sqrt(disc), e.length - c * 1.0001);
        if (lo > hi) continue;
        std::vector<std::pair<double, double>> free{{lo, hi}};
        for (const auto& b : domain.bumps()) {
            if (b.edge != e.id) continue;
            double margin = (b.c + c) * 1.0001;
            std::vector<std::pair<double, double>> next;
            for (auto [a, z] : free) {
                if (b.s0 - margin > a) next.emplace_back(a, std::min(z, b.s0 - margin));
                if (b.s0 + margin < z) next.emplace_back(std::max(a, b.s0 + margin), z);
            }
            free.swap(next);
        }
        for (auto [a, z] : free) {
            if (a > z) continue;
            // the deformation support must not reach another edge or bump
            bool ok = true;
            for (double s : {a, 0.5 * (a + z), z}) {
                try {
                    DeformationField f(domain, BumpSpec{e.id, s, c, 0.0});
                } catch (const Error&) {
                    ok = false;
                }
            }
            if (!ok) continue;
            if (!best || z - a > best->s_hi - best->s_lo) best = Placement{e.id, a, z};
        }
    }
    return best;
}

struct SplitResult {
    SolvedDomain solved;
    SplitRecord record;
};

namespace detail {

struct Evaluation {
    bool valid = false;
    bool budget_ok = false;  // points 2 and 4
    bool gap_ok = false;     // point 3
    std::optional<SolvedDomain> solved;
    std::vector<double> shifts;
    double post_rel_gap = 0.0;
    bool point2 = false;
    bool point4 = false;
    std::string note;
};

inline bool symmetric_difference_in_ball(const PolygonalDomain& before, const PolygonalDomain& after,
                                         const Ball& ball) {
    auto outside = [&](const std::vector<Vec2>& ring) {
        std::vector<std::pair<double, double>> out;
        for (const Vec2& p : ring)
            if (distance(p, ball.center) > ball.radius) out.emplace_back(p.x, p.y);
        std::sort(out.begin(), out.end());
        return out;
    };
    return outside(before.boundary()) == outside(after.boundary());
}

}  // namespace detail

/// One application of the single-split construction: place a bump of radius
/// ball.radius / 2 inside the ball where the cluster's discriminants differ,
/// and take the largest admissible amplitude.
inline SplitResult split_once(const SolvedDomain& pre, const Cluster& cluster, const Ball& ball,
                              const SplitBudget& budget, const SolverConfig& cfg, const SplitConfig& scfg,
                              int n = 0) {
    require(cluster.m >= 2, ErrorKind::invalid_parameter, "cluster is already simple");
    require(budget.M > 0.0 && budget.M < 0.5, ErrorKind::budget_violation, "budget constant M must lie in (0, 1/2)");
    const int r = cluster.r, m = cluster.m;
    const double tau = pre.spectrum.tau;
    SplitRecord rec;
    rec.n = n;
    rec.ball = ball;
    rec.M = budget.M;
    rec.d_r = budget.d_r;
    rec.r = r;
    rec.m = m;
    rec.c = 0.5 * ball.radius;
    rec.pre = pre.spectrum.lambdas();
    rec.pre_rel_width = cluster.width / std::max(std::fabs(pre.spectrum.lambda(r)), 1.0);

    auto placement = find_placement(pre.domain, ball, rec.c);
    if (!placement) fail(ErrorKind::geometry, "no admissible flat segment in the ball");
    rec.edge = placement->edge;

    // Bump center: alternate between choosing the center and rotating the
    // cluster basis to the branch basis of the derivative matrix there.
    std::vector<EigenPair> pairs(pre.spectrum.pairs.begin() + (r - 1), pre.spectrum.pairs.begin() + (r - 1 + m));
    double lambda_mean = 0.0;
    for (const auto& p : pairs) lambda_mean += p.lambda;
    lambda_mean /= m;
    double cdisc = c_constant(pre.system.bc, lambda_mean, pre.system.sigma);
    auto traces_of = [&](const std::vector<EigenPair>& ps) {
        std::vector<BoundaryTrace> tr;
        for (const auto& p : ps) tr.push_back(boundary_trace(pre.mesh, pre.system, p, rec.edge));
        return tr;
    };
    double s0 = select_bump_center(traces_of(pairs), cdisc, rec.c, placement->s_lo, placement->s_hi);
    HadamardReport rep;
    for (int round = 0; round < scfg.center_rounds; ++round) {
        DeformationField f(pre.domain, BumpSpec{rec.edge, s0, rec.c, 0.0});
        rep = hadamard_matrix(pre.mesh, pre.system, pairs, f, r);
        pairs = rotate_pairs(pairs, rep.branch_basis);
        double s_new = select_bump_center(traces_of(pairs), cdisc, rec.c, placement->s_lo, placement->s_hi);
        if (s_new == s0) break;
        s0 = s_new;
    }
    rec.s0 = s0;
    {
        DeformationField f(pre.domain, BumpSpec{rec.edge, s0, rec.c, 0.0});
        rec.predicted_rates = hadamard_matrix(pre.mesh, pre.system, pairs, f, r).predicted_rates;
        double unit = deformation_c1_norm(f, 1.0);
        rec.t_cap = scfg.c1_budget / ((n + 1) * unit);
    }

    int k_check = std::max<int>(static_cast<int>(pre.spectrum.k()), r + m + 1 + scfg.extra_pairs);
    auto evaluate = [&](double t) {
        detail::Evaluation ev;
        ++rec.evaluations;
        try {
            std::vector<BumpSpec> bumps = pre.domain.bumps();
            bumps.push_back(BumpSpec{rec.edge, s0, rec.c, t});
            PolygonalDomain dom = pre.domain.with_bumps(bumps);
            ev.solved = solve_domain(dom, k_check, cfg, tau);
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::solver) throw;
            ev.note = e.what();
            return ev;
        }
        ev.valid = true;
        const Spectrum& post = ev.solved->spectrum;
        int kk = static_cast<int>(std::min(pre.spectrum.k(), post.k()));
        ev.point2 = true;
        for (int i = 1; i <= std::min(r + m + 1, kk); ++i) {
            double sh = post.lambda(i) - pre.spectrum.lambda(i);
            if (std::fabs(sh) > budget.shift_cap()) ev.point2 = false;
        }
        for (int i = 1; i <= kk; ++i) ev.shifts.push_back(post.lambda(i) - pre.spectrum.lambda(i));
        ev.point4 = true;
        for (int i = r + m + 1; i <= static_cast<int>(post.k()); ++i)
            if (!(post.lambda(i) > budget.tail_floor)) ev.point4 = false;
        ev.budget_ok = ev.point2 && ev.point4;
        double gap = 0.0;
        for (int i = r; i < r + m - 1; ++i)
            gap = std::max(gap, (post.lambda(i + 1) - post.lambda(i)) / std::max(std::fabs(post.lambda(i)), 1.0));
        ev.post_rel_gap = gap;
        ev.gap_ok = gap >= std::max(scfg.split_factor * rec.pre_rel_width, tau);
        return ev;
    };

    double t = rec.t_cap;
    detail::Evaluation ev = evaluate(t);
    if (!(ev.valid && ev.budget_ok)) {
        double lo = 0.0, hi = t;
        std::optional<detail::Evaluation> best;
        for (int it = 0; it < scfg.bisection_steps; ++it) {
            double mid = 0.5 * (lo + hi);
            detail::Evaluation e = evaluate(mid);
            if (e.valid && e.budget_ok) {
                lo = mid;
                best = std::move(e);
            } else {
                hi = mid;
            }
        }
        if (!best) {
            rec.note = "no admissible amplitude: " + ev.note;
            throw Error(ErrorKind::split_failed, "split failed: " + rec.note);
        }
        t = lo;
        ev = std::move(*best);
    }
    rec.t = t;
    rec.post_rel_gap = ev.post_rel_gap;
    rec.point2 = ev.point2;
    rec.point4 = ev.point4;
    rec.point3 = ev.gap_ok;
    rec.shifts = ev.shifts;
    const SolvedDomain& post = *ev.solved;
    rec.post = post.spectrum.lambdas();
    rec.point1 = detail::symmetric_difference_in_ball(pre.domain, post.domain, ball);
    {
        DeformationField f(pre.domain, BumpSpec{rec.edge, s0, rec.c, 0.0});
        rec.c1_norm = deformation_c1_norm(f, t);
        int n_max = static_cast<int>(std::min({pre.spectrum.k(), post.spectrum.k(), std::size_t{10}}));
        rec.ratios = stability_ratio(pre.spectrum, post.spectrum, rec.c1_norm, n_max);
    }
    if (!rec.point3) {
        rec.note = "post-split gap " + std::to_string(rec.post_rel_gap) + " below required " +
                   std::to_string(std::max(scfg.split_factor * rec.pre_rel_width, tau)) + " at t = " +
                   std::to_string(t);
        throw Error(ErrorKind::split_failed, "split failed: " + rec.note);
    }
    rec.accepted = rec.point1 && rec.point2 && rec.point3 && rec.point4;
    require(rec.accepted, ErrorKind::invariant_failure, "accepted split violates a contract point");
    return {post, rec};
}

// ---------------------------------------------------------------------------

struct SimplifyConfig {
    SolverConfig solver;
    SplitConfig split;
    int max_iterations = 20;
    double flatten_r = 0.0;  ///< <= 0: epsilon / 4
    double flatten_R = 0.0;  ///< <= 0: epsilon / 2
    double lipschitz_delta = 0.1;
    double min_bump_radius = 0.0;  ///< <= 0: 2 h
};

struct SplitTrace {
    std::vector<SplitRecord> records;  ///< accepted and failed attempts
    std::vector<int> r_history;        ///< r_n per iteration (K + 1 once simple)
    bool success = false;
    bool flattened = false;
    int splits = 0;
    double tau = 0.0;
    Vec2 x;
    double epsilon = 0.0;
    double lipschitz_before = 0.0;
    double lipschitz_after = 0.0;
    bool localized = true;
    std::vector<double> initial_spectrum;
    std::vector<double> final_spectrum;
    std::string status;
};

struct SimplifyResult {
    PolygonalDomain domain;
    SplitTrace trace;
};

/// Ball n of the layout: B_0 centered at x, odd n to the right and even n >= 2
/// to the left along the flat segment, radii R_0 2^-n, pairwise disjoint.
inline Ball layout_ball(Vec2 x, Vec2 tangent, double R0, int n) {
    auto R = [R0](int j) { return R0 * std::ldexp(1.0, -j); };
    if (n == 0) return {x, R0};
    double offset = R0;
    if (n % 2 == 1) {
        for (int j = 1; j < n; j += 2) offset += 2.0 * R(j);
        offset += R(n);
        return {x + offset * tangent, R(n)};
    }
    for (int j = 2; j < n; j += 2) offset += 2.0 * R(j);
    offset += R(n);
    return {x - offset * tangent, R(n)};
}

/// First cluster with m >= 2 that starts at or below K (1-based), if any.
inline std::optional<Cluster> first_degenerate(const Spectrum& s, int K) {
    for (const auto& c : s.clusters)
        if (c.r <= K && c.m >= 2) return c;
    return std::nullopt;
}

inline SimplifyResult simplify_spectrum(const PolygonalDomain& input, int K_target, double epsilon, Vec2 x,
                                        const SimplifyConfig& cfg = {}) {
    require(K_target >= 2, ErrorKind::invalid_parameter, "K_target must be >= 2");
    require(epsilon > 0.0 && std::isfinite(epsilon), ErrorKind::invalid_parameter, "epsilon must be positive");
    double scale = std::sqrt(input.base_area());
    auto loc = locate_on_boundary(input, x, 1e-9 * scale);
    require(loc.has_value(), ErrorKind::invalid_parameter, "x is not on the domain boundary");

    SplitTrace trace;
    trace.x = x;
    trace.epsilon = epsilon;
    trace.tau = resolve_tau(cfg.solver);
    trace.lipschitz_before = lipschitz_constant(input);
    const int k_solve = K_target + 1 + cfg.split.extra_pairs;
    double min_c = cfg.min_bump_radius > 0.0 ? cfg.min_bump_radius : 2.0 * cfg.solver.h;

    SolvedDomain cur = solve_domain(input, k_solve, cfg.solver, trace.tau);
    trace.initial_spectrum = cur.spectrum.lambdas();
    auto finish = [&](const PolygonalDomain& dom, bool success, const std::string& status) {
        trace.success = success;
        trace.status = status;
        trace.lipschitz_after = lipschitz_constant(dom);
        trace.localized = detail::symmetric_difference_in_ball(input, dom, Ball{x, epsilon});
        trace.final_spectrum = cur.spectrum.lambdas();
        return SimplifyResult{dom, trace};
    };
    if (!first_degenerate(cur.spectrum, K_target)) {
        trace.r_history.push_back(K_target + 1);
        return finish(input, true, "already simple");
    }

    // A flat segment through x, flattening a patch first when x sits on a vertex.
    PolygonalDomain work = input;
    if (loc->vertex >= 0) {
        double r = cfg.flatten_r > 0.0 ? cfg.flatten_r : 0.25 * epsilon;
        double R = cfg.flatten_R > 0.0 ? cfg.flatten_R : 0.5 * epsilon;
        FlattenResult fl = flatten_patch(input, x, r, R);
        work = fl.domain;
        trace.flattened = true;
        loc = locate_on_boundary(work, x, 1e-9 * scale);
        require(loc.has_value() && loc->vertex < 0, ErrorKind::geometry, "flattening did not produce a flat segment");
        cur = solve_domain(work, k_solve, cfg.solver, trace.tau);
    }
    const Edge& edge = work.edge(loc->edge);
    double right = std::min(epsilon, edge.length - loc->s);
    double left = std::min(epsilon, loc->s);
    for (const auto& b : work.bumps()) {
        if (b.edge != edge.id) continue;
        if (b.s0 >= loc->s) right = std::min(right, b.s0 - b.c - loc->s);
        else left = std::min(left, loc->s - (b.s0 + b.c));
    }
    double R0 = 0.98 * std::min(3.0 / 7.0 * right, 3.0 / 5.0 * left);
    if (!(R0 > 0.0)) return finish(work, false, "no admissible flat segment near x");

    int last_r = 0, same_count = 0;
    for (int n = 0; n < cfg.max_iterations; ++n) {
        auto cl = first_degenerate(cur.spectrum, K_target);
        int r_n = cl ? cl->r : K_target + 1;
        if (!trace.r_history.empty() && r_n < trace.r_history.back())
            fail(ErrorKind::invariant_failure, "r_n decreased from " + std::to_string(trace.r_history.back()) +
                                                   " to " + std::to_string(r_n));
        trace.r_history.push_back(r_n);
        if (!cl) return finish(cur.domain, true, "first " + std::to_string(K_target) + " eigenvalues simple");

        Ball ball = layout_ball(work.edge(loc->edge).point_at(loc->s), edge.tangent, R0, n);
        if (0.5 * ball.radius < min_c)
            return finish(cur.domain, false, "bump radius fell below the mesh-resolvable floor");
        double M_n = std::min(0.4, 0.9 * std::ldexp(1.0, -(n + 1)));
        SplitBudget budget = make_budget(M_n, cur.spectrum, cl->r, cl->m);
        try {
            SplitResult res = split_once(cur, *cl, ball, budget, cfg.solver, cfg.split, n);
            trace.records.push_back(res.record);
            ++trace.splits;
            cur = std::move(res.solved);
            if (r_n == last_r) {
                if (++same_count > r_n)
                    fail(ErrorKind::invariant_failure, "r_n stalled for more than r_n accepted splits");
            } else {
                last_r = r_n;
                same_count = 1;
            }
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::split_failed && e.kind() != ErrorKind::geometry &&
                e.kind() != ErrorKind::degenerate_discriminant)
                throw;
            SplitRecord failed;
            failed.n = n;
            failed.ball = ball;
            failed.M = M_n;
            failed.r = cl->r;
            failed.m = cl->m;
            failed.note = e.what();
            trace.records.push_back(failed);
        }
    }
    auto cl = first_degenerate(cur.spectrum, K_target);
    if (!cl) {
        trace.r_history.push_back(K_target + 1);
        return finish(cur.domain, true, "first " + std::to_string(K_target) + " eigenvalues simple");
    }
    return finish(cur.domain, false, "iteration cap reached");
}

/// CSV of (iteration, r_n, m, t, s0, shift_max, ratio_max, accepted).
inline void write_trace_csv(std::ostream& os, const SplitTrace& trace) {
    os.precision(17);
    os << "iteration,r_n,m,t,s0,shift_max,ratio_max,accepted\n";
    for (const auto& r : trace.records)
        os << r.n << ',' << r.r << ',' << r.m << ',' << r.t << ',' << r.s0 << ',' << r.shift_max() << ','
           << r.ratio_max() << ',' << (r.accepted ? 1 : 0) << '\n';
}

}  // namespace specsplit
