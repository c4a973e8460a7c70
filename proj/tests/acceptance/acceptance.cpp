// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include "specsplit/specsplit.hpp"

using namespace specsplit;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kPi2 = kPi * kPi;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

PolygonalDomain unit_square() { return PolygonalDomain({{0, 0}, {1, 0}, {1, 1}, {0, 1}}); }

// pi^2 (m^2 + n^2), sorted with multiplicity
std::vector<double> square_closed_form(int count) {
    std::vector<double> v;
    for (int m = 1; m <= 40; ++m)
        for (int n = 1; n <= 40; ++n) v.push_back(kPi2 * (m * m + n * n));
    std::sort(v.begin(), v.end());
    v.resize(static_cast<std::size_t>(count));
    return v;
}

struct Solved {
    TriMesh mesh;
    DiscreteSystem sys;
    Spectrum spec;
};

Solved solve_mesh(TriMesh mesh, int k, double tau) {
    Solved s;
    s.mesh = std::move(mesh);
    s.sys = assemble(s.mesh, BoundaryCondition::dirichlet);
    s.spec = detect_clusters(solve_lowest(s.sys, k, 1e-11), tau);
    return s;
}

Outcome spectrum_accuracy() {
    const double h = 0.02;
    auto t0 = std::chrono::steady_clock::now();
    Solved coarse = solve_mesh(triangulate(unit_square(), h), 6, calibrate_tau(h));
    double runtime = seconds_since(t0);
    Solved fine = solve_mesh(refine(coarse.mesh), 6, 1e-8);
    auto exact = square_closed_form(6);
    bool ok = runtime <= 60.0;
    double worst = 0.0, rmin = 1e300, rmax = 0.0;
    for (int i = 0; i < 6; ++i) {
        double ec = coarse.spec.pairs[i].lambda - exact[i];
        double ef = fine.spec.pairs[i].lambda - exact[i];
        worst = std::max(worst, std::fabs(ec) / exact[i]);
        double ratio = ec / ef;
        rmin = std::min(rmin, ratio);
        rmax = std::max(rmax, ratio);
    }
    ok = ok && worst <= 0.01 && rmin >= 3.5 && rmax <= 4.5;
    return {ok, fmt("max rel error %.4f%%, refinement ratio in [%.3f, %.3f], solve %.2f s", 100 * worst, rmin, rmax,
                    runtime)};
}

// -int (d_nu u)^2 rho for the M-normalized Dirichlet ground state
double ground_state_oracle(double s0, double c) {
    boost::math::quadrature::tanh_sinh<double> ts;
    return -ts.integrate(
        [=](double s) {
            double dn = 2 * kPi * std::sin(kPi * s);
            return dn * dn * bump_profile(s - s0, c);
        },
        s0 - c, s0 + c);
}

Outcome hadamard_consistency() {
    const double h = 0.02;
    BumpSpec probe{0, 0.5, 0.1, 0.0};
    PolygonalDomain d = unit_square().with_bumps({probe});
    Solved s = solve_mesh(triangulate(d, h), 2, calibrate_tau(h));
    DeformationField f(d, probe);
    std::vector<EigenPair> ground{s.spec.pairs[0]};
    double pred = hadamard_matrix(s.mesh, s.sys, ground, f).predicted_rates[0];
    double disc = discrete_derivative_matrix(s.mesh, s.sys, ground, f)(0, 0);
    double fd1 = fd_rates(s.mesh, s.sys, s.spec, 1, 1, f, 1e-3)[0];
    double fd2 = fd_rates(s.mesh, s.sys, s.spec, 1, 1, f, 2e-3)[0];
    double err1 = std::fabs(fd1 - pred) / std::fabs(pred);
    double err2 = std::fabs(fd2 - pred) / std::fabs(pred);
    // truncation error of the difference quotient, measured against the exact discrete derivative
    double conv = std::fabs(fd2 - disc) / std::fabs(fd1 - disc);
    double oracle = ground_state_oracle(0.5, 0.1);
    bool ok = err1 <= 0.05 && conv >= 1.8;
    return {ok, fmt("pred %.7f (quadrature %.7f), fd(1e-3) %.7f, rel err %.3f%% / %.3f%% at 1e-3 / 2e-3, "
                    "truncation ratio %.3f",
                    pred, oracle, fd1, 100 * err1, 100 * err2, conv)};
}

Outcome cluster_rates() {
    const double h = 0.02, t = 0.05;
    // wide bump: the weaker branch scales like c^2 and needs c large enough to be resolved
    BumpSpec probe{0, 0.5, 0.2, 0.0};
    PolygonalDomain d = unit_square().with_bumps({probe});
    Solved s = solve_mesh(triangulate(d, h), 4, calibrate_tau(h));
    const Cluster& cl = s.spec.clusters.at(1);
    if (cl.r != 2 || cl.m != 2) return {false, fmt("expected the 5 pi^2 pair at r = 2, got r = %d, m = %d", cl.r, cl.m)};
    DeformationField f(d, probe);
    std::vector<EigenPair> pair{s.spec.pairs[1], s.spec.pairs[2]};
    auto pred = hadamard_matrix(s.mesh, s.sys, pair, f, 2).predicted_rates;
    auto fd = fd_rates(s.mesh, s.sys, s.spec, 2, 2, f, t);
    std::sort(pred.begin(), pred.end());
    std::sort(fd.begin(), fd.end());
    double worst = 0.0;
    for (std::size_t i = 0; i < 2; ++i) worst = std::max(worst, std::fabs(fd[i] - pred[i]) / std::fabs(pred[i]));
    return {worst <= 0.10, fmt("pred {%.6f, %.6f}, fd {%.6f, %.6f} at t = %.2f, worst branch error %.2f%%", pred[0],
                               pred[1], fd[0], fd[1], t, 100 * worst)};
}

Outcome discriminant_separation() {
    const double h = 0.02;
    BumpSpec probe{0, 0.5, 0.1, 0.0};
    PolygonalDomain d = unit_square().with_bumps({probe});
    Solved s = solve_mesh(triangulate(d, h), 4, calibrate_tau(h));
    std::vector<EigenPair> pair{s.spec.pairs[1], s.spec.pairs[2]};
    auto rep = hadamard_matrix(s.mesh, s.sys, pair, DeformationField(d, probe), 2);
    auto rotated = rotate_pairs(pair, rep.branch_basis);
    // M-normalized modes 2 sin sin: |g_a - g_b| = 16 pi^2 sin^2(pi s) - 4 pi^2 sin^2(2 pi s), dense scan
    double oracle = 0.0;
    for (int i = 0; i <= 100000; ++i) {
        double x = i / 100000.0;
        oracle = std::max(oracle, std::fabs(16 * kPi2 * std::pow(std::sin(kPi * x), 2) -
                                            4 * kPi2 * std::pow(std::sin(2 * kPi * x), 2)));
    }
    std::vector<double> sep;
    for (int e = 0; e < 4; ++e) {
        BoundaryTrace a = boundary_trace(s.mesh, s.sys, rotated[0], e);
        BoundaryTrace b = boundary_trace(s.mesh, s.sys, rotated[1], e);
        double best = 0.0;
        for (std::size_t i = 0; i < a.samples.size(); ++i)
            best = std::max(best, std::fabs(a.samples[i].grad_sq - b.samples[i].grad_sq));
        sep.push_back(best);
    }
    double rel = std::fabs(sep[0] - oracle) / oracle;
    bool ok = rel <= 0.05 && std::all_of(sep.begin(), sep.end(), [](double v) { return v > 0.0; });
    return {ok, fmt("bottom edge max|g_a - g_b| = %.4f vs %.4f (%.2f%%), per-edge maxima %.3g %.3g %.3g %.3g", sep[0],
                    oracle, 100 * rel, sep[0], sep[1], sep[2], sep[3])};
}

bool on_unit_square(Vec2 p) {
    auto near = [](double a, double b) { return std::fabs(a - b) <= 1e-12; };
    bool edge = near(p.x, 0) || near(p.x, 1) || near(p.y, 0) || near(p.y, 1);
    return edge && p.x >= -1e-12 && p.x <= 1 + 1e-12 && p.y >= -1e-12 && p.y <= 1 + 1e-12;
}

Outcome single_split() {
    SolverConfig cfg;
    cfg.h = 0.02;
    double tau = resolve_tau(cfg);
    SolvedDomain pre = solve_domain(unit_square(), 12, cfg, tau);
    auto cl = first_degenerate(pre.spectrum, 6);
    if (!cl || cl->r != 2) return {false, "5 pi^2 pair not detected"};
    Ball ball{{0.5, 0.0}, 0.2};
    SplitBudget budget = make_budget(0.4, pre.spectrum, cl->r, cl->m);
    SplitResult res = split_once(pre, *cl, ball, budget, cfg, SplitConfig{});
    const SplitRecord& r = res.record;
    const double cap = 0.4 * 3 * kPi2;
    double shift = 0.0;
    for (int i = 0; i < 5; ++i) shift = std::max(shift, std::fabs(r.post[i] - r.pre[i]));
    bool tail = true;
    for (std::size_t i = 4; i < r.post.size(); ++i) tail = tail && r.post[i] > pre.spectrum.lambda(cl->r);
    bool inside = true;
    for (const Vec2& p : res.solved.domain.boundary())
        if (distance(p, ball.center) > ball.radius) inside = inside && on_unit_square(p);
    for (const Vec2& v : pre.domain.vertices())
        inside = inside && std::count(res.solved.domain.boundary().begin(), res.solved.domain.boundary().end(), v) == 1;
    bool reduced = r.post_rel_gap >= 10 * r.pre_rel_width && r.post[2] - r.post[1] > tau * r.post[1];
    bool ok = r.point1 && r.point2 && r.point3 && r.point4 && inside && shift <= cap && tail && reduced;
    return {ok, fmt("points %d%d%d%d, s0 = %.3f, t = %.3f, max shift %.3f <= %.3f (computed d_r = %.3f vs 3 pi^2 = "
                    "%.3f), gap %.3g vs width %.3g",
                    r.point1, r.point2, r.point3, r.point4, r.s0, r.t, shift, cap, r.d_r, 3 * kPi2, r.post_rel_gap,
                    r.pre_rel_width)};
}

Outcome end_to_end() {
    SimplifyConfig cfg;
    cfg.solver.h = 0.02;
    Vec2 x{0.5, 0.0};
    const double eps = 0.3;
    auto t0 = std::chrono::steady_clock::now();
    SimplifyResult res = simplify_spectrum(unit_square(), 6, eps, x, cfg);
    double runtime = seconds_since(t0);
    const SplitTrace& t = res.trace;
    bool monotone = std::is_sorted(t.r_history.begin(), t.r_history.end());
    bool outside = true;
    for (const Vec2& p : res.domain.boundary())
        if (distance(p, x) > eps) outside = outside && on_unit_square(p);
    double lip0 = lipschitz_constant(unit_square()), lip1 = lipschitz_constant(res.domain);
    bool ok = t.success && t.records.size() <= 6 && monotone && outside && std::fabs(lip1 - lip0) <= 0.1 &&
              runtime <= 600.0;
    std::string hist;
    for (int r : t.r_history) hist += (hist.empty() ? "" : ",") + std::to_string(r);
    return {ok, fmt("%s after %zu iteration(s), r history [%s], Lipschitz %.4f -> %.4f, %.1f s", t.status.c_str(),
                    t.records.size(), hist.c_str(), lip0, lip1, runtime)};
}

Outcome stability_sweep() {
    const double h = 0.02;
    BumpSpec probe{0, 0.5, 0.1, 0.0};
    PolygonalDomain d = unit_square().with_bumps({probe});
    Solved base = solve_mesh(triangulate(d, h), 10, calibrate_tau(h));
    DeformationField f(d, probe);
    std::vector<double> c_hat;
    std::vector<std::vector<double>> shifts;
    for (double t : {1e-3, 2e-3, 4e-3, 8e-3}) {
        Solved moved = solve_mesh(move_mesh(base.mesh, f, t), 10, calibrate_tau(h));
        auto ratios = stability_ratio(base.spec, moved.spec, deformation_c1_norm(f, t), 10);
        c_hat.push_back(*std::max_element(ratios.begin(), ratios.end()));
        std::vector<double> sh;
        for (int i = 0; i < 10; ++i) sh.push_back(moved.spec.pairs[i].lambda - base.spec.pairs[i].lambda);
        shifts.push_back(sh);
    }
    double spread = *std::max_element(c_hat.begin(), c_hat.end()) / *std::min_element(c_hat.begin(), c_hat.end());
    double lin = 0.0;
    for (int i = 0; i < 10; ++i) lin = std::max(lin, std::fabs(shifts[1][i] / (2 * shifts[0][i]) - 1));
    bool ok = spread < 5.0 && lin <= 0.2;
    return {ok, fmt("C-hat %.4g %.4g %.4g %.4g (spread %.3f), worst linearity deviation %.2f%%", c_hat[0], c_hat[1],
                    c_hat[2], c_hat[3], spread, 100 * lin)};
}

Outcome weyl_slope() {
    const double h = 0.02;
    Solved s = solve_mesh(triangulate(unit_square(), h), 30, calibrate_tau(h));
    WeylFit fit = weyl_check(s.spec, 1.0);
    // same fit on the closed-form spectrum
    Spectrum exact;
    for (double l : square_closed_form(30)) exact.pairs.push_back({l, Vector(), 0.0});
    WeylFit ref = weyl_check(detect_clusters(exact, 1e-8), 1.0);
    bool ok = std::fabs(fit.slope - 4 * kPi) <= 0.15 * 4 * kPi;
    return {ok, fmt("slope %.4f vs 4 pi = %.4f (%.2f%%), closed-form fit %.4f", fit.slope, 4 * kPi, 100 * fit.deviation,
                    ref.slope)};
}

Outcome negative_control() {
    double phi = (1 + std::sqrt(5.0)) / 2;
    PolygonalDomain g({{0, 0}, {phi, 0}, {phi, 1}, {0, 1}});
    SimplifyConfig cfg;
    cfg.solver.h = 0.02;
    SimplifyResult res = simplify_spectrum(g, 6, 0.3, {0.8, 0.0}, cfg);
    bool same = res.domain.vertices() == g.vertices() && res.domain.bumps().empty() &&
                res.domain.boundary() == g.boundary();
    bool ok = res.trace.success && res.trace.splits == 0 && res.trace.records.empty() && same;
    return {ok, fmt("%d split(s), domain %s", res.trace.splits, same ? "unchanged" : "changed")};
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria = {
        {"spectrum accuracy", spectrum_accuracy},
        {"hadamard consistency", hadamard_consistency},
        {"degenerate-cluster rates", cluster_rates},
        {"discriminant separation", discriminant_separation},
        {"single split contract", single_split},
        {"end-to-end simplification", end_to_end},
        {"stability-ratio boundedness", stability_sweep},
        {"weyl slope", weyl_slope},
        {"negative control", negative_control},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("[%s] %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].name, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
