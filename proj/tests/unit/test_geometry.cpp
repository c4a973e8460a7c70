#include <gtest/gtest.h>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>
#include <numbers>

#include "specsplit/geometry.hpp"

using namespace specsplit;

namespace {

PolygonalDomain unit_square() { return PolygonalDomain({{0, 0}, {1, 0}, {1, 1}, {0, 1}}); }

template <class F>
ErrorKind kind_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "expected an exception";
    return ErrorKind::io;
}

}  // namespace

TEST(BumpProfile, PeakAndSupport) {
    EXPECT_DOUBLE_EQ(bump_profile(0.0, 0.1), 0.01 * std::exp(-1.0));
    EXPECT_EQ(bump_profile(0.1, 0.1), 0.0);
    EXPECT_EQ(bump_profile(-0.2, 0.1), 0.0);
    EXPECT_GT(bump_profile(0.0999, 0.1), 0.0);
    EXPECT_EQ(kind_of([] { bump_profile(0.0, 0.0); }), ErrorKind::invalid_parameter);
}

TEST(BumpProfile, IntegralMatchesQuadrature) {
    // int_{-1}^{1} exp(1/(x^2-1)) dx by double-exponential quadrature
    boost::math::quadrature::tanh_sinh<double> ts;
    double unit = ts.integrate([](double x) { return std::exp(1.0 / (x * x - 1.0)); }, -1.0, 1.0);
    EXPECT_NEAR(unit, 0.4439938161680797, 1e-13);
    double c = 0.1;
    double trap = 0.0;
    int n = 20000;
    for (int i = 1; i < n; ++i) trap += bump_profile(-c + 2.0 * c * i / n, c);
    trap *= 2.0 * c / n;
    EXPECT_NEAR(trap, 4.439938161680797e-4, 1e-15);
}

TEST(BumpProfile, DerivativeMatchesCentralDifference) {
    double c = 0.2;
    for (double s : {-0.15, -0.05, 0.0, 0.07, 0.19}) {
        double d = 1e-6;
        double fd = (bump_profile(s + d, c) - bump_profile(s - d, c)) / (2 * d);
        EXPECT_NEAR(bump_profile_derivative(s, c), fd, 1e-7) << s;
    }
}

TEST(SmoothStep, EndpointsAndSymmetry) {
    EXPECT_EQ(smooth_step(-1.0), 0.0);
    EXPECT_EQ(smooth_step(1.5), 1.0);
    EXPECT_DOUBLE_EQ(smooth_step(0.5), 0.5);
    for (double x : {0.1, 0.3, 0.45}) EXPECT_NEAR(smooth_step(x) + smooth_step(1 - x), 1.0, 1e-15);
    double prev = 0.0;
    for (int i = 1; i <= 100; ++i) {
        double v = smooth_step(i / 100.0);
        EXPECT_GE(v, prev);
        prev = v;
    }
    double d = 1e-6;
    EXPECT_NEAR(smooth_step_derivative(0.3), (smooth_step(0.3 + d) - smooth_step(0.3 - d)) / (2 * d), 1e-8);
}

TEST(PolygonalDomain, SquareMeasures) {
    auto sq = unit_square();
    EXPECT_DOUBLE_EQ(sq.area(), 1.0);
    EXPECT_DOUBLE_EQ(sq.perimeter(), 4.0);
    ASSERT_EQ(sq.edges().size(), 4u);
    const Edge& e0 = sq.edge(0);
    EXPECT_EQ(e0.normal, (Vec2{0, -1}));
    EXPECT_EQ(e0.point_at(0.25), (Vec2{0.25, 0}));
    auto [s, depth] = e0.local({0.3, 0.2});
    EXPECT_DOUBLE_EQ(s, 0.3);
    EXPECT_DOUBLE_EQ(depth, 0.2);
}

TEST(PolygonalDomain, RejectsBadInput) {
    EXPECT_EQ(kind_of([] { PolygonalDomain({{0, 0}, {0, 1}, {1, 1}, {1, 0}}); }), ErrorKind::invalid_domain);
    EXPECT_EQ(kind_of([] { PolygonalDomain({{0, 0}, {1, 1}, {1, 0}, {0, 1}}); }), ErrorKind::invalid_domain);
    EXPECT_EQ(kind_of([] { PolygonalDomain({{0, 0}, {1, 0}}); }), ErrorKind::invalid_domain);
    EXPECT_EQ(kind_of([] {
                  PolygonalDomain({{0, 0}, {1, 0}, {1, 1}, {0, 1}}, BoundaryCondition::robin, 0.0);
              }),
              ErrorKind::invalid_parameter);
    EXPECT_EQ(kind_of([] { PolygonalDomain({{0, 0}, {1, 0}, {0, NAN}}); }), ErrorKind::invalid_domain);
}

TEST(PolygonalDomain, BumpPlacementChecks) {
    auto sq = unit_square();
    EXPECT_EQ(kind_of([&] { apply_bump(sq, {7, 0.5, 0.1, 0.1}); }), ErrorKind::placement);
    EXPECT_EQ(kind_of([&] { apply_bump(sq, {0, 0.05, 0.1, 0.1}); }), ErrorKind::placement);
    auto one = apply_bump(sq, {0, 0.3, 0.1, 0.1});
    EXPECT_EQ(kind_of([&] { apply_bump(one, {0, 0.45, 0.1, 0.1}); }), ErrorKind::placement);
    auto two = apply_bump(one, {0, 0.7, 0.1, 0.1});
    EXPECT_EQ(two.bumps().size(), 2u);
}

TEST(PolygonalDomain, BumpAddsProfileArea) {
    double c = 0.1, t = 2.0;
    auto bumped = apply_bump(unit_square(), {0, 0.5, c, t}, 512);
    // outward bump on the bottom edge adds t * int rho
    EXPECT_NEAR(bumped.area() - 1.0, t * 4.439938161680797e-4, 1e-8);
    EXPECT_DOUBLE_EQ(bumped.base_area(), 1.0);
    for (const Vec2& p : bumped.boundary()) {
        if (p.y < 0.5) {
            EXPECT_LE(p.y, 0.0);
        }
    }
}

TEST(DeformationField, BoundaryDisplacementIsProfile) {
    auto sq = unit_square();
    DeformationField f(sq, {0, 0.5, 0.1, 0.0});
    double t = 0.3;
    for (double s : {0.42, 0.5, 0.55}) {
        Vec2 d = f.displacement({s, 0.0}, t);
        EXPECT_DOUBLE_EQ(d.x, 0.0);
        EXPECT_DOUBLE_EQ(d.y, -t * bump_profile(s - 0.5, 0.1));
    }
    EXPECT_EQ(f.displacement({0.3, 0.0}, t), (Vec2{0, 0}));
    EXPECT_EQ(f.displacement({0.5, 0.2}, t), (Vec2{0, 0}));
}

TEST(DeformationField, JacobianMatchesFiniteDifferences) {
    DeformationField f(unit_square(), {0, 0.5, 0.1, 0.0});
    double t = 0.7, d = 1e-7;
    for (Vec2 p : {Vec2{0.47, 0.03}, Vec2{0.52, 0.06}, Vec2{0.55, 0.011}}) {
        auto J = f.jacobian(p, t);
        Vec2 dx = (f.displacement(p + Vec2{d, 0}, t) - f.displacement(p - Vec2{d, 0}, t)) / (2 * d);
        Vec2 dy = (f.displacement(p + Vec2{0, d}, t) - f.displacement(p - Vec2{0, d}, t)) / (2 * d);
        EXPECT_NEAR(J[0], dx.x, 1e-7);
        EXPECT_NEAR(J[1], dy.x, 1e-7);
        EXPECT_NEAR(J[2], dx.y, 1e-7);
        EXPECT_NEAR(J[3], dy.y, 1e-7);
    }
}

TEST(DeformationField, C1NormBoundsSampledField) {
    DeformationField f(unit_square(), {0, 0.5, 0.1, 0.0});
    double t = 1.3;
    double c1 = deformation_c1_norm(f, t);
    EXPECT_DOUBLE_EQ(deformation_c1_norm(f, 2 * t), 2 * c1);
    double sampled = 0.0;
    for (int i = 0; i <= 400; ++i)
        for (int j = 0; j <= 200; ++j) {
            Vec2 p{0.4 + 0.2 * i / 400.0, 0.1 * j / 200.0};
            auto J = f.jacobian(p, t);
            double op = std::sqrt(J[0] * J[0] + J[1] * J[1] + J[2] * J[2] + J[3] * J[3]);  // rank one
            sampled = std::max({sampled, op, norm(f.displacement(p, t))});
        }
    EXPECT_LE(sampled, c1 * (1 + 1e-9));
    EXPECT_GE(sampled, 0.99 * c1);
}

TEST(DeformationField, RejectsSupportNearOtherEdges) {
    EXPECT_EQ(kind_of([] { DeformationField(unit_square(), {0, 0.5, 0.6, 0.0}); }), ErrorKind::placement);
    EXPECT_EQ(kind_of([] { DeformationField(unit_square(), {0, 0.5, 0.1, 0.0}, 2.0); }), ErrorKind::placement);
}

TEST(Lipschitz, PolygonCorners) {
    EXPECT_NEAR(lipschitz_constant(unit_square()), 1.0, 1e-15);
    std::vector<Vec2> hex;
    for (int i = 0; i < 6; ++i) hex.push_back({std::cos(i * std::numbers::pi / 3), std::sin(i * std::numbers::pi / 3)});
    EXPECT_NEAR(lipschitz_constant(hex), std::tan(std::numbers::pi / 6), 1e-14);
}

TEST(LocateOnBoundary, VertexEdgeAndMiss) {
    auto sq = unit_square();
    auto v = locate_on_boundary(sq, {1, 0});
    ASSERT_TRUE(v);
    EXPECT_EQ(v->vertex, 1);
    auto e = locate_on_boundary(sq, {1, 0.25});
    ASSERT_TRUE(e);
    EXPECT_EQ(e->edge, 1);
    EXPECT_DOUBLE_EQ(e->s, 0.25);
    EXPECT_EQ(e->vertex, -1);
    EXPECT_FALSE(locate_on_boundary(sq, {0.5, 0.5}));
}

TEST(FlattenPatch, StraightInsideUnchangedOutside) {
    PolygonalDomain tri({{0, 0}, {2, 0}, {1, 0.5}, {0, 0.5}});
    Vec2 x{1, 0.5};
    double r = 0.05, R = 0.15;
    FlattenResult fl = flatten_patch(tri, x, r, R);
    const auto& after = fl.domain.boundary();
    for (const Vec2& p : tri.boundary()) {
        if (distance(p, x) <= R) continue;
        bool found = false;
        for (const Vec2& q : after) found |= distance(p, q) < 1e-12;
        EXPECT_TRUE(found) << p.x << ' ' << p.y;
    }
    auto loc = locate_on_boundary(fl.domain, x, 1e-9);
    ASSERT_TRUE(loc);
    EXPECT_EQ(loc->vertex, -1);
    const Edge& e = fl.domain.edge(loc->edge);
    EXPECT_GE(loc->s, r - 1e-9);
    EXPECT_GE(e.length - loc->s, r - 1e-9);
    EXPECT_GE(fl.lipschitz_after, 0.0);
}

TEST(BoundaryCondition, ParseRoundTrip) {
    for (auto bc : {BoundaryCondition::dirichlet, BoundaryCondition::neumann, BoundaryCondition::robin})
        EXPECT_EQ(parse_boundary_condition(to_string(bc)), bc);
    EXPECT_EQ(kind_of([] { parse_boundary_condition("periodic"); }), ErrorKind::invalid_parameter);
}
