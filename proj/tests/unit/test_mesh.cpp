#include <gtest/gtest.h>

#include <map>
#include <set>
#include <sstream>

#include "specsplit/mesh.hpp"

using namespace specsplit;

namespace {

PolygonalDomain unit_square() { return PolygonalDomain({{0, 0}, {1, 0}, {1, 1}, {0, 1}}); }

PolygonalDomain lshape() { return PolygonalDomain({{0, 0}, {2, 0}, {2, 1}, {1, 1}, {1, 2}, {0, 2}}); }

// Conforming-triangulation checks: positive orientation, each interior edge
// shared by exactly two triangles, boundary edges by one, Euler V - E + F = 1.
void expect_valid(const TriMesh& m) {
    std::map<std::pair<int, int>, int> count;
    for (std::size_t i = 0; i < m.triangles.size(); ++i) {
        EXPECT_GT(m.triangle_area(i), 0.0);
        const auto& t = m.triangles[i];
        for (int k = 0; k < 3; ++k) {
            int a = t[k], b = t[(k + 1) % 3];
            ++count[{std::min(a, b), std::max(a, b)}];
        }
    }
    std::set<std::pair<int, int>> bnd;
    for (const auto& e : m.boundary_edges) bnd.insert({std::min(e.a, e.b), std::max(e.a, e.b)});
    for (const auto& [key, c] : count) EXPECT_EQ(c, bnd.count(key) ? 1 : 2);
    EXPECT_EQ(bnd.size(), m.boundary_edges.size());
    long V = static_cast<long>(m.nodes.size()), E = static_cast<long>(count.size()),
         F = static_cast<long>(m.triangles.size());
    EXPECT_EQ(V - E + F, 1);
}

}  // namespace

TEST(Triangulate, SquareQuality) {
    TriMesh m = triangulate(unit_square(), 0.1);
    expect_valid(m);
    EXPECT_NEAR(m.total_area(), 1.0, 1e-13);
    EXPECT_GE(m.min_angle_deg(), 25.0 - 1e-9);
    EXPECT_LE(m.h, 0.1 * 1.5);
    double len = 0.0;
    for (const auto& e : m.boundary_edges) len += distance(m.nodes[e.a], m.nodes[e.b]);
    EXPECT_NEAR(len, 4.0, 1e-13);
}

TEST(Triangulate, BoundaryTagsMatchPositions) {
    auto sq = unit_square();
    TriMesh m = triangulate(sq, 0.05);
    for (const auto& e : m.boundary_edges) {
        const Edge& base = sq.edge(e.edge);
        EXPECT_NEAR(distance(base.point_at(e.s_a), m.nodes[e.a]), 0.0, 1e-13);
        EXPECT_NEAR(distance(base.point_at(e.s_b), m.nodes[e.b]), 0.0, 1e-13);
    }
}

TEST(Triangulate, NonConvexDomain) {
    TriMesh m = triangulate(lshape(), 0.1);
    expect_valid(m);
    EXPECT_NEAR(m.total_area(), 3.0, 1e-12);
    for (std::size_t i = 0; i < m.triangles.size(); ++i) {
        const auto& t = m.triangles[i];
        Vec2 g = (m.nodes[t[0]] + m.nodes[t[1]] + m.nodes[t[2]]) / 3.0;
        EXPECT_FALSE(g.x > 1.0 && g.y > 1.0);
    }
}

TEST(Triangulate, BumpedBoundaryArea) {
    auto bumped = apply_bump(unit_square(), {0, 0.5, 0.1, 3.0});
    TriMesh m = triangulate(bumped, 0.03);
    expect_valid(m);
    EXPECT_NEAR(m.total_area(), bumped.area(), 1e-12);
    EXPECT_GE(m.min_angle_deg(), 20.0);
}

TEST(Triangulate, Deterministic) {
    TriMesh a = triangulate(lshape(), 0.07);
    TriMesh b = triangulate(lshape(), 0.07);
    ASSERT_EQ(a.nodes.size(), b.nodes.size());
    for (std::size_t i = 0; i < a.nodes.size(); ++i) EXPECT_EQ(a.nodes[i], b.nodes[i]);
    EXPECT_EQ(a.triangles, b.triangles);
}

TEST(Triangulate, RejectsBadParameters) {
    EXPECT_THROW(triangulate(unit_square(), 0.0), Error);
    MeshOptions opts;
    opts.min_angle_deg = 40.0;
    try {
        triangulate(unit_square(), 0.1, opts);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::meshing);
    }
}

TEST(Refine, RedRefinementCounts) {
    TriMesh m = triangulate(unit_square(), 0.2);
    TriMesh r = refine(m);
    std::set<std::pair<int, int>> edges;
    for (const auto& t : m.triangles)
        for (int k = 0; k < 3; ++k) edges.insert({std::min(t[k], t[(k + 1) % 3]), std::max(t[k], t[(k + 1) % 3])});
    EXPECT_EQ(r.nodes.size(), m.nodes.size() + edges.size());
    EXPECT_EQ(r.triangles.size(), 4 * m.triangles.size());
    EXPECT_EQ(r.boundary_edges.size(), 2 * m.boundary_edges.size());
    EXPECT_NEAR(r.total_area(), 1.0, 1e-13);
    EXPECT_NEAR(r.min_angle_deg(), m.min_angle_deg(), 1e-9);
    EXPECT_NEAR(r.h, 0.5 * m.h, 1e-14);
    expect_valid(r);
}

TEST(MoveMesh, BoundaryFollowsField) {
    auto sq = unit_square();
    TriMesh m = triangulate(sq, 0.02);
    DeformationField f(sq, {0, 0.5, 0.1, 0.0});
    double t = 0.5;
    TriMesh moved = move_mesh(m, f, t);
    EXPECT_EQ(moved.triangles, m.triangles);
    for (const auto& e : m.boundary_edges) {
        if (e.edge != 0) continue;
        Vec2 p = m.nodes[e.a], q = moved.nodes[e.a];
        EXPECT_NEAR(q.x, p.x, 1e-15);
        EXPECT_NEAR(q.y, -t * bump_profile(p.x - 0.5, 0.1), 1e-15);
    }
    // Moved area = base area + t * int rho up to the polyline error of the mesh trace.
    EXPECT_NEAR(moved.total_area() - 1.0, t * 4.439938161680797e-4, 2e-6);
}

TEST(MoveMesh, GuardReportsSafeAmplitude) {
    auto sq = unit_square();
    TriMesh m = triangulate(sq, 0.02);
    DeformationField f(sq, {0, 0.5, 0.1, 0.0});
    double safe = -1.0;
    try {
        move_mesh(m, f, 1e4);
        FAIL() << "expected AmplitudeTooLarge";
    } catch (const AmplitudeTooLarge& e) {
        EXPECT_EQ(e.kind(), ErrorKind::amplitude_too_large);
        safe = e.max_safe_t();
    }
    ASSERT_GT(safe, 0.0);
    EXPECT_NO_THROW(move_mesh(m, f, safe));
    EXPECT_THROW(move_mesh(m, f, safe * 1.01), AmplitudeTooLarge);
}

TEST(WriteMesh, HeaderCounts) {
    TriMesh m = triangulate(unit_square(), 0.25);
    std::ostringstream os;
    write_mesh_text(os, m);
    std::istringstream in(os.str());
    std::size_t nv, nt, nb;
    in >> nv >> nt >> nb;
    EXPECT_EQ(nv, m.nodes.size());
    EXPECT_EQ(nt, m.triangles.size());
    EXPECT_EQ(nb, m.boundary_edges.size());
}
