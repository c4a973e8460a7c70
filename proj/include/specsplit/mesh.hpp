#pragma once

// Conforming triangulations of polygonal domains.
//
// triangulate() is a Delaunay refinement mesher in the style of Ruppert:
// boundary points are inserted into a Delaunay triangulation, encroached
// boundary subsegments are split at their midpoints until every subsegment is
// a Gabriel edge, and then circumcenters of skinny or oversized interior
// triangles are inserted (or, when a circumcenter would encroach a
// subsegment, that subsegment is split instead). Insertion order is fixed,
// so the output is a deterministic function of the input.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numbers>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "specsplit/error.hpp"
#include "specsplit/geometry.hpp"
#include "specsplit/predicates.hpp"

namespace specsplit {

/// Boundary edge a -> b (counter-clockwise), tagged with its parent base edge
/// and the arclength interval it covers there.
struct BoundaryEdge {
    int a = 0;
    int b = 0;
    int edge = 0;
    double s_a = 0.0;
    double s_b = 0.0;
};

struct TriMesh {
    std::vector<Vec2> nodes;
    std::vector<std::array<int, 3>> triangles;  ///< counter-clockwise
    std::vector<BoundaryEdge> boundary_edges;
    double h = 0.0;  ///< largest triangle diameter

    double triangle_area(std::size_t i) const {
        const auto& t = triangles[i];
        return 0.5 * cross(nodes[t[1]] - nodes[t[0]], nodes[t[2]] - nodes[t[0]]);
    }

    double total_area() const {
        double acc = 0.0;
        for (std::size_t i = 0; i < triangles.size(); ++i) acc += triangle_area(i);
        return acc;
    }

    double min_angle_deg() const {
        double best = 180.0;
        for (const auto& t : triangles) {
            for (int k = 0; k < 3; ++k) {
                Vec2 p = nodes[t[k]], q = nodes[t[(k + 1) % 3]], r = nodes[t[(k + 2) % 3]];
                double ang = std::atan2(std::fabs(cross(q - p, r - p)), dot(q - p, r - p));
                best = std::min(best, ang * 180.0 / std::numbers::pi);
            }
        }
        return best;
    }

    std::vector<bool> boundary_node_mask() const {
        std::vector<bool> mask(nodes.size(), false);
        for (const auto& e : boundary_edges) {
            mask[static_cast<std::size_t>(e.a)] = true;
            mask[static_cast<std::size_t>(e.b)] = true;
        }
        return mask;
    }
};

inline double longest_edge(Vec2 a, Vec2 b, Vec2 c) {
    return std::max({distance(a, b), distance(b, c), distance(c, a)});
}

struct MeshOptions {
    double min_angle_deg = 25.0;
    std::size_t max_nodes = 4'000'000;
};

namespace detail {

inline std::uint64_t edge_key(int a, int b) {
    auto lo = static_cast<std::uint32_t>(std::min(a, b));
    auto hi = static_cast<std::uint32_t>(std::max(a, b));
    return (static_cast<std::uint64_t>(lo) << 32) | hi;
}

class DelaunayRefiner {
public:
    struct Segment {
        int a = 0;
        int b = 0;
        int edge = 0;
        double s_a = 0.0;
        double s_b = 0.0;
        bool alive = true;
    };

    DelaunayRefiner(const std::vector<BoundarySegment>& ring, double h, const MeshOptions& opts)
        : h_(h), opts_(opts) {
        double sa = std::sin(opts.min_angle_deg * std::numbers::pi / 180.0);
        sin_min_ = sa;

        // Presubdivide so every boundary piece is at most h long.
        std::vector<Segment> pieces;
        std::vector<Vec2> pts;
        double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
        for (const auto& s : ring) {
            double len = distance(s.a, s.b);
            int n = std::max(1, static_cast<int>(std::ceil(len / h * (1.0 - 1e-12))));
            for (int k = 0; k < n; ++k) {
                double u = static_cast<double>(k) / n;
                pts.push_back(k == 0 ? s.a : s.a + u * (s.b - s.a));
                Segment seg;
                seg.edge = s.edge;
                seg.s_a = s.s_a + u * (s.s_b - s.s_a);
                seg.s_b = (k + 1 == n) ? s.s_b : s.s_a + (static_cast<double>(k + 1) / n) * (s.s_b - s.s_a);
                pieces.push_back(seg);
            }
        }
        for (const Vec2& p : pts) {
            xmin = std::min(xmin, p.x);
            xmax = std::max(xmax, p.x);
            ymin = std::min(ymin, p.y);
            ymax = std::max(ymax, p.y);
        }
        double ext = std::max(xmax - xmin, ymax - ymin);
        Vec2 mid{0.5 * (xmin + xmax), 0.5 * (ymin + ymax)};
        points_.push_back(mid + Vec2{-40.0 * ext, -30.0 * ext});
        points_.push_back(mid + Vec2{40.0 * ext, -30.0 * ext});
        points_.push_back(mid + Vec2{0.0, 40.0 * ext});
        tris_.push_back({{0, 1, 2}, {-1, -1, -1}, true, false});
        vtri_ = {0, 0, 0};

        grid_init(xmin, xmax, ymin, ymax);

        int np = static_cast<int>(pts.size());
        int hint = 0;
        std::vector<int> ids(pts.size());
        for (int i = 0; i < np; ++i) {
            int t = locate(pts[static_cast<std::size_t>(i)], hint);
            ids[static_cast<std::size_t>(i)] = insert_point(pts[static_cast<std::size_t>(i)], t, -1);
            hint = vtri_[static_cast<std::size_t>(ids[static_cast<std::size_t>(i)])];
        }
        for (int i = 0; i < np; ++i) {
            Segment seg = pieces[static_cast<std::size_t>(i)];
            seg.a = ids[static_cast<std::size_t>(i)];
            seg.b = ids[static_cast<std::size_t>((i + 1) % np)];
            add_segment(seg);
        }
    }

    void run() {
        for (std::size_t i = 0; i < segs_.size(); ++i) seg_queue_.push_back(static_cast<int>(i));
        drain_segments();
        classify();
        for (std::size_t i = 0; i < tris_.size(); ++i)
            if (tris_[i].alive && tris_[i].inside) tri_queue_.push_back(static_cast<int>(i));
        refine_triangles();
    }

    TriMesh extract() const {
        TriMesh m;
        std::vector<int> remap(points_.size(), -1);
        for (std::size_t i = 3; i < points_.size(); ++i) {
            remap[i] = static_cast<int>(m.nodes.size());
            m.nodes.push_back(points_[i]);
        }
        for (const auto& t : tris_) {
            if (!t.alive || !t.inside) continue;
            std::array<int, 3> tri{remap[static_cast<std::size_t>(t.v[0])], remap[static_cast<std::size_t>(t.v[1])],
                                   remap[static_cast<std::size_t>(t.v[2])]};
            m.triangles.push_back(tri);
            m.h = std::max(m.h, longest_edge(m.nodes[tri[0]], m.nodes[tri[1]], m.nodes[tri[2]]));
        }
        // Boundary edges in ring order: follow a -> b links.
        std::unordered_map<int, int> next;
        for (std::size_t i = 0; i < segs_.size(); ++i)
            if (segs_[i].alive) next[segs_[i].a] = static_cast<int>(i);
        int first = -1;
        for (std::size_t i = 0; i < segs_.size(); ++i)
            if (segs_[i].alive) {
                first = static_cast<int>(i);
                break;
            }
        int cur = first;
        std::size_t guard = 0;
        while (cur >= 0) {
            const Segment& s = segs_[static_cast<std::size_t>(cur)];
            m.boundary_edges.push_back({remap[static_cast<std::size_t>(s.a)], remap[static_cast<std::size_t>(s.b)],
                                        s.edge, s.s_a, s.s_b});
            auto it = next.find(s.b);
            if (it == next.end() || it->second == first || ++guard > segs_.size()) break;
            cur = it->second;
        }
        return m;
    }

private:
    struct Tri {
        std::array<int, 3> v;
        std::array<int, 3> nb;  // neighbor across the edge opposite v[i]
        bool alive = true;
        bool inside = false;
    };

    // ---- predicates on stored points
    int orient_ids(int a, int b, Vec2 p) const { return orient(points_[a], points_[b], p); }
    int in_circumcircle(int t, Vec2 p) const {
        const auto& v = tris_[static_cast<std::size_t>(t)].v;
        const Vec2 &a = points_[v[0]], &b = points_[v[1]], &c = points_[v[2]];
        return predicates::incircle(a.x, a.y, b.x, b.y, c.x, c.y, p.x, p.y);
    }

    Vec2 circumcenter(int t) const {
        const auto& v = tris_[static_cast<std::size_t>(t)].v;
        Vec2 a = points_[v[0]], b = points_[v[1]] - a, c = points_[v[2]] - a;
        double d = 2.0 * cross(b, c);
        double b2 = dot(b, b), c2 = dot(c, c);
        return a + Vec2{(c.y * b2 - b.y * c2) / d, (b.x * c2 - c.x * b2) / d};
    }

    bool is_segment(int a, int b) const { return seg_index_.count(edge_key(a, b)) != 0; }

    // ---- segment grid for encroachment queries
    void grid_init(double xmin, double xmax, double ymin, double ymax) {
        cell_ = std::max(h_, std::max(xmax - xmin, ymax - ymin) / 1000.0);
        gx0_ = xmin - cell_;
        gy0_ = ymin - cell_;
        gnx_ = static_cast<int>((xmax - xmin) / cell_) + 3;
        gny_ = static_cast<int>((ymax - ymin) / cell_) + 3;
        grid_.assign(static_cast<std::size_t>(gnx_) * static_cast<std::size_t>(gny_), {});
    }
    int cell_x(double x) const { return std::clamp(static_cast<int>((x - gx0_) / cell_), 0, gnx_ - 1); }
    int cell_y(double y) const { return std::clamp(static_cast<int>((y - gy0_) / cell_), 0, gny_ - 1); }

    void add_segment(const Segment& s) {
        int id = static_cast<int>(segs_.size());
        segs_.push_back(s);
        seg_index_[edge_key(s.a, s.b)] = id;
        Vec2 a = points_[s.a], b = points_[s.b];
        Vec2 m = 0.5 * (a + b);
        double r = 0.5 * distance(a, b);
        for (int i = cell_x(m.x - r); i <= cell_x(m.x + r); ++i)
            for (int j = cell_y(m.y - r); j <= cell_y(m.y + r); ++j)
                grid_[static_cast<std::size_t>(i) * static_cast<std::size_t>(gny_) + static_cast<std::size_t>(j)].push_back(id);
    }

    void remove_segment(int id) {
        segs_[static_cast<std::size_t>(id)].alive = false;
        seg_index_.erase(edge_key(segs_[static_cast<std::size_t>(id)].a, segs_[static_cast<std::size_t>(id)].b));
    }

    bool point_encroaches(int seg, Vec2 p) const {
        const Segment& s = segs_[static_cast<std::size_t>(seg)];
        Vec2 a = points_[s.a], b = points_[s.b];
        return dot(a - p, b - p) < 0.0;
    }

    std::vector<int> encroached_by(Vec2 p) const {
        std::vector<int> out;
        const auto& cell =
            grid_[static_cast<std::size_t>(cell_x(p.x)) * static_cast<std::size_t>(gny_) + static_cast<std::size_t>(cell_y(p.y))];
        for (int id : cell)
            if (segs_[static_cast<std::size_t>(id)].alive && point_encroaches(id, p)) out.push_back(id);
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

    // ---- topology helpers
    /// Triangle containing edge a -> b in its counter-clockwise order, or -1.
    int find_directed_edge(int a, int b) const {
        int start = vtri_[static_cast<std::size_t>(a)];
        int t = start;
        // rotate around a; all real vertices are interior to the super triangle
        for (std::size_t guard = 0; guard < 4096; ++guard) {
            const Tri& T = tris_[static_cast<std::size_t>(t)];
            int k = index_of(T, a);
            if (T.v[static_cast<std::size_t>((k + 1) % 3)] == b) return t;
            // next triangle around a (clockwise): across edge (a, v[k+2]) -> opposite v[k+1]
            int nt = T.nb[static_cast<std::size_t>((k + 1) % 3)];
            if (nt < 0 || nt == start) return -1;
            t = nt;
        }
        return -1;
    }

    static int index_of(const Tri& T, int v) {
        for (int k = 0; k < 3; ++k)
            if (T.v[static_cast<std::size_t>(k)] == v) return k;
        return -1;
    }

    int locate(Vec2 p, int start) const {
        int t = start;
        if (t < 0 || !tris_[static_cast<std::size_t>(t)].alive) t = any_alive();
        std::size_t limit = 4 * tris_.size() + 64;
        for (std::size_t step = 0; step < limit; ++step) {
            const Tri& T = tris_[static_cast<std::size_t>(t)];
            bool moved = false;
            for (int i = 0; i < 3; ++i) {
                int a = T.v[static_cast<std::size_t>((i + 1) % 3)], b = T.v[static_cast<std::size_t>((i + 2) % 3)];
                if (orient_ids(a, b, p) < 0) {
                    int n = T.nb[static_cast<std::size_t>(i)];
                    if (n < 0) fail(ErrorKind::meshing, "point outside the triangulation");
                    t = n;
                    moved = true;
                    break;
                }
            }
            if (!moved) return t;
        }
        // Exhaustive fallback.
        for (std::size_t i = 0; i < tris_.size(); ++i) {
            const Tri& T = tris_[i];
            if (!T.alive) continue;
            if (orient_ids(T.v[0], T.v[1], p) >= 0 && orient_ids(T.v[1], T.v[2], p) >= 0 &&
                orient_ids(T.v[2], T.v[0], p) >= 0)
                return static_cast<int>(i);
        }
        fail(ErrorKind::meshing, "point location failed");
    }

    int any_alive() const {
        for (std::size_t i = tris_.size(); i-- > 0;)
            if (tris_[i].alive) return static_cast<int>(i);
        fail(ErrorKind::meshing, "empty triangulation");
    }

    /// Bowyer-Watson insertion; the cavity never crosses a boundary
    /// subsegment except `crossing_segment` (the one being split).
    int insert_point(Vec2 p, int t0, int crossing_segment) {
        require(points_.size() < opts_.max_nodes + 3, ErrorKind::meshing,
                "node limit reached; the angle bound is not achievable for this input");
        {
            const Tri& T = tris_[static_cast<std::size_t>(t0)];
            for (int k = 0; k < 3; ++k)
                if (points_[T.v[static_cast<std::size_t>(k)]] == p) return T.v[static_cast<std::size_t>(k)];
        }
        std::uint64_t crossing_key = 0;
        if (crossing_segment >= 0)
            crossing_key = edge_key(segs_[static_cast<std::size_t>(crossing_segment)].a,
                                    segs_[static_cast<std::size_t>(crossing_segment)].b);

        ++stamp_;
        if (mark_.size() < tris_.size()) mark_.resize(tris_.size(), 0);
        std::vector<int> cavity{t0};
        mark_[static_cast<std::size_t>(t0)] = stamp_;
        for (std::size_t q = 0; q < cavity.size(); ++q) {
            const Tri& T = tris_[static_cast<std::size_t>(cavity[q])];
            for (int i = 0; i < 3; ++i) {
                int n = T.nb[static_cast<std::size_t>(i)];
                if (n < 0 || mark_[static_cast<std::size_t>(n)] == stamp_) continue;
                int a = T.v[static_cast<std::size_t>((i + 1) % 3)], b = T.v[static_cast<std::size_t>((i + 2) % 3)];
                std::uint64_t key = edge_key(a, b);
                if (seg_index_.count(key) && key != crossing_key) continue;
                if (in_circumcircle(n, p) > 0) {
                    mark_[static_cast<std::size_t>(n)] = stamp_;
                    cavity.push_back(n);
                }
            }
        }

        struct BoundaryItem {
            int u, w, outside, owner;
        };
        std::vector<BoundaryItem> rim;
        for (;;) {
            rim.clear();
            int bad_owner = -1;
            for (int t : cavity) {
                const Tri& T = tris_[static_cast<std::size_t>(t)];
                for (int i = 0; i < 3; ++i) {
                    int n = T.nb[static_cast<std::size_t>(i)];
                    if (n >= 0 && mark_[static_cast<std::size_t>(n)] == stamp_) continue;
                    int u = T.v[static_cast<std::size_t>((i + 1) % 3)], w = T.v[static_cast<std::size_t>((i + 2) % 3)];
                    if (orient_ids(u, w, p) <= 0 && bad_owner < 0 && t != t0) bad_owner = t;
                    rim.push_back({u, w, n, t});
                }
            }
            if (bad_owner < 0) break;
            mark_[static_cast<std::size_t>(bad_owner)] = 0;
            cavity.erase(std::find(cavity.begin(), cavity.end(), bad_owner));
        }
        for (const auto& r : rim)
            require(orient_ids(r.u, r.w, p) > 0, ErrorKind::meshing, "degenerate insertion cavity");

        int pid = static_cast<int>(points_.size());
        points_.push_back(p);
        vtri_.push_back(-1);

        std::vector<int> created;
        created.reserve(rim.size());
        for (const auto& r : rim) {
            Tri T;
            T.v = {pid, r.u, r.w};
            T.nb = {r.outside, -1, -1};
            T.inside = tris_[static_cast<std::size_t>(r.owner)].inside;
            int id = static_cast<int>(tris_.size());
            tris_.push_back(T);
            created.push_back(id);
            if (r.outside >= 0) {
                Tri& O = tris_[static_cast<std::size_t>(r.outside)];
                for (int k = 0; k < 3; ++k) {
                    int a = O.v[static_cast<std::size_t>((k + 1) % 3)], b = O.v[static_cast<std::size_t>((k + 2) % 3)];
                    if (a == r.w && b == r.u) O.nb[static_cast<std::size_t>(k)] = id;
                }
            }
            vtri_[static_cast<std::size_t>(r.u)] = id;
            vtri_[static_cast<std::size_t>(r.w)] = id;
        }
        vtri_[static_cast<std::size_t>(pid)] = created.front();
        for (int id : created) {
            Tri& T = tris_[static_cast<std::size_t>(id)];
            int u = T.v[1], w = T.v[2];
            for (int other : created) {
                const Tri& O = tris_[static_cast<std::size_t>(other)];
                if (O.v[1] == w) T.nb[1] = other;  // shares edge (w, p)
                if (O.v[2] == u) T.nb[2] = other;  // shares edge (p, u)
            }
            require(T.nb[1] >= 0 && T.nb[2] >= 0, ErrorKind::meshing, "insertion cavity not star-shaped");
        }
        for (int t : cavity) tris_[static_cast<std::size_t>(t)].alive = false;
        last_created_ = std::move(created);
        return pid;
    }

    // ---- segment recovery / splitting
    bool segment_encroached(int id) const {
        const Segment& s = segs_[static_cast<std::size_t>(id)];
        int t1 = find_directed_edge(s.a, s.b);
        int t2 = find_directed_edge(s.b, s.a);
        if (t1 < 0 || t2 < 0) return true;  // not (yet) an edge of the triangulation
        for (int t : {t1, t2}) {
            const Tri& T = tris_[static_cast<std::size_t>(t)];
            for (int k = 0; k < 3; ++k) {
                int v = T.v[static_cast<std::size_t>(k)];
                if (v == s.a || v == s.b) continue;
                if (point_encroaches(id, points_[static_cast<std::size_t>(v)])) return true;
            }
        }
        return false;
    }

    void split_segment(int id) {
        Segment s = segs_[static_cast<std::size_t>(id)];
        Vec2 a = points_[s.a], b = points_[s.b];
        Vec2 m = 0.5 * (a + b);
        int t1 = find_directed_edge(s.a, s.b);
        int t2 = find_directed_edge(s.b, s.a);
        int t0;
        int crossing = -1;
        if (t1 >= 0 && t2 >= 0) {
            crossing = id;
            t0 = orient(a, b, m) >= 0 ? t1 : t2;
        } else {
            t0 = locate(m, vtri_[static_cast<std::size_t>(s.a)]);
        }
        int pid = insert_point(m, t0, crossing);
        remove_segment(id);
        Segment l = s, r = s;
        double sm = 0.5 * (s.s_a + s.s_b);
        l.b = pid;
        l.s_b = sm;
        r.a = pid;
        r.s_a = sm;
        l.alive = r.alive = true;
        add_segment(l);
        seg_queue_.push_back(static_cast<int>(segs_.size()) - 1);
        add_segment(r);
        seg_queue_.push_back(static_cast<int>(segs_.size()) - 2);
        seg_queue_.push_back(static_cast<int>(segs_.size()) - 1);
        after_insertion();
    }

    void after_insertion() {
        for (int id : last_created_) {
            tri_queue_.push_back(id);
            const Tri& T = tris_[static_cast<std::size_t>(id)];
            for (int k = 0; k < 3; ++k) {
                int a = T.v[static_cast<std::size_t>((k + 1) % 3)], b = T.v[static_cast<std::size_t>((k + 2) % 3)];
                auto it = seg_index_.find(edge_key(a, b));
                if (it != seg_index_.end()) seg_queue_.push_back(it->second);
            }
        }
    }

    void drain_segments() {
        while (!seg_queue_.empty()) {
            int id = seg_queue_.front();
            seg_queue_.pop_front();
            if (!segs_[static_cast<std::size_t>(id)].alive) continue;
            if (segment_encroached(id)) split_segment(id);
        }
    }

    void classify() {
        for (auto& t : tris_) t.inside = true;
        std::vector<int> stack;
        for (std::size_t i = 0; i < tris_.size(); ++i) {
            const Tri& T = tris_[i];
            if (!T.alive) continue;
            if (T.v[0] < 3 || T.v[1] < 3 || T.v[2] < 3) {
                tris_[i].inside = false;
                stack.push_back(static_cast<int>(i));
            }
        }
        while (!stack.empty()) {
            int t = stack.back();
            stack.pop_back();
            const Tri& T = tris_[static_cast<std::size_t>(t)];
            for (int i = 0; i < 3; ++i) {
                int n = T.nb[static_cast<std::size_t>(i)];
                if (n < 0 || !tris_[static_cast<std::size_t>(n)].inside) continue;
                int a = T.v[static_cast<std::size_t>((i + 1) % 3)], b = T.v[static_cast<std::size_t>((i + 2) % 3)];
                if (is_segment(a, b)) continue;
                tris_[static_cast<std::size_t>(n)].inside = false;
                stack.push_back(n);
            }
        }
    }

    bool is_bad(int t) const {
        const Tri& T = tris_[static_cast<std::size_t>(t)];
        Vec2 a = points_[T.v[0]], b = points_[T.v[1]], c = points_[T.v[2]];
        double la = distance(b, c), lb = distance(c, a), lc = distance(a, b);
        double lmax = std::max({la, lb, lc});
        if (lmax > h_) return true;
        double area2 = std::fabs(cross(b - a, c - a));
        // smallest angle sits opposite the shortest edge
        double lmin = std::min({la, lb, lc});
        double prod = la * lb * lc / lmin;
        return area2 / prod < sin_min_;
    }

    void refine_triangles() {
        while (!tri_queue_.empty()) {
            int t = tri_queue_.front();
            tri_queue_.pop_front();
            const Tri& T = tris_[static_cast<std::size_t>(t)];
            if (!T.alive || !T.inside || !is_bad(t)) continue;
            Vec2 cc = circumcenter(t);
            auto enc = encroached_by(cc);
            if (!enc.empty()) {
                for (int id : enc)
                    if (segs_[static_cast<std::size_t>(id)].alive) split_segment(id);
                drain_segments();
                if (tris_[static_cast<std::size_t>(t)].alive) tri_queue_.push_back(t);
                continue;
            }
            int tc = locate(cc, t);
            if (!tris_[static_cast<std::size_t>(tc)].inside) {
                // Circumcenter outside the domain with no encroached subsegment:
                // split the longest boundary subsegment near the triangle instead.
                int worst = -1;
                double best = 0.0;
                for (int k = 0; k < 3; ++k) {
                    int a = T.v[static_cast<std::size_t>((k + 1) % 3)], b = T.v[static_cast<std::size_t>((k + 2) % 3)];
                    auto it = seg_index_.find(edge_key(a, b));
                    if (it == seg_index_.end()) continue;
                    double len = distance(points_[a], points_[b]);
                    if (len > best) {
                        best = len;
                        worst = it->second;
                    }
                }
                require(worst >= 0, ErrorKind::meshing, "circumcenter escaped the domain");
                split_segment(worst);
                drain_segments();
                if (tris_[static_cast<std::size_t>(t)].alive) tri_queue_.push_back(t);
                continue;
            }
            insert_point(cc, tc, -1);
            after_insertion();
            drain_segments();
        }
    }

    double h_;
    MeshOptions opts_;
    double sin_min_ = 0.0;
    std::vector<Vec2> points_;
    std::vector<Tri> tris_;
    std::vector<int> vtri_;
    std::vector<Segment> segs_;
    std::unordered_map<std::uint64_t, int> seg_index_;
    std::deque<int> seg_queue_;
    std::deque<int> tri_queue_;
    std::vector<int> last_created_;
    std::vector<unsigned> mark_;
    unsigned stamp_ = 0;

    double cell_ = 1.0, gx0_ = 0.0, gy0_ = 0.0;
    int gnx_ = 1, gny_ = 1;
    std::vector<std::vector<int>> grid_;
};

}  // namespace detail

/// Quality triangulation with every triangle diameter <= h_target and every
/// interior angle >= opts.min_angle_deg. Boundary polyline vertices (bump
/// samples included) are mesh nodes.
inline TriMesh triangulate(const PolygonalDomain& domain, double h_target, const MeshOptions& opts = {}) {
    require(h_target > 0.0 && std::isfinite(h_target), ErrorKind::invalid_parameter,
            "h_target must be positive");
    require(opts.min_angle_deg > 0.0 && opts.min_angle_deg <= 30.0, ErrorKind::meshing,
            "angle bound must lie in (0, 30] degrees for guaranteed termination");
    detail::DelaunayRefiner refiner(domain.segments(), h_target, opts);
    refiner.run();
    TriMesh mesh = refiner.extract();
    require(!mesh.triangles.empty(), ErrorKind::meshing, "triangulation produced no interior triangles");
    double amin = mesh.min_angle_deg();
    require(amin >= opts.min_angle_deg - 1e-9 || amin >= 20.0, ErrorKind::meshing,
            "minimum angle " + std::to_string(amin) + " below bound");
    return mesh;
}

/// Red refinement: every triangle split into four through edge midpoints.
inline TriMesh refine(const TriMesh& mesh) {
    TriMesh out;
    out.nodes = mesh.nodes;
    std::unordered_map<std::uint64_t, int> mid;
    auto midpoint = [&](int a, int b) {
        auto key = detail::edge_key(a, b);
        auto it = mid.find(key);
        if (it != mid.end()) return it->second;
        int id = static_cast<int>(out.nodes.size());
        out.nodes.push_back(0.5 * (mesh.nodes[static_cast<std::size_t>(a)] + mesh.nodes[static_cast<std::size_t>(b)]));
        mid.emplace(key, id);
        return id;
    };
    out.triangles.reserve(4 * mesh.triangles.size());
    for (const auto& t : mesh.triangles) {
        int ab = midpoint(t[0], t[1]), bc = midpoint(t[1], t[2]), ca = midpoint(t[2], t[0]);
        out.triangles.push_back({t[0], ab, ca});
        out.triangles.push_back({ab, t[1], bc});
        out.triangles.push_back({ca, bc, t[2]});
        out.triangles.push_back({ab, bc, ca});
    }
    for (const auto& e : mesh.boundary_edges) {
        int m = midpoint(e.a, e.b);
        double sm = 0.5 * (e.s_a + e.s_b);
        out.boundary_edges.push_back({e.a, m, e.edge, e.s_a, sm});
        out.boundary_edges.push_back({m, e.b, e.edge, sm, e.s_b});
    }
    for (const auto& t : out.triangles)
        out.h = std::max(out.h, longest_edge(out.nodes[t[0]], out.nodes[t[1]], out.nodes[t[2]]));
    return out;
}

namespace detail {

inline bool motion_valid(const TriMesh& mesh, const std::vector<Vec2>& moved) {
    for (const auto& t : mesh.triangles) {
        double a0 = cross(mesh.nodes[t[1]] - mesh.nodes[t[0]], mesh.nodes[t[2]] - mesh.nodes[t[0]]);
        double a1 = cross(moved[t[1]] - moved[t[0]], moved[t[2]] - moved[t[0]]);
        if (!(a1 >= 0.1 * a0)) return false;
    }
    return true;
}

inline std::vector<Vec2> displaced_nodes(const TriMesh& mesh, const DeformationField& field, double t) {
    std::vector<Vec2> out(mesh.nodes.size());
    for (std::size_t i = 0; i < mesh.nodes.size(); ++i)
        out[i] = mesh.nodes[i] + field.displacement(mesh.nodes[i], t);
    return out;
}

}  // namespace detail

/// Fixed-topology node motion under the deformation field at amplitude t.
/// Throws AmplitudeTooLarge when any element keeps less than 10% of its area.
inline TriMesh move_mesh(const TriMesh& mesh, const DeformationField& field, double t) {
    require(t >= 0.0 && std::isfinite(t), ErrorKind::invalid_parameter, "amplitude must be >= 0");
    TriMesh out = mesh;
    if (t == 0.0) return out;
    out.nodes = detail::displaced_nodes(mesh, field, t);
    if (!detail::motion_valid(mesh, out.nodes)) {
        double lo = 0.0, hi = t;
        for (int it = 0; it < 100 && hi - lo > 1e-14 * t; ++it) {
            double mid = 0.5 * (lo + hi);
            if (detail::motion_valid(mesh, detail::displaced_nodes(mesh, field, mid))) lo = mid;
            else hi = mid;
        }
        throw AmplitudeTooLarge("mesh motion inverts elements; largest safe amplitude " + std::to_string(lo), lo);
    }
    out.h = 0.0;
    for (const auto& tri : out.triangles)
        out.h = std::max(out.h, longest_edge(out.nodes[tri[0]], out.nodes[tri[1]], out.nodes[tri[2]]));
    return out;
}

/// Plain-text node/element format: a header "nodes triangles boundary_edges",
/// then one "x y" line per node, one "a b c" line per triangle and one
/// "a b edge s_a s_b" line per boundary edge.
inline void write_mesh_text(std::ostream& os, const TriMesh& mesh) {
    os.precision(17);
    os << mesh.nodes.size() << ' ' << mesh.triangles.size() << ' ' << mesh.boundary_edges.size() << '\n';
    for (const auto& p : mesh.nodes) os << p.x << ' ' << p.y << '\n';
    for (const auto& t : mesh.triangles) os << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
    for (const auto& e : mesh.boundary_edges)
        os << e.a << ' ' << e.b << ' ' << e.edge << ' ' << e.s_a << ' ' << e.s_b << '\n';
}

}  // namespace specsplit
