#pragma once

// Polygonal domains with outward bump deformations.
//
// A domain is a counter-clockwise simple polygon (its straight "base" edges
// carry stable ids 0..n-1) plus a ledger of bumps. The boundary that gets
// meshed is derived: every bump replaces a piece of its edge by a sampled
// polyline of s -> t * rho_c(s - s0) displaced along the outward normal.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "specsplit/error.hpp"
#include "specsplit/predicates.hpp"

namespace specsplit {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator-(Vec2 a) { return {-a.x, -a.y}; }
    friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
    friend Vec2 operator*(Vec2 a, double s) { return {s * a.x, s * a.y}; }
    friend Vec2 operator/(Vec2 a, double s) { return {a.x / s, a.y / s}; }
    friend bool operator==(Vec2 a, Vec2 b) { return a.x == b.x && a.y == b.y; }
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline double distance(Vec2 a, Vec2 b) { return norm(a - b); }
inline Vec2 normalized(Vec2 a) { return a / norm(a); }
/// Outward normal of a counter-clockwise boundary running along direction d.
inline Vec2 right_normal(Vec2 d) { return {d.y, -d.x}; }

inline int orient(Vec2 a, Vec2 b, Vec2 c) {
    return predicates::orient(a.x, a.y, b.x, b.y, c.x, c.y);
}

enum class BoundaryCondition { dirichlet, neumann, robin };

inline std::string_view to_string(BoundaryCondition bc) {
    switch (bc) {
        case BoundaryCondition::dirichlet: return "dirichlet";
        case BoundaryCondition::neumann: return "neumann";
        case BoundaryCondition::robin: return "robin";
    }
    return "dirichlet";
}

inline BoundaryCondition parse_boundary_condition(std::string_view s) {
    if (s == "dirichlet") return BoundaryCondition::dirichlet;
    if (s == "neumann") return BoundaryCondition::neumann;
    if (s == "robin") return BoundaryCondition::robin;
    fail(ErrorKind::invalid_parameter, "unknown boundary condition '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Bump profile rho_c(s) = c^2 exp(1 / ((s/c)^2 - 1)) on |s| < c, zero outside.

inline double bump_profile(double s, double c) {
    require(c > 0.0 && std::isfinite(c), ErrorKind::invalid_parameter,
            "bump radius must be positive");
    double q = (s / c) * (s / c);
    if (!(q < 1.0)) return 0.0;
    return c * c * std::exp(1.0 / (q - 1.0));
}

inline double bump_profile_derivative(double s, double c) {
    require(c > 0.0 && std::isfinite(c), ErrorKind::invalid_parameter,
            "bump radius must be positive");
    double q = (s / c) * (s / c);
    if (!(q < 1.0)) return 0.0;
    double rho = c * c * std::exp(1.0 / (q - 1.0));
    return rho * (-2.0 * s / (c * c)) / ((q - 1.0) * (q - 1.0));
}

/// Smooth monotone step: 0 for x <= 0, 1 for x >= 1, all derivatives vanish
/// at both ends.
inline double smooth_step(double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    double a = std::exp(-1.0 / x);
    double b = std::exp(-1.0 / (1.0 - x));
    return a / (a + b);
}

inline double smooth_step_derivative(double x) {
    if (x <= 0.0 || x >= 1.0) return 0.0;
    double a = std::exp(-1.0 / x);
    double b = std::exp(-1.0 / (1.0 - x));
    double s = a + b;
    return a * b * (1.0 / (x * x) + 1.0 / ((1.0 - x) * (1.0 - x))) / (s * s);
}

// ---------------------------------------------------------------------------

struct BumpSpec {
    int edge = 0;
    double s0 = 0.0;  ///< arclength of the bump center along its edge
    double c = 0.0;   ///< support radius
    double t = 0.0;   ///< amplitude
    int resolution = 64;

    friend bool operator==(const BumpSpec&, const BumpSpec&) = default;
};

struct Edge {
    int id = 0;
    Vec2 a;
    Vec2 b;
    Vec2 tangent;
    Vec2 normal;  ///< unit, outward
    double length = 0.0;

    Vec2 point_at(double s) const { return a + s * tangent; }
    /// Tangential coordinate and signed inward depth of p in the edge frame.
    std::pair<double, double> local(Vec2 p) const {
        Vec2 d = p - a;
        return {dot(d, tangent), -dot(d, normal)};
    }
};

/// One straight piece of the derived (meshed) boundary. Arclength tags refer
/// to the parent base edge.
struct BoundarySegment {
    Vec2 a;
    Vec2 b;
    int edge = 0;
    double s_a = 0.0;
    double s_b = 0.0;
};

namespace detail {

inline double signed_area(const std::vector<Vec2>& pts) {
    double acc = 0.0;
    std::size_t n = pts.size();
    for (std::size_t i = 0; i < n; ++i) acc += cross(pts[i], pts[(i + 1) % n]);
    return 0.5 * acc;
}

inline bool on_segment_closed(Vec2 a, Vec2 b, Vec2 p) {
    return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
           p.y <= std::max(a.y, b.y);
}

inline bool segments_intersect(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
    if (std::max(a.x, b.x) < std::min(c.x, d.x) || std::max(c.x, d.x) < std::min(a.x, b.x) ||
        std::max(a.y, b.y) < std::min(c.y, d.y) || std::max(c.y, d.y) < std::min(a.y, b.y))
        return false;
    int o1 = orient(a, b, c), o2 = orient(a, b, d), o3 = orient(c, d, a), o4 = orient(c, d, b);
    if (o1 != o2 && o3 != o4 && o1 * o2 <= 0 && o3 * o4 <= 0) {
        if (o1 != 0 || o2 != 0) return true;
    }
    if (o1 == 0 && on_segment_closed(a, b, c)) return true;
    if (o2 == 0 && on_segment_closed(a, b, d)) return true;
    if (o3 == 0 && on_segment_closed(c, d, a)) return true;
    if (o4 == 0 && on_segment_closed(c, d, b)) return true;
    return false;
}

/// Simple closed polygon test; quadratic, fine for the few hundred vertices
/// the derived boundaries carry.
inline bool is_simple(const std::vector<Vec2>& pts) {
    std::size_t n = pts.size();
    if (n < 3) return false;
    for (std::size_t i = 0; i < n; ++i) {
        Vec2 a = pts[i], b = pts[(i + 1) % n];
        if (a == b) return false;
        // adjacent segment must not fold back onto this one
        Vec2 c = pts[(i + 2) % n];
        if (orient(a, b, c) == 0 && dot(b - a, c - b) < 0.0) return false;
        for (std::size_t j = i + 2; j < n; ++j) {
            if (i == 0 && j == n - 1) continue;
            Vec2 p = pts[j], q = pts[(j + 1) % n];
            if (segments_intersect(a, b, p, q)) return false;
        }
    }
    return true;
}

inline double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
    Vec2 d = b - a;
    double l2 = dot(d, d);
    double u = l2 > 0.0 ? std::clamp(dot(p - a, d) / l2, 0.0, 1.0) : 0.0;
    return distance(p, a + u * d);
}

/// Liang-Barsky: does segment pq meet the closed box [x0,x1] x [y0,y1]?
inline bool segment_meets_box(Vec2 p, Vec2 q, double x0, double x1, double y0, double y1) {
    double t0 = 0.0, t1 = 1.0;
    double dx = q.x - p.x, dy = q.y - p.y;
    auto clip = [&](double den, double num) {
        if (den == 0.0) return num >= 0.0;
        double r = num / den;
        if (den < 0.0) {
            if (r > t1) return false;
            t0 = std::max(t0, r);
        } else {
            if (r < t0) return false;
            t1 = std::min(t1, r);
        }
        return true;
    };
    return clip(-dx, p.x - x0) && clip(dx, x1 - p.x) && clip(-dy, p.y - y0) &&
           clip(dy, y1 - p.y) && t0 <= t1;
}

}  // namespace detail

/// Closed polygon with a boundary condition and an applied-bump ledger.
/// Immutable; every operation returns a new domain.
class PolygonalDomain {
public:
    PolygonalDomain(std::vector<Vec2> vertices, BoundaryCondition bc = BoundaryCondition::dirichlet,
                    double sigma = 0.0, std::vector<BumpSpec> bumps = {})
        : vertices_(std::move(vertices)), bc_(bc), sigma_(sigma), bumps_(std::move(bumps)) {
        require(vertices_.size() >= 3, ErrorKind::invalid_domain, "polygon needs at least 3 vertices");
        for (const auto& v : vertices_)
            require(std::isfinite(v.x) && std::isfinite(v.y), ErrorKind::invalid_domain,
                    "non-finite vertex coordinate");
        if (bc_ == BoundaryCondition::robin)
            require(sigma_ != 0.0 && std::isfinite(sigma_), ErrorKind::invalid_parameter,
                    "Robin coefficient sigma must be non-zero");
        build_edges();
        require(detail::signed_area(vertices_) > 0.0, ErrorKind::invalid_domain,
                "polygon must be counter-clockwise with positive area");
        require(detail::is_simple(vertices_), ErrorKind::invalid_domain,
                "polygon must be simple");
        for (std::size_t i = 0; i < bumps_.size(); ++i) validate_bump(bumps_[i], i);
        build_boundary();
        if (!bumps_.empty())
            require(detail::is_simple(boundary_), ErrorKind::placement,
                    "bumped boundary self-intersects");
    }

    const std::vector<Vec2>& vertices() const { return vertices_; }
    const std::vector<Edge>& edges() const { return edges_; }
    BoundaryCondition bc() const { return bc_; }
    double sigma() const { return sigma_; }
    const std::vector<BumpSpec>& bumps() const { return bumps_; }

    const Edge& edge(int id) const {
        require(id >= 0 && id < static_cast<int>(edges_.size()), ErrorKind::lookup,
                "unknown edge id " + std::to_string(id));
        return edges_[static_cast<std::size_t>(id)];
    }

    /// Derived boundary polyline (bump samples included), counter-clockwise.
    const std::vector<Vec2>& boundary() const { return boundary_; }
    const std::vector<BoundarySegment>& segments() const { return segments_; }

    double area() const { return detail::signed_area(boundary_); }
    double base_area() const { return detail::signed_area(vertices_); }
    double perimeter() const {
        double acc = 0.0;
        for (const auto& s : segments_) acc += distance(s.a, s.b);
        return acc;
    }

    Vec2 bump_center(const BumpSpec& b) const { return edge(b.edge).point_at(b.s0); }

    PolygonalDomain with_bumps(std::vector<BumpSpec> bumps) const {
        return PolygonalDomain(vertices_, bc_, sigma_, std::move(bumps));
    }
    PolygonalDomain with_boundary_condition(BoundaryCondition bc, double sigma) const {
        return PolygonalDomain(vertices_, bc, sigma, bumps_);
    }

private:
    void build_edges() {
        std::size_t n = vertices_.size();
        edges_.clear();
        for (std::size_t i = 0; i < n; ++i) {
            Edge e;
            e.id = static_cast<int>(i);
            e.a = vertices_[i];
            e.b = vertices_[(i + 1) % n];
            e.length = distance(e.a, e.b);
            require(e.length > 0.0, ErrorKind::invalid_domain, "zero-length edge");
            e.tangent = (e.b - e.a) / e.length;
            e.normal = right_normal(e.tangent);
            edges_.push_back(e);
        }
    }

    void validate_bump(const BumpSpec& b, std::size_t index) const {
        require(b.edge >= 0 && b.edge < static_cast<int>(edges_.size()), ErrorKind::placement,
                "bump on unknown edge " + std::to_string(b.edge));
        require(b.c > 0.0 && std::isfinite(b.c), ErrorKind::invalid_parameter,
                "bump radius must be positive");
        require(b.t >= 0.0 && std::isfinite(b.t), ErrorKind::invalid_parameter,
                "bump amplitude must be non-negative");
        require(b.resolution >= 3, ErrorKind::invalid_parameter, "bump resolution must be >= 3");
        const Edge& e = edges_[static_cast<std::size_t>(b.edge)];
        require(b.s0 - b.c > 0.0 && b.s0 + b.c < e.length, ErrorKind::placement,
                "bump support must lie strictly inside its edge");
        Vec2 center = e.point_at(b.s0);
        for (std::size_t j = 0; j < index; ++j) {
            const BumpSpec& o = bumps_[j];
            Vec2 oc = edges_[static_cast<std::size_t>(o.edge)].point_at(o.s0);
            require(distance(center, oc) > b.c + o.c, ErrorKind::placement,
                    "bump support overlaps an earlier bump");
        }
    }

    void build_boundary() {
        boundary_.clear();
        segments_.clear();
        struct Tagged {
            Vec2 p;
            int edge;
            double s;
        };
        std::vector<Tagged> pts;
        for (const Edge& e : edges_) {
            pts.push_back({e.a, e.id, 0.0});
            std::vector<const BumpSpec*> on_edge;
            for (const auto& b : bumps_)
                if (b.edge == e.id) on_edge.push_back(&b);
            std::sort(on_edge.begin(), on_edge.end(),
                      [](const BumpSpec* l, const BumpSpec* r) { return l->s0 < r->s0; });
            for (const BumpSpec* b : on_edge) {
                int n = b->resolution;
                for (int j = 0; j < n; ++j) {
                    double s = b->s0 - b->c + 2.0 * b->c * j / (n - 1);
                    if (j == n - 1) s = b->s0 + b->c;
                    double h = b->t * bump_profile(s - b->s0, b->c);
                    pts.push_back({e.point_at(s) + h * e.normal, e.id, s});
                }
            }
        }
        std::size_t n = pts.size();
        for (std::size_t i = 0; i < n; ++i) {
            const Tagged& p = pts[i];
            const Tagged& q = pts[(i + 1) % n];
            double s_end = (q.edge == p.edge) ? q.s : edges_[static_cast<std::size_t>(p.edge)].length;
            boundary_.push_back(p.p);
            segments_.push_back({p.p, q.p, p.edge, p.s, s_end});
        }
    }

    std::vector<Vec2> vertices_;
    BoundaryCondition bc_;
    double sigma_;
    std::vector<BumpSpec> bumps_;
    std::vector<Edge> edges_;
    std::vector<Vec2> boundary_;
    std::vector<BoundarySegment> segments_;
};

/// Returns the domain with `bump` appended to the ledger, sampled with
/// `resolution` points across its support.
inline PolygonalDomain apply_bump(const PolygonalDomain& domain, BumpSpec bump, int resolution = 64) {
    bump.resolution = resolution;
    auto bumps = domain.bumps();
    bumps.push_back(bump);
    return domain.with_bumps(std::move(bumps));
}

// ---------------------------------------------------------------------------

/// Outward normal bump field t * rho_c(s - s0) * eta(n) * nu, where n is the
/// depth below the bump edge and eta a smooth cutoff of width `cutoff_width`.
class DeformationField {
public:
    DeformationField(const PolygonalDomain& domain, BumpSpec bump, double cutoff_width = 0.0)
        : bump_(bump), width_(cutoff_width > 0.0 ? cutoff_width : bump.c) {
        require(bump.c > 0.0 && std::isfinite(bump.c), ErrorKind::invalid_parameter,
                "bump radius must be positive");
        require(std::isfinite(width_), ErrorKind::invalid_parameter, "cutoff width must be finite");
        require(bump.edge >= 0 && bump.edge < static_cast<int>(domain.edges().size()),
                ErrorKind::placement, "bump on unknown edge " + std::to_string(bump.edge));
        edge_ = domain.edge(bump.edge);
        require(bump.s0 - bump.c > 0.0 && bump.s0 + bump.c < edge_.length, ErrorKind::placement,
                "bump support must lie strictly inside its edge");
        // Other base edges must stay clear of the support box.
        for (const Edge& e : domain.edges()) {
            if (e.id == edge_.id) continue;
            auto [sa, na] = edge_.local(e.a);
            auto [sb, nb] = edge_.local(e.b);
            require(!detail::segment_meets_box({sa, na}, {sb, nb}, bump.s0 - bump.c,
                                               bump.s0 + bump.c, -width_, width_),
                    ErrorKind::placement, "deformation support reaches another edge");
        }
        for (const auto& o : domain.bumps()) {
            if (o.edge == bump.edge && o.s0 == bump.s0 && o.c == bump.c) continue;
            Vec2 oc = domain.bump_center(o);
            require(distance(oc, center()) > o.c + bump.c, ErrorKind::placement,
                    "deformation support overlaps an existing bump");
        }
    }

    const BumpSpec& bump() const { return bump_; }
    const Edge& edge() const { return edge_; }
    double cutoff_width() const { return width_; }
    Vec2 center() const { return edge_.point_at(bump_.s0); }
    double support_radius() const { return bump_.c + width_; }

    /// nu . (d/dt displacement) on the bump edge.
    double normal_velocity(double s) const { return bump_profile(s - bump_.s0, bump_.c); }

    Vec2 displacement(Vec2 p, double t) const {
        auto [s, n] = edge_.local(p);
        double ds = s - bump_.s0;
        if (std::fabs(ds) >= bump_.c || std::fabs(n) >= width_) return {};
        double eta = 1.0 - smooth_step(std::fabs(n) / width_);
        return (t * bump_profile(ds, bump_.c) * eta) * edge_.normal;
    }

    /// Row-major Jacobian of the displacement with respect to position.
    std::array<double, 4> jacobian(Vec2 p, double t) const {
        auto [s, n] = edge_.local(p);
        double ds = s - bump_.s0;
        if (std::fabs(ds) >= bump_.c || std::fabs(n) >= width_) return {0.0, 0.0, 0.0, 0.0};
        double y = std::fabs(n) / width_;
        double eta = 1.0 - smooth_step(y);
        double deta_dn = -smooth_step_derivative(y) / width_ * (n < 0.0 ? -1.0 : 1.0);
        double rho = bump_profile(ds, bump_.c);
        double drho = bump_profile_derivative(ds, bump_.c);
        // grad f = t (rho' eta tangent - rho eta_n normal), since dn/dp = -normal
        Vec2 g = t * (drho * eta * edge_.tangent - rho * deta_dn * edge_.normal);
        const Vec2 nu = edge_.normal;
        return {nu.x * g.x, nu.x * g.y, nu.y * g.x, nu.y * g.y};
    }

private:
    BumpSpec bump_;
    double width_;
    Edge edge_;
};

namespace detail {

/// sup over the unit support of |grad f| / c for the field with cutoff ratio
/// kappa = width / c, in scaled coordinates x = (s-s0)/c, y = |n|/width.
inline double scaled_gradient_sup(double kappa) {
    auto value = [kappa](double x, double y) {
        if (std::fabs(x) >= 1.0 || y >= 1.0 || y < 0.0) return 0.0;
        double q = x * x;
        double f = std::exp(1.0 / (q - 1.0));
        double df = f * (-2.0 * x) / ((q - 1.0) * (q - 1.0));
        double eta = 1.0 - smooth_step(y);
        double deta = smooth_step_derivative(y) / kappa;
        return std::hypot(df * eta, f * deta);
    };
    constexpr int kGrid = 256;
    double best = 0.0, bx = 0.0, by = 0.0;
    for (int i = 0; i < kGrid; ++i) {
        double x = (i + 0.5) / kGrid;
        for (int j = 0; j <= kGrid; ++j) {
            double y = static_cast<double>(j) / kGrid;
            double v = value(x, y);
            if (v > best) {
                best = v;
                bx = x;
                by = y;
            }
        }
    }
    // Pattern search around the grid maximum.
    double step = 1.0 / kGrid;
    while (step > 1e-13) {
        bool improved = false;
        for (auto [dx, dy] : std::array<std::pair<double, double>, 8>{
                 {{step, 0}, {-step, 0}, {0, step}, {0, -step}, {step, step}, {-step, -step},
                  {step, -step}, {-step, step}}}) {
            double x = bx + dx, y = std::max(0.0, by + dy);
            double v = value(x, y);
            if (v > best) {
                best = v;
                bx = x;
                by = y;
                improved = true;
            }
        }
        if (!improved) step *= 0.5;
    }
    return best;
}

}  // namespace detail

/// |phi_t - id|_{C^1} = max(sup |displacement|, sup ||Jacobian||) over the
/// plane, from the closed-form profile and cutoff.
inline double deformation_c1_norm(const DeformationField& field, double t) {
    require(t >= 0.0 && std::isfinite(t), ErrorKind::invalid_parameter, "amplitude must be >= 0");
    if (t == 0.0) return 0.0;
    double c = field.bump().c;
    double sup_disp = c * c * std::exp(-1.0);
    double sup_grad = c * detail::scaled_gradient_sup(field.cutoff_width() / c);
    return t * std::max(sup_disp, sup_grad);
}

// ---------------------------------------------------------------------------

/// Largest local graph slope over boundary vertices: a vertex whose incident
/// edges turn by angle theta admits a graph representation with slope
/// tan(|theta| / 2) and no better.
inline double lipschitz_constant(const std::vector<Vec2>& ring) {
    std::size_t n = ring.size();
    require(n >= 3, ErrorKind::invalid_domain, "polygon needs at least 3 vertices");
    double best = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        Vec2 prev = ring[(i + n - 1) % n], cur = ring[i], next = ring[(i + 1) % n];
        Vec2 e1 = cur - prev, e2 = next - cur;
        require(norm(e1) > 0.0 && norm(e2) > 0.0, ErrorKind::invalid_domain, "degenerate edge");
        double turn = std::atan2(cross(e1, e2), dot(e1, e2));
        best = std::max(best, std::tan(0.5 * std::fabs(turn)));
    }
    return best;
}

inline double lipschitz_constant(const PolygonalDomain& domain) {
    return lipschitz_constant(domain.boundary());
}

// ---------------------------------------------------------------------------

struct BoundaryLocation {
    int edge = -1;
    double s = 0.0;
    int vertex = -1;  ///< base vertex index when the point coincides with one
};

/// Finds where x sits on the base polygon, within `tol`.
inline std::optional<BoundaryLocation> locate_on_boundary(const PolygonalDomain& domain, Vec2 x,
                                                          double tol = 1e-12) {
    const auto& verts = domain.vertices();
    for (std::size_t i = 0; i < verts.size(); ++i)
        if (distance(verts[i], x) <= tol)
            return BoundaryLocation{static_cast<int>(i), 0.0, static_cast<int>(i)};
    for (const Edge& e : domain.edges()) {
        if (detail::point_segment_distance(x, e.a, e.b) <= tol) {
            double s = std::clamp(dot(x - e.a, e.tangent), 0.0, e.length);
            return BoundaryLocation{e.id, s, -1};
        }
    }
    return std::nullopt;
}

struct FlattenResult {
    PolygonalDomain domain;
    double lipschitz_before = 0.0;
    double lipschitz_after = 0.0;
    double lipschitz_increase() const { return lipschitz_after - lipschitz_before; }
};

/// Replaces the boundary near `center` by the graph of phi * eta in the local
/// tangent frame, where phi is the boundary graph and eta a smooth cutoff that
/// vanishes on |x| <= r and equals one on |x| >= R. The result is straight on
/// |x| <= r and unchanged outside radius R.
inline FlattenResult flatten_patch(const PolygonalDomain& domain, Vec2 center, double r, double R,
                                   int resolution = 64) {
    require(r > 0.0 && std::isfinite(r) && std::isfinite(R), ErrorKind::invalid_parameter,
            "flattening radii must be positive");
    require(r < R, ErrorKind::invalid_parameter, "flattening needs r < R");
    require(resolution >= 2, ErrorKind::invalid_parameter, "flattening resolution must be >= 2");
    const double before = lipschitz_constant(domain);

    auto loc = locate_on_boundary(domain, center, 1e-12 * std::max(1.0, norm(center)));
    require(loc.has_value(), ErrorKind::geometry, "flattening center is not on the boundary");
    for (const auto& b : domain.bumps())
        require(distance(domain.bump_center(b), center) >= R + b.c, ErrorKind::placement,
                "flattening patch overlaps an applied bump");

    const auto& verts = domain.vertices();
    const int n = static_cast<int>(verts.size());

    // Local frame: tangent along the boundary direction, normal outward.
    Vec2 tangent;
    int first_fwd, first_bwd;  // first base vertex strictly after / before the center
    if (loc->vertex >= 0) {
        int v = loc->vertex;
        Vec2 tin = normalized(verts[v] - verts[(v + n - 1) % n]);
        Vec2 tout = normalized(verts[(v + 1) % n] - verts[v]);
        Vec2 sum = tin + tout;
        require(norm(sum) > 1e-12, ErrorKind::geometry, "boundary folds back at flattening center");
        tangent = normalized(sum);
        first_fwd = (v + 1) % n;
        first_bwd = (v + n - 1) % n;
    } else {
        const Edge& e = domain.edge(loc->edge);
        tangent = e.tangent;
        first_fwd = (loc->edge + 1) % n;
        first_bwd = loc->edge;
    }
    Vec2 normal = right_normal(tangent);
    auto to_local = [&](Vec2 p) { return Vec2{dot(p - center, tangent), dot(p - center, normal)}; };
    auto to_global = [&](Vec2 q) { return center + q.x * tangent + q.y * normal; };

    // Walk forward until x >= R and backward until x <= -R; x must be monotone.
    std::vector<int> fwd, bwd;
    {
        double last = 0.0;
        int i = first_fwd;
        for (int steps = 0;; ++steps) {
            require(steps < n, ErrorKind::geometry, "patch boundary is not a graph");
            double x = to_local(verts[i]).x;
            require(x > last, ErrorKind::geometry, "patch boundary is not a graph over the tangent");
            fwd.push_back(i);
            last = x;
            if (x >= R) break;
            i = (i + 1) % n;
        }
        last = 0.0;
        i = first_bwd;
        for (int steps = 0;; ++steps) {
            require(steps < n, ErrorKind::geometry, "patch boundary is not a graph");
            double x = to_local(verts[i]).x;
            require(x < last, ErrorKind::geometry, "patch boundary is not a graph over the tangent");
            bwd.push_back(i);
            last = x;
            if (x <= -R) break;
            i = (i + n - 1) % n;
        }
        require(fwd.back() != bwd.back() && static_cast<int>(fwd.size() + bwd.size()) <= n + 1,
                ErrorKind::geometry, "flattening patch covers the whole boundary");
    }

    // Graph of the boundary as sorted (x, y) knots.
    std::vector<Vec2> knots;
    for (auto it = bwd.rbegin(); it != bwd.rend(); ++it) knots.push_back(to_local(verts[*it]));
    knots.push_back({0.0, 0.0});
    for (int i : fwd) knots.push_back(to_local(verts[i]));
    auto phi = [&](double x) {
        auto it = std::upper_bound(knots.begin(), knots.end(), x,
                                   [](double v, const Vec2& k) { return v < k.x; });
        if (it == knots.begin()) return knots.front().y;
        if (it == knots.end()) return knots.back().y;
        const Vec2& hi = *it;
        const Vec2& lo = *(it - 1);
        return lo.y + (hi.y - lo.y) * (x - lo.x) / (hi.x - lo.x);
    };

    // Other edges must stay outside radius R.
    {
        std::vector<bool> in_chain(static_cast<std::size_t>(n), false);
        for (int i : fwd) in_chain[static_cast<std::size_t>(i)] = true;
        for (int i : bwd) in_chain[static_cast<std::size_t>(i)] = true;
        if (loc->vertex >= 0) in_chain[static_cast<std::size_t>(loc->vertex)] = true;
        for (int i = 0; i < n; ++i) {
            int j = (i + 1) % n;
            bool chain_edge = in_chain[static_cast<std::size_t>(i)] && in_chain[static_cast<std::size_t>(j)];
            if (chain_edge) continue;
            double d = detail::point_segment_distance(center, verts[i], verts[j]);
            require(d > R, ErrorKind::invalid_parameter,
                    "ball of radius R meets edges outside the patch");
        }
    }

    const double scale = std::max(1.0, R);
    bool flat = std::fabs(phi(-r)) <= 1e-12 * scale && std::fabs(phi(r)) <= 1e-12 * scale;
    for (const Vec2& k : knots)
        if (std::fabs(k.x) < r && std::fabs(k.y) > 1e-12 * scale) flat = false;
    if (flat) return FlattenResult{domain, before, before};

    auto eta = [&](double x) { return smooth_step((std::fabs(x) - r) / (R - r)); };
    std::vector<double> xs;
    for (int j = 0; j < resolution; ++j) {
        double u = r + (R - r) * j / (resolution - 1);
        xs.push_back(-u);
        xs.push_back(u);
    }
    for (const Vec2& k : knots)
        if (std::fabs(k.x) > r && std::fabs(k.x) < R) xs.push_back(k.x);
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end(),
                         [&](double a, double b) { return std::fabs(a - b) <= 1e-12 * scale; }),
             xs.end());

    std::vector<Vec2> patch;
    for (double x : xs) {
        if (std::fabs(x) < r) continue;
        patch.push_back(to_global({x, phi(x) * eta(x)}));
    }

    // Assemble the new ring: ..., bwd.back(), patch..., fwd.back(), ...
    int start = fwd.back();
    int stop = bwd.back();
    std::vector<Vec2> ring;
    for (int i = start;; i = (i + 1) % n) {
        ring.push_back(verts[i]);
        if (i == stop) break;
    }
    // Drop samples that coincide with the chain end vertices.
    auto near = [&](Vec2 a, Vec2 b) { return distance(a, b) <= 1e-12 * scale; };
    for (const Vec2& p : patch) {
        if (near(p, ring.back()) || near(p, verts[start])) continue;
        ring.push_back(p);
    }

    // Remap bump edge ids by matching edge endpoints.
    std::vector<BumpSpec> bumps;
    const int m = static_cast<int>(ring.size());
    for (auto b : domain.bumps()) {
        const Edge& old = domain.edge(b.edge);
        int found = -1;
        for (int i = 0; i < m; ++i)
            if (ring[i] == old.a && ring[(i + 1) % m] == old.b) found = i;
        require(found >= 0, ErrorKind::placement, "bump edge modified by flattening");
        b.edge = found;
        bumps.push_back(b);
    }
    PolygonalDomain out(std::move(ring), domain.bc(), domain.sigma(), std::move(bumps));
    return FlattenResult{out, before, lipschitz_constant(out)};
}

}  // namespace specsplit
