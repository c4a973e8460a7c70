#pragma once

// P1 finite element assembly of the stiffness, mass and boundary-mass forms.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <map>
#include <ostream>
#include <vector>

#include <Eigen/Sparse>

#include "specsplit/error.hpp"
#include "specsplit/geometry.hpp"
#include "specsplit/mesh.hpp"
#include "specsplit/parallel.hpp"

namespace specsplit {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Vector = Eigen::VectorXd;

/// Symmetric sparse matrix stored with both triangles present.
struct SparseSymMatrix {
    SparseMatrix data;
    bool symmetric = true;

    Eigen::Index dimension() const { return data.rows(); }
    double coeff(Eigen::Index i, Eigen::Index j) const { return data.coeff(i, j); }
};

// ---------------------------------------------------------------------------
// Element kernels, templated on the scalar so complex-step differentiation can
// reuse them. Entries are row-major.

template <class T>
std::array<T, 9> element_stiffness(const std::array<T, 3>& x, const std::array<T, 3>& y) {
    T twice_area = (x[1] - x[0]) * (y[2] - y[0]) - (x[2] - x[0]) * (y[1] - y[0]);
    std::array<T, 3> b{y[1] - y[2], y[2] - y[0], y[0] - y[1]};
    std::array<T, 3> c{x[2] - x[1], x[0] - x[2], x[1] - x[0]};
    std::array<T, 9> k{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) k[3 * i + j] = (b[i] * b[j] + c[i] * c[j]) / (T(2) * twice_area);
    return k;
}

template <class T>
std::array<T, 9> element_mass(const std::array<T, 3>& x, const std::array<T, 3>& y) {
    T twice_area = (x[1] - x[0]) * (y[2] - y[0]) - (x[2] - x[0]) * (y[1] - y[0]);
    T off = twice_area / T(24);
    T diag = twice_area / T(12);
    std::array<T, 9> m{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) m[3 * i + j] = (i == j) ? diag : off;
    return m;
}

template <class T>
std::array<T, 4> edge_mass(T x0, T y0, T x1, T y1) {
    using std::sqrt;
    T len = sqrt((x1 - x0) * (x1 - x0) + (y1 - y0) * (y1 - y0));
    T diag = len / T(3);
    T off = len / T(6);
    return {diag, off, off, diag};
}

// ---------------------------------------------------------------------------

/// Discrete forms. K, M, B are indexed by kept dofs (Dirichlet boundary nodes
/// eliminated); the *_full members are indexed by mesh nodes.
struct DiscreteSystem {
    SparseSymMatrix K;
    SparseSymMatrix M;
    SparseSymMatrix B;
    SparseSymMatrix K_full;
    SparseSymMatrix M_full;
    SparseSymMatrix B_full;
    std::vector<int> dof_of_node;  ///< -1 for eliminated nodes
    std::vector<int> node_of_dof;
    BoundaryCondition bc = BoundaryCondition::dirichlet;
    double sigma = 0.0;
    /// Boundary nodes per base edge id, as (node, arclength) sorted by arclength.
    std::map<int, std::vector<std::pair<int, double>>> edge_nodes;

    Eigen::Index dimension() const { return static_cast<Eigen::Index>(node_of_dof.size()); }

    /// K for Dirichlet/Neumann, K - sigma*B for Robin.
    SparseMatrix effective_stiffness() const {
        if (bc == BoundaryCondition::robin) return SparseMatrix(K.data - sigma * B.data);
        return K.data;
    }

    /// Expands a dof vector to nodal values (zero at eliminated nodes).
    Vector to_nodal(const Vector& dofs) const {
        Vector out = Vector::Zero(static_cast<Eigen::Index>(dof_of_node.size()));
        for (std::size_t d = 0; d < node_of_dof.size(); ++d)
            out[node_of_dof[d]] = dofs[static_cast<Eigen::Index>(d)];
        return out;
    }
};

namespace detail {

inline SparseSymMatrix to_sym(SparseMatrix m) {
    m.prune([](Eigen::Index, Eigen::Index, double v) { return v != 0.0; });
    m.makeCompressed();
    return {std::move(m), true};
}

/// Sums per-element 3x3 blocks (computed in parallel) in element order.
template <class ElementFn>
SparseMatrix assemble_triangles(const TriMesh& mesh, ElementFn&& fn) {
    std::size_t ne = mesh.triangles.size();
    std::vector<std::array<double, 9>> blocks(ne);
    parallel_for(ne, [&](std::size_t e) { blocks[e] = fn(e); });
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(9 * ne);
    for (std::size_t e = 0; e < ne; ++e) {
        const auto& t = mesh.triangles[e];
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) trip.emplace_back(t[i], t[j], blocks[e][static_cast<std::size_t>(3 * i + j)]);
    }
    auto n = static_cast<Eigen::Index>(mesh.nodes.size());
    SparseMatrix out(n, n);
    out.setFromTriplets(trip.begin(), trip.end());
    return out;
}

template <class EdgeFn>
SparseMatrix assemble_edges(const TriMesh& mesh, EdgeFn&& fn) {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(4 * mesh.boundary_edges.size());
    for (std::size_t e = 0; e < mesh.boundary_edges.size(); ++e) {
        const auto& be = mesh.boundary_edges[e];
        std::array<double, 4> blk = fn(e);
        trip.emplace_back(be.a, be.a, blk[0]);
        trip.emplace_back(be.a, be.b, blk[1]);
        trip.emplace_back(be.b, be.a, blk[2]);
        trip.emplace_back(be.b, be.b, blk[3]);
    }
    auto n = static_cast<Eigen::Index>(mesh.nodes.size());
    SparseMatrix out(n, n);
    out.setFromTriplets(trip.begin(), trip.end());
    return out;
}

inline SparseMatrix restrict_to_dofs(const SparseMatrix& full, const std::vector<int>& dof_of_node,
                                     Eigen::Index ndof) {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(full.nonZeros()));
    for (Eigen::Index col = 0; col < full.outerSize(); ++col) {
        int dc = dof_of_node[static_cast<std::size_t>(col)];
        if (dc < 0) continue;
        for (SparseMatrix::InnerIterator it(full, col); it; ++it) {
            int dr = dof_of_node[static_cast<std::size_t>(it.row())];
            if (dr >= 0) trip.emplace_back(dr, dc, it.value());
        }
    }
    SparseMatrix out(ndof, ndof);
    out.setFromTriplets(trip.begin(), trip.end());
    return out;
}

template <class T>
void triangle_coords(const TriMesh& mesh, std::size_t e, std::array<T, 3>& x, std::array<T, 3>& y) {
    const auto& t = mesh.triangles[e];
    for (int k = 0; k < 3; ++k) {
        x[static_cast<std::size_t>(k)] = T(mesh.nodes[static_cast<std::size_t>(t[static_cast<std::size_t>(k)])].x);
        y[static_cast<std::size_t>(k)] = T(mesh.nodes[static_cast<std::size_t>(t[static_cast<std::size_t>(k)])].y);
    }
}

}  // namespace detail

/// P1 assembly for the given boundary condition.
inline DiscreteSystem assemble(const TriMesh& mesh, BoundaryCondition bc, double sigma = 0.0) {
    require(!mesh.triangles.empty(), ErrorKind::invalid_parameter, "mesh has no triangles");
    if (bc == BoundaryCondition::robin)
        require(sigma != 0.0 && std::isfinite(sigma), ErrorKind::invalid_parameter,
                "Robin coefficient sigma must be non-zero");
    DiscreteSystem sys;
    sys.bc = bc;
    sys.sigma = bc == BoundaryCondition::robin ? sigma : 0.0;

    SparseMatrix K = detail::assemble_triangles(mesh, [&](std::size_t e) {
        std::array<double, 3> x, y;
        detail::triangle_coords(mesh, e, x, y);
        return element_stiffness(x, y);
    });
    SparseMatrix M = detail::assemble_triangles(mesh, [&](std::size_t e) {
        std::array<double, 3> x, y;
        detail::triangle_coords(mesh, e, x, y);
        return element_mass(x, y);
    });
    SparseMatrix B = detail::assemble_edges(mesh, [&](std::size_t e) {
        const auto& be = mesh.boundary_edges[e];
        Vec2 a = mesh.nodes[static_cast<std::size_t>(be.a)], b = mesh.nodes[static_cast<std::size_t>(be.b)];
        return edge_mass(a.x, a.y, b.x, b.y);
    });

    std::vector<bool> on_boundary = mesh.boundary_node_mask();
    sys.dof_of_node.assign(mesh.nodes.size(), -1);
    for (std::size_t i = 0; i < mesh.nodes.size(); ++i) {
        if (bc == BoundaryCondition::dirichlet && on_boundary[i]) continue;
        sys.dof_of_node[i] = static_cast<int>(sys.node_of_dof.size());
        sys.node_of_dof.push_back(static_cast<int>(i));
    }
    require(!sys.node_of_dof.empty(), ErrorKind::invalid_parameter, "mesh has no interior nodes");

    Eigen::Index ndof = sys.dimension();
    sys.K = detail::to_sym(detail::restrict_to_dofs(K, sys.dof_of_node, ndof));
    sys.M = detail::to_sym(detail::restrict_to_dofs(M, sys.dof_of_node, ndof));
    sys.B = detail::to_sym(detail::restrict_to_dofs(B, sys.dof_of_node, ndof));
    sys.K_full = detail::to_sym(std::move(K));
    sys.M_full = detail::to_sym(std::move(M));
    sys.B_full = detail::to_sym(std::move(B));

    for (const auto& be : mesh.boundary_edges) {
        sys.edge_nodes[be.edge].emplace_back(be.a, be.s_a);
        sys.edge_nodes[be.edge].emplace_back(be.b, be.s_b);
    }
    for (auto& [id, list] : sys.edge_nodes) {
        std::sort(list.begin(), list.end(),
                  [](const auto& p, const auto& q) { return p.second < q.second || (p.second == q.second && p.first < q.first); });
        list.erase(std::unique(list.begin(), list.end()), list.end());
    }
    return sys;
}

struct TraceIndex {
    int node = 0;
    int dof = -1;  ///< -1 where the node was eliminated (value identically 0)
    double s = 0.0;
};

/// Boundary nodes on a base edge ordered by arclength.
inline std::vector<TraceIndex> boundary_trace_indices(const DiscreteSystem& system, int edge_id) {
    auto it = system.edge_nodes.find(edge_id);
    require(it != system.edge_nodes.end(), ErrorKind::lookup, "unknown edge id " + std::to_string(edge_id));
    std::vector<TraceIndex> out;
    out.reserve(it->second.size());
    for (const auto& [node, s] : it->second)
        out.push_back({node, system.dof_of_node[static_cast<std::size_t>(node)], s});
    return out;
}

/// Element-wise differences K(moved) - K(base) etc., restricted to the base
/// system's dofs. Both meshes must share topology.
struct FormDifference {
    SparseMatrix dK;
    SparseMatrix dM;
    SparseMatrix dB;

    SparseMatrix effective(const DiscreteSystem& sys) const {
        if (sys.bc == BoundaryCondition::robin) return SparseMatrix(dK - sys.sigma * dB);
        return dK;
    }
};

inline FormDifference assemble_difference(const TriMesh& base, const TriMesh& moved, const DiscreteSystem& sys) {
    require(base.triangles.size() == moved.triangles.size() && base.nodes.size() == moved.nodes.size(),
            ErrorKind::invalid_parameter, "meshes must share topology");
    auto diff9 = [](const std::array<double, 9>& a, const std::array<double, 9>& b) {
        std::array<double, 9> r{};
        for (std::size_t i = 0; i < 9; ++i) r[i] = a[i] - b[i];
        return r;
    };
    auto moved_elem = [&](std::size_t e) {
        const auto& t = base.triangles[e];
        for (int k = 0; k < 3; ++k)
            if (!(base.nodes[static_cast<std::size_t>(t[static_cast<std::size_t>(k)])] ==
                  moved.nodes[static_cast<std::size_t>(t[static_cast<std::size_t>(k)])]))
                return true;
        return false;
    };
    SparseMatrix dK = detail::assemble_triangles(base, [&](std::size_t e) {
        if (!moved_elem(e)) return std::array<double, 9>{};
        std::array<double, 3> x0, y0, x1, y1;
        detail::triangle_coords(base, e, x0, y0);
        detail::triangle_coords(moved, e, x1, y1);
        return diff9(element_stiffness(x1, y1), element_stiffness(x0, y0));
    });
    SparseMatrix dM = detail::assemble_triangles(base, [&](std::size_t e) {
        if (!moved_elem(e)) return std::array<double, 9>{};
        std::array<double, 3> x0, y0, x1, y1;
        detail::triangle_coords(base, e, x0, y0);
        detail::triangle_coords(moved, e, x1, y1);
        return diff9(element_mass(x1, y1), element_mass(x0, y0));
    });
    SparseMatrix dB = detail::assemble_edges(base, [&](std::size_t e) {
        const auto& be = base.boundary_edges[e];
        Vec2 a0 = base.nodes[static_cast<std::size_t>(be.a)], b0 = base.nodes[static_cast<std::size_t>(be.b)];
        Vec2 a1 = moved.nodes[static_cast<std::size_t>(be.a)], b1 = moved.nodes[static_cast<std::size_t>(be.b)];
        auto m1 = edge_mass(a1.x, a1.y, b1.x, b1.y);
        auto m0 = edge_mass(a0.x, a0.y, b0.x, b0.y);
        return std::array<double, 4>{m1[0] - m0[0], m1[1] - m0[1], m1[2] - m0[2], m1[3] - m0[3]};
    });
    Eigen::Index n = sys.dimension();
    return {detail::restrict_to_dofs(dK, sys.dof_of_node, n), detail::restrict_to_dofs(dM, sys.dof_of_node, n),
            detail::restrict_to_dofs(dB, sys.dof_of_node, n)};
}

/// Exact derivatives dK/dt, dM/dt, dB/dt of the forms under node velocities,
/// by complex-step differentiation of the element kernels.
inline FormDifference assemble_velocity_derivative(const TriMesh& mesh, const std::vector<Vec2>& velocity,
                                                   const DiscreteSystem& sys) {
    require(velocity.size() == mesh.nodes.size(), ErrorKind::invalid_parameter, "velocity size mismatch");
    using C = std::complex<double>;
    constexpr double kStep = 1e-30;
    auto coords = [&](std::size_t e, std::array<C, 3>& x, std::array<C, 3>& y) {
        const auto& t = mesh.triangles[e];
        bool any = false;
        for (std::size_t k = 0; k < 3; ++k) {
            const Vec2& p = mesh.nodes[static_cast<std::size_t>(t[k])];
            const Vec2& v = velocity[static_cast<std::size_t>(t[k])];
            any = any || v.x != 0.0 || v.y != 0.0;
            x[k] = C(p.x, kStep * v.x);
            y[k] = C(p.y, kStep * v.y);
        }
        return any;
    };
    auto imag9 = [](const std::array<C, 9>& a) {
        std::array<double, 9> r{};
        for (std::size_t i = 0; i < 9; ++i) r[i] = a[i].imag() / kStep;
        return r;
    };
    SparseMatrix dK = detail::assemble_triangles(mesh, [&](std::size_t e) {
        std::array<C, 3> x, y;
        if (!coords(e, x, y)) return std::array<double, 9>{};
        return imag9(element_stiffness(x, y));
    });
    SparseMatrix dM = detail::assemble_triangles(mesh, [&](std::size_t e) {
        std::array<C, 3> x, y;
        if (!coords(e, x, y)) return std::array<double, 9>{};
        return imag9(element_mass(x, y));
    });
    SparseMatrix dB = detail::assemble_edges(mesh, [&](std::size_t e) {
        const auto& be = mesh.boundary_edges[e];
        Vec2 a = mesh.nodes[static_cast<std::size_t>(be.a)], b = mesh.nodes[static_cast<std::size_t>(be.b)];
        Vec2 va = velocity[static_cast<std::size_t>(be.a)], vb = velocity[static_cast<std::size_t>(be.b)];
        auto m = edge_mass(C(a.x, kStep * va.x), C(a.y, kStep * va.y), C(b.x, kStep * vb.x), C(b.y, kStep * vb.y));
        return std::array<double, 4>{m[0].imag() / kStep, m[1].imag() / kStep, m[2].imag() / kStep,
                                     m[3].imag() / kStep};
    });
    Eigen::Index n = sys.dimension();
    return {detail::restrict_to_dofs(dK, sys.dof_of_node, n), detail::restrict_to_dofs(dM, sys.dof_of_node, n),
            detail::restrict_to_dofs(dB, sys.dof_of_node, n)};
}

/// Coordinate-format export: one "row col value" line per stored entry.
inline void write_coo(std::ostream& os, const SparseSymMatrix& m) {
    os.precision(17);
    os << m.data.rows() << ' ' << m.data.cols() << ' ' << m.data.nonZeros() << '\n';
    for (Eigen::Index col = 0; col < m.data.outerSize(); ++col)
        for (SparseMatrix::InnerIterator it(m.data, col); it; ++it)
            os << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
}

}  // namespace specsplit
