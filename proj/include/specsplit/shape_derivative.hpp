#pragma once

// Boundary traces of eigenfunctions, the discriminant |grad u|^2 - c u^2 and
// first-order eigenvalue derivatives under normal boundary bumps.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "specsplit/eigensolver.hpp"
#include "specsplit/error.hpp"
#include "specsplit/fem.hpp"
#include "specsplit/geometry.hpp"
#include "specsplit/mesh.hpp"

namespace specsplit {

/// Boundary constant c in the discriminant |grad u|^2 - c u^2.
inline double c_constant(BoundaryCondition bc, double lambda, double sigma) {
    switch (bc) {
        case BoundaryCondition::dirichlet: return 0.0;
        case BoundaryCondition::neumann: return lambda;
        case BoundaryCondition::robin: return lambda + 2.0 * sigma * sigma;
    }
    return 0.0;
}

struct TraceSample {
    double s = 0.0;
    double u = 0.0;
    double du_dnu = 0.0;
    double grad_sq = 0.0;
    Vec2 grad;  ///< recovered gradient in global coordinates
};

struct BoundaryTrace {
    int edge_id = 0;
    Vec2 normal;
    double length = 0.0;
    std::vector<TraceSample> samples;
};

/// Nodal gradients by area-weighted averaging of the P1 gradients of the
/// triangles around each node.
inline std::vector<Vec2> recover_gradients(const TriMesh& mesh, const Vector& nodal) {
    std::vector<Vec2> acc(mesh.nodes.size());
    std::vector<double> weight(mesh.nodes.size(), 0.0);
    for (const auto& t : mesh.triangles) {
        Vec2 p0 = mesh.nodes[static_cast<std::size_t>(t[0])], p1 = mesh.nodes[static_cast<std::size_t>(t[1])],
             p2 = mesh.nodes[static_cast<std::size_t>(t[2])];
        double twice_area = cross(p1 - p0, p2 - p0);
        double u0 = nodal[t[0]], u1 = nodal[t[1]], u2 = nodal[t[2]];
        Vec2 g{(u0 * (p1.y - p2.y) + u1 * (p2.y - p0.y) + u2 * (p0.y - p1.y)) / twice_area,
               (u0 * (p2.x - p1.x) + u1 * (p0.x - p2.x) + u2 * (p1.x - p0.x)) / twice_area};
        for (int k = 0; k < 3; ++k) {
            acc[static_cast<std::size_t>(t[static_cast<std::size_t>(k)])] =
                acc[static_cast<std::size_t>(t[static_cast<std::size_t>(k)])] + 0.5 * twice_area * g;
            weight[static_cast<std::size_t>(t[static_cast<std::size_t>(k)])] += 0.5 * twice_area;
        }
    }
    for (std::size_t i = 0; i < acc.size(); ++i)
        if (weight[i] > 0.0) acc[i] = acc[i] / weight[i];
    return acc;
}

namespace detail {

inline BoundaryTrace trace_from_nodal(const TriMesh& mesh, const DiscreteSystem& system, const Vector& nodal,
                                      const std::vector<Vec2>& grads, int edge_id) {
    auto idx = boundary_trace_indices(system, edge_id);
    require(idx.size() >= 2, ErrorKind::lookup, "edge has fewer than two boundary nodes");
    BoundaryTrace tr;
    tr.edge_id = edge_id;
    Vec2 a = mesh.nodes[static_cast<std::size_t>(idx.front().node)];
    Vec2 b = mesh.nodes[static_cast<std::size_t>(idx.back().node)];
    tr.length = distance(a, b);
    tr.normal = right_normal(normalized(b - a));
    for (const auto& ti : idx) {
        TraceSample smp;
        smp.s = ti.s;
        smp.u = ti.dof >= 0 ? nodal[ti.node] : 0.0;
        smp.grad = grads[static_cast<std::size_t>(ti.node)];
        smp.du_dnu = dot(smp.grad, tr.normal);
        smp.grad_sq = dot(smp.grad, smp.grad);
        tr.samples.push_back(smp);
    }
    return tr;
}

/// Linear interpolation of a trace at arclength s.
inline TraceSample interpolate(const BoundaryTrace& tr, double s) {
    const auto& sm = tr.samples;
    if (s <= sm.front().s) return sm.front();
    if (s >= sm.back().s) return sm.back();
    auto it = std::upper_bound(sm.begin(), sm.end(), s, [](double v, const TraceSample& x) { return v < x.s; });
    const TraceSample& hi = *it;
    const TraceSample& lo = *(it - 1);
    double w = hi.s > lo.s ? (s - lo.s) / (hi.s - lo.s) : 0.0;
    TraceSample out;
    out.s = s;
    out.u = lo.u + w * (hi.u - lo.u);
    out.grad = lo.grad + w * (hi.grad - lo.grad);
    out.du_dnu = dot(out.grad, tr.normal);
    out.grad_sq = dot(out.grad, out.grad);
    return out;
}

}  // namespace detail

/// Trace of one eigenfunction along a base edge.
inline BoundaryTrace boundary_trace(const TriMesh& mesh, const DiscreteSystem& system, const EigenPair& pair,
                                    int edge_id) {
    Vector nodal = system.to_nodal(pair.vector);
    return detail::trace_from_nodal(mesh, system, nodal, recover_gradients(mesh, nodal), edge_id);
}

struct DiscriminantSample {
    double s = 0.0;
    double g = 0.0;
};

inline std::vector<DiscriminantSample> discriminant(const BoundaryTrace& trace, double c) {
    std::vector<DiscriminantSample> out;
    out.reserve(trace.samples.size());
    for (const auto& smp : trace.samples) out.push_back({smp.s, smp.grad_sq - c * smp.u * smp.u});
    return out;
}

/// Average of g against the bump profile centered at s0 (support radius c).
inline double profile_average(const BoundaryTrace& trace, double cdisc, double s0, double c, int samples = 64) {
    double num = 0.0, den = 0.0;
    for (int k = 0; k <= samples; ++k) {
        double s = s0 - c + 2.0 * c * k / samples;
        double w = (k == 0 || k == samples) ? 0.5 : 1.0;
        double rho = std::fabs(s - s0) < c ? bump_profile(s - s0, c) : 0.0;
        TraceSample smp = detail::interpolate(trace, s);
        num += w * rho * (smp.grad_sq - cdisc * smp.u * smp.u);
        den += w * rho;
    }
    return den > 0.0 ? num / den : 0.0;
}

/// Bump center maximizing the smallest pairwise separation of the locally
/// averaged discriminants. Candidates are the trace samples inside
/// [s_min, s_max] (the whole admissible range of the edge when omitted).
inline double select_bump_center(const std::vector<BoundaryTrace>& traces, double c, double bump_radius,
                                 std::optional<double> s_min = std::nullopt,
                                 std::optional<double> s_max = std::nullopt) {
    require(traces.size() >= 2, ErrorKind::invalid_parameter, "need at least two traces");
    require(bump_radius > 0.0, ErrorKind::invalid_parameter, "bump radius must be positive");
    const BoundaryTrace& ref = traces.front();
    double lo = s_min.value_or(bump_radius), hi = s_max.value_or(ref.length - bump_radius);
    lo = std::max(lo, ref.samples.front().s + bump_radius);
    hi = std::min(hi, ref.samples.back().s - bump_radius);
    require(lo <= hi, ErrorKind::placement, "no admissible bump center on this edge");

    std::vector<double> candidates;
    for (const auto& smp : ref.samples)
        if (smp.s >= lo && smp.s <= hi) candidates.push_back(smp.s);
    if (candidates.empty()) candidates.push_back(0.5 * (lo + hi));

    double gmax = 0.0;
    for (const auto& tr : traces)
        for (const auto& smp : tr.samples) gmax = std::max(gmax, std::fabs(smp.grad_sq - c * smp.u * smp.u));

    double best_sep = -1.0, best_s = candidates.front();
    for (double s0 : candidates) {
        std::vector<double> avg;
        for (const auto& tr : traces) avg.push_back(profile_average(tr, c, s0, bump_radius));
        double sep = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < avg.size(); ++i)
            for (std::size_t j = i + 1; j < avg.size(); ++j) sep = std::min(sep, std::fabs(avg[i] - avg[j]));
        if (sep > best_sep) {
            best_sep = sep;
            best_s = s0;
        }
    }
    if (!(best_sep > 1e-8 * gmax))
        fail(ErrorKind::degenerate_discriminant,
             "discriminants coincide on the admissible range (max separation " + std::to_string(best_sep) + ")");
    return best_s;
}

struct HadamardReport {
    int r = 1;  ///< first cluster index (1-based)
    int m = 1;
    double lambda = 0.0;  ///< cluster mean eigenvalue
    Eigen::MatrixXd derivative_matrix;
    std::vector<double> predicted_rates;  ///< ascending
    Eigen::MatrixXd branch_basis;         ///< columns: eigenvectors of derivative_matrix
    std::vector<double> fd_rates;
    double c_used = 0.0;
    bool curvature_term_included = false;
};

/// Polarized derivative matrix A_ij = int (grad u_i . grad u_j - lambda u_i u_j
/// - 2 du_i/dnu du_j/dnu) rho ds over the bump support (flat edge, H = 0).
inline HadamardReport hadamard_matrix(const TriMesh& mesh, const DiscreteSystem& system,
                                      const std::vector<EigenPair>& pairs, const DeformationField& field,
                                      int first_index = 1, int quadrature = 256) {
    require(!pairs.empty(), ErrorKind::invalid_parameter, "no eigenpairs");
    const BumpSpec& bump = field.bump();
    std::size_t m = pairs.size();
    double lambda = 0.0;
    for (const auto& p : pairs) lambda += p.lambda;
    lambda /= static_cast<double>(m);

    std::vector<BoundaryTrace> traces;
    for (const auto& p : pairs) traces.push_back(boundary_trace(mesh, system, p, bump.edge));

    HadamardReport rep;
    rep.r = first_index;
    rep.m = static_cast<int>(m);
    rep.lambda = lambda;
    rep.c_used = c_constant(system.bc, lambda, system.sigma);
    rep.derivative_matrix = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));

    int nq = std::max(16, quadrature);
    double ds = 2.0 * bump.c / nq;
    std::vector<TraceSample> at(m);
    for (int k = 0; k <= nq; ++k) {
        double s = bump.s0 - bump.c + ds * k;
        double rho = (k == 0 || k == nq) ? 0.0 : bump_profile(s - bump.s0, bump.c);
        if (rho == 0.0) continue;
        for (std::size_t i = 0; i < m; ++i) at[i] = detail::interpolate(traces[i], s);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j <= i; ++j) {
                double v = dot(at[i].grad, at[j].grad) - lambda * at[i].u * at[j].u -
                           2.0 * at[i].du_dnu * at[j].du_dnu;
                rep.derivative_matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) += v * rho * ds;
            }
    }
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < i; ++j)
            rep.derivative_matrix(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) =
                rep.derivative_matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(rep.derivative_matrix);
    rep.branch_basis = es.eigenvectors();
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) rep.predicted_rates.push_back(es.eigenvalues()[i]);
    return rep;
}

/// Rotates a cluster basis: out_j = sum_i Q(i, j) in_i.
inline std::vector<EigenPair> rotate_pairs(const std::vector<EigenPair>& pairs, const Eigen::MatrixXd& Q) {
    std::vector<EigenPair> out(pairs.size());
    for (std::size_t j = 0; j < pairs.size(); ++j) {
        out[j].vector = Vector::Zero(pairs.front().vector.size());
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            out[j].vector += Q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * pairs[i].vector;
            out[j].lambda += Q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) *
                             Q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * pairs[i].lambda;
        }
        out[j].residual = 0.0;
    }
    return out;
}

/// Node velocities d/dt of the mesh motion (the field is linear in t).
inline std::vector<Vec2> mesh_velocity(const TriMesh& mesh, const DeformationField& field) {
    std::vector<Vec2> v(mesh.nodes.size());
    for (std::size_t i = 0; i < mesh.nodes.size(); ++i) v[i] = field.displacement(mesh.nodes[i], 1.0);
    return v;
}

/// Derivative of the discrete pencil restricted to the cluster,
/// U^T (dK/dt - lambda dM/dt) U, from exact element-level derivatives.
/// Its eigenvalues are the exact first-order rates of the discrete problem.
inline Eigen::MatrixXd discrete_derivative_matrix(const TriMesh& mesh, const DiscreteSystem& system,
                                                  const std::vector<EigenPair>& pairs, const DeformationField& field) {
    FormDifference d = assemble_velocity_derivative(mesh, mesh_velocity(mesh, field), system);
    SparseMatrix dKe = d.effective(system);
    double lambda = 0.0;
    for (const auto& p : pairs) lambda += p.lambda;
    lambda /= static_cast<double>(pairs.size());
    auto m = static_cast<Eigen::Index>(pairs.size());
    Eigen::MatrixXd A(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        Vector Ku = dKe * pairs[static_cast<std::size_t>(i)].vector;
        Vector Mu = d.dM * pairs[static_cast<std::size_t>(i)].vector;
        for (Eigen::Index j = 0; j < m; ++j) {
            const Vector& uj = pairs[static_cast<std::size_t>(j)].vector;
            A(j, i) = uj.dot(Ku) - lambda * uj.dot(Mu);
        }
    }
    return 0.5 * (A + A.transpose());
}

/// lambda_t - lambda_0 for a simple eigenvalue under fixed-topology motion,
/// without subtracting two nearly equal eigenvalues:
/// u0^T (dK - lambda0 dM) u_t / (u0^T M_t u_t).
inline double simple_eigenvalue_shift(const TriMesh& base, const DiscreteSystem& base_system, const EigenPair& base_pair,
                                      const TriMesh& moved, const DiscreteSystem& moved_system,
                                      const EigenPair& moved_pair) {
    FormDifference d = assemble_difference(base, moved, base_system);
    SparseMatrix dKe = d.effective(base_system);
    const Vector& u0 = base_pair.vector;
    const Vector& ut = moved_pair.vector;
    double num = u0.dot(dKe * ut) - base_pair.lambda * u0.dot(d.dM * ut);
    double den = u0.dot(moved_system.M.data * ut);
    require(std::fabs(den) > 1e-8, ErrorKind::solver, "eigenvector overlap too small for shift formula");
    return num / den;
}

/// Finite-difference rates of eigenvalues r..r+m-1 (1-based) under mesh motion
/// at amplitude t, sorted ascending.
inline std::vector<double> fd_rates(const TriMesh& mesh, const DiscreteSystem& system, const Spectrum& base, int r,
                                    int m, const DeformationField& field, double t, double tol = 1e-11) {
    require(t > 0.0, ErrorKind::invalid_parameter, "finite-difference amplitude must be positive");
    require(r >= 1 && m >= 1 && base.k() >= static_cast<std::size_t>(r + m - 1), ErrorKind::invalid_parameter,
            "base spectrum too short");
    TriMesh moved = move_mesh(mesh, field, t);
    DiscreteSystem msys = assemble(moved, system.bc, system.sigma);
    Spectrum ms = solve_lowest(msys, r + m, tol);
    std::vector<double> out;
    for (int i = r; i < r + m; ++i) {
        double shift;
        if (m == 1)
            shift = simple_eigenvalue_shift(mesh, system, base.pairs[static_cast<std::size_t>(i - 1)], moved, msys,
                                            ms.pairs[static_cast<std::size_t>(i - 1)]);
        else
            shift = ms.lambda(i) - base.lambda(i);
        out.push_back(shift / t);
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace specsplit
