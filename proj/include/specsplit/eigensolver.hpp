#pragma once

// Lowest eigenpairs of K u = lambda M u by shift-invert block Lanczos with
// full M-reorthogonalization and thick restarts, plus cluster detection.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include "specsplit/error.hpp"
#include "specsplit/fem.hpp"

namespace specsplit {

struct EigenPair {
    double lambda = 0.0;
    Vector vector;  ///< over dofs, M-normalized
    double residual = 0.0;
};

/// Consecutive eigenvalues lambda_r .. lambda_{r+m-1}; r counts from 1.
struct Cluster {
    int r = 1;
    int m = 1;
    double width = 0.0;
    double rel_gap_below = std::numeric_limits<double>::infinity();
    double rel_gap_above = std::numeric_limits<double>::infinity();
    bool truncated = false;  ///< touches the last computed eigenvalue
};

struct Spectrum {
    std::vector<EigenPair> pairs;
    std::vector<Cluster> clusters;
    double tau = 0.0;
    double shift = 0.0;

    std::size_t k() const { return pairs.size(); }
    double lambda(int one_based) const { return pairs.at(static_cast<std::size_t>(one_based - 1)).lambda; }
    std::vector<double> lambdas() const {
        std::vector<double> out;
        for (const auto& p : pairs) out.push_back(p.lambda);
        return out;
    }
};

struct SolverOptions {
    double tol = 1e-9;
    int block_size = 3;
    int max_restarts = 400;
    std::uint64_t seed = 20240611;
    std::size_t dense_threshold = 200;
};

inline double relative_residual(const SparseMatrix& K, const SparseMatrix& M, double lambda, const Vector& u) {
    Vector Mu = M * u;
    Vector r = K * u - lambda * Mu;
    return r.norm() / (std::max(std::fabs(lambda), 1.0) * Mu.norm());
}

namespace detail {

inline void fix_sign(Vector& v) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i)
        if (std::fabs(v[i]) > std::fabs(v[best])) best = i;
    if (v.size() > 0 && v[best] < 0.0) v = -v;
}

inline Vector random_vector(std::mt19937_64& gen, Eigen::Index n) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i)
        v[i] = static_cast<double>(gen() >> 11) * 0x1.0p-53 * 2.0 - 1.0;
    return v;
}

/// LDL^T of K - s M with inertia; moves s downwards until K - s M is
/// positive definite (no eigenvalue below the shift).
struct ShiftedFactor {
    Eigen::SimplicialLDLT<SparseMatrix> ldlt;
    double shift = 0.0;

    int factor(const SparseMatrix& K, const SparseMatrix& M, double s) {
        shift = s;
        SparseMatrix A = K - s * M;
        ldlt.compute(A);
        if (ldlt.info() != Eigen::Success) return -1;
        const auto& d = ldlt.vectorD();
        int neg = 0;
        for (Eigen::Index i = 0; i < d.size(); ++i) {
            if (d[i] == 0.0 || !std::isfinite(d[i])) return -1;
            if (d[i] < 0.0) ++neg;
        }
        return neg;
    }

    void positive_definite(const SparseMatrix& K, const SparseMatrix& M, double s0) {
        double s = s0;
        for (int attempt = 0; attempt < 80; ++attempt) {
            int neg = factor(K, M, s);
            if (neg == 0) return;
            if (neg < 0) s -= 1e-3 * (1.0 + std::fabs(s));
            else s = 2.0 * s - 1.0;
        }
        fail(ErrorKind::solver, "could not find a shift below the spectrum");
    }
};

/// Number of eigenvalues strictly below mu, by Sylvester inertia.
inline int count_below(const SparseMatrix& K, const SparseMatrix& M, double mu) {
    ShiftedFactor f;
    for (int attempt = 0; attempt < 8; ++attempt) {
        int neg = f.factor(K, M, mu);
        if (neg >= 0) return neg;
        mu -= 1e-12 * (1.0 + std::fabs(mu));
    }
    fail(ErrorKind::solver, "inertia count failed");
}

inline std::vector<EigenPair> solve_dense(const SparseMatrix& K, const SparseMatrix& M, int k) {
    Eigen::MatrixXd Kd(K), Md(M);
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(Kd, Md);
    require(es.info() == Eigen::Success, ErrorKind::solver, "dense eigensolver failed");
    std::vector<EigenPair> out;
    for (int i = 0; i < k; ++i) {
        EigenPair p;
        p.lambda = es.eigenvalues()[i];
        p.vector = es.eigenvectors().col(i);
        out.push_back(std::move(p));
    }
    return out;
}

class BlockLanczos {
public:
    BlockLanczos(const SparseMatrix& K, const SparseMatrix& M, int k, const SolverOptions& opts, double shift0)
        : K_(K), M_(M), k_(k), opts_(opts), n_(K.rows()), gen_(opts.seed) {
        b_ = std::max(1, std::min(opts.block_size, k));
        cap_ = static_cast<Eigen::Index>(std::max(3 * k, k + 30) + b_);
        cap_ = std::min(cap_, n_);
        V_.resize(n_, cap_);
        MV_.resize(n_, cap_);
        Y_.resize(n_, cap_);
        factor_.positive_definite(K_, M_, shift0);
    }

    double shift() const { return factor_.shift; }

    std::vector<EigenPair> run() {
        Eigen::MatrixXd W(n_, b_);
        for (int c = 0; c < b_; ++c) W.col(c) = detail::random_vector(gen_, n_);
        append(W);
        for (int cycle = 0; cycle <= opts_.max_restarts; ++cycle) {
            // Expand until the basis is full; Y holds Op applied to every basis column.
            for (;;) {
                fill_pending();
                if (j_ + b_ > cap_) break;
                if (append(Y_.middleCols(last_, j_ - last_)) == 0) break;
            }
            fill_pending();
            // Rayleigh-Ritz for Op = (K - sM)^{-1} M, self-adjoint in the M inner product.
            auto Vj = V_.leftCols(j_);
            Eigen::MatrixXd H = MV_.leftCols(j_).transpose() * Y_.leftCols(j_);
            H = 0.5 * (H + H.transpose()).eval();
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
            require(es.info() == Eigen::Success, ErrorKind::solver, "projected eigenproblem failed");
            // Descending theta <-> ascending lambda.
            Eigen::MatrixXd S = es.eigenvectors().rowwise().reverse();
            Vector theta = es.eigenvalues().reverse();

            bool all_converged = j_ > k_;
            std::vector<EigenPair> out;
            for (int i = 0; i < k_ && all_converged; ++i) {
                EigenPair p;
                p.vector = Vj * S.col(i);
                Vector Mx = MV_.leftCols(j_) * S.col(i);
                Vector Kx = K_ * p.vector;
                p.lambda = p.vector.dot(Kx) / p.vector.dot(Mx);
                double rel = (Kx - p.lambda * Mx).norm() / (std::max(std::fabs(p.lambda), 1.0) * Mx.norm());
                if (!(rel <= 0.5 * opts_.tol) || !(theta[i] > 0.0)) all_converged = false;
                out.push_back(std::move(p));
            }
            if (all_converged) {
                double lam_k = out.back().lambda;
                double upper = theta[k_] > 0.0 ? factor_.shift + 1.0 / theta[k_] : std::numeric_limits<double>::infinity();
                double mu = std::isfinite(upper) ? 0.5 * (lam_k + upper) : lam_k + std::max(std::fabs(lam_k), 1.0);
                if (upper > lam_k && count_below(K_, M_, mu) > k_) {
                    // A copy of a repeated eigenvalue was missed: inject fresh directions.
                    if (++inject_rounds_ > 8) fail(ErrorKind::solver, "eigenvalue count check failed");
                    restart(S, true);
                    continue;
                }
                return out;
            }
            require(cycle < opts_.max_restarts, ErrorKind::solver,
                    "Lanczos did not converge within " + std::to_string(opts_.max_restarts) + " restarts");
            restart(S, false);
        }
        fail(ErrorKind::solver, "Lanczos did not converge");
    }

private:
    Vector apply_op(const Vector& x) const { return factor_.ldlt.solve(Vector(M_ * x)); }

    void fill_pending() {
        for (; done_ < j_; ++done_) Y_.col(done_) = apply_op(V_.col(done_));
    }

    /// M-orthonormalizes the columns of W against the basis and appends them.
    /// Rank-deficient directions are replaced by random vectors.
    Eigen::Index append(Eigen::MatrixXd W) {
        Eigen::Index start = j_;
        for (Eigen::Index c = 0; c < W.cols() && j_ < cap_; ++c) {
            Vector w = W.col(c);
            for (int tries = 0; tries < 4; ++tries) {
                double before = std::sqrt(std::max(0.0, w.dot(M_ * w)));
                for (int pass = 0; pass < 2 && j_ > 0; ++pass) {
                    Vector coef = MV_.leftCols(j_).transpose() * w;
                    w -= V_.leftCols(j_) * coef;
                }
                Vector Mw = M_ * w;
                double nrm = std::sqrt(std::max(0.0, w.dot(Mw)));
                if (nrm > 1e-10 * before && nrm > 0.0) {
                    V_.col(j_) = w / nrm;
                    MV_.col(j_) = Mw / nrm;
                    ++j_;
                    break;
                }
                w = detail::random_vector(gen_, n_);
            }
        }
        if (j_ > start) last_ = start;
        return j_ - start;
    }

    void restart(const Eigen::MatrixXd& S, bool inject) {
        // Next Krylov block: Op applied to the last block, orthogonalized
        // against the full (pre-restart) basis.
        Eigen::MatrixXd F = Y_.middleCols(last_, j_ - last_);
        for (int pass = 0; pass < 2; ++pass) F -= V_.leftCols(j_) * (MV_.leftCols(j_).transpose() * F);
        Eigen::Index keep = std::min<Eigen::Index>(j_ - b_, k_ + std::max<Eigen::Index>(b_, (cap_ - k_ - b_) / 2));
        keep = std::max<Eigen::Index>(keep, std::min<Eigen::Index>(k_, j_));
        Eigen::MatrixXd Vk = V_.leftCols(j_) * S.leftCols(keep);
        Eigen::MatrixXd MVk = MV_.leftCols(j_) * S.leftCols(keep);
        Eigen::MatrixXd Yk = Y_.leftCols(j_) * S.leftCols(keep);
        V_.leftCols(keep) = Vk;
        MV_.leftCols(keep) = MVk;
        Y_.leftCols(keep) = Yk;
        j_ = keep;
        done_ = keep;
        last_ = keep;
        if (inject)
            for (Eigen::Index c = 0; c < F.cols(); ++c) F.col(c) = detail::random_vector(gen_, n_);
        append(F);
    }

    const SparseMatrix& K_;
    const SparseMatrix& M_;
    int k_;
    SolverOptions opts_;
    Eigen::Index n_;
    std::mt19937_64 gen_;
    int b_ = 1;
    Eigen::Index cap_ = 0;
    Eigen::MatrixXd V_, MV_, Y_;
    Eigen::Index j_ = 0;
    Eigen::Index done_ = 0;
    Eigen::Index last_ = 0;
    int inject_rounds_ = 0;
    ShiftedFactor factor_;
};

inline void mass_orthonormalize(std::vector<EigenPair>& pairs, const SparseMatrix& M) {
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        Vector& v = pairs[i].vector;
        for (int pass = 0; pass < 2; ++pass)
            for (std::size_t j = 0; j < i; ++j) v -= (pairs[j].vector.dot(M * v)) * pairs[j].vector;
        v /= std::sqrt(v.dot(M * v));
    }
}

}  // namespace detail

/// Lowest k eigenpairs of the effective pencil, sorted ascending, with
/// M-orthonormal vectors and relative residuals <= tol.
inline Spectrum solve_lowest(const DiscreteSystem& system, int k, double tol = 1e-9, SolverOptions opts = {}) {
    require(k >= 1, ErrorKind::invalid_parameter, "k must be >= 1");
    require(tol > 0.0 && std::isfinite(tol), ErrorKind::invalid_parameter, "tol must be positive");
    Eigen::Index n = system.dimension();
    require(static_cast<Eigen::Index>(k) < n, ErrorKind::invalid_parameter,
            "k = " + std::to_string(k) + " exceeds the problem dimension " + std::to_string(n));
    opts.tol = tol;
    SparseMatrix K = system.effective_stiffness();
    const SparseMatrix& M = system.M.data;

    Spectrum spec;
    std::vector<EigenPair> pairs;
    if (static_cast<std::size_t>(n) <= opts.dense_threshold || static_cast<Eigen::Index>(std::max(3 * k, k + 30) + 3) >= n) {
        pairs = detail::solve_dense(K, M, k);
    } else {
        double s0 = 0.0;
        if (system.bc == BoundaryCondition::neumann ||
            (system.bc == BoundaryCondition::robin && system.sigma > 0.0))
            s0 = -1.0;
        detail::BlockLanczos lanczos(K, M, k, opts, s0);
        pairs = lanczos.run();
        spec.shift = lanczos.shift();
    }
    std::sort(pairs.begin(), pairs.end(), [](const EigenPair& a, const EigenPair& b) { return a.lambda < b.lambda; });
    detail::mass_orthonormalize(pairs, M);
    for (auto& p : pairs) {
        detail::fix_sign(p.vector);
        p.residual = relative_residual(K, M, p.lambda, p.vector);
        require(p.residual <= tol, ErrorKind::solver,
                "eigenpair residual " + std::to_string(p.residual) + " exceeds tolerance");
    }
    spec.pairs = std::move(pairs);
    return spec;
}

/// Greedy left-to-right clustering with relative tolerance tau.
inline Spectrum detect_clusters(Spectrum spectrum, double tau) {
    require(tau >= 0.0, ErrorKind::invalid_parameter, "tau must be >= 0");
    spectrum.tau = tau;
    spectrum.clusters.clear();
    const auto& p = spectrum.pairs;
    auto rel = [&](std::size_t i) {  // relative gap between lambda_i and lambda_{i+1}, 0-based
        return (p[i + 1].lambda - p[i].lambda) / std::max(std::fabs(p[i].lambda), 1.0);
    };
    std::size_t i = 0;
    while (i < p.size()) {
        std::size_t j = i;
        while (j + 1 < p.size() && rel(j) < tau) ++j;
        Cluster c;
        c.r = static_cast<int>(i) + 1;
        c.m = static_cast<int>(j - i + 1);
        c.width = p[j].lambda - p[i].lambda;
        if (i > 0) c.rel_gap_below = rel(i - 1);
        if (j + 1 < p.size()) c.rel_gap_above = rel(j);
        c.truncated = j + 1 == p.size();
        spectrum.clusters.push_back(c);
        i = j + 1;
    }
    return spectrum;
}

/// Smallest positive spacing lambda_{j+1} - lambda_j over j = 1..r+m, where
/// spacings below the cluster tolerance count as zero.
inline double gap_quantity(const Spectrum& spectrum, int r, int m) {
    require(r >= 1 && m >= 1, ErrorKind::invalid_parameter, "r and m must be >= 1");
    require(spectrum.k() >= static_cast<std::size_t>(r + m + 1), ErrorKind::invalid_parameter,
            "gap quantity needs at least r + m + 1 eigenvalues");
    double best = std::numeric_limits<double>::infinity();
    for (int j = 1; j <= r + m; ++j) {
        double lo = spectrum.lambda(j), hi = spectrum.lambda(j + 1);
        double d = hi - lo;
        if (d / std::max(std::fabs(lo), 1.0) < spectrum.tau || d <= 0.0) continue;
        best = std::min(best, d);
    }
    require(std::isfinite(best), ErrorKind::invalid_parameter, "no positive spacing in range");
    return best;
}

/// Cluster tolerance for mesh size h: 10x the relative splitting of the unit
/// square's 5 pi^2 Dirichlet pair at that h, floored at 1e-8.
inline double calibrate_tau(double h, double tol = 1e-10) {
    PolygonalDomain square({{0.0, 0.0}, {1.0, 0.0}, {1.0, 1.0}, {0.0, 1.0}});
    TriMesh mesh = triangulate(square, h);
    Spectrum s = solve_lowest(assemble(mesh, BoundaryCondition::dirichlet), 4, tol);
    double split = (s.lambda(3) - s.lambda(2)) / s.lambda(2);
    return std::max(10.0 * split, 1e-8);
}

/// Spectrum CSV: index, lambda, residual, cluster_id (all 1-based).
inline void write_spectrum_csv(std::ostream& os, const Spectrum& spectrum) {
    os.precision(17);
    os << "index,lambda,residual,cluster_id\n";
    std::vector<int> cid(spectrum.k(), 0);
    for (std::size_t c = 0; c < spectrum.clusters.size(); ++c)
        for (int i = 0; i < spectrum.clusters[c].m; ++i)
            cid[static_cast<std::size_t>(spectrum.clusters[c].r - 1 + i)] = static_cast<int>(c) + 1;
    for (std::size_t i = 0; i < spectrum.k(); ++i)
        os << i + 1 << ',' << spectrum.pairs[i].lambda << ',' << spectrum.pairs[i].residual << ',' << cid[i] << '\n';
}

}  // namespace specsplit
