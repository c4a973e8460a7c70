#include <gtest/gtest.h>

#include <boost/math/tools/roots.hpp>
#include <cstdlib>
#include <numbers>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "specsplit/eigensolver.hpp"

using namespace specsplit;

namespace {

constexpr double kPi2 = std::numbers::pi * std::numbers::pi;

PolygonalDomain unit_square(BoundaryCondition bc = BoundaryCondition::dirichlet, double sigma = 0.0) {
    return PolygonalDomain({{0, 0}, {1, 0}, {1, 1}, {0, 1}}, bc, sigma);
}

double root(auto f, double lo, double hi) {
    boost::uintmax_t iters = 200;
    auto [a, b] = boost::math::tools::toms748_solve(f, lo, hi, boost::math::tools::eps_tolerance<double>(50), iters);
    return 0.5 * (a + b);
}

Spectrum synthetic(std::vector<double> lambdas, double tau) {
    Spectrum s;
    for (double l : lambdas) s.pairs.push_back({l, Vector(), 0.0});
    return detect_clusters(s, tau);
}

}  // namespace

TEST(SolveLowest, DirichletSquareClosedForm) {
    DiscreteSystem sys = assemble(triangulate(unit_square(), 0.05), BoundaryCondition::dirichlet);
    Spectrum s = solve_lowest(sys, 6);
    const double exact[6] = {2, 5, 5, 8, 10, 10};
    for (int i = 0; i < 6; ++i) EXPECT_NEAR(s.pairs[i].lambda / (exact[i] * kPi2), 1.0, 0.015) << i;
    for (const auto& p : s.pairs) EXPECT_LE(p.residual, 1e-9);
}

TEST(SolveLowest, MassOrthonormalVectors) {
    DiscreteSystem sys = assemble(triangulate(unit_square(), 0.05), BoundaryCondition::dirichlet);
    Spectrum s = solve_lowest(sys, 6);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 6; ++j)
            EXPECT_NEAR(s.pairs[i].vector.dot(sys.M.data * s.pairs[j].vector), i == j ? 1.0 : 0.0, 1e-10);
}

TEST(SolveLowest, LanczosAgreesWithDenseSolve) {
    PolygonalDomain l({{0, 0}, {2, 0}, {2, 1}, {1, 1}, {1, 2}, {0, 2}}, BoundaryCondition::neumann);
    DiscreteSystem sys = assemble(triangulate(l, 0.09), BoundaryCondition::neumann);
    ASSERT_GT(sys.dimension(), 300);
    Spectrum s = solve_lowest(sys, 8, 1e-10);
    Eigen::MatrixXd K(sys.K.data), M(sys.M.data);
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> dense(K, M);
    for (int i = 0; i < 8; ++i)
        EXPECT_NEAR(s.pairs[i].lambda, dense.eigenvalues()[i], 1e-8 * std::max(1.0, dense.eigenvalues()[i])) << i;
}

TEST(SolveLowest, NeumannSquare) {
    DiscreteSystem sys = assemble(triangulate(unit_square(BoundaryCondition::neumann), 0.05), BoundaryCondition::neumann);
    Spectrum s = solve_lowest(sys, 4);
    EXPECT_NEAR(s.pairs[0].lambda, 0.0, 1e-8);
    EXPECT_NEAR(s.pairs[1].lambda / kPi2, 1.0, 0.01);
    EXPECT_NEAR(s.pairs[2].lambda / kPi2, 1.0, 0.01);
    EXPECT_NEAR(s.pairs[3].lambda / (2 * kPi2), 1.0, 0.01);
}

TEST(SolveLowest, RobinSquareSeparableRoots) {
    // sigma u = du/dnu with sigma = -a: 1D root of (k^2 - a^2) sin k = 2 a k cos k
    double a = 1.0;
    double k = root([a](double x) { return (x * x - a * a) * std::sin(x) - 2 * a * x * std::cos(x); }, 1.0, 2.0);
    DiscreteSystem sys = assemble(triangulate(unit_square(BoundaryCondition::robin, -a), 0.05),
                                  BoundaryCondition::robin, -a);
    Spectrum s = solve_lowest(sys, 2);
    EXPECT_NEAR(s.pairs[0].lambda / (2 * k * k), 1.0, 0.005);
}

TEST(SolveLowest, RobinPositiveSigmaNegativeEigenvalue) {
    // sigma = 0.5: lowest 1D mode is cosh-like, lambda = -kappa^2 with tanh kappa = kappa / (kappa^2 + 1/4)
    double sg = 0.5;
    double kap = root([sg](double x) { return std::tanh(x) - x / (x * x + sg * sg); }, 0.5, 3.0);
    DiscreteSystem sys = assemble(triangulate(unit_square(BoundaryCondition::robin, sg), 0.05),
                                  BoundaryCondition::robin, sg);
    Spectrum s = solve_lowest(sys, 3);
    EXPECT_NEAR(s.pairs[0].lambda / (-2 * kap * kap), 1.0, 0.01);
    for (const auto& p : s.pairs) EXPECT_LE(p.residual, 1e-9);
}

TEST(SolveLowest, RejectsTooManyEigenpairs) {
    DiscreteSystem sys = assemble(triangulate(unit_square(), 0.25), BoundaryCondition::dirichlet);
    try {
        solve_lowest(sys, static_cast<int>(sys.dimension()));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::invalid_parameter);
    }
    EXPECT_THROW(solve_lowest(sys, 0), Error);
}

TEST(SolveLowest, IndependentOfThreadCount) {
    setenv("SPEC_SPLIT_THREADS", "1", 1);
    Spectrum a = solve_lowest(assemble(triangulate(unit_square(), 0.03), BoundaryCondition::dirichlet), 6);
    setenv("SPEC_SPLIT_THREADS", "4", 1);
    Spectrum b = solve_lowest(assemble(triangulate(unit_square(), 0.03), BoundaryCondition::dirichlet), 6);
    unsetenv("SPEC_SPLIT_THREADS");
    for (int i = 0; i < 6; ++i) {
        EXPECT_EQ(a.pairs[i].lambda, b.pairs[i].lambda);
        EXPECT_EQ(a.pairs[i].vector, b.pairs[i].vector);
    }
}

TEST(DetectClusters, GroupsByRelativeGap) {
    Spectrum s = synthetic({1.0, 2.0, 2.0 + 1e-9, 3.0, 3.0 + 1e-3, 4.0, 4.0}, 1e-6);
    ASSERT_EQ(s.clusters.size(), 5u);
    EXPECT_EQ(s.clusters[1].r, 2);
    EXPECT_EQ(s.clusters[1].m, 2);
    EXPECT_NEAR(s.clusters[1].width, 1e-9, 1e-15);
    EXPECT_EQ(s.clusters[2].m, 1);
    EXPECT_EQ(s.clusters[4].r, 6);
    EXPECT_EQ(s.clusters[4].m, 2);
    EXPECT_TRUE(s.clusters[4].truncated);
    EXPECT_FALSE(s.clusters[1].truncated);
    // gaps are relative to the lower eigenvalue: (2 - 1) / 1
    EXPECT_NEAR(s.clusters[1].rel_gap_below, 1.0, 1e-12);
    // a wider tolerance merges 3 and 3.001
    Spectrum w = synthetic({1.0, 2.0, 2.0 + 1e-9, 3.0, 3.0 + 1e-3, 4.0, 4.0}, 1e-3);
    EXPECT_EQ(w.clusters[2].m, 2);
}

TEST(GapQuantity, SquareSpectrumInUnitsOfPiSquared) {
    // exact Dirichlet square: 2, 5, 5, 8, 10, 10, 13 (times pi^2)
    Spectrum s = synthetic({2, 5, 5 + 1e-12, 8, 10, 10 + 1e-12, 13}, 1e-8);
    // j = 1..4: spacings 3, 0 (skipped), 3, 2
    EXPECT_DOUBLE_EQ(gap_quantity(s, 2, 2), 2.0);
    // j = 1..2: spacings 3, 0 (skipped)
    EXPECT_DOUBLE_EQ(gap_quantity(s, 1, 1), 3.0);
    EXPECT_THROW(gap_quantity(s, 6, 2), Error);
}

TEST(CalibrateTau, TenTimesSquareSplit) {
    double h = 0.05;
    DiscreteSystem sys = assemble(triangulate(unit_square(), h), BoundaryCondition::dirichlet);
    Spectrum s = solve_lowest(sys, 4, 1e-10);
    double split = (s.pairs[2].lambda - s.pairs[1].lambda) / s.pairs[1].lambda;
    EXPECT_DOUBLE_EQ(calibrate_tau(h), std::max(10 * split, 1e-8));
    // the square's degenerate pairs stay clustered at this tolerance
    Spectrum c = detect_clusters(solve_lowest(sys, 6), calibrate_tau(h));
    EXPECT_EQ(c.clusters.size(), 4u);
}

TEST(WriteSpectrumCsv, RowsAndClusterIds) {
    Spectrum s = synthetic({1.0, 2.0, 2.0, 3.0}, 1e-6);
    std::ostringstream os;
    write_spectrum_csv(os, s);
    std::istringstream in(os.str());
    std::string line;
    std::vector<std::string> rows;
    while (std::getline(in, line)) rows.push_back(line);
    ASSERT_EQ(rows.size(), 5u);
    EXPECT_EQ(rows[0], "index,lambda,residual,cluster_id");
    EXPECT_EQ(rows[2].substr(rows[2].rfind(',') + 1), "2");
    EXPECT_EQ(rows[3].substr(rows[3].rfind(',') + 1), "2");
    EXPECT_EQ(rows[4].substr(rows[4].rfind(',') + 1), "3");
}
