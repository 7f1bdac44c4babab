#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <gtest/gtest.h>

#include "sail/discretize.hpp"

using namespace sail;
using std::numbers::pi;

namespace {

DomainGeometry unit(int n = 33) { return build_reference_domain(n, n, 1.0, 1.0); }

Vector polyline_sample(const DomainGeometry& g, const std::function<double(double, double)>& fn) {
    Vector out(static_cast<Eigen::Index>(g.beam_nodes()));
    for (std::size_t k = 0; k < g.beam_nodes(); ++k) {
        const Point p = g.point(g.gamma0_nodes()[k]);
        out[static_cast<Eigen::Index>(k)] = fn(p.x, p.y);
    }
    return out;
}

double laplacian_error(int n) {
    const auto g = unit(n);
    const NeumannLaplacian lap(g);
    const auto z = FieldOmega::sample(g, [](double x, double y) { return std::cos(pi * x) * std::cos(pi * y); });
    const Vector err = lap.apply(z.values) + 2.0 * pi * pi * z.values;
    return err.cwiseAbs().maxCoeff();
}

double biharmonic_error(int n) {
    const auto g = unit(n);
    const ClampedBiharmonic b(g);
    const double L = g.beam_length();
    const double k = 2.0 * pi / L;
    // v = (1 - cos ks)^2, clamped at both ends
    auto v = FieldBeam::sample(g, [&](double s) { return std::pow(1.0 - std::cos(k * s), 2); });
    auto f = FieldBeam::sample(g, [&](double s) {
        return -2.0 * std::pow(k, 4) * std::cos(k * s) + 8.0 * std::pow(k, 4) * std::cos(2.0 * k * s);
    });
    Eigen::SparseMatrix<double> a = b.matrix().matrix;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(a);
    const Vector vh = solver.solve(f.values);
    return (vh - v.values).cwiseAbs().maxCoeff();
}

}  // namespace

TEST(Laplacian, ConstantInKernel) {
    const auto g = unit();
    const NeumannLaplacian lap(g);
    const Vector ones = Vector::Ones(static_cast<Eigen::Index>(g.node_count()));
    EXPECT_EQ(lap.apply(ones).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(lap.matrix().matrix.rows(), static_cast<Eigen::Index>(g.node_count()));
}

TEST(Laplacian, Symmetric) {
    for (int n : {9, 33}) {
        const NeumannLaplacian lap(unit(n));
        EXPECT_EQ(asymmetry(lap.stiffness().matrix), 0.0);
    }
    const NeumannLaplacian rect(build_reference_domain(9, 13, 1.3, 0.7));
    EXPECT_EQ(asymmetry(rect.stiffness().matrix), 0.0);
}

TEST(Laplacian, NegativeSemidefinite) {
    const auto g = unit(9);
    const NeumannLaplacian lap(g);
    Eigen::SelfAdjointEigenSolver<Matrix> es(Matrix(lap.stiffness().matrix));
    EXPECT_LE(es.eigenvalues().maxCoeff(), 1e-12);
    EXPECT_NEAR(es.eigenvalues().maxCoeff(), 0.0, 1e-12);
    EXPECT_LT(es.eigenvalues()(es.eigenvalues().size() - 2), -1e-3);
}

TEST(Laplacian, QuadraticWithFlux) {
    const auto g = unit();
    const NeumannLaplacian lap(g);
    const auto z = FieldOmega::sample(g, [](double x, double y) { return x * x + y * y + 3.0; });
    // x^2 + y^2 has zero flux on the bottom edge; build the gamma0 load facet by facet
    Vector load = Vector::Zero(static_cast<Eigen::Index>(g.node_count()));
    for (const auto& f : g.facets()) {
        const Point p = g.point(f.node);
        load[static_cast<Eigen::Index>(f.node)] += f.weight * (2.0 * p.x * f.normal_x + 2.0 * p.y * f.normal_y);
    }
    const Vector out = lap.apply(z.values) + load.cwiseQuotient(lap.weights());
    EXPECT_LE((out.array() - 4.0).abs().maxCoeff(), 1e-9);
}

TEST(Laplacian, ConvergenceOrder) {
    const double e1 = laplacian_error(17), e2 = laplacian_error(33), e3 = laplacian_error(65);
    const double p1 = std::log2(e1 / e2), p2 = std::log2(e2 / e3);
    EXPECT_GE(p1, 1.8);
    EXPECT_LE(p1, 2.2);
    EXPECT_GE(p2, 1.8);
    EXPECT_LE(p2, 2.2);
}

TEST(Laplacian, DivergenceTheorem) {
    const auto g = unit();
    const NeumannLaplacian lap(g);
    std::mt19937_64 rng(7);
    std::normal_distribution<double> nd;
    Vector z(static_cast<Eigen::Index>(g.node_count()));
    for (auto& x : z) x = nd(rng);
    Vector flux(static_cast<Eigen::Index>(g.beam_nodes()));
    for (auto& x : flux) x = nd(rng);
    const double lhs = lap.weights().dot(lap.apply(z, flux));
    const double rhs = lap.flux_load(flux).sum();
    EXPECT_NEAR(lhs, rhs, 1e-12 * (1.0 + std::abs(rhs)));
    EXPECT_NEAR(lap.weights().dot(lap.apply(z)), 0.0, 1e-12);
}

TEST(Laplacian, DirichletEnergy) {
    const auto g = unit();
    const NeumannLaplacian lap(g);
    const auto z = FieldOmega::sample(g, [](double x, double) { return x; });
    EXPECT_NEAR(lap.dirichlet_energy(z.values), 1.0, 1e-13);
}

TEST(Biharmonic, QuarticExactAwayFromClamps) {
    const auto g = unit();
    const ClampedBiharmonic b(g);
    const double L = g.beam_length();
    const auto v = FieldBeam::sample(g, [&](double s) { return s * s * (L - s) * (L - s); });
    const Vector out = b.matrix().matrix * v.values;
    // the reflected ghost is exact only where the stencil does not reach it
    for (Eigen::Index k = 1; k + 1 < out.size(); ++k) EXPECT_NEAR(out[k], 24.0, 1e-6) << k;
    EXPECT_GT(std::abs(out[0] - 24.0), 1.0);
}

TEST(Biharmonic, SymmetricPositiveDefinite) {
    const auto g = unit();
    const ClampedBiharmonic b(g);
    EXPECT_EQ(asymmetry(b.matrix().matrix), 0.0);
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt{Eigen::SparseMatrix<double>(b.matrix().matrix)};
    EXPECT_EQ(llt.info(), Eigen::Success);
    Eigen::SelfAdjointEigenSolver<Matrix> es(Matrix(b.matrix().matrix));
    EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
    std::mt19937_64 rng(11);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 100; ++trial) {
        Vector v(b.matrix().rows());
        for (auto& x : v) x = nd(rng);
        EXPECT_GT(v.dot(b.matrix().matrix * v), 0.0);
    }
}

TEST(Biharmonic, SecondDifferenceFactorization) {
    const auto g = unit();
    const ClampedBiharmonic b(g);
    const Matrix d(b.second_difference().matrix);
    const Vector w = g.polyline_weights();
    const Matrix lhs = b.spacing() * Matrix(b.matrix().matrix);
    const Matrix rhs = d.transpose() * w.asDiagonal() * d;
    EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-6 * lhs.cwiseAbs().maxCoeff());
}

TEST(Biharmonic, ConvergenceOrder) {
    const double e1 = biharmonic_error(17), e2 = biharmonic_error(33), e3 = biharmonic_error(65);
    const double p1 = std::log2(e1 / e2), p2 = std::log2(e2 / e3);
    EXPECT_GE(p1, 1.8);
    EXPECT_LE(p1, 2.2);
    EXPECT_GE(p2, 1.8);
    EXPECT_LE(p2, 2.2);
}

TEST(Biharmonic, SmallestGrid) {
    // a 3x3 grid gives the minimum 7 polyline nodes
    const auto g = unit(3);
    EXPECT_EQ(g.beam_nodes(), 7u);
    EXPECT_NO_THROW(ClampedBiharmonic{g});
}

TEST(NeumannMap, ZeroFlux) {
    const auto g = unit(17);
    const auto s = neumann_map(g, Vector::Zero(static_cast<Eigen::Index>(g.beam_nodes())));
    EXPECT_EQ(s.z.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_FALSE(s.projected);
}

TEST(NeumannMap, LinearAndHarmonic) {
    const auto g = unit(17);
    const NeumannMap map(g);
    const double L = g.beam_length();
    Vector g1 = Vector::Zero(static_cast<Eigen::Index>(g.beam_nodes()));
    Vector g2 = g1;
    for (std::size_t k = 0; k < g.beam_nodes(); ++k) {
        const double s = g.arclength()[k];
        g1[static_cast<Eigen::Index>(k)] = std::sin(2.0 * pi * s / L);
        g2[static_cast<Eigen::Index>(k)] = std::cos(4.0 * pi * s / L) * std::sin(pi * s / L);
    }
    // make g2 exactly zero-mean in the discrete quadrature
    const NeumannLaplacian& lap = map.laplacian();
    g2.array() -= lap.flux_load(g2).sum() / g.polyline_weights().sum();
    const auto a = map.solve(g1), b = map.solve(g2), c = map.solve(g1 + g2);
    EXPECT_FALSE(a.projected);
    EXPECT_FALSE(b.projected);
    EXPECT_LE((c.z - a.z - b.z).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(lap.weights().dot(a.z), 0.0, 1e-13);
    const Vector r = lap.apply(a.z, g1);
    EXPECT_LE(r.cwiseAbs().maxCoeff(), 1e-10);
    for (auto n : g.interior_nodes()) EXPECT_LE(std::abs(lap.apply(a.z)[static_cast<Eigen::Index>(n)]), 1e-10);
}

TEST(NeumannMap, ProjectsIncompatibleFlux) {
    const auto g = unit(17);
    const auto s = neumann_map(g, Vector::Ones(static_cast<Eigen::Index>(g.beam_nodes())));
    EXPECT_TRUE(s.projected);
    EXPECT_NEAR(s.flux_integral, 3.0, 1e-12);
}

TEST(TraceFlux, Constant) {
    const auto g = unit(17);
    const Vector c = Vector::Constant(static_cast<Eigen::Index>(g.node_count()), 2.5);
    for (auto scheme : {FluxScheme::one_sided, FluxScheme::ghost_consistent}) {
        const auto tf = trace_and_flux(g, c, scheme);
        EXPECT_LE(tf.flux_gamma0.cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LE(tf.flux_gamma1.cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_EQ(tf.trace_gamma0.size(), static_cast<Eigen::Index>(g.beam_nodes()));
        EXPECT_DOUBLE_EQ(tf.trace_gamma0[3], 2.5);
    }
}

TEST(TraceFlux, LinearInY) {
    const auto g = unit(17);
    const auto z = FieldOmega::sample(g, [](double, double y) { return y; });
    const auto tf = trace_and_flux(g, z.values);
    for (Eigen::Index k = 0; k < tf.flux_gamma1.size(); ++k) EXPECT_NEAR(tf.flux_gamma1[k], -1.0, 1e-12);
    // top edge interior nodes
    for (int i = 1; i < 16; ++i) {
        const long k = g.gamma0_index(g.node(i, 16));
        EXPECT_NEAR(tf.flux_gamma0[k], 1.0, 1e-12);
    }
    // left edge interior nodes: normal is -x, so the flux is zero
    for (int j = 1; j < 16; ++j) EXPECT_NEAR(tf.flux_gamma0[g.gamma0_index(g.node(0, j))], 0.0, 1e-12);
    EXPECT_DOUBLE_EQ(tf.trace_gamma0[g.gamma0_index(g.node(5, 16))], 1.0);
}

TEST(TraceFlux, GhostConsistentOnNeumannSolve) {
    const auto g = unit(17);
    const double L = g.beam_length();
    Vector flux(static_cast<Eigen::Index>(g.beam_nodes()));
    for (std::size_t k = 0; k < g.beam_nodes(); ++k) flux[static_cast<Eigen::Index>(k)] = std::sin(2.0 * pi * g.arclength()[k] / L);
    const auto s = neumann_map(g, flux);
    const auto tf = trace_and_flux(g, s.z, FluxScheme::ghost_consistent);
    // clamp corners mix gamma0 and gamma1 facets and fall back to the one-sided rule
    for (Eigen::Index k = 1; k + 1 < flux.size(); ++k) EXPECT_NEAR(tf.flux_gamma0[k], flux[k], 1e-9) << k;
    for (Eigen::Index k = 1; k + 1 < tf.flux_gamma1.size(); ++k) EXPECT_NEAR(tf.flux_gamma1[k], 0.0, 1e-9);
}

TEST(TraceFlux, OneSidedSecondOrder) {
    auto err = [](int n) {
        const auto g = unit(n);
        const auto z = FieldOmega::sample(g, [](double x, double y) { return std::sin(x + 0.5) * std::exp(y); });
        const auto tf = trace_and_flux(g, z.values);
        const Vector exact = polyline_sample(g, [](double x, double y) { return std::sin(x + 0.5) * std::exp(y); });
        double e = 0.0;
        // top edge interior nodes
        for (int i = 1; i < n - 1; ++i) {
            const double x = i * g.hx();
            e = std::max(e, std::abs(tf.flux_gamma0[g.gamma0_index(g.node(i, n - 1))] - std::sin(x + 0.5) * std::exp(1.0)));
        }
        EXPECT_LE((tf.trace_gamma0 - exact).cwiseAbs().maxCoeff(), 1e-15);
        return e;
    };
    const double order = std::log2(err(17) / err(33));
    EXPECT_GE(order, 1.8);
    EXPECT_LE(order, 2.2);
}

TEST(BeamTransfer, RoundTrip) {
    const auto g = unit(17);
    const auto t = beam_transfer(g, g.beam_interior_count());
    const Matrix round = Matrix(t.grid_to_beam.matrix) * Matrix(t.beam_to_grid.matrix);
    EXPECT_TRUE(round.isIdentity(0.0));
    Vector delta = Vector::Zero(static_cast<Eigen::Index>(g.beam_interior_count()));
    delta[4] = 1.0;
    const Vector grid = t.beam_to_grid.matrix * delta;
    EXPECT_EQ(grid[static_cast<Eigen::Index>(g.gamma0_nodes()[5])], 1.0);
    EXPECT_EQ(grid.sum(), 1.0);
    try {
        beam_transfer(g, 3);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "mismatched-node-count");
    }
}

TEST(BeamTransfer, TraceToBeam) {
    const auto g = unit(9);
    const auto z = FieldOmega::sample(g, [](double x, double y) { return x + 10.0 * y; });
    const Vector b = trace_to_beam(g, z.values);
    const Vector p = beam_to_polyline(b);
    EXPECT_EQ(p.size(), static_cast<Eigen::Index>(g.beam_nodes()));
    EXPECT_EQ(p[0], 0.0);
    EXPECT_EQ(p[p.size() - 1], 0.0);
    EXPECT_DOUBLE_EQ(b[0], z.values[static_cast<Eigen::Index>(g.gamma0_nodes()[1])]);
}

TEST(SparseOperator, TripletText) {
    SparseOperator op;
    op.matrix.resize(2, 2);
    op.matrix.insert(0, 1) = 0.1;
    EXPECT_EQ(to_triplet_text(op), "0 1 0.10000000000000001\n");
}
