#include <cmath>

#include <gtest/gtest.h>

#include "sail/random.hpp"
#include "sail/verify.hpp"

using namespace sail;

namespace {

struct Reference {
    DomainGeometry g;
    ConvexWeight weight;
    AssumptionReport report;
    CarlemanParams params;

    explicit Reference(int n, double T = 4.6)
        : g(build_reference_domain(n, n, 1.0, 1.0)),
          weight(eval_weight(g, {-1.0, 0.0})),
          report(verify_assumptions(g, weight)),
          params(select_time_params(weight, report, T)) {}
};

Vector bump(const DomainGeometry& g) {
    return FieldOmega::sample(g, [](double x, double y) {
               const double d = ((x - 0.5) * (x - 0.5) + (y - 0.5) * (y - 0.5)) / 0.09;
               return d < 1.0 ? std::pow(1.0 - d, 3) : 0.0;
           })
        .values;
}

SourceSpec linear_source(const DomainGeometry& g, double T) {
    SourceSpec s;
    s.f = bump(g);
    s.R = std::make_shared<SeparableProfile>(Vector::Ones(static_cast<Eigen::Index>(g.node_count())),
                                             TimeProfile::polynomial({1.0, 1.0}, 0.5 * T));
    s.r0 = s.r1 = 1.0;
    return s;
}

RunOptions two_sided(double T, double dt) {
    RunOptions o;
    o.T = T;
    o.dt = dt;
    o.mode = RunMode::two_sided;
    return o;
}

WaveField free_wave(const DomainGeometry& g, double T, double dt) {
    const Vector w0 = bump(g);
    const auto tr = simulate_wave(g, Vector(), w0, Vector::Zero(w0.size()), nullptr, two_sided(T, dt));
    return wave_field(tr, g, nullptr, nullptr);
}

}  // namespace

TEST(Carleman, ZeroTrajectory) {
    Reference s(9);
    WaveField f = free_wave(s.g, s.params.T, 1.0 / 64.0);
    for (auto* v : {&f.w, &f.wt, &f.F, &f.flux})
        for (Vector& x : *v) x.setZero();
    const auto win = locate_sigma_window(s.g, s.weight, s.params, 0.5, f.size() - 1);
    const auto r = carleman_sides(s.g, s.weight, s.params, f, win.mask, 2.0);
    EXPECT_EQ(r.grad, 0.0);
    EXPECT_EQ(r.qsigma, 0.0);
    EXPECT_EQ(r.bt_total(), 0.0);
    EXPECT_EQ(r.rhs_f + r.rhs_lot + r.rhs_endpoint, 0.0);
    const auto rep = carleman_scan(s.g, s.weight, s.params, f, win.mask);
    EXPECT_TRUE(rep.degenerate);
    ASSERT_TRUE(rep.tau_star);
    EXPECT_EQ(*rep.tau_star, 0.5);
}

TEST(Carleman, TauZeroIsUnweighted) {
    Reference s(17);
    const WaveField f = free_wave(s.g, s.params.T, 1.0 / 128.0);
    const auto win = locate_sigma_window(s.g, s.weight, s.params, 0.5, f.size() - 1);
    const auto r = carleman_sides(s.g, s.weight, s.params, f, win.mask, 0.0);
    const NeumannLaplacian lap(s.g);
    const Vector& w = s.g.node_weights();
    double grad = 0.0, qs = 0.0, sq = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) {
        const double tw = (k == 0 || k + 1 == f.size() ? 0.5 : 1.0) * (f.times[1] - f.times[0]);
        grad += tw * (f.wt[k].cwiseProduct(f.wt[k]).dot(w) + lap.dirichlet_energy(f.w[k]));
        sq += tw * f.w[k].cwiseProduct(f.w[k]).dot(w);
        for (std::size_t a = 0; a < s.g.node_count(); ++a)
            if (win.mask.at(k, a)) qs += tw * w[static_cast<Eigen::Index>(a)] * std::pow(f.w[k][static_cast<Eigen::Index>(a)], 2);
    }
    EXPECT_NEAR(r.grad, grad, 1e-12 * grad);
    EXPECT_NEAR(r.qsigma, qs, 1e-12 * qs);
    EXPECT_NEAR(r.rhs_lot, sq, 1e-12 * sq);
    EXPECT_EQ(r.rhs_endpoint, 0.0);
    for (double b : r.bt) EXPECT_EQ(b, 0.0);
}

TEST(Carleman, FreeWaveBoundaryTerms) {
    Reference s(17);
    const WaveField f = free_wave(s.g, s.params.T, 1.0 / 128.0);
    const auto win = locate_sigma_window(s.g, s.weight, s.params, 0.5, f.size() - 1);
    const auto a = carleman_sides(s.g, s.weight, s.params, f, win.mask, 2.0);
    const auto b = carleman_sides(s.g, s.weight, s.params, f, win.mask, 2.0);
    // zero flux leaves only the gamma0 trace terms
    EXPECT_EQ(a.bt[1], 0.0);
    EXPECT_EQ(a.bt[2], 0.0);
    EXPECT_EQ(a.bt[3], 0.0);
    for (std::size_t k = 0; k < 5; ++k) {
        EXPECT_TRUE(std::isfinite(a.bt[k]));
        EXPECT_EQ(a.bt[k], b.bt[k]);
    }
    EXPECT_NE(a.bt[0], 0.0);
    EXPECT_NE(a.bt[4], 0.0);
    EXPECT_EQ(a.rhs_f, 0.0);
}

TEST(Carleman, WeightMonotoneOnQSigma) {
    Reference s(9);
    const WaveField f = free_wave(s.g, s.params.T, 1.0 / 64.0);
    const auto win = locate_sigma_window(s.g, s.weight, s.params, 0.5, f.size() - 1);
    double prev_tau = 0.0;
    double prev = carleman_sides(s.g, s.weight, s.params, f, win.mask, 0.0).qsigma;
    for (double tau : {0.5, 1.0, 2.0, 4.0}) {
        const double cur = carleman_sides(s.g, s.weight, s.params, f, win.mask, tau).qsigma;
        // phi >= sigma on Q(sigma)
        EXPECT_GE(cur, std::exp(2.0 * (tau - prev_tau) * 0.5) * prev * (1.0 - 1e-12));
        prev = cur;
        prev_tau = tau;
    }
}

TEST(Carleman, EndpointTermDecays) {
    Reference s(9);
    const WaveField f = free_wave(s.g, s.params.T, 1.0 / 64.0);
    const auto win = locate_sigma_window(s.g, s.weight, s.params, 0.5, f.size() - 1);
    const double knee = 1.5 / s.params.delta;
    double prev = carleman_sides(s.g, s.weight, s.params, f, win.mask, knee).rhs_endpoint;
    for (double tau = knee + 0.5; tau < knee + 5.0; tau += 0.5) {
        const double cur = carleman_sides(s.g, s.weight, s.params, f, win.mask, tau).rhs_endpoint;
        EXPECT_LT(cur, prev);
        prev = cur;
    }
}

TEST(Carleman, ScanOnLinearSystem) {
    Reference s(17);
    const OperatorBundle ops(s.g, Vector(), 0.0);
    const auto src = linear_source(s.g, s.params.T);
    const auto tr = simulate_coupled(ops, &src, CoupledState::zeros(s.g), two_sided(s.params.T, 1.0 / 256.0));
    const WaveField f = linear_system_field(tr, ops, src);
    EXPECT_EQ(f.w[tr.center_index].cwiseAbs().maxCoeff(), 0.0);
    const auto win = locate_sigma_window(s.g, s.weight, s.params, 0.5, f.size() - 1);
    const auto rep = carleman_scan(s.g, s.weight, s.params, f, win.mask);
    EXPECT_FALSE(rep.degenerate);
    EXPECT_TRUE(rep.exists());
    EXPECT_TRUE(rep.fit_ok());
    EXPECT_TRUE(rep.endpoint_decreasing);
    EXPECT_GT(rep.beta_hat, 0.0);
    // the boundary term outgrows τ³ by one power as the grid resolves the weight
    EXPECT_GT(rep.slope, 3.0);
    EXPECT_LT(rep.slope, 4.2);
    for (const auto& r : rep.records) {
        EXPECT_TRUE(std::isfinite(r.margin));
        EXPECT_GT(r.qsigma, 0.0);
    }
}

TEST(Carleman, OverflowCap) {
    Reference s(9);
    WaveField f = free_wave(s.g, s.params.T, 1.0 / 64.0);
    const auto win = locate_sigma_window(s.g, s.weight, s.params, 0.5, f.size() - 1);
    EXPECT_NEAR(tau_overflow_cap(s.g, s.weight, s.params), 70.0, 1e-12);
    s.params.tau_grid = {0.5, 1.0, 2.0, 4.0, 100.0, 200.0};
    try {
        carleman_scan(s.g, s.weight, s.params, f, win.mask);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "fit-window-empty");
    }
    s.params.tau_grid = {0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 100.0};
    const auto rep = carleman_scan(s.g, s.weight, s.params, f, win.mask);
    ASSERT_EQ(rep.dropped_taus.size(), 1u);
    EXPECT_EQ(rep.records.size(), 6u);
}

TEST(Carleman, GridMismatch) {
    Reference s(9);
    const WaveField f = free_wave(s.g, s.params.T, 1.0 / 64.0);
    const auto win = locate_sigma_window(s.g, s.weight, s.params, 0.5, f.size() + 3);
    EXPECT_THROW(carleman_sides(s.g, s.weight, s.params, f, win.mask, 1.0), Error);
}

TEST(Observability, ConstantState) {
    Reference s(9);
    std::vector<ObservationSample> ens{{[](double, double) { return 1.0; }, [](double, double) { return 0.0; }, {}}};
    ObservabilityOptions o;
    o.dt = 1.0 / 64.0;
    o.refine = false;
    const auto rep = observability_estimate(s.g, {}, s.report, 4.6, ens, o);
    // w ≡ 1 for all time: ratio = |Ω| / (|Γ0| T)
    EXPECT_NEAR(rep.c_hat, 1.0 / (3.0 * 4.6), 1e-12);
    EXPECT_NEAR(rep.samples[0].n_T, 0.0, 1e-12);
}

TEST(Observability, RejectsShortHorizon) {
    Reference s(9);
    const auto ens = random_observation_ensemble(7, 1, 1.0, 1.0);
    try {
        observability_estimate(s.g, {}, s.report, 4.4, ens);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "horizon-too-short");
        EXPECT_EQ(e.kind(), ErrorKind::validation);
    }
}

TEST(Observability, SmallEnsembleStableUnderRefinement) {
    Reference s(9);
    const auto ens = random_observation_ensemble(11, 6, 1.0, 1.0);
    ObservabilityOptions o;
    o.dt = 1.0 / 128.0;
    const auto rep = observability_estimate(s.g, [](double x, double) { return 0.2 * x; }, s.report, 4.6, ens, o);
    EXPECT_TRUE(rep.finite());
    EXPECT_EQ(rep.samples.size(), 6u);
    EXPECT_EQ(rep.refined_samples.size(), 6u);
    EXPECT_LE(rep.refinement_change, 0.5);
    for (const auto& r : rep.samples) EXPECT_LE(r.ratio, rep.c_hat);
}

TEST(Observability, EnsembleIsReproducible) {
    const auto a = random_observation_ensemble(3, 4, 1.0, 1.0);
    const auto b = random_observation_ensemble(3, 4, 1.0, 1.0);
    const auto c = random_observation_ensemble(4, 4, 1.0, 1.0);
    for (std::size_t k = 0; k < 4; ++k) {
        EXPECT_EQ(a[k].w0(0.3, 0.7), b[k].w0(0.3, 0.7));
        EXPECT_EQ(a[k].g(1.1, 2.0), b[k].g(1.1, 2.0));
        EXPECT_NE(a[k].w1(0.3, 0.7), c[k].w1(0.3, 0.7));
    }
}

TEST(NormEquivalence, ClosedForms) {
    const auto g = build_reference_domain(33, 33, 1.0, 1.0);
    const Vector one = Vector::Ones(static_cast<Eigen::Index>(g.node_count()));
    EXPECT_NEAR(norm_equivalence_ratio(g, one), 3.0, 1e-13);
    const Vector x = FieldOmega::sample(g, [](double xx, double) { return xx; }).values;
    // (1 + 1/3 + 1) / (1/3 + 1) up to the trapezoid error h²/6 in each x² integral
    EXPECT_NEAR(norm_equivalence_ratio(g, x), 1.75, 2.0 * g.hx() * g.hx());
}

TEST(NormEquivalence, EnsembleBounds) {
    const auto g = build_reference_domain(17, 17, 1.0, 1.0);
    SplitMix64 rng(5);
    std::vector<Vector> ens;
    for (int k = 0; k < 50; ++k) ens.push_back(FieldOmega::sample(g, SmoothField::random(rng, 5, 1.0, 1.0)).values);
    const auto r = norm_equivalence_probe(g, ens);
    EXPECT_TRUE(r.pass());
    EXPECT_GT(r.k1, 0.0);
    EXPECT_LT(r.k2, 10.0);
}
