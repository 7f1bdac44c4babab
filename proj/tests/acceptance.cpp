// One line per acceptance criterion. Exit status is the number of failing
// criteria (0 when all pass).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include "sail/app.hpp"
#include "sail/parallel.hpp"
#include "sail/random.hpp"

using namespace sail;
using std::numbers::pi;
namespace fs = std::filesystem;

namespace {

// Frozen on the acceptance configuration (17 x 17, T = 4.6, dt = 1/256,
// stride 8). Bounds are min(spec, 1.2 x frozen).
constexpr double frozen_noiseless_error = 2.1555292596820325e-04;
constexpr double frozen_recover_error = 8.593745339808938e-02;

struct Item {
    std::string name;
    double value;
    std::string relation;
    double limit;
    bool pass;
};

Item le(std::string n, double v, double lim) { return {std::move(n), v, "<=", lim, v <= lim}; }
Item ge(std::string n, double v, double lim) { return {std::move(n), v, ">=", lim, v >= lim}; }
Item is(std::string n, bool ok) { return {std::move(n), ok ? 1.0 : 0.0, "==", 1.0, ok}; }

struct Criterion {
    int id;
    std::string title;
    double budget;  // seconds
    std::function<std::vector<Item>()> body;
};

DomainGeometry unit(int n) { return build_reference_domain(n, n, 1.0, 1.0); }

Vector bump(const DomainGeometry& g, double cx, double cy, double r) {
    return FieldOmega::sample(g, [&](double x, double y) {
               const double d2 = ((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (r * r);
               return d2 < 1.0 ? std::pow(1.0 - d2, 3) : 0.0;
           })
        .values;
}

Vector clamped_beam(const DomainGeometry& g, int mode) {
    const double L = g.beam_length();
    return FieldBeam::sample(g, [&](double s) { return std::pow(std::sin(pi * s / L), 2) * std::sin(mode * pi * s / L); })
        .values;
}

CoupledState smooth_state(const DomainGeometry& g) {
    auto y = CoupledState::zeros(g);
    y.z = FieldOmega::sample(g, [](double x, double yy) { return std::cos(pi * x) * std::cos(pi * yy); }).values;
    y.zt = FieldOmega::sample(g, [](double x, double) { return 0.5 * std::cos(pi * x); }).values;
    y.v = 0.3 * clamped_beam(g, 1);
    y.vt = 0.2 * clamped_beam(g, 2);
    return y;
}

double max_abs(const Trajectory& tr) {
    double m = 0.0;
    for (const auto& s : tr.states) m = std::max(m, s.pack().cwiseAbs().maxCoeff());
    return m;
}

// 1 ------------------------------------------------------------------------

std::vector<Item> geometry_suite() {
    const DomainGeometry g = unit(33);
    const ConvexWeight w = eval_weight(g, {-1.0, 0.0});
    const AssumptionReport a = verify_assumptions(g, w);
    CarlemanParams p = select_time_params(w, a, 4.6);
    const SigmaWindow win = locate_sigma_window(g, w, p, 0.5, 2 * half_window_steps(4.6, 1.0 / 256.0));

    double max_phi0 = -1e300, min_phi_window = 1e300;
    for (std::size_t n = 0; n < g.node_count(); ++n) max_phi0 = std::max(max_phi0, phi(w, g.point(n), 0.0, p));
    for (std::size_t k = 0; k <= win.mask.steps; ++k) {
        const double t = static_cast<double>(k) * win.mask.dt;
        if (t < win.t0 || t > win.t1) continue;
        for (std::size_t n = 0; n < g.node_count(); ++n) min_phi_window = std::min(min_phi_window, phi(w, g.point(n), t, p));
    }
    return {le("|rho-2|", std::abs(a.rho - 2.0), 1e-12),
            le("|s-2|", std::abs(a.s - 2.0), 1e-12),
            le("|max_d-5|", std::abs(a.max_d - 5.0), 1e-12),
            le("max|h.nu|_G1", a.max_h_dot_nu_gamma1, 1e-12),
            le("|T_min-2sqrt5|", std::abs(min_observation_time(a) - 2.0 * std::sqrt(5.0)), 1e-12),
            ge("delta", p.delta, 0.0),
            ge("cT^2-4max_d-4delta", p.c * p.T * p.T - 4.0 * a.max_d - 4.0 * p.delta, 0.0),
            le("c", p.c, 1.0),
            le("max_phi(0)+delta", max_phi0 + p.delta, 0.0),
            ge("min_phi_on_window-sigma", min_phi_window - 0.5, 0.0),
            is("sandwich", sandwich_holds(g, win))};
}

// 2 ------------------------------------------------------------------------

double laplacian_error(int n) {
    const auto g = unit(n);
    const NeumannLaplacian lap(g);
    const auto z = FieldOmega::sample(g, [](double x, double y) { return std::cos(pi * x) * std::cos(pi * y); });
    return (lap.apply(z.values) + 2.0 * pi * pi * z.values).cwiseAbs().maxCoeff();
}

double biharmonic_error(int n) {
    const auto g = unit(n);
    const ClampedBiharmonic b(g);
    const double k = 2.0 * pi / g.beam_length();
    const auto v = FieldBeam::sample(g, [&](double s) { return std::pow(1.0 - std::cos(k * s), 2); });
    const auto f = FieldBeam::sample(g, [&](double s) {
        return -2.0 * std::pow(k, 4) * std::cos(k * s) + 8.0 * std::pow(k, 4) * std::cos(2.0 * k * s);
    });
    Eigen::SimplicialLDLT<SparseMatrix> solver(b.matrix().matrix);
    return (solver.solve(f.values) - v.values).cwiseAbs().maxCoeff();
}

std::vector<Item> discretization_suite() {
    const double l1 = laplacian_error(17), l2 = laplacian_error(33), l3 = laplacian_error(65);
    const double b1 = biharmonic_error(17), b2 = biharmonic_error(33), b3 = biharmonic_error(65);
    const auto g = unit(33);
    const NeumannLaplacian lap(g);
    const ClampedBiharmonic bih(g);
    Eigen::SimplicialLLT<SparseMatrix> llt(bih.matrix().matrix);
    Eigen::SelfAdjointEigenSolver<Matrix> es(Matrix(bih.matrix().matrix));

    SplitMix64 rng(7);
    Vector z(static_cast<Eigen::Index>(g.node_count())), flux(static_cast<Eigen::Index>(g.beam_nodes()));
    for (auto& x : z) x = rng.normal();
    for (auto& x : flux) x = rng.normal();
    const double lhs = lap.weights().dot(lap.apply(z, flux)), rhs = lap.flux_load(flux).sum();

    std::vector<Item> out;
    for (double p : {std::log2(l1 / l2), std::log2(l2 / l3)}) {
        out.push_back(ge("laplacian_order", p, 1.8));
        out.push_back(le("laplacian_order", p, 2.2));
    }
    for (double p : {std::log2(b1 / b2), std::log2(b2 / b3)}) {
        out.push_back(ge("biharmonic_order", p, 1.8));
        out.push_back(le("biharmonic_order", p, 2.2));
    }
    out.push_back(le("laplacian_asymmetry", asymmetry(lap.stiffness().matrix), 0.0));
    out.push_back(le("biharmonic_asymmetry", asymmetry(bih.matrix().matrix), 0.0));
    out.push_back(is("biharmonic_cholesky", llt.info() == Eigen::Success));
    out.push_back(ge("biharmonic_min_eig", es.eigenvalues().minCoeff(), 0.0));
    out.push_back(le("divergence_theorem", std::abs(lhs - rhs) / (1.0 + std::abs(rhs)), 1e-12));
    return out;
}

// 3 ------------------------------------------------------------------------

std::vector<Item> forward_suite() {
    const auto g = unit(33);
    std::vector<Item> out;
    {
        const OperatorBundle ops(g, Vector(), 0.0);
        RunOptions o;
        o.T = 4.6;
        o.dt = g.hx() / 4.0;
        o.mode = RunMode::two_sided;
        const auto tr = simulate_coupled(ops, nullptr, smooth_state(g), o);
        const auto e = energy(tr, ops);
        const double e0 = e.conserved[tr.center_index];
        double drift = 0.0;
        for (double v : e.conserved) drift = std::max(drift, std::abs(v - e0) / e0);
        out.push_back(le("energy_drift_k0", drift, 1e-3));
    }
    RunOptions o;
    o.T = 4.6;
    o.dt = 1.0 / 256.0;
    {
        const OperatorBundle ops(g, Vector(), 1.0);
        const auto tr = simulate_coupled(ops, nullptr, smooth_state(g), o);
        const auto e = energy(tr, ops);
        double rise = 0.0;
        for (std::size_t k = 1; k < e.conserved.size(); ++k) rise = std::max(rise, e.conserved[k] - e.conserved[k - 1]);
        out.push_back(le("damped_energy_rise", rise, 1e-10));
    }
    {
        RunOptions w = o;
        w.mode = RunMode::two_sided;
        const Vector w0 = bump(g, 0.4, 0.6, 0.3), w1 = bump(g, 0.7, 0.3, 0.25);
        const Vector q = FieldOmega::sample(g, [](double x, double y) { return 0.5 * x * y; }).values;
        const auto fwd = simulate_wave(g, q, w0, w1, nullptr, w);
        const auto& end = fwd.states.back();
        const auto back = simulate_wave(g, q, end.z, end.zt, nullptr, w);
        const auto& ret = back.states.front();
        const double num = std::sqrt((ret.z - w0).squaredNorm() + (ret.zt - w1).squaredNorm());
        out.push_back(le("wave_reversibility", num / std::sqrt(w0.squaredNorm() + w1.squaredNorm()), 1e-8));
    }
    {
        const OperatorBundle ops(g, Vector::Constant(static_cast<Eigen::Index>(g.node_count()), 0.3), 1.0);
        const CoupledIntegrator integ(ops, o);
        SourceSpec s1;
        s1.f = bump(g, 0.5, 0.5, 0.3);
        s1.R = affine_time_profile(g, o.T);
        SourceSpec s2 = s1, s12 = s1;
        s2.f = bump(g, 0.2, 0.7, 0.4);
        s12.f = s1.f + s2.f;
        const CoupledState y1 = smooth_state(g), y2 = CoupledState::zeros(g);
        const auto a = integ.run(&s1, y1), b = integ.run(&s2, y2), c = integ.run(&s12, y1 + y2);
        double err = 0.0;
        for (std::size_t k = 0; k < c.size(); ++k)
            err = std::max(err, (c.states[k].pack() - a.states[k].pack() - b.states[k].pack()).cwiseAbs().maxCoeff());
        // rounding accumulated over the run: a few ulps per step
        const double ulps = 16.0 * static_cast<double>(c.size()) * std::numeric_limits<double>::epsilon();
        out.push_back(le("superposition", err / max_abs(c), ulps));
    }
    return out;
}

// 4 ------------------------------------------------------------------------

std::vector<Item> carleman_suite() {
    const auto g = unit(33);
    const double T = 4.6;
    const ConvexWeight w = eval_weight(g, {-1.0, 0.0});
    const AssumptionReport a = verify_assumptions(g, w);
    CarlemanParams p = select_time_params(w, a, T);
    const OperatorBundle ops(g, Vector(), 0.0);
    const SourceSpec src = carleman_reference_source(g, T);
    RunOptions o;
    o.T = T;
    o.dt = 1.0 / 256.0;
    o.mode = RunMode::two_sided;
    const WaveField field = linear_system_field(simulate_coupled(ops, &src, CoupledState::zeros(g), o), ops, src);
    const SigmaWindow win = locate_sigma_window(g, w, p, 0.5, field.size() - 1);
    const CarlemanReport rep = carleman_scan(g, w, p, field, win.mask);

    // τ = 0 against plain trapezoid sums
    const CarlemanRecord r0 = carleman_sides(g, w, p, field, win.mask, 0.0);
    const NeumannLaplacian lap(g);
    const Vector& nw = g.node_weights();
    double grad = 0.0, qs = 0.0, sq = 0.0, f2 = 0.0;
    for (std::size_t k = 0; k < field.size(); ++k) {
        const double tw = (k == 0 || k + 1 == field.size() ? 0.5 : 1.0) * (field.times[1] - field.times[0]);
        grad += tw * (field.wt[k].cwiseAbs2().dot(nw) + lap.dirichlet_energy(field.w[k]));
        sq += tw * field.w[k].cwiseAbs2().dot(nw);
        f2 += 2.0 * tw * field.F[k].cwiseAbs2().dot(nw);
        for (std::size_t n = 0; n < g.node_count(); ++n)
            if (win.mask.at(k, n)) qs += tw * nw[static_cast<Eigen::Index>(n)] * std::pow(field.w[k][static_cast<Eigen::Index>(n)], 2);
    }
    const double tau0 = std::max({std::abs(r0.grad - grad) / grad, std::abs(r0.qsigma - qs) / qs,
                                  std::abs(r0.rhs_lot - sq) / sq, std::abs(r0.rhs_f - f2) / f2});
    return {is("tau_star_exists", rep.exists()), ge("fit_r2", rep.r_squared, 0.99),
            ge("growth_exponent", rep.slope, 2.5), le("growth_exponent", rep.slope, 3.5),
            le("tau0_reduction", tau0, 1e-12)};
}

// 5 ------------------------------------------------------------------------

std::vector<Item> observability_suite() {
    const auto g = unit(33);
    const AssumptionReport a = verify_assumptions(g, eval_weight(g, {-1.0, 0.0}));
    const auto ensemble = random_observation_ensemble(1, 50, 1.0, 1.0);
    const auto zero = [](double, double) { return 0.0; };
    const ObservabilityReport rep = observability_estimate(g, zero, a, 4.6, ensemble);
    bool rejected = false;
    try {
        observability_estimate(g, zero, a, 4.4, {ensemble.front()});
    } catch (const Error& e) {
        rejected = e.kind() == ErrorKind::validation;
    }
    return {is("finite_c_hat", rep.finite() && std::isfinite(rep.c_hat)),
            le("refinement_change", rep.refinement_change, 0.5), is("short_T_rejected", rejected)};
}

// 6 ------------------------------------------------------------------------

std::vector<Item> inverse_suite() {
    const auto g = unit(17);
    const ForwardMapConfig config = reference_map_config(g);
    const ForwardMap map = assemble_forward_map(config);
    const InjectivityReport inj = injectivity_diagnostics(map);
    const MapSolver solver(map);

    SplitMix64 rng(3);
    Vector fr(map.matrix.cols()), br(map.matrix.rows());
    for (auto& x : fr) x = rng.normal();
    for (auto& x : br) x = rng.normal();
    const Vector mf = simulate_observation(config, map.embed(fr));
    const double transpose = std::abs(mf.dot(br) - fr.dot(map.adjoint(br))) / (mf.norm() * br.norm());

    ForwardMapConfig dead = config;
    dead.R = std::make_shared<SeparableProfile>(Vector::Ones(static_cast<Eigen::Index>(g.node_count())),
                                                TimeProfile::constant(0.0));
    dead.r_label = "0";
    const InjectivityReport inj0 = injectivity_diagnostics(assemble_forward_map(dead));

    const Vector truth = map.embed(map.restrict_field(reference_source(g)));
    const TraceSeries clean = simulate_traces(config, truth);
    ReconstructOptions ro;
    ro.truth = truth;
    const double noiseless = *reconstruct_f(solver, stack_observation(clean), ro).rel_error;

    const ClampedBiharmonic bih(g);
    double noisy_mean = 0.0;
    constexpr int seeds = 5;
    for (int s = 1; s <= seeds; ++s) {
        double sigma = 0.0;
        const TraceSeries noisy = add_trace_noise(clean, bih, 0.01, static_cast<std::uint64_t>(s), &sigma);
        ReconstructOptions nro;
        nro.truth = truth;
        nro.noise_sigma = sigma;
        noisy_mean += *reconstruct_f(solver, stack_observation(noisy), nro).rel_error / seeds;
    }

    const ConfigFactory setup = [](const DomainGeometry& gg) { return reference_map_config(gg); };
    const auto ensemble = stability_ensemble(1, 20, 10, 1.0, 1.0);
    const StabilityProbeReport probe = stability_probe(setup, g, ensemble, true);
    bool exact = true;
    for (std::size_t k = 0; k < 5; ++k) {
        const Vector f = FieldOmega::sample(g, ensemble[k]).values;
        const double r = stability_ratio(config, f).ratio;
        exact = exact && stability_ratio(config, 8.0 * f).ratio == r && stability_ratio(config, 0.25 * f).ratio == r;
    }
    const PsiYReport py = psi_y_split(config, truth);

    return {le("transpose", transpose, 1e-12),
            is("full_rank", inj.full_rank()),
            is("rank0_for_R0", inj0.rank == 0),
            le("noiseless_error", noiseless, std::min(0.05, 1.2 * frozen_noiseless_error)),
            le("noise1pct_error_mean", noisy_mean, 0.25),
            is("scale_invariant", exact),
            le("c_stab_refinement", probe.refinement_change, 0.5),
            le("psi_y_additivity", py.additivity_error, 0.05),
            le("K_sigma20/sigma1", py.k_decay, 0.1)};
}

// 7 ------------------------------------------------------------------------

std::vector<Item> nonlinear_suite() {
    const auto g = unit(17);
    const NonlinearSetup setup = reference_nonlinear_setup(g);
    const Vector q = potential_bump(g, 0.1);

    const RecoverResult same = recover_q(setup, nonlinear_observation(setup, q), q, {}, &q);
    const RecoverResult small = recover_q(setup, nonlinear_observation(setup, q), Vector::Zero(q.size()), {}, &q);

    const Vector big = potential_bump(g, 5.0);
    bool tripped = false;
    try {
        recover_q(setup, nonlinear_observation(setup, big), Vector::Zero(q.size()), {}, &big);
    } catch (const DivergenceError&) {
        tripped = true;
    }
    return {is("exact_at_p0", same.converged && same.history.size() == 1 && same.history.front().rel_error == 0.0),
            le("small_bump_error", small.history.back().rel_error, std::min(0.15, 1.2 * frozen_recover_error)),
            is("divergence_tripped", tripped)};
}

// 8 ------------------------------------------------------------------------

std::vector<Item> determinism_suite() {
    const fs::path root = fs::temp_directory_path() / "sail_acceptance_determinism";
    fs::remove_all(root);
    auto outputs = [](const RunManifest& m) {
        std::vector<std::pair<std::string, std::string>> v;
        for (const auto& f : m.outputs) v.emplace_back(f.path, f.sha256);
        return v;
    };
    Json user = {{"geometry", {{"nx", 9}, {"ny", 9}}}, {"task", {{"noise_level", 0.01}}}};
    const ExperimentConfig sim = parse_config(user, "simulate");
    const bool sim_same = outputs(run(sim, root / "sim_a", false)) == outputs(run(sim, root / "sim_b", false));

    user["task"] = {{"noise_level", 0.01}};
    const ExperimentConfig inv = parse_config(user, "invert");
    const int threads = thread_count();
    set_thread_count(1);
    const auto serial = outputs(run(inv, root / "inv_1", false));
    set_thread_count(3);
    const auto threaded = outputs(run(inv, root / "inv_3", false));
    set_thread_count(threads);
    fs::remove_all(root);
    return {is("simulate_rerun_identical", sim_same), is("invert_thread_count_identical", serial == threaded)};
}

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {1, "geometry", 1.0, geometry_suite},
        {2, "discretization", 10.0, discretization_suite},
        {3, "forward", 60.0, forward_suite},
        {4, "carleman", 120.0, carleman_suite},
        {5, "observability", 300.0, observability_suite},
        {6, "inverse", 600.0, inverse_suite},
        {7, "nonlinear", 600.0, nonlinear_suite},
        {8, "determinism", 600.0, determinism_suite},
    };
    int failed = 0;
    for (const Criterion& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        std::vector<Item> items;
        std::string error;
        try {
            items = c.body();
        } catch (const std::exception& e) {
            error = e.what();
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        items.push_back(le("runtime_s", seconds, c.budget));
        bool pass = error.empty();
        std::string detail;
        for (const Item& it : items) {
            pass = pass && it.pass;
            char buf[160];
            std::snprintf(buf, sizeof buf, "%s%s=%.6g%s%.6g", detail.empty() ? "" : " ", it.name.c_str(), it.value,
                          it.relation.c_str(), it.limit);
            detail += buf;
            if (!it.pass) detail += "[FAIL]";
        }
        if (!error.empty()) detail += " error: " + error;
        std::printf("%s criterion %d (%s): %s\n", pass ? "PASS" : "FAIL", c.id, c.title.c_str(), detail.c_str());
        std::fflush(stdout);
        failed += pass ? 0 : 1;
    }
    return failed;
}
