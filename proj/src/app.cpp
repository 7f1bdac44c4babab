#include "sail/app.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <limits>
#include <map>
#include <numbers>

#include "sail/random.hpp"

namespace sail {

namespace {

Json check_json(const Check& c) {
    return {{"name", c.name}, {"value", c.value}, {"limit", c.limit}, {"relation", c.relation}, {"pass", c.pass}};
}

Json point_json(Point p) { return Json::array({p.x, p.y}); }

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string profile_label(const ProfileSpec& s) {
    if (s.family == "zero") return "0";
    if (s.family == "constant") return format_double(s.value);
    return format_double(s.value) + "+" + format_double(s.slope) + "*(t-T/2)";
}

// the map has interior unknowns only, so the source is zeroed on the boundary
// everywhere it drives a simulation
Vector interior_source(const ExperimentConfig& c, const DomainGeometry& g) {
    Vector f = build_field(c.f, c, g);
    for (std::size_t n = 0; n < g.node_count(); ++n)
        if (g.on_boundary(n)) f[static_cast<Eigen::Index>(n)] = 0.0;
    return f;
}

ForwardMapConfig map_config(const ExperimentConfig& c, const DomainGeometry& g) {
    return {g, build_field(c.potential, c, g), build_profile(c.R, g, c.T), profile_label(c.R), c.window()};
}

CsvTable field_table(const DomainGeometry& g, const std::vector<std::pair<std::string, const Vector*>>& columns) {
    CsvTable t;
    t.header = {"node", "x", "y"};
    for (const auto& [name, v] : columns) t.header.push_back(name);
    for (std::size_t n = 0; n < g.node_count(); ++n) {
        const Point p = g.point(n);
        std::vector<double> row{static_cast<double>(n), p.x, p.y};
        for (const auto& [name, v] : columns) row.push_back((*v)[static_cast<Eigen::Index>(n)]);
        t.rows.push_back(std::move(row));
    }
    return t;
}

Json assumptions_json(const AssumptionReport& a) {
    return {{"rho", a.rho},
            {"s", a.s},
            {"max_d", a.max_d},
            {"min_d", a.min_d},
            {"max_h_dot_nu_gamma1", a.max_h_dot_nu_gamma1},
            {"convexity_ok", a.convexity_ok},
            {"no_critical_point_ok", a.no_critical_point_ok},
            {"gamma1_orthogonality_ok", a.gamma1_orthogonality_ok},
            {"anchor_on_hyperplane", a.anchor_on_hyperplane},
            {"all_pass", a.all_pass()},
            {"T_min", min_observation_time(a)}};
}

Json params_json(const CarlemanParams& p) {
    return {{"x0", point_json(p.x0)}, {"T", p.T},         {"c", p.c},         {"delta", p.delta},
            {"sigma", p.sigma},       {"t0", p.t0},       {"t1", p.t1},       {"k", p.k},
            {"alpha", p.alpha},       {"max_d", p.max_d}, {"min_d", p.min_d}, {"tau_grid", p.tau_grid}};
}

// verify-geometry ----------------------------------------------------------

std::vector<Report> task_geometry(const ExperimentConfig& c) {
    const DomainGeometry g = c.geometry();
    const ConvexWeight weight = eval_weight(g, c.x0);
    const AssumptionReport a = verify_assumptions(g, weight);
    const AssumptionReport fine = verify_assumptions(g, weight, c.options.at("refine").get<int>());
    CarlemanParams p = select_time_params(weight, a, c.T);
    const SigmaWindow win = locate_sigma_window(g, weight, p, c.sigma, 2 * half_window_steps(c.T, c.dt));

    double max_phi0 = -std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n < g.node_count(); ++n) max_phi0 = std::max(max_phi0, phi(weight, g.point(n), 0.0, p));
    const double tmin = min_observation_time(a);

    Report r;
    r.name = "assumptions";
    r.body = {{"assumptions", assumptions_json(a)},
              {"refined", assumptions_json(fine)},
              {"params", params_json(p)},
              {"sigma_window", {{"sigma", win.sigma}, {"t0", win.t0}, {"t1", win.t1}}},
              {"max_phi_at_0", max_phi0}};
    r.checks = {check_true("convexity", a.convexity_ok),
                check_true("no_critical_point", a.no_critical_point_ok),
                check_le("gamma1_orthogonality", a.max_h_dot_nu_gamma1, a.tolerance),
                check_le("refined_T_min_agreement", std::abs(min_observation_time(fine) - tmin), 1e-12),
                check_ge("T_minus_T_min", c.T - tmin, 0.0),
                check_ge("delta", p.delta, 0.0),
                check_ge("cT2_minus_4maxd_4delta", c.T * c.T * p.c - 4.0 * a.max_d - 4.0 * p.delta, 0.0),
                check_le("c", p.c, 1.0),
                check_le("max_phi_at_0_plus_delta", max_phi0 + p.delta, 0.0),
                check_true("sigma_sandwich", sandwich_holds(g, win))};
    return {r};
}

// carleman-check -----------------------------------------------------------

std::vector<Report> task_carleman(const ExperimentConfig& c) {
    const Json& o = c.options;
    CarlemanOptions opts;
    opts.epsilon = o.at("epsilon").get<double>();
    opts.rho = o.at("rho").get<double>();
    opts.c1 = o.at("c1").get<double>();
    opts.c_t = o.at("c_t").get<double>();
    const CarlemanRun run = standard_carleman_scan(c.geometry(), c.x0, c.T, c.dt, c.sigma,
                                                   o.at("kappa").get<double>(),
                                                   o.at("tau_grid").get<std::vector<double>>(), opts);
    const CarlemanReport& rep = run.report;

    Report r;
    r.name = "carleman";
    r.body = {{"trajectory", "linear system, cubic bump source, R = 1 + (t - T/2), zero data, two-sided"},
              {"params", params_json(run.params)},
              {"tau_cap", rep.tau_cap},
              {"dropped_taus", rep.dropped_taus},
              {"degenerate", rep.degenerate},
              {"slope", rep.slope},
              {"r_squared", rep.r_squared},
              {"beta_hat", rep.beta_hat},
              {"epsilon", rep.epsilon},
              {"rho", rep.rho},
              {"c1", rep.c1},
              {"c_t", rep.c_t},
              {"cap_t", rep.cap_t},
              {"tau_star", rep.tau_star ? Json(*rep.tau_star) : Json()},
              {"endpoint_decreasing", rep.endpoint_decreasing}};
    CsvTable t;
    t.header = {"tau", "grad_term", "qsigma_term", "bt_1",  "bt_2",         "bt_3",
                "bt_4", "bt_5",     "rhs_f",       "rhs_lot", "rhs_endpoint", "margin"};
    for (const CarlemanRecord& x : rep.records) {
        t.rows.push_back({x.tau, x.grad, x.qsigma, x.bt[0], x.bt[1], x.bt[2], x.bt[3], x.bt[4], x.rhs_f, x.rhs_lot,
                          x.rhs_endpoint, x.margin});
    }
    r.tables.push_back({"tau", std::move(t)});
    r.checks = {check_true("tau_star_exists", rep.exists()), check_ge("fit_r_squared", rep.r_squared, 0.99),
                check_ge("growth_exponent_low", rep.slope, 2.5), check_le("growth_exponent_high", rep.slope, 3.5)};
    return {r};
}

// observability ------------------------------------------------------------

CsvTable observability_table(const std::vector<ObservabilityRatio>& v) {
    CsvTable t;
    t.header = {"sample", "initial", "observed", "ratio", "n_T"};
    for (std::size_t k = 0; k < v.size(); ++k)
        t.rows.push_back({static_cast<double>(k), v[k].initial, v[k].observed, v[k].ratio, v[k].n_T});
    return t;
}

std::vector<Report> task_observability(const ExperimentConfig& c) {
    const DomainGeometry g = c.geometry();
    const AssumptionReport a = verify_assumptions(g, eval_weight(g, c.x0));
    ObservabilityOptions opts;
    opts.dt = c.dt;
    opts.refine = c.options.at("refine").get<bool>();
    opts.growth_guard = c.growth_guard;
    const auto ensemble =
        random_observation_ensemble(c.seed, c.options.at("samples").get<std::size_t>(), c.lx, c.ly);
    const ObservabilityReport rep = observability_estimate(g, field_function(c.potential), a, c.T, ensemble, opts);

    Report r;
    r.name = "observability";
    r.body = {{"nx", rep.nx},
              {"ny", rep.ny},
              {"T", rep.T},
              {"T_min", min_observation_time(a)},
              {"samples", rep.samples.size()},
              {"c_hat", rep.c_hat},
              {"refined_c_hat", opts.refine ? Json(rep.refined_c_hat) : Json()},
              {"refinement_change", opts.refine ? Json(rep.refinement_change) : Json()}};
    r.tables.push_back({"samples", observability_table(rep.samples)});
    r.checks.push_back(check_true("finite", rep.finite()));
    if (opts.refine) {
        r.tables.push_back({"refined_samples", observability_table(rep.refined_samples)});
        r.checks.push_back(check_le("refinement_change", rep.refinement_change, 0.5));
    }
    return {r};
}

// simulate -----------------------------------------------------------------

std::vector<Report> task_simulate(const ExperimentConfig& c) {
    const DomainGeometry g = c.geometry();
    const ForwardMapConfig mc = map_config(c, g);
    const OperatorBundle ops(g, mc.q, c.kappa);
    SourceSpec src;
    src.f = interior_source(c, g);
    src.R = mc.R;
    RunOptions ro;
    ro.T = c.T;
    ro.dt = c.dt;
    ro.mode = c.mode;
    ro.growth_guard = c.growth_guard;
    const Trajectory tr = simulate_coupled(ops, &src, CoupledState::zeros(g), ro);
    const EnergySeries en = energy(tr, ops);
    const BoundsReport bounds = check_source_bounds(src, 0.5 * c.T);

    TraceSeries traces = simulate_traces(mc, src.f);
    const double level = c.options.at("noise_level").get<double>();
    double sigma = 0.0;
    if (level > 0.0) traces = add_trace_noise(traces, ops.biharmonic(), level, c.seed, &sigma);

    // snapshots at the sensor stride, counted from the T/2 start
    bool finite = true;
    std::vector<std::size_t> kept;
    std::vector<double> kept_times;
    for (std::size_t k = 0; k < tr.size(); ++k) {
        finite = finite && tr.states[k].finite();
        const std::size_t off = k > tr.center_index ? k - tr.center_index : tr.center_index - k;
        if (off % c.stride == 0) {
            kept.push_back(k);
            kept_times.push_back(tr.times[k]);
        }
    }
    Matrix snaps(static_cast<Eigen::Index>(kept.size()), tr.states.front().size());
    for (std::size_t r = 0; r < kept.size(); ++r)
        snaps.row(static_cast<Eigen::Index>(r)) = tr.states[kept[r]].pack().transpose();

    Report r;
    r.name = "simulate";
    r.body = {{"steps", half_window_steps(c.T, c.dt)},
              {"snapshots", kept.size()},
              {"snapshot_dt", tr.snapshot_dt() * static_cast<double>(c.stride)},
              {"mode", to_string(tr.mode)},
              {"kappa", tr.kappa},
              {"scheme", tr.scheme},
              {"q_hash", sha256_vector(mc.q)},
              {"f_hash", sha256_vector(src.f)},
              {"R", mc.r_label},
              {"min_abs_R", bounds.min_abs_R},
              {"min_abs_Rt", bounds.min_abs_Rt},
              {"trace_samples", traces.times.size()},
              {"noise_level", level},
              {"noise_sigma", sigma},
              {"provenance", traces.provenance}};
    CsvTable et;
    et.header = {"t", "wave", "plate", "conserved"};
    for (std::size_t k = 0; k < en.times.size(); ++k)
        et.rows.push_back({en.times[k], en.wave[k], en.plate[k], en.conserved[k]});
    r.tables.push_back({"energy", std::move(et)});
    r.tables.push_back({"traces", traces_table(traces)});
    Json header = {{"dt", tr.dt},
                   {"stride", c.stride},
                   {"mode", to_string(tr.mode)},
                   {"kappa", tr.kappa},
                   {"q_hash", sha256_vector(mc.q)},
                   {"times", kept_times},
                   {"nodes", g.node_count()},
                   {"beam", g.beam_interior_count()},
                   {"layout", "rows are snapshots packed as z, z_t, v, v_t"}};
    r.fields.push_back({"trajectory", std::move(header), std::move(snaps)});
    r.checks = {check_true("finite", finite)};
    return {r};
}

// invert -------------------------------------------------------------------

std::vector<Report> task_invert(const ExperimentConfig& c) {
    const Json& o = c.options;
    const DomainGeometry g = c.geometry();
    const ForwardMapConfig mc = map_config(c, g);
    const std::string cache = o.at("cache_dir").get<std::string>();
    const ForwardMap map = assemble_forward_map(mc, cache.empty() ? std::filesystem::path() : c.resolve(cache));
    const InjectivityReport inj = injectivity_diagnostics(map, o.at("rank_threshold").get<double>());
    const MapSolver solver(map);

    // the assembled matrix against an independent simulation
    SplitMix64 rng(c.seed ^ 0x7472616e73706f73ULL);
    Vector fr(map.matrix.cols()), br(map.matrix.rows());
    for (auto& x : fr) x = rng.normal();
    for (auto& x : br) x = rng.normal();
    const Vector mf = simulate_observation(mc, map.embed(fr));
    const double transpose = std::abs(mf.dot(br) - fr.dot(map.adjoint(br))) / (mf.norm() * br.norm());

    std::optional<Vector> truth;
    TraceSeries traces;
    double sigma = o.at("noise_sigma").get<double>();
    const std::string obs = o.at("observation").get<std::string>();
    const ClampedBiharmonic bih = biharmonic_clamped(g);
    if (obs.empty()) {
        truth = interior_source(c, g);
        traces = simulate_traces(mc, *truth);
        const double level = o.at("noise_level").get<double>();
        double s = 0.0;
        if (level > 0.0) traces = add_trace_noise(traces, bih, level, c.seed, &s);
        if (sigma == 0.0) sigma = s;
    } else {
        traces = traces_from_table(read_csv(c.resolve(obs)), bih);
        bool match = traces.times.size() == map.times.size() && traces.u.cols() == map.beam;
        for (std::size_t k = 0; match && k < map.times.size(); ++k)
            match = std::abs(traces.times[k] - map.times[k]) <= 1e-9 * (1.0 + std::abs(map.times[k]));
        if (!match) {
            throw validation_error("observation-mismatch",
                                   obs + ": expected " + std::to_string(map.times.size()) + " samples of " +
                                       std::to_string(map.beam) + " beam nodes on the configured window");
        }
    }
    const Vector b = stack_observation(traces);

    ReconstructOptions ro;
    ro.method = inversion_method_from_string(o.at("method").get<std::string>());
    ro.alpha = o.at("alpha").get<double>();
    if (sigma > 0.0) ro.noise_sigma = sigma;
    ro.discrepancy_factor = o.at("discrepancy_factor").get<double>();
    ro.max_iterations = o.at("max_iterations").get<int>();
    ro.sweep = o.at("sweep").get<bool>();
    ro.truth = truth;
    const InversionResult res = reconstruct_f(solver, b, ro);

    Report r;
    r.name = "invert";
    r.body = {{"config_hash", map.config_hash},
              {"q_hash", map.q_hash},
              {"R", map.r_label},
              {"rows", map.matrix.rows()},
              {"unknowns", map.matrix.cols()},
              {"from_cache", map.from_cache},
              {"observation", obs.empty() ? "simulated (inverse crime)" : obs},
              {"rank", inj.rank},
              {"rank_threshold", inj.threshold},
              {"sigma_max", inj.singular_values.size() ? inj.singular_values[0] : 0.0},
              {"sigma_min", inj.smallest},
              {"transpose_error", transpose},
              {"method", to_string(res.method)},
              {"alpha", std::isfinite(res.alpha) ? Json(res.alpha) : Json("inf")},
              {"discrepancy", res.discrepancy},
              {"noise_sigma", sigma},
              {"residual", res.residual},
              {"projected_residual", res.projected_residual},
              {"noise_level", res.noise_level},
              {"iterations", res.iterations},
              {"rel_error", res.rel_error ? Json(*res.rel_error) : Json()}};
    if (!res.sweep.empty()) {
        CsvTable t;
        t.header = {"alpha", "residual", "rel_error"};
        for (const SweepRow& s : res.sweep) t.rows.push_back({s.alpha, s.residual, s.rel_error});
        r.tables.push_back({"sweep", std::move(t)});
    }
    CsvTable sv;
    sv.header = {"index", "sigma"};
    for (Eigen::Index k = 0; k < inj.singular_values.size(); ++k)
        sv.rows.push_back({static_cast<double>(k), inj.singular_values[k]});
    r.tables.push_back({"singular_values", std::move(sv)});
    if (truth) {
        r.tables.push_back({"field", field_table(g, {{"f_est", &res.f}, {"f_true", &*truth}})});
    } else {
        r.tables.push_back({"field", field_table(g, {{"f_est", &res.f}})});
    }
    r.checks = {check_le("transpose_test", transpose, 1e-12),
                check_true("full_rank", inj.full_rank()),
                check_true("finite", res.f.allFinite())};
    return {r};
}

// stability-probe ----------------------------------------------------------

CsvTable ratio_table(const std::vector<StabilityRatio>& v) {
    CsvTable t;
    t.header = {"sample", "f_norm", "utt", "uttt", "bilap_utt", "ratio"};
    for (std::size_t k = 0; k < v.size(); ++k)
        t.rows.push_back({static_cast<double>(k), v[k].f_norm, v[k].utt, v[k].uttt, v[k].bilap_utt, v[k].ratio});
    return t;
}

std::vector<Report> task_stability(const ExperimentConfig& c) {
    const Json& o = c.options;
    const DomainGeometry g = c.geometry();
    const ConfigFactory setup = [&c](const DomainGeometry& gg) { return map_config(c, gg); };
    const ForwardMapConfig mc = setup(g);
    const auto ensemble = stability_ensemble(c.seed, o.at("smooth").get<std::size_t>(),
                                             o.at("bumps").get<std::size_t>(), c.lx, c.ly);

    std::optional<InjectivityReport> inj;
    if (o.at("injectivity").get<bool>()) inj = injectivity_diagnostics(assemble_forward_map(mc));
    const bool refine = o.at("refine").get<bool>();
    const StabilityProbeReport rep = stability_probe(setup, g, ensemble, refine, inj ? &*inj : nullptr);

    const Vector f = interior_source(c, g);
    const StabilityRatio r1 = stability_ratio(mc, f);
    const StabilityRatio r8 = stability_ratio(mc, 8.0 * f);

    std::vector<Report> out;
    Report r;
    r.name = "stability";
    r.body = {{"nx", rep.nx},
              {"ny", rep.ny},
              {"samples", rep.samples.size()},
              {"c_stab", rep.c_stab},
              {"refined_c_stab", refine ? Json(rep.refined_c_stab) : Json()},
              {"refinement_change", refine ? Json(rep.refinement_change) : Json()},
              {"smallest_singular_value", rep.smallest_singular_value ? Json(*rep.smallest_singular_value) : Json()},
              {"rank", rep.rank ? Json(*rep.rank) : Json()},
              {"scale_ratio_f", r1.ratio},
              {"scale_ratio_8f", r8.ratio}};
    r.tables.push_back({"samples", ratio_table(rep.samples)});
    r.checks = {check_true("finite", rep.finite()), check_le("scale_invariance", std::abs(r8.ratio - r1.ratio), 0.0)};
    if (refine) {
        r.tables.push_back({"refined_samples", ratio_table(rep.refined_samples)});
        r.checks.push_back(check_le("refinement_change", rep.refinement_change, 0.5));
    }
    out.push_back(std::move(r));

    if (o.at("psi_y").get<bool>()) {
        PsiYOptions po;
        po.basis_nodes = o.at("basis_nodes").get<int>();
        const PsiYReport py = psi_y_split(mc, f, po);
        Report s;
        s.name = "psi_y";
        s.body = {{"additivity_error", py.additivity_error},
                  {"wbar_norm", py.wbar_norm},
                  {"basis_size", py.basis_size},
                  {"k_decay", py.k_decay},
                  {"k1_decay", py.k1_decay}};
        CsvTable t;
        t.header = {"index", "k", "k1"};
        for (Eigen::Index k = 0; k < py.k_singular_values.size(); ++k) {
            t.rows.push_back({static_cast<double>(k), py.k_singular_values[k],
                              k < py.k1_singular_values.size() ? py.k1_singular_values[k] : 0.0});
        }
        s.tables.push_back({"singular_values", std::move(t)});
        s.checks = {check_le("additivity", py.additivity_error, 0.05), check_le("k_decay", py.k_decay, 0.1)};
        out.push_back(std::move(s));
    }
    return out;
}

// recover-q ----------------------------------------------------------------

CsvTable history_table(const std::vector<RecoverHistoryRow>& h) {
    CsvTable t;
    t.header = {"iteration", "residual", "update_norm", "rel_error"};
    for (const auto& x : h) t.rows.push_back({static_cast<double>(x.iteration), x.residual, x.update_norm, x.rel_error});
    return t;
}

TaskOutcome task_recover(const ExperimentConfig& c) {
    const Json& o = c.options;
    const DomainGeometry g = c.geometry();
    NonlinearSetup setup = reference_nonlinear_setup(g, c.T);
    setup.window = c.window();
    setup.s0 = o.at("s0").get<double>();
    setup.s1 = o.at("s1").get<double>();
    const Vector truth = build_field(c.potential, c, g);
    const Vector p0 = build_field(field_spec_from(o.at("p0")), c, g);
    RecoverOptions ro;
    ro.max_iterations = o.at("iterations").get<int>();
    ro.alpha = o.at("alpha").get<double>();
    ro.tolerance = o.at("tolerance").get<double>();
    const std::string cache = o.at("cache_dir").get<std::string>();
    if (!cache.empty()) ro.cache_dir = c.resolve(cache);

    Report r;
    r.name = "recover_q";
    r.body = {{"initial_data", "z0 = 1 + 0.3 cos(pi x) cos(pi y), z1 = 1, beam at rest"},
              {"s0", setup.s0},
              {"s1", setup.s1},
              {"alpha", ro.alpha},
              {"q_hash", sha256_vector(truth)},
              {"p0_hash", sha256_vector(p0)}};
    TaskOutcome out;
    try {
        const Vector obs = nonlinear_observation(setup, truth);
        const RecoverResult res = recover_q(setup, obs, p0, ro, &truth);
        const auto& h = res.history;
        r.body["converged"] = res.converged;
        r.body["data_warning"] = res.data_warning;
        r.body["iterations"] = h.size();
        r.body["rel_error"] = h.empty() ? Json() : Json(h.back().rel_error);
        r.tables.push_back({"history", history_table(h)});
        r.tables.push_back({"field", field_table(g, {{"q_est", &res.q}, {"q_true", &truth}})});
        bool finite = res.q.allFinite();
        for (const auto& x : h) finite = finite && std::isfinite(x.residual);
        r.checks = {check_true("finite", finite)};
        if (!h.empty()) r.checks.push_back(check_le("residual_not_increased", h.back().residual, h.front().residual));
    } catch (const DivergenceError& e) {
        r.body["diverged"] = true;
        r.body["message"] = e.what();
        r.tables.push_back({"history", history_table(e.history())});
        r.checks = {check_true("no_divergence", false)};
        out.failure = e;
    }
    out.reports.push_back(std::move(r));
    return out;
}

// domain-check -------------------------------------------------------------

std::vector<Report> task_domain(const ExperimentConfig& c) {
    const Json& o = c.options;
    const DomainGeometry g = c.geometry();
    const OperatorBundle ops(g, build_field(c.potential, c, g), c.kappa);
    const std::string state = o.at("state").get<std::string>();
    const double time = o.at("time").get<double>();
    CoupledState y;
    double at = 0.5 * c.T;
    if (state == "compatible") {
        // clamped beam velocity, antisymmetric about the midpoint so the
        // Neumann problem is solvable; z is its harmonic extension, v = -v_t
        const double L = g.beam_length();
        y = CoupledState::zeros(g);
        y.vt = FieldBeam::sample(g, [L](double s) {
                   return std::pow(std::sin(std::numbers::pi * s / L), 2) * std::sin(2.0 * std::numbers::pi * s / L);
               }).values;
        y.z = NeumannMap(g).solve(beam_to_polyline(y.vt)).z;
        y.v = -y.vt;
    } else if (state == "initial") {
        y = reference_nonlinear_setup(g, c.T).initial;
    } else {
        SourceSpec src;
        src.f = interior_source(c, g);
        src.R = build_profile(c.R, g, c.T);
        RunOptions ro;
        ro.T = c.T;
        ro.dt = c.dt;
        ro.mode = c.mode;
        ro.growth_guard = c.growth_guard;
        const Trajectory tr = simulate_coupled(ops, &src, CoupledState::zeros(g), ro);
        const long k = static_cast<long>(tr.center_index) + std::lround(time / tr.snapshot_dt());
        if (k < 0 || k >= static_cast<long>(tr.size())) {
            throw validation_error("invalid-config", "task.time: outside the " + to_string(c.mode) + " window");
        }
        y = tr.states[static_cast<std::size_t>(k)];
        at = tr.times[static_cast<std::size_t>(k)];
    }
    const MembershipReport m = check_domain_membership(ops, y, o.at("order").get<int>(), o.at("tolerance").get<double>());

    Report r;
    r.name = "domain";
    r.body = {{"state", state}, {"t", at}, {"order", m.order}, {"tolerance", m.tolerance}, {"state_norm", m.state_norm}};
    CsvTable t;
    t.header = {"index", "value", "pass"};
    Json names = Json::array();
    for (std::size_t k = 0; k < m.residuals.size(); ++k) {
        const Residual& x = m.residuals[k];
        names.push_back(x.name);
        t.rows.push_back({static_cast<double>(k), x.value, x.pass ? 1.0 : 0.0});
        r.checks.push_back(check_le(x.name, x.value, m.tolerance));
    }
    r.body["residual_names"] = names;
    r.tables.push_back({"residuals", std::move(t)});
    return {r};
}

}  // namespace

Check check_le(std::string name, double value, double limit) {
    return {std::move(name), value, limit, "<=", value <= limit};
}

Check check_ge(std::string name, double value, double limit) {
    return {std::move(name), value, limit, ">=", value >= limit};
}

Check check_true(std::string name, bool ok) { return {std::move(name), ok ? 1.0 : 0.0, 1.0, "==", ok}; }

bool Report::pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

void prepare_output(const std::filesystem::path& dir, bool force) {
    std::error_code ec;
    if (std::filesystem::exists(dir, ec) && !std::filesystem::is_empty(dir, ec)) {
        if (!force) throw io_error("output-exists", dir.string() + " is not empty; pass --force to overwrite");
        std::filesystem::remove_all(dir, ec);
        if (ec) throw io_error("output-exists", "cannot clear " + dir.string() + ": " + ec.message());
    }
    std::filesystem::create_directories(dir, ec);
    if (ec) throw io_error("mkdir-failed", "cannot create " + dir.string() + ": " + ec.message());
}

std::vector<FileEntry> emit_reports(const std::vector<Report>& reports, const std::filesystem::path& dir) {
    std::vector<FileEntry> files;
    auto record = [&](const std::string& rel) { files.push_back({rel, sha256_file(dir / rel)}); };
    Json entries = Json::array();
    bool all = true;
    for (const Report& r : reports) {
        Json checks = Json::array();
        for (const Check& c : r.checks) checks.push_back(check_json(c));
        Json doc = {{"name", r.name}, {"pass", r.pass()}, {"checks", checks}, {"report", r.body}};
        for (const NamedTable& t : r.tables) {
            const std::string rel = r.name + "_" + t.name + ".csv";
            write_csv(dir / rel, t.table.header, t.table.rows);
            record(rel);
        }
        for (const NamedField& f : r.fields) {
            const std::string rel = r.name + "_" + f.name + ".saif";
            write_matrix_saif(dir / rel, f.header, f.data);
            record(rel);
        }
        write_text(dir / (r.name + ".json"), doc.dump(2) + "\n");
        record(r.name + ".json");
        entries.push_back({{"name", r.name}, {"pass", r.pass()}, {"checks", checks}});
        all = all && r.pass();
    }
    const Json summary = {{"count", reports.size()}, {"pass", all}, {"entries", entries}};
    write_text(dir / "summary.json", summary.dump(2) + "\n");
    record("summary.json");
    return files;
}

Json RunManifest::to_json() const {
    auto list = [](const std::vector<FileEntry>& v) {
        Json a = Json::array();
        for (const auto& f : v) a.push_back({{"path", f.path}, {"sha256", f.sha256}});
        return a;
    };
    return {{"config_hash", config_hash}, {"version", version},       {"started", started}, {"finished", finished},
            {"pass", pass},               {"inputs", list(inputs)}, {"outputs", list(outputs)}};
}

TaskOutcome run_task(const ExperimentConfig& c) {
    const std::string& t = c.task;
    if (t == "recover-q") return task_recover(c);
    TaskOutcome out;
    if (t == "verify-geometry") out.reports = task_geometry(c);
    else if (t == "carleman-check") out.reports = task_carleman(c);
    else if (t == "observability") out.reports = task_observability(c);
    else if (t == "simulate") out.reports = task_simulate(c);
    else if (t == "invert") out.reports = task_invert(c);
    else if (t == "stability-probe") out.reports = task_stability(c);
    else if (t == "domain-check") out.reports = task_domain(c);
    else throw validation_error("unknown-task", "unknown subcommand " + t);
    return out;
}

RunManifest run(const ExperimentConfig& c, const std::filesystem::path& out, bool force,
                const std::vector<std::filesystem::path>& inputs) {
    prepare_output(out, force);
    RunManifest m;
    m.config_hash = c.hash();
    m.started = utc_now();

    std::vector<std::filesystem::path> in = inputs;
    for (const FieldSpec* s : {&c.potential, &c.f})
        if (s->family == "file") in.push_back(c.resolve(s->path));
    if (c.task == "invert" && !c.options.at("observation").get<std::string>().empty())
        in.push_back(c.resolve(c.options.at("observation").get<std::string>()));
    for (const auto& p : in) m.inputs.push_back({p.string(), sha256_file(p)});

    TaskOutcome outcome = run_task(c);

    write_text(out / "config.json", c.echo.dump(2) + "\n");
    m.outputs.push_back({"config.json", sha256_file(out / "config.json")});
    for (auto& f : emit_reports(outcome.reports, out)) m.outputs.push_back(std::move(f));
    m.pass = !outcome.failure && std::all_of(outcome.reports.begin(), outcome.reports.end(),
                                             [](const Report& r) { return r.pass(); });
    m.finished = utc_now();
    write_text(out / "manifest.json", m.to_json().dump(2) + "\n");
    if (outcome.failure) throw *outcome.failure;
    return m;
}

CsvTable traces_table(const TraceSeries& s) {
    CsvTable t;
    t.header = {"t", "node", "u", "ut", "utt", "uttt", "bilap_utt"};
    for (Eigen::Index r = 0; r < s.u.rows(); ++r)
        for (Eigen::Index j = 0; j < s.u.cols(); ++j)
            t.rows.push_back({s.times[static_cast<std::size_t>(r)], static_cast<double>(j), s.u(r, j), s.ut(r, j),
                              s.utt(r, j), s.uttt(r, j), s.bilap_utt(r, j)});
    return t;
}

TraceSeries traces_from_table(const CsvTable& t, const ClampedBiharmonic& biharmonic) {
    if (t.header.size() < 3 || t.header[0] != "t" || t.header[1] != "node" || t.header[2] != "u")
        throw validation_error("bad-trace-file", "expected header t,node,u,...");
    std::map<double, std::map<long, double>> samples;
    long beam = 0;
    for (const auto& row : t.rows) {
        const long j = std::lround(row[1]);
        if (j < 0 || static_cast<double>(j) != row[1]) throw validation_error("bad-trace-file", "bad node index");
        samples[row[0]][j] = row[2];
        beam = std::max(beam, j + 1);
    }
    std::vector<double> times;
    Matrix u(static_cast<Eigen::Index>(samples.size()), beam);
    Eigen::Index r = 0;
    for (const auto& [time, row] : samples) {
        if (static_cast<long>(row.size()) != beam)
            throw validation_error("bad-trace-file", "sample at t = " + format_double(time) + " misses beam nodes");
        times.push_back(time);
        for (const auto& [j, v] : row) u(r, j) = v;
        ++r;
    }
    TraceSeries s = traces_from_displacement(times, u, biharmonic);
    s.provenance = "file";
    return s;
}

}  // namespace sail
