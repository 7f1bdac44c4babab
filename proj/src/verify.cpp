#include "sail/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "sail/parallel.hpp"
#include "sail/random.hpp"

namespace sail {

namespace {

using Index = Eigen::Index;

Index ix(std::size_t n) { return static_cast<Index>(n); }

std::vector<double> trapezoid_time_weights(const std::vector<double>& t) {
    std::vector<double> w(t.size(), 0.0);
    for (std::size_t k = 0; k + 1 < t.size(); ++k) {
        const double h = 0.5 * (t[k + 1] - t[k]);
        w[k] += h;
        w[k + 1] += h;
    }
    return w;
}

// Σ_edges c_e · avg(e) · (w_a - w_b)², with c_e the tangential trapezoid
// weight over the edge length. With e ≡ 1 this is the Dirichlet energy of
// the Neumann stiffness matrix.
double weighted_dirichlet(const DomainGeometry& g, const Vector& w, const Vector* e) {
    const int nx = g.nx(), ny = g.ny();
    const double hx = g.hx(), hy = g.hy();
    auto at = [&](int i, int j) { return ix(g.node(i, j)); };
    auto ew = [&](Index a, Index b) { return e == nullptr ? 1.0 : 0.5 * ((*e)[a] + (*e)[b]); };
    double sum = 0.0;
    for (int j = 0; j < ny; ++j) {
        const double c = (j == 0 || j == ny - 1 ? 0.5 * hy : hy) / hx;
        for (int i = 0; i + 1 < nx; ++i) {
            const Index a = at(i, j), b = at(i + 1, j);
            const double d = w[a] - w[b];
            sum += c * ew(a, b) * d * d;
        }
    }
    for (int i = 0; i < nx; ++i) {
        const double c = (i == 0 || i == nx - 1 ? 0.5 * hx : hx) / hy;
        for (int j = 0; j + 1 < ny; ++j) {
            const Index a = at(i, j), b = at(i, j + 1);
            const double d = w[a] - w[b];
            sum += c * ew(a, b) * d * d;
        }
    }
    return sum;
}

// derivative along one grid line, second order everywhere
double line_derivative(const Vector& w, const DomainGeometry& g, int i, int j, bool along_x) {
    const int n = along_x ? g.nx() : g.ny();
    const int p = along_x ? i : j;
    const double h = along_x ? g.hx() : g.hy();
    auto val = [&](int q) { return w[ix(along_x ? g.node(q, j) : g.node(i, q))]; };
    if (p == 0) return (-3.0 * val(0) + 4.0 * val(1) - val(2)) / (2.0 * h);
    if (p == n - 1) return (3.0 * val(n - 1) - 4.0 * val(n - 2) + val(n - 3)) / (2.0 * h);
    return (val(p + 1) - val(p - 1)) / (2.0 * h);
}

double energy_at(const DomainGeometry& g, const Vector& weights, const Vector& w, const Vector& wt) {
    return w.cwiseProduct(w).dot(weights) + wt.cwiseProduct(wt).dot(weights) + weighted_dirichlet(g, w, nullptr);
}

}  // namespace

WaveField wave_field(const Trajectory& wave, const DomainGeometry& geometry, const FluxSeries& flux,
                     const SourceSpec* source) {
    if (wave.stride != 1) throw validation_error("stride-too-coarse", "space-time quadrature needs every step");
    WaveField f;
    f.times = wave.times;
    const Index n = ix(geometry.node_count()), p = ix(geometry.beam_nodes());
    for (std::size_t k = 0; k < wave.size(); ++k) {
        const double t = wave.times[k];
        f.w.push_back(wave.states[k].z);
        f.wt.push_back(wave.states[k].zt);
        f.F.push_back(source != nullptr ? source->forcing(t) : Vector::Zero(n));
        f.flux.push_back(flux ? flux(t) : Vector::Zero(p));
    }
    return f;
}

WaveField linear_system_field(const Trajectory& coupled, const OperatorBundle& ops, const SourceSpec& source) {
    if (coupled.stride != 1) throw validation_error("stride-too-coarse", "space-time quadrature needs every step");
    WaveField f;
    f.times = coupled.times;
    for (std::size_t k = 0; k < coupled.size(); ++k) {
        const double t = coupled.times[k];
        const CoupledState a = ops.apply(coupled.states[k]);
        f.w.push_back(coupled.states[k].zt);
        f.wt.push_back(a.zt + source.forcing(t));
        f.F.push_back(source.f.cwiseProduct(source.R->eval(t, 1)));
        f.flux.push_back(beam_to_polyline(a.vt));
    }
    return f;
}

double tau_overflow_cap(const DomainGeometry& geometry, const ConvexWeight& weight, const CarlemanParams& params) {
    double max_phi = 0.0;
    for (std::size_t k = 0; k < geometry.node_count(); ++k)
        max_phi = std::max(max_phi, phi(weight, geometry.point(k), 0.5 * params.T, params));
    return max_phi > 0.0 ? 700.0 / (2.0 * max_phi) : std::numeric_limits<double>::infinity();
}

CarlemanRecord carleman_sides(const DomainGeometry& geometry, const ConvexWeight& weight,
                              const CarlemanParams& params, const WaveField& field, const RegionMask& mask,
                              double tau) {
    if (!(tau >= 0.0)) throw validation_error("negative-tau", "tau must be non-negative");
    const std::size_t nt = field.size();
    const Index n = ix(geometry.node_count());
    if (nt < 2 || mask.steps + 1 != nt || mask.nodes != geometry.node_count()) {
        throw validation_error("grid-mismatch", "region mask and wave field disagree on the space-time grid");
    }
    if (std::abs(field.times.back() - field.times.front() - params.T) > 1e-9 * params.T) {
        throw validation_error("grid-mismatch", "wave field does not span [0, T]");
    }

    const Vector& nw = geometry.node_weights();
    const std::vector<double> tw = trapezoid_time_weights(field.times);
    const double c = params.c;
    const double alpha = params.alpha;
    const double lap_d = params.laplacian_d;

    CarlemanRecord r;
    r.tau = tau;
    double lot = 0.0;
    Vector e(n);
    for (std::size_t k = 0; k < nt; ++k) {
        const double t = field.times[k] - field.times.front();
        const double s = t - 0.5 * params.T;
        for (Index a = 0; a < n; ++a)
            e[a] = std::exp(2.0 * tau * phi(weight, geometry.point(static_cast<std::size_t>(a)), t, params));
        const Vector& w = field.w[k];
        const Vector& wt = field.wt[k];
        const Vector& F = field.F[k];

        r.grad += tw[k] * (wt.cwiseProduct(wt).cwiseProduct(e).dot(nw) + weighted_dirichlet(geometry, w, &e));
        double qs = 0.0;
        for (Index a = 0; a < n; ++a)
            if (mask.at(k, static_cast<std::size_t>(a))) qs += nw[a] * e[a] * w[a] * w[a];
        r.qsigma += tw[k] * qs;
        r.rhs_f += tw[k] * 2.0 * F.cwiseProduct(F).cwiseProduct(e).dot(nw);
        lot += tw[k] * w.cwiseProduct(w).dot(nw);

        const Vector& flux = field.flux[k];
        std::array<double, 5> b{};
        for (const BoundaryFacet& fct : geometry.facets()) {
            if (fct.part != BoundaryPart::gamma0) continue;
            const Point p = geometry.point(fct.node);
            const Point h = weight.h(p);
            const double dn = flux[geometry.gamma0_index(fct.node)];
            double gx, gy;
            if (fct.normal_x != 0.0) {
                gx = fct.normal_x * dn;
                gy = line_derivative(w, geometry, fct.i, fct.j, false);
            } else {
                gx = line_derivative(w, geometry, fct.i, fct.j, true);
                gy = fct.normal_y * dn;
            }
            const Index a = ix(fct.node);
            const double hn = h.x * fct.normal_x + h.y * fct.normal_y;
            const double h2 = h.x * h.x + h.y * h.y;
            const double core = h2 - 4.0 * c * c * s * s;
            const double we = fct.weight * e[a];
            b[0] += we * 2.0 * tau * (wt[a] * wt[a] - gx * gx - gy * gy) * hn;
            b[1] += we * 8.0 * c * tau * s * wt[a] * dn;
            b[2] += we * 4.0 * tau * (h.x * gx + h.y * gy) * dn;
            b[3] += we * (4.0 * tau * tau * core + 2.0 * tau * alpha) * w[a] * dn;
            b[4] += we * 2.0 * tau * (2.0 * tau * tau * core + tau * (alpha - lap_d - 2.0 * c)) * w[a] * w[a] * hn;
        }
        for (int m = 0; m < 5; ++m) r.bt[static_cast<std::size_t>(m)] += tw[k] * b[static_cast<std::size_t>(m)];
    }
    r.rhs_lot = std::exp(2.0 * tau * params.sigma) * lot;
    const double e0 = energy_at(geometry, nw, field.w.front(), field.wt.front());
    const double e1 = energy_at(geometry, nw, field.w.back(), field.wt.back());
    r.rhs_endpoint = tau * tau * tau * std::exp(-2.0 * tau * params.delta) * (e0 + e1);
    return r;
}

double admissible_qsigma_coefficient(const CarlemanRecord& r, const CarlemanOptions& o) {
    if (!(r.qsigma > 0.0)) return 0.0;
    const double budget = r.bt_total() + r.rhs_f + o.c1 * r.rhs_lot + o.c_t * r.rhs_endpoint -
                          r.tau * o.epsilon * o.rho * r.grad + 2.0 * o.cap_t * (r.grad + r.qsigma);
    return budget / r.qsigma;
}

CarlemanReport carleman_scan(const DomainGeometry& geometry, const ConvexWeight& weight,
                             const CarlemanParams& params, const WaveField& field, const RegionMask& mask,
                             const CarlemanOptions& options) {
    CarlemanReport rep;
    rep.tau_cap = tau_overflow_cap(geometry, weight, params);
    rep.epsilon = options.epsilon;
    rep.rho = options.rho;
    rep.c1 = options.c1;
    rep.c_t = options.c_t;
    rep.cap_t = options.cap_t;

    std::vector<double> taus;
    for (double t : params.tau_grid) {
        if (t > rep.tau_cap) rep.dropped_taus.push_back(t);
        else taus.push_back(t);
    }
    std::sort(taus.begin(), taus.end());
    if (taus.size() < 5) {
        throw validation_error("fit-window-empty", "need at least 5 tau values below the overflow cap " +
                                                       std::to_string(rep.tau_cap));
    }
    rep.records.resize(taus.size());
    parallel_for(taus.size(), [&](std::size_t k) {
        rep.records[k] = carleman_sides(geometry, weight, params, field, mask, taus[k]);
    });

    rep.degenerate = std::all_of(rep.records.begin(), rep.records.end(), [](const CarlemanRecord& r) {
        return r.qsigma == 0.0 && r.grad == 0.0 && r.rhs_f == 0.0;
    });

    if (!rep.degenerate) {
        std::vector<double> lx, ly;
        for (const CarlemanRecord& r : rep.records) {
            const double a = admissible_qsigma_coefficient(r, options);
            if (r.tau >= options.fit_min_tau && a > 0.0) {
                lx.push_back(std::log(r.tau));
                ly.push_back(std::log(a));
            }
        }
        if (lx.size() < 3) {
            throw validation_error("fit-window-empty", "fewer than 3 tau values with a positive Q(sigma) budget");
        }
        const double m = static_cast<double>(lx.size());
        double mx = 0.0, my = 0.0;
        for (std::size_t k = 0; k < lx.size(); ++k) {
            mx += lx[k] / m;
            my += ly[k] / m;
        }
        double sxx = 0.0, sxy = 0.0, syy = 0.0, amp = 0.0;
        for (std::size_t k = 0; k < lx.size(); ++k) {
            sxx += (lx[k] - mx) * (lx[k] - mx);
            sxy += (lx[k] - mx) * (ly[k] - my);
            syy += (ly[k] - my) * (ly[k] - my);
            amp += (ly[k] - 3.0 * lx[k]) / m;
        }
        rep.slope = sxy / sxx;
        rep.r_squared = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
        // least-squares amplitude of a(τ) ≈ 2β τ³ in log space
        rep.beta_hat = 0.5 * std::exp(amp);
    }

    for (CarlemanRecord& r : rep.records) {
        const double a = admissible_qsigma_coefficient(r, options);
        r.margin = rep.degenerate ? 0.0 : (a - 2.0 * rep.beta_hat * std::pow(r.tau, 3)) * r.qsigma;
        if (r.qsigma == 0.0 && !rep.degenerate) {
            r.margin = r.bt_total() + r.rhs_f + options.c1 * r.rhs_lot + options.c_t * r.rhs_endpoint -
                       (r.tau * options.epsilon * options.rho - 2.0 * options.cap_t) * r.grad;
        }
        if (!rep.tau_star && r.margin >= 0.0) rep.tau_star = r.tau;
    }

    const double knee = 1.5 / params.delta;
    for (std::size_t k = 1; k < rep.records.size(); ++k) {
        const CarlemanRecord &a = rep.records[k - 1], &b = rep.records[k];
        if (a.tau > knee && b.rhs_endpoint > a.rhs_endpoint) rep.endpoint_decreasing = false;
    }
    return rep;
}

std::vector<ObservationSample> random_observation_ensemble(std::uint64_t seed, std::size_t count, double lx,
                                                           double ly) {
    SplitMix64 root(seed);
    const double L = 2.0 * ly + lx;
    std::vector<ObservationSample> out;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        SplitMix64 rng = root.fork(k);
        const SmoothField w0 = SmoothField::random(rng, 4, lx, ly);
        const SmoothField w1 = SmoothField::random(rng, 4, lx, ly);
        std::array<double, 3> amp{}, freq{}, phase{};
        for (std::size_t m = 0; m < 3; ++m) {
            amp[m] = rng.normal() / static_cast<double>(m + 1);
            freq[m] = 1.0 + 3.0 * rng.uniform();
            phase[m] = 2.0 * std::numbers::pi * rng.uniform();
        }
        auto g = [=](double s, double t) {
            double v = 0.0;
            for (std::size_t m = 0; m < 3; ++m)
                v += amp[m] * std::sin(static_cast<double>(m + 1) * std::numbers::pi * s / L) *
                     std::cos(freq[m] * t + phase[m]);
            return v;
        };
        out.push_back({w0, w1, g});
    }
    return out;
}

bool ObservabilityReport::finite() const {
    auto ok = [](const std::vector<ObservabilityRatio>& v) {
        return std::all_of(v.begin(), v.end(),
                           [](const ObservabilityRatio& r) { return std::isfinite(r.ratio) && r.ratio > 0.0; });
    };
    return !samples.empty() && ok(samples) && ok(refined_samples) && std::isfinite(c_hat);
}

namespace {

std::vector<ObservabilityRatio> observe_all(const DomainGeometry& g, const SpaceFunction& q, double T,
                                            const std::vector<ObservationSample>& ensemble,
                                            const ObservabilityOptions& options) {
    const NeumannLaplacian lap(g);
    const Vector& w = lap.weights();
    const Vector pw = g.polyline_weights();
    const Vector qv = q ? FieldOmega::sample(g, q).values : Vector();
    const auto& g0 = g.gamma0_nodes();
    const std::vector<double>& arc = g.arclength();
    RunOptions ro;
    ro.T = T;
    ro.dt = options.dt;
    ro.mode = RunMode::two_sided;
    ro.growth_guard = options.growth_guard;

    std::vector<ObservabilityRatio> out(ensemble.size());
    parallel_for(ensemble.size(), [&](std::size_t k) {
        const ObservationSample& s = ensemble[k];
        const Vector w0 = FieldOmega::sample(g, s.w0).values;
        const Vector w1 = FieldOmega::sample(g, s.w1).values;
        FluxSeries flux;
        if (s.g) {
            flux = [&](double t) {
                Vector v(ix(g0.size()));
                for (std::size_t m = 0; m < g0.size(); ++m) v[ix(m)] = s.g(arc[m], t);
                return v;
            };
        }
        const Trajectory tr = simulate_wave(g, qv, w0, w1, flux, ro);
        const std::vector<double> tw = trapezoid_time_weights(tr.times);
        ObservabilityRatio r;
        r.initial = w0.cwiseProduct(w0).dot(w) + lap.dirichlet_energy(w0) + w1.cwiseProduct(w1).dot(w);
        for (std::size_t n = 0; n < tr.size(); ++n) {
            const Vector gv = flux ? flux(tr.times[n]) : Vector::Zero(ix(g0.size()));
            double obs = 0.0, lower = 0.0;
            for (std::size_t m = 0; m < g0.size(); ++m) {
                const Index a = ix(g0[m]);
                const double z = tr.states[n].z[a], zt = tr.states[n].zt[a], gm = gv[ix(m)];
                obs += pw[ix(m)] * (z * z + zt * zt + gm * gm);
                lower += pw[ix(m)] * 2.0 * (std::abs(gm * zt) + std::abs(z * zt));
            }
            r.observed += tw[n] * obs;
            r.n_T += tw[n] * lower;
        }
        r.ratio = r.initial / r.observed;
        out[k] = r;
    });
    return out;
}

double max_ratio(const std::vector<ObservabilityRatio>& v) {
    double m = 0.0;
    for (const auto& r : v) m = std::max(m, r.ratio);
    return m;
}

}  // namespace

ObservabilityReport observability_estimate(const DomainGeometry& geometry, const SpaceFunction& q,
                                           const AssumptionReport& assumptions, double T,
                                           const std::vector<ObservationSample>& ensemble,
                                           const ObservabilityOptions& options) {
    const double t_min = min_observation_time(assumptions);
    if (!(T > t_min)) {
        throw validation_error("horizon-too-short", "observability needs T > T_min = " + std::to_string(t_min));
    }
    if (ensemble.empty()) throw validation_error("empty-ensemble", "observability needs at least one sample");
    ObservabilityReport rep;
    rep.nx = geometry.nx();
    rep.ny = geometry.ny();
    rep.T = T;
    rep.samples = observe_all(geometry, q, T, ensemble, options);
    rep.c_hat = max_ratio(rep.samples);
    if (options.refine) {
        const DomainGeometry fine = build_reference_domain(2 * geometry.nx() - 1, 2 * geometry.ny() - 1,
                                                           geometry.lx(), geometry.ly());
        rep.refined_samples = observe_all(fine, q, T, ensemble, options);
        rep.refined_c_hat = max_ratio(rep.refined_samples);
        rep.refinement_change = std::abs(rep.refined_c_hat / rep.c_hat - 1.0);
    }
    return rep;
}

double norm_equivalence_ratio(const DomainGeometry& geometry, const Vector& u) {
    const Vector& w = geometry.node_weights();
    const double grad = weighted_dirichlet(geometry, u, nullptr);
    const Vector pw = geometry.polyline_weights();
    double trace = 0.0;
    const auto& g0 = geometry.gamma0_nodes();
    for (std::size_t m = 0; m < g0.size(); ++m) trace += pw[ix(m)] * u[ix(g0[m])] * u[ix(g0[m])];
    return (grad + trace) / (u.cwiseProduct(u).dot(w) + grad);
}

NormEquivalence norm_equivalence_probe(const DomainGeometry& geometry, const std::vector<Vector>& ensemble) {
    if (ensemble.empty()) throw validation_error("empty-ensemble", "norm equivalence needs at least one field");
    NormEquivalence out;
    for (const Vector& u : ensemble) out.ratios.push_back(norm_equivalence_ratio(geometry, u));
    out.k1 = *std::min_element(out.ratios.begin(), out.ratios.end());
    out.k2 = *std::max_element(out.ratios.begin(), out.ratios.end());
    return out;
}

}  // namespace sail
