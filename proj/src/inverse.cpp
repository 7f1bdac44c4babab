#include "sail/inverse.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include "sail/io.hpp"
#include "sail/parallel.hpp"
#include "sail/random.hpp"

namespace sail {

using Eigen::Index;

namespace {

RunOptions run_options(const ObservationWindow& w) {
    RunOptions o;
    o.T = w.T;
    o.dt = w.dt;
    o.mode = w.mode;
    o.stride = 1;
    return o;
}

std::vector<double> step_times(const ObservationWindow& w) {
    const std::size_t half = half_window_steps(w.T, w.dt);
    const double dt = 0.5 * w.T / static_cast<double>(half);
    const long lo = w.mode == RunMode::two_sided ? -static_cast<long>(half) : 0;
    std::vector<double> t;
    for (long k = lo; k <= static_cast<long>(half); ++k) t.push_back(0.5 * w.T + static_cast<double>(k) * dt);
    return t;
}

void append_bytes(std::string& s, const void* p, std::size_t n) { s.append(static_cast<const char*>(p), n); }

template <class T>
void append_value(std::string& s, T v) {
    append_bytes(s, &v, sizeof v);
}

void check_config(const ForwardMapConfig& c) {
    const Index n = static_cast<Index>(c.geometry.node_count());
    if (c.q.size() != n) throw validation_error("shape-mismatch", "potential q must cover the grid");
    if (!c.R) throw validation_error("missing-profile", "source profile R is not set");
    if (c.R->nodes() != n) throw validation_error("shape-mismatch", "source profile R must cover the grid");
    if (c.window.stride == 0) throw validation_error("zero-stride", "observation stride must be at least 1");
}

/// The sensor samples u every `stride` steps; derivatives are differenced
/// at that rate.
TraceSeries traces_of(const Trajectory& tr, const ClampedBiharmonic& b, std::size_t stride) {
    const Index m = tr.states.front().v.size();
    std::vector<double> times;
    for (std::size_t k = 0; k < tr.size(); k += stride) times.push_back(tr.times[k]);
    Matrix u(static_cast<Index>(times.size()), m);
    for (std::size_t k = 0; k < times.size(); ++k) u.row(static_cast<Index>(k)) = tr.states[k * stride].v.transpose();
    return traces_from_displacement(times, u, b);
}

/// R_t presented as a profile, for the y system.
class DerivativeProfile final : public SourceProfile {
public:
    explicit DerivativeProfile(std::shared_ptr<const SourceProfile> base) : base_(std::move(base)) {}
    Vector eval(double t, int derivative) const override { return base_->eval(t, derivative + 1); }
    Index nodes() const override { return base_->nodes(); }

private:
    std::shared_ptr<const SourceProfile> base_;
};

std::vector<double> trapezoid_weights(const std::vector<double>& t) {
    std::vector<double> w(t.size(), 0.0);
    for (std::size_t k = 0; k + 1 < t.size(); ++k) {
        const double h = 0.5 * (t[k + 1] - t[k]);
        w[k] += h;
        w[k + 1] += h;
    }
    return w;
}

/// L²(Γ0 x window) norm of rows-as-time samples on beam interior nodes.
double beam_space_time_norm(const Matrix& s, const std::vector<double>& tw, const Vector& bw) {
    double acc = 0.0;
    for (Index k = 0; k < s.rows(); ++k) acc += tw[static_cast<std::size_t>(k)] * s.row(k).cwiseAbs2().dot(bw);
    return std::sqrt(acc);
}

double weighted_norm(const Vector& v, const Vector& w) { return std::sqrt(v.cwiseAbs2().dot(w)); }

}  // namespace

std::string ForwardMapConfig::hash() const {
    check_config(*this);
    std::string bytes = "sail-forward-map/1";
    append_value(bytes, geometry.nx());
    append_value(bytes, geometry.ny());
    append_value(bytes, geometry.lx());
    append_value(bytes, geometry.ly());
    append_value(bytes, window.T);
    append_value(bytes, window.dt);
    append_value(bytes, static_cast<int>(window.mode));
    append_value(bytes, window.kappa);
    append_value(bytes, static_cast<std::uint64_t>(window.stride));
    append_bytes(bytes, q.data(), static_cast<std::size_t>(q.size()) * sizeof(double));
    for (double t : step_times(window)) {
        const Vector r = R->eval(t);
        append_bytes(bytes, r.data(), static_cast<std::size_t>(r.size()) * sizeof(double));
    }
    bytes += r_label;
    return sha256_hex(bytes);
}

std::shared_ptr<const SourceProfile> affine_time_profile(const DomainGeometry& geometry, double T) {
    return std::make_shared<SeparableProfile>(Vector::Ones(static_cast<Index>(geometry.node_count())),
                                              TimeProfile::polynomial({1.0, 1.0}, 0.5 * T));
}

TraceSeries simulate_traces(const ForwardMapConfig& config, const Vector& f) {
    check_config(config);
    if (f.size() != config.q.size()) throw validation_error("shape-mismatch", "f must cover the grid");
    const OperatorBundle ops(config.geometry, config.q, config.window.kappa);
    const CoupledIntegrator integrator(ops, run_options(config.window));
    const SourceSpec source{f, config.R};
    return traces_of(integrator.run(&source, CoupledState::zeros(config.geometry)), ops.biharmonic(), config.window.stride);
}

Vector stack_observation(const TraceSeries& traces) {
    const Index m = traces.utt.cols();
    Vector b(traces.utt.rows() * m);
    for (Index r = 0; r < traces.utt.rows(); ++r) b.segment(r * m, m) = traces.utt.row(r).transpose();
    return b;
}

Vector simulate_observation(const ForwardMapConfig& config, const Vector& f) {
    return stack_observation(simulate_traces(config, f));
}

Vector ForwardMap::embed(const Vector& coeffs) const {
    if (coeffs.size() != static_cast<Index>(unknowns.size())) {
        throw validation_error("shape-mismatch", "coefficient count does not match the map");
    }
    Vector f = Vector::Zero(static_cast<Index>(node_count));
    for (std::size_t k = 0; k < unknowns.size(); ++k) f[static_cast<Index>(unknowns[k])] = coeffs[static_cast<Index>(k)];
    return f;
}

Vector ForwardMap::restrict_field(const Vector& field) const {
    if (field.size() != static_cast<Index>(node_count)) throw validation_error("shape-mismatch", "field must cover the grid");
    Vector c(static_cast<Index>(unknowns.size()));
    for (std::size_t k = 0; k < unknowns.size(); ++k) c[static_cast<Index>(k)] = field[static_cast<Index>(unknowns[k])];
    return c;
}

ForwardMap assemble_forward_map(const ForwardMapConfig& config, const std::filesystem::path& cache_dir) {
    check_config(config);
    const DomainGeometry& g = config.geometry;
    if (g.interior_nodes().size() > max_map_unknowns) {
        throw validation_error("scale-too-large", std::to_string(g.interior_nodes().size()) +
                                                      " unknowns exceed the desk-scale limit of " +
                                                      std::to_string(max_map_unknowns));
    }
    ForwardMap map;
    map.unknowns = g.interior_nodes();
    map.node_count = g.node_count();
    map.node_weights = g.node_weights();
    map.beam = static_cast<Index>(g.beam_interior_count());
    map.stride = config.window.stride;
    map.window = config.window;
    map.r_label = config.r_label;
    map.q_hash = sha256_vector(config.q);
    map.config_hash = config.hash();
    const std::vector<double> all = step_times(config.window);
    for (std::size_t k = 0; k < all.size(); k += map.stride) map.times.push_back(all[k]);
    if (map.times.size() < 3) throw validation_error("stride-too-coarse", "fewer than three observation samples");
    map.dt = map.times[1] - map.times[0];
    const Index rows = static_cast<Index>(map.times.size()) * map.beam;
    const Index cols = static_cast<Index>(map.unknowns.size());

    std::filesystem::path cached;
    if (!cache_dir.empty()) {
        cached = cache_dir / (map.config_hash + ".saif");
        if (std::filesystem::exists(cached)) {
            const SaifFile file = read_saif(cached);
            if (file.header.value("config_hash", std::string()) == map.config_hash) {
                Matrix m = matrix_from_saif(file);
                if (m.rows() == rows && m.cols() == cols) {
                    map.matrix = std::move(m);
                    map.from_cache = true;
                    return map;
                }
            }
        }
    }

    const OperatorBundle ops(g, config.q, config.window.kappa);
    const CoupledIntegrator integrator(ops, run_options(config.window));
    const CoupledState zero = CoupledState::zeros(g);
    map.matrix.resize(rows, cols);
    parallel_for(static_cast<std::size_t>(cols), [&](std::size_t j) {
        try {
            Vector f = Vector::Zero(static_cast<Index>(g.node_count()));
            f[static_cast<Index>(map.unknowns[j])] = 1.0;
            const SourceSpec source{f, config.R};
            const TraceSeries ts = traces_of(integrator.run(&source, zero), ops.biharmonic(), map.stride);
            map.matrix.col(static_cast<Index>(j)) = stack_observation(ts);
        } catch (const Error& e) {
            throw Error(e.kind(), e.code(), "column " + std::to_string(j) + ": " + e.what());
        }
    });

    if (!cached.empty()) {
        std::filesystem::create_directories(cache_dir);
        Json header;
        header["kind"] = "forward-map";
        header["config_hash"] = map.config_hash;
        header["q_hash"] = map.q_hash;
        header["r_label"] = map.r_label;
        header["T"] = config.window.T;
        header["dt"] = map.dt;
        header["mode"] = to_string(config.window.mode);
        header["kappa"] = config.window.kappa;
        header["stride"] = map.stride;
        header["nx"] = g.nx();
        header["ny"] = g.ny();
        write_matrix_saif(cached, header, map.matrix);
    }
    return map;
}

InjectivityReport injectivity_diagnostics(const ForwardMap& map, double relative_threshold) {
    InjectivityReport r;
    r.unknowns = map.matrix.cols();
    Eigen::BDCSVD<Matrix> svd(map.matrix);
    if (svd.info() != Eigen::Success) throw solver_error("svd-failed", "singular value decomposition did not converge");
    r.singular_values = svd.singularValues();
    const double smax = r.singular_values.size() ? r.singular_values[0] : 0.0;
    r.threshold = relative_threshold * smax;
    r.rank = smax > 0.0 ? (r.singular_values.array() > r.threshold).count() : 0;
    r.smallest = r.singular_values.size() ? r.singular_values[r.singular_values.size() - 1] : 0.0;
    return r;
}

MapSolver::MapSolver(const ForwardMap& map) : map_(&map) {
    Eigen::BDCSVD<Matrix> svd(map.matrix, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.info() != Eigen::Success) throw solver_error("svd-failed", "singular value decomposition did not converge");
    u_ = svd.matrixU();
    s_ = svd.singularValues();
    v_ = svd.matrixV();
}

namespace {

double filter(double s, double alpha) {
    if (alpha == 0.0) return s > 0.0 ? 1.0 / s : 0.0;
    return s / (s * s + alpha);
}

void check_alpha(double alpha) {
    if (!(alpha >= 0.0)) throw validation_error("negative-alpha", "regularization weight must be non-negative");
}

}  // namespace

Vector MapSolver::tikhonov(const Vector& b, double alpha) const {
    check_alpha(alpha);
    if (b.size() != u_.rows()) throw validation_error("shape-mismatch", "observation does not match the map rows");
    if (std::isinf(alpha)) return Vector::Zero(v_.rows());
    Vector c = u_.transpose() * b;
    for (Index i = 0; i < c.size(); ++i) c[i] *= filter(s_[i], alpha);
    return v_ * c;
}

double MapSolver::projected_residual(const Vector& b, double alpha) const {
    const Vector c = u_.transpose() * b;
    if (std::isinf(alpha)) return c.norm();
    double acc = 0.0;
    for (Index i = 0; i < c.size(); ++i) {
        const double s2 = s_[i] * s_[i];
        const double damp = alpha == 0.0 ? (s_[i] > 0.0 ? 0.0 : 1.0) : alpha / (s2 + alpha);
        acc += damp * damp * c[i] * c[i];
    }
    return std::sqrt(acc);
}

const Vector& MapSolver::component_noise() const {
    if (!unit_noise_) {
        const ForwardMap& m = *map_;
        const Index kept = static_cast<Index>(m.times.size());
        const Matrix d1 = time_derivative(Matrix::Identity(kept, kept), m.dt);
        const Matrix a = d1 * d1;
        Vector sd(u_.cols());
        for (Index i = 0; i < u_.cols(); ++i) {
            const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> ui(
                u_.col(i).data(), kept, m.beam);
            sd[i] = (a.transpose() * ui).norm();
        }
        unit_noise_ = std::move(sd);
    }
    return *unit_noise_;
}

double MapSolver::projected_noise(double sigma_u) const { return sigma_u * component_noise().norm(); }

std::string to_string(InversionMethod method) { return method == InversionMethod::cgne ? "cgne" : "tikhonov_svd"; }

InversionMethod inversion_method_from_string(const std::string& name) {
    if (name == "tikhonov_svd") return InversionMethod::tikhonov_svd;
    if (name == "cgne") return InversionMethod::cgne;
    throw validation_error("unknown-method", "method must be tikhonov_svd or cgne, got " + name);
}

double relative_l2_error(const DomainGeometry& geometry, const Vector& estimate, const Vector& truth) {
    const Vector& w = geometry.node_weights();
    if (estimate.size() != w.size() || truth.size() != w.size()) {
        throw validation_error("shape-mismatch", "fields must cover the grid");
    }
    const double t = weighted_norm(truth, w);
    if (t == 0.0) throw validation_error("zero-truth", "relative error against a zero field is undefined");
    return weighted_norm(estimate - truth, w) / t;
}

namespace {

struct CgResult {
    Vector f;
    int iterations = 0;
};

/// CG on (MᵀM + αI) f = Mᵀb. `stop` sees the current iterate and its data
/// residual Mf - b.
CgResult cgne(const Matrix& m, const Vector& b, double alpha, int max_iter, double tol,
              const std::function<bool(const Vector&)>& stop) {
    CgResult out;
    const Index n = m.cols();
    out.f = Vector::Zero(n);
    Vector data_res = -b;
    if (stop && stop(data_res)) return out;
    Vector r = m.transpose() * b;
    const double r0 = r.norm();
    if (r0 == 0.0) return out;
    Vector p = r;
    double rr = r.squaredNorm();
    for (int k = 0; k < max_iter; ++k) {
        const Vector mp = m * p;
        const double denom = mp.squaredNorm() + alpha * p.squaredNorm();
        if (!(denom > 0.0)) break;
        const double a = rr / denom;
        out.f += a * p;
        data_res += a * mp;
        r -= a * (m.transpose() * mp + alpha * p);
        out.iterations = k + 1;
        if (stop && stop(data_res)) break;
        const double rr_new = r.squaredNorm();
        if (std::sqrt(rr_new) <= tol * r0) break;
        p = r + (rr_new / rr) * p;
        rr = rr_new;
    }
    return out;
}

}  // namespace

InversionResult reconstruct_f(const MapSolver& solver, const Vector& b, const ReconstructOptions& options) {
    const ForwardMap& map = solver.map();
    if (b.size() != map.matrix.rows()) {
        throw validation_error("shape-mismatch", "observation has " + std::to_string(b.size()) + " samples, map expects " +
                                                     std::to_string(map.matrix.rows()));
    }
    check_alpha(options.alpha);
    if (options.truth && options.truth->size() != static_cast<Index>(map.node_count)) {
        throw validation_error("shape-mismatch", "ground truth must cover the grid");
    }

    InversionResult res;
    res.method = options.method;
    res.alpha = options.alpha;
    if (options.noise_sigma && !(*options.noise_sigma > 0.0)) {
        throw validation_error("noise-level", "declared noise level must be positive");
    }
    res.discrepancy = options.noise_sigma.has_value();
    res.noise_level = res.discrepancy ? solver.projected_noise(*options.noise_sigma) : 0.0;

    const Vector c = solver.U().transpose() * b;
    const double outside2 = std::max(0.0, b.squaredNorm() - c.squaredNorm());
    // RMS over range components of the projected residual, each divided by
    // its own noise standard deviation.
    const auto whitened = [&](const Vector& proj) {
        const Vector& sd = solver.component_noise();
        double acc = 0.0;
        for (Index i = 0; i < proj.size(); ++i) acc += std::pow(proj[i] / (*options.noise_sigma * sd[i]), 2);
        return std::sqrt(acc / static_cast<double>(std::max<Index>(1, proj.size())));
    };
    const double target = options.discrepancy_factor;
    const bool noise_only = res.discrepancy && whitened(c) <= target;

    if (options.method == InversionMethod::tikhonov_svd) {
        if (noise_only) {
            res.alpha = std::numeric_limits<double>::infinity();
        } else if (res.discrepancy) {
            const Vector& sv = solver.sigma();
            const auto stat = [&](double log_alpha) {
                const double a = std::exp(log_alpha);
                Vector proj = c;
                for (Index i = 0; i < c.size(); ++i) proj[i] *= a / (sv[i] * sv[i] + a);
                return whitened(proj);
            };
            const double smax = sv.size() ? sv[0] : 1.0;
            double lo = std::log(smax * smax) - 80.0, hi = std::log(smax * smax) + 10.0;
            if (stat(lo) >= target) {
                res.alpha = std::exp(lo);
            } else {
                for (int it = 0; it < 200; ++it) {
                    const double mid = 0.5 * (lo + hi);
                    (stat(mid) > target ? hi : lo) = mid;
                }
                res.alpha = std::exp(0.5 * (lo + hi));
            }
        }
        res.coeffs = solver.tikhonov(b, res.alpha);
    } else if (noise_only) {
        res.coeffs = Vector::Zero(map.matrix.cols());
    } else {
        std::function<bool(const Vector&)> stop;
        if (res.discrepancy) {
            stop = [&](const Vector& data_res) { return whitened(solver.U().transpose() * data_res) <= target; };
        }
        const CgResult cg = cgne(map.matrix, b, options.alpha, options.max_iterations, options.cg_tolerance, stop);
        res.coeffs = cg.f;
        res.iterations = cg.iterations;
    }
    res.f = map.embed(res.coeffs);
    res.residual = (map.matrix * res.coeffs - b).norm();
    res.projected_residual =
        res.method == InversionMethod::tikhonov_svd
            ? solver.projected_residual(b, res.alpha)
            : std::sqrt(std::max(0.0, res.residual * res.residual - outside2));

    const auto error_of = [&](const Vector& f) {
        const double t = weighted_norm(*options.truth, map.node_weights);
        return weighted_norm(f - *options.truth, map.node_weights) / t;
    };
    if (options.truth) res.rel_error = error_of(res.f);
    if (options.sweep) {
        const double smax = solver.sigma().size() ? solver.sigma()[0] : 1.0;
        constexpr int count = 25;
        res.sweep.resize(count);
        parallel_for(count, [&](std::size_t k) {
            SweepRow& row = res.sweep[k];
            row.alpha = smax * smax * std::pow(10.0, -16.0 * static_cast<double>(k) / (count - 1));
            const Vector coeffs = solver.tikhonov(b, row.alpha);
            row.residual = (map.matrix * coeffs - b).norm();
            if (options.truth) row.rel_error = error_of(map.embed(coeffs));
        });
    }
    return res;
}

TraceSeries add_trace_noise(const TraceSeries& clean, const ClampedBiharmonic& biharmonic, double level,
                            std::uint64_t seed, double* sigma) {
    if (!(level >= 0.0)) throw validation_error("negative-noise", "noise level must be non-negative");
    const double rms = clean.u.size() ? std::sqrt(clean.u.squaredNorm() / static_cast<double>(clean.u.size())) : 0.0;
    const double sd = level * rms;
    SplitMix64 rng(seed);
    Matrix u = clean.u;
    for (Index k = 0; k < u.rows(); ++k)
        for (Index j = 0; j < u.cols(); ++j) u(k, j) += sd * rng.normal();
    if (sigma != nullptr) *sigma = sd;
    TraceSeries out = traces_from_displacement(clean.times, u, biharmonic);
    out.provenance = "simulated+noise";
    return out;
}

bool StabilityProbeReport::finite() const {
    auto ok = [](const std::vector<StabilityRatio>& v) {
        return std::all_of(v.begin(), v.end(), [](const StabilityRatio& r) { return std::isfinite(r.ratio); });
    };
    return ok(samples) && ok(refined_samples) && std::isfinite(c_stab);
}

StabilityRatio stability_ratio(const ForwardMapConfig& config, const Vector& f) {
    const TraceSeries ts = simulate_traces(config, f);
    const std::vector<double> tw = trapezoid_weights(ts.times);
    const Vector bw = config.geometry.beam_weights();
    StabilityRatio r;
    r.f_norm = weighted_norm(f, config.geometry.node_weights());
    r.utt = beam_space_time_norm(ts.utt, tw, bw);
    r.uttt = beam_space_time_norm(ts.uttt, tw, bw);
    r.bilap_utt = beam_space_time_norm(ts.bilap_utt, tw, bw);
    const double denom = r.utt + r.uttt + r.bilap_utt;
    r.ratio = denom > 0.0 ? r.f_norm / denom : std::numeric_limits<double>::infinity();
    return r;
}

std::vector<SpaceFunction> stability_ensemble(std::uint64_t seed, std::size_t smooth, std::size_t bumps, double lx,
                                              double ly) {
    const SplitMix64 root(seed);
    std::vector<SpaceFunction> out;
    for (std::size_t k = 0; k < smooth; ++k) {
        SplitMix64 rng = root.fork(k);
        out.emplace_back(SmoothField::random(rng, 4, lx, ly));
    }
    const double width = 0.15 * std::min(lx, ly);
    for (std::size_t k = 0; k < bumps; ++k) {
        SplitMix64 rng = root.fork(smooth + k);
        const double cx = lx * (0.2 + 0.6 * rng.uniform());
        const double cy = ly * (0.2 + 0.6 * rng.uniform());
        const double amp = 0.5 + rng.uniform();
        out.emplace_back([=](double x, double y) {
            const double r2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
            return amp * std::exp(-r2 / (width * width));
        });
    }
    return out;
}

namespace {

Vector sample_field(const DomainGeometry& g, const SpaceFunction& fn) {
    Vector v(static_cast<Index>(g.node_count()));
    for (std::size_t n = 0; n < g.node_count(); ++n) {
        const Point p = g.point(n);
        v[static_cast<Index>(n)] = fn(p.x, p.y);
    }
    return v;
}

std::vector<StabilityRatio> probe_grid(const ConfigFactory& setup, const DomainGeometry& g,
                                       const std::vector<SpaceFunction>& ensemble) {
    const ForwardMapConfig config = setup(g);
    std::vector<StabilityRatio> out(ensemble.size());
    parallel_for(ensemble.size(), [&](std::size_t k) { out[k] = stability_ratio(config, sample_field(g, ensemble[k])); });
    return out;
}

double max_ratio(const std::vector<StabilityRatio>& v) {
    double m = 0.0;
    for (const auto& r : v) m = std::max(m, r.ratio);
    return m;
}

}  // namespace

StabilityProbeReport stability_probe(const ConfigFactory& setup, const DomainGeometry& geometry,
                                     const std::vector<SpaceFunction>& ensemble, bool refine,
                                     const InjectivityReport* injectivity) {
    if (ensemble.empty()) throw validation_error("empty-ensemble", "stability probe needs at least one sample");
    StabilityProbeReport r;
    r.nx = geometry.nx();
    r.ny = geometry.ny();
    r.samples = probe_grid(setup, geometry, ensemble);
    r.c_stab = max_ratio(r.samples);
    if (refine) {
        const DomainGeometry fine(2 * geometry.nx() - 1, 2 * geometry.ny() - 1, geometry.lx(), geometry.ly());
        r.refined_samples = probe_grid(setup, fine, ensemble);
        r.refined_c_stab = max_ratio(r.refined_samples);
        r.refinement_change = std::abs(r.refined_c_stab / r.c_stab - 1.0);
    }
    if (injectivity != nullptr) {
        r.smallest_singular_value = injectivity->smallest;
        r.rank = injectivity->rank;
    }
    return r;
}

std::vector<Vector> hat_basis(const DomainGeometry& g, int n) {
    if (n < 2) throw validation_error("basis-too-small", "hat basis needs at least two nodes per side");
    const double hx = g.lx() / (n - 1), hy = g.ly() / (n - 1);
    std::vector<Vector> out;
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            out.push_back(sample_field(g, [=](double x, double y) {
                return std::max(0.0, 1.0 - std::abs(x - i * hx) / hx) * std::max(0.0, 1.0 - std::abs(y - j * hy) / hy);
            }));
    return out;
}

namespace {

/// Orthonormal-basis singular values of f -> trace samples, with L² weights
/// in both spaces.
Vector smoothing_spectrum(const Matrix& raw, const Matrix& gram) {
    const Eigen::LLT<Matrix> llt(gram);
    if (llt.info() != Eigen::Success) throw solver_error("gram-not-spd", "hat basis Gram matrix is not positive definite");
    // K L^{-T}: solve L X^T = K^T
    const Matrix kt = llt.matrixL().solve(raw.transpose());
    Eigen::BDCSVD<Matrix> svd(kt.transpose());
    return svd.singularValues();
}

double decay(const Vector& s, Index k) {
    if (s.size() <= k || s[0] == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return s[k] / s[0];
}

}  // namespace

PsiYReport psi_y_split(const ForwardMapConfig& config, const Vector& f, const PsiYOptions& options) {
    check_config(config);
    const DomainGeometry& g = config.geometry;
    const Index n = static_cast<Index>(g.node_count());
    if (f.size() != n) throw validation_error("shape-mismatch", "f must cover the grid");
    const OperatorBundle ops(g, config.q, config.window.kappa);
    const RunOptions ro = run_options(config.window);
    const CoupledIntegrator integrator(ops, ro);
    const SourceSpec source{f, config.R};
    const Trajectory lin = integrator.run(&source, CoupledState::zeros(g));

    const std::size_t samples = lin.size();
    std::vector<Vector> flux(samples);
    for (std::size_t k = 0; k < samples; ++k) flux[k] = beam_to_polyline(ops.apply(lin.states[k]).vt);
    const double t0 = lin.times.front(), dt = lin.dt;
    const FluxSeries flux_fn = [&](double t) -> Vector {
        const double p = (t - t0) / dt;
        const long last = static_cast<long>(samples) - 1;
        const long k = std::clamp(static_cast<long>(std::floor(p)), 0L, last - 1);
        const double a = std::clamp(p - static_cast<double>(k), 0.0, 1.0);
        return (1.0 - a) * flux[static_cast<std::size_t>(k)] + a * flux[static_cast<std::size_t>(k + 1)];
    };
    const double tc = 0.5 * config.window.T;
    const Vector zero = Vector::Zero(n);
    const Trajectory psi = simulate_wave(g, config.q, zero, f.cwiseProduct(config.R->eval(tc)), flux_fn, ro);
    const auto rt = std::make_shared<DerivativeProfile>(config.R);
    const SourceSpec ysrc{f, rt};
    const Trajectory y = simulate_wave(g, config.q, zero, zero, nullptr, ro, &ysrc);

    const std::vector<double> tw = trapezoid_weights(lin.times);
    const Vector& w = g.node_weights();
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < samples; ++k) {
        const Vector& wbar = lin.states[k].zt;
        num += tw[k] * (wbar - psi.states[k].z - y.states[k].z).cwiseAbs2().dot(w);
        den += tw[k] * wbar.cwiseAbs2().dot(w);
    }
    PsiYReport r;
    r.wbar_norm = std::sqrt(den);
    r.additivity_error = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
    if (!options.operators) return r;

    const std::vector<Vector> basis = hat_basis(g, options.basis_nodes);
    const Index nb = static_cast<Index>(basis.size());
    r.basis_size = static_cast<int>(nb);
    const std::vector<std::size_t>& g0 = g.gamma0_nodes();
    const Vector pw = g.polyline_weights();
    const Index rows = static_cast<Index>(samples * g0.size());
    Matrix k0(rows, nb), k1(rows, nb);
    parallel_for(basis.size(), [&](std::size_t b) {
        const SourceSpec src{basis[b], rt};
        const Trajectory yb = simulate_wave(g, config.q, zero, zero, nullptr, ro, &src);
        for (std::size_t k = 0; k < samples; ++k)
            for (std::size_t s = 0; s < g0.size(); ++s) {
                const double wt = std::sqrt(tw[k] * pw[static_cast<Index>(s)]);
                const Index row = static_cast<Index>(k * g0.size() + s);
                k0(row, static_cast<Index>(b)) = wt * yb.states[k].z[static_cast<Index>(g0[s])];
                k1(row, static_cast<Index>(b)) = wt * yb.states[k].zt[static_cast<Index>(g0[s])];
            }
    });
    Matrix gram(nb, nb);
    for (Index a = 0; a < nb; ++a)
        for (Index b = 0; b < nb; ++b)
            gram(a, b) = basis[static_cast<std::size_t>(a)].cwiseProduct(w).dot(basis[static_cast<std::size_t>(b)]);
    r.k_singular_values = smoothing_spectrum(k0, gram);
    r.k1_singular_values = smoothing_spectrum(k1, gram);
    r.k_decay = decay(r.k_singular_values, 19);
    r.k1_decay = decay(r.k1_singular_values, 19);
    return r;
}

namespace {

struct NonlinearRun {
    Vector observation;
    std::vector<Vector> z;
    double t0 = 0.0;
    double dt = 0.0;
};

NonlinearRun run_nonlinear(const NonlinearSetup& setup, const Vector& q) {
    const OperatorBundle ops(setup.geometry, q, setup.window.kappa);
    const CoupledIntegrator integrator(ops, run_options(setup.window));
    const Trajectory tr = integrator.run(nullptr, setup.initial);
    NonlinearRun out;
    out.observation = stack_observation(traces_of(tr, ops.biharmonic(), setup.window.stride));
    out.t0 = tr.times.front();
    out.dt = tr.dt;
    for (const CoupledState& s : tr.states) out.z.push_back(s.z);
    return out;
}

bool changes_sign(const Vector& v) { return v.size() && v.minCoeff() < 0.0 && v.maxCoeff() > 0.0; }

}  // namespace

Vector nonlinear_observation(const NonlinearSetup& setup, const Vector& q) {
    if (q.size() != static_cast<Index>(setup.geometry.node_count())) {
        throw validation_error("shape-mismatch", "potential q must cover the grid");
    }
    return run_nonlinear(setup, q).observation;
}

RecoverResult recover_q(const NonlinearSetup& setup, const Vector& observation, const Vector& p0,
                        const RecoverOptions& options, const Vector* truth) {
    const DomainGeometry& g = setup.geometry;
    const Vector& w = g.node_weights();
    if (p0.size() != static_cast<Index>(g.node_count())) throw validation_error("shape-mismatch", "p0 must cover the grid");
    if (options.max_iterations < 1) throw validation_error("iterations", "need at least one iteration");
    check_alpha(options.alpha);
    if (setup.window.mode != RunMode::forward_only) {
        throw validation_error("mode", "nonlinear recovery runs in forward_only mode");
    }
    RecoverResult res;
    const Vector& z0 = setup.initial.z;
    const Vector& z1 = setup.initial.zt;
    res.data_warning = z0.cwiseAbs().minCoeff() <= setup.s0 || z1.cwiseAbs().minCoeff() <= setup.s1 ||
                       changes_sign(z0) || changes_sign(z1);
    const double obs_norm = observation.norm();
    res.q = p0;
    int increases = 0;
    double previous = std::numeric_limits<double>::infinity();
    for (int k = 0;; ++k) {
        NonlinearRun run;
        try {
            run = run_nonlinear(setup, res.q);
        } catch (const Error& e) {
            if (k == 0 || e.code() != "nonfinite-state") throw;
            throw DivergenceError("iterate p_" + std::to_string(k) + " blew up: " + e.what(), res.history);
        }
        if (run.observation.size() != observation.size()) {
            throw validation_error("shape-mismatch", "observation does not match the window");
        }
        const Vector residual = observation - run.observation;
        RecoverHistoryRow row;
        row.iteration = k;
        row.residual = residual.norm();
        if (truth != nullptr) {
            const double t = weighted_norm(*truth, w);
            row.rel_error = weighted_norm(res.q - *truth, w) / (t > 0.0 ? t : 1.0);
        }
        increases = row.residual > previous ? increases + 1 : 0;
        previous = row.residual;
        if (increases >= 2) {
            res.history.push_back(row);
            throw DivergenceError("residual increased on two consecutive iterations (iteration " + std::to_string(k) +
                                      ", residual " + format_double(row.residual) + ")",
                                  res.history);
        }
        if (row.residual <= options.tolerance * obs_norm || row.residual == 0.0) {
            res.history.push_back(row);
            res.converged = true;
            return res;
        }
        if (k >= options.max_iterations) {
            res.history.push_back(row);
            return res;
        }
        ForwardMapConfig config{g, res.q, std::make_shared<SampledProfile>(run.t0, run.dt, run.z),
                                "z(p_" + std::to_string(k) + ")", setup.window};
        const ForwardMap map = assemble_forward_map(config, options.cache_dir);
        const MapSolver solver(map);
        ReconstructOptions ro;
        ro.alpha = options.alpha;
        const InversionResult inv = reconstruct_f(solver, residual, ro);
        row.update_norm = weighted_norm(inv.f, w);
        res.history.push_back(row);
        res.q += inv.f;
        if (row.update_norm <= options.tolerance * (1.0 + weighted_norm(res.q, w))) {
            res.converged = true;
            RecoverHistoryRow last;
            last.iteration = k + 1;
            last.residual = (observation - run_nonlinear(setup, res.q).observation).norm();
            if (truth != nullptr) {
                const double t = weighted_norm(*truth, w);
                last.rel_error = weighted_norm(res.q - *truth, w) / (t > 0.0 ? t : 1.0);
            }
            res.history.push_back(last);
            return res;
        }
    }
}

}  // namespace sail
