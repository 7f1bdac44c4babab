#include "sail/forward.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/SparseLU>

namespace sail {

namespace {

using Index = Eigen::Index;
using ColMatrix = Eigen::SparseMatrix<double>;

double falling(int k, int d) {
    double out = 1.0;
    for (int i = 0; i < d; ++i) out *= static_cast<double>(k - i);
    return out;
}

}  // namespace

TimeProfile TimeProfile::constant(double c) { return polynomial({c}, 0.0); }

TimeProfile TimeProfile::polynomial(std::vector<double> coeffs, double center) {
    TimeProfile p;
    p.kind = Kind::polynomial;
    p.coeffs = std::move(coeffs);
    p.center = center;
    return p;
}

TimeProfile TimeProfile::trig(double offset, double amplitude, double omega, double phase, double center) {
    TimeProfile p;
    p.kind = Kind::trig;
    p.coeffs.clear();
    p.offset = offset;
    p.amplitude = amplitude;
    p.omega = omega;
    p.phase = phase;
    p.center = center;
    return p;
}

double TimeProfile::eval(double t, int derivative) const {
    const double s = t - center;
    if (kind == Kind::trig) {
        const double base = amplitude * std::pow(omega, derivative) *
                            std::sin(omega * s + phase + 0.5 * std::numbers::pi * derivative);
        return derivative == 0 ? offset + base : base;
    }
    double out = 0.0;
    for (int k = static_cast<int>(coeffs.size()) - 1; k >= derivative; --k) {
        out = out * s + coeffs[static_cast<std::size_t>(k)] * falling(k, derivative);
    }
    return out;
}

SeparableProfile::SeparableProfile(Vector spatial, TimeProfile time) : spatial_(std::move(spatial)), time_(time) {}

Vector SeparableProfile::eval(double t, int derivative) const { return spatial_ * time_.eval(t, derivative); }

SampledProfile::SampledProfile(double t0, double dt, std::vector<Vector> snapshots)
    : t0_(t0), dt_(dt), snaps_(std::move(snapshots)) {
    if (snaps_.size() < 2 || !(dt_ > 0.0)) {
        throw validation_error("sampled-profile", "need at least two snapshots and a positive step");
    }
}

Index SampledProfile::nodes() const { return snaps_.front().size(); }

Vector SampledProfile::at_index(long k, int derivative) const {
    const long last = static_cast<long>(snaps_.size()) - 1;
    if (derivative == 0) return snaps_[static_cast<std::size_t>(std::clamp(k, 0L, last))];
    const long c = std::clamp(k, 1L, last - 1 > 0 ? last - 1 : 1L);
    return (at_index(c + 1, derivative - 1) - at_index(c - 1, derivative - 1)) / (2.0 * dt_);
}

Vector SampledProfile::eval(double t, int derivative) const {
    const double p = (t - t0_) / dt_;
    const long last = static_cast<long>(snaps_.size()) - 1;
    long k = static_cast<long>(std::floor(p));
    k = std::clamp(k, 0L, last - 1);
    const double a = std::clamp(p - static_cast<double>(k), 0.0, 1.0);
    if (a == 0.0) return at_index(k, derivative);
    if (a == 1.0) return at_index(k + 1, derivative);
    return (1.0 - a) * at_index(k, derivative) + a * at_index(k + 1, derivative);
}

BoundsReport check_source_bounds(const SourceSpec& source, double t_center) {
    BoundsReport r;
    r.min_abs_R = source.R->eval(t_center, 0).cwiseAbs().minCoeff();
    r.min_abs_Rt = source.R->eval(t_center, 1).cwiseAbs().minCoeff();
    r.pass = r.min_abs_R >= source.r0 && r.min_abs_Rt >= source.r1;
    return r;
}

std::string to_string(RunMode mode) { return mode == RunMode::two_sided ? "two_sided" : "forward_only"; }

std::size_t half_window_steps(double T, double dt) {
    if (!(dt > 0.0)) throw validation_error("nonpositive-dt", "time step must be positive");
    if (!(T > 0.0)) throw validation_error("nonpositive-horizon", "T must be positive");
    const double ratio = 0.5 * T / dt;
    // tolerate round-off in exact divisions before rounding up
    return static_cast<std::size_t>(std::max(1.0, std::ceil(ratio - 1e-9)));
}

struct CrankNicolson::Impl {
    SparseMatrix a;
    Eigen::SparseLU<ColMatrix> lu;
};

CrankNicolson::CrankNicolson(const SparseMatrix& generator, double dt) : dt_(dt), impl_(std::make_unique<Impl>()) {
    impl_->a = generator;
    ColMatrix m = ColMatrix(generator) * (-0.5 * dt);
    for (Index k = 0; k < m.rows(); ++k) m.coeffRef(k, k) += 1.0;
    m.makeCompressed();
    impl_->lu.analyzePattern(m);
    impl_->lu.factorize(m);
    if (impl_->lu.info() != Eigen::Success) {
        throw solver_error("factorization-failed", "implicit midpoint matrix could not be factorized");
    }
}

CrankNicolson::~CrankNicolson() = default;
CrankNicolson::CrankNicolson(CrankNicolson&&) noexcept = default;
CrankNicolson& CrankNicolson::operator=(CrankNicolson&&) noexcept = default;

Vector CrankNicolson::step(const Vector& y, const Vector& forcing_mid) const {
    Vector rhs = y + (0.5 * dt_) * (impl_->a * y);
    if (forcing_mid.size() != 0) rhs += dt_ * forcing_mid;
    Vector out = impl_->lu.solve(rhs);
    return out;
}

namespace {

RunOptions checked(const RunOptions& o) {
    if (o.stride == 0) throw validation_error("zero-stride", "stride must be at least 1");
    if (o.mode == RunMode::two_sided && !(o.growth_guard > 1.0)) {
        throw validation_error("growth-guard", "two-sided runs need a growth guard G > 1");
    }
    return o;
}

double adjusted_dt(const RunOptions& o) { return 0.5 * o.T / static_cast<double>(half_window_steps(o.T, o.dt)); }

struct Recorder {
    std::size_t stride;
    std::vector<std::pair<long, CoupledState>> kept;
    void keep(long k, const CoupledState& y) {
        if (k % static_cast<long>(stride) == 0) kept.emplace_back(k, y);
    }
};

Trajectory assemble(Recorder& rec, double dt, const RunOptions& o, double kappa, bool wave_only) {
    std::sort(rec.kept.begin(), rec.kept.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    Trajectory tr;
    tr.dt = dt;
    tr.stride = o.stride;
    tr.mode = o.mode;
    tr.kappa = kappa;
    tr.wave_only = wave_only;
    for (std::size_t i = 0; i < rec.kept.size(); ++i) {
        const long k = rec.kept[i].first;
        if (k == 0) tr.center_index = i;
        tr.times.push_back(0.5 * o.T + static_cast<double>(k) * dt);
        tr.states.push_back(std::move(rec.kept[i].second));
    }
    return tr;
}

Vector zt_forcing(Index n, Index m, const Vector& zt_part) {
    Vector out = Vector::Zero(2 * n + 2 * m);
    out.segment(n, n) = zt_part;
    return out;
}

}  // namespace

CoupledIntegrator::CoupledIntegrator(const OperatorBundle& ops, const RunOptions& options)
    : ops_(&ops),
      options_(checked(options)),
      dt_(adjusted_dt(options)),
      half_steps_(half_window_steps(options.T, options.dt)),
      forward_(ops.system_matrix(), adjusted_dt(options)) {
    if (half_steps_ % options_.stride != 0) {
        throw validation_error("stride-mismatch", "stride must divide the number of steps per half window");
    }
    if (options_.mode == RunMode::two_sided) backward_.emplace(ops.system_matrix(), -dt_);
}

Trajectory CoupledIntegrator::run(const SourceSpec* source, const CoupledState& initial) const {
    const OperatorBundle& ops = *ops_;
    ops.check_shape(initial);
    if (!initial.finite()) throw validation_error("nonfinite-initial", "initial state has non-finite entries");
    const Index n = ops.nodes(), m = ops.beam();
    const double tc = 0.5 * options_.T;
    auto forcing_at = [&](double t) -> Vector {
        if (source == nullptr) return Vector();
        return source->forcing(t);
    };

    Recorder rec{options_.stride, {}};
    rec.keep(0, initial);
    double ref = std::sqrt(ops.energy_norm_squared(initial));

    auto march = [&](const CrankNicolson& stepper, int direction, bool guard) {
        Vector y = initial.pack();
        Vector f_prev = forcing_at(tc);
        for (std::size_t k = 0; k < half_steps_; ++k) {
            const double t_next = tc + direction * static_cast<double>(k + 1) * dt_;
            Vector f_next = forcing_at(t_next);
            Vector mid;
            if (source != nullptr) mid = zt_forcing(n, m, 0.5 * (f_prev + f_next));
            y = stepper.step(y, mid);
            f_prev = std::move(f_next);
            CoupledState s = CoupledState::unpack(y, n, m);
            if (!s.finite()) throw solver_error("nonfinite-state", "time stepping produced non-finite values");
            const double norm = std::sqrt(ops.energy_norm_squared(s));
            if (guard) {
                if (ref > 0.0 && norm > options_.growth_guard * ref) {
                    throw solver_error("growth-guard-tripped",
                                       "backward branch exceeded G times the forward-branch peak norm at t = " + std::to_string(t_next));
                }
            } else {
                ref = std::max(ref, norm);
            }
            rec.keep(direction * static_cast<long>(k + 1), s);
        }
    };

    march(forward_, +1, false);
    if (backward_) march(*backward_, -1, true);
    return assemble(rec, dt_, options_, ops.kappa(), false);
}

Trajectory simulate_coupled(const OperatorBundle& ops, const SourceSpec* source, const CoupledState& initial,
                            const RunOptions& options) {
    return CoupledIntegrator(ops, options).run(source, initial);
}

Trajectory simulate_wave(const DomainGeometry& geometry, const Vector& q, const Vector& w0, const Vector& w1,
                         const FluxSeries& flux, const RunOptions& options, const SourceSpec* source) {
    const RunOptions o = checked(options);
    const Index n = static_cast<Index>(geometry.node_count());
    if (w0.size() != n || w1.size() != n) throw validation_error("shape-mismatch", "wave data must cover the grid");
    const Vector qv = q.size() == 0 ? Vector::Zero(n) : q;
    if (qv.size() != n) throw validation_error("shape-mismatch", "potential q must cover the grid");
    const NeumannLaplacian lap(geometry);
    const std::size_t half = half_window_steps(o.T, o.dt);
    if (half % o.stride != 0) {
        throw validation_error("stride-mismatch", "stride must divide the number of steps per half window");
    }
    const double dt = 0.5 * o.T / static_cast<double>(half);

    std::vector<Eigen::Triplet<double>> t;
    for (Index k = 0; k < n; ++k) {
        t.emplace_back(k, n + k, 1.0);
        if (qv[k] != 0.0) t.emplace_back(n + k, k, qv[k]);
    }
    const SparseMatrix& l = lap.matrix().matrix;
    for (Index r = 0; r < l.outerSize(); ++r)
        for (SparseMatrix::InnerIterator it(l, r); it; ++it) t.emplace_back(n + it.row(), it.col(), it.value());
    SparseMatrix gen(2 * n, 2 * n);
    gen.setFromTriplets(t.begin(), t.end());

    const double tc = 0.5 * o.T;
    auto force = [&](double time) -> Vector {
        Vector out = Vector::Zero(n);
        if (flux) out += lap.flux_load(flux(time)).cwiseQuotient(lap.weights());
        if (source != nullptr) out += source->forcing(time);
        return out;
    };
    const bool forced = static_cast<bool>(flux) || source != nullptr;

    Recorder rec{o.stride, {}};
    const Vector empty;
    rec.keep(0, CoupledState{w0, w1, empty, empty});
    const std::vector<int> directions =
        o.mode == RunMode::two_sided ? std::vector<int>{+1, -1} : std::vector<int>{+1};
    for (int direction : directions) {
        const CrankNicolson stepper(gen, direction * dt);
        Vector y(2 * n);
        y << w0, w1;
        Vector f_prev = forced ? force(tc) : Vector();
        for (std::size_t k = 0; k < half; ++k) {
            const double t_next = tc + direction * static_cast<double>(k + 1) * dt;
            Vector mid;
            if (forced) {
                Vector f_next = force(t_next);
                mid = Vector::Zero(2 * n);
                mid.segment(n, n) = 0.5 * (f_prev + f_next);
                f_prev = std::move(f_next);
            }
            y = stepper.step(y, mid);
            if (!y.allFinite()) throw solver_error("nonfinite-state", "wave stepping produced non-finite values");
            rec.keep(direction * static_cast<long>(k + 1), CoupledState{y.head(n), y.tail(n), empty, empty});
        }
    }
    return assemble(rec, dt, o, 0.0, true);
}

Matrix time_derivative(const Matrix& s, double dt) {
    const Index rows = s.rows();
    if (rows < 3) throw validation_error("stride-too-coarse", "need at least three time samples to differentiate");
    Matrix out(rows, s.cols());
    for (Index k = 1; k + 1 < rows; ++k) out.row(k) = (s.row(k + 1) - s.row(k - 1)) / (2.0 * dt);
    out.row(0) = (-3.0 * s.row(0) + 4.0 * s.row(1) - s.row(2)) / (2.0 * dt);
    out.row(rows - 1) = (3.0 * s.row(rows - 1) - 4.0 * s.row(rows - 2) + s.row(rows - 3)) / (2.0 * dt);
    return out;
}

namespace {

TraceSeries finish_traces(std::vector<double> times, Matrix u, Matrix ut, double dt, const ClampedBiharmonic& b) {
    TraceSeries ts;
    ts.times = std::move(times);
    ts.u = std::move(u);
    ts.ut = std::move(ut);
    ts.utt = time_derivative(ts.ut, dt);
    ts.uttt = time_derivative(ts.utt, dt);
    ts.bilap_utt = ts.utt * Matrix(b.matrix().matrix);
    return ts;
}

}  // namespace

TraceSeries extract_traces(const Trajectory& tr, const ClampedBiharmonic& biharmonic) {
    if (tr.wave_only) throw validation_error("no-beam", "wave-only trajectories carry no plate traces");
    if (tr.stride != 1 || tr.size() < 3) {
        throw validation_error("stride-too-coarse", "trace extraction needs full-stride snapshots");
    }
    const Index m = tr.states.front().v.size();
    const Index rows = static_cast<Index>(tr.size());
    Matrix u(rows, m), ut(rows, m);
    for (Index k = 0; k < rows; ++k) {
        u.row(k) = tr.states[static_cast<std::size_t>(k)].v.transpose();
        ut.row(k) = tr.states[static_cast<std::size_t>(k)].vt.transpose();
    }
    return finish_traces(tr.times, std::move(u), std::move(ut), tr.dt, biharmonic);
}

TraceSeries traces_from_displacement(const std::vector<double>& times, const Matrix& u,
                                     const ClampedBiharmonic& biharmonic) {
    if (times.size() < 3 || static_cast<Index>(times.size()) != u.rows()) {
        throw validation_error("stride-too-coarse", "need at least three matching time samples");
    }
    const double dt = times[1] - times[0];
    Matrix ut = time_derivative(u, dt);
    return finish_traces(times, u, std::move(ut), dt, biharmonic);
}

EnergySeries energy(const Trajectory& tr, const OperatorBundle& ops) {
    EnergySeries e;
    const NeumannLaplacian& lap = ops.laplacian();
    const Vector& w = lap.weights();
    const Vector bw = ops.geometry().beam_weights();
    for (std::size_t k = 0; k < tr.size(); ++k) {
        const CoupledState& y = tr.states[k];
        const double grad = lap.dirichlet_energy(y.z);
        const double kinetic = y.zt.cwiseProduct(y.zt).dot(w);
        e.times.push_back(tr.times[k]);
        e.wave.push_back(y.z.cwiseProduct(y.z).dot(w) + kinetic + grad);
        double plate = 0.0;
        if (y.v.size() != 0) plate = ops.biharmonic().bending_energy(y.v) + y.vt.cwiseProduct(y.vt).dot(bw);
        e.plate.push_back(plate);
        e.conserved.push_back(grad + kinetic + plate);
    }
    return e;
}

Trajectory differentiate_system_in_time(const Trajectory& tr, int order) {
    if (order < 1 || order > 2) throw validation_error("invalid-order", "time derivative order must be 1 or 2");
    if (tr.size() < 4) throw validation_error("stride-too-coarse", "need at least four snapshots");
    const Index n = tr.states.front().z.size(), m = tr.states.front().v.size();
    const double dt = tr.snapshot_dt();
    const std::size_t last = tr.size() - 1;
    std::vector<Vector> p;
    p.reserve(tr.size());
    for (const auto& s : tr.states) p.push_back(s.pack());

    Trajectory out = tr;
    for (std::size_t k = 0; k <= last; ++k) {
        Vector d;
        if (order == 1) {
            if (k == 0) d = (-3.0 * p[0] + 4.0 * p[1] - p[2]) / (2.0 * dt);
            else if (k == last) d = (3.0 * p[last] - 4.0 * p[last - 1] + p[last - 2]) / (2.0 * dt);
            else d = (p[k + 1] - p[k - 1]) / (2.0 * dt);
        } else {
            if (k == 0) d = (2.0 * p[0] - 5.0 * p[1] + 4.0 * p[2] - p[3]) / (dt * dt);
            else if (k == last) d = (2.0 * p[last] - 5.0 * p[last - 1] + 4.0 * p[last - 2] - p[last - 3]) / (dt * dt);
            else d = (p[k + 1] - 2.0 * p[k] + p[k - 1]) / (dt * dt);
        }
        out.states[k] = CoupledState::unpack(d, n, m);
    }
    return out;
}

double initial_time_identity_error(const Trajectory& tr, const SourceSpec& source, const Vector& weights) {
    const Trajectory wbar = differentiate_system_in_time(tr, 1);
    const Trajectory wbar_tt = differentiate_system_in_time(wbar, 2);
    const std::size_t c = tr.center_index;
    const Vector expected = source.f.cwiseProduct(source.R->eval(tr.times[c], 1));
    const Vector diff = wbar_tt.states[c].z - expected;
    const double denom = std::sqrt(expected.cwiseProduct(expected).dot(weights));
    if (denom == 0.0) throw validation_error("degenerate-source", "f R_t vanishes at the initial time");
    return std::sqrt(diff.cwiseProduct(diff).dot(weights)) / denom;
}

}  // namespace sail
