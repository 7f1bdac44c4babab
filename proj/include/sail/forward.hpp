#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sail/operators.hpp"

namespace sail {

/// Closed-form time factor in s = t - center: a polynomial, or
/// offset + amplitude * sin(omega * s + phase). Derivatives are exact.
struct TimeProfile {
    enum class Kind { polynomial, trig };
    Kind kind = Kind::polynomial;
    std::vector<double> coeffs{1.0};
    double offset = 0.0;
    double amplitude = 0.0;
    double omega = 0.0;
    double phase = 0.0;
    double center = 0.0;

    static TimeProfile constant(double c);
    /// c0 + c1 (t - center) + c2 (t - center)^2 + ...
    static TimeProfile polynomial(std::vector<double> coeffs, double center);
    static TimeProfile trig(double offset, double amplitude, double omega, double phase, double center);

    double eval(double t, int derivative = 0) const;
};

/// R(x, t) and its time derivatives on the grid nodes.
class SourceProfile {
public:
    virtual ~SourceProfile() = default;
    virtual Vector eval(double t, int derivative = 0) const = 0;
    virtual Eigen::Index nodes() const = 0;
};

class SeparableProfile final : public SourceProfile {
public:
    SeparableProfile(Vector spatial, TimeProfile time);
    Vector eval(double t, int derivative = 0) const override;
    Eigen::Index nodes() const override { return spatial_.size(); }

private:
    Vector spatial_;
    TimeProfile time_;
};

/// Snapshot-based profile on a uniform time grid, linearly interpolated.
/// Derivatives use centered differences of the snapshots.
class SampledProfile final : public SourceProfile {
public:
    SampledProfile(double t0, double dt, std::vector<Vector> snapshots);
    Vector eval(double t, int derivative = 0) const override;
    Eigen::Index nodes() const override;

private:
    Vector at_index(long k, int derivative) const;
    double t0_;
    double dt_;
    std::vector<Vector> snaps_;
};

struct SourceSpec {
    Vector f;
    std::shared_ptr<const SourceProfile> R;
    double r0 = 0.0;
    double r1 = 0.0;
    bool check_bounds = false;

    Vector forcing(double t) const { return f.cwiseProduct(R->eval(t)); }
};

struct BoundsReport {
    double min_abs_R = 0.0;
    double min_abs_Rt = 0.0;
    bool pass = true;
};

/// Checks |R(x, t_c)| >= r0 and |R_t(x, t_c)| >= r1 at every node.
BoundsReport check_source_bounds(const SourceSpec& source, double t_center);

enum class RunMode { two_sided, forward_only };

std::string to_string(RunMode mode);

struct RunOptions {
    double T = 4.6;
    double dt = 1.0 / 256.0;
    RunMode mode = RunMode::forward_only;
    double growth_guard = 1e6;
    std::size_t stride = 1;
};

struct Trajectory {
    std::vector<double> times;
    std::vector<CoupledState> states;
    double dt = 0.0;
    std::size_t stride = 1;
    std::size_t center_index = 0;
    RunMode mode = RunMode::forward_only;
    double kappa = 0.0;
    std::string scheme = "crank-nicolson";
    bool wave_only = false;

    std::size_t size() const { return states.size(); }
    double snapshot_dt() const { return dt * static_cast<double>(stride); }
};

/// Number of steps across half the window; dt is shrunk so that it divides
/// T/2 exactly.
std::size_t half_window_steps(double T, double dt);

/// Implicit midpoint step for y' = A y + F on packed states.
class CrankNicolson {
public:
    CrankNicolson(const SparseMatrix& generator, double dt);
    ~CrankNicolson();
    CrankNicolson(CrankNicolson&&) noexcept;
    CrankNicolson& operator=(CrankNicolson&&) noexcept;

    /// forcing_mid is the average of F at both ends of the step.
    Vector step(const Vector& y, const Vector& forcing_mid) const;
    double dt() const noexcept { return dt_; }

private:
    struct Impl;
    double dt_;
    std::unique_ptr<Impl> impl_;
};

/// Prefactorized steppers shared by many runs of one configuration.
class CoupledIntegrator {
public:
    CoupledIntegrator(const OperatorBundle& ops, const RunOptions& options);

    const OperatorBundle& ops() const noexcept { return *ops_; }
    const RunOptions& options() const noexcept { return options_; }
    double dt() const noexcept { return dt_; }
    std::size_t half_steps() const noexcept { return half_steps_; }

    Trajectory run(const SourceSpec* source, const CoupledState& initial) const;

private:
    const OperatorBundle* ops_;
    RunOptions options_;
    double dt_;
    std::size_t half_steps_;
    CrankNicolson forward_;
    std::optional<CrankNicolson> backward_;
};

Trajectory simulate_coupled(const OperatorBundle& ops, const SourceSpec* source, const CoupledState& initial,
                            const RunOptions& options);

/// Flux on every gamma0 polyline node at time t.
using FluxSeries = std::function<Vector(double)>;

/// Pure wave system with prescribed gamma0 flux and zero flux on gamma1,
/// started at T/2 and run in the requested mode. Beam components of the
/// stored states are empty.
Trajectory simulate_wave(const DomainGeometry& geometry, const Vector& q, const Vector& w0, const Vector& w1,
                         const FluxSeries& flux, const RunOptions& options, const SourceSpec* source = nullptr);

struct TraceSeries {
    std::vector<double> times;
    /// rows are time samples, columns beam interior nodes
    Matrix u, ut, utt, uttt, bilap_utt;
    std::string provenance = "simulated";
};

/// u from the beam snapshots, u_t from the stored v_t, then u_tt and u_ttt by
/// centered differencing and the clamped biharmonic of u_tt.
TraceSeries extract_traces(const Trajectory& trajectory, const ClampedBiharmonic& biharmonic);

/// The same chain starting from displacement samples only.
TraceSeries traces_from_displacement(const std::vector<double>& times, const Matrix& u,
                                     const ClampedBiharmonic& biharmonic);

/// Centered first derivative along rows, second-order one-sided at the ends.
Matrix time_derivative(const Matrix& samples, double dt);

struct EnergySeries {
    std::vector<double> times;
    std::vector<double> wave;       ///< int w^2 + w_t^2 + |grad w|^2
    std::vector<double> plate;      ///< int (v'')^2 + v_t^2
    std::vector<double> conserved;  ///< the quadratic invariant at kappa = 0, q = 0
};

EnergySeries energy(const Trajectory& trajectory, const OperatorBundle& ops);

/// Centered time differences of every state component (order 1 or 2).
Trajectory differentiate_system_in_time(const Trajectory& trajectory, int order);

/// ||wbar_tt(T/2) - f R_t(T/2)|| / ||f R_t(T/2)|| on a zero-data linear run.
double initial_time_identity_error(const Trajectory& trajectory, const SourceSpec& source, const Vector& weights);

}  // namespace sail
