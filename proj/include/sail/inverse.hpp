#pragma once

#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sail/forward.hpp"
#include "sail/verify.hpp"

namespace sail {

/// Observation window of the linear system. The default is the honest
/// damped one: forward from T/2 to T with κ = 1. The sensor records u every
/// `stride` steps and u_t, u_tt, u_ttt are differenced at that rate.
struct ObservationWindow {
    double T = 4.6;
    double dt = 1.0 / 256.0;
    RunMode mode = RunMode::forward_only;
    double kappa = 1.0;
    std::size_t stride = 8;
};

/// Everything the linear map f -> u_tt|Γ0 depends on, bound to one grid.
struct ForwardMapConfig {
    DomainGeometry geometry;
    Vector q;
    std::shared_ptr<const SourceProfile> R;
    std::string r_label;
    ObservationWindow window;

    /// SHA-256 over the grid, window, q and R sampled on the step times.
    std::string hash() const;
};

/// Builds a config for the same problem on another grid (refinement probes).
using ConfigFactory = std::function<ForwardMapConfig(const DomainGeometry&)>;

/// R(x, t) = 1 + (t - T/2): |R| = 1 and |R_t| = 1 at T/2.
std::shared_ptr<const SourceProfile> affine_time_profile(const DomainGeometry& geometry, double T);

/// Displacement traces of the linear system driven by f R with zero data,
/// at the sensor rate; u_t, u_tt, u_ttt by differencing u, as for measured
/// data.
TraceSeries simulate_traces(const ForwardMapConfig& config, const Vector& f);

/// u_tt stacked time-major: entry r * beam + j is sample r at beam node j.
Vector stack_observation(const TraceSeries& traces);

Vector simulate_observation(const ForwardMapConfig& config, const Vector& f);

struct ForwardMap {
    Matrix matrix;
    std::vector<std::size_t> unknowns;  ///< interior nodes, column order
    std::vector<double> times;          ///< sensor sample times
    Eigen::Index beam = 0;
    std::size_t node_count = 0;
    Vector node_weights;
    std::size_t stride = 1;
    double dt = 0.0;  ///< sensor sample spacing
    std::string config_hash;
    std::string q_hash;
    std::string r_label;
    ObservationWindow window;
    bool from_cache = false;

    Vector apply(const Vector& coeffs) const { return matrix * coeffs; }
    Vector adjoint(const Vector& b) const { return matrix.transpose() * b; }
    /// Coefficients on the unknowns to a full grid field (zero on the boundary).
    Vector embed(const Vector& coeffs) const;
    Vector restrict_field(const Vector& field) const;
};

inline constexpr std::size_t max_map_unknowns = 2000;

/// One simulation per interior node. With a cache directory the matrix is
/// stored as <hash>.saif and reloaded when the configuration matches.
ForwardMap assemble_forward_map(const ForwardMapConfig& config, const std::filesystem::path& cache_dir = {});

struct InjectivityReport {
    Vector singular_values;
    Eigen::Index rank = 0;
    double threshold = 0.0;
    double smallest = 0.0;
    Eigen::Index unknowns = 0;

    bool full_rank() const { return unknowns > 0 && rank == unknowns; }
};

InjectivityReport injectivity_diagnostics(const ForwardMap& map, double relative_threshold = 1e-10);

/// Thin SVD of the map, kept for repeated solves.
class MapSolver {
public:
    explicit MapSolver(const ForwardMap& map);

    const ForwardMap& map() const noexcept { return *map_; }
    const Matrix& U() const noexcept { return u_; }
    const Vector& sigma() const noexcept { return s_; }
    const Matrix& V() const noexcept { return v_; }

    Vector tikhonov(const Vector& b, double alpha) const;
    /// ||P(M f_α - b)|| with P the projector onto the range of M.
    double projected_residual(const Vector& b, double alpha) const;
    /// Expected ||P n_tt|| for i.i.d. N(0, σ_u²) noise on every u sample,
    /// pushed through the same differencing as the data.
    double projected_noise(double sigma_u) const;
    /// Per range component, the standard deviation of u_iᵀ n_tt at σ_u = 1.
    const Vector& component_noise() const;

private:
    const ForwardMap* map_;
    Matrix u_;
    Vector s_;
    Matrix v_;
    mutable std::optional<Vector> unit_noise_;
};

enum class InversionMethod { tikhonov_svd, cgne };

std::string to_string(InversionMethod method);
InversionMethod inversion_method_from_string(const std::string& name);

struct ReconstructOptions {
    InversionMethod method = InversionMethod::tikhonov_svd;
    double alpha = 1e-10;
    /// Standard deviation of the declared noise on u; enables the
    /// discrepancy principle on the range components of the map, each
    /// scaled by its own noise level.
    std::optional<double> noise_sigma;
    double discrepancy_factor = 1.1;
    int max_iterations = 2000;
    double cg_tolerance = 1e-14;
    bool sweep = false;
    /// Ground truth on the full grid, for the error column of the sweep.
    std::optional<Vector> truth;
};

struct SweepRow {
    double alpha = 0.0;
    double residual = 0.0;
    double rel_error = std::numeric_limits<double>::quiet_NaN();
};

struct InversionResult {
    Vector f;
    Vector coeffs;
    double alpha = 0.0;
    double residual = 0.0;
    double projected_residual = 0.0;
    double noise_level = 0.0;
    std::optional<double> rel_error;
    int iterations = 0;
    InversionMethod method = InversionMethod::tikhonov_svd;
    bool discrepancy = false;
    std::vector<SweepRow> sweep;
};

/// ||a - b|| / ||b|| in L²(Ω) with trapezoid weights.
double relative_l2_error(const DomainGeometry& geometry, const Vector& estimate, const Vector& truth);

InversionResult reconstruct_f(const MapSolver& solver, const Vector& observation, const ReconstructOptions& options);

/// Gaussian noise on u with σ = level · rms(u); derivatives are recomputed
/// from the noisy displacement. Returns σ through `sigma`.
TraceSeries add_trace_noise(const TraceSeries& clean, const ClampedBiharmonic& biharmonic, double level,
                            std::uint64_t seed, double* sigma = nullptr);

struct StabilityRatio {
    double f_norm = 0.0;
    double utt = 0.0;
    double uttt = 0.0;
    double bilap_utt = 0.0;
    double ratio = 0.0;
};

struct StabilityProbeReport {
    int nx = 0;
    int ny = 0;
    std::vector<StabilityRatio> samples;
    double c_stab = 0.0;
    std::vector<StabilityRatio> refined_samples;
    double refined_c_stab = 0.0;
    double refinement_change = 0.0;
    std::optional<double> smallest_singular_value;
    std::optional<Eigen::Index> rank;

    bool finite() const;
};

/// ||f|| / (||u_tt|| + ||u_ttt|| + ||Δ²u_tt||) over Γ0 and the window.
StabilityRatio stability_ratio(const ForwardMapConfig& config, const Vector& f);

/// Random smooth fields followed by localized bumps.
std::vector<SpaceFunction> stability_ensemble(std::uint64_t seed, std::size_t smooth, std::size_t bumps, double lx,
                                              double ly);

StabilityProbeReport stability_probe(const ConfigFactory& setup, const DomainGeometry& geometry,
                                     const std::vector<SpaceFunction>& ensemble, bool refine,
                                     const InjectivityReport* injectivity = nullptr);

struct PsiYReport {
    double additivity_error = 0.0;  ///< ||wbar - (ψ + y)|| / ||wbar|| over Q
    double wbar_norm = 0.0;
    Vector k_singular_values;
    Vector k1_singular_values;
    double k_decay = 0.0;  ///< σ_20 / σ_1 of K
    double k1_decay = 0.0;
    int basis_size = 0;
};

struct PsiYOptions {
    int basis_nodes = 7;  ///< bilinear hats on a basis_nodes² coarse grid
    bool operators = true;
};

/// ψ: wave with gamma0 flux u_tt and data (0, f R(T/2)); y: zero-flux wave
/// with source f R_t and zero data; both on the config's window.
PsiYReport psi_y_split(const ForwardMapConfig& config, const Vector& f, const PsiYOptions& options = {});

/// Bilinear hat functions on a coarse n x n grid, sampled on the fine grid.
std::vector<Vector> hat_basis(const DomainGeometry& geometry, int n);

struct NonlinearSetup {
    DomainGeometry geometry;
    ObservationWindow window;
    CoupledState initial;
    double s0 = 0.0;
    double s1 = 0.0;
};

struct RecoverOptions {
    int max_iterations = 8;
    double alpha = 1e-6;
    double tolerance = 1e-8;  ///< stop when ||f_k|| <= tolerance (1 + ||p_k||)
    std::filesystem::path cache_dir;
};

struct RecoverHistoryRow {
    int iteration = 0;
    double residual = 0.0;
    double update_norm = 0.0;
    double rel_error = std::numeric_limits<double>::quiet_NaN();
};

struct RecoverResult {
    Vector q;
    std::vector<RecoverHistoryRow> history;
    bool converged = false;
    bool data_warning = false;  ///< initial data violate |z0| >= s0 or |z1| >= s1
};

/// Raised by recover_q; keeps the history up to the failing iteration.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& message, std::vector<RecoverHistoryRow> history)
        : Error(ErrorKind::solver, "divergence", message), history_(std::move(history)) {}
    const std::vector<RecoverHistoryRow>& history() const noexcept { return history_; }

private:
    std::vector<RecoverHistoryRow> history_;
};

/// Observed u_tt traces of the nonlinear system with potential q.
Vector nonlinear_observation(const NonlinearSetup& setup, const Vector& q);

/// Frozen-point linearization: at p_k, R = z(p_k) and the map is
/// assembled with potential p_k; p_{k+1} = p_k + f_k.
RecoverResult recover_q(const NonlinearSetup& setup, const Vector& observation, const Vector& p0,
                        const RecoverOptions& options = {}, const Vector* truth = nullptr);

}  // namespace sail
