#pragma once

#include <array>
#include <functional>
#include <optional>
#include <vector>

#include "sail/forward.hpp"
#include "sail/geometry.hpp"

namespace sail {

/// A wave solution sampled on the full space-time grid, together with the
/// right-hand side F of w_tt - Δw - q w = F and the normal derivative on
/// the gamma0 polyline (the flux on gamma1 is zero in the model).
struct WaveField {
    std::vector<double> times;
    std::vector<Vector> w, wt, F, flux;

    std::size_t size() const { return times.size(); }
};

/// w = z, w_t = z_t of a pure wave run. `flux` and `source` must be the
/// ones the run was driven with (either may be empty).
WaveField wave_field(const Trajectory& wave, const DomainGeometry& geometry, const FluxSeries& flux,
                     const SourceSpec* source);

/// wbar = z_t of a coupled linear-system run with source f R. Then
/// wbar_t = z_tt is read off the generator, F = f R_t, and the gamma0 flux
/// is v_tt (zero at the clamps).
WaveField linear_system_field(const Trajectory& coupled, const OperatorBundle& ops, const SourceSpec& source);

struct CarlemanRecord {
    double tau = 0.0;
    double grad = 0.0;    ///< ∫_Q e^{2τφ}(w_t² + |∇w|²)
    double qsigma = 0.0;  ///< ∫_{Q(σ)} e^{2τφ} w²
    std::array<double, 5> bt{};
    double rhs_f = 0.0;         ///< 2∫_Q e^{2τφ} F²
    double rhs_lot = 0.0;       ///< e^{2τσ} ∫_Q w², before the constant C1
    double rhs_endpoint = 0.0;  ///< τ³ e^{-2τδ} [E(0) + E(T)], before c_T
    double margin = 0.0;

    double bt_total() const { return bt[0] + bt[1] + bt[2] + bt[3] + bt[4]; }
};

/// Every term of the weighted estimate at one τ, by trapezoidal space-time
/// quadrature. The mask must live on the field's time grid.
CarlemanRecord carleman_sides(const DomainGeometry& geometry, const ConvexWeight& weight,
                              const CarlemanParams& params, const WaveField& field, const RegionMask& mask,
                              double tau);

/// Largest τ for which e^{2τφ} stays inside double range.
double tau_overflow_cap(const DomainGeometry& geometry, const ConvexWeight& weight, const CarlemanParams& params);

struct CarlemanOptions {
    double epsilon = 0.1;
    double rho = 2.0;
    double fit_min_tau = 1.0;
    double c1 = 1.0;
    double c_t = 1.0;
    double cap_t = 0.0;
};

struct CarlemanReport {
    std::vector<CarlemanRecord> records;
    std::vector<double> dropped_taus;  ///< grid points above the overflow cap
    double tau_cap = 0.0;
    bool degenerate = false;  ///< w ≡ 0: nothing to fit
    double slope = 0.0;       ///< log-log slope of the admissible Q(σ) coefficient
    double r_squared = 0.0;
    double beta_hat = 0.0;
    double epsilon = 0.0;
    double rho = 0.0;
    double c1 = 0.0;
    double c_t = 0.0;
    double cap_t = 0.0;
    std::optional<double> tau_star;
    bool endpoint_decreasing = true;

    bool fit_ok() const { return degenerate || r_squared >= 0.99; }
    bool exists() const { return tau_star.has_value(); }
};

/// The admissible coefficient of the Q(σ) term: what remains of the
/// boundary, source, lower-order and endpoint terms per unit of
/// ∫_{Q(σ)} e^{2τφ} w².
double admissible_qsigma_coefficient(const CarlemanRecord& r, const CarlemanOptions& options);

CarlemanReport carleman_scan(const DomainGeometry& geometry, const ConvexWeight& weight,
                             const CarlemanParams& params, const WaveField& field, const RegionMask& mask,
                             const CarlemanOptions& options = {});

/// Space functions are (x, y); the flux g is (arclength, t) on gamma0.
using SpaceFunction = std::function<double(double, double)>;

struct ObservationSample {
    SpaceFunction w0;
    SpaceFunction w1;
    SpaceFunction g;
};

/// Random smooth initial data and gamma0 fluxes with a few spatial and
/// temporal modes.
std::vector<ObservationSample> random_observation_ensemble(std::uint64_t seed, std::size_t count, double lx,
                                                           double ly);

struct ObservabilityOptions {
    double dt = 1.0 / 256.0;
    bool refine = true;
    double growth_guard = 1e6;
};

struct ObservabilityRatio {
    double initial = 0.0;   ///< ||w0||²_{H¹} + ||w1||²
    double observed = 0.0;  ///< ∫∫_{Γ0} w² + w_t² + g²
    double ratio = 0.0;
    double n_T = 0.0;  ///< 2∫∫_Γ|∂_ν w w_t| + 2∫∫_{Γ0}|w w_t|
};

struct ObservabilityReport {
    int nx = 0;
    int ny = 0;
    double T = 0.0;
    std::vector<ObservabilityRatio> samples;
    double c_hat = 0.0;
    std::vector<ObservabilityRatio> refined_samples;
    double refined_c_hat = 0.0;
    double refinement_change = 0.0;  ///< |Ĉ_fine / Ĉ - 1|

    bool finite() const;
};

/// Two-sided wave runs from T/2, one per sample. Rejects T <= T_min.
ObservabilityReport observability_estimate(const DomainGeometry& geometry, const SpaceFunction& q,
                                           const AssumptionReport& assumptions, double T,
                                           const std::vector<ObservationSample>& ensemble,
                                           const ObservabilityOptions& options = {});

struct NormEquivalence {
    std::vector<double> ratios;
    double k1 = 0.0;
    double k2 = 0.0;

    bool pass() const { return k1 > 0.0 && k1 <= k2 && std::isfinite(k2); }
};

/// (∫|∇u|² + ∫_{Γ0} u²) / (∫u² + |∇u|²) for one field.
double norm_equivalence_ratio(const DomainGeometry& geometry, const Vector& u);

NormEquivalence norm_equivalence_probe(const DomainGeometry& geometry, const std::vector<Vector>& ensemble);

}  // namespace sail
