#pragma once

#include "sail/inverse.hpp"

namespace sail {

/// Gaussian source bump centred at (0.55, 0.45) with width 0.2.
Vector reference_source(const DomainGeometry& geometry);

/// (1 - r²/0.35²)² around (0.45, 0.55), zero outside; peak `amplitude`.
Vector potential_bump(const DomainGeometry& geometry, double amplitude);

/// q = 0, R = 1 + (t - T/2), forward-only κ = 1 window.
ForwardMapConfig reference_map_config(const DomainGeometry& geometry, double T = 4.6);

/// Cubic bump of radius 0.3 at the centre with R = 1 + (t - T/2); the
/// standard trajectory for the weighted-estimate scan.
SourceSpec carleman_reference_source(const DomainGeometry& geometry, double T);

struct CarlemanRun {
    AssumptionReport assumptions;
    CarlemanParams params;
    CarlemanReport report;
};

/// Two-sided linear-system run with q = 0 and the given κ, scanned over the
/// default τ grid (or `tau_grid` when non-empty).
CarlemanRun standard_carleman_scan(const DomainGeometry& geometry, Point x0, double T, double dt, double sigma,
                                   double kappa = 0.0, const std::vector<double>& tau_grid = {},
                                   const CarlemanOptions& options = {});

/// z0 = 1 + 0.3 cos(πx) cos(πy), z1 = 1, beam at rest; s0 = s1 = 0.5.
NonlinearSetup reference_nonlinear_setup(const DomainGeometry& geometry, double T = 4.6);

}  // namespace sail
