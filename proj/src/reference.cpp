#include "sail/reference.hpp"

#include <cmath>
#include <numbers>

namespace sail {

Vector reference_source(const DomainGeometry& geometry) {
    return FieldOmega::sample(geometry, [](double x, double y) {
               const double r2 = (x - 0.55) * (x - 0.55) + (y - 0.45) * (y - 0.45);
               return std::exp(-r2 / 0.04);
           })
        .values;
}

Vector potential_bump(const DomainGeometry& geometry, double amplitude) {
    return FieldOmega::sample(geometry, [amplitude](double x, double y) {
               const double d = ((x - 0.45) * (x - 0.45) + (y - 0.55) * (y - 0.55)) / 0.1225;
               return d < 1.0 ? amplitude * (1.0 - d) * (1.0 - d) : 0.0;
           })
        .values;
}

ForwardMapConfig reference_map_config(const DomainGeometry& geometry, double T) {
    ForwardMapConfig c{geometry, Vector::Zero(static_cast<Eigen::Index>(geometry.node_count())),
                       affine_time_profile(geometry, T), "1+(t-T/2)", {}};
    c.window.T = T;
    return c;
}

SourceSpec carleman_reference_source(const DomainGeometry& geometry, double T) {
    SourceSpec s;
    s.f = FieldOmega::sample(geometry, [](double x, double y) {
              const double d = ((x - 0.5) * (x - 0.5) + (y - 0.5) * (y - 0.5)) / 0.09;
              return d < 1.0 ? std::pow(1.0 - d, 3) : 0.0;
          }).values;
    s.R = affine_time_profile(geometry, T);
    s.r0 = s.r1 = 1.0;
    return s;
}

CarlemanRun standard_carleman_scan(const DomainGeometry& geometry, Point x0, double T, double dt, double sigma,
                                   double kappa, const std::vector<double>& tau_grid,
                                   const CarlemanOptions& options) {
    CarlemanRun run;
    const ConvexWeight weight = eval_weight(geometry, x0);
    run.assumptions = verify_assumptions(geometry, weight);
    run.params = select_time_params(weight, run.assumptions, T);
    if (!tau_grid.empty()) run.params.tau_grid = tau_grid;
    const OperatorBundle ops(geometry, Vector(), kappa);
    const SourceSpec src = carleman_reference_source(geometry, T);
    RunOptions o;
    o.T = T;
    o.dt = dt;
    o.mode = RunMode::two_sided;
    const Trajectory tr = simulate_coupled(ops, &src, CoupledState::zeros(geometry), o);
    const WaveField field = linear_system_field(tr, ops, src);
    const SigmaWindow win = locate_sigma_window(geometry, weight, run.params, sigma, field.size() - 1);
    run.report = carleman_scan(geometry, weight, run.params, field, win.mask, options);
    return run;
}

NonlinearSetup reference_nonlinear_setup(const DomainGeometry& geometry, double T) {
    NonlinearSetup s{geometry, {}, CoupledState::zeros(geometry), 0.5, 0.5};
    s.window.T = T;
    s.initial.z = FieldOmega::sample(geometry, [](double x, double y) {
                      return 1.0 + 0.3 * std::cos(std::numbers::pi * x) * std::cos(std::numbers::pi * y);
                  }).values;
    s.initial.zt.setOnes();
    return s;
}

}  // namespace sail
