#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "sail/common.hpp"

namespace sail {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

enum class BoundaryPart : std::uint8_t { gamma0, gamma1 };

/// One node of one boundary edge. Corner nodes appear once per adjacent
/// edge, each with its own outward normal and half a trapezoid weight, so
/// summing `weight * g(node)` over the facets of a part is the trapezoidal
/// rule for the boundary integral of g over that part.
struct BoundaryFacet {
    std::size_t node = 0;
    int i = 0;
    int j = 0;
    double normal_x = 0.0;
    double normal_y = 0.0;
    double weight = 0.0;
    BoundaryPart part = BoundaryPart::gamma0;
};

/// Rectangle [0,Lx]x[0,Ly] on a uniform node grid. The bottom edge is the
/// rigid wall (gamma1); left, top and right edges form the flexible plate
/// (gamma0), walked by arclength from (0,0) up, across, and down to (Lx,0).
class DomainGeometry {
public:
    DomainGeometry(int nx, int ny, double lx, double ly);

    int nx() const noexcept { return nx_; }
    int ny() const noexcept { return ny_; }
    double lx() const noexcept { return lx_; }
    double ly() const noexcept { return ly_; }
    double hx() const noexcept { return hx_; }
    double hy() const noexcept { return hy_; }

    std::size_t node_count() const noexcept { return static_cast<std::size_t>(nx_) * ny_; }
    std::size_t node(int i, int j) const noexcept { return static_cast<std::size_t>(j) * nx_ + i; }
    int node_i(std::size_t n) const noexcept { return static_cast<int>(n % nx_); }
    int node_j(std::size_t n) const noexcept { return static_cast<int>(n / nx_); }
    Point point(std::size_t n) const noexcept { return {node_i(n) * hx_, node_j(n) * hy_}; }
    bool on_boundary(std::size_t n) const noexcept;

    /// Gamma0 polyline nodes in arclength order, clamp points included.
    const std::vector<std::size_t>& gamma0_nodes() const noexcept { return gamma0_; }
    const std::vector<double>& arclength() const noexcept { return arclength_; }
    double beam_length() const noexcept { return 2.0 * ly_ + lx_; }
    std::size_t beam_nodes() const noexcept { return gamma0_.size(); }
    /// Beam unknowns: polyline nodes minus the two clamp points.
    std::size_t beam_interior_count() const noexcept { return gamma0_.size() - 2; }
    std::array<std::size_t, 2> clamp_points() const noexcept { return {gamma0_.front(), gamma0_.back()}; }
    bool uniform_beam_spacing() const noexcept;
    double beam_spacing() const;

    /// Bottom-edge nodes, left to right.
    const std::vector<std::size_t>& gamma1_nodes() const noexcept { return gamma1_; }
    const std::vector<BoundaryFacet>& facets() const noexcept { return facets_; }
    /// Nodes not on the boundary, row-major.
    const std::vector<std::size_t>& interior_nodes() const noexcept { return interior_; }

    /// Trapezoidal quadrature weights over the closed rectangle.
    const Vector& node_weights() const noexcept { return weights_; }
    /// Trapezoidal weights on the beam interior nodes (clamp ends carry zero).
    Vector beam_weights() const;
    /// Trapezoidal weights on all gamma0 polyline nodes.
    Vector polyline_weights() const;

    /// Position of a node along the gamma0 polyline, or -1 when off gamma0.
    long gamma0_index(std::size_t n) const noexcept { return gamma0_index_[n]; }

    bool same_shape(const DomainGeometry& other) const noexcept;

private:
    int nx_;
    int ny_;
    double lx_;
    double ly_;
    double hx_;
    double hy_;
    std::vector<std::size_t> gamma0_;
    std::vector<double> arclength_;
    std::vector<std::size_t> gamma1_;
    std::vector<std::size_t> interior_;
    std::vector<BoundaryFacet> facets_;
    std::vector<long> gamma0_index_;
    Vector weights_;
};

DomainGeometry build_reference_domain(int nx, int ny, double lx, double ly);

/// d(x) = |x - x0|^2 with gradient h = 2(x - x0) and Hessian 2I.
struct ConvexWeight {
    Point x0;

    double d(Point p) const noexcept {
        const double dx = p.x - x0.x, dy = p.y - x0.y;
        return dx * dx + dy * dy;
    }
    Point h(Point p) const noexcept { return {2.0 * (p.x - x0.x), 2.0 * (p.y - x0.y)}; }
    std::array<double, 4> hessian(Point) const noexcept { return {2.0, 0.0, 0.0, 2.0}; }
    double laplacian() const noexcept { return 4.0; }
};

/// Validated construction: rejects anchors on the closed rectangle.
ConvexWeight eval_weight(const DomainGeometry& geometry, Point x0);

struct AssumptionReport {
    double rho = 0.0;
    double s = 0.0;
    double max_d = 0.0;
    double min_d = 0.0;
    double max_h_dot_nu_gamma1 = 0.0;
    double tolerance = 1e-12;
    bool convexity_ok = false;
    bool no_critical_point_ok = false;
    bool gamma1_orthogonality_ok = false;
    bool anchor_on_hyperplane = false;

    bool all_pass() const noexcept {
        return convexity_ok && no_critical_point_ok && gamma1_orthogonality_ok;
    }
};

/// Extrema are taken on the solver grid; `refine` > 1 subdivides each cell
/// for oracle cross-checks.
AssumptionReport verify_assumptions(const DomainGeometry& geometry, const ConvexWeight& weight,
                                    int refine = 1);

double min_observation_time(const AssumptionReport& report);

struct CarlemanParams {
    Point x0;
    double T = 0.0;
    double c = 0.0;
    double delta = 0.0;
    double sigma = 0.0;
    double t0 = 0.0;
    double t1 = 0.0;
    double k = 0.5;
    double alpha = 0.0;
    double laplacian_d = 4.0;
    double max_d = 0.0;
    double min_d = 0.0;
    std::vector<double> tau_grid{0.5, 1.0, 2.0, 4.0, 8.0, 16.0};
};

/// Midpoint rule for (delta, c); also fills k = 1/2, alpha, and the default
/// sigma window (sigma = min_d / 2).
CarlemanParams select_time_params(const ConvexWeight& weight, const AssumptionReport& report,
                                  double T);

inline double phi(const ConvexWeight& weight, Point p, double t, const CarlemanParams& params) {
    const double s = t - 0.5 * params.T;
    return weight.d(p) - params.c * s * s;
}

/// Indicator of Q(sigma) on the space-time grid t_n = n * dt, n = 0..steps.
struct RegionMask {
    std::size_t steps = 0;
    std::size_t nodes = 0;
    double dt = 0.0;
    double dx = 0.0;
    double dy = 0.0;
    std::vector<std::uint8_t> inside;

    bool at(std::size_t n, std::size_t node) const { return inside[n * nodes + node] != 0; }
};

struct SigmaWindow {
    double sigma = 0.0;
    double t0 = 0.0;
    double t1 = 0.0;
    RegionMask mask;
};

/// Throws sigma-too-large when sigma >= min_d. Updates params.sigma/t0/t1.
SigmaWindow locate_sigma_window(const DomainGeometry& geometry, const ConvexWeight& weight,
                                CarlemanParams& params, double sigma, std::size_t steps);

/// True when every grid point with t in [t0,t1] is masked (all masked points
/// lie in [0,T] by construction of the grid).
bool sandwich_holds(const DomainGeometry& geometry, const SigmaWindow& window);

}  // namespace sail
