#include "sail/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace sail {

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::validation: return 2;
        case ErrorKind::io: return 2;
        case ErrorKind::solver: return 3;
        case ErrorKind::assertion: return 4;
    }
    return 1;
}

DomainGeometry::DomainGeometry(int nx, int ny, double lx, double ly)
    : nx_(nx), ny_(ny), lx_(lx), ly_(ly) {
    if (nx < 3 || ny < 3) {
        throw validation_error("resolution-too-small",
                               "need nx >= 3 and ny >= 3, got " + std::to_string(nx) + "x" +
                                   std::to_string(ny));
    }
    if (!(lx > 0.0) || !(ly > 0.0)) {
        throw validation_error("nonpositive-extent", "rectangle extents must be positive");
    }
    hx_ = lx / (nx - 1);
    hy_ = ly / (ny - 1);

    // left edge upwards, top edge rightwards, right edge downwards
    for (int j = 0; j < ny; ++j) gamma0_.push_back(node(0, j));
    for (int i = 1; i < nx; ++i) gamma0_.push_back(node(i, ny - 1));
    for (int j = ny - 2; j >= 0; --j) gamma0_.push_back(node(nx - 1, j));
    gamma0_index_.assign(node_count(), -1);
    for (std::size_t k = 0; k < gamma0_.size(); ++k) gamma0_index_[gamma0_[k]] = static_cast<long>(k);
    arclength_.resize(gamma0_.size());
    arclength_[0] = 0.0;
    for (std::size_t k = 1; k < gamma0_.size(); ++k) {
        const Point a = point(gamma0_[k - 1]);
        const Point b = point(gamma0_[k]);
        arclength_[k] = arclength_[k - 1] + std::hypot(b.x - a.x, b.y - a.y);
    }

    for (int i = 0; i < nx; ++i) gamma1_.push_back(node(i, 0));
    for (int j = 1; j < ny - 1; ++j)
        for (int i = 1; i < nx - 1; ++i) interior_.push_back(node(i, j));

    auto edge = [&](BoundaryPart part, double nxv, double nyv, bool horizontal, int fixed) {
        const int count = horizontal ? nx : ny;
        const double h = horizontal ? hx_ : hy_;
        for (int k = 0; k < count; ++k) {
            BoundaryFacet f;
            f.i = horizontal ? k : fixed;
            f.j = horizontal ? fixed : k;
            f.node = node(f.i, f.j);
            f.normal_x = nxv;
            f.normal_y = nyv;
            f.weight = (k == 0 || k == count - 1) ? 0.5 * h : h;
            f.part = part;
            facets_.push_back(f);
        }
    };
    edge(BoundaryPart::gamma1, 0.0, -1.0, true, 0);
    edge(BoundaryPart::gamma0, -1.0, 0.0, false, 0);
    edge(BoundaryPart::gamma0, 0.0, 1.0, true, ny - 1);
    edge(BoundaryPart::gamma0, 1.0, 0.0, false, nx - 1);

    weights_.resize(static_cast<Eigen::Index>(node_count()));
    for (int j = 0; j < ny; ++j) {
        const double wy = (j == 0 || j == ny - 1) ? 0.5 * hy_ : hy_;
        for (int i = 0; i < nx; ++i) {
            const double wx = (i == 0 || i == nx - 1) ? 0.5 * hx_ : hx_;
            weights_[static_cast<Eigen::Index>(node(i, j))] = wx * wy;
        }
    }
}

bool DomainGeometry::on_boundary(std::size_t n) const noexcept {
    const int i = node_i(n), j = node_j(n);
    return i == 0 || j == 0 || i == nx_ - 1 || j == ny_ - 1;
}

bool DomainGeometry::uniform_beam_spacing() const noexcept {
    return std::abs(hx_ - hy_) <= 1e-12 * std::max(hx_, hy_);
}

double DomainGeometry::beam_spacing() const {
    if (!uniform_beam_spacing()) {
        throw validation_error("nonuniform-beam-spacing",
                               "the beam stencil needs hx == hy along the gamma0 polyline");
    }
    return hx_;
}

Vector DomainGeometry::polyline_weights() const {
    const std::size_t n = gamma0_.size();
    Vector w(static_cast<Eigen::Index>(n));
    for (std::size_t k = 0; k < n; ++k) {
        const double left = k > 0 ? arclength_[k] - arclength_[k - 1] : 0.0;
        const double right = k + 1 < n ? arclength_[k + 1] - arclength_[k] : 0.0;
        w[static_cast<Eigen::Index>(k)] = 0.5 * (left + right);
    }
    return w;
}

Vector DomainGeometry::beam_weights() const {
    const Vector full = polyline_weights();
    return full.segment(1, full.size() - 2);
}

bool DomainGeometry::same_shape(const DomainGeometry& other) const noexcept {
    return nx_ == other.nx_ && ny_ == other.ny_ && lx_ == other.lx_ && ly_ == other.ly_;
}

DomainGeometry build_reference_domain(int nx, int ny, double lx, double ly) {
    return DomainGeometry(nx, ny, lx, ly);
}

ConvexWeight eval_weight(const DomainGeometry& geometry, Point x0) {
    if (x0.x >= 0.0 && x0.x <= geometry.lx() && x0.y >= 0.0 && x0.y <= geometry.ly()) {
        throw validation_error("anchor-on-closure",
                               "the anchor x0 must lie outside the closed rectangle");
    }
    return ConvexWeight{x0};
}

AssumptionReport verify_assumptions(const DomainGeometry& geometry, const ConvexWeight& weight,
                                    int refine) {
    refine = std::max(refine, 1);
    AssumptionReport r;
    r.rho = std::numeric_limits<double>::infinity();
    r.s = std::numeric_limits<double>::infinity();
    r.max_d = -std::numeric_limits<double>::infinity();
    r.min_d = std::numeric_limits<double>::infinity();

    const int mx = (geometry.nx() - 1) * refine + 1;
    const int my = (geometry.ny() - 1) * refine + 1;
    const double sx = geometry.hx() / refine, sy = geometry.hy() / refine;
    for (int j = 0; j < my; ++j) {
        for (int i = 0; i < mx; ++i) {
            const Point p{i * sx, j * sy};
            const auto hess = weight.hessian(p);
            const double tr = hess[0] + hess[3];
            const double det = hess[0] * hess[3] - hess[1] * hess[2];
            const double disc = std::sqrt(std::max(0.0, 0.25 * tr * tr - det));
            r.rho = std::min(r.rho, 0.5 * tr - disc);
            const Point h = weight.h(p);
            r.s = std::min(r.s, std::hypot(h.x, h.y));
            const double d = weight.d(p);
            r.max_d = std::max(r.max_d, d);
            r.min_d = std::min(r.min_d, d);
            if (j == 0) {
                // gamma1 outward normal is (0,-1)
                r.max_h_dot_nu_gamma1 = std::max(r.max_h_dot_nu_gamma1, std::abs(-h.y));
            }
        }
    }
    r.convexity_ok = r.rho > 0.0;
    r.no_critical_point_ok = r.s > 0.0;
    r.gamma1_orthogonality_ok = r.max_h_dot_nu_gamma1 <= r.tolerance;
    r.anchor_on_hyperplane = std::abs(weight.x0.y) <= 1e-14;
    return r;
}

double min_observation_time(const AssumptionReport& report) { return 2.0 * std::sqrt(report.max_d); }

CarlemanParams select_time_params(const ConvexWeight& weight, const AssumptionReport& report,
                                  double T) {
    const double t_min = min_observation_time(report);
    if (!(T > t_min)) {
        throw validation_error("horizon-too-short",
                               "T = " + std::to_string(T) + " must exceed T_min = 2*sqrt(max d) = " +
                                   std::to_string(t_min));
    }
    CarlemanParams p;
    p.x0 = weight.x0;
    p.T = T;
    p.max_d = report.max_d;
    p.min_d = report.min_d;
    p.laplacian_d = weight.laplacian();
    p.delta = (T * T - 4.0 * report.max_d) / 8.0;
    const double c_low = (4.0 * report.max_d + 4.0 * p.delta) / (T * T);
    p.c = 0.5 * (c_low + 1.0);
    p.k = 0.5;
    p.alpha = p.laplacian_d - 2.0 * p.c - 1.0 + p.k;
    p.sigma = 0.5 * report.min_d;
    const double half = std::sqrt((report.min_d - p.sigma) / p.c);
    p.t0 = 0.5 * T - half;
    p.t1 = 0.5 * T + half;
    return p;
}

SigmaWindow locate_sigma_window(const DomainGeometry& geometry, const ConvexWeight& weight,
                                CarlemanParams& params, double sigma, std::size_t steps) {
    if (!(sigma > 0.0)) throw validation_error("sigma-nonpositive", "sigma must be positive");
    if (sigma >= params.min_d) {
        throw validation_error("sigma-too-large", "sigma must be below min d = " +
                                                      std::to_string(params.min_d));
    }
    if (steps == 0) throw validation_error("empty-time-grid", "need at least one time step");
    SigmaWindow w;
    w.sigma = sigma;
    const double half = std::sqrt((params.min_d - sigma) / params.c);
    w.t0 = 0.5 * params.T - half;
    w.t1 = 0.5 * params.T + half;
    params.sigma = sigma;
    params.t0 = w.t0;
    params.t1 = w.t1;

    RegionMask& m = w.mask;
    m.steps = steps;
    m.nodes = geometry.node_count();
    m.dt = params.T / static_cast<double>(steps);
    m.dx = geometry.hx();
    m.dy = geometry.hy();
    m.inside.assign((steps + 1) * m.nodes, 0);
    for (std::size_t n = 0; n <= steps; ++n) {
        const double t = static_cast<double>(n) * m.dt;
        for (std::size_t k = 0; k < m.nodes; ++k) {
            m.inside[n * m.nodes + k] = phi(weight, geometry.point(k), t, params) >= sigma ? 1 : 0;
        }
    }
    return w;
}

bool sandwich_holds(const DomainGeometry& geometry, const SigmaWindow& window) {
    const RegionMask& m = window.mask;
    for (std::size_t n = 0; n <= m.steps; ++n) {
        const double t = static_cast<double>(n) * m.dt;
        if (t < window.t0 || t > window.t1) continue;
        for (std::size_t k = 0; k < geometry.node_count(); ++k) {
            if (!m.at(n, k)) return false;
        }
    }
    return true;
}

}  // namespace sail
