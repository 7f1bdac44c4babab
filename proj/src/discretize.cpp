#include "sail/discretize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <vector>

#include <Eigen/SparseLU>

namespace sail {

namespace {

using Triplet = Eigen::Triplet<double>;
using Index = Eigen::Index;

Index ix(std::size_t n) { return static_cast<Index>(n); }

double fetch(const Vector& v, std::size_t n) { return v[ix(n)]; }

}  // namespace

FieldOmega FieldOmega::zeros(const DomainGeometry& g) {
    return FieldOmega{Vector::Zero(ix(g.node_count())), g.nx(), g.ny(), g.hx(), g.hy()};
}

FieldOmega FieldOmega::sample(const DomainGeometry& g, const std::function<double(double, double)>& fn) {
    FieldOmega f = zeros(g);
    for (std::size_t n = 0; n < g.node_count(); ++n) {
        const Point p = g.point(n);
        f.values[ix(n)] = fn(p.x, p.y);
    }
    return f;
}

FieldBeam FieldBeam::zeros(const DomainGeometry& g) {
    return FieldBeam{Vector::Zero(ix(g.beam_interior_count())), g.beam_spacing()};
}

FieldBeam FieldBeam::sample(const DomainGeometry& g, const std::function<double(double)>& fn) {
    FieldBeam f = zeros(g);
    const auto& s = g.arclength();
    for (std::size_t k = 0; k < g.beam_interior_count(); ++k) f.values[ix(k)] = fn(s[k + 1]);
    return f;
}

double asymmetry(const SparseMatrix& a) {
    const SparseMatrix t = a.transpose();
    const SparseMatrix d = a - t;
    double worst = 0.0;
    for (Index r = 0; r < d.outerSize(); ++r)
        for (SparseMatrix::InnerIterator it(d, r); it; ++it) worst = std::max(worst, std::abs(it.value()));
    return worst;
}

std::string to_triplet_text(const SparseOperator& op) {
    std::string out;
    char buf[96];
    for (Index r = 0; r < op.matrix.outerSize(); ++r) {
        for (SparseMatrix::InnerIterator it(op.matrix, r); it; ++it) {
            std::snprintf(buf, sizeof buf, "%ld %ld %.17g\n", static_cast<long>(it.row()),
                          static_cast<long>(it.col()), it.value());
            out += buf;
        }
    }
    return out;
}

NeumannLaplacian::NeumannLaplacian(const DomainGeometry& geometry)
    : geometry_(geometry), weights_(geometry.node_weights()) {
    const int nx = geometry.nx(), ny = geometry.ny();
    const double hx = geometry.hx(), hy = geometry.hy();
    const Index n = ix(geometry.node_count());

    // S is assembled edge by edge so that it is symmetric to the last bit
    std::vector<Triplet> s;
    s.reserve(static_cast<std::size_t>(n) * 5);
    auto edge = [&](std::size_t a, std::size_t b, double c) {
        s.emplace_back(ix(a), ix(a), -c);
        s.emplace_back(ix(b), ix(b), -c);
        s.emplace_back(ix(a), ix(b), c);
        s.emplace_back(ix(b), ix(a), c);
    };
    for (int j = 0; j < ny; ++j) {
        const double wy = (j == 0 || j == ny - 1) ? 0.5 * hy : hy;
        for (int i = 0; i + 1 < nx; ++i) edge(geometry.node(i, j), geometry.node(i + 1, j), wy / hx);
    }
    for (int i = 0; i < nx; ++i) {
        const double wx = (i == 0 || i == nx - 1) ? 0.5 * hx : hx;
        for (int j = 0; j + 1 < ny; ++j) edge(geometry.node(i, j), geometry.node(i, j + 1), wx / hy);
    }
    stiffness_.matrix.resize(n, n);
    stiffness_.matrix.setFromTriplets(s.begin(), s.end());
    stiffness_.matrix.makeCompressed();

    laplacian_.matrix = weights_.cwiseInverse().asDiagonal() * stiffness_.matrix;
    laplacian_.matrix.makeCompressed();
}

Vector NeumannLaplacian::apply(const Vector& z) const { return laplacian_.matrix * z; }

Vector NeumannLaplacian::apply(const Vector& z, const Vector& flux) const {
    return laplacian_.matrix * z + flux_load(flux).cwiseQuotient(weights_);
}

Vector NeumannLaplacian::flux_load(const Vector& flux) const {
    if (flux.size() != ix(geometry_.beam_nodes())) {
        throw validation_error("mismatched-node-count", "flux must live on every gamma0 polyline node");
    }
    Vector load = Vector::Zero(ix(geometry_.node_count()));
    for (const BoundaryFacet& f : geometry_.facets()) {
        if (f.part != BoundaryPart::gamma0) continue;
        load[ix(f.node)] += f.weight * flux[geometry_.gamma0_index(f.node)];
    }
    return load;
}

Vector NeumannLaplacian::flux_load_beam(const Vector& beam_values) const {
    return flux_load(beam_to_polyline(beam_values));
}

double NeumannLaplacian::dirichlet_energy(const Vector& z) const { return -z.dot(stiffness_.matrix * z); }

NeumannLaplacian laplacian_neumann(const DomainGeometry& geometry) { return NeumannLaplacian(geometry); }

ClampedBiharmonic::ClampedBiharmonic(const DomainGeometry& geometry) : hs_(geometry.beam_spacing()) {
    const long nb = static_cast<long>(geometry.beam_nodes());
    if (nb < 7) {
        throw validation_error("beam-too-short", "the clamped stencil needs at least 7 polyline nodes");
    }
    const long last = nb - 1;
    const long m = nb - 2;

    // reflected ghosts: v(-1) = v(1), v(N+1) = v(N-1); clamp values are zero
    auto column = [&](long p) -> long {
        if (p == -1) p = 1;
        if (p == last + 1) p = last - 1;
        if (p <= 0 || p >= last) return -1;
        return p - 1;
    };

    const double h4 = std::pow(hs_, 4), h2 = hs_ * hs_;
    std::vector<Triplet> a, d;
    const double five[5] = {1.0, -4.0, 6.0, -4.0, 1.0};
    for (long p = 1; p < last; ++p) {
        for (int o = -2; o <= 2; ++o) {
            const long c = column(p + o);
            if (c >= 0) a.emplace_back(p - 1, c, five[o + 2] / h4);
        }
    }
    const double three[3] = {1.0, -2.0, 1.0};
    for (long p = 0; p <= last; ++p) {
        for (int o = -1; o <= 1; ++o) {
            const long c = column(p + o);
            if (c >= 0) d.emplace_back(p, c, three[o + 1] / h2);
        }
    }
    bilaplacian_.matrix.resize(m, m);
    bilaplacian_.matrix.setFromTriplets(a.begin(), a.end());
    bilaplacian_.domain = bilaplacian_.codomain = FieldKind::beam;
    second_.matrix.resize(nb, m);
    second_.matrix.setFromTriplets(d.begin(), d.end());
    second_.domain = FieldKind::beam;
    second_.codomain = FieldKind::trace;
    polyline_weights_ = geometry.polyline_weights();
    beam_weights_ = geometry.beam_weights();
}

double ClampedBiharmonic::bending_energy(const Vector& v) const {
    const Vector dv = second_.matrix * v;
    return dv.cwiseProduct(dv).dot(polyline_weights_);
}

ClampedBiharmonic biharmonic_clamped(const DomainGeometry& geometry) { return ClampedBiharmonic(geometry); }

struct NeumannMap::Impl {
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    Vector polyline_weights;
    double gamma0_length = 0.0;
    Vector weights;
};

NeumannMap::NeumannMap(const DomainGeometry& geometry, double compatibility_tol)
    : laplacian_(geometry), tol_(compatibility_tol), impl_(std::make_unique<Impl>()) {
    const Index n = ix(geometry.node_count());
    const Vector& w = laplacian_.weights();
    std::vector<Triplet> t;
    const SparseMatrix& s = laplacian_.stiffness().matrix;
    for (Index r = 0; r < s.outerSize(); ++r)
        for (SparseMatrix::InnerIterator it(s, r); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
    for (Index k = 0; k < n; ++k) {
        t.emplace_back(k, n, w[k]);
        t.emplace_back(n, k, w[k]);
    }
    Eigen::SparseMatrix<double> bordered(n + 1, n + 1);
    bordered.setFromTriplets(t.begin(), t.end());
    bordered.makeCompressed();
    impl_->lu.compute(bordered);
    if (impl_->lu.info() != Eigen::Success) {
        throw solver_error("factorization-failed", "bordered Neumann system could not be factorized");
    }
    impl_->polyline_weights = geometry.polyline_weights();
    impl_->gamma0_length = impl_->polyline_weights.sum();
    impl_->weights = w;
}

NeumannMap::~NeumannMap() = default;
NeumannMap::NeumannMap(NeumannMap&&) noexcept = default;
NeumannMap& NeumannMap::operator=(NeumannMap&&) noexcept = default;

NeumannSolution NeumannMap::solve(const Vector& flux) const {
    NeumannSolution out;
    Vector g = flux;
    Vector load = laplacian_.flux_load(g);
    out.flux_integral = load.sum();
    const double scale = std::max(1.0, laplacian_.flux_load(g.cwiseAbs()).sum());
    if (std::abs(out.flux_integral) > tol_ * scale) {
        g.array() -= out.flux_integral / impl_->gamma0_length;
        load = laplacian_.flux_load(g);
        out.projected = true;
    }
    const Index n = load.size();
    Vector rhs = Vector::Zero(n + 1);
    rhs.head(n) = -load;
    const Vector sol = impl_->lu.solve(rhs);
    if (impl_->lu.info() != Eigen::Success) {
        throw solver_error("neumann-solve-failed", "bordered Neumann solve failed");
    }
    out.z = sol.head(n);
    return out;
}

NeumannSolution neumann_map(const DomainGeometry& geometry, const Vector& flux) {
    return NeumannMap(geometry).solve(flux);
}

namespace {

struct Step {
    int di = 0;
    int dj = 0;
};

Step inward(const BoundaryFacet& f) {
    return {static_cast<int>(-std::lround(f.normal_x)), static_cast<int>(-std::lround(f.normal_y))};
}

double one_sided(const DomainGeometry& g, const Vector& z, const BoundaryFacet& f) {
    const Step s = inward(f);
    const double h = s.di != 0 ? g.hx() : g.hy();
    const double z0 = fetch(z, f.node);
    const double z1 = fetch(z, g.node(f.i + s.di, f.j + s.dj));
    const double z2 = fetch(z, g.node(f.i + 2 * s.di, f.j + 2 * s.dj));
    return (3.0 * z0 - 4.0 * z1 + z2) / (2.0 * h);
}

}  // namespace

TraceFlux trace_and_flux(const DomainGeometry& geometry, const Vector& field, FluxScheme scheme) {
    if (field.size() != ix(geometry.node_count())) {
        throw validation_error("mismatched-node-count", "field size does not match the grid");
    }
    const auto& g0 = geometry.gamma0_nodes();
    const auto& g1 = geometry.gamma1_nodes();
    TraceFlux out;
    out.trace_gamma0.resize(ix(g0.size()));
    out.trace_gamma1.resize(ix(g1.size()));
    for (std::size_t k = 0; k < g0.size(); ++k) out.trace_gamma0[ix(k)] = fetch(field, g0[k]);
    for (std::size_t k = 0; k < g1.size(); ++k) out.trace_gamma1[ix(k)] = fetch(field, g1[k]);

    // per-node facet bookkeeping
    const std::size_t nn = geometry.node_count();
    std::vector<std::vector<const BoundaryFacet*>> at(nn);
    for (const BoundaryFacet& f : geometry.facets()) at[f.node].push_back(&f);

    Vector lap;
    if (scheme == FluxScheme::ghost_consistent) lap = NeumannLaplacian(geometry).apply(field);
    const Vector& w = geometry.node_weights();

    auto node_flux = [&](std::size_t node, BoundaryPart part) {
        const auto& fs = at[node];
        double sum = 0.0, wsum = 0.0;
        int count = 0;
        bool mixed = false;
        int di = 0, dj = 0;
        for (const BoundaryFacet* f : fs) {
            if (f->part != part) {
                mixed = true;
                continue;
            }
            sum += one_sided(geometry, field, *f);
            wsum += f->weight;
            ++count;
        }
        for (const BoundaryFacet* f : fs) {
            const Step s = inward(*f);
            di += s.di;
            dj += s.dj;
        }
        if (scheme == FluxScheme::one_sided || mixed) return sum / count;
        const int i = geometry.node_i(node), j = geometry.node_j(node);
        const int i2 = i + 2 * di, j2 = j + 2 * dj;
        if (i2 < 0 || j2 < 0 || i2 >= geometry.nx() || j2 >= geometry.ny()) return sum / count;
        const double extrap = 2.0 * fetch(lap, geometry.node(i + di, j + dj)) - fetch(lap, geometry.node(i2, j2));
        const double total = fetch(w, node) * (extrap - fetch(lap, node));
        return total / wsum;
    };

    out.flux_gamma0.resize(ix(g0.size()));
    out.flux_gamma1.resize(ix(g1.size()));
    for (std::size_t k = 0; k < g0.size(); ++k) out.flux_gamma0[ix(k)] = node_flux(g0[k], BoundaryPart::gamma0);
    for (std::size_t k = 0; k < g1.size(); ++k) out.flux_gamma1[ix(k)] = node_flux(g1[k], BoundaryPart::gamma1);
    return out;
}

Vector trace_to_beam(const DomainGeometry& geometry, const Vector& field) {
    const auto& g0 = geometry.gamma0_nodes();
    Vector out(ix(geometry.beam_interior_count()));
    for (std::size_t k = 0; k + 2 < g0.size(); ++k) out[ix(k)] = fetch(field, g0[k + 1]);
    return out;
}

Vector beam_to_polyline(const Vector& beam_values) {
    Vector out = Vector::Zero(beam_values.size() + 2);
    out.segment(1, beam_values.size()) = beam_values;
    return out;
}

BeamTransfer beam_transfer(const DomainGeometry& geometry, std::size_t beam_count) {
    if (beam_count != geometry.beam_interior_count()) {
        throw validation_error("mismatched-node-count",
                               "beam has " + std::to_string(beam_count) + " interior nodes, gamma0 has " +
                                   std::to_string(geometry.beam_interior_count()));
    }
    const auto& g0 = geometry.gamma0_nodes();
    std::vector<Triplet> t;
    for (std::size_t k = 0; k < beam_count; ++k) t.emplace_back(ix(g0[k + 1]), ix(k), 1.0);
    BeamTransfer out;
    out.beam_to_grid.matrix.resize(ix(geometry.node_count()), ix(beam_count));
    out.beam_to_grid.matrix.setFromTriplets(t.begin(), t.end());
    out.beam_to_grid.domain = FieldKind::beam;
    out.beam_to_grid.codomain = FieldKind::omega;
    out.grid_to_beam.matrix = out.beam_to_grid.matrix.transpose();
    out.grid_to_beam.domain = FieldKind::omega;
    out.grid_to_beam.codomain = FieldKind::beam;
    return out;
}

}  // namespace sail
