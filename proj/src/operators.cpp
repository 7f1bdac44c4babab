#include "sail/operators.hpp"

#include <algorithm>
#include <cmath>

namespace sail {

namespace {

using Triplet = Eigen::Triplet<double>;
using Index = Eigen::Index;

Index ix(std::size_t n) { return static_cast<Index>(n); }

}  // namespace

CoupledState CoupledState::zeros(const DomainGeometry& g) {
    const Index n = ix(g.node_count()), m = ix(g.beam_interior_count());
    return {Vector::Zero(n), Vector::Zero(n), Vector::Zero(m), Vector::Zero(m)};
}

bool CoupledState::finite() const {
    return z.allFinite() && zt.allFinite() && v.allFinite() && vt.allFinite();
}

Vector CoupledState::pack() const {
    Vector out(size());
    out << z, zt, v, vt;
    return out;
}

CoupledState CoupledState::unpack(const Vector& packed, Index nodes, Index beam) {
    if (packed.size() != 2 * nodes + 2 * beam) {
        throw validation_error("shape-mismatch", "packed state has the wrong length");
    }
    return {packed.segment(0, nodes), packed.segment(nodes, nodes), packed.segment(2 * nodes, beam),
            packed.segment(2 * nodes + beam, beam)};
}

CoupledState& CoupledState::operator+=(const CoupledState& o) {
    z += o.z;
    zt += o.zt;
    v += o.v;
    vt += o.vt;
    return *this;
}

CoupledState& CoupledState::operator*=(double s) {
    z *= s;
    zt *= s;
    v *= s;
    vt *= s;
    return *this;
}

CoupledState operator+(CoupledState a, const CoupledState& b) { return a += b; }
CoupledState operator-(CoupledState a, const CoupledState& b) { return a += -1.0 * b; }
CoupledState operator*(double s, CoupledState a) { return a *= s; }

OperatorBundle::OperatorBundle(const DomainGeometry& geometry, Vector q, double kappa)
    : geometry_(geometry),
      laplacian_(geometry),
      biharmonic_(geometry),
      q_(std::move(q)),
      kappa_(kappa),
      beam_weights_(geometry.beam_weights()) {
    if (q_.size() == 0) q_ = Vector::Zero(ix(geometry.node_count()));
    if (q_.size() != ix(geometry.node_count())) {
        throw validation_error("shape-mismatch", "potential q must live on every grid node");
    }
    if (!q_.allFinite()) throw validation_error("nonfinite-potential", "potential q has non-finite entries");
}

void OperatorBundle::check_shape(const CoupledState& y) const {
    if (y.z.size() != nodes() || y.zt.size() != nodes() || y.v.size() != beam() || y.vt.size() != beam()) {
        throw validation_error("shape-mismatch", "state does not match the geometry");
    }
}

Vector OperatorBundle::inject(const Vector& beam_values) const {
    return laplacian_.flux_load_beam(beam_values).cwiseQuotient(laplacian_.weights());
}

Vector OperatorBundle::restrict_to_beam(const Vector& field) const { return trace_to_beam(geometry_, field); }

CoupledState OperatorBundle::apply(const CoupledState& y) const {
    check_shape(y);
    CoupledState out;
    out.z = y.zt;
    out.zt = laplacian_.apply(y.z) + q_.cwiseProduct(y.z) + inject(y.vt);
    out.v = y.vt;
    const SparseMatrix& a = biharmonic_.matrix().matrix;
    out.vt = -restrict_to_beam(y.zt) - a * y.v - kappa_ * (a * y.vt);
    return out;
}

SparseMatrix OperatorBundle::system_matrix() const {
    const Index n = nodes(), m = beam();
    std::vector<Triplet> t;
    const SparseMatrix& lap = laplacian_.matrix().matrix;
    const SparseMatrix& bih = biharmonic_.matrix().matrix;
    t.reserve(static_cast<std::size_t>(lap.nonZeros() + 2 * bih.nonZeros() + 3 * n + 6 * m));
    for (Index k = 0; k < n; ++k) t.emplace_back(k, n + k, 1.0);
    for (Index r = 0; r < lap.outerSize(); ++r)
        for (SparseMatrix::InnerIterator it(lap, r); it; ++it) t.emplace_back(n + it.row(), it.col(), it.value());
    for (Index k = 0; k < n; ++k)
        if (q_[k] != 0.0) t.emplace_back(n + k, k, q_[k]);
    const auto& g0 = geometry_.gamma0_nodes();
    const Vector& w = laplacian_.weights();
    for (const BoundaryFacet& f : geometry_.facets()) {
        if (f.part != BoundaryPart::gamma0) continue;
        const long p = geometry_.gamma0_index(f.node);
        if (p <= 0 || p >= static_cast<long>(g0.size()) - 1) continue;
        t.emplace_back(n + ix(f.node), 2 * n + m + (p - 1), f.weight / w[ix(f.node)]);
    }
    for (Index k = 0; k < m; ++k) {
        t.emplace_back(2 * n + k, 2 * n + m + k, 1.0);
        t.emplace_back(2 * n + m + k, n + ix(g0[static_cast<std::size_t>(k) + 1]), -1.0);
    }
    for (Index r = 0; r < bih.outerSize(); ++r) {
        for (SparseMatrix::InnerIterator it(bih, r); it; ++it) {
            t.emplace_back(2 * n + m + it.row(), 2 * n + it.col(), -it.value());
            if (kappa_ != 0.0) t.emplace_back(2 * n + m + it.row(), 2 * n + m + it.col(), -kappa_ * it.value());
        }
    }
    SparseMatrix out(2 * n + 2 * m, 2 * n + 2 * m);
    out.setFromTriplets(t.begin(), t.end());
    out.makeCompressed();
    return out;
}

Vector OperatorBundle::mass_diagonal() const {
    const Index n = nodes(), m = beam();
    Vector out(2 * n + 2 * m);
    out << laplacian_.weights(), laplacian_.weights(), beam_weights_, beam_weights_;
    return out;
}

double OperatorBundle::energy_norm_squared(const CoupledState& y) const {
    check_shape(y);
    const Vector& w = laplacian_.weights();
    return laplacian_.dirichlet_energy(y.z) + y.z.cwiseProduct(y.z).dot(w) + y.zt.cwiseProduct(y.zt).dot(w) +
           biharmonic_.bending_energy(y.v) + y.vt.cwiseProduct(y.vt).dot(beam_weights_);
}

double OperatorBundle::energy_inner(const CoupledState& a, const CoupledState& b) const {
    check_shape(a);
    check_shape(b);
    const Vector& w = laplacian_.weights();
    const SparseMatrix& s = laplacian_.stiffness().matrix;
    const SparseMatrix& d = biharmonic_.second_difference().matrix;
    const Vector pw = geometry_.polyline_weights();
    const Vector da = d * a.v, db = d * b.v;
    return -a.z.dot(s * b.z) + a.zt.cwiseProduct(b.zt).dot(w) + da.cwiseProduct(db).dot(pw) +
           a.vt.cwiseProduct(b.vt).dot(beam_weights_);
}

OperatorBundle assemble_generator(const DomainGeometry& geometry, const Vector& q, double kappa) {
    return OperatorBundle(geometry, q, kappa);
}

double energy_norm(const OperatorBundle& ops, const CoupledState& y) {
    return std::sqrt(ops.energy_norm_squared(y));
}

bool MembershipReport::pass() const {
    return std::all_of(residuals.begin(), residuals.end(), [](const Residual& r) { return r.pass; });
}

const Residual* MembershipReport::find(const std::string& name) const {
    for (const Residual& r : residuals)
        if (r.name == name) return &r;
    return nullptr;
}

namespace {

// quadratic through the first three interior nodes, evaluated at the clamp
void clamp_extrapolation(const Vector& beam, double h, double& value, double& slope) {
    value = 0.0;
    slope = 0.0;
    if (beam.size() < 3) return;
    auto end = [&](double f1, double f2, double f3) {
        value = std::max(value, std::abs(3.0 * f1 - 3.0 * f2 + f3));
        slope = std::max(slope, std::abs((-2.5 * f1 + 4.0 * f2 - 1.5 * f3) / h));
    };
    const Index m = beam.size();
    end(beam[0], beam[1], beam[2]);
    end(beam[m - 1], beam[m - 2], beam[m - 3]);
}

}  // namespace

MembershipReport check_domain_membership(const OperatorBundle& ops, const CoupledState& y, int order,
                                         double tolerance) {
    if (order < 1 || order > 3) {
        throw validation_error("invalid-order", "membership order must be 1, 2 or 3, got " + std::to_string(order));
    }
    ops.check_shape(y);
    const DomainGeometry& g = ops.geometry();
    MembershipReport rep;
    rep.order = order;
    rep.state_norm = energy_norm(ops, y);
    rep.tolerance = tolerance > 0.0 ? tolerance : 1e-6 * (1.0 + rep.state_norm);

    const Vector bw = g.beam_weights();
    const double h = g.beam_spacing();
    std::vector<double> gamma1_weight(g.gamma1_nodes().size(), 0.0);
    for (const BoundaryFacet& f : g.facets())
        if (f.part == BoundaryPart::gamma1) gamma1_weight[static_cast<std::size_t>(g.node_i(f.node))] = f.weight;

    auto add = [&](std::string name, double value) {
        rep.residuals.push_back({std::move(name), value, value <= rep.tolerance});
    };

    CoupledState cur = y;
    for (int j = 0; j < order; ++j) {
        const std::string tag = "_" + std::to_string(j);
        const TraceFlux tf = trace_and_flux(g, cur.z, FluxScheme::ghost_consistent);
        const Vector coupling = tf.flux_gamma0.segment(1, ops.beam()) - cur.vt;
        add("coupling" + tag, std::sqrt(coupling.cwiseProduct(coupling).dot(bw)));
        double wall = 0.0;
        for (Index k = 1; k + 1 < tf.flux_gamma1.size(); ++k)
            wall += gamma1_weight[static_cast<std::size_t>(k)] * tf.flux_gamma1[k] * tf.flux_gamma1[k];
        add("wall_flux" + tag, std::sqrt(wall));
        double value = 0.0, slope = 0.0;
        // v_j = vt_{j-1} was already checked one level down; stored fields are clamped by construction
        if (j > 0) clamp_extrapolation(cur.vt, h, value, slope);
        add("clamp_value" + tag, value);
        add("clamp_slope" + tag, slope);
        if (j + 1 < order) cur = ops.apply(cur);
    }
    return rep;
}

}  // namespace sail
