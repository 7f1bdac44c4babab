#pragma once

#include <functional>
#include <memory>
#include <string>

#include <Eigen/SparseCore>

#include "sail/geometry.hpp"

namespace sail {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

enum class FieldKind { omega, beam, trace };

/// Nodal values over the closed rectangle, row-major (index = j * nx + i).
struct FieldOmega {
    Vector values;
    int nx = 0;
    int ny = 0;
    double hx = 0.0;
    double hy = 0.0;

    static FieldOmega zeros(const DomainGeometry& g);
    static FieldOmega sample(const DomainGeometry& g, const std::function<double(double, double)>& fn);
};

/// Beam displacement-like field on the gamma0 polyline. Only the nodes strictly
/// between the clamp points are stored; the clamp values and slopes are zero.
struct FieldBeam {
    Vector values;
    double hs = 0.0;

    static FieldBeam zeros(const DomainGeometry& g);
    /// Samples fn(s) at the interior arclength nodes.
    static FieldBeam sample(const DomainGeometry& g, const std::function<double(double)>& fn);
};

struct SparseOperator {
    SparseMatrix matrix;
    FieldKind domain = FieldKind::omega;
    FieldKind codomain = FieldKind::omega;

    Eigen::Index rows() const { return matrix.rows(); }
    Eigen::Index cols() const { return matrix.cols(); }
};

/// max |A - A^T| over all entries.
double asymmetry(const SparseMatrix& a);

/// Coordinate-triplet text ("row col value" per line, 17 significant digits).
std::string to_triplet_text(const SparseOperator& op);

/// Five-point Laplacian with ghost-node Neumann boundaries.
///
/// `matrix()` is the zero-flux operator Delta_h (row sums vanish). It is
/// symmetric with respect to the trapezoidal node weights W, so the
/// symmetric form used for assembly and symmetry checks is
/// `stiffness() = W * Delta_h`, which is negative semidefinite with the
/// constants in its kernel. Prescribed flux g on gamma0 adds
/// W^{-1} * flux_load(g), exactly the ghost-node contribution.
class NeumannLaplacian {
public:
    explicit NeumannLaplacian(const DomainGeometry& geometry);

    const SparseOperator& matrix() const noexcept { return laplacian_; }
    const SparseOperator& stiffness() const noexcept { return stiffness_; }
    const Vector& weights() const noexcept { return weights_; }

    Vector apply(const Vector& z) const;
    /// `flux` is the outward normal derivative on every gamma0 polyline node.
    Vector apply(const Vector& z, const Vector& flux) const;
    /// Node-wise sum of facet weight * flux over the gamma0 facets.
    Vector flux_load(const Vector& flux) const;
    /// Same as flux_load for a beam-interior field (clamp values are zero).
    Vector flux_load_beam(const Vector& beam_values) const;
    /// Discrete Dirichlet energy -z^T S z, the quadrature of |grad z|^2.
    double dirichlet_energy(const Vector& z) const;

private:
    DomainGeometry geometry_;
    SparseOperator laplacian_;
    SparseOperator stiffness_;
    Vector weights_;
};

NeumannLaplacian laplacian_neumann(const DomainGeometry& geometry);

/// Clamped beam biharmonic on the arclength grid of gamma0.
///
/// `matrix()` applies the five-point fourth difference with reflected ghost
/// nodes (v = 0 and centred v' = 0 at both clamp points) to the interior
/// nodes. `second_difference()` maps interior values to the second
/// difference on every polyline node, so that
/// v^T M_b A v = sum_k w_k (D v)_k^2 with trapezoidal weights w.
class ClampedBiharmonic {
public:
    explicit ClampedBiharmonic(const DomainGeometry& geometry);

    const SparseOperator& matrix() const noexcept { return bilaplacian_; }
    const SparseOperator& second_difference() const noexcept { return second_; }
    double spacing() const noexcept { return hs_; }
    /// Trapezoidal weights on the interior nodes (all equal to hs).
    const Vector& weights() const noexcept { return beam_weights_; }
    /// Quadrature of (v'')^2 over the beam.
    double bending_energy(const Vector& v) const;

private:
    double hs_;
    SparseOperator bilaplacian_;
    SparseOperator second_;
    Vector polyline_weights_;
    Vector beam_weights_;
};

ClampedBiharmonic biharmonic_clamped(const DomainGeometry& geometry);

struct NeumannSolution {
    Vector z;
    /// True when the flux failed the zero-mean compatibility test and was
    /// projected before solving.
    bool projected = false;
    double flux_integral = 0.0;
};

/// Discrete Neumann map: harmonic field with flux g on gamma0, zero flux on
/// gamma1, normalized to zero mean. The bordered system is factorized once.
class NeumannMap {
public:
    explicit NeumannMap(const DomainGeometry& geometry, double compatibility_tol = 1e-10);
    ~NeumannMap();
    NeumannMap(NeumannMap&&) noexcept;
    NeumannMap& operator=(NeumannMap&&) noexcept;

    /// `flux` on all gamma0 polyline nodes.
    NeumannSolution solve(const Vector& flux) const;
    const NeumannLaplacian& laplacian() const noexcept { return laplacian_; }

private:
    struct Impl;
    NeumannLaplacian laplacian_;
    double tol_;
    std::unique_ptr<Impl> impl_;
};

NeumannSolution neumann_map(const DomainGeometry& geometry, const Vector& flux);

enum class FluxScheme {
    /// Second-order one-sided differences along the inward normal.
    one_sided,
    /// Inverts the ghost-node boundary row: the flux that the discrete
    /// Laplacian would need to make the boundary row consistent with the
    /// Laplacian extrapolated from the two nodes inside. Exact on fields
    /// produced by the discrete Neumann solve.
    ghost_consistent,
};

struct TraceFlux {
    Vector trace_gamma0;  ///< on every gamma0 polyline node
    Vector trace_gamma1;  ///< on every bottom-edge node
    Vector flux_gamma0;   ///< outward normal derivative on gamma0 polyline nodes
    Vector flux_gamma1;   ///< outward normal derivative on bottom-edge nodes
};

TraceFlux trace_and_flux(const DomainGeometry& geometry, const Vector& field,
                         FluxScheme scheme = FluxScheme::one_sided);

/// B*: restriction of a rectangle field to the beam interior nodes.
Vector trace_to_beam(const DomainGeometry& geometry, const Vector& field);
/// Interior beam values padded with the zero clamp values.
Vector beam_to_polyline(const Vector& beam_values);

struct BeamTransfer {
    SparseOperator beam_to_grid;  ///< scatter onto the gamma0 grid nodes
    SparseOperator grid_to_beam;  ///< gather from the gamma0 grid nodes
};

/// Throws mismatched-node-count unless beam_count equals the number of
/// beam interior nodes of the geometry.
BeamTransfer beam_transfer(const DomainGeometry& geometry, std::size_t beam_count);

}  // namespace sail
