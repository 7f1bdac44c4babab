#pragma once

#include <string>
#include <vector>

#include "sail/discretize.hpp"

namespace sail {

/// (z, z_t, v, v_t): rectangle fields plus beam-interior fields.
struct CoupledState {
    Vector z;
    Vector zt;
    Vector v;
    Vector vt;

    static CoupledState zeros(const DomainGeometry& g);
    Eigen::Index size() const { return z.size() + zt.size() + v.size() + vt.size(); }
    bool finite() const;

    Vector pack() const;
    static CoupledState unpack(const Vector& packed, Eigen::Index nodes, Eigen::Index beam);

    CoupledState& operator+=(const CoupledState& o);
    CoupledState& operator*=(double s);
};

CoupledState operator+(CoupledState a, const CoupledState& b);
CoupledState operator-(CoupledState a, const CoupledState& b);
CoupledState operator*(double s, CoupledState a);

/// Discrete generator y -> (z_t, (Delta + q) z + B v_t, v_t, -B* z_t - Av - kappa A v_t).
///
/// B v_t injects v_t as Neumann data on gamma0 through the ghost-node rows;
/// B* restricts to the beam interior nodes. With node weights W and beam
/// weights h these satisfy <B v, z>_W = <v, B* z>_h exactly.
class OperatorBundle {
public:
    OperatorBundle(const DomainGeometry& geometry, Vector q, double kappa = 1.0);

    const DomainGeometry& geometry() const noexcept { return geometry_; }
    const NeumannLaplacian& laplacian() const noexcept { return laplacian_; }
    const ClampedBiharmonic& biharmonic() const noexcept { return biharmonic_; }
    const Vector& q() const noexcept { return q_; }
    double kappa() const noexcept { return kappa_; }
    Eigen::Index nodes() const noexcept { return static_cast<Eigen::Index>(geometry_.node_count()); }
    Eigen::Index beam() const noexcept { return static_cast<Eigen::Index>(geometry_.beam_interior_count()); }

    CoupledState apply(const CoupledState& y) const;
    /// B: beam-interior flux to the rectangle (W^{-1} times the flux load).
    Vector inject(const Vector& beam_values) const;
    /// B*: rectangle field to the beam interior nodes.
    Vector restrict_to_beam(const Vector& field) const;

    /// Block matrix acting on CoupledState::pack().
    SparseMatrix system_matrix() const;
    /// Diagonal of the quadrature mass on packed states (W, W, h, h).
    Vector mass_diagonal() const;

    /// Full energy norm squared: int |grad z|^2 + z^2 + z_t^2 + int (v'')^2 + v_t^2.
    double energy_norm_squared(const CoupledState& y) const;
    /// Bilinear form of the conserved energy (no zero-order z term). Along
    /// solutions with q = 0 and kappa = 0 this energy is invariant.
    double energy_inner(const CoupledState& a, const CoupledState& b) const;
    double conserved_energy(const CoupledState& y) const { return energy_inner(y, y); }

    void check_shape(const CoupledState& y) const;

private:
    DomainGeometry geometry_;
    NeumannLaplacian laplacian_;
    ClampedBiharmonic biharmonic_;
    Vector q_;
    double kappa_;
    Vector beam_weights_;
};

OperatorBundle assemble_generator(const DomainGeometry& geometry, const Vector& q, double kappa = 1.0);

double energy_norm(const OperatorBundle& ops, const CoupledState& y);

struct Residual {
    std::string name;
    double value = 0.0;
    bool pass = false;
};

struct MembershipReport {
    int order = 1;
    double tolerance = 0.0;
    double state_norm = 0.0;
    std::vector<Residual> residuals;

    bool pass() const;
    const Residual* find(const std::string& name) const;
};

/// Checks that A^j y lies in the discrete D(A) for j = 0..order-1: the
/// coupling trace identity on gamma0, zero flux on gamma1, and the clamp
/// conditions on v + v_t. Residuals are L2 trace norms. tolerance <= 0
/// selects the default 1e-6 (1 + ||y||_H).
MembershipReport check_domain_membership(const OperatorBundle& ops, const CoupledState& y, int order,
                                         double tolerance = 0.0);

}  // namespace sail
