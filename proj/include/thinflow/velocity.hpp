#pragma once

#include "thinflow/expr.hpp"
#include "thinflow/geometry.hpp"

#include <array>
#include <vector>

namespace thinflow {

/// Velocity data on one branch: the axial profile v_i(x) (expression in "x")
/// and an optional transverse pair Vbar(x, s1, s2) in the rescaled cross-disk
/// variables. The axial profile must be constant near the node; the transverse
/// part must vanish near both ends of the branch.
struct EdgeVelocity {
    Expression axial;            // v_i(x)
    Expression axial_dx;         // exact derivative
    Expression tr1, tr2;         // transverse components, variables (x, s1, s2)
    Expression tr1_ds1, tr2_ds2; // exact partials; their sum is the cross-disk divergence
    bool tr_zero = true;
};

struct VelocityModel {
    std::array<EdgeVelocity, 3> edge;

    /// the default field: v = (-2, 1, 1), no transverse part
    static VelocityModel standard();
    static VelocityModel from_expressions(const std::array<std::string, 3>& axial,
                                          const std::array<std::array<std::string, 2>, 3>& transverse);

    double axial(int i, double x) const { return edge[i].axial({x}); }
    double axial_dx(int i, double x) const { return edge[i].axial_dx({x}); }
    double v_node(int i) const { return axial(i, 0.0); }           // constant near the node
    double v_base(int i, const NetworkSpec& s) const { return axial(i, s.ell[i]); }
    std::array<double, 2> transverse(int i, double x, double s1, double s2) const {
        return {edge[i].tr1({x, s1, s2}), edge[i].tr2({x, s1, s2})};
    }
    double transverse_div(int i, double x, double s1, double s2) const {
        return edge[i].tr1_ds1({x, s1, s2}) + edge[i].tr2_ds2({x, s1, s2});
    }
    bool transverse_zero(int i) const { return edge[i].tr_zero; }

    /// structural checks: inflow/outflow signs, constancy near the node and in
    /// the base-layer band, transverse support. Throws WrongSign / SupportViolation.
    void validate(const NetworkSpec& spec) const;
};

/// |sum_i h_i^2 v_i(0)| normalized by sum_i h_i^2 |v_i(0)|
double conservation_defect(const VelocityModel& vel, const NetworkSpec& spec);
/// throws ConservationViolated unless the defect is below 1e-12
void check_conservation(const VelocityModel& vel, const NetworkSpec& spec);

/// Discrete Neumann potential on the node cube (-ell0, ell0)^3 driving the
/// node-region velocity: dp/dn = v_i on the port disk of face +i (scaled per
/// port by the exact-to-staircase area ratio so the discrete fluxes balance
/// exactly), homogeneous elsewhere, zero mean. Face gradients of p are the
/// node velocities used by every voxel solver, read 1:1 on index-aligned
/// lattices, so the discrete field is divergence-free by construction.
class NodePotential {
public:
    NodePotential(const NetworkSpec& spec, const VelocityModel& vel, double spacing);

    int n_half() const { return n0_; }
    double spacing() const { return s_; }
    double cg_residual() const { return cg_residual_; }
    int cg_iterations() const { return cg_iterations_; }
    double mean() const;          // of the solution, ~ 0
    double flux_defect() const;   // total boundary flux of the discrete data, ~ 0
    double port_speed(int i) const { return port_speed_[i]; }  // area-scaled v_i(0)

    /// potential value at a cube cell, lattice coords in [-n_half, n_half)
    double value(int kx, int ky, int kz) const { return p_[idx(kx, ky, kz)]; }

    /// staggered velocity component `axis` at the face with plane index
    /// `k` in [-n_half, n_half] and transverse cell coords (u, v) ordered
    /// (axis+1, axis+2) cyclically. Outer faces carry the Neumann data.
    double face_velocity(int axis, int k, int u, int v) const;

    /// trilinear interpolation of the staggered field at a point of the cube
    std::array<double, 3> grad_at(const std::array<double, 3>& xi) const;

private:
    std::size_t idx(int kx, int ky, int kz) const {
        const int n = 2 * n0_;
        return (static_cast<std::size_t>(kz + n0_) * n + (ky + n0_)) * n + (kx + n0_);
    }
    bool port_cell(int i, int u, int v) const;   // staircase disk test, index space

    int n0_ = 0;
    double s_ = 0.0;
    std::array<double, 3> radius_{};      // port radii
    std::array<double, 3> port_speed_{};  // scaled Neumann speeds
    std::array<double, 3> raw_speed_{};   // v_i(0)
    double cg_residual_ = 0.0;
    int cg_iterations_ = 0;
    std::vector<double> p_;
};

NodePotential solve_node_potential(const NetworkSpec& spec, const VelocityModel& vel,
                                   double spacing);

/// Pointwise velocity of the full field at a physical point: axial plus scaled
/// transverse part in the cylinders, interpolated potential gradient in the
/// node region. Throws OutOfDomain outside the junction.
std::array<double, 3> eval_velocity(const NetworkSpec& spec, const VelocityModel& vel,
                                    const NodePotential& pot, double eps,
                                    const std::array<double, 3>& x);

} // namespace thinflow
