#pragma once

#include "thinflow/expr.hpp"
#include "thinflow/geometry.hpp"
#include "thinflow/gridfn.hpp"
#include "thinflow/rng.hpp"
#include "thinflow/velocity.hpp"

#include <array>
#include <functional>
#include <string>

namespace thinflow {

/// Prescribed problem data: Dirichlet traces q_i(t) at the branch bases,
/// wall interaction densities phi_i(theta, x, t) on the branch laterals, and
/// the junction wall density phi0(xi1, xi2, xi3, t) in rescaled coordinates.
struct BoundaryData {
    std::array<Expression, 3> q;
    std::array<Expression, 3> phi_edge;
    Expression phi_node;

    static BoundaryData standard();
    static BoundaryData from_expressions(const std::array<std::string, 3>& q_src,
                                         const std::array<std::string, 3>& phi_src,
                                         const std::string& phi_node_src);

    /// Compatibility at t=0 (q and the wall densities start from rest; q_1 and
    /// the junction density start flat to all orders) and support constraints:
    /// branch densities vanish near both branch ends, the junction density
    /// vanishes in a neighbourhood of the three ports.
    void validate(const NetworkSpec& spec) const;
};

struct EdgeGridOptions {
    int nx = 400;      // x segments per branch
    int nt = 400;      // time segments
    int ntheta = 256;  // angular quadrature nodes for wall averages
};

/// Angular mean of a wall density against the circle of radius h_i,
/// phihat(x,t) = (1/(pi h^2)) * closed line integral of phi, sampled onto the
/// branch (x,t) grid. A constant density c averages to 2c/h.
Field2 average_lateral_interaction(const NetworkSpec& spec, const Expression& phi,
                                   int edge, const EdgeGridOptions& opt);

/// Solve  dt w + d/dx ( v(x) w ) = rhs  on (0, ell) x (0, horizon] with zero
/// initial data and `datum` prescribed at the inflow end (x=0 when v>0, x=ell
/// when v<0). Every grid value is obtained by tracing its characteristic back
/// to the inflow boundary or the initial slice with RK4 substeps, integrating
/// the damping factor and the source contribution along the way.
Field2 solve_transport_conservative(double ell, double horizon,
                                    const std::function<double(double)>& v,
                                    const std::function<double(double)>& v_dx,
                                    const std::function<double(double)>& datum,
                                    const Field2* rhs, const EdgeGridOptions& opt);

/// Max over random interior sample points of |dt w + (v w)' - rhs| measured on
/// the interpolated field.
double transport_residual(const Field2& w, const std::function<double(double)>& v,
                          const std::function<double(double)>& v_dx, const Field2* rhs,
                          Rng& rng, int nsamples);

/// Vertex datum for an outflow branch at orders past the leading pair: each of
/// the two outflow branches carries half of the vertex flux budget left after
/// the inflow branch contribution, so the triple meets the flux identity for
/// any admissible speeds and radii.
double general_vertex_datum(double d, double w1_vertex, double v1, double h1, double vi,
                            double hi);

/// Leading-pair limit problems: branch 1 is solved first with `datum1` at its
/// base, then branches 2 and 3 inherit the branch-1 vertex trace (continuity
/// through the junction). rhs entries may be null.
std::array<Field2, 3> solve_limit_problem_base(const NetworkSpec& spec,
                                               const VelocityModel& vel,
                                               const std::function<double(double)>& datum1,
                                               const std::array<const Field2*, 3>& rhs,
                                               const EdgeGridOptions& opt);

/// Higher-order limit problems: branch 1 carries zero base datum, branches 2
/// and 3 split the vertex flux budget d(t) evenly after subtracting the
/// branch-1 vertex contribution, so that
///   sum_i v_i(0) h_i^2 w_i(0, t) = d(t).
std::array<Field2, 3> solve_limit_problem_general(const NetworkSpec& spec,
                                                  const VelocityModel& vel,
                                                  const std::function<double(double)>& d,
                                                  const std::array<const Field2*, 3>& rhs,
                                                  const EdgeGridOptions& opt);

/// Max over the time grid of |sum_i v_i(0) h_i^2 w_i(0, t) - d(t)|; pass a
/// null d for the leading pair, where the budget is identically zero.
double kirchhoff_defect(const NetworkSpec& spec, const VelocityModel& vel,
                        const std::array<Field2, 3>& w,
                        const std::function<double(double)>& d);

} // namespace thinflow
