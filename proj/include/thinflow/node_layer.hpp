#pragma once

#include "thinflow/errors.hpp"
#include "thinflow/expr.hpp"
#include "thinflow/geometry.hpp"
#include "thinflow/order.hpp"
#include "thinflow/velocity.hpp"

#include <array>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace thinflow {

/// Scalar signal of time. A default-constructed (null) signal is the zero
/// signal; callers hand in closed forms so time derivatives stay exact.
using TimeSignal = std::function<double(double)>;

/// Vertex data of one branch entering the node problem at a given order:
/// the vertex value w(0,t) and the coefficients of the polynomial growth
///   Psi(xi,t) = sum_j xi^j / j! * psi[j-1](t),
/// where psi[j-1](t) is the j-th axial derivative at the vertex of the edge
/// field j orders below the current one.
struct NodeEdgeData {
    TimeSignal vertex;
    std::vector<TimeSignal> psi;
};

struct NodeLayerOptions {
    int t_samples = 32;            // uniform grid on [0, horizon]
    double horizon = 0.0;          // 0: use the network's horizon
    double krylov_tol = 1e-12;
    int krylov_max_iter = 4000;
    double solvability_tol = 1e-6; // vertex data vs gluing constant
    double cap_tol = 2e-2;         // |field at cap| / max|field| guard
    bool fd_time_derivative = false;  // fallback differentiation mode
};

/// Exponential decay diagnostics of one stub: least-squares fit of
/// log(cross-section mean |field|) over the middle third of the stub.
/// A field that has already decayed below the floating floor there gets
/// beta0 = +infinity (decay too fast to measure). cap_ratio compares the
/// largest cap-slice magnitude against the global maximum.
struct StubDecayFit {
    double beta0 = 0.0;
    double band = 0.0;        // two-sigma half width of the fitted slope
    double cap_ratio = 0.0;
    int fitted_slices = 0;
};

/// One Puiseux-order node corrector: the decaying remainder on the truncated
/// rescaled domain per time sample, together with the growth data used to
/// reconstruct the full field
///   N = remainder + sum_i (vertex_i + Psi_i(xi_i)) * chi_node(xi_i).
struct NodeField {
    OrderIndex order;
    std::vector<double> times;
    std::vector<std::vector<double>> values;           // [sample][cell]
    std::array<std::vector<double>, 3> vertex_values;  // [edge][sample]
    std::array<std::vector<std::vector<double>>, 3> psi_values;  // [edge][coef][sample]
    std::array<StubDecayFit, 3> decay;
    double cap_ratio = 0.0;            // worst stub
    double solvability_defect = 0.0;   // worst |sum_i h_i^2 v_i w_i(0,t) - d(t)|, scaled
    int krylov_iterations = 0;         // worst sample
    double krylov_residual = 0.0;      // worst sample
    std::string dt_mode;               // set on derivative fields: "resolve" / "finite-difference"
};

/// Gluing constant d(t) on the shared time grid; feeds the Kirchhoff vertex
/// condition of the edge solve one order up.
struct GluingConstant {
    OrderIndex order;
    std::vector<double> times;
    std::vector<double> d;

    void write_csv(std::ostream& os) const;
};

/// Full description of one node problem. `edge` carries the growth data of
/// the current order; `dt_prev_edge` the time-differentiated growth data of
/// the previous order (its vertex values and Psi coefficients), and
/// `dt_prev` the time derivative of the previous order's remainder field.
/// phi0(x,y,z,t) is the Neumann datum on the node walls; it participates
/// only at the first interaction order (p,k) = (1,0).
struct NodeProblem {
    OrderIndex order;
    NetworkSpec spec;
    VelocityModel vel;
    std::array<NodeEdgeData, 3> edge;
    std::array<NodeEdgeData, 3> dt_prev_edge;
    Expression phi0;
    const NodeField* dt_prev = nullptr;
    NodeLayerOptions opt;
};

/// Steady convection-diffusion solve for the decaying remainder, one linear
/// system per time sample. The mesh must come from build_rescaled_node and
/// the potential from the same spacing. The right-hand side applies the
/// discrete operator to voxel samples of the growth part (with analytic
/// ghost values beyond the truncation caps), so spatially constant growth
/// data is reproduced exactly; a volume-neutralizing source in the cube
/// closes the discrete books against the gluing identity, which makes the
/// remainder decay whenever the vertex data satisfies that identity.
/// Throws SolvabilityDefect when the data violates the identity beyond
/// tolerance and TruncationError when the cap magnitude exceeds cap_tol.
NodeField solve_node_problem(const VoxelMesh& mesh, const NodePotential& pot,
                             const NodeProblem& prob);

/// Gluing constant of the problem's order:
///   d(t) = -[order is (1,0)] (1/pi) * surface integral of phi0 over the node walls
///          - (1/pi) * volume integral of the previous order's dt remainder
///          + sum_i h_i^2 * integral (Psi' - v_i Psi) chi_node' dxi.
/// Identically zero for the base orders (1,-1) and (0,0).
GluingConstant compute_gluing_constant(const VoxelMesh& mesh, const NodePotential& pot,
                                       const NodeProblem& prob);

/// Time derivative of a solved field. Preferred mode re-solves with the
/// time-differentiated problem data in `dt_prob` (exact by linearity of the
/// steady solves in their data); with opt.fd_time_derivative set, second-order
/// finite differences across the sample grid are used instead and dt_prob
/// supplies only options. The mode taken is recorded on the result.
NodeField time_derivative_field(const VoxelMesh& mesh, const NodePotential& pot,
                                const NodeField& field, const NodeProblem& dt_prob);

/// Reconstructed full node field at a cell center: remainder plus the
/// cutoff-weighted growth part of the cell's stub (cube part: remainder).
double reconstruct_node_value(const NetworkSpec& spec, const VoxelMesh& mesh,
                              const NodeField& field, int cell, int sample);

/// Trilinear interpolation of the remainder between cell centers; corners
/// outside the staircase domain are dropped and the weights renormalized.
/// Throws OutOfDomain when no surrounding cell exists.
double sample_node_field(const VoxelMesh& mesh, const NodeField& field, int sample,
                         const std::array<double, 3>& xi);

/// ASCII dump of one voxel slice at one time sample: region 0 takes a cube
/// plane index in [0, 2*n_half), regions 1..3 a branch slice index counted
/// from the port plane. Cells outside the domain print as dots.
void dump_ascii_slice(const VoxelMesh& mesh, const NodeField& field, int sample,
                      int region, int slice, std::ostream& os);

} // namespace thinflow
