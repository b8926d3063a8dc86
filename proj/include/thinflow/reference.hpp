#pragma once

#include "thinflow/edge_transport.hpp"
#include "thinflow/geometry.hpp"
#include "thinflow/velocity.hpp"

#include <array>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace thinflow {

enum class TimeScheme { backward_euler, bdf2 };

struct ReferenceOptions {
    double dt = 2.5e-3;
    TimeScheme scheme = TimeScheme::backward_euler;
    double krylov_tol = 1e-10;
    int krylov_max_iter = 4000;
    int snapshot_every = 10;         // keep every k-th step (plus t=0 and T)
    bool temporal_check = true;      // mid-horizon step-halving error estimate
    double temporal_tol = 2e-2;      // estimate above this adds a warning
    std::vector<std::array<double, 3>> probes;  // per-step sampled points
};

/// One row of the discrete conservation ledger. For backward Euler the scheme
/// satisfies (mass_n - mass_{n-1})/dt + outflux_n = 0 up to the linear-solve
/// residual; the second-order scheme closes its own three-level identity.
/// defect_rel is that misfit relative to the step's mass scale.
struct MassLedgerRow {
    double t = 0.0;
    double mass = 0.0;
    double boundary_outflux = 0.0;   // total outward flux at this step's end
    double defect_rel = 0.0;
};

/// Staircase-vs-exact surface areas of the voxelized junction. The lateral
/// wall interaction is renormalized per axial slab to the exact cylinder
/// area, so the raw defect reported here does not bias the wall source term;
/// it still bounds the geometric error of the no-flux wall placement.
struct AreaDefect {
    std::array<double, 3> lateral{};  // |A_stair - 2 pi eps h (ell - cube)| / exact
    std::array<double, 3> base{};     // |A_stair - pi (eps h)^2| / exact
};

/// Direct finite-volume solution of the full transport problem on the
/// voxelized thin junction: cell-centered values at snapshot times, the
/// per-step mass ledger, probe series at full time resolution.
struct ReferenceSolution {
    std::shared_ptr<const VoxelMesh> mesh;
    double eps = 0.0;
    double dt = 0.0;
    TimeScheme scheme = TimeScheme::backward_euler;

    std::vector<double> snap_times;
    std::vector<std::vector<double>> snaps;       // [snapshot][cell]
    std::vector<MassLedgerRow> ledger;            // one row per completed step
    double worst_mass_defect = 0.0;

    std::vector<std::array<double, 3>> probes;
    std::vector<double> step_times;               // 0, dt, ..., horizon
    std::vector<std::vector<double>> probe_values;  // [probe][step]

    AreaDefect area_defect;
    double temporal_error_estimate = 0.0;  // mid-horizon step-halving misfit
    std::vector<std::string> warnings;
    int krylov_iterations = 0;    // worst step
    double krylov_residual = 0.0; // worst step

    /// cell value at a snapshot
    double value(int snap, int cell) const { return snaps[snap][cell]; }
    /// piecewise-constant in space, linear in time between snapshots;
    /// throws OutOfDomain when no cell contains x
    double sample(const std::array<double, 3>& x, double t) const;

    /// "x,y,z,value" rows for one snapshot, deterministic cell order
    void write_snapshot_csv(std::ostream& os, int snap) const;
    /// one column per probe at full step resolution
    void write_probes_csv(std::ostream& os) const;
};

/// Solve the full problem on mesh = build_thin_junction(spec, eps, ...):
/// implicit time stepping (unconditionally stable), first-order upwind
/// convection in the implicit operator plus a deferred minmod-limited
/// second-order upwind correction, prescribed total flux on the walls and
/// Dirichlet traces q_i at the branch bases. The node-region velocity is read
/// from `pot`, which must be built at spacing mesh.spacing / eps so the two
/// lattices align face-for-face; branch faces advect with the area-corrected
/// axial speed, matching the potential's port calibration exactly.
/// Throws GridMismatch on lattice misalignment, LinearSolveFailure when a
/// step's system does not converge.
ReferenceSolution solve_reference(const NetworkSpec& spec, const VelocityModel& vel,
                                  const BoundaryData& data, double eps,
                                  std::shared_ptr<const VoxelMesh> mesh,
                                  const NodePotential& pot,
                                  const ReferenceOptions& opt = {});

} // namespace thinflow
