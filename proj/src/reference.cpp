#include "thinflow/reference.hpp"

#include "thinflow/errors.hpp"
#include "thinflow/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <utility>

namespace thinflow {

namespace {

double minmod(double a, double b) {
    if (a > 0.0 && b > 0.0) return std::min(a, b);
    if (a < 0.0 && b < 0.0) return std::max(a, b);
    return 0.0;
}

/// boundary face with a prescribed total flux: kind 0..2 = lateral wall of
/// that branch (args theta, x), kind 3 = node wall (args xi1..xi3)
struct WallFace {
    int cell = 0;
    int kind = 0;
    double w = 0.0;  // effective area, slab-normalized on the lateral walls
    std::array<double, 3> arg{};
};

struct BaseFace {
    int cell = 0;
    int edge = 0;
    double vb = 0.0;  // outward normal speed, area-corrected
};

/// interior face carrying flow, with the two upstream cells for the
/// second-order correction (negative id: missing, stay first order)
struct AdvFace {
    int c = 0, nb = 0;
    int upc = -1, upn = -1;
    double vf = 0.0;
};

struct System {
    int n = 0;
    std::vector<int> ptr, col;
    std::vector<double> val;     // spatial operator L, per unit cell volume
    std::vector<double> diagL;

    std::vector<WallFace> walls;
    std::vector<BaseFace> bases;
    std::vector<AdvFace> adv;

    double max_speed = 0.0;

    void apply(double a_over_dt, const double* x, double* y) const {
        for (int r = 0; r < n; ++r) {
            double acc = a_over_dt * x[r];
            for (int k = ptr[r]; k < ptr[r + 1]; ++k) acc += val[k] * x[col[k]];
            y[r] = acc;
        }
    }
};

/// outward normal speed through the face `d` of cell `c`. Faces touching the
/// cube read the staggered potential field; branch axial faces advect with the
/// area-corrected speed (exact continuum mass flux through the staircase
/// cross-section, matching the potential's port calibration), transverse
/// branch faces carry the scaled swirl components.
double face_speed(const VelocityModel& vel, const NodePotential& pot,
                  const VoxelMesh& mesh, double eps,
                  const std::array<double, 3>& rho, int c, int d, int nb) {
    const int a = VoxelMesh::dir_axis(d);
    const int sgn = VoxelMesh::dir_sign(d);
    const auto& k = mesh.cell[c];
    const double s = mesh.spacing;
    const bool cube_side = mesh.region[c] == 0 || (nb >= 0 && mesh.region[nb] == 0);
    if (cube_side) {
        const int plane = sgn > 0 ? k[a] + 1 : k[a];
        const double v = pot.face_velocity(a, plane, k[(a + 1) % 3], k[(a + 2) % 3]);
        return sgn > 0 ? v : -v;
    }
    const int i = mesh.region[c] - 1;
    const int plane = sgn > 0 ? k[a] + 1 : k[a];
    if (a == i) {
        const double v = vel.axial(i, plane * s) * rho[i];
        return sgn > 0 ? v : -v;
    }
    if (vel.transverse_zero(i)) return 0.0;
    const int j = (i + 1) % 3, kk = (i + 2) % 3;
    std::array<double, 3> x{};
    x[i] = (k[i] + 0.5) * s;
    x[j] = (k[j] + 0.5) * s;
    x[kk] = (k[kk] + 0.5) * s;
    x[a] = plane * s;
    const auto t = vel.transverse(i, x[i], x[j] / eps, x[kk] / eps);
    const double v = eps * (a == j ? t[0] : t[1]);
    return sgn > 0 ? v : -v;
}

System assemble(const NetworkSpec& spec, const VelocityModel& vel,
                const NodePotential& pot, const VoxelMesh& mesh, double eps,
                AreaDefect& area, std::vector<std::string>& warnings) {
    const double s = mesh.spacing;
    const int n = mesh.n_cells();

    // lattice alignment with the potential: one face, one velocity value
    if (pot.n_half() != mesh.n_half ||
        std::abs(pot.spacing() * eps - s) > 1e-12 * s)
        fail(errkind::GridMismatch,
             "solve_reference: node potential lattice must match mesh.spacing / eps");

    // per-branch staircase cross-sections and the area-correction factors
    std::array<double, 3> rho{1.0, 1.0, 1.0};
    std::array<int, 3> slice_cells{};
    for (int c = 0; c < n; ++c)
        if (mesh.region[c] != 0) ++slice_cells[mesh.region[c] - 1];
    for (int i = 0; i < 3; ++i) {
        slice_cells[i] /= mesh.n_axial[i];
        const double exact = M_PI * mesh.branch_radius[i] * mesh.branch_radius[i];
        const double stair = slice_cells[i] * s * s;
        rho[i] = exact / stair;
        area.base[i] = std::abs(stair - exact) / exact;
        if (mesh.branch_radius[i] / s < 6.0 - 1e-12)
            warnings.push_back("branch " + std::to_string(i + 1) +
                               ": fewer than 6 cells per radius");
    }
    std::array<double, 3> perimeter_faces{};
    for (int i = 0; i < 3; ++i) {
        const double count = mesh.count_faces(lateral_patch(i));
        perimeter_faces[i] = count / mesh.n_axial[i];
        const double exact = 2.0 * M_PI * mesh.branch_radius[i];
        area.lateral[i] = std::abs(perimeter_faces[i] * s - exact) / exact;
    }

    System sys;
    sys.n = n;
    const double idif = eps / (s * s);
    std::vector<std::vector<std::pair<int, double>>> rows(n);
    for (auto& r : rows) r.reserve(14);
    auto emit = [&rows](int r, int ccol, double w) { rows[r].emplace_back(ccol, w); };

    for (int c = 0; c < n; ++c) {
        for (int d = 0; d < 6; ++d) {
            const int nb = mesh.nbr[c][d];
            if (nb >= 0) {
                if (nb < c) continue;  // each interior face once, from the low cell
                const double vf = face_speed(vel, pot, mesh, eps, rho, c, d, nb);
                sys.max_speed = std::max(sys.max_speed, std::abs(vf));
                emit(c, c, idif);
                emit(c, nb, -idif);
                emit(nb, nb, idif);
                emit(nb, c, -idif);
                if (vf != 0.0) {
                    if (vf > 0.0) {
                        emit(c, c, vf / s);
                        emit(nb, c, -vf / s);
                    } else {
                        emit(c, nb, vf / s);
                        emit(nb, nb, -vf / s);
                    }
                    sys.adv.push_back({c, nb, mesh.nbr[c][d ^ 1], mesh.nbr[nb][d], vf});
                }
                continue;
            }
            const Patch p = VoxelMesh::decode_patch(nb);
            const int a = VoxelMesh::dir_axis(d);
            const int sgn = VoxelMesh::dir_sign(d);
            const auto& k = mesh.cell[c];
            if (p == Patch::node_surface) {
                WallFace f;
                f.cell = c;
                f.kind = 3;
                f.w = s * s;
                for (int ax = 0; ax < 3; ++ax) f.arg[ax] = (k[ax] + 0.5) * s / eps;
                // the datum lives on the nominal wall: snap the normal coordinate
                f.arg[a] = sgn > 0 ? spec.ell0 : -spec.ell0;
                sys.walls.push_back(f);
            } else if (p == lateral_patch(0) || p == lateral_patch(1) ||
                       p == lateral_patch(2)) {
                const int i = int(p) - int(Patch::lateral_1);
                const int j = (i + 1) % 3, kk = (i + 2) % 3;
                WallFace f;
                f.cell = c;
                f.kind = i;
                f.w = 2.0 * M_PI * mesh.branch_radius[i] * s / perimeter_faces[i];
                double xj = (k[j] + 0.5) * s, xk = (k[kk] + 0.5) * s;
                if (a == j) xj = (sgn > 0 ? k[a] + 1 : k[a]) * s;
                if (a == kk) xk = (sgn > 0 ? k[a] + 1 : k[a]) * s;
                f.arg = {std::atan2(xk, xj), (k[i] + 0.5) * s, 0.0};
                sys.walls.push_back(f);
            } else if (p == base_patch(0) || p == base_patch(1) || p == base_patch(2)) {
                const int i = int(p) - int(Patch::base_1);
                const double vb = vel.axial(i, mesh.branch_end[i]) * rho[i];
                sys.max_speed = std::max(sys.max_speed, std::abs(vb));
                emit(c, c, 2.0 * idif);
                if (vb > 0.0) emit(c, c, vb / s);
                sys.bases.push_back({c, i, vb});
            } else {
                fail(errkind::OutOfRegion,
                     "solve_reference: unexpected boundary patch on the junction mesh");
            }
        }
    }

    // compress to CSR
    sys.ptr.assign(n + 1, 0);
    sys.diagL.assign(n, 0.0);
    for (int r = 0; r < n; ++r) {
        auto& row = rows[r];
        std::sort(row.begin(), row.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        int uniq = 0;
        for (std::size_t q = 0; q < row.size();) {
            std::size_t j = q + 1;
            double w = row[q].second;
            while (j < row.size() && row[j].first == row[q].first) w += row[j++].second;
            row[uniq++] = {row[q].first, w};
            q = j;
        }
        row.resize(uniq);
        sys.ptr[r + 1] = sys.ptr[r] + uniq;
    }
    sys.col.reserve(sys.ptr[n]);
    sys.val.reserve(sys.ptr[n]);
    for (int r = 0; r < n; ++r) {
        for (const auto& [cc, w] : rows[r]) {
            sys.col.push_back(cc);
            sys.val.push_back(w);
            if (cc == r) sys.diagL[r] = w;
        }
    }
    return sys;
}

double wall_datum(const BoundaryData& data, const WallFace& f, double t) {
    if (f.kind == 3) return data.phi_node({f.arg[0], f.arg[1], f.arg[2], t});
    return data.phi_edge[f.kind]({f.arg[0], f.arg[1], t});
}

/// right-hand side of the implicit solve at time t1: boundary data plus the
/// deferred second-order advective correction evaluated on `state`
void data_rhs(const NetworkSpec& spec, const BoundaryData& data, const System& sys,
              double eps, double s, double t1, const std::vector<double>& state,
              std::vector<double>& b) {
    const double vol = s * s * s;
    const double ea = std::pow(eps, spec.alpha);
    const double idif = eps / (s * s);
    for (const WallFace& f : sys.walls)
        b[f.cell] -= ea * wall_datum(data, f, t1) * f.w / vol;
    for (const BaseFace& f : sys.bases) {
        const double q = data.q[f.edge]({t1});
        b[f.cell] += 2.0 * idif * q;
        if (f.vb < 0.0) b[f.cell] -= f.vb / s * q;
    }
    for (const AdvFace& f : sys.adv) {
        double corr = 0.0;
        if (f.vf > 0.0) {
            if (f.upc >= 0)
                corr = 0.5 * minmod(state[f.nb] - state[f.c], state[f.c] - state[f.upc]);
        } else {
            if (f.upn >= 0)
                corr = 0.5 * minmod(state[f.c] - state[f.nb], state[f.nb] - state[f.upn]);
        }
        if (corr != 0.0) {
            b[f.c] -= f.vf * corr / s;
            b[f.nb] += f.vf * corr / s;
        }
    }
}

/// total outward boundary flux at (u, t): prescribed wall fluxes plus the
/// resolved base fluxes (one-sided diffusion, upwinded advection)
double boundary_outflux(const NetworkSpec& spec, const BoundaryData& data,
                        const System& sys, double eps, double s, double t,
                        const std::vector<double>& u) {
    const double ea = std::pow(eps, spec.alpha);
    double out = 0.0;
    for (const WallFace& f : sys.walls) out += ea * wall_datum(data, f, t) * f.w;
    for (const BaseFace& f : sys.bases) {
        const double q = data.q[f.edge]({t});
        const double uc = u[f.cell];
        const double uface = f.vb > 0.0 ? uc : q;
        out += (2.0 * eps * (uc - q) / s + f.vb * uface) * s * s;
    }
    return out;
}

} // namespace

double ReferenceSolution::sample(const std::array<double, 3>& x, double t) const {
    const int c = mesh->locate(x);
    if (c < 0) fail(errkind::OutOfDomain, "reference sample: point outside the junction");
    const int ns = static_cast<int>(snap_times.size());
    if (t <= snap_times.front()) return snaps.front()[c];
    if (t >= snap_times.back()) return snaps.back()[c];
    int k = int(std::upper_bound(snap_times.begin(), snap_times.end(), t) -
                snap_times.begin()) - 1;
    k = std::clamp(k, 0, ns - 2);
    const double w = (t - snap_times[k]) / (snap_times[k + 1] - snap_times[k]);
    return (1.0 - w) * snaps[k][c] + w * snaps[k + 1][c];
}

void ReferenceSolution::write_snapshot_csv(std::ostream& os, int snap) const {
    os.precision(std::numeric_limits<double>::max_digits10);
    os << "x,y,z,value\n";
    for (int c = 0; c < mesh->n_cells(); ++c) {
        const auto x = mesh->center(c);
        os << x[0] << ',' << x[1] << ',' << x[2] << ',' << snaps[snap][c] << '\n';
    }
}

void ReferenceSolution::write_probes_csv(std::ostream& os) const {
    os.precision(std::numeric_limits<double>::max_digits10);
    os << 't';
    for (std::size_t p = 0; p < probes.size(); ++p) os << ",p" << p;
    os << '\n';
    for (std::size_t k = 0; k < step_times.size(); ++k) {
        os << step_times[k];
        for (std::size_t p = 0; p < probes.size(); ++p) os << ',' << probe_values[p][k];
        os << '\n';
    }
}

ReferenceSolution solve_reference(const NetworkSpec& spec, const VelocityModel& vel,
                                  const BoundaryData& data, double eps,
                                  std::shared_ptr<const VoxelMesh> mesh,
                                  const NodePotential& pot,
                                  const ReferenceOptions& opt) {
    spec.validate();
    vel.validate(spec);
    data.validate(spec);
    if (!(eps > 0.0)) fail(errkind::OutOfDomain, "solve_reference: eps must be positive");
    if (!(opt.dt > 0.0) || opt.dt > spec.horizon)
        fail(errkind::GridMismatch, "solve_reference: dt must lie in (0, horizon]");

    ReferenceSolution sol;
    sol.mesh = mesh;
    sol.eps = eps;
    sol.dt = opt.dt;
    sol.scheme = opt.scheme;

    const double s = mesh->spacing;
    const int n = mesh->n_cells();
    const double vol = s * s * s;
    System sys = assemble(spec, vel, pot, *mesh, eps, sol.area_defect, sol.warnings);

    const int nsteps = std::max(1, int(std::llround(spec.horizon / opt.dt)));
    const double dt = spec.horizon / nsteps;
    sol.dt = dt;
    if (sys.max_speed * dt / s > 2.0)
        sol.warnings.push_back("advective CFL above 2: dt is coarse for this spacing");

    std::vector<int> probe_cell;
    for (const auto& x : opt.probes) {
        const int c = mesh->locate(x);
        if (c < 0) fail(errkind::OutOfDomain, "solve_reference: probe outside the junction");
        probe_cell.push_back(c);
    }
    sol.probes = opt.probes;
    sol.probe_values.assign(opt.probes.size(), {});
    sol.step_times.push_back(0.0);
    for (std::size_t p = 0; p < probe_cell.size(); ++p) sol.probe_values[p].push_back(0.0);

    std::vector<double> u(n, 0.0), uprev(n, 0.0), b(n), x(n), inv_diag(n);
    sol.snap_times.push_back(0.0);
    sol.snaps.push_back(u);

    // one implicit (backward) step of size hdt from `from` at end time t1
    auto be_step = [&](const std::vector<double>& from, double hdt, double t1,
                       std::vector<double>& into) {
        const double aod = 1.0 / hdt;
        for (int c = 0; c < n; ++c) b[c] = from[c] / hdt;
        data_rhs(spec, data, sys, eps, s, t1, from, b);
        for (int c = 0; c < n; ++c) inv_diag[c] = 1.0 / (aod + sys.diagL[c]);
        into = from;
        const KrylovResult kr = bicgstab(
            std::size_t(n),
            [&](const double* in, double* out) { sys.apply(aod, in, out); }, b.data(),
            into.data(), inv_diag.data(), opt.krylov_tol, opt.krylov_max_iter);
        if (!kr.converged)
            fail(errkind::LinearSolveFailure, "solve_reference: implicit step stalled");
        sol.krylov_iterations = std::max(sol.krylov_iterations, kr.iterations);
        sol.krylov_residual = std::max(sol.krylov_residual, kr.residual);
    };

    const int n_mid = opt.temporal_check && nsteps >= 2 ? nsteps / 2 + 1 : -1;
    double mass_prev2 = 0.0, mass_prev = 0.0;
    std::vector<double> tmp, half;

    for (int step = 1; step <= nsteps; ++step) {
        const double t1 = spec.horizon * step / nsteps;
        const bool bdf2 = opt.scheme == TimeScheme::bdf2 && step >= 2;

        if (step == n_mid) {
            // step-halving misfit of the first-order substep, estimate only
            be_step(u, dt, t1, tmp);
            be_step(u, 0.5 * dt, t1 - 0.5 * dt, half);
            std::vector<double> half2;
            be_step(half, 0.5 * dt, t1, half2);
            double diff = 0.0, scale = 0.0;
            for (int c = 0; c < n; ++c) {
                diff = std::max(diff, std::abs(tmp[c] - half2[c]));
                scale = std::max(scale, std::abs(half2[c]));
            }
            sol.temporal_error_estimate = diff / std::max(scale, 1e-30);
            if (sol.temporal_error_estimate > opt.temporal_tol)
                sol.warnings.push_back(
                    "temporal error estimate above tolerance: refine dt");
        }

        if (!bdf2) {
            be_step(u, dt, t1, x);
        } else {
            const double aod = 1.5 / dt;
            for (int c = 0; c < n; ++c) {
                b[c] = (2.0 * u[c] - 0.5 * uprev[c]) / dt;
                x[c] = 2.0 * u[c] - uprev[c];  // extrapolated correction state
            }
            data_rhs(spec, data, sys, eps, s, t1, x, b);
            for (int c = 0; c < n; ++c) inv_diag[c] = 1.0 / (aod + sys.diagL[c]);
            x = u;
            const KrylovResult kr = bicgstab(
                std::size_t(n),
                [&](const double* in, double* out) { sys.apply(aod, in, out); },
                b.data(), x.data(), inv_diag.data(), opt.krylov_tol,
                opt.krylov_max_iter);
            if (!kr.converged)
                fail(errkind::LinearSolveFailure, "solve_reference: implicit step stalled");
            sol.krylov_iterations = std::max(sol.krylov_iterations, kr.iterations);
            sol.krylov_residual = std::max(sol.krylov_residual, kr.residual);
        }

        uprev = u;
        u = x;

        const double mass = vol * chunked_sum(u.data(), std::size_t(n));
        const double outflux = boundary_outflux(spec, data, sys, eps, s, t1, u);
        const double lhs = bdf2
                               ? (3.0 * mass - 4.0 * mass_prev + mass_prev2) / (2.0 * dt)
                               : (mass - mass_prev) / dt;
        const double scale =
            std::max({std::abs(mass), std::abs(mass_prev), dt * std::abs(outflux), 1e-30});
        MassLedgerRow row;
        row.t = t1;
        row.mass = mass;
        row.boundary_outflux = outflux;
        row.defect_rel = std::abs(lhs + outflux) * dt / scale;
        sol.ledger.push_back(row);
        sol.worst_mass_defect = std::max(sol.worst_mass_defect, row.defect_rel);
        mass_prev2 = mass_prev;
        mass_prev = mass;

        sol.step_times.push_back(t1);
        for (std::size_t p = 0; p < probe_cell.size(); ++p)
            sol.probe_values[p].push_back(u[probe_cell[p]]);
        if (step % std::max(1, opt.snapshot_every) == 0 || step == nsteps) {
            sol.snap_times.push_back(t1);
            sol.snaps.push_back(u);
        }
    }
    return sol;
}

} // namespace thinflow
