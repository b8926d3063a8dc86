#include "thinflow/node_layer.hpp"

#include "thinflow/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <ostream>
#include <utility>
#include <vector>

namespace thinflow {

namespace {

double eval_signal(const TimeSignal& f, double t) { return f ? f(t) : 0.0; }

bool base_order(OrderIndex o) {
    return o == OrderIndex{1, -1} || o == OrderIndex{0, 0};
}

/// Polynomial part of the growth data on one stub: sum_j xi^j/j! psi[j-1].
double eval_psi(const NodeEdgeData& ed, double xi, double t) {
    double g = 0.0;
    double pw = 1.0;
    for (std::size_t j = 0; j < ed.psi.size(); ++j) {
        pw *= xi / double(j + 1);
        if (ed.psi[j]) g += pw * ed.psi[j](t);
    }
    return g;
}

/// Full growth part: vertex value plus the Taylor polynomial.
double eval_growth(const NodeEdgeData& ed, double xi, double t) {
    return eval_signal(ed.vertex, t) + eval_psi(ed, xi, t);
}

/// Outward normal velocity through face d of cell c. Cube faces read the
/// staggered potential gradient; stub faces carry the constant port speed
/// along the stub axis and nothing transversally, so the two sides of every
/// interior face agree exactly and the discrete books telescope.
double face_speed(const VoxelMesh& mesh, const NodePotential& pot, int c, int d) {
    const int a = VoxelMesh::dir_axis(d);
    const int sgn = VoxelMesh::dir_sign(d);
    const auto& k = mesh.cell[c];
    if (mesh.region[c] == 0) {
        const int plane = sgn > 0 ? k[a] + 1 : k[a];
        const double v = pot.face_velocity(a, plane, k[(a + 1) % 3], k[(a + 2) % 3]);
        return sgn > 0 ? v : -v;
    }
    const int axis = mesh.region[c] - 1;
    if (a != axis) return 0.0;
    const double v = pot.port_speed(axis);
    return sgn > 0 ? v : -v;
}

/// One row of the finite-volume operator -Laplace + div(V .), cell-centered,
/// central diffusion and second-order upwind (linear upwind) convection with a
/// first-order fallback where the second upwind cell is missing. emit(col, w)
/// receives matrix entries; ghost(stub, w) receives couplings to the analytic
/// far-field value beyond the truncation cap of that stub.
///
/// Two cap policies share the rest of the row:
///  - ghost_caps = false (the solved operator): homogeneous-Neumann diffusion,
///    upwind convection with exterior value 0 on inflow caps. The row sums of
///    this operator vanish except on inflow-cap rows, which pins the constant
///    mode, and its volume-weighted column sums reduce to the outflow-cap
///    fluxes, which is the discrete gluing identity.
///  - ghost_caps = true (right-hand side assembly): central diffusion and
///    central convection against the ghost sample, exact for fields linear in
///    the axial coordinate, so constant growth data produces a zero residual.
///
/// axial_diff_scale (nullable, one factor per stub) rescales the diffusive
/// couplings on stub axial faces. The stubs advect with the area-corrected
/// speed pi h^2 v / A, where A is the staircase cross-section, so polynomial
/// growth data needs its axial diffusion weighted by pi h^2 / A as well;
/// otherwise the transport identity that makes the far-field residual vanish
/// picks up an O(s) area defect along the whole stub. The solved operator and
/// the cross-sectionally constant part of the data use the unscaled couplings.
template <class Emit, class Ghost>
void operator_row(const VoxelMesh& mesh, const NodePotential& pot, int c, bool ghost_caps,
                  const double* axial_diff_scale, Emit&& emit, Ghost&& ghost) {
    const double s = mesh.spacing;
    const double idif0 = 1.0 / (s * s);
    const int reg = mesh.region[c];
    for (int d = 0; d < 6; ++d) {
        const int nb = mesh.nbr[c][d];
        const double vf = face_speed(mesh, pot, c, d);
        const double idif = (axial_diff_scale && reg != 0 && VoxelMesh::dir_axis(d) == reg - 1)
                                ? idif0 * axial_diff_scale[reg - 1]
                                : idif0;
        if (nb >= 0) {
            emit(c, idif);
            emit(nb, -idif);
            if (vf > 0.0) {
                const int up = mesh.nbr[c][d ^ 1];
                if (up >= 0) {
                    emit(c, 1.5 * vf / s);
                    emit(up, -0.5 * vf / s);
                } else {
                    emit(c, vf / s);
                }
            } else if (vf < 0.0) {
                const int up = mesh.nbr[nb][d];
                if (up >= 0) {
                    emit(nb, 1.5 * vf / s);
                    emit(up, -0.5 * vf / s);
                } else {
                    emit(nb, vf / s);
                }
            }
            continue;
        }
        const Patch p = VoxelMesh::decode_patch(nb);
        if (p != Patch::cap_1 && p != Patch::cap_2 && p != Patch::cap_3)
            continue;  // walls: no normal flow, flux data goes to the rhs
        const int stub = int(p) - int(Patch::cap_1);
        if (ghost_caps) {
            emit(c, idif);
            ghost(stub, -idif);
            emit(c, 0.5 * vf / s);
            ghost(stub, 0.5 * vf / s);
        } else if (vf > 0.0) {
            const int up = mesh.nbr[c][d ^ 1];
            if (up >= 0) {
                emit(c, 1.5 * vf / s);
                emit(up, -0.5 * vf / s);
            } else {
                emit(c, vf / s);
            }
        }
        // inflow cap: the upwind exterior value is zero, no entries
    }
}

struct Csr {
    int n = 0;
    std::vector<int> ptr, col;
    std::vector<double> val;
    std::vector<double> inv_diag;

    void apply(const double* x, double* y) const {
        for (int r = 0; r < n; ++r) {
            double acc = 0.0;
            for (int k = ptr[r]; k < ptr[r + 1]; ++k) acc += val[k] * x[col[k]];
            y[r] = acc;
        }
    }
};

Csr assemble_operator(const VoxelMesh& mesh, const NodePotential& pot) {
    const int n = mesh.n_cells();
    std::vector<std::vector<std::pair<int, double>>> rows(n);
    for (int c = 0; c < n; ++c) {
        rows[c].reserve(12);
        operator_row(
            mesh, pot, c, false, nullptr,
            [&](int col, double w) { rows[c].emplace_back(col, w); },
            [](int, double) {});
    }
    Csr A;
    A.n = n;
    A.ptr.assign(n + 1, 0);
    A.inv_diag.assign(n, 0.0);
    for (int r = 0; r < n; ++r) {
        auto& row = rows[r];
        std::sort(row.begin(), row.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        int uniq = 0;
        for (std::size_t k = 0; k < row.size();) {
            std::size_t j = k + 1;
            double w = row[k].second;
            while (j < row.size() && row[j].first == row[k].first) w += row[j++].second;
            row[uniq++] = {row[k].first, w};
            k = j;
        }
        row.resize(uniq);
        A.ptr[r + 1] = A.ptr[r] + uniq;
    }
    A.col.reserve(A.ptr[n]);
    A.val.reserve(A.ptr[n]);
    for (int r = 0; r < n; ++r) {
        double diag = 0.0;
        for (const auto& [cc, w] : rows[r]) {
            A.col.push_back(cc);
            A.val.push_back(w);
            if (cc == r) diag = w;
        }
        if (!(diag > 0.0))
            fail(errkind::LinearSolveFailure, "non-positive diagonal in node operator row");
        A.inv_diag[r] = 1.0 / diag;
    }
    return A;
}

std::vector<double> make_times(const NetworkSpec& spec, const NodeLayerOptions& opt) {
    const double T = opt.horizon > 0.0 ? opt.horizon : spec.horizon;
    const int n = opt.t_samples;
    std::vector<double> t(n);
    for (int j = 0; j < n; ++j) t[j] = T * double(j) / double(n - 1);
    return t;
}

void check_mesh_pair(const VoxelMesh& mesh, const NodePotential& pot) {
    if (mesh.n_half <= 0 || mesh.count_faces(Patch::cap_1) == 0)
        fail(errkind::GridMismatch, "node solver needs a rescaled node mesh with truncation caps");
    if (pot.n_half() != mesh.n_half ||
        std::abs(pot.spacing() - mesh.spacing) > 1e-12 * mesh.spacing)
        fail(errkind::GridMismatch, "node mesh and potential were built on different grids");
}

void check_dt_prev(const VoxelMesh& mesh, const NodeProblem& prob,
                   const std::vector<double>& times) {
    if (!prob.dt_prev) return;
    const NodeField& f = *prob.dt_prev;
    if (f.times.size() != times.size() || f.values.size() != times.size())
        fail(errkind::GridMismatch, "previous-order derivative field sits on a different time grid");
    for (std::size_t j = 0; j < times.size(); ++j)
        if (std::abs(f.times[j] - times[j]) > 1e-12 * (1.0 + times.back()))
            fail(errkind::GridMismatch, "previous-order derivative field sits on a different time grid");
    for (const auto& row : f.values)
        if (int(row.size()) != mesh.n_cells())
            fail(errkind::GridMismatch, "previous-order derivative field sits on a different mesh");
}

/// The gluing constant on the sample grid:
///   d(t) = -[order alpha] (1/pi) * integral of phi0 over the node walls
///          - (1/pi) * volume integral of the previous order's time derivative
///          + sum_i h_i^2 * integral (Psi_i' - v_i Psi_i) chi' dxi,
/// with chi the node cutoff. The base orders carry no data and return zeros.
std::vector<double> glue_values(const VoxelMesh& mesh, const NodeProblem& prob,
                                const std::vector<double>& times) {
    const std::size_t nt = times.size();
    std::vector<double> d(nt, 0.0);
    if (base_order(prob.order)) return d;

    const bool with_phi0 = prob.order == OrderIndex{1, 0} && !prob.phi0.is_zero();
    const double inv_pi = 1.0 / std::numbers::pi;

    // surface term, tensor Gauss-4 per boundary face of the node walls
    if (with_phi0) {
        static constexpr double gx[4] = {-0.8611363115940526, -0.3399810435848563,
                                         0.3399810435848563, 0.8611363115940526};
        static constexpr double gw[4] = {0.3478548451374538, 0.6521451548625461,
                                         0.6521451548625461, 0.3478548451374538};
        const double s = mesh.spacing;
        for (int c = 0; c < mesh.n_cells(); ++c) {
            if (mesh.region[c] != 0) continue;
            for (int dir = 0; dir < 6; ++dir) {
                const int nb = mesh.nbr[c][dir];
                if (nb >= 0 || VoxelMesh::decode_patch(nb) != Patch::node_surface) continue;
                const int a = VoxelMesh::dir_axis(dir);
                const int t1 = (a + 1) % 3, t2 = (a + 2) % 3;
                auto fc = mesh.center(c);
                fc[a] += 0.5 * s * VoxelMesh::dir_sign(dir);
                for (std::size_t j = 0; j < nt; ++j) {
                    double acc = 0.0;
                    for (int qa = 0; qa < 4; ++qa)
                        for (int qb = 0; qb < 4; ++qb) {
                            auto x = fc;
                            x[t1] += 0.5 * s * gx[qa];
                            x[t2] += 0.5 * s * gx[qb];
                            acc += gw[qa] * gw[qb] * prob.phi0({x[0], x[1], x[2], times[j]});
                        }
                    d[j] -= inv_pi * acc * 0.25 * s * s;
                }
            }
        }
    }

    // volume term: midpoint rule over the stored derivative samples
    if (prob.dt_prev) {
        const double vol = mesh.cell_volume();
        for (std::size_t j = 0; j < nt; ++j) {
            const auto& row = prob.dt_prev->values[j];
            d[j] -= inv_pi * vol * chunked_sum(row.data(), row.size());
        }
    }

    // growth term: composite Gauss-5 against the cutoff derivative
    {
        static constexpr double gx[5] = {-0.9061798459386640, -0.5384693101056831, 0.0,
                                         0.5384693101056831, 0.9061798459386640};
        static constexpr double gw[5] = {0.2369268850561891, 0.4786286704993665,
                                         0.5688888888888889, 0.4786286704993665,
                                         0.2369268850561891};
        const Cutoff chi = prob.spec.chi_node();
        const int sub = 16;
        const double lo = chi.lo(), hi = chi.hi();
        const double hseg = (hi - lo) / sub;
        for (int i = 0; i < 3; ++i) {
            const auto& psi = prob.edge[i].psi;
            if (psi.empty()) continue;
            const double hi2 = prob.spec.h[i] * prob.spec.h[i];
            const double v = prob.vel.v_node(i);
            for (std::size_t j = 0; j < nt; ++j) {
                std::vector<double> a(psi.size());
                bool any = false;
                for (std::size_t jj = 0; jj < psi.size(); ++jj) {
                    a[jj] = eval_signal(psi[jj], times[j]);
                    any = any || a[jj] != 0.0;
                }
                if (!any) continue;
                double acc = 0.0;
                for (int seg = 0; seg < sub; ++seg) {
                    const double mid = lo + (seg + 0.5) * hseg;
                    for (int q = 0; q < 5; ++q) {
                        const double xi = mid + 0.5 * hseg * gx[q];
                        double val = 0.0, der = 0.0, pw = 1.0;
                        for (std::size_t jj = 0; jj < a.size(); ++jj) {
                            der += pw * a[jj];
                            pw *= xi / double(jj + 1);
                            val += pw * a[jj];
                        }
                        acc += gw[q] * 0.5 * hseg * (der - v * val) * chi.d1(xi);
                    }
                }
                d[j] += hi2 * acc;
            }
        }
    }
    return d;
}

struct StubSlices {
    std::array<std::vector<std::vector<int>>, 3> cells;  // [stub][slice] -> cell ids
};

StubSlices collect_slices(const VoxelMesh& mesh) {
    StubSlices out;
    for (int i = 0; i < 3; ++i) out.cells[i].resize(std::max(mesh.n_axial[i], 0));
    for (int c = 0; c < mesh.n_cells(); ++c) {
        if (mesh.region[c] == 0) continue;
        out.cells[mesh.region[c] - 1][mesh.branch_slice(c)].push_back(c);
    }
    return out;
}

double global_abs_max(const std::vector<std::vector<double>>& values) {
    double m = 0.0;
    for (const auto& row : values)
        for (double v : row) m = std::max(m, std::abs(v));
    return m;
}

/// Least-squares decay fit of one stub: slice means of |field| (worst time
/// sample per slice) over the middle third of the stub, log-linear fit. Slices
/// below the noise floor are dropped; fewer than three usable slices means the
/// field has already decayed past measurability and reports beta0 = +inf.
StubDecayFit fit_stub(const VoxelMesh& mesh, const StubSlices& slices, int i,
                      const std::vector<std::vector<double>>& values, double gmax) {
    StubDecayFit fit;
    const int nq = int(slices.cells[i].size());
    if (nq == 0) {
        fit.beta0 = std::numeric_limits<double>::infinity();
        return fit;
    }
    const double s = mesh.spacing;
    std::vector<double> mean_q(nq, 0.0);
    for (int q = 0; q < nq; ++q) {
        const auto& cells = slices.cells[i][q];
        if (cells.empty()) continue;
        double worst = 0.0;
        for (const auto& row : values) {
            double acc = 0.0;
            for (int c : cells) acc += std::abs(row[c]);
            worst = std::max(worst, acc / double(cells.size()));
        }
        mean_q[q] = worst;
    }

    // cap ratio: largest magnitude on the final slice against the global max
    {
        double cap = 0.0;
        for (int c : slices.cells[i][nq - 1])
            for (const auto& row : values) cap = std::max(cap, std::abs(row[c]));
        fit.cap_ratio = cap / (1e-300 + gmax);
    }

    const double lo = mesh.cube_half + (mesh.branch_end[i] - mesh.cube_half) / 3.0;
    const double hi = mesh.cube_half + 2.0 * (mesh.branch_end[i] - mesh.cube_half) / 3.0;
    const double floor = 1e-8 * (1.0 + gmax);
    std::vector<double> xs, ys;
    for (int q = 0; q < nq; ++q) {
        const double xi = mesh.cube_half + (q + 0.5) * s;
        if (xi < lo || xi > hi || mean_q[q] <= floor) continue;
        xs.push_back(xi);
        ys.push_back(std::log(mean_q[q]));
    }
    fit.fitted_slices = int(xs.size());
    if (xs.size() < 3) {
        fit.beta0 = std::numeric_limits<double>::infinity();
        fit.band = 0.0;
        return fit;
    }
    const double n = double(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        sx += xs[k];
        sy += ys[k];
        sxx += xs[k] * xs[k];
        sxy += xs[k] * ys[k];
    }
    const double det = n * sxx - sx * sx;
    const double slope = (n * sxy - sx * sy) / det;
    const double icpt = (sy - slope * sx) / n;
    double ssr = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const double r = ys[k] - (icpt + slope * xs[k]);
        ssr += r * r;
    }
    fit.beta0 = -slope;
    fit.band = xs.size() > 2 ? 2.0 * std::sqrt(std::max(ssr, 0.0) / (n - 2.0) * n / det) : 0.0;
    return fit;
}

void finish_diagnostics(const VoxelMesh& mesh, const StubSlices& slices, NodeField& f,
                        double cap_tol, bool enforce_cap) {
    const double gmax = global_abs_max(f.values);
    f.cap_ratio = 0.0;
    for (int i = 0; i < 3; ++i) {
        f.decay[i] = fit_stub(mesh, slices, i, f.values, gmax);
        f.cap_ratio = std::max(f.cap_ratio, f.decay[i].cap_ratio);
    }
    if (enforce_cap && f.cap_ratio > cap_tol) {
        char msg[160];
        std::snprintf(msg, sizeof msg,
                      "field magnitude %.3e of its maximum at a truncation cap exceeds %.3e; "
                      "extend the stubs",
                      f.cap_ratio, cap_tol);
        fail(errkind::TruncationError, msg);
    }
}

NodeField solve_impl(const VoxelMesh& mesh, const NodePotential& pot, const NodeProblem& prob,
                     std::vector<double> times) {
    prob.spec.validate();
    check_mesh_pair(mesh, pot);
    check_dt_prev(mesh, prob, times);

    const int n = mesh.n_cells();
    const std::size_t nt = times.size();
    const double s = mesh.spacing;
    const Cutoff chi = prob.spec.chi_node();

    const Csr A = assemble_operator(mesh, pot);
    const std::vector<double> d = glue_values(mesh, prob, times);

    // growth samples are cross-sectionally constant: one value per stub slice
    const StubSlices slices = collect_slices(mesh);
    std::array<std::vector<double>, 3> xi_q;
    for (int i = 0; i < 3; ++i) {
        xi_q[i].resize(mesh.n_axial[i]);
        for (int q = 0; q < mesh.n_axial[i]; ++q)
            xi_q[i][q] = mesh.cube_half + (q + 0.5) * s;
    }

    // true-disk to staircase area ratio per stub: the polynomial growth part
    // and the inherited time-derivative source are cross-section integrals over
    // the physical disk, so on the staircase their densities carry pi h^2 / A
    std::array<double, 3> dscale{1.0, 1.0, 1.0};
    for (int i = 0; i < 3; ++i)
        if (!slices.cells[i].empty() && !slices.cells[i][0].empty())
            dscale[i] = std::numbers::pi * prob.spec.h[i] * prob.spec.h[i] /
                        (double(slices.cells[i][0].size()) * s * s);

    // node-wall faces carrying the flux datum at the first interaction order
    const bool with_phi0 = prob.order == OrderIndex{1, 0} && !prob.phi0.is_zero();
    struct WallFace {
        int cell;
        std::array<double, 3> x;
    };
    std::vector<WallFace> wall;
    if (with_phi0) {
        for (int c = 0; c < n; ++c) {
            if (mesh.region[c] != 0) continue;
            for (int dir = 0; dir < 6; ++dir) {
                const int nb = mesh.nbr[c][dir];
                if (nb >= 0 || VoxelMesh::decode_patch(nb) != Patch::node_surface) continue;
                auto x = mesh.center(c);
                x[VoxelMesh::dir_axis(dir)] += 0.5 * s * VoxelMesh::dir_sign(dir);
                wall.push_back({c, x});
            }
        }
    }

    int n_cube = 0;
    for (int c = 0; c < n; ++c)
        if (mesh.region[c] == 0) ++n_cube;
    const double source_weight = 1.0 / (double(n_cube) * mesh.cell_volume());

    NodeField f;
    f.order = prob.order;
    f.times = times;
    f.values.assign(nt, std::vector<double>(n, 0.0));
    for (int i = 0; i < 3; ++i) {
        f.vertex_values[i].assign(nt, 0.0);
        f.psi_values[i].assign(prob.edge[i].psi.size(), std::vector<double>(nt, 0.0));
    }

    std::vector<double> b(n), x(n, 0.0);
    std::vector<double> Kc(n), Kp(n);
    std::array<double, 3> ghostKc{}, ghostKp{};
    std::array<std::vector<double>, 3> Kc_slice, Kp_slice, dtK_slice;
    for (int i = 0; i < 3; ++i) {
        Kc_slice[i].resize(mesh.n_axial[i]);
        Kp_slice[i].resize(mesh.n_axial[i]);
        dtK_slice[i].resize(mesh.n_axial[i]);
    }

    for (std::size_t j = 0; j < nt; ++j) {
        const double t = times[j];

        std::array<double, 3> vertex{};
        for (int i = 0; i < 3; ++i) {
            vertex[i] = eval_signal(prob.edge[i].vertex, t);
            f.vertex_values[i][j] = vertex[i];
            for (std::size_t jj = 0; jj < prob.edge[i].psi.size(); ++jj)
                f.psi_values[i][jj][j] = eval_signal(prob.edge[i].psi[jj], t);
            for (int q = 0; q < mesh.n_axial[i]; ++q) {
                const double cxi = chi(xi_q[i][q]);
                if (cxi == 0.0) {
                    Kc_slice[i][q] = Kp_slice[i][q] = dtK_slice[i][q] = 0.0;
                    continue;
                }
                Kc_slice[i][q] = cxi * vertex[i];
                Kp_slice[i][q] = cxi * eval_psi(prob.edge[i], xi_q[i][q], t);
                dtK_slice[i][q] =
                    cxi * dscale[i] * eval_growth(prob.dt_prev_edge[i], xi_q[i][q], t);
            }
            const double xg = mesh.branch_end[i] + 0.5 * s;
            ghostKc[i] = chi(xg) * vertex[i];
            ghostKp[i] = chi(xg) * eval_psi(prob.edge[i], xg, t);
        }
        for (int c = 0; c < n; ++c) {
            if (mesh.region[c] == 0) {
                Kc[c] = Kp[c] = 0.0;
            } else {
                const int q = mesh.branch_slice(c);
                Kc[c] = Kc_slice[mesh.region[c] - 1][q];
                Kp[c] = Kp_slice[mesh.region[c] - 1][q];
            }
        }

        // rhs: minus the operator applied to the growth part (ghost caps),
        // minus the previous order's time derivative, plus the wall datum
        for (int c = 0; c < n; ++c) {
            double acc = 0.0;
            operator_row(
                mesh, pot, c, true, nullptr,
                [&](int col, double w) { acc += w * Kc[col]; },
                [&](int stub, double w) { acc += w * ghostKc[stub]; });
            operator_row(
                mesh, pot, c, true, dscale.data(),
                [&](int col, double w) { acc += w * Kp[col]; },
                [&](int stub, double w) { acc += w * ghostKp[stub]; });
            b[c] = -acc;
            if (mesh.region[c] != 0)
                b[c] -= dtK_slice[mesh.region[c] - 1][mesh.branch_slice(c)];
        }
        if (prob.dt_prev) {
            const auto& row = prob.dt_prev->values[j];
            for (int c = 0; c < n; ++c) b[c] -= row[c];
        }
        for (const auto& wf : wall)
            b[wf.cell] -= prob.phi0({wf.x[0], wf.x[1], wf.x[2], t}) / s;

        // discrete books against the gluing identity: the flux the vertex data
        // asks for, minus what the assembled right-hand side already carries
        double flux_sum = 0.0, flux_abs = 0.0;
        for (int i = 0; i < 3; ++i) {
            const double q = prob.spec.h[i] * prob.spec.h[i] * prob.vel.v_node(i) * vertex[i];
            flux_sum += q;
            flux_abs += std::abs(q);
        }
        const double excess = flux_sum - d[j];
        const double defect = std::abs(excess) / (1.0 + std::abs(d[j]) + flux_abs);
        if (defect > prob.opt.solvability_tol) {
            char msg[160];
            std::snprintf(msg, sizeof msg,
                          "vertex data violates the gluing identity at t=%.6g "
                          "(scaled defect %.3e, tolerance %.3e)",
                          t, defect, prob.opt.solvability_tol);
            fail(errkind::SolvabilityDefect, msg);
        }
        f.solvability_defect = std::max(f.solvability_defect, defect);

        const double raw = mesh.cell_volume() * chunked_sum(b.data(), b.size());
        const double g = std::numbers::pi * excess - raw;
        if (g != 0.0)
            for (int c = 0; c < n; ++c)
                if (mesh.region[c] == 0) b[c] += g * source_weight;

        const KrylovResult kr =
            bicgstab(std::size_t(n), [&](const double* in, double* out) { A.apply(in, out); },
                     b.data(), x.data(), A.inv_diag.data(), prob.opt.krylov_tol,
                     prob.opt.krylov_max_iter);
        if (!kr.converged) {
            char msg[160];
            std::snprintf(msg, sizeof msg,
                          "node solve stalled at t=%.6g (residual %.3e after %d iterations)", t,
                          kr.residual, kr.iterations);
            fail(errkind::LinearSolveFailure, msg);
        }
        f.krylov_iterations = std::max(f.krylov_iterations, kr.iterations);
        f.krylov_residual = std::max(f.krylov_residual, kr.residual);
        f.values[j] = x;  // next sample warm-starts from this one
    }

    finish_diagnostics(mesh, slices, f, prob.opt.cap_tol, true);
    return f;
}

}  // namespace

NodeField solve_node_problem(const VoxelMesh& mesh, const NodePotential& pot,
                             const NodeProblem& prob) {
    if (prob.opt.t_samples < 4)
        fail(errkind::SpacingTooCoarse, "node solve needs at least 4 time samples");
    return solve_impl(mesh, pot, prob, make_times(prob.spec, prob.opt));
}

GluingConstant compute_gluing_constant(const VoxelMesh& mesh, const NodePotential& pot,
                                       const NodeProblem& prob) {
    prob.spec.validate();
    check_mesh_pair(mesh, pot);
    if (prob.opt.t_samples < 2)
        fail(errkind::SpacingTooCoarse, "gluing constant needs at least 2 time samples");
    GluingConstant g;
    g.order = prob.order;
    g.times = make_times(prob.spec, prob.opt);
    check_dt_prev(mesh, prob, g.times);
    g.d = glue_values(mesh, prob, g.times);
    return g;
}

NodeField time_derivative_field(const VoxelMesh& mesh, const NodePotential& pot,
                                const NodeField& field, const NodeProblem& dt_prob) {
    if (field.times.size() < 3)
        fail(errkind::SpacingTooCoarse, "time derivative needs at least 3 samples");
    if (field.values.size() != field.times.size())
        fail(errkind::GridMismatch, "field sample count does not match its time grid");
    for (const auto& row : field.values)
        if (int(row.size()) != mesh.n_cells())
            fail(errkind::GridMismatch, "field was solved on a different mesh");

    if (!dt_prob.opt.fd_time_derivative) {
        NodeField out = solve_impl(mesh, pot, dt_prob, field.times);
        out.dt_mode = "resolve";
        return out;
    }

    const std::size_t nt = field.times.size();
    const double dt = field.times[1] - field.times[0];
    auto diff = [&](auto&& get, auto&& set) {
        // centered interior, one-sided second order at the ends
        set(0, (-3.0 * get(0) + 4.0 * get(1) - get(2)) / (2.0 * dt));
        for (std::size_t j = 1; j + 1 < nt; ++j) set(j, (get(j + 1) - get(j - 1)) / (2.0 * dt));
        set(nt - 1, (3.0 * get(nt - 1) - 4.0 * get(nt - 2) + get(nt - 3)) / (2.0 * dt));
    };

    NodeField out;
    out.order = field.order;
    out.times = field.times;
    out.values.assign(nt, std::vector<double>(mesh.n_cells(), 0.0));
    for (int c = 0; c < mesh.n_cells(); ++c)
        diff([&](std::size_t j) { return field.values[j][c]; },
             [&](std::size_t j, double v) { out.values[j][c] = v; });
    for (int i = 0; i < 3; ++i) {
        out.vertex_values[i].assign(nt, 0.0);
        if (field.vertex_values[i].size() == nt)
            diff([&](std::size_t j) { return field.vertex_values[i][j]; },
                 [&](std::size_t j, double v) { out.vertex_values[i][j] = v; });
        out.psi_values[i].assign(field.psi_values[i].size(), std::vector<double>(nt, 0.0));
        for (std::size_t jj = 0; jj < field.psi_values[i].size(); ++jj)
            if (field.psi_values[i][jj].size() == nt)
                diff([&](std::size_t j) { return field.psi_values[i][jj][j]; },
                     [&](std::size_t j, double v) { out.psi_values[i][jj][j] = v; });
    }
    out.dt_mode = "finite-difference";
    out.solvability_defect = 0.0;
    out.krylov_iterations = 0;
    out.krylov_residual = 0.0;
    const StubSlices slices = collect_slices(mesh);
    finish_diagnostics(mesh, slices, out, dt_prob.opt.cap_tol, false);
    return out;
}

double reconstruct_node_value(const NetworkSpec& spec, const VoxelMesh& mesh,
                              const NodeField& field, int cell, int sample) {
    if (cell < 0 || cell >= mesh.n_cells() || sample < 0 ||
        std::size_t(sample) >= field.values.size())
        fail(errkind::OutOfRegion, "cell or sample index out of range");
    double v = field.values[sample][cell];
    if (mesh.region[cell] == 0) return v;
    const int i = mesh.region[cell] - 1;
    const double xi = mesh.center(cell)[i];
    double g = field.vertex_values[i].empty() ? 0.0 : field.vertex_values[i][sample];
    double pw = 1.0;
    for (std::size_t jj = 0; jj < field.psi_values[i].size(); ++jj) {
        pw *= xi / double(jj + 1);
        g += pw * field.psi_values[i][jj][sample];
    }
    return v + spec.chi_node()(xi) * g;
}

double sample_node_field(const VoxelMesh& mesh, const NodeField& field, int sample,
                         const std::array<double, 3>& xi) {
    if (sample < 0 || std::size_t(sample) >= field.values.size())
        fail(errkind::OutOfRegion, "sample index out of range");
    const double s = mesh.spacing;
    std::array<int, 3> k0;
    std::array<double, 3> w;
    for (int a = 0; a < 3; ++a) {
        const double u = xi[a] / s - 0.5;
        k0[a] = int(std::floor(u));
        w[a] = u - k0[a];
    }
    double acc = 0.0, wsum = 0.0;
    for (int corner = 0; corner < 8; ++corner) {
        std::array<double, 3> p;
        double cw = 1.0;
        for (int a = 0; a < 3; ++a) {
            const int bit = (corner >> a) & 1;
            p[a] = (k0[a] + bit + 0.5) * s;
            cw *= bit ? w[a] : 1.0 - w[a];
        }
        if (cw == 0.0) continue;
        const int c = mesh.locate(p);
        if (c < 0) continue;
        acc += cw * field.values[sample][c];
        wsum += cw;
    }
    if (wsum <= 0.0) fail(errkind::OutOfDomain, "point lies outside the node domain");
    return acc / wsum;
}

void dump_ascii_slice(const VoxelMesh& mesh, const NodeField& field, int sample, int region,
                      int slice, std::ostream& os) {
    if (sample < 0 || std::size_t(sample) >= field.values.size())
        fail(errkind::OutOfRegion, "sample index out of range");
    if (region < 0 || region > 3) fail(errkind::OutOfRegion, "region must be 0..3");
    const int n0 = mesh.n_half;
    const double s = mesh.spacing;
    int a = 2, fixed = 0;  // region 0: z-plane
    if (region == 0) {
        if (slice < 0 || slice >= 2 * n0) fail(errkind::OutOfRegion, "cube plane out of range");
        fixed = slice - n0;
    } else {
        a = region - 1;
        if (slice < 0 || slice >= mesh.n_axial[a])
            fail(errkind::OutOfRegion, "branch slice out of range");
        fixed = n0 + slice;
    }
    const int t1 = region == 0 ? 0 : (a + 1) % 3;
    const int t2 = region == 0 ? 1 : (a + 2) % 3;
    char buf[32];
    for (int row = n0 - 1; row >= -n0; --row) {
        for (int colk = -n0; colk < n0; ++colk) {
            std::array<double, 3> p;
            p[a] = (fixed + 0.5) * s;
            p[t1] = (colk + 0.5) * s;
            p[t2] = (row + 0.5) * s;
            const int c = mesh.locate(p);
            if (c < 0)
                std::snprintf(buf, sizeof buf, "%10s", ".");
            else
                std::snprintf(buf, sizeof buf, "%10.3e", field.values[sample][c]);
            os << buf << (colk + 1 < n0 ? " " : "");
        }
        os << '\n';
    }
}

void GluingConstant::write_csv(std::ostream& os) const {
    os << "t,d\n";
    char buf[64];
    for (std::size_t j = 0; j < times.size(); ++j) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", times[j], j < d.size() ? d[j] : 0.0);
        os << buf;
    }
}

}  // namespace thinflow
