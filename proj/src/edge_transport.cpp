#include "thinflow/edge_transport.hpp"

#include "thinflow/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace thinflow {
namespace {

const double kPi = 3.14159265358979323846;

// absolute admissibility tolerance; problem data is O(1) by convention
const double kDataTol = 1e-12;

// state carried along a backward characteristic: foot position, accumulated
// damping factor exp(-int v'), and the damped source integral
struct TraceState {
    double x;
    double dmp;
    double acc;
};

struct TraceOde {
    const std::function<double(double)>& v;
    const std::function<double(double)>& v_dx;
    const Field2* rhs;
    double tn;  // trace target time; the foot at lag tau sits at time tn - tau

    TraceState deriv(const TraceState& s, double tau) const {
        TraceState d;
        d.x = -v(s.x);
        d.dmp = -v_dx(s.x) * s.dmp;
        d.acc = rhs ? s.dmp * rhs->eval(s.x, tn - tau) : 0.0;
        return d;
    }

    TraceState step(const TraceState& s, double tau, double h) const {
        const TraceState k1 = deriv(s, tau);
        const TraceState k2 = deriv(advance(s, k1, 0.5 * h), tau + 0.5 * h);
        const TraceState k3 = deriv(advance(s, k2, 0.5 * h), tau + 0.5 * h);
        const TraceState k4 = deriv(advance(s, k3, h), tau + h);
        TraceState out;
        out.x = s.x + h / 6.0 * (k1.x + 2 * k2.x + 2 * k3.x + k4.x);
        out.dmp = s.dmp + h / 6.0 * (k1.dmp + 2 * k2.dmp + 2 * k3.dmp + k4.dmp);
        out.acc = s.acc + h / 6.0 * (k1.acc + 2 * k2.acc + 2 * k3.acc + k4.acc);
        return out;
    }

    // position component alone, for locating boundary crossings
    double step_x(double x, double h) const {
        const double k1 = -v(x);
        const double k2 = -v(x + 0.5 * h * k1);
        const double k3 = -v(x + 0.5 * h * k2);
        const double k4 = -v(x + h * k3);
        return x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    }

private:
    static TraceState advance(const TraceState& s, const TraceState& k, double h) {
        return TraceState{s.x + h * k.x, s.dmp + h * k.dmp, s.acc + h * k.acc};
    }
};

// trace the characteristic through (x0, tn) back to the inflow boundary or the
// initial slice and return the solution value there transported forward
double trace_value(double x0, double tn, double dt, double bnd, bool leftward,
                   const TraceOde& ode, const std::function<double(double)>& datum) {
    TraceState y{x0, 1.0, 0.0};
    double tau = 0.0;
    long guard = 4 * static_cast<long>(std::ceil(tn / dt)) + 64;
    while (tau < tn - 1e-15) {
        const double h = std::min(dt, tn - tau);
        const TraceState ynew = ode.step(y, tau, h);
        const bool exited = leftward ? (ynew.x > bnd) : (ynew.x < bnd);
        if (exited) {
            double lo = 0.0, hi = h;
            for (int it = 0; it < 60; ++it) {
                const double mid = 0.5 * (lo + hi);
                const bool out = leftward ? (ode.step_x(y.x, mid) > bnd)
                                          : (ode.step_x(y.x, mid) < bnd);
                (out ? hi : lo) = mid;
            }
            const double hstar = 0.5 * (lo + hi);
            const TraceState yb = ode.step(y, tau, hstar);
            return yb.dmp * datum(tn - (tau + hstar)) + yb.acc;
        }
        y = ynew;
        tau += h;
        if (--guard <= 0)
            fail(errkind::SolverDiverged, "characteristic trace failed to terminate");
    }
    return y.acc;  // reached the initial slice; the field starts from rest
}

std::function<double(double)> axial_fn(const VelocityModel& vel, int edge) {
    return [&vel, edge](double x) { return vel.axial(edge, x); };
}

std::function<double(double)> axial_dx_fn(const VelocityModel& vel, int edge) {
    return [&vel, edge](double x) { return vel.axial_dx(edge, x); };
}

void require_flow_pattern(const VelocityModel& vel) {
    if (!(vel.v_node(0) < 0.0) || !(vel.v_node(1) > 0.0) || !(vel.v_node(2) > 0.0))
        fail(errkind::WrongSign,
             "limit problems expect inflow on branch 1 and outflow on branches 2 and 3");
}

} // namespace

BoundaryData BoundaryData::from_expressions(const std::array<std::string, 3>& q_src,
                                            const std::array<std::string, 3>& phi_src,
                                            const std::string& phi_node_src) {
    BoundaryData b;
    for (int i = 0; i < 3; ++i) {
        b.q[i] = Expression::parse(q_src[i], {"t"});
        b.phi_edge[i] = Expression::parse(phi_src[i], {"theta", "x", "t"});
    }
    b.phi_node = Expression::parse(phi_node_src, {"xi1", "xi2", "xi3", "t"});
    return b;
}

BoundaryData BoundaryData::standard() {
    return from_expressions(
        {"2*ramp(t)", "ramp(t)", "0.5*ramp(t)"},
        {"(1 + 0.3*cos(theta)) * bump(x, 0.35, 0.75) * ramp(t)",
         "0.8*(1 + 0.3*cos(theta)) * bump(x, 0.35, 0.75) * ramp(t)",
         "0.6*(1 - 0.2*cos(theta)) * bump(x, 0.35, 0.75) * ramp(t)"},
        "bump(xi1, -0.32, -0.28) * bump(xi2, -0.15, 0.15) * bump(xi3, -0.15, 0.15) * "
        "ramp(t)");
}

void BoundaryData::validate(const NetworkSpec& spec) const {
    const double T = spec.horizon;
    const double tsamp[4] = {0.25 * T, 0.5 * T, 0.75 * T, T};

    for (int i = 0; i < 3; ++i) {
        const Expression dq = q[i].derivative("t");
        if (std::abs(q[i]({0.0})) > kDataTol || std::abs(dq({0.0})) > kDataTol)
            fail(errkind::MatchingViolated,
                 "base trace q_" + std::to_string(i + 1) + " must start from rest");
    }
    // the inflow trace must start flat: derivatives of every order vanish at
    // t=0 (verified symbolically through order 8)
    {
        Expression der = q[0];
        for (int n = 1; n <= 8; ++n) {
            der = der.derivative("t");
            if (std::abs(der({0.0})) > kDataTol)
                fail(errkind::MatchingViolated,
                     "q_1 must start flat; derivative of order " + std::to_string(n) +
                         " is nonzero at t=0");
        }
    }

    // branch wall densities: zero at t=0, and supported away from both ends
    for (int i = 0; i < 3; ++i) {
        const double ell = spec.ell[i];
        for (int jt = 0; jt < 8; ++jt) {
            const double th = 2.0 * kPi * jt / 8.0;
            for (int jx = 0; jx <= 32; ++jx) {
                const double x = ell * jx / 32.0;
                if (std::abs(phi_edge[i]({th, x, 0.0})) > kDataTol)
                    fail(errkind::MatchingViolated,
                         "wall density on branch " + std::to_string(i + 1) +
                             " must vanish at t=0");
            }
            for (double t : tsamp) {
                for (int jx = 0; jx <= 24; ++jx) {
                    const double xlo = spec.delta * jx / 24.0;
                    const double xhi = ell - spec.delta * jx / 24.0;
                    if (std::abs(phi_edge[i]({th, xlo, t})) > kDataTol ||
                        std::abs(phi_edge[i]({th, xhi, t})) > kDataTol)
                        fail(errkind::SupportViolation,
                             "wall density on branch " + std::to_string(i + 1) +
                                 " must vanish near both branch ends");
                }
            }
        }
    }

    // junction wall density: flat start in t (all orders, verified through
    // order 8) and zero in a guard ring around each port
    {
        std::vector<std::array<double, 3>> surf;
        const double a = spec.ell0;
        for (int face = 0; face < 6; ++face) {
            const int ax = face / 2;
            const double s = (face % 2) ? a : -a;
            for (int ju = 0; ju <= 6; ++ju)
                for (int jv = 0; jv <= 6; ++jv) {
                    std::array<double, 3> xi{};
                    xi[ax] = s;
                    xi[(ax + 1) % 3] = -a + 2.0 * a * ju / 6.0;
                    xi[(ax + 2) % 3] = -a + 2.0 * a * jv / 6.0;
                    surf.push_back(xi);
                }
        }
        Expression der = phi_node;
        for (int n = 0; n <= 8; ++n) {
            for (const auto& xi : surf)
                if (std::abs(der({xi[0], xi[1], xi[2], 0.0})) > kDataTol)
                    fail(errkind::MatchingViolated,
                         "junction wall density must start flat; t-derivative of order " +
                             std::to_string(n) + " is nonzero at t=0");
            der = der.derivative("t");
        }

        for (int i = 0; i < 3; ++i) {
            const double rg = spec.h[i] + 0.25 * (a - spec.h[i]);
            for (int ju = 0; ju <= 12; ++ju)
                for (int jv = 0; jv <= 12; ++jv) {
                    const double u = -rg + 2.0 * rg * ju / 12.0;
                    const double v = -rg + 2.0 * rg * jv / 12.0;
                    if (u * u + v * v > rg * rg) continue;
                    std::array<double, 3> xi{};
                    xi[i] = a;
                    xi[(i + 1) % 3] = u;
                    xi[(i + 2) % 3] = v;
                    for (double t : tsamp)
                        if (std::abs(phi_node({xi[0], xi[1], xi[2], t})) > kDataTol)
                            fail(errkind::SupportViolation,
                                 "junction wall density must vanish near port " +
                                     std::to_string(i + 1));
                }
        }
    }
}

Field2 average_lateral_interaction(const NetworkSpec& spec, const Expression& phi,
                                   int edge, const EdgeGridOptions& opt) {
    if (edge < 0 || edge > 2) fail(errkind::OutOfDomain, "edge index must be 0, 1, or 2");
    const double h = spec.h[edge];
    const int K = std::max(opt.ntheta, 8);
    Field2 F(0.0, spec.ell[edge], opt.nx, 0.0, spec.horizon, opt.nt);
    const double wq = 2.0 / (h * K);  // (1/(pi h^2)) * h * (2 pi / K) per node
    for (int n = 0; n <= opt.nt; ++n) {
        const double t = F.tnode(n);
        for (int j = 0; j <= opt.nx; ++j) {
            const double x = F.xnode(j);
            double s = 0.0;
            for (int k = 0; k < K; ++k) s += phi({2.0 * kPi * k / K, x, t});
            F.at(j, n) = wq * s;
        }
    }
    F.finalize();
    return F;
}

Field2 solve_transport_conservative(double ell, double horizon,
                                    const std::function<double(double)>& v,
                                    const std::function<double(double)>& v_dx,
                                    const std::function<double(double)>& datum,
                                    const Field2* rhs, const EdgeGridOptions& opt) {
    if (ell <= 0.0 || horizon <= 0.0)
        fail(errkind::GeometryOverlap, "branch length and horizon must be positive");
    if (opt.nx < 4 || opt.nt < 4)
        fail(errkind::SpacingTooCoarse, "transport grid needs at least 4 segments per axis");

    double vmin = v(0.0), vmax = vmin;
    for (int k = 1; k <= 256; ++k) {
        const double val = v(ell * k / 256.0);
        vmin = std::min(vmin, val);
        vmax = std::max(vmax, val);
    }
    if (!(vmin > 0.0 || vmax < 0.0))
        fail(errkind::WrongSign,
             "transport speed must be nonvanishing with a single sign along the branch");
    const bool leftward = vmax < 0.0;  // inflow end at x=ell, backward feet drift up
    const double bnd = leftward ? ell : 0.0;
    const int inflow_node = leftward ? opt.nx : 0;

    const double dt = horizon / opt.nt;
    Field2 W(0.0, ell, opt.nx, 0.0, horizon, opt.nt);
    for (int j = 0; j <= opt.nx; ++j) W.at(j, 0) = 0.0;
    const TraceOde base{v, v_dx, rhs, 0.0};
    for (int n = 1; n <= opt.nt; ++n) {
        const double tn = horizon * n / opt.nt;
        TraceOde ode = base;
        ode.tn = tn;
        for (int j = 0; j <= opt.nx; ++j) {
            if (j == inflow_node) {
                W.at(j, n) = datum(tn);
                continue;
            }
            W.at(j, n) = trace_value(W.xnode(j), tn, dt, bnd, leftward, ode, datum);
        }
    }
    W.finalize();
    return W;
}

double transport_residual(const Field2& w, const std::function<double(double)>& v,
                          const std::function<double(double)>& v_dx, const Field2* rhs,
                          Rng& rng, int nsamples) {
    const double L = w.xb() - w.xa(), T = w.tb() - w.ta();
    double worst = 0.0;
    for (int k = 0; k < nsamples; ++k) {
        const double x = w.xa() + L * (0.05 + 0.9 * rng.uniform());
        const double t = w.ta() + T * (0.1 + 0.9 * rng.uniform());
        const double r = w.dt(x, t) + v(x) * w.dx(x, t) + v_dx(x) * w.eval(x, t) -
                         (rhs ? rhs->eval(x, t) : 0.0);
        worst = std::max(worst, std::abs(r));
    }
    return worst;
}

double general_vertex_datum(double d, double w1_vertex, double v1, double h1, double vi,
                            double hi) {
    return (d - v1 * h1 * h1 * w1_vertex) / (2.0 * vi * hi * hi);
}

std::array<Field2, 3> solve_limit_problem_base(const NetworkSpec& spec,
                                               const VelocityModel& vel,
                                               const std::function<double(double)>& datum1,
                                               const std::array<const Field2*, 3>& rhs,
                                               const EdgeGridOptions& opt) {
    require_flow_pattern(vel);
    std::array<Field2, 3> w;
    w[0] = solve_transport_conservative(spec.ell[0], spec.horizon, axial_fn(vel, 0),
                                        axial_dx_fn(vel, 0), datum1, rhs[0], opt);
    // branches 2 and 3 inherit the branch-1 vertex trace
    const CubicSpline vertex(0.0, spec.horizon, w[0].time_slice(0.0));
    const auto cont = [vertex](double t) { return vertex(t); };
    for (int i = 1; i < 3; ++i)
        w[i] = solve_transport_conservative(spec.ell[i], spec.horizon, axial_fn(vel, i),
                                            axial_dx_fn(vel, i), cont, rhs[i], opt);
    return w;
}

std::array<Field2, 3> solve_limit_problem_general(const NetworkSpec& spec,
                                                  const VelocityModel& vel,
                                                  const std::function<double(double)>& d,
                                                  const std::array<const Field2*, 3>& rhs,
                                                  const EdgeGridOptions& opt) {
    require_flow_pattern(vel);
    std::array<Field2, 3> w;
    const auto zero = [](double) { return 0.0; };
    w[0] = solve_transport_conservative(spec.ell[0], spec.horizon, axial_fn(vel, 0),
                                        axial_dx_fn(vel, 0), zero, rhs[0], opt);
    const CubicSpline vertex(0.0, spec.horizon, w[0].time_slice(0.0));
    const double v1 = vel.v_node(0), h1 = spec.h[0];
    for (int i = 1; i < 3; ++i) {
        const double vi = vel.v_node(i), hi = spec.h[i];
        const auto gi = [vertex, d, v1, h1, vi, hi](double t) {
            return general_vertex_datum(d(t), vertex(t), v1, h1, vi, hi);
        };
        w[i] = solve_transport_conservative(spec.ell[i], spec.horizon, axial_fn(vel, i),
                                            axial_dx_fn(vel, i), gi, rhs[i], opt);
    }
    return w;
}

double kirchhoff_defect(const NetworkSpec& spec, const VelocityModel& vel,
                        const std::array<Field2, 3>& w,
                        const std::function<double(double)>& d) {
    const int nt = w[0].nt();
    std::array<std::vector<double>, 3> slice;
    for (int i = 0; i < 3; ++i) slice[i] = w[i].time_slice(0.0);
    double worst = 0.0;
    for (int n = 0; n <= nt; ++n) {
        const double t = w[0].tnode(n);
        double sum = 0.0;
        for (int i = 0; i < 3; ++i)
            sum += vel.v_node(i) * spec.h[i] * spec.h[i] * slice[i][n];
        worst = std::max(worst, std::abs(sum - (d ? d(t) : 0.0)));
    }
    return worst;
}

} // namespace thinflow
