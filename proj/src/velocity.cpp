#include "thinflow/velocity.hpp"
#include "thinflow/errors.hpp"
#include "thinflow/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace thinflow {

namespace {
constexpr double kPi = 3.14159265358979323846;

EdgeVelocity make_edge(const std::string& axial, const std::string& t1, const std::string& t2) {
    EdgeVelocity e;
    e.axial = Expression::parse(axial, {"x"});
    e.axial_dx = e.axial.derivative("x");
    e.tr1 = Expression::parse(t1, {"x", "s1", "s2"});
    e.tr2 = Expression::parse(t2, {"x", "s1", "s2"});
    e.tr1_ds1 = e.tr1.derivative("s1");
    e.tr2_ds2 = e.tr2.derivative("s2");
    e.tr_zero = e.tr1.is_zero() && e.tr2.is_zero();
    return e;
}
} // namespace

VelocityModel VelocityModel::standard() {
    return from_expressions({"-2", "1", "1"}, {{{"0", "0"}, {"0", "0"}, {"0", "0"}}});
}

VelocityModel VelocityModel::from_expressions(
    const std::array<std::string, 3>& axial,
    const std::array<std::array<std::string, 2>, 3>& transverse) {
    VelocityModel m;
    for (int i = 0; i < 3; ++i)
        m.edge[i] = make_edge(axial[i], transverse[i][0], transverse[i][1]);
    return m;
}

void VelocityModel::validate(const NetworkSpec& spec) const {
    const int nsamp = 256;
    for (int i = 0; i < 3; ++i) {
        const double v0 = v_node(i);
        // sign conditions: branch 1 carries inflow (negative axial speed),
        // branches 2 and 3 outflow (positive)
        for (int k = 0; k <= nsamp; ++k) {
            const double x = spec.ell[i] * k / nsamp;
            const double v = axial(i, x);
            if (i == 0 && !(v < 0.0))
                fail(errkind::WrongSign, "axial speed on branch 1 must be negative (inflow)");
            if (i > 0 && !(v > 0.0))
                fail(errkind::WrongSign,
                     "axial speed on branch " + std::to_string(i + 1) + " must be positive");
        }
        // constancy near the node: the stub advection operator freezes v_i(0)
        for (int k = 0; k <= nsamp; ++k) {
            const double x = 3.0 * spec.ell0 * k / nsamp;
            if (std::abs(axial(i, x) - v0) > 1e-12 * std::abs(v0))
                fail(errkind::SupportViolation,
                     "axial speed must be constant on [0, 3*ell0] (branch " +
                         std::to_string(i + 1) + ")");
        }
        // constancy across the base-layer band on the outflow branches
        if (i > 0) {
            const double vb = v_base(i, spec);
            for (int k = 0; k <= nsamp; ++k) {
                const double x = spec.ell[i] - 2.0 * spec.delta * k / nsamp;
                if (std::abs(axial(i, x) - vb) > 1e-12 * std::abs(vb))
                    fail(errkind::SupportViolation,
                         "axial speed must be constant on the base-layer band (branch " +
                             std::to_string(i + 1) + ")");
            }
        }
        // transverse part: vanishes near both branch ends, for all cross-disk points
        if (!transverse_zero(i)) {
            for (int k = 0; k <= 32; ++k)
                for (int r = 0; r <= 8; ++r)
                    for (int a = 0; a < 8; ++a) {
                        const double s1 = spec.h[i] * r / 8.0 * std::cos(2 * kPi * a / 8.0);
                        const double s2 = spec.h[i] * r / 8.0 * std::sin(2 * kPi * a / 8.0);
                        const double xlo = spec.delta * k / 32.0;
                        const double xhi = spec.ell[i] - spec.delta * k / 32.0;
                        auto t1 = transverse(i, xlo, s1, s2);
                        auto t2 = transverse(i, xhi, s1, s2);
                        if (std::abs(t1[0]) + std::abs(t1[1]) + std::abs(t2[0]) +
                                std::abs(t2[1]) != 0.0)
                            fail(errkind::SupportViolation,
                                 "transverse velocity must vanish near branch ends (branch " +
                                     std::to_string(i + 1) + ")");
                    }
        }
    }
}

double conservation_defect(const VelocityModel& vel, const NetworkSpec& spec) {
    double num = 0.0, den = 0.0;
    for (int i = 0; i < 3; ++i) {
        num += spec.h[i] * spec.h[i] * vel.v_node(i);
        den += spec.h[i] * spec.h[i] * std::abs(vel.v_node(i));
    }
    return den > 0.0 ? std::abs(num) / den : std::abs(num);
}

void check_conservation(const VelocityModel& vel, const NetworkSpec& spec) {
    const double d = conservation_defect(vel, spec);
    if (d > 1e-12) {
        std::ostringstream os;
        os << "node flux balance sum h_i^2 v_i(0) has relative defect " << d;
        fail(errkind::ConservationViolated, os.str());
    }
}

// ---------------------------------------------------------------------------
// node potential

bool NodePotential::port_cell(int i, int u, int v) const {
    const double r = radius_[i] / s_;
    const double du = u + 0.5, dv = v + 0.5;
    return du * du + dv * dv < r * r;
}

NodePotential::NodePotential(const NetworkSpec& spec, const VelocityModel& vel, double spacing) {
    spec.validate();
    check_conservation(vel, spec);
    n0_ = static_cast<int>(std::lround(spec.ell0 / spacing));
    if (n0_ < 2 || std::abs(n0_ * spacing - spec.ell0) > 1e-9 * spec.ell0)
        fail(errkind::GridMismatch, "node potential spacing must divide ell0 exactly");
    s_ = spec.ell0 / n0_;
    radius_ = {spec.h[0], spec.h[1], spec.h[2]};
    if (*std::max_element(radius_.begin(), radius_.end()) + s_ > spec.ell0)
        fail(errkind::GeometryOverlap, "port staircase reaches the node edge; refine spacing");

    // area-exact port speeds: v_i * (pi h_i^2 / staircase area)
    for (int i = 0; i < 3; ++i) {
        int cnt = 0;
        for (int u = -n0_; u < n0_; ++u)
            for (int v = -n0_; v < n0_; ++v)
                if (port_cell(i, u, v)) ++cnt;
        if (cnt == 0) fail(errkind::SpacingTooCoarse, "port disk resolves to zero faces");
        raw_speed_[i] = vel.v_node(i);
        port_speed_[i] = vel.v_node(i) * (kPi * radius_[i] * radius_[i]) / (cnt * s_ * s_);
    }

    const int n = 2 * n0_;
    const std::size_t N = static_cast<std::size_t>(n) * n * n;
    std::vector<double> rhs(N, 0.0);
    for (int i = 0; i < 3; ++i) {
        // cells adjacent to the +i face, inside the port disk
        for (int u = -n0_; u < n0_; ++u)
            for (int v = -n0_; v < n0_; ++v) {
                if (!port_cell(i, u, v)) continue;
                int k[3];
                k[i] = n0_ - 1;
                k[(i + 1) % 3] = u;
                k[(i + 2) % 3] = v;
                rhs[idx(k[0], k[1], k[2])] += port_speed_[i] * s_ * s_;
            }
    }

    // -Laplace with homogeneous Neumann walls: A p = rhs, singular, mean pinned by CG projection
    auto matvec = [&](const double* in, double* out) {
        for (int kz = -n0_; kz < n0_; ++kz)
            for (int ky = -n0_; ky < n0_; ++ky)
                for (int kx = -n0_; kx < n0_; ++kx) {
                    const std::size_t c = idx(kx, ky, kz);
                    double acc = 0.0;
                    const int k[3] = {kx, ky, kz};
                    for (int ax = 0; ax < 3; ++ax)
                        for (int sgn = -1; sgn <= 1; sgn += 2) {
                            int q[3] = {k[0], k[1], k[2]};
                            q[ax] += sgn;
                            if (q[ax] < -n0_ || q[ax] >= n0_) continue;  // wall: no flux
                            acc += (in[c] - in[idx(q[0], q[1], q[2])]) * s_;
                        }
                    out[c] = acc;
                }
    };
    auto project = [&](double* x) {
        const double m = chunked_sum(x, N) / static_cast<double>(N);
        for (std::size_t c = 0; c < N; ++c) x[c] -= m;
    };

    p_.assign(N, 0.0);
    auto res = conjugate_gradient(N, matvec, rhs.data(), p_.data(), 1e-12, 4000, project);
    if (!res.converged)
        fail(errkind::LinearSolveFailure, "node potential CG stalled at residual " +
                                              std::to_string(res.residual));
    cg_residual_ = res.residual;
    cg_iterations_ = res.iterations;
}

double NodePotential::mean() const {
    return chunked_sum(p_.data(), p_.size()) / static_cast<double>(p_.size());
}

double NodePotential::flux_defect() const {
    // total prescribed boundary flux; zero to rounding by the port-area scaling
    double total = 0.0, scale = 0.0;
    for (int i = 0; i < 3; ++i) {
        int cnt = 0;
        for (int u = -n0_; u < n0_; ++u)
            for (int v = -n0_; v < n0_; ++v)
                if (port_cell(i, u, v)) ++cnt;
        total += port_speed_[i] * cnt * s_ * s_;
        scale += std::abs(port_speed_[i]) * cnt * s_ * s_;
    }
    return scale > 0.0 ? std::abs(total) / scale : std::abs(total);
}

double NodePotential::face_velocity(int axis, int k, int u, int v) const {
    if (k == -n0_) return 0.0;  // outer walls carry no flux
    if (k == n0_) return port_cell(axis, u, v) ? port_speed_[axis] : 0.0;
    int kl[3], kr[3];
    kl[axis] = k - 1;
    kr[axis] = k;
    kl[(axis + 1) % 3] = kr[(axis + 1) % 3] = u;
    kl[(axis + 2) % 3] = kr[(axis + 2) % 3] = v;
    return (p_[idx(kr[0], kr[1], kr[2])] - p_[idx(kl[0], kl[1], kl[2])]) / s_;
}

std::array<double, 3> NodePotential::grad_at(const std::array<double, 3>& xi) const {
    std::array<double, 3> g{};
    for (int ax = 0; ax < 3; ++ax) {
        // staggered lattice for component `ax`: plane coordinate on multiples of s,
        // transverse coordinates on cell centers
        const int a1 = (ax + 1) % 3, a2 = (ax + 2) % 3;
        const double fp = xi[ax] / s_ + n0_;          // in [0, 2n0]
        const double fu = xi[a1] / s_ + n0_ - 0.5;
        const double fv = xi[a2] / s_ + n0_ - 0.5;
        const int ip = std::clamp(static_cast<int>(std::floor(fp)), 0, 2 * n0_ - 1);
        const int iu = std::clamp(static_cast<int>(std::floor(fu)), 0, 2 * n0_ - 2);
        const int iv = std::clamp(static_cast<int>(std::floor(fv)), 0, 2 * n0_ - 2);
        const double wp = std::clamp(fp - ip, 0.0, 1.0);
        const double wu = std::clamp(fu - iu, 0.0, 1.0);
        const double wv = std::clamp(fv - iv, 0.0, 1.0);
        double acc = 0.0;
        for (int dp = 0; dp <= 1; ++dp)
            for (int du = 0; du <= 1; ++du)
                for (int dv = 0; dv <= 1; ++dv) {
                    const double w = (dp ? wp : 1 - wp) * (du ? wu : 1 - wu) * (dv ? wv : 1 - wv);
                    acc += w * face_velocity(ax, ip + dp - n0_, iu + du - n0_, iv + dv - n0_);
                }
        g[ax] = acc;
    }
    return g;
}

NodePotential solve_node_potential(const NetworkSpec& spec, const VelocityModel& vel,
                                   double spacing) {
    return NodePotential(spec, vel, spacing);
}

std::array<double, 3> eval_velocity(const NetworkSpec& spec, const VelocityModel& vel,
                                    const NodePotential& pot, double eps,
                                    const std::array<double, 3>& x) {
    const double a = eps * spec.ell0;
    if (std::abs(x[0]) < a && std::abs(x[1]) < a && std::abs(x[2]) < a) {
        std::array<double, 3> xi{x[0] / eps, x[1] / eps, x[2] / eps};
        return pot.grad_at(xi);
    }
    for (int i = 0; i < 3; ++i) {
        const int j = (i + 1) % 3, k = (i + 2) % 3;
        const double r2 = x[j] * x[j] + x[k] * x[k];
        if (x[i] >= a && x[i] <= spec.ell[i] && r2 < eps * eps * spec.h[i] * spec.h[i]) {
            std::array<double, 3> v{};
            v[i] = vel.axial(i, x[i]);
            if (!vel.transverse_zero(i)) {
                auto t = vel.transverse(i, x[i], x[j] / eps, x[k] / eps);
                v[j] += eps * t[0];
                v[k] += eps * t[1];
            }
            return v;
        }
    }
    fail(errkind::OutOfDomain, "eval_velocity: point outside the junction");
}

} // namespace thinflow
