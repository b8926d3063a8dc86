#include "thinflow/velocity.hpp"
#include "thinflow/errors.hpp"

#include <doctest.h>
#include <cmath>

using namespace thinflow;

namespace {
const double kPi = 3.14159265358979323846;

template <class F>
void expect_kind(const char* kind, F&& f) {
    try {
        f();
        FAIL_CHECK("expected error of kind " << kind);
    } catch (const Error& e) {
        CHECK(e.kind() == std::string(kind));
    }
}
} // namespace

TEST_CASE("standard velocity field is admissible") {
    NetworkSpec spec;
    auto vel = VelocityModel::standard();
    CHECK_NOTHROW(vel.validate(spec));
    CHECK_NOTHROW(check_conservation(vel, spec));
    CHECK(conservation_defect(vel, spec) == 0.0);
    CHECK(vel.v_node(0) == -2.0);
    CHECK(vel.v_base(1, spec) == 1.0);
    CHECK(vel.axial_dx(0, 0.4) == 0.0);
}

TEST_CASE("velocity structure violations are named") {
    NetworkSpec spec;
    expect_kind("ConservationViolated", [&] {
        auto vel = VelocityModel::from_expressions({"-2", "1", "0.9"},
                                                   {{{"0", "0"}, {"0", "0"}, {"0", "0"}}});
        check_conservation(vel, spec);
    });
    expect_kind("WrongSign", [&] {
        auto vel = VelocityModel::from_expressions({"2", "1", "1"},
                                                   {{{"0", "0"}, {"0", "0"}, {"0", "0"}}});
        vel.validate(spec);
    });
    expect_kind("SupportViolation", [&] {
        // not constant near the node
        auto vel = VelocityModel::from_expressions({"-2", "1 + x^2", "1"},
                                                   {{{"0", "0"}, {"0", "0"}, {"0", "0"}}});
        vel.validate(spec);
    });
    expect_kind("SupportViolation", [&] {
        // transverse part alive at the branch ends
        auto vel = VelocityModel::from_expressions(
            {"-2", "1", "1"}, {{{"0", "0"}, {"s2", "s1"}, {"0", "0"}}});
        vel.validate(spec);
    });
}

TEST_CASE("node potential: discrete balance, symmetry, port scaling") {
    NetworkSpec spec;
    auto vel = VelocityModel::standard();
    NodePotential pot(spec, vel, spec.ell0 / 6.0);

    CHECK(pot.cg_residual() <= 1e-12);
    CHECK(std::abs(pot.mean()) <= 1e-12);
    CHECK(pot.flux_defect() <= 1e-13);

    // port speeds scaled so each staircase port carries exactly v_i * pi h_i^2
    for (int i = 0; i < 3; ++i) {
        const double exact = vel.v_node(i) * kPi * spec.h[i] * spec.h[i];
        // reconstruct staircase flux from face velocities along the +i plane
        double flux = 0.0;
        const int n0 = pot.n_half();
        for (int u = -n0; u < n0; ++u)
            for (int v = -n0; v < n0; ++v)
                flux += pot.face_velocity(i, n0, u, v) * pot.spacing() * pot.spacing();
        CHECK(flux == doctest::Approx(exact).epsilon(1e-12));
    }

    // discrete divergence vanishes cell by cell
    const int n0 = pot.n_half();
    const double s = pot.spacing();
    double scale = 0.0;
    for (int i = 0; i < 3; ++i) scale = std::max(scale, std::abs(pot.port_speed(i)));
    for (int kz = -n0; kz < n0; ++kz)
        for (int ky = -n0; ky < n0; ++ky)
            for (int kx = -n0; kx < n0; ++kx) {
                double div = 0.0;
                div += pot.face_velocity(0, kx + 1, ky, kz) - pot.face_velocity(0, kx, ky, kz);
                div += pot.face_velocity(1, ky + 1, kz, kx) - pot.face_velocity(1, ky, kz, kx);
                div += pot.face_velocity(2, kz + 1, kx, ky) - pot.face_velocity(2, kz, kx, ky);
                CHECK(std::abs(div * s * s) <= 1e-11 * scale);
            }

    // default data is symmetric in branches 2 and 3: p invariant under (y,z) swap
    double pmax = 0.0, asym = 0.0;
    for (int kz = -n0; kz < n0; ++kz)
        for (int ky = -n0; ky < n0; ++ky)
            for (int kx = -n0; kx < n0; ++kx) {
                pmax = std::max(pmax, std::abs(pot.value(kx, ky, kz)));
                asym = std::max(asym,
                                std::abs(pot.value(kx, ky, kz) - pot.value(kx, kz, ky)));
            }
    CHECK(asym <= 1e-9 * pmax);

    // spacing must divide ell0
    expect_kind("GridMismatch", [&] { NodePotential bad(spec, vel, 0.037); });
}

TEST_CASE("node potential gradient converges under refinement") {
    NetworkSpec spec;
    auto vel = VelocityModel::standard();
    NodePotential p1(spec, vel, spec.ell0 / 6.0);
    NodePotential p2(spec, vel, spec.ell0 / 12.0);
    NodePotential p3(spec, vel, spec.ell0 / 24.0);

    const std::array<std::array<double, 3>, 4> probes{{{0.0, 0.0, 0.0},
                                                       {0.12, 0.05, -0.08},
                                                       {-0.1, 0.14, 0.02},
                                                       {0.05, -0.11, 0.13}}};
    double e12 = 0.0, e23 = 0.0;
    for (const auto& q : probes) {
        auto g1 = p1.grad_at(q), g2 = p2.grad_at(q), g3 = p3.grad_at(q);
        for (int a = 0; a < 3; ++a) {
            e12 = std::max(e12, std::abs(g1[a] - g2[a]));
            e23 = std::max(e23, std::abs(g2[a] - g3[a]));
        }
    }
    CHECK(e23 < e12);               // refinement reduces the defect
    CHECK(e12 / e23 > 1.4);         // roughly first order or better
    CHECK(e12 / e23 < 6.0);

    // near the center of port 1 the gradient approaches the axial inflow speed
    auto g = p3.grad_at({spec.ell0 - 2.0 * p3.spacing(), 0.0, 0.0});
    CHECK(g[0] == doctest::Approx(vel.v_node(0)).epsilon(0.25));
}

TEST_CASE("pointwise velocity evaluation per region") {
    NetworkSpec spec;
    const double eps = 0.3;
    // manufactured divergence-free transverse part on branch 2:
    // (tr1, tr2) = (d psi/ds2, -d psi/ds1) with psi = bump(x,.3,.7) s1 s2
    auto vel = VelocityModel::from_expressions(
        {"-2", "1", "1"},
        {{{"0", "0"},
          {"bump(x, 0.3, 0.7)*s1", "-bump(x, 0.3, 0.7)*s2"},
          {"0", "0"}}});
    CHECK_NOTHROW(vel.validate(spec));
    NodePotential pot(spec, vel, spec.ell0 / 6.0);

    // cylinder 1 point: pure axial inflow
    auto v = eval_velocity(spec, vel, pot, eps, {0.5, 0.001, -0.002});
    CHECK(v[0] == doctest::Approx(-2.0).epsilon(1e-14));
    CHECK(v[1] == doctest::Approx(0.0));
    CHECK(v[2] == doctest::Approx(0.0));

    // cylinder 2 point: axial plus eps-scaled transverse components
    const std::array<double, 3> x2{0.0012, 0.5, -0.0024};
    v = eval_velocity(spec, vel, pot, eps, x2);
    CHECK(v[1] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(v[2] == doctest::Approx(eps * (x2[2] / eps)).epsilon(1e-12));  // tr1 = s1 at bump peak
    CHECK(v[0] == doctest::Approx(-eps * (x2[0] / eps)).epsilon(1e-12)); // tr2 = -s2

    // the manufactured pair is divergence-free: FD divergence equals v' = 0
    const double hh = 2e-6;
    double div = 0.0;
    for (int a = 0; a < 3; ++a) {
        auto xp = x2, xm = x2;
        xp[a] += hh;
        xm[a] -= hh;
        div += (eval_velocity(spec, vel, pot, eps, xp)[a] -
                eval_velocity(spec, vel, pot, eps, xm)[a]) /
               (2 * hh);
    }
    CHECK(std::abs(div) < 1e-6);

    // node region returns the interpolated potential gradient
    auto gn = eval_velocity(spec, vel, pot, eps, {0.01, 0.02, -0.03});
    auto gd = pot.grad_at({0.01 / eps, 0.02 / eps, -0.03 / eps});
    for (int a = 0; a < 3; ++a) CHECK(gn[a] == doctest::Approx(gd[a]).epsilon(1e-14));

    expect_kind("OutOfDomain",
                [&] { eval_velocity(spec, vel, pot, eps, {0.5, 0.5, 0.5}); });
}
