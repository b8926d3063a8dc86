#include "thinflow/reference.hpp"

#include "thinflow/errors.hpp"
#include "thinflow/expr.hpp"

#include <cmath>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"

using namespace thinflow;

namespace {

template <class F>
void expect_kind(const char* kind, F&& f) {
    try {
        f();
        CHECK_MESSAGE(false, "expected an error of kind ", kind);
    } catch (const Error& e) {
        CHECK(e.kind() == kind);
    }
}

struct Rig {
    std::shared_ptr<const VoxelMesh> mesh;
    std::shared_ptr<NodePotential> pot;
};

Rig make_rig(const NetworkSpec& spec, const VelocityModel& vel, double eps,
             double target_spacing) {
    Rig r;
    r.mesh = std::make_shared<VoxelMesh>(build_thin_junction(spec, eps, target_spacing));
    r.pot = std::make_shared<NodePotential>(spec, vel, r.mesh->spacing / eps);
    return r;
}

bool has_warning(const ReferenceSolution& sol, const std::string& needle) {
    for (const auto& w : sol.warnings)
        if (w.find(needle) != std::string::npos) return true;
    return false;
}

double snap_min(const ReferenceSolution& sol) {
    double m = 0.0;
    for (const auto& snap : sol.snaps)
        for (double v : snap) m = std::min(m, v);
    return m;
}

double snap_max(const ReferenceSolution& sol) {
    double m = 0.0;
    for (const auto& snap : sol.snaps)
        for (double v : snap) m = std::max(m, v);
    return m;
}

} // namespace

TEST_CASE("zero data stays identically zero and the guards trip") {
    const NetworkSpec spec;
    const VelocityModel vel = VelocityModel::standard();
    const BoundaryData data = BoundaryData::from_expressions({"0", "0", "0"},
                                                             {"0", "0", "0"}, "0");
    const double eps = 0.3;
    const Rig rig = make_rig(spec, vel, eps, 0.015);  // 4 cells per radius

    ReferenceOptions opt;
    opt.dt = 0.05;
    opt.snapshot_every = 5;
    opt.probes = {{0.04, 0.01, 0.01}, {0.5, 0.005, 0.005}};
    const ReferenceSolution sol = solve_reference(spec, vel, data, eps, rig.mesh,
                                                  *rig.pot, opt);

    CHECK(sol.snaps.size() >= 2);
    for (const auto& snap : sol.snaps)
        for (double v : snap) CHECK(v == 0.0);
    CHECK(sol.ledger.size() == 20);
    for (const auto& row : sol.ledger) {
        CHECK(row.mass == 0.0);
        CHECK(row.boundary_outflux == 0.0);
        CHECK(row.defect_rel == 0.0);
    }
    CHECK(sol.worst_mass_defect == 0.0);
    CHECK(sol.sample({0.5, 0.005, 0.005}, 0.37) == 0.0);
    for (const auto& series : sol.probe_values)
        for (double v : series) CHECK(v == 0.0);
    CHECK(has_warning(sol, "fewer than 6 cells"));

    // probes must lie inside the staircase junction
    {
        ReferenceOptions bad = opt;
        bad.probes = {{2.0, 0.0, 0.0}};
        expect_kind(errkind::OutOfDomain, [&] {
            solve_reference(spec, vel, data, eps, rig.mesh, *rig.pot, bad);
        });
    }
    // time step must fit the horizon
    {
        ReferenceOptions bad = opt;
        bad.dt = 2.0;
        expect_kind(errkind::GridMismatch, [&] {
            solve_reference(spec, vel, data, eps, rig.mesh, *rig.pot, bad);
        });
    }
    // the node potential must live on the matching lattice
    {
        const NodePotential coarse(spec, vel, 2.0 * rig.mesh->spacing / eps);
        expect_kind(errkind::GridMismatch, [&] {
            solve_reference(spec, vel, data, eps, rig.mesh, coarse, opt);
        });
    }
    expect_kind(errkind::OutOfDomain, [&] {
        solve_reference(spec, vel, data, -0.3, rig.mesh, *rig.pot, opt);
    });
}

TEST_CASE("lateral wall draining matches the slab-exact hand ledger") {
    NetworkSpec spec;
    spec.horizon = 0.3;
    const VelocityModel vel = VelocityModel::standard();
    const BoundaryData data = BoundaryData::from_expressions(
        {"0", "0", "0"}, {"bump(x, 0.4, 0.6) * t", "0", "0"}, "0");
    const double eps = 0.3;
    const Rig rig = make_rig(spec, vel, eps, 0.01);
    const VoxelMesh& mesh = *rig.mesh;

    ReferenceOptions opt;
    opt.dt = 0.025;
    opt.snapshot_every = 1000;  // keep only t = 0 and t = T
    opt.temporal_check = false;
    opt.probes = {{0.5, 0.055, 0.005}};
    const ReferenceSolution sol = solve_reference(spec, vel, data, eps, rig.mesh,
                                                  *rig.pot, opt);
    CHECK(sol.ledger.size() == 12);
    CHECK(sol.worst_mass_defect <= 1e-8);

    // every axial slab of the renormalized staircase carries the exact
    // cylinder strip area 2 pi (eps h) * spacing, so the prescribed outflux
    // has a closed discrete form independent of the staircase face count
    const Expression phi = Expression::parse("bump(x, 0.4, 0.6) * t", {"x", "t"});
    const double strip = 2.0 * M_PI * mesh.branch_radius[0] * mesh.spacing;
    auto wall_flux = [&](double t) {
        double acc = 0.0;
        for (int j = 0; j < mesh.n_axial[0]; ++j) {
            const double x = (mesh.n_half + j + 0.5) * mesh.spacing;
            acc += strip * phi({x, t});
        }
        return std::pow(eps, spec.alpha) * acc;
    };

    // after one step nothing has reached the bases, so the ledger outflux is
    // purely the prescribed wall term
    CHECK(sol.ledger[0].boundary_outflux ==
          doctest::Approx(wall_flux(sol.dt)).epsilon(1e-6));

    double expected_mass = 0.0;
    for (const auto& row : sol.ledger) expected_mass -= sol.dt * wall_flux(row.t);
    CHECK(sol.ledger.back().mass == doctest::Approx(expected_mass).epsilon(1e-5));

    // a positive density drains mass monotonically
    double prev = 0.0;
    for (const auto& row : sol.ledger) {
        CHECK(row.mass < prev + 1e-15);
        prev = row.mass;
    }
    CHECK(sol.probe_values[0].back() < 0.0);  // sink pulls the wall value down

    // sampling at the final time reproduces the last snapshot
    const int c = mesh.locate({0.5, 0.055, 0.005});
    REQUIRE(c >= 0);
    CHECK(sol.sample({0.5, 0.055, 0.005}, spec.horizon) == sol.snaps.back()[c]);

    // deterministic writers
    std::ostringstream s1, s2, p1;
    sol.write_snapshot_csv(s1, int(sol.snaps.size()) - 1);
    sol.write_snapshot_csv(s2, int(sol.snaps.size()) - 1);
    CHECK(s1.str() == s2.str());
    CHECK(s1.str().rfind("x,y,z,value\n", 0) == 0);
    sol.write_probes_csv(p1);
    CHECK(p1.str().rfind("t,p0\n", 0) == 0);

    // a starved Krylov loop must fail loudly, not return a stale state
    {
        ReferenceOptions bad = opt;
        bad.krylov_max_iter = 1;
        expect_kind(errkind::LinearSolveFailure, [&] {
            solve_reference(spec, vel, data, eps, rig.mesh, *rig.pot, bad);
        });
    }
}

TEST_CASE("node wall flux is read on the snapped cube face") {
    NetworkSpec spec;
    spec.horizon = 0.075;
    const VelocityModel vel = VelocityModel::standard();
    // the junction density is supported in a thin shell around the wall plane
    // xi_1 = -ell0; only the snapped face coordinate sees it
    const BoundaryData data = BoundaryData::from_expressions(
        {"0", "0", "0"}, {"0", "0", "0"},
        "bump(xi1, -0.32, -0.28) * bump(xi2, -0.15, 0.15) * bump(xi3, -0.15, 0.15) * t");
    const double eps = 0.3;
    const Rig rig = make_rig(spec, vel, eps, 0.015);
    const VoxelMesh& mesh = *rig.mesh;

    ReferenceOptions opt;
    opt.dt = 0.025;
    opt.temporal_check = false;
    const ReferenceSolution sol = solve_reference(spec, vel, data, eps, rig.mesh,
                                                  *rig.pot, opt);
    CHECK(sol.ledger.size() == 3);
    CHECK(sol.worst_mass_defect <= 1e-8);

    // hand sum over the -x1 cube face (the only face meeting the support)
    const Expression phi0 = Expression::parse(
        "bump(xi1, -0.32, -0.28) * bump(xi2, -0.15, 0.15) * bump(xi3, -0.15, 0.15) * t",
        {"xi1", "xi2", "xi3", "t"});
    const double s = mesh.spacing;
    auto face_flux = [&](double t) {
        double acc = 0.0;
        for (int u = -mesh.n_half; u < mesh.n_half; ++u)
            for (int v = -mesh.n_half; v < mesh.n_half; ++v)
                acc += s * s *
                       phi0({-spec.ell0, (u + 0.5) * s / eps, (v + 0.5) * s / eps, t});
        return std::pow(eps, spec.alpha) * acc;
    };
    CHECK(face_flux(sol.dt) > 0.0);  // the support really meets the lattice
    CHECK(sol.ledger[0].boundary_outflux ==
          doctest::Approx(face_flux(sol.dt)).epsilon(1e-6));
    CHECK(sol.ledger.back().mass < 0.0);
}

TEST_CASE("solutions superpose and the inflow base tracks its trace") {
    const NetworkSpec spec;
    const VelocityModel vel = VelocityModel::standard();
    const BoundaryData q_only = BoundaryData::from_expressions(
        {"2*ramp(t)", "ramp(t)", "0.5*ramp(t)"}, {"0", "0", "0"}, "0");
    const BoundaryData walls_only = BoundaryData::from_expressions(
        {"0", "0", "0"},
        {"(1 + 0.3*cos(theta)) * bump(x, 0.35, 0.75) * ramp(t)",
         "0.8*(1 + 0.3*cos(theta)) * bump(x, 0.35, 0.75) * ramp(t)",
         "0.6*(1 - 0.2*cos(theta)) * bump(x, 0.35, 0.75) * ramp(t)"},
        "bump(xi1, -0.32, -0.28) * bump(xi2, -0.15, 0.15) * bump(xi3, -0.15, 0.15) * "
        "ramp(t)");
    const BoundaryData both = BoundaryData::standard();
    const double eps = 0.3;
    const Rig rig = make_rig(spec, vel, eps, 0.015);

    ReferenceOptions opt;
    opt.dt = 0.05;
    opt.snapshot_every = 100;
    opt.temporal_check = false;
    const auto a = solve_reference(spec, vel, q_only, eps, rig.mesh, *rig.pot, opt);
    const auto b = solve_reference(spec, vel, walls_only, eps, rig.mesh, *rig.pot, opt);
    const auto ab = solve_reference(spec, vel, both, eps, rig.mesh, *rig.pot, opt);

    CHECK(a.worst_mass_defect <= 1e-8);
    CHECK(b.worst_mass_defect <= 1e-8);
    CHECK(ab.worst_mass_defect <= 1e-8);

    double scale = 0.0, misfit = 0.0;
    const auto& ua = a.snaps.back();
    const auto& ub = b.snaps.back();
    const auto& uab = ab.snaps.back();
    for (std::size_t c = 0; c < uab.size(); ++c) {
        scale = std::max(scale, std::abs(uab[c]));
        misfit = std::max(misfit, std::abs(uab[c] - ua[c] - ub[c]));
    }
    CHECK(scale > 0.1);
    CHECK(misfit <= 1e-7 * scale);
    CHECK(std::abs(ab.ledger.back().mass - a.ledger.back().mass -
                   b.ledger.back().mass) <= 1e-8 * std::abs(ab.ledger.back().mass));

    // branch 1 is the inflow edge: its base cell must carry the trace
    const VoxelMesh& mesh = *rig.mesh;
    const std::array<double, 3> near_base{mesh.branch_end[0] - 0.5 * mesh.spacing,
                                          0.005, 0.005};
    const int c = mesh.locate(near_base);
    REQUIRE(c >= 0);
    const double q1 = 2.0 * std::exp(-1.0 / spec.horizon);
    CHECK(ua[c] > 0.6 * q1);
    CHECK(ua[c] < 1.1 * q1);
}

TEST_CASE("diffusion-dominant transport respects the discrete bounds") {
    const NetworkSpec spec;
    const VelocityModel vel = VelocityModel::from_expressions(
        {"-0.02", "0.01", "0.01"}, {{{"0", "0"}, {"0", "0"}, {"0", "0"}}});
    const BoundaryData data = BoundaryData::from_expressions(
        {"2*ramp(t)", "ramp(t)", "0.5*ramp(t)"}, {"0", "0", "0"}, "0");
    const double eps = 0.3;
    const Rig rig = make_rig(spec, vel, eps, 0.015);

    ReferenceOptions opt;
    opt.dt = 0.05;
    opt.temporal_check = false;
    const ReferenceSolution sol = solve_reference(spec, vel, data, eps, rig.mesh,
                                                  *rig.pot, opt);
    const double hi = snap_max(sol);
    CHECK(hi > 0.1);  // the traces really propagate inward
    CHECK(hi <= 2.0 * std::exp(-1.0 / spec.horizon) * (1.0 + 1e-6));
    CHECK(snap_min(sol) >= -1e-6 * hi);
}

TEST_CASE("refining the mesh converges at first order or better") {
    const NetworkSpec spec;
    const VelocityModel vel = VelocityModel::standard();
    const BoundaryData data = BoundaryData::standard();
    const double eps = 0.3;

    ReferenceOptions opt;
    opt.dt = 0.1;
    opt.scheme = TimeScheme::bdf2;
    opt.snapshot_every = 100;
    opt.temporal_check = false;

    const std::vector<std::array<double, 3>> pts = {
        {0.007, 0.013, -0.027}, {-0.041, 0.033, 0.019}, {0.052, -0.047, 0.021},
        {0.251, 0.017, -0.023}, {0.503, -0.021, 0.013}, {0.752, 0.011, 0.017},
        {0.017, 0.251, -0.023}, {-0.021, 0.503, 0.013}, {0.011, 0.752, 0.017},
        {0.017, -0.023, 0.251}, {-0.021, 0.013, 0.503}, {0.011, 0.017, 0.752},
    };

    auto run = [&](double target) {
        const Rig rig = make_rig(spec, vel, eps, target);
        return solve_reference(spec, vel, data, eps, rig.mesh, *rig.pot, opt);
    };
    const ReferenceSolution coarse = run(0.015);
    const ReferenceSolution mid = run(0.01);
    const ReferenceSolution truth = run(0.005);
    CHECK(truth.worst_mass_defect <= 1e-8);  // bdf2 three-level ledger at scale

    auto err = [&](const ReferenceSolution& sol) {
        double e = 0.0;
        for (const auto& x : pts)
            e = std::max(e, std::abs(sol.sample(x, spec.horizon) -
                                     truth.sample(x, spec.horizon)));
        return e;
    };
    const double e_coarse = err(coarse);
    const double e_mid = err(mid);
    CHECK(e_coarse > e_mid);
    const double order = std::log(e_coarse / e_mid) / std::log(1.5);
    CHECK(order >= 0.8);
}
