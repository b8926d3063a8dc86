#include "thinflow/node_layer.hpp"
#include "thinflow/errors.hpp"

#include <doctest.h>
#include <array>
#include <cmath>
#include <random>
#include <sstream>
#include <string>

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

template <class F>
double simpson(F&& f, double a, double b, int n) {
    const double h = (b - a) / n;
    double acc = f(a) + f(b);
    for (int k = 1; k < n; ++k) acc += f(a + k * h) * (k % 2 ? 4.0 : 2.0);
    return acc * h / 3.0;
}

// one mesh/potential pair shared by every case below
struct Rig {
    NetworkSpec spec;
    VelocityModel vel = VelocityModel::standard();
    VoxelMesh mesh;
    NodePotential pot;
    Rig() : mesh(build_rescaled_node(spec, 3.0, 0.05)), pot(spec, vel, mesh.spacing) {}
};

const Rig& rig() {
    static Rig r;
    return r;
}

bool all_exact_zero(const std::vector<std::vector<double>>& values) {
    for (const auto& row : values)
        for (double v : row)
            if (v != 0.0) return false;
    return true;
}

// xi * chi'(xi) integrated over the transition band, by parts
double growth_moment(const NetworkSpec& spec) {
    const Cutoff chi = spec.chi_node();
    return 3.0 * spec.ell0 - simpson([&](double x) { return chi(x); }, 2.0 * spec.ell0,
                                     3.0 * spec.ell0, 4096);
}
} // namespace

TEST_CASE("node mesh and potential share one staircase") {
    const auto& r = rig();
    const int n0 = r.mesh.n_half;
    const double s = r.mesh.spacing;
    CHECK(r.pot.n_half() == n0);
    CHECK(r.pot.spacing() == r.mesh.spacing);
    CHECK(r.mesh.n_axial[0] == 54);

    // a stub cell exists exactly where the potential's port face carries flow
    for (int i = 0; i < 3; ++i) {
        for (int u = -n0; u < n0; ++u)
            for (int v = -n0; v < n0; ++v) {
                std::array<double, 3> x{};
                x[i] = (n0 + 0.5) * s;
                x[(i + 1) % 3] = (u + 0.5) * s;
                x[(i + 2) % 3] = (v + 0.5) * s;
                const bool in_stub = r.mesh.locate(x) >= 0;
                const bool flowing = r.pot.face_velocity(i, n0, u, v) != 0.0;
                CHECK(in_stub == flowing);
            }
    }

    // the staircase port flux equals the true disk flux exactly
    for (int i = 0; i < 3; ++i) {
        double flux = 0.0;
        for (int u = -n0; u < n0; ++u)
            for (int v = -n0; v < n0; ++v) flux += r.pot.face_velocity(i, n0, u, v) * s * s;
        const double exact = r.vel.v_node(i) * kPi * r.spec.h[i] * r.spec.h[i];
        CHECK(flux == doctest::Approx(exact).epsilon(1e-12));
    }

    // the staggered node field is discretely divergence-free
    double scale = 0.0;
    for (int i = 0; i < 3; ++i) scale = std::max(scale, std::abs(r.pot.port_speed(i)));
    std::mt19937 rng(77);
    std::uniform_int_distribution<int> pick(-n0, n0 - 1);
    for (int trial = 0; trial < 150; ++trial) {
        const std::array<int, 3> k{pick(rng), pick(rng), pick(rng)};
        double div = 0.0;
        for (int a = 0; a < 3; ++a) {
            const int u = k[(a + 1) % 3], v = k[(a + 2) % 3];
            div += r.pot.face_velocity(a, k[a] + 1, u, v) - r.pot.face_velocity(a, k[a], u, v);
        }
        CHECK(std::abs(div) <= 1e-8 * scale);
    }
}

TEST_CASE("zero data solves to the zero field and zero gluing constants") {
    const auto& r = rig();
    NodeProblem prob;
    prob.order = {1, -1};
    prob.spec = r.spec;
    prob.vel = r.vel;

    const NodeField f = solve_node_problem(r.mesh, r.pot, prob);
    REQUIRE(f.times.size() == 32);
    CHECK(f.times.front() == 0.0);
    CHECK(f.times.back() == r.spec.horizon);
    CHECK(all_exact_zero(f.values));
    CHECK(f.solvability_defect == 0.0);
    CHECK(f.cap_ratio == 0.0);
    for (int i = 0; i < 3; ++i) CHECK(std::isinf(f.decay[i].beta0));

    for (OrderIndex base : {OrderIndex{1, -1}, OrderIndex{0, 0}}) {
        prob.order = base;
        const GluingConstant g = compute_gluing_constant(r.mesh, r.pot, prob);
        REQUIRE(g.d.size() == g.times.size());
        for (double v : g.d) CHECK(v == 0.0);
    }
}

TEST_CASE("uniform vertex value reproduces the cutoff complement exactly") {
    const auto& r = rig();
    auto c = [](double t) { return t * t * (1.0 + 0.5 * t); };

    NodeProblem prob;
    prob.order = {1, -1};
    prob.spec = r.spec;
    prob.vel = r.vel;
    for (int i = 0; i < 3; ++i) prob.edge[i].vertex = c;

    const NodeField f = solve_node_problem(r.mesh, r.pot, prob);
    const Cutoff chi = r.spec.chi_node();

    // the exact field is the constant c(t); the stored decaying part is its
    // cutoff complement on the stubs and the full value on the cube
    double worst = 0.0;
    for (std::size_t j = 0; j < f.times.size(); ++j) {
        const double cj = c(f.times[j]);
        for (int cell = 0; cell < r.mesh.n_cells(); ++cell) {
            double oracle = cj;
            if (r.mesh.region[cell] != 0) {
                const int i = r.mesh.region[cell] - 1;
                oracle = cj * (1.0 - chi(r.mesh.center(cell)[i]));
            }
            worst = std::max(worst, std::abs(f.values[j][cell] - oracle));
        }
    }
    CHECK(worst <= 5e-9 * (1.0 + c(1.0)));

    CHECK(f.solvability_defect <= 1e-7);
    CHECK(f.cap_ratio <= 1e-8);
    for (int i = 0; i < 3; ++i) CHECK(std::isinf(f.decay[i].beta0));

    // data vanishing at t = 0 gives a bitwise-zero first sample
    for (double v : f.values[0]) REQUIRE(v == 0.0);
    CHECK(f.vertex_values[1][7] == c(f.times[7]));
    CHECK(f.krylov_residual <= 1e-11);
}

TEST_CASE("gluing constant: closed forms and quadrature invariance") {
    const auto& r = rig();
    const double I = growth_moment(r.spec);

    // linear growth on all three stubs: d has a closed form in the moment I
    {
        NodeProblem prob;
        prob.order = {1, 0};
        prob.spec = r.spec;
        prob.vel = r.vel;
        const std::array<double, 3> kappa{0.8, -0.45, 1.2};
        auto q = [](double t) { return t * t + 0.3 * t * t * t; };
        for (int i = 0; i < 3; ++i)
            prob.edge[i].psi = {[&, i](double t) { return kappa[i] * q(t); }};

        const GluingConstant g = compute_gluing_constant(r.mesh, r.pot, prob);
        CHECK(g.d[0] == 0.0);
        for (std::size_t j = 0; j < g.times.size(); ++j) {
            double expected = 0.0;
            for (int i = 0; i < 3; ++i)
                expected += r.spec.h[i] * r.spec.h[i] * kappa[i] *
                            (1.0 - r.vel.v_node(i) * I) * q(g.times[j]);
            CHECK(std::abs(g.d[j] - expected) <= 1e-9 * (1.0 + std::abs(expected)));
        }
    }

    // wall source localized on the bottom wall: surface integral in closed form
    {
        NodeProblem prob;
        prob.order = {1, 0};
        prob.spec = r.spec;
        prob.vel = r.vel;
        prob.phi0 = Expression::parse(
            "bump(x,-0.25,0.25)*bump(y,-0.25,0.25)*bump(z,-0.4,-0.2)*(t*t)",
            {"x", "y", "z", "t"});

        const Expression profile = Expression::parse("bump(x,-0.25,0.25)", {"x"});
        const double J = simpson([&](double x) { return profile({x}); }, -0.25, 0.25, 8192);

        const GluingConstant g = compute_gluing_constant(r.mesh, r.pot, prob);
        for (std::size_t j = 0; j < g.times.size(); ++j) {
            const double t = g.times[j];
            const double expected = -(1.0 / kPi) * t * t * J * J;
            CHECK(std::abs(g.d[j] - expected) <= 2e-6 * (1.0 + std::abs(expected)));
        }
    }

    // base orders short-circuit to zero regardless of supplied growth data
    {
        NodeProblem prob;
        prob.order = {0, 0};
        prob.spec = r.spec;
        prob.vel = r.vel;
        for (int i = 0; i < 3; ++i) prob.edge[i].psi = {[](double t) { return 1.0 + t; }};
        const GluingConstant g = compute_gluing_constant(r.mesh, r.pot, prob);
        for (double v : g.d) CHECK(v == 0.0);
    }
}

TEST_CASE("growth data books balance: alpha-order chain decays") {
    const auto& r = rig();
    const Cutoff chi = r.spec.chi_node();
    auto c = [](double t) { return 0.6 * t * t * t; };
    auto dc = [](double t) { return 1.8 * t * t; };

    // leading-order field: uniform vertex value on all three stubs
    NodeProblem base;
    base.order = {1, -1};
    base.spec = r.spec;
    base.vel = r.vel;
    for (int i = 0; i < 3; ++i) base.edge[i].vertex = c;
    const NodeField f0 = solve_node_problem(r.mesh, r.pot, base);

    NodeProblem dbase = base;
    for (int i = 0; i < 3; ++i) dbase.edge[i].vertex = dc;
    const NodeField df0 = time_derivative_field(r.mesh, r.pot, f0, dbase);
    CHECK(df0.dt_mode == "resolve");
    {
        double worst = 0.0;
        for (std::size_t j = 0; j < df0.times.size(); ++j) {
            const double cj = dc(df0.times[j]);
            for (int cell = 0; cell < r.mesh.n_cells(); ++cell) {
                double oracle = cj;
                if (r.mesh.region[cell] != 0)
                    oracle = cj * (1.0 - chi(r.mesh.center(cell)[r.mesh.region[cell] - 1]));
                worst = std::max(worst, std::abs(df0.values[j][cell] - oracle));
            }
        }
        CHECK(worst <= 5e-9 * (1.0 + dc(1.0)));
    }

    // discrete weight of the cutoff complement and the growth moment, both
    // recomputed here independently of the library quadratures
    double W = 0.0;
    for (int cell = 0; cell < r.mesh.n_cells(); ++cell) {
        if (r.mesh.region[cell] == 0)
            W += 1.0;
        else
            W += 1.0 - chi(r.mesh.center(cell)[r.mesh.region[cell] - 1]);
    }
    W *= r.mesh.cell_volume();
    const double I = growth_moment(r.spec);

    // transport-consistent growth slopes: along each stub the previous order's
    // time derivative dc is balanced only by the slope -dc / v_i; any other
    // slope leaves a volumetric source that runs out to the caps (the
    // truncation guard test exercises exactly that failure mode)
    std::array<double, 3> kappa{};
    for (int i = 0; i < 3; ++i) kappa[i] = -1.0 / r.vel.v_node(i);
    auto d_closed = [&](double t) {
        double acc = -dc(t) * W / kPi;
        for (int i = 0; i < 3; ++i)
            acc += r.spec.h[i] * r.spec.h[i] * kappa[i] * (1.0 - r.vel.v_node(i) * I) * dc(t);
        return acc;
    };

    NodeProblem alpha;
    alpha.order = {1, 0};
    alpha.spec = r.spec;
    alpha.vel = r.vel;
    for (int i = 0; i < 3; ++i)
        alpha.edge[i].psi = {[&, i](double t) { return kappa[i] * dc(t); }};
    alpha.dt_prev = &df0;

    const GluingConstant g = compute_gluing_constant(r.mesh, r.pot, alpha);
    CHECK(g.d[0] == 0.0);
    CHECK(std::abs(g.d[1]) <= 1e-3);  // d ~ t^2 near t = 0: flat start
    for (std::size_t j = 0; j < g.times.size(); ++j) {
        const double expected = d_closed(g.times[j]);
        CHECK(std::abs(g.d[j] - expected) <= 2e-8 * (1.0 + std::abs(expected)));
    }

    // vertex data matched to the gluing identity: the remainder decays
    NodeProblem flow = alpha;
    flow.edge[0].vertex = [&](double t) {
        return d_closed(t) / (r.spec.h[0] * r.spec.h[0] * r.vel.v_node(0));
    };
    for (int i = 0; i < 3; ++i) flow.dt_prev_edge[i].vertex = dc;

    const NodeField fa = solve_node_problem(r.mesh, r.pot, flow);
    CHECK(fa.solvability_defect <= 1e-6);
    CHECK(fa.cap_ratio <= 0.02);
    for (int i = 0; i < 3; ++i) CHECK(fa.decay[i].beta0 > 0.0);
    CHECK(fa.decay[0].beta0 > 1.0);
    CHECK(fa.decay[0].beta0 < 3.0);
    CHECK(fa.decay[0].fitted_slices >= 3);
    CHECK(fa.decay[0].band >= 0.0);
    for (double v : fa.values[0]) REQUIRE(v == 0.0);

    // reconstruction restores the growth part on stub cells, bookkeeping only
    int stub_cell = -1, cube_cell = -1;
    for (int cell = 0; cell < r.mesh.n_cells() && (stub_cell < 0 || cube_cell < 0); ++cell) {
        if (r.mesh.region[cell] == 1 && stub_cell < 0) stub_cell = cell;
        if (r.mesh.region[cell] == 0 && cube_cell < 0) cube_cell = cell;
    }
    REQUIRE(stub_cell >= 0);
    REQUIRE(cube_cell >= 0);
    const int sj = 20;
    const double xi = r.mesh.center(stub_cell)[0];
    const double hand = fa.values[sj][stub_cell] +
                        chi(xi) * (fa.vertex_values[0][sj] + xi * fa.psi_values[0][0][sj]);
    CHECK(std::abs(reconstruct_node_value(r.spec, r.mesh, fa, stub_cell, sj) - hand) <=
          1e-12 * (1.0 + std::abs(hand)));
    CHECK(reconstruct_node_value(r.spec, r.mesh, fa, cube_cell, sj) == fa.values[sj][cube_cell]);
}

TEST_CASE("time derivative modes: linearity, fallback accuracy, vanishing start") {
    const auto& r = rig();
    const Cutoff chi = r.spec.chi_node();
    auto c = [](double t) { return t * t * (2.0 - t); };
    auto dc = [](double t) { return 4.0 * t - 3.0 * t * t; };

    NodeProblem prob;
    prob.order = {0, 0};
    prob.spec = r.spec;
    prob.vel = r.vel;
    for (int i = 0; i < 3; ++i) prob.edge[i].vertex = c;
    const NodeField f = solve_node_problem(r.mesh, r.pot, prob);

    auto oracle_gap = [&](const NodeField& df) {
        double worst = 0.0;
        for (std::size_t j = 0; j < df.times.size(); ++j) {
            const double cj = dc(df.times[j]);
            for (int cell = 0; cell < r.mesh.n_cells(); ++cell) {
                double oracle = cj;
                if (r.mesh.region[cell] != 0)
                    oracle = cj * (1.0 - chi(r.mesh.center(cell)[r.mesh.region[cell] - 1]));
                worst = std::max(worst, std::abs(df.values[j][cell] - oracle));
            }
        }
        return worst;
    };

    NodeProblem dprob = prob;
    for (int i = 0; i < 3; ++i) dprob.edge[i].vertex = dc;
    const NodeField dfr = time_derivative_field(r.mesh, r.pot, f, dprob);
    CHECK(dfr.dt_mode == "resolve");
    CHECK(oracle_gap(dfr) <= 5e-9 * (1.0 + 4.0 / 3.0));
    for (double v : dfr.values[0]) REQUIRE(v == 0.0);  // dc(0) = 0 survives exactly

    NodeProblem fdprob;
    fdprob.opt.fd_time_derivative = true;
    const NodeField dff = time_derivative_field(r.mesh, r.pot, f, fdprob);
    CHECK(dff.dt_mode == "finite-difference");
    CHECK(oracle_gap(dff) <= 5e-3 * (1.0 + 4.0 / 3.0));
    double start = 0.0;
    for (double v : dff.values[0]) start = std::max(start, std::abs(v));
    CHECK(start <= 3e-3);  // one-sided difference leaves O(dt^2) at t = 0

    // time-independent data: the derivative problem carries zero data
    NodeProblem zprob;
    zprob.order = {0, 0};
    zprob.spec = r.spec;
    zprob.vel = r.vel;
    const NodeField dz = time_derivative_field(r.mesh, r.pot, f, zprob);
    CHECK(all_exact_zero(dz.values));

    // data linear in t: both modes agree to solver noise
    NodeProblem lin = prob;
    for (int i = 0; i < 3; ++i) lin.edge[i].vertex = [](double t) { return 0.8 * t; };
    const NodeField fl = solve_node_problem(r.mesh, r.pot, lin);
    NodeProblem dlin = prob;
    for (int i = 0; i < 3; ++i) dlin.edge[i].vertex = [](double) { return 0.8; };
    const NodeField dlr = time_derivative_field(r.mesh, r.pot, fl, dlin);
    const NodeField dlf = time_derivative_field(r.mesh, r.pot, fl, fdprob);
    double gap = 0.0;
    for (std::size_t j = 0; j < fl.times.size(); ++j)
        for (int cell = 0; cell < r.mesh.n_cells(); ++cell)
            gap = std::max(gap, std::abs(dlr.values[j][cell] - dlf.values[j][cell]));
    CHECK(gap <= 5e-8);

    // too few samples to differentiate
    NodeField two;
    two.times = {0.0, 0.5};
    expect_kind(errkind::SpacingTooCoarse,
                [&] { time_derivative_field(r.mesh, r.pot, two, fdprob); });
}

TEST_CASE("guards: incompatible data, tight caps, mismatched grids") {
    const auto& r = rig();

    // vertex flux with no gluing data to balance it
    expect_kind(errkind::SolvabilityDefect, [&] {
        NodeProblem prob;
        prob.order = {1, 0};
        prob.spec = r.spec;
        prob.vel = r.vel;
        prob.edge[0].vertex = [](double t) { return t * t; };
        solve_node_problem(r.mesh, r.pot, prob);
    });

    // books-compatible growth with nothing to balance its advection: the
    // residual drifts out to the caps and the truncation guard fires
    expect_kind(errkind::TruncationError, [&] {
        const double I = growth_moment(r.spec);
        NodeProblem prob;
        prob.order = {1, 0};
        prob.spec = r.spec;
        prob.vel = r.vel;
        prob.edge[0].psi = {[](double t) { return t * t; }};
        prob.edge[0].vertex = [&, I](double t) {
            return (1.0 - r.vel.v_node(0) * I) * t * t / r.vel.v_node(0);
        };
        prob.opt.cap_tol = 1e-9;
        solve_node_problem(r.mesh, r.pot, prob);
    });

    // mesh refined without rebuilding the potential
    expect_kind(errkind::GridMismatch, [&] {
        const VoxelMesh fine = build_rescaled_node(r.spec, 3.0, 0.03);
        NodeProblem prob;
        prob.order = {1, -1};
        prob.spec = r.spec;
        prob.vel = r.vel;
        solve_node_problem(fine, r.pot, prob);
    });

    // previous-order derivative on the wrong grid
    expect_kind(errkind::GridMismatch, [&] {
        NodeField bogus;
        bogus.times.assign(5, 0.0);
        bogus.values.assign(5, std::vector<double>(3, 0.0));
        NodeProblem prob;
        prob.order = {1, 0};
        prob.spec = r.spec;
        prob.vel = r.vel;
        prob.dt_prev = &bogus;
        solve_node_problem(r.mesh, r.pot, prob);
    });

    // time grid too coarse to carry the signals
    expect_kind(errkind::SpacingTooCoarse, [&] {
        NodeProblem prob;
        prob.order = {1, -1};
        prob.spec = r.spec;
        prob.vel = r.vel;
        prob.opt.t_samples = 3;
        solve_node_problem(r.mesh, r.pot, prob);
    });
}

TEST_CASE("ascii artifacts: csv signal and voxel slices") {
    const auto& r = rig();
    auto c = [](double t) { return t * t; };

    NodeProblem prob;
    prob.order = {1, -1};
    prob.spec = r.spec;
    prob.vel = r.vel;
    prob.opt.t_samples = 9;
    for (int i = 0; i < 3; ++i) prob.edge[i].vertex = c;
    const NodeField f = solve_node_problem(r.mesh, r.pot, prob);
    REQUIRE(f.times.size() == 9);

    // gluing signal round-trips through its csv form
    {
        NodeProblem gp;
        gp.order = {1, 0};
        gp.spec = r.spec;
        gp.vel = r.vel;
        gp.opt.t_samples = 9;
        gp.edge[0].psi = {[](double t) { return t * t; }};
        const GluingConstant g = compute_gluing_constant(r.mesh, r.pot, gp);

        std::ostringstream os;
        g.write_csv(os);
        std::istringstream is(os.str());
        std::string line;
        REQUIRE(std::getline(is, line));
        CHECK(line == "t,d");
        double prev_t = -1.0, last_d = 0.0;
        int rows = 0;
        while (std::getline(is, line)) {
            double t = 0.0, dv = 0.0;
            REQUIRE(std::sscanf(line.c_str(), "%lf,%lf", &t, &dv) == 2);
            CHECK(t > prev_t);
            prev_t = t;
            last_d = dv;
            ++rows;
        }
        CHECK(rows == 9);
        CHECK(std::abs(last_d) > 1e-6);
    }

    // voxel slices: full cube plane, staircase stub cross-section
    {
        std::ostringstream cube;
        dump_ascii_slice(r.mesh, f, 4, 0, r.mesh.n_half, cube);
        const std::string cs = cube.str();
        CHECK(std::count(cs.begin(), cs.end(), '\n') == 2 * r.mesh.n_half);
        CHECK(cs.find("e-") != std::string::npos);
        CHECK(cs.find(" .") == std::string::npos);

        std::ostringstream stub;
        dump_ascii_slice(r.mesh, f, 4, 1, 10, stub);
        const std::string ss = stub.str();
        CHECK(std::count(ss.begin(), ss.end(), '\n') == 2 * r.mesh.n_half);
        CHECK(ss.find(" .") != std::string::npos);  // corners lie outside the staircase
    }

    // interpolation: cube plateau, decayed far field, smooth transition
    {
        const double cj = c(f.times[4]);
        CHECK(std::abs(sample_node_field(r.mesh, f, 4, {0.0, 0.0, 0.0}) - cj) <=
              1e-8 * (1.0 + cj));
        CHECK(std::abs(sample_node_field(r.mesh, f, 4, {2.5, 0.01, 0.01})) <= 1e-8 * (1.0 + cj));
        const Cutoff chi = r.spec.chi_node();
        const double mid = sample_node_field(r.mesh, f, 4, {0.75, 0.02, -0.01});
        CHECK(std::abs(mid - cj * (1.0 - chi(0.75))) <= 6e-2 * (1.0 + cj));
        expect_kind(errkind::OutOfDomain,
                    [&] { sample_node_field(r.mesh, f, 4, {0.2, 0.2, 0.9}); });
    }
}
