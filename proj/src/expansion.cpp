#include "thinflow/expansion.hpp"

#include "thinflow/cutoff.hpp"
#include "thinflow/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <tuple>
#include <utility>

namespace thinflow {

namespace {

// ---------------------------------------------------------------- signals

using SplinePtr = std::shared_ptr<const CubicSpline>;

TimeSignal signal_of(SplinePtr s) {
    return [s = std::move(s)](double t) { return (*s)(t); };
}

/// k-fold time derivative of a nodal spline, re-sampled through new splines
/// so arbitrary depth stays available for deep resolve chains
SplinePtr dt_spline(SplinePtr s, int k) {
    for (; k > 0; --k) {
        const int n = s->segments();
        std::vector<double> v(n + 1);
        for (int j = 0; j <= n; ++j)
            v[j] = s->d1(s->a() + (s->b() - s->a()) * j / n);
        s = std::make_shared<CubicSpline>(s->a(), s->b(), std::move(v));
    }
    return s;
}

bool zero_field(const Field2& w) {
    for (int it = 0; it <= w.nt(); ++it)
        for (int ix = 0; ix <= w.nx(); ++ix)
            if (w.at(ix, it) != 0.0) return false;
    return true;
}

/// Lagrange weights of window size W <= 6 at offset u (relative to the first
/// window node), on unit-spaced nodes
void lagrange_weights(double u, int W, double* w) {
    for (int k = 0; k < W; ++k) {
        double p = 1.0;
        for (int m = 0; m < W; ++m)
            if (m != k) p *= (u - m) / (k - m);
        w[k] = p;
    }
}

// ---------------------------------------------------------------- builder

struct Builder {
    const NetworkSpec& spec;
    const VelocityModel& vel;
    const BoundaryData& data;
    const ExpansionOptions& opt;

    Builder(const NetworkSpec& s, const VelocityModel& v, const BoundaryData& d,
            const ExpansionOptions& o)
        : spec(s), vel(v), data(d), opt(o) {}

    std::shared_ptr<const VoxelMesh> mesh;
    std::shared_ptr<const NodePotential> pot;
    std::vector<OrderIndex> inventory;
    std::map<std::pair<int, int>, std::size_t> pos;
    std::vector<ExpansionTerm> terms;
    std::vector<std::string> audit;

    std::map<std::tuple<int, int, int, int>, SplinePtr> traces;  // (p,m,edge,dx)
    std::map<std::tuple<int, int, int>, std::shared_ptr<const NodeField>> dtn;  // (p,m,k)

    bool has(OrderIndex o) const { return pos.count({o.p, o.m}) != 0; }
    const ExpansionTerm& term(OrderIndex o) const { return terms[pos.at({o.p, o.m})]; }

    void dep(const std::string& target, const std::string& source, const std::string& why) {
        audit.push_back(target + " <- " + source + " (" + why + ")");
    }

    /// nodal time spline of the dx-th axial derivative of a branch field at
    /// the vertex
    SplinePtr trace(OrderIndex o, int edge, int dx) {
        const auto key = std::make_tuple(o.p, o.m, edge, dx);
        auto it = traces.find(key);
        if (it != traces.end()) return it->second;
        const Field2& w = term(o).w[edge];
        auto s = std::make_shared<CubicSpline>(w.ta(), w.tb(), w.time_slice_dx(0.0, dx));
        traces.emplace(key, s);
        return s;
    }

    /// growth data of one node problem, differentiated k times in t: the
    /// vertex trace of the order itself plus the polynomial slopes taken from
    /// the fields j orders below
    NodeEdgeData edge_data(OrderIndex o, int edge, int k, bool with_vertex) {
        NodeEdgeData ed;
        if (!has(o)) return ed;
        if (with_vertex) ed.vertex = signal_of(dt_spline(trace(o, edge, 0), k));
        for (int j = 1; j <= o.m + 1; ++j) {
            const OrderIndex below{o.p, o.m - j};
            if (!has(below)) break;
            ed.psi.push_back(signal_of(dt_spline(trace(below, edge, j), k)));
        }
        return ed;
    }

    Expression phi_node_dt(int k) const {
        Expression e = data.phi_node;
        for (int j = 0; j < k; ++j) e = e.derivative("t");
        return e;
    }

    /// node problem of order o with all data differentiated k times;
    /// with_vertex is off while the vertex budget is still being derived
    NodeProblem node_problem(OrderIndex o, int k, bool with_vertex) {
        NodeProblem prob;
        prob.order = o;
        prob.spec = spec;
        prob.vel = vel;
        prob.opt = opt.node;
        prob.phi0 = phi_node_dt(k);
        for (int i = 0; i < 3; ++i) prob.edge[i] = edge_data(o, i, k, with_vertex);
        const OrderIndex prev{o.p, o.m - 1};
        if (has(prev)) {
            for (int i = 0; i < 3; ++i) prob.dt_prev_edge[i] = edge_data(prev, i, k + 1, true);
            prob.dt_prev = dt_node(prev, k + 1).get();
        }
        return prob;
    }

    /// k-th time derivative of a node corrector, resolved with exactly
    /// differentiated data (memoized; the chain grounds at the leading pair,
    /// which has no time-derivative forcing)
    std::shared_ptr<const NodeField> dt_node(OrderIndex o, int k) {
        if (k == 0) return term(o).node;
        const auto key = std::make_tuple(o.p, o.m, k);
        auto it = dtn.find(key);
        if (it != dtn.end()) return it->second;
        NodeProblem dp = node_problem(o, k, true);
        auto f = std::make_shared<NodeField>(
            time_derivative_field(*mesh, *pot, *dt_node(o, k - 1), dp));
        dtn.emplace(key, f);
        return f;
    }

    /// second axial derivative of the previous order's branch fields, sampled
    /// onto a fresh grid (the forcing of every follow-up transport problem)
    std::array<Field2, 3> diffusion_rhs(OrderIndex prev) {
        std::array<Field2, 3> rhs;
        for (int i = 0; i < 3; ++i) {
            const Field2& w = term(prev).w[i];
            Field2 f(w.xa(), w.xb(), w.nx(), w.ta(), w.tb(), w.nt());
            for (int it = 0; it <= w.nt(); ++it)
                for (int ix = 0; ix <= w.nx(); ++ix)
                    f.at(ix, it) = w.dxx(w.xnode(ix), w.tnode(it));
            f.finalize();
            rhs[i] = std::move(f);
        }
        return rhs;
    }

    void build_order(OrderIndex o) {
        const std::string tag = order_tag(o);
        terms.emplace_back();
        ExpansionTerm& T = terms.back();
        T.order = o;
        pos[{o.p, o.m}] = terms.size() - 1;

        const bool base_pair = (o == OrderIndex{1, -1}) || (o == OrderIndex{0, 0});
        const OrderIndex prev{o.p, o.m - 1};

        // vertex flux budget of this order (identically zero for the pair)
        NodeProblem prob = node_problem(o, 0, false);
        T.d = std::make_shared<GluingConstant>(compute_gluing_constant(*mesh, *pot, prob));
        if (!base_pair) {
            if (o == OrderIndex{1, 0}) dep("d " + tag, "phi0", "node wall interaction");
            dep("d " + tag, "dt N " + order_tag(prev), "volume source");
            dep("d " + tag, "w " + order_tag(prev), "stub growth flux");
        }

        // branch fields
        if (o == OrderIndex{1, -1}) {
            std::array<Field2, 3> phihat;
            std::array<const Field2*, 3> rp{};
            for (int i = 0; i < 3; ++i) {
                if (data.phi_edge[i].is_zero()) continue;
                Field2 f = average_lateral_interaction(spec, data.phi_edge[i], i, opt.edge);
                for (int it = 0; it <= f.nt(); ++it)
                    for (int ix = 0; ix <= f.nx(); ++ix)
                        f.at(ix, it) = -f.at(ix, it);
                f.finalize();
                phihat[i] = std::move(f);
                rp[i] = &phihat[i];
                dep("w " + tag, "phi_" + std::to_string(i + 1), "averaged wall density");
            }
            T.w = solve_limit_problem_base(spec, vel, [](double) { return 0.0; }, rp, opt.edge);
        } else if (o == OrderIndex{0, 0}) {
            T.w = solve_limit_problem_base(
                spec, vel, [q = data.q[0]](double t) { return q({t}); },
                {nullptr, nullptr, nullptr}, opt.edge);
            dep("w " + tag, "q_1", "inflow base datum");
        } else {
            const std::array<Field2, 3> rhs = diffusion_rhs(prev);
            auto ds = std::make_shared<CubicSpline>(T.d->times.front(), T.d->times.back(),
                                                    T.d->d);
            T.w = solve_limit_problem_general(
                spec, vel, [ds](double t) { return (*ds)(t); },
                {&rhs[0], &rhs[1], &rhs[2]}, opt.edge);
            dep("w " + tag, "w " + order_tag(prev), "axial diffusion forcing");
            dep("w " + tag, "d " + tag, "vertex flux budget");
        }

        // transverse correctors; structurally zero problems keep a null handle
        if (o == OrderIndex{1, 0}) {
            for (int i = 0; i < 3; ++i) {
                if (data.phi_edge[i].is_zero() && zero_field(term(prev).w[i])) continue;
                DiskCorrector u = make_first_interaction_corrector(
                    spec, vel, i, data.phi_edge[i], term(prev).w[i], opt.disk);
                if (!u.is_null()) T.u[i] = std::make_shared<DiskCorrector>(std::move(u));
            }
            dep("u " + tag, "w " + order_tag(prev) + ", phi", "first interaction");
        } else if (o == OrderIndex{0, 1}) {
            for (int i = 0; i < 3; ++i) {
                DiskCorrector u =
                    make_integer_chain_corrector(spec, vel, i, term(prev).w[i], opt.disk);
                if (!u.is_null()) T.u[i] = std::make_shared<DiskCorrector>(std::move(u));
            }
            dep("u " + tag, "w " + order_tag(prev), "transverse drift");
        } else if (!base_pair) {
            const OrderIndex prev2{o.p, o.m - 2};
            for (int i = 0; i < 3; ++i) {
                auto u_prev2 = has(prev2) ? term(prev2).u[i] : nullptr;
                if (!term(prev).u[i] && !u_prev2 && zero_field(term(prev).w[i])) continue;
                DiskCorrector u = make_next_corrector(spec, vel, i, term(prev).w[i],
                                                      term(prev).u[i], u_prev2, opt.disk);
                if (!u.is_null()) T.u[i] = std::make_shared<DiskCorrector>(std::move(u));
            }
            dep("u " + tag, "w,u " + order_tag(prev), "next transverse order");
        }

        // node corrector, now that the vertex traces exist
        for (int i = 0; i < 3; ++i)
            prob.edge[i].vertex = signal_of(trace(o, i, 0));
        T.node = std::make_shared<NodeField>(solve_node_problem(*mesh, *pot, prob));
        dep("N " + tag, "w " + tag, "vertex trace and growth");
        if (has(prev)) dep("N " + tag, "dt N " + order_tag(prev), "time forcing");

        // base layers on outflow ends
        const std::vector<double>& times = layer_times();
        for (int i = 0; i < 3; ++i) {
            if (vel.v_base(i, spec) <= 0.0) continue;
            const LayerTerm* lp = has(prev) ? term(prev).layer[i].get() : nullptr;
            const Field2* w = &T.w[i];
            const double ell = spec.ell[i];
            const bool dirichlet = (o == OrderIndex{0, 0});
            auto datum = [w, ell, dirichlet, q = data.q[i]](double t) {
                return (dirichlet ? q({t}) : 0.0) - w->eval(ell, t);
            };
            T.layer[i] = std::make_shared<LayerTerm>(build_layer_term(
                i, o, lp, datum, vel.v_base(i, spec), lp ? std::vector<double>{} : times));
            dep("Pi " + tag, "w " + tag, "base trace repair");
            if (lp) dep("Pi " + tag, "Pi " + order_tag(prev), "time forcing");
        }
    }

    const std::vector<double>& layer_times() {
        if (times_.empty()) {
            times_.resize(opt.edge.nt + 1);
            for (int k = 0; k <= opt.edge.nt; ++k)
                times_[k] = spec.horizon * k / opt.edge.nt;
        }
        return times_;
    }
    std::vector<double> times_;
};

// ------------------------------------------------------------- node eval

/// reconstructed node corrector at rescaled point xi, interpolated in time
double node_value(const ExpansionOrderSet& set, const NodeField& nf,
                  const std::array<double, 3>& xi, double t) {
    const std::vector<double>& times = nf.times;
    const int n = static_cast<int>(times.size());
    const double dt = times[1] - times[0];
    const int W = std::min(6, n);
    const double u = (t - times[0]) / dt;
    const int j0 = std::clamp(static_cast<int>(std::floor(u)) - (W - 1) / 2, 0, n - W);
    double lw[6];
    lagrange_weights(u - j0, W, lw);

    const VoxelMesh& mesh = *set.mesh;
    const Cutoff chi = set.spec.chi_node();

    // the remainder decays toward the caps; past the truncated stubs only
    // the polynomial growth part survives
    bool beyond = false;
    for (int i = 0; i < 3; ++i)
        if (xi[i] >= mesh.branch_end[i] - 0.5 * mesh.spacing) beyond = true;

    double out = 0.0;
    for (int k = 0; k < W; ++k) {
        if (lw[k] == 0.0) continue;
        const int s = j0 + k;
        double val = beyond ? 0.0 : sample_node_field(mesh, nf, s, xi);
        for (int i = 0; i < 3; ++i) {
            const double c = chi(xi[i]);
            if (c == 0.0) continue;
            double g = nf.vertex_values[i][s];
            double pw = 1.0;
            for (std::size_t j = 0; j < nf.psi_values[i].size(); ++j) {
                pw *= xi[i] / double(j + 1);
                g += pw * nf.psi_values[i][j][s];
            }
            val += c * g;
        }
        out += lw[k] * val;
    }
    return out;
}

} // namespace

// ---------------------------------------------------------------- zones

std::string zone_name(const ZonedPoint& zp) {
    switch (zp.zone) {
        case Zone::NodeRegion: return "node_region";
        case Zone::Blend: return "blend_" + std::to_string(zp.edge + 1);
        case Zone::CylFar: return "cyl_far_" + std::to_string(zp.edge + 1);
        case Zone::BaseLayer: return "base_layer_" + std::to_string(zp.edge + 1);
    }
    return "?";
}

ZonedPoint classify_point(const NetworkSpec& spec, double eps,
                          const std::array<double, 3>& x, double t) {
    if (!(eps > 0.0)) fail(errkind::OutOfDomain, "classify_point: eps must be positive");
    if (!(t >= 0.0) || t > spec.horizon)
        fail(errkind::OutOfDomain, "classify_point: time outside [0, horizon]");

    ZonedPoint zp;
    zp.x = x;
    zp.t = t;

    const double a = eps * spec.ell0;
    if (std::abs(x[0]) < a && std::abs(x[1]) < a && std::abs(x[2]) < a) {
        zp.zone = Zone::NodeRegion;
        return zp;
    }
    const double g = std::pow(eps, spec.gamma);
    for (int i = 0; i < 3; ++i) {
        const int j = (i + 1) % 3, k = (i + 2) % 3;
        const double r2 = x[j] * x[j] + x[k] * x[k];
        if (x[i] < a || x[i] > spec.ell[i] || r2 >= eps * eps * spec.h[i] * spec.h[i])
            continue;
        if (x[i] < 2.0 * spec.ell0 * g) {
            zp.zone = Zone::NodeRegion;  // rescaled corrector still rules here
            return zp;
        }
        zp.edge = i;
        zp.axial = x[i];
        if (x[i] < 3.0 * spec.ell0 * g) zp.zone = Zone::Blend;
        else if (x[i] < spec.ell[i] - 2.0 * spec.delta) zp.zone = Zone::CylFar;
        else zp.zone = Zone::BaseLayer;
        return zp;
    }
    fail(errkind::OutOfDomain, "classify_point: point outside the junction");
}

// ---------------------------------------------------------------- build

const ExpansionTerm* ExpansionOrderSet::find(OrderIndex order) const {
    for (const ExpansionTerm& t : terms)
        if (t.order == order) return &t;
    return nullptr;
}

ExpansionOrderSet build_expansion(const NetworkSpec& spec, const VelocityModel& vel,
                                  const BoundaryData& data, int M,
                                  const ExpansionOptions& opt) {
    if (M < 1)
        fail(errkind::MOrderTooSmall, "build_expansion: truncation order must be at least 1");
    spec.validate();
    vel.validate(spec);
    data.validate(spec);

    Builder b(spec, vel, data, opt);
    b.mesh = std::make_shared<const VoxelMesh>(
        build_rescaled_node(spec, opt.node_trunc, opt.node_spacing));
    b.pot = std::make_shared<const NodePotential>(spec, vel, opt.node_spacing);

    b.inventory = puiseux_inventory(spec.alpha, M);
    std::sort(b.inventory.begin(), b.inventory.end(), OrderLess{spec.alpha});
    b.terms.reserve(b.inventory.size());
    for (OrderIndex o : b.inventory) b.build_order(o);

    ExpansionOrderSet set;
    set.spec = spec;
    set.vel = vel;
    set.data = data;
    set.M = M;
    set.mesh = b.mesh;
    set.pot = b.pot;
    set.terms = std::move(b.terms);
    set.audit = std::move(b.audit);
    return set;
}

// ------------------------------------------------------------- evaluate

PointSample evaluate_terms(const ExpansionOrderSet& set, double eps,
                           const std::array<double, 3>& x, double t) {
    PointSample ps;
    ps.at = classify_point(set.spec, eps, x, t);
    ps.terms.reserve(set.terms.size());

    const std::array<double, 3> xi{x[0] / eps, x[1] / eps, x[2] / eps};
    const Cutoff chi = set.spec.chi_node();
    const double gscale = std::pow(eps, set.spec.gamma);

    for (const ExpansionTerm& term : set.terms) {
        double val = 0.0;
        switch (ps.at.zone) {
            case Zone::NodeRegion:
                val = node_value(set, *term.node, xi, t);
                break;
            case Zone::Blend: {
                const int i = ps.at.edge;
                const double c = chi(ps.at.axial / gscale);
                val = c * term.w[i].eval(ps.at.axial, t);
                if (c < 1.0) val += (1.0 - c) * node_value(set, *term.node, xi, t);
                break;
            }
            case Zone::CylFar:
            case Zone::BaseLayer: {
                const int i = ps.at.edge;
                val = term.w[i].eval(ps.at.axial, t);
                if (term.u[i]) {
                    const int j = (i + 1) % 3, k = (i + 2) % 3;
                    const double r = std::hypot(x[j], x[k]) / eps;
                    const double theta = std::atan2(x[k], x[j]);
                    val += term.u[i]->eval(r, theta, ps.at.axial, t);
                }
                if (term.layer[i])
                    val += eval_layer(set.spec, *term.layer[i], ps.at.axial, t, eps,
                                      set.spec.delta);
                break;
            }
        }
        const double weight = std::pow(eps, term.order.exponent(set.spec.alpha));
        ps.terms.push_back({term.order, weight, val});
        ps.value += weight * val;
    }
    return ps;
}

double evaluate(const ExpansionOrderSet& set, double eps, const std::array<double, 3>& x,
                double t) {
    return evaluate_terms(set, eps, x, t).value;
}

void evaluate_csv(const ExpansionOrderSet& set, double eps, std::istream& in,
                  std::ostream& out) {
    out.precision(std::numeric_limits<double>::max_digits10);
    out << "value,zone";
    for (const ExpansionTerm& t : set.terms) out << ',' << order_tag(t.order);
    out << '\n';

    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::string cells = line;
        std::replace(cells.begin(), cells.end(), ',', ' ');
        std::istringstream iss(cells);
        std::array<double, 3> x{};
        double t = 0.0;
        if (!(iss >> x[0] >> x[1] >> x[2] >> t)) {
            if (first) {  // a single header row is allowed
                first = false;
                continue;
            }
            fail(errkind::IoFailure, "evaluate_csv: malformed row: " + line);
        }
        first = false;
        const PointSample ps = evaluate_terms(set, eps, x, t);
        out << ps.value << ',' << zone_name(ps.at);
        for (const TermSample& ts : ps.terms) out << ',' << ts.weight * ts.value;
        out << '\n';
    }
}

} // namespace thinflow
