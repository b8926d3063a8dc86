#include "thinflow/boundary_layer.hpp"

#include "thinflow/cutoff.hpp"
#include "thinflow/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace thinflow {

namespace {

constexpr int kStencil = 9;  // window width: exact through degree 8

/// Fornberg weights: c[j] such that sum_j c[j] f(x[j]) approximates the m-th
/// derivative of f at z, exact for polynomials of degree < n.
std::vector<double> fd_weights(const double* x, int n, double z, int m) {
    std::vector<double> C(std::size_t(m + 1) * n, 0.0);
    auto c = [&](int der, int j) -> double& { return C[std::size_t(der) * n + j]; };
    double c1 = 1.0;
    double c4 = x[0] - z;
    c(0, 0) = 1.0;
    for (int i = 1; i < n; ++i) {
        const int mn = std::min(i, m);
        double c2 = 1.0;
        const double c5 = c4;
        c4 = x[i] - z;
        for (int j = 0; j < i; ++j) {
            const double c3 = x[i] - x[j];
            c2 *= c3;
            if (j == i - 1) {
                for (int k = mn; k >= 1; --k)
                    c(k, i) = c1 * (k * c(k - 1, i - 1) - c5 * c(k, i - 1)) / c2;
                c(0, i) = -c1 * c5 * c(0, i - 1) / c2;
            }
            for (int k = mn; k >= 1; --k) c(k, j) = (c4 * c(k, j) - k * c(k - 1, j)) / c3;
            c(0, j) = c4 * c(0, j) / c3;
        }
        c1 = c2;
    }
    return {C.begin() + std::size_t(m) * n, C.begin() + std::size_t(m + 1) * n};
}

void check_grid(const std::vector<double>& times) {
    if (times.size() < 2)
        fail(errkind::SpacingTooCoarse, "layer coefficients need at least two time samples");
    const double dt = (times.back() - times.front()) / double(times.size() - 1);
    if (!(dt > 0.0)) fail(errkind::GridMismatch, "layer time grid must be ascending");
    for (std::size_t m = 1; m < times.size(); ++m)
        if (std::abs(times[m] - times[m - 1] - dt) > 1e-9 * dt)
            fail(errkind::GridMismatch, "layer time grid must be uniform");
}

/// index of the first node of the interpolation / differentiation window for
/// target t on a uniform grid
int window_lo(const std::vector<double>& times, double t, int w) {
    const int n = int(times.size());
    const double dt = (times.back() - times.front()) / double(n - 1);
    const int k = int(std::floor((t - times.front()) / dt));
    return std::clamp(k - (w - 1) / 2, 0, n - w);
}

/// d/dt of one sampled signal, per-sample Fornberg stencils on the grid
std::vector<double> differentiate(const std::vector<double>& f,
                                  const std::vector<double>& times) {
    const int n = int(times.size());
    const int w = std::min(kStencil, n);
    std::vector<double> out(n, 0.0);
    for (int mIdx = 0; mIdx < n; ++mIdx) {
        const int lo = std::clamp(mIdx - (w - 1) / 2, 0, n - w);
        const auto wt = fd_weights(times.data() + lo, w, times[mIdx], 1);
        double acc = 0.0;
        for (int k = 0; k < w; ++k) acc += wt[k] * f[lo + k];
        out[mIdx] = acc;
    }
    return out;
}

/// polynomial part sum_j a_j(t) eta^j at one time, coefficients combined with
/// the supplied nodal weights
double horner(const std::vector<std::vector<double>>& coeffs, double eta, int lo,
              const std::vector<double>& wt) {
    double val = 0.0;
    for (int j = int(coeffs.size()) - 1; j >= 0; --j) {
        double aj = 0.0;
        for (std::size_t k = 0; k < wt.size(); ++k) aj += wt[k] * coeffs[j][lo + k];
        val = val * eta + aj;
    }
    return val;
}

} // namespace

double LayerTerm::profile(double eta, double t) const {
    if (coeffs.empty()) return 0.0;
    const int w = std::min(kStencil, int(times.size()));
    const int lo = window_lo(times, t, w);
    const auto wt = fd_weights(times.data() + lo, w, t, 0);
    return horner(coeffs, eta, lo, wt) * std::exp(-rate * eta);
}

double LayerTerm::profile_dt(double eta, double t) const {
    if (coeffs.empty()) return 0.0;
    const int w = std::min(kStencil, int(times.size()));
    const int lo = window_lo(times, t, w);
    const auto wt = fd_weights(times.data() + lo, w, t, 1);
    return horner(coeffs, eta, lo, wt) * std::exp(-rate * eta);
}

LayerTerm build_layer_term(int edge, OrderIndex order, const LayerTerm* prev,
                           const std::function<double(double)>& base_datum, double v_end,
                           const std::vector<double>& times_in) {
    if (edge < 0 || edge > 2) fail(errkind::OutOfRegion, "layer edge index out of range");
    if (!(v_end > 0.0))
        fail(errkind::NonpositiveOutflowSpeed,
             "a base layer exists only where the flow leaves through the base (v(ell) > 0)");

    std::vector<double> times;
    if (prev) {
        if (!(prev->order == OrderIndex{order.p, order.m - 1}))
            fail(errkind::BadOrderIndex,
                 "previous layer term is not the preceding order of the same family");
        if (prev->edge != edge)
            fail(errkind::BadOrderIndex, "previous layer term belongs to a different branch");
        if (std::abs(prev->rate - v_end) > 1e-12 * (1.0 + std::abs(v_end)))
            fail(errkind::GridMismatch,
                 "previous layer term was built for a different outflow speed");
        if (!times_in.empty() && times_in != prev->times)
            fail(errkind::GridMismatch, "time grid differs from the previous layer term");
        times = prev->times;
    } else {
        if (!(order == OrderIndex{1, -1} || order == OrderIndex{0, 0}))
            fail(errkind::BadOrderIndex,
                 "only the leading order of each family is built without a predecessor");
        times = times_in;
    }
    check_grid(times);
    const std::size_t nt = times.size();

    LayerTerm out;
    out.edge = edge;
    out.order = order;
    out.rate = v_end;
    out.decay_margin = 0.5 * v_end;
    out.times = std::move(times);
    const int deg = prev ? prev->degree() + 1 : 0;
    out.coeffs.assign(std::size_t(deg) + 1, std::vector<double>(nt, 0.0));

    if (base_datum)
        for (std::size_t m = 0; m < nt; ++m) out.coeffs[0][m] = base_datum(out.times[m]);

    if (prev) {
        // dt of the previous polynomial, then the top-down recurrence
        // (j+1) r_{j+1} - v r_j = b_j for the coefficients r of P'
        const int D = prev->degree();
        std::vector<std::vector<double>> b(std::size_t(D) + 1);
        for (int j = 0; j <= D; ++j) b[j] = differentiate(prev->coeffs[j], out.times);
        std::vector<double> r(std::size_t(D) + 1);
        for (std::size_t m = 0; m < nt; ++m) {
            r[D] = -b[D][m] / v_end;
            for (int j = D - 1; j >= 0; --j)
                r[j] = (double(j + 1) * r[j + 1] - b[j][m]) / v_end;
            for (int j = 0; j <= D; ++j) out.coeffs[j + 1][m] = r[j] / double(j + 1);
        }
    }
    return out;
}

double eval_layer(const NetworkSpec& spec, const LayerTerm& term, double x, double t,
                  double eps, double delta) {
    if (term.edge < 0 || term.edge > 2)
        fail(errkind::OutOfRegion, "layer edge index out of range");
    const double ell = spec.ell[term.edge];
    if (!(eps > 0.0)) fail(errkind::OutOfDomain, "layer evaluation needs a positive eps");
    if (!(delta > 0.0) || 2.0 * delta >= ell)
        fail(errkind::OutOfDomain, "base cut-off width does not fit the branch");
    const Cutoff chi(ell - 2.0 * delta, ell - delta);
    const double c = chi(x);
    if (c == 0.0) return 0.0;
    return c * term.profile((ell - x) / eps, t);
}

} // namespace thinflow
