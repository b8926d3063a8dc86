#include "thinflow/disk_corrector.hpp"

#include "thinflow/errors.hpp"
#include "thinflow/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace thinflow {
namespace {

const double kPi = 3.14159265358979323846;

// four-point Lagrange weights on the integer nodes {0,1,2,3} at u, with first
// and second derivative rows
void lagrange4(double u, double w[4], double w1[4], double w2[4]) {
    for (int i = 0; i < 4; ++i) {
        double denom = 1.0;
        for (int j = 0; j < 4; ++j)
            if (j != i) denom *= static_cast<double>(i - j);
        double p = 1.0;
        for (int j = 0; j < 4; ++j)
            if (j != i) p *= (u - j);
        double s1 = 0.0, s2 = 0.0;
        for (int k = 0; k < 4; ++k) {
            if (k == i) continue;
            double q = 1.0;
            for (int j = 0; j < 4; ++j)
                if (j != i && j != k) q *= (u - j);
            s1 += q;
            for (int l = k + 1; l < 4; ++l) {
                if (l == i) continue;
                double q2 = 1.0;
                for (int j = 0; j < 4; ++j)
                    if (j != i && j != k && j != l) q2 *= (u - j);
                s2 += q2;
            }
        }
        w[i] = p / denom;
        w1[i] = s1 / denom;
        w2[i] = 2.0 * s2 / denom;
    }
}

// interpolate one radial mode profile (uniform nodes, spacing dr) at radius r;
// deriv in {0,1,2}
double radial_interp(const double* prof, int nr, double dr, double r, int deriv) {
    int k0 = static_cast<int>(std::floor(r / dr)) - 1;
    k0 = std::clamp(k0, 0, nr - 3);
    const double u = r / dr - k0;
    double w[4], w1[4], w2[4];
    lagrange4(u, w, w1, w2);
    const double* row = deriv == 0 ? w : (deriv == 1 ? w1 : w2);
    double s = 0.0;
    for (int i = 0; i < 4; ++i) s += row[i] * prof[k0 + i];
    if (deriv == 1) s /= dr;
    if (deriv == 2) s /= dr * dr;
    return s;
}

// Simpson rule over the uniform radial nodes of f(r_k) * r_k
double simpson_r(const std::vector<double>& prof, int nr, double dr) {
    double s = 0.0;
    for (int k = 0; k <= nr; ++k) {
        const double wq = (k == 0 || k == nr) ? 1.0 : (k % 2 ? 4.0 : 2.0);
        s += wq * prof[k] * (k * dr);
    }
    return s * dr / 3.0;
}

} // namespace

double DiskSlice::eval(double r, double theta) const {
    if (nr == 0) return 0.0;
    const double dr = h / nr;
    const double c1 = std::cos(theta), s1 = std::sin(theta);
    double cm = 1.0, sm = 0.0;
    double total = 0.0;
    for (int m = 0; m < nmode; ++m) {
        const double wm = (m == 0 || m == nmode - 1) ? 1.0 : 2.0;
        const double pre = radial_interp(&re[m * (nr + 1)], nr, dr, r, 0);
        const double pim = radial_interp(&im[m * (nr + 1)], nr, dr, r, 0);
        total += wm * (pre * cm - pim * sm);
        const double cn = cm * c1 - sm * s1;
        sm = sm * c1 + cm * s1;
        cm = cn;
    }
    return total;
}

double DiskSlice::deriv_r(double r, double theta) const {
    if (nr == 0) return 0.0;
    const double dr = h / nr;
    const double c1 = std::cos(theta), s1 = std::sin(theta);
    double cm = 1.0, sm = 0.0;
    double total = 0.0;
    for (int m = 0; m < nmode; ++m) {
        const double wm = (m == 0 || m == nmode - 1) ? 1.0 : 2.0;
        const double pre = radial_interp(&re[m * (nr + 1)], nr, dr, r, 1);
        const double pim = radial_interp(&im[m * (nr + 1)], nr, dr, r, 1);
        total += wm * (pre * cm - pim * sm);
        const double cn = cm * c1 - sm * s1;
        sm = sm * c1 + cm * s1;
        cm = cn;
    }
    return total;
}

double DiskSlice::dtheta_over_r(double r, double theta) const {
    if (nr == 0) return 0.0;
    const double dr = h / nr;
    // profile-over-r: interpolate R(r)/r directly; near the axis fall back to
    // the quadratic through the first interior nodes of R/r
    auto over_r = [&](const double* prof) {
        if (r >= dr) return radial_interp(prof, nr, dr, r, 0) / r;
        const double g1 = prof[1] / dr, g2 = prof[2] / (2 * dr), g3 = prof[3] / (3 * dr);
        const double u = r / dr;  // nodes at u = 1, 2, 3
        return 0.5 * (u - 2) * (u - 3) * g1 - (u - 1) * (u - 3) * g2 +
               0.5 * (u - 1) * (u - 2) * g3;
    };
    const double c1 = std::cos(theta), s1 = std::sin(theta);
    double cm = c1, sm = s1;
    double total = 0.0;
    for (int m = 1; m < nmode; ++m) {
        const double wm = (m == nmode - 1) ? 1.0 : 2.0;
        const double pre = over_r(&re[m * (nr + 1)]);
        const double pim = over_r(&im[m * (nr + 1)]);
        total += wm * m * (-pre * sm - pim * cm);
        const double cn = cm * c1 - sm * s1;
        sm = sm * c1 + cm * s1;
        cm = cn;
    }
    return total;
}

double DiskSlice::lap(double r, double theta) const {
    if (nr == 0) return 0.0;
    const double dr = h / nr;
    const double rc = std::max(r, dr);  // polar axis guard for the 1/r factors
    const double c1 = std::cos(theta), s1 = std::sin(theta);
    double cm = 1.0, sm = 0.0;
    double total = 0.0;
    for (int m = 0; m < nmode; ++m) {
        const double wm = (m == 0 || m == nmode - 1) ? 1.0 : 2.0;
        auto modal_lap = [&](const double* prof) {
            const double d2 = radial_interp(prof, nr, dr, rc, 2);
            const double d1 = radial_interp(prof, nr, dr, rc, 1);
            const double d0 = radial_interp(prof, nr, dr, rc, 0);
            return d2 + d1 / rc - m * m * d0 / (rc * rc);
        };
        total += wm * (modal_lap(&re[m * (nr + 1)]) * cm - modal_lap(&im[m * (nr + 1)]) * sm);
        const double cn = cm * c1 - sm * s1;
        sm = sm * c1 + cm * s1;
        cm = cn;
    }
    return total;
}

double DiskSlice::mean_independent() const {
    if (nr == 0) return 0.0;
    const double dr = h / nr;
    double s = 0.0;
    if (nr % 4 == 0) {
        for (int p = 0; p < nr; p += 4) {
            const double* u = &re[p];
            s += (2.0 * dr / 45.0) * (7.0 * u[0] * (p * dr) + 32.0 * u[1] * ((p + 1) * dr) +
                                      12.0 * u[2] * ((p + 2) * dr) +
                                      32.0 * u[3] * ((p + 3) * dr) + 7.0 * u[4] * ((p + 4) * dr));
        }
    } else {
        for (int k = 0; k <= nr; ++k) {
            const double wq = (k == 0 || k == nr) ? 0.5 : 1.0;
            s += wq * re[k] * (k * dr) * dr;
        }
    }
    return s * 2.0 / (h * h);
}

DiskSlice solve_disk_slice(double h, int nr, int ntheta, const std::vector<double>& rhs,
                           const std::vector<double>& flux, double compat_tol) {
    if (nr < 8 || nr % 2 != 0 || ntheta < 8 || ntheta % 2 != 0)
        fail(errkind::SpacingTooCoarse,
             "disk slice grid needs even nr >= 8 and even ntheta >= 8");
    if (static_cast<int>(rhs.size()) != (nr + 1) * ntheta ||
        static_cast<int>(flux.size()) != ntheta)
        fail(errkind::GridMismatch, "disk slice sample arrays do not match the grid");

    const double dr = h / nr;
    const int nmode = ntheta / 2 + 1;
    DiskSlice out;
    out.nr = nr;
    out.nmode = nmode;
    out.h = h;
    out.re.assign(static_cast<std::size_t>(nmode) * (nr + 1), 0.0);
    out.im.assign(static_cast<std::size_t>(nmode) * (nr + 1), 0.0);

    // forward transforms of the samples
    std::vector<double> fre(static_cast<std::size_t>(nmode) * (nr + 1));
    std::vector<double> fim(static_cast<std::size_t>(nmode) * (nr + 1));
    std::vector<double> gre(nmode), gim(nmode);
    std::vector<double> ct(static_cast<std::size_t>(nmode) * ntheta),
        st(static_cast<std::size_t>(nmode) * ntheta);
    for (int m = 0; m < nmode; ++m)
        for (int j = 0; j < ntheta; ++j) {
            ct[m * ntheta + j] = std::cos(2.0 * kPi * m * j / ntheta);
            st[m * ntheta + j] = std::sin(2.0 * kPi * m * j / ntheta);
        }
    for (int m = 0; m < nmode; ++m) {
        for (int k = 0; k <= nr; ++k) {
            double sre = 0.0, sim = 0.0;
            const double* row = &rhs[static_cast<std::size_t>(k) * ntheta];
            for (int j = 0; j < ntheta; ++j) {
                sre += row[j] * ct[m * ntheta + j];
                sim -= row[j] * st[m * ntheta + j];
            }
            fre[m * (nr + 1) + k] = sre / ntheta;
            fim[m * (nr + 1) + k] = sim / ntheta;
        }
        double sre = 0.0, sim = 0.0;
        for (int j = 0; j < ntheta; ++j) {
            sre += flux[j] * ct[m * ntheta + j];
            sim -= flux[j] * st[m * ntheta + j];
        }
        gre[m] = sre / ntheta;
        gim[m] = sim / ntheta;
    }

    // data balance: the disk integral of the source must match the rim
    // integral of the flux (only the angular means take part)
    {
        std::vector<double> f0(fre.begin(), fre.begin() + (nr + 1));
        const double lhs = 2.0 * kPi * simpson_r(f0, nr, dr);
        const double rim = 2.0 * kPi * h * gre[0];
        double fmax = 0.0, gmax = 0.0;
        for (double v : rhs) fmax = std::max(fmax, std::abs(v));
        for (double v : flux) gmax = std::max(gmax, std::abs(v));
        const double denom = 1.0 + kPi * h * h * fmax + 2.0 * kPi * h * gmax;
        out.compat = std::abs(lhs - rim) / denom;
        if (out.compat > compat_tol)
            fail(errkind::IncompatibleData,
                 "disk slice data violate the flux balance: scaled defect " +
                     std::to_string(out.compat));
    }

    // per-mode radial two-point problems, one tridiagonal solve per part
    std::vector<double> dl(nr + 1), dg0(nr + 1), du(nr + 1);
    for (int m = 0; m < nmode; ++m) {
        dl[0] = 0.0;
        dg0[0] = 1.0;
        du[0] = 0.0;  // value pinned at the axis (gauge for m=0, exact for m>0)
        for (int k = 1; k < nr; ++k) {
            const double rk = k * dr, rm = (k - 0.5) * dr, rp = (k + 0.5) * dr;
            dl[k] = rm / (rk * dr * dr);
            du[k] = rp / (rk * dr * dr);
            dg0[k] = -(rm + rp) / (rk * dr * dr) - static_cast<double>(m) * m / (rk * rk);
        }
        {
            const double rm = h - 0.5 * dr, rp = h + 0.5 * dr;
            const double a = rm / (h * dr * dr), c = rp / (h * dr * dr);
            dl[nr] = a + c;
            du[nr] = 0.0;
            dg0[nr] = -(rm + rp) / (h * dr * dr) - static_cast<double>(m) * m / (h * h);
        }
        for (int part = 0; part < 2; ++part) {
            const double* fsrc = part == 0 ? &fre[m * (nr + 1)] : &fim[m * (nr + 1)];
            const double gval = part == 0 ? gre[m] : gim[m];
            std::vector<double> b(fsrc, fsrc + nr + 1);
            b[0] = 0.0;
            const double rp = h + 0.5 * dr;
            b[nr] -= 2.0 * dr * (rp / (h * dr * dr)) * gval;
            std::vector<double> dg = dg0;
            thomas_solve(dl, dg, du, b);
            double* dst = part == 0 ? &out.re[m * (nr + 1)] : &out.im[m * (nr + 1)];
            std::copy(b.begin(), b.end(), dst);
        }
        if (m == 0) {
            // remove the gauge: enforce zero disk mean on the axial mode
            std::vector<double> prof(out.re.begin(), out.re.begin() + (nr + 1));
            const double mean = simpson_r(prof, nr, dr) * 2.0 / (h * h);
            for (int k = 0; k <= nr; ++k) out.re[k] -= mean;
        }
    }
    return out;
}

DiskCorrector::DiskCorrector(double h, double xa, double xb, double ta, double tb,
                             SliceProblemFn problem, const DiskGridOptions& opt)
    : h_(h), xa_(xa), xb_(xb), ta_(ta), tb_(tb), nx_(opt.nx), nt_(opt.nt),
      problem_(std::move(problem)), opt_(opt) {
    if (opt.nx < 5 || opt.nt < 5)
        fail(errkind::SpacingTooCoarse, "corrector family grid needs nx, nt >= 5");
    if (opt.nr < 8 || opt.nr % 2 != 0 || opt.ntheta < 8 || opt.ntheta % 2 != 0)
        fail(errkind::SpacingTooCoarse,
             "disk slice grid needs even nr >= 8 and even ntheta >= 8");
    // the 6x6 blending window must always fit in the cache
    opt_.cache_capacity = std::max<std::size_t>(opt_.cache_capacity, 64);
    rnodes_.resize(opt.nr + 1);
    for (int k = 0; k <= opt.nr; ++k) rnodes_[k] = h_ * k / opt.nr;
    thetanodes_.resize(opt.ntheta);
    for (int j = 0; j < opt.ntheta; ++j) thetanodes_[j] = 2.0 * kPi * j / opt.ntheta;
}

DiskCorrector::Window DiskCorrector::window(double s, double a, double b, int n) const {
    const double hs = (b - a) / n;
    const double pos = (s - a) / hs;
    Window win;
    win.j0 = std::clamp(static_cast<int>(std::floor(pos)) - 2, 0, n - 5);
    lagrange6(pos - win.j0, win.w[0], win.w[1], win.w[2]);
    for (int i = 0; i < 6; ++i) {
        win.w[1][i] /= hs;
        win.w[2][i] /= hs * hs;
    }
    return win;
}

const DiskSlice& DiskCorrector::slice(int jx, int jt) const {
    const long key = static_cast<long>(jx) * (nt_ + 1) + jt;
    auto it = map_.find(key);
    if (it != map_.end()) {
        lru_.splice(lru_.begin(), lru_, it->second);
        return lru_.front().second;
    }
    std::vector<double> rhs(static_cast<std::size_t>(opt_.nr + 1) * opt_.ntheta, 0.0);
    std::vector<double> flux(opt_.ntheta, 0.0);
    problem_(xnode(jx), tnode(jt), rnodes_, thetanodes_, rhs, flux);
    DiskSlice s = solve_disk_slice(h_, opt_.nr, opt_.ntheta, rhs, flux, opt_.compat_tol);
    ++solves_;
    worst_compat_ = std::max(worst_compat_, s.compat);
    lru_.emplace_front(key, std::move(s));
    map_[key] = lru_.begin();
    if (lru_.size() > opt_.cache_capacity) {
        map_.erase(lru_.back().first);
        lru_.pop_back();
    }
    return lru_.front().second;
}

DiskSlice DiskCorrector::blended_slice(double x, double t, int dxo, int dto) const {
    if (dxo < 0 || dxo > 2 || dto < 0 || dto > 1)
        fail(errkind::BadOrderIndex, "slice blending offers d/dx, d2/dx2 and d/dt only");
    if (is_null()) return DiskSlice{};
    const Window wx = window(x, xa_, xb_, nx_), wt = window(t, ta_, tb_, nt_);
    DiskSlice out;
    out.nr = opt_.nr;
    out.nmode = opt_.ntheta / 2 + 1;
    out.h = h_;
    const std::size_t ncoef = static_cast<std::size_t>(out.nmode) * (out.nr + 1);
    out.re.assign(ncoef, 0.0);
    out.im.assign(ncoef, 0.0);
    for (int a = 0; a < 6; ++a)
        for (int b = 0; b < 6; ++b) {
            const double c = wx.w[dxo][a] * wt.w[dto][b];
            if (c == 0.0) continue;
            const DiskSlice& s = slice(wx.j0 + a, wt.j0 + b);
            for (std::size_t i = 0; i < ncoef; ++i) {
                out.re[i] += c * s.re[i];
                out.im[i] += c * s.im[i];
            }
        }
    out.compat = worst_compat_;
    return out;
}

double DiskCorrector::combine(double r, double theta, double x, double t, int dxo,
                              int dto,
                              double (DiskSlice::*fn)(double, double) const) const {
    if (is_null()) return 0.0;
    const Window wx = window(x, xa_, xb_, nx_), wt = window(t, ta_, tb_, nt_);
    double s = 0.0;
    for (int a = 0; a < 6; ++a)
        for (int b = 0; b < 6; ++b) {
            const double c = wx.w[dxo][a] * wt.w[dto][b];
            if (c == 0.0) continue;
            s += c * (slice(wx.j0 + a, wt.j0 + b).*fn)(r, theta);
        }
    return s;
}

double DiskCorrector::eval(double r, double theta, double x, double t) const {
    return combine(r, theta, x, t, 0, 0, &DiskSlice::eval);
}
double DiskCorrector::dx(double r, double theta, double x, double t) const {
    return combine(r, theta, x, t, 1, 0, &DiskSlice::eval);
}
double DiskCorrector::dxx(double r, double theta, double x, double t) const {
    return combine(r, theta, x, t, 2, 0, &DiskSlice::eval);
}
double DiskCorrector::dt(double r, double theta, double x, double t) const {
    return combine(r, theta, x, t, 0, 1, &DiskSlice::eval);
}
double DiskCorrector::deriv_r(double r, double theta, double x, double t) const {
    return combine(r, theta, x, t, 0, 0, &DiskSlice::deriv_r);
}
double DiskCorrector::dtheta_over_r(double r, double theta, double x, double t) const {
    return combine(r, theta, x, t, 0, 0, &DiskSlice::dtheta_over_r);
}
double DiskCorrector::lap_perp(double r, double theta, double x, double t) const {
    return combine(r, theta, x, t, 0, 0, &DiskSlice::lap);
}

DiskCorrector make_first_interaction_corrector(const NetworkSpec& spec,
                                               const VelocityModel& vel, int edge,
                                               const Expression& phi, const Field2& w_prev,
                                               const DiskGridOptions& opt) {
    const double h = spec.h[edge];
    SliceProblemFn fn = [vel, edge, phi, w_prev, h](
                            double x, double t, const std::vector<double>& rn,
                            const std::vector<double>& thn, std::vector<double>& rhs,
                            std::vector<double>& flux) {
        const int N = static_cast<int>(thn.size());
        const double wv = w_prev.eval(x, t);
        const bool tz = vel.transverse_zero(edge);
        // rim mean with the slice's own angular rule, so the data balance
        double phihat = 0.0;
        for (int j = 0; j < N; ++j) phihat += phi({thn[j], x, t});
        phihat *= 2.0 / (h * N);
        for (std::size_t k = 0; k < rn.size(); ++k)
            for (int j = 0; j < N; ++j) {
                double val = -phihat;
                if (!tz)
                    val += wv * vel.transverse_div(edge, x, rn[k] * std::cos(thn[j]),
                                                   rn[k] * std::sin(thn[j]));
                rhs[k * N + j] = val;
            }
        for (int j = 0; j < N; ++j) {
            const double c = std::cos(thn[j]), s = std::sin(thn[j]);
            double fx = -phi({thn[j], x, t});
            if (!tz) {
                const auto V = vel.transverse(edge, x, h * c, h * s);
                fx += wv * (V[0] * c + V[1] * s);
            }
            flux[j] = fx;
        }
    };
    return DiskCorrector(h, 0.0, spec.ell[edge], 0.0, spec.horizon, std::move(fn), opt);
}

DiskCorrector make_integer_chain_corrector(const NetworkSpec& spec,
                                           const VelocityModel& vel, int edge,
                                           const Field2& w0, const DiskGridOptions& opt) {
    if (vel.transverse_zero(edge)) return DiskCorrector{};
    const double h = spec.h[edge];
    SliceProblemFn fn = [vel, edge, w0, h](double x, double t,
                                           const std::vector<double>& rn,
                                           const std::vector<double>& thn,
                                           std::vector<double>& rhs,
                                           std::vector<double>& flux) {
        const int N = static_cast<int>(thn.size());
        const double wv = w0.eval(x, t);
        for (std::size_t k = 0; k < rn.size(); ++k)
            for (int j = 0; j < N; ++j)
                rhs[k * N + j] = wv * vel.transverse_div(edge, x, rn[k] * std::cos(thn[j]),
                                                         rn[k] * std::sin(thn[j]));
        for (int j = 0; j < N; ++j) {
            const double c = std::cos(thn[j]), s = std::sin(thn[j]);
            const auto V = vel.transverse(edge, x, h * c, h * s);
            flux[j] = wv * (V[0] * c + V[1] * s);
        }
    };
    return DiskCorrector(h, 0.0, spec.ell[edge], 0.0, spec.horizon, std::move(fn), opt);
}

DiskCorrector make_next_corrector(const NetworkSpec& spec, const VelocityModel& vel,
                                  int edge, const Field2& w_prev,
                                  std::shared_ptr<const DiskCorrector> u_prev,
                                  std::shared_ptr<const DiskCorrector> u_prev2,
                                  const DiskGridOptions& opt) {
    const bool prev_null = !u_prev || u_prev->is_null();
    const bool prev2_null = !u_prev2 || u_prev2->is_null();
    if (vel.transverse_zero(edge) && prev_null && prev2_null) return DiskCorrector{};
    const double h = spec.h[edge];
    SliceProblemFn fn = [vel, edge, w_prev, u_prev, u_prev2, h, prev_null, prev2_null](
                            double x, double t, const std::vector<double>& rn,
                            const std::vector<double>& thn, std::vector<double>& rhs,
                            std::vector<double>& flux) {
        const int N = static_cast<int>(thn.size());
        const double wv = w_prev.eval(x, t);
        const bool tz = vel.transverse_zero(edge);
        const double vax = vel.axial(edge, x), vdx = vel.axial_dx(edge, x);
        DiskSlice s0, sx, st, sxx2;
        if (!prev_null) {
            s0 = u_prev->blended_slice(x, t, 0, 0);
            sx = u_prev->blended_slice(x, t, 1, 0);
            st = u_prev->blended_slice(x, t, 0, 1);
        }
        if (!prev2_null) sxx2 = u_prev2->blended_slice(x, t, 2, 0);
        for (std::size_t k = 0; k < rn.size(); ++k)
            for (int j = 0; j < N; ++j) {
                const double r = rn[k], th = thn[j];
                double val = 0.0;
                if (s0.nr) {
                    const double u0 = s0.eval(r, th);
                    val += vdx * u0 + vax * sx.eval(r, th) + st.eval(r, th);
                    if (!tz) {
                        const double c = std::cos(th), s = std::sin(th);
                        const auto V = vel.transverse(edge, x, r * c, r * s);
                        const double ur = s0.deriv_r(r, th);
                        const double ut = s0.dtheta_over_r(r, th);
                        val += u0 * vel.transverse_div(edge, x, r * c, r * s) +
                               V[0] * (c * ur - s * ut) + V[1] * (s * ur + c * ut);
                    }
                }
                if (!tz)
                    val += wv * vel.transverse_div(edge, x, r * std::cos(th),
                                                   r * std::sin(th));
                if (sxx2.nr) val -= sxx2.eval(r, th);
                rhs[k * N + j] = val;
            }
        for (int j = 0; j < N; ++j) {
            double fx = 0.0;
            if (!tz) {
                const double c = std::cos(thn[j]), s = std::sin(thn[j]);
                const auto V = vel.transverse(edge, x, h * c, h * s);
                fx = (wv + (s0.nr ? s0.eval(h, thn[j]) : 0.0)) * (V[0] * c + V[1] * s);
            }
            flux[j] = fx;
        }
    };
    return DiskCorrector(h, 0.0, spec.ell[edge], 0.0, spec.horizon, std::move(fn), opt);
}

} // namespace thinflow
