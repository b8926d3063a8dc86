#include "thinflow/gridfn.hpp"
#include "thinflow/errors.hpp"
#include "thinflow/linalg.hpp"

#include <algorithm>
#include <cmath>

namespace thinflow {

CubicSpline::CubicSpline(double a, double b, std::vector<double> y, bool natural)
    : a_(a), b_(b), y_(std::move(y)) {
    const int n = static_cast<int>(y_.size()) - 1;  // segments
    if (n < 1) fail(errkind::GridMismatch, "spline needs at least two nodes");
    h_ = (b_ - a_) / n;
    m_.assign(n + 1, 0.0);
    if (n == 1) return;  // linear

    // r_j = 6 * second difference / h^2
    auto r = [&](int j) { return 6.0 * (y_[j - 1] - 2.0 * y_[j] + y_[j + 1]) / (h_ * h_); };

    if (n == 2) {
        // three points: single quadratic, constant curvature
        m_[0] = m_[1] = m_[2] = r(1) / 6.0;
        return;
    }
    if (natural) {
        // m_0 = m_n = 0, tridiagonal in 1..n-1
        std::vector<double> dl(n - 1, 1.0), dg(n - 1, 4.0), du(n - 1, 1.0), rhs(n - 1);
        for (int j = 1; j < n; ++j) rhs[j - 1] = r(j);
        thomas_solve(dl, dg, du, rhs);
        for (int j = 1; j < n; ++j) m_[j] = rhs[j - 1];
        return;
    }
    // not-a-knot on a uniform grid: S''' continuous at x_1 and x_{n-1} gives
    //   m_0 - 2 m_1 + m_2 = 0  and  m_{n-2} - 2 m_{n-1} + m_n = 0,
    // which substituted into the first/last standard rows yields m_1 = r_1/6
    // and m_{n-1} = r_{n-1}/6 directly; the remaining interior rows stay
    // tridiagonal with those values as Dirichlet data.
    m_[1] = r(1) / 6.0;
    m_[n - 1] = r(n - 1) / 6.0;
    if (n > 3) {
        const int k = n - 3;  // unknowns m_2 .. m_{n-2}
        std::vector<double> dl(k, 1.0), dg(k, 4.0), du(k, 1.0), rhs(k);
        for (int j = 2; j <= n - 2; ++j) rhs[j - 2] = r(j);
        rhs[0] -= m_[1];
        rhs[k - 1] -= m_[n - 1];
        thomas_solve(dl, dg, du, rhs);
        for (int j = 2; j <= n - 2; ++j) m_[j] = rhs[j - 2];
    }
    m_[0] = 2.0 * m_[1] - m_[2];
    m_[n] = 2.0 * m_[n - 1] - m_[n - 2];
}

int CubicSpline::seg(double x, double& dl, double& dr) const {
    const int n = segments();
    int j = static_cast<int>(std::floor((x - a_) / h_));
    j = std::clamp(j, 0, n - 1);
    dl = x - (a_ + j * h_);   // distance from left node
    dr = (a_ + (j + 1) * h_) - x;
    return j;
}

double CubicSpline::operator()(double x) const {
    double dl, dr;
    const int j = seg(x, dl, dr);
    return (m_[j] * dr * dr * dr + m_[j + 1] * dl * dl * dl) / (6.0 * h_) +
           (y_[j] - m_[j] * h_ * h_ / 6.0) * dr / h_ +
           (y_[j + 1] - m_[j + 1] * h_ * h_ / 6.0) * dl / h_;
}

double CubicSpline::d1(double x) const {
    double dl, dr;
    const int j = seg(x, dl, dr);
    return (-m_[j] * dr * dr + m_[j + 1] * dl * dl) / (2.0 * h_) +
           (y_[j + 1] - y_[j]) / h_ - (m_[j + 1] - m_[j]) * h_ / 6.0;
}

double CubicSpline::d2(double x) const {
    double dl, dr;
    const int j = seg(x, dl, dr);
    return (m_[j] * dr + m_[j + 1] * dl) / h_;
}

double CubicSpline::d3(double x) const {
    double dl, dr;
    const int j = seg(x, dl, dr);
    return (m_[j + 1] - m_[j]) / h_;
}

void lagrange6(double u, double w[6], double w1[6], double w2[6]) {
    for (int k = 0; k < 6; ++k) {
        double den = 1.0;
        for (int m = 0; m < 6; ++m)
            if (m != k) den *= (k - m);
        // P(u) = prod_{m!=k}(u-m); first and second derivatives by product-rule sums
        double p = 1.0;
        for (int m = 0; m < 6; ++m)
            if (m != k) p *= (u - m);
        double p1 = 0.0;
        for (int r = 0; r < 6; ++r) {
            if (r == k) continue;
            double term = 1.0;
            for (int m = 0; m < 6; ++m)
                if (m != k && m != r) term *= (u - m);
            p1 += term;
        }
        double p2 = 0.0;
        for (int r = 0; r < 6; ++r) {
            if (r == k) continue;
            for (int s = r + 1; s < 6; ++s) {
                if (s == k) continue;
                double term = 2.0;
                for (int m = 0; m < 6; ++m)
                    if (m != k && m != r && m != s) term *= (u - m);
                p2 += term;
            }
        }
        w[k] = p / den;
        w1[k] = p1 / den;
        w2[k] = p2 / den;
    }
}

Field2::Field2(double xa, double xb, int nx, double ta, double tb, int nt)
    : nx_(nx), nt_(nt), xa_(xa), xb_(xb), ta_(ta), tb_(tb),
      val_(static_cast<std::size_t>(nx + 1) * (nt + 1), 0.0) {
    if (nx < 1 || nt < 5) fail(errkind::GridMismatch, "field grid too small (need nt >= 5)");
}

void Field2::finalize() {
    spl_.clear();
    spl_.reserve(nt_ + 1);
    for (int it = 0; it <= nt_; ++it) {
        std::vector<double> row(nx_ + 1);
        for (int ix = 0; ix <= nx_; ++ix) row[ix] = at(ix, it);
        spl_.emplace_back(xa_, xb_, std::move(row));
    }
}

template <class F>
double Field2::tinterp(double t, F&& node_value, int dorder) const {
    const double ht = (tb_ - ta_) / nt_;
    int js = static_cast<int>(std::floor((t - ta_) / ht)) - 2;
    js = std::clamp(js, 0, nt_ - 5);
    const double u = (t - (ta_ + js * ht)) / ht;
    double w[6], w1[6], w2[6];
    lagrange6(u, w, w1, w2);
    const double* sel = (dorder == 0) ? w : (dorder == 1 ? w1 : w2);
    double acc = 0.0;
    for (int k = 0; k < 6; ++k) acc += sel[k] * node_value(js + k);
    if (dorder == 1) acc /= ht;
    if (dorder == 2) acc /= ht * ht;
    return acc;
}

double Field2::eval(double x, double t) const {
    return tinterp(t, [&](int it) { return spl_[it](x); }, 0);
}
double Field2::dx(double x, double t) const {
    return tinterp(t, [&](int it) { return spl_[it].d1(x); }, 0);
}
double Field2::dxx(double x, double t) const {
    return tinterp(t, [&](int it) { return spl_[it].d2(x); }, 0);
}
double Field2::dxxx(double x, double t) const {
    return tinterp(t, [&](int it) { return spl_[it].d3(x); }, 0);
}
double Field2::dt(double x, double t) const {
    return tinterp(t, [&](int it) { return spl_[it](x); }, 1);
}
double Field2::dtt(double x, double t) const {
    return tinterp(t, [&](int it) { return spl_[it](x); }, 2);
}

std::vector<double> Field2::time_slice(double x) const { return time_slice_dx(x, 0); }

std::vector<double> Field2::time_slice_dx(double x, int deriv) const {
    std::vector<double> out(nt_ + 1);
    for (int it = 0; it <= nt_; ++it) {
        switch (deriv) {
            case 0: out[it] = spl_[it](x); break;
            case 1: out[it] = spl_[it].d1(x); break;
            case 2: out[it] = spl_[it].d2(x); break;
            default: out[it] = spl_[it].d3(x); break;
        }
    }
    return out;
}

} // namespace thinflow
