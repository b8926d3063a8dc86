#pragma once

#include <cmath>

namespace thinflow {

/// C-infinity ascending cutoff: identically 0 for y <= lo, identically 1 for
/// y >= hi, strictly increasing in between. Built from the flat exponential
/// pair r(s) = exp(-1/s):  chi(s) = r(s) / (r(s) + r(1-s)),  s = (y-lo)/(hi-lo).
///
/// The plateaus are *exact* in double precision (exp underflows), which the
/// zone assembly relies on: outside the transition band the cutoff contributes
/// no rounding noise and its derivatives vanish identically.
class Cutoff {
public:
    Cutoff() = default;
    Cutoff(double lo, double hi) : lo_(lo), hi_(hi), inv_(1.0 / (hi - lo)) {}

    double lo() const { return lo_; }
    double hi() const { return hi_; }

    double operator()(double y) const {
        const double s = (y - lo_) * inv_;
        if (s <= smin) return 0.0;
        if (s >= 1.0 - smin) return 1.0;
        const double a = std::exp(-1.0 / s);
        const double b = std::exp(-1.0 / (1.0 - s));
        return a / (a + b);
    }

    double d1(double y) const {
        const double s = (y - lo_) * inv_;
        if (s <= smin || s >= 1.0 - smin) return 0.0;
        const double u = 1.0 - s;
        const double a = std::exp(-1.0 / s), b = std::exp(-1.0 / u);
        const double den = a + b;
        // chi' = a b (s^-2 + u^-2) / (a+b)^2
        return inv_ * a * b * (1.0 / (s * s) + 1.0 / (u * u)) / (den * den);
    }

    double d2(double y) const {
        const double s = (y - lo_) * inv_;
        if (s <= smin || s >= 1.0 - smin) return 0.0;
        const double u = 1.0 - s;
        const double a = std::exp(-1.0 / s), b = std::exp(-1.0 / u);
        const double ap = a / (s * s);            // da/ds
        const double bp = -b / (u * u);           // db/ds
        const double app = a * (1.0 - 2.0 * s) / (s * s * s * s);
        const double bpp = b * (1.0 - 2.0 * u) / (u * u * u * u);
        const double den = a + b;
        const double w = ap * b - a * bp;
        const double wp = app * b - a * bpp;
        return inv_ * inv_ * (wp * den - 2.0 * w * (ap + bp)) / (den * den * den);
    }

private:
    // exp(-1/s) underflows to exactly 0 well before s = 1e-3; clamping there keeps
    // the s^-4 factors in d2 finite without changing any representable value.
    static constexpr double smin = 1e-3;
    double lo_ = 0.0, hi_ = 1.0, inv_ = 1.0;
};

} // namespace thinflow
