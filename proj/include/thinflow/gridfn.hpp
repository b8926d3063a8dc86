#pragma once

#include <vector>

namespace thinflow {

/// Cubic spline interpolation on a uniform grid, not-a-knot ends by default
/// (natural ends available for callers that want a spline that is exactly
/// linear beyond the data). Evaluation outside [a,b] extrapolates the end
/// cubic; callers that must not extrapolate check ranges themselves.
class CubicSpline {
public:
    CubicSpline() = default;
    CubicSpline(double a, double b, std::vector<double> y, bool natural = false);

    double operator()(double x) const;
    double d1(double x) const;
    double d2(double x) const;
    double d3(double x) const;   // piecewise constant

    double a() const { return a_; }
    double b() const { return b_; }
    int segments() const { return static_cast<int>(y_.size()) - 1; }
    const std::vector<double>& values() const { return y_; }

private:
    int seg(double x, double& dl, double& dr) const;
    double a_ = 0.0, b_ = 1.0, h_ = 1.0;
    std::vector<double> y_, m_;   // m_: second derivatives at nodes
};

/// Six-point Lagrange weights on the integer nodes {0,...,5} evaluated at u,
/// together with first and second derivative weights. Used for high-order
/// interpolation across uniform time grids.
void lagrange6(double u, double w[6], double w1[6], double w2[6]);

/// Scalar field sampled on a uniform (x,t) tensor grid. Evaluation is cubic
/// spline in x composed with six-point Lagrange interpolation across the time
/// nodes, giving smooth high-order access to the field and its derivatives.
class Field2 {
public:
    Field2() = default;
    Field2(double xa, double xb, int nx, double ta, double tb, int nt);

    int nx() const { return nx_; }
    int nt() const { return nt_; }
    double xa() const { return xa_; }
    double xb() const { return xb_; }
    double ta() const { return ta_; }
    double tb() const { return tb_; }
    double xnode(int ix) const { return xa_ + (xb_ - xa_) * ix / nx_; }
    double tnode(int it) const { return ta_ + (tb_ - ta_) * it / nt_; }

    double& at(int ix, int it) { return val_[static_cast<std::size_t>(it) * (nx_ + 1) + ix]; }
    double at(int ix, int it) const { return val_[static_cast<std::size_t>(it) * (nx_ + 1) + ix]; }

    /// build the per-time-node x-splines; required before point evaluation
    void finalize();
    bool finalized() const { return !spl_.empty(); }

    double eval(double x, double t) const;
    double dx(double x, double t) const;
    double dxx(double x, double t) const;
    double dxxx(double x, double t) const;
    double dt(double x, double t) const;
    double dtt(double x, double t) const;

    /// values on the time grid at fixed x (spline in x per time node)
    std::vector<double> time_slice(double x) const;
    /// spatial derivative of given order (0..3) on the time grid at fixed x
    std::vector<double> time_slice_dx(double x, int deriv) const;

private:
    template <class F> double tinterp(double t, F&& node_value, int dorder) const;
    int nx_ = 0, nt_ = 0;
    double xa_ = 0, xb_ = 1, ta_ = 0, tb_ = 1;
    std::vector<double> val_;
    std::vector<CubicSpline> spl_;   // one x-spline per time node
};

} // namespace thinflow
