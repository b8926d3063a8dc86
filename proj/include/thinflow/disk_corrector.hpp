#pragma once

#include "thinflow/expr.hpp"
#include "thinflow/geometry.hpp"
#include "thinflow/gridfn.hpp"
#include "thinflow/velocity.hpp"

#include <functional>
#include <list>
#include <memory>
#include <unordered_map>
#include <vector>

namespace thinflow {

/// Modal solution of one transverse slice problem on the disk of radius h:
///   Laplace u = f  on the disk,   du/dr = g  on the rim,   zero disk mean.
/// Angular modes m = 0..ntheta/2 are stored at the radial nodes; between nodes
/// the mode profiles are interpolated by local four-point Lagrange windows.
struct DiskSlice {
    int nr = 0, nmode = 0;
    double h = 0.0;
    std::vector<double> re, im;  // [m * (nr + 1) + k]
    double compat = 0.0;         // scaled compatibility defect of the data

    double eval(double r, double theta) const;
    double deriv_r(double r, double theta) const;
    /// angular derivative divided by r (finite at the origin)
    double dtheta_over_r(double r, double theta) const;
    /// transverse Laplacian reconstructed from the mode profiles
    double lap(double r, double theta) const;
    /// disk mean re-measured with an independent quadrature (composite Boole
    /// when nr is divisible by four, trapezoid otherwise)
    double mean_independent() const;
};

/// Solve one slice problem from physical samples: `rhs` on the polar grid,
/// row-major [(nr+1) x ntheta] with the radial index outermost, and `flux` on
/// the rim [ntheta]. The data must balance: the disk integral of rhs has to
/// match the rim integral of flux; a scaled defect above `compat_tol` throws
/// IncompatibleData. The returned slice has zero disk mean.
DiskSlice solve_disk_slice(double h, int nr, int ntheta, const std::vector<double>& rhs,
                           const std::vector<double>& flux, double compat_tol);

/// Assembles the polar samples of one slice problem at axial/time (x, t).
using SliceProblemFn = std::function<void(
    double x, double t, const std::vector<double>& rnodes,
    const std::vector<double>& thetanodes, std::vector<double>& rhs,
    std::vector<double>& flux)>;

struct DiskGridOptions {
    int nr = 64;      // radial segments (even)
    int ntheta = 32;  // angular nodes (even)
    int nx = 120;     // axial segments of the slice family grid
    int nt = 120;     // time segments of the slice family grid
    double compat_tol = 1e-9;
    std::size_t cache_capacity = 2048;
};

/// A transverse corrector family u(r, theta; x, t). Slice problems are solved
/// lazily at the (x, t) tensor-grid nodes and kept in an LRU cache; point
/// evaluation blends the 6x6 window of neighbouring slices with Lagrange
/// weights in x and t, so the field and its axial/time derivatives are smooth.
/// A default-constructed corrector is the null family (identically zero).
class DiskCorrector {
public:
    DiskCorrector() = default;
    DiskCorrector(double h, double xa, double xb, double ta, double tb,
                  SliceProblemFn problem, const DiskGridOptions& opt);

    bool is_null() const { return !problem_; }
    double h() const { return h_; }
    int nx() const { return nx_; }
    int nt() const { return nt_; }
    double xnode(int j) const { return xa_ + (xb_ - xa_) * j / nx_; }
    double tnode(int n) const { return ta_ + (tb_ - ta_) * n / nt_; }

    double eval(double r, double theta, double x, double t) const;
    double dx(double r, double theta, double x, double t) const;
    double dxx(double r, double theta, double x, double t) const;
    double dt(double r, double theta, double x, double t) const;
    double deriv_r(double r, double theta, double x, double t) const;
    double dtheta_over_r(double r, double theta, double x, double t) const;
    double lap_perp(double r, double theta, double x, double t) const;

    /// modal coefficients blended at (x, t); dxo/dto in {0,1,2}/{0,1} select
    /// axial and time derivatives of the family
    DiskSlice blended_slice(double x, double t, int dxo, int dto) const;

    /// worst scaled compatibility defect among the slices solved so far
    double worst_compat() const { return worst_compat_; }
    std::size_t slices_solved() const { return solves_; }

private:
    struct Window {
        int j0;
        double w[3][6];  // value, first, second derivative weights
    };
    Window window(double s, double a, double b, int n) const;
    const DiskSlice& slice(int jx, int jt) const;
    double combine(double r, double theta, double x, double t, int dxo, int dto,
                   double (DiskSlice::*fn)(double, double) const) const;

    double h_ = 0.0;
    double xa_ = 0.0, xb_ = 1.0, ta_ = 0.0, tb_ = 1.0;
    int nx_ = 0, nt_ = 0;
    SliceProblemFn problem_;
    DiskGridOptions opt_;
    std::vector<double> rnodes_, thetanodes_;

    mutable std::list<std::pair<long, DiskSlice>> lru_;
    mutable std::unordered_map<long, std::list<std::pair<long, DiskSlice>>::iterator> map_;
    mutable std::size_t solves_ = 0;
    mutable double worst_compat_ = 0.0;
};

/// First interaction corrector (the order at which the wall density enters):
///   Laplace u = -phihat + w_prev * div Vbar,
///   du/dr    = -phi + w_prev * (Vbar . nu)  on the rim,
/// where w_prev is the branch field one order below and phi(theta, x, t) the
/// wall density of this branch. The rim mean phihat is formed from phi with
/// the slice's own angular rule, so the slice data balance identically.
DiskCorrector make_first_interaction_corrector(const NetworkSpec& spec,
                                               const VelocityModel& vel, int edge,
                                               const Expression& phi, const Field2& w_prev,
                                               const DiskGridOptions& opt);

/// First corrector of the integer chain:
///   Laplace u = div(Vbar w0) = w0 div Vbar,   du/dr = w0 (Vbar . nu).
/// Null when the branch has no transverse velocity.
DiskCorrector make_integer_chain_corrector(const NetworkSpec& spec,
                                           const VelocityModel& vel, int edge,
                                           const Field2& w0, const DiskGridOptions& opt);

/// Generic next order:
///   Laplace u = (v u_prev)' + dt u_prev + div(Vbar [w_prev + u_prev])
///               - d^2/dx^2 u_prev2,
///   du/dr    = (w_prev + u_prev) (Vbar . nu)  on the rim.
/// u_prev2 may be null. Null result when every ingredient vanishes.
DiskCorrector make_next_corrector(const NetworkSpec& spec, const VelocityModel& vel,
                                  int edge, const Field2& w_prev,
                                  std::shared_ptr<const DiskCorrector> u_prev,
                                  std::shared_ptr<const DiskCorrector> u_prev2,
                                  const DiskGridOptions& opt);

} // namespace thinflow
