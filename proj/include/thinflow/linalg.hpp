#pragma once

#include "thinflow/errors.hpp"

#include <cmath>
#include <cstddef>
#include <vector>

namespace thinflow {

/// Tridiagonal solve (Thomas algorithm), in place: dl/dg/du are the sub-, main
/// and super-diagonals; rhs becomes the solution. Diagonal dominance is the
/// caller's business; a vanishing pivot throws.
inline void thomas_solve(std::vector<double>& dl, std::vector<double>& dg,
                         std::vector<double>& du, std::vector<double>& rhs) {
    const std::size_t n = dg.size();
    for (std::size_t i = 1; i < n; ++i) {
        if (dg[i - 1] == 0.0) fail(errkind::LinearSolveFailure, "tridiagonal pivot vanished");
        const double w = dl[i] / dg[i - 1];
        dg[i] -= w * du[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    if (dg[n - 1] == 0.0) fail(errkind::LinearSolveFailure, "tridiagonal pivot vanished");
    rhs[n - 1] /= dg[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) rhs[i] = (rhs[i] - du[i] * rhs[i + 1]) / dg[i];
}

/// Deterministic summation: accumulate fixed-size chunks, then sum the chunk
/// totals. The grouping is independent of traversal threading, so reductions
/// give bit-identical results for any worker count.
inline double chunked_sum(const double* x, std::size_t n) {
    constexpr std::size_t chunk = 8192;
    double total = 0.0;
    for (std::size_t base = 0; base < n; base += chunk) {
        const std::size_t end = std::min(n, base + chunk);
        double acc = 0.0;
        for (std::size_t i = base; i < end; ++i) acc += x[i];
        total += acc;
    }
    return total;
}

inline double dot(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

struct KrylovResult {
    int iterations = 0;
    double residual = 0.0;   // relative to ||b||
    bool converged = false;
};

/// Preconditioned BiCGStab with diagonal (Jacobi) preconditioning.
/// A is a callable A(const double* in, double* out); inv_diag may be null.
template <class MatVec>
KrylovResult bicgstab(std::size_t n, MatVec&& A, const double* b, double* x,
                      const double* inv_diag, double rtol, int maxit) {
    std::vector<double> r(n), r0(n), p(n, 0.0), v(n, 0.0), s(n), t(n), y(n), z(n);
    std::vector<double> ax(n);
    A(x, ax.data());
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - ax[i];
    r0 = r;
    const double bnorm = std::sqrt(dot(b, b, n));
    const double target = (bnorm > 0.0 ? bnorm : 1.0) * rtol;

    double rho = 1.0, alpha = 1.0, omega = 1.0;
    KrylovResult res;
    double rnorm = std::sqrt(dot(r.data(), r.data(), n));
    if (rnorm <= target) return {0, bnorm > 0 ? rnorm / bnorm : 0.0, true};

    for (int it = 1; it <= maxit; ++it) {
        const double rho1 = dot(r0.data(), r.data(), n);
        if (std::abs(rho1) < 1e-300) break;  // breakdown: return best so far
        if (it == 1) {
            p = r;
        } else {
            const double beta = (rho1 / rho) * (alpha / omega);
            for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        rho = rho1;
        if (inv_diag)
            for (std::size_t i = 0; i < n; ++i) y[i] = p[i] * inv_diag[i];
        else
            y = p;
        A(y.data(), v.data());
        const double r0v = dot(r0.data(), v.data(), n);
        if (std::abs(r0v) < 1e-300) break;
        alpha = rho / r0v;
        for (std::size_t i = 0; i < n; ++i) s[i] = r[i] - alpha * v[i];
        double snorm = std::sqrt(dot(s.data(), s.data(), n));
        if (snorm <= target) {
            for (std::size_t i = 0; i < n; ++i) x[i] += alpha * y[i];
            return {it, bnorm > 0 ? snorm / bnorm : 0.0, true};
        }
        if (inv_diag)
            for (std::size_t i = 0; i < n; ++i) z[i] = s[i] * inv_diag[i];
        else
            z = s;
        A(z.data(), t.data());
        const double tt = dot(t.data(), t.data(), n);
        if (tt < 1e-300) break;
        omega = dot(t.data(), s.data(), n) / tt;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        rnorm = std::sqrt(dot(r.data(), r.data(), n));
        res.iterations = it;
        if (rnorm <= target)
            return {it, bnorm > 0 ? rnorm / bnorm : 0.0, true};
        if (std::abs(omega) < 1e-300) break;
    }
    res.residual = bnorm > 0 ? rnorm / bnorm : rnorm;
    res.converged = false;
    return res;
}

/// Conjugate gradient with an optional projection applied after every update,
/// used to pin the mean of solutions of singular (pure Neumann) systems.
template <class MatVec, class Project>
KrylovResult conjugate_gradient(std::size_t n, MatVec&& A, const double* b, double* x,
                                double rtol, int maxit, Project&& project) {
    std::vector<double> r(n), p(n), ap(n), ax(n);
    project(x);
    A(x, ax.data());
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - ax[i];
    project(r.data());
    const double bnorm = std::sqrt(dot(b, b, n));
    const double target = (bnorm > 0.0 ? bnorm : 1.0) * rtol;
    double rr = dot(r.data(), r.data(), n);
    if (std::sqrt(rr) <= target) return {0, bnorm > 0 ? std::sqrt(rr) / bnorm : 0.0, true};
    p = r;
    for (int it = 1; it <= maxit; ++it) {
        A(p.data(), ap.data());
        const double pap = dot(p.data(), ap.data(), n);
        if (!(pap > 0.0)) fail(errkind::LinearSolveFailure, "CG: operator not positive on subspace");
        const double alpha = rr / pap;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        project(x);
        project(r.data());
        const double rr1 = dot(r.data(), r.data(), n);
        if (std::sqrt(rr1) <= target)
            return {it, bnorm > 0 ? std::sqrt(rr1) / bnorm : 0.0, true};
        const double beta = rr1 / rr;
        rr = rr1;
        for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
    }
    return {maxit, bnorm > 0 ? std::sqrt(rr) / bnorm : std::sqrt(rr), false};
}

} // namespace thinflow
