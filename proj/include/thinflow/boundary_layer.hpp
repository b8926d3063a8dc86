#pragma once

#include "thinflow/geometry.hpp"
#include "thinflow/order.hpp"

#include <functional>
#include <vector>

namespace thinflow {

/// Boundary-layer corrector at a branch base. In the stretched variable
/// eta = (ell_i - x_i) / eps the term is
///
///   Pi(eta, t) = (sum_j a_j(t) eta^j) * exp(-rate * eta),
///
/// where rate = v_i(ell_i) is the outflow speed at the base; the layer exists
/// only where the flow leaves the branch through its base disk. Coefficient
/// signals are sampled on a shared uniform time grid and interpolated with
/// high-order local stencils, so polynomial data round-trips exactly.
struct LayerTerm {
    int edge = 0;            // branch carrying the layer
    OrderIndex order;
    double rate = 0.0;       // v_i(ell_i), positive
    double decay_margin = 0.0;  // rate / 2: |Pi(eta,.)| <= C exp(-margin*eta)
    std::vector<double> times;  // uniform ascending grid
    std::vector<std::vector<double>> coeffs;  // coeffs[j][m] = a_j(times[m])

    int degree() const { return static_cast<int>(coeffs.size()) - 1; }

    /// Pi(eta, t); t may fall between grid samples.
    double profile(double eta, double t) const;
    /// time derivative of the profile, by the same differentiation the
    /// recurrence uses, for residual checks and assembled time derivatives
    double profile_dt(double eta, double t) const;
};

/// Build one layer term. The profile solves Pi'' + v Pi' = dt Pi_prev with
/// Pi(0, t) equal to the base datum (the Dirichlet mismatch the layer must
/// repair), which reduces to the polynomial recurrence P'' - v P' = dt P_prev,
/// P(0) = datum; the degree grows by exactly one per order. The leading order
/// of each family ((1,-1) fractional, (0,0) integer in the published labels)
/// is built without a predecessor and is a pure exponential.
///
/// base_datum may be null (treated as zero). For chained orders the time grid
/// is inherited from prev; pass `times` empty or identical. Throws
/// NonpositiveOutflowSpeed when v_end <= 0, BadOrderIndex on a broken chain,
/// GridMismatch on grid or speed disagreement with prev, SpacingTooCoarse
/// when the grid cannot carry a derivative.
LayerTerm build_layer_term(int edge, OrderIndex order, const LayerTerm* prev,
                           const std::function<double(double)>& base_datum, double v_end,
                           const std::vector<double>& times);

/// chi_delta(x) * Pi((ell_i - x)/eps, t): the layer localized to its base by
/// an ascending cutoff that vanishes for x <= ell_i - 2*delta and is one
/// within delta of the base, so the term equals the base datum at x = ell_i
/// and never reaches the junction region.
double eval_layer(const NetworkSpec& spec, const LayerTerm& term, double x, double t,
                  double eps, double delta);

} // namespace thinflow
