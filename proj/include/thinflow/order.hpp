#pragma once

#include <string>
#include <utility>
#include <vector>

namespace thinflow {

/// Index of one term of the two-family Puiseux scale. A term grows like
/// eps^(p*alpha + m) with p in {0,1} and integer m >= -1; the p = 1 family
/// carries the fractional exponents. Published labels use the (p,k) convention
/// with k = m + 1, i.e. exponent p*alpha + k - 1.
struct OrderIndex {
    int p = 0;
    int m = 0;

    double exponent(double alpha) const { return p * alpha + m; }
    std::pair<int, int> pk_label() const { return {p, m + 1}; }
    static OrderIndex from_pk(int p, int k) { return OrderIndex{p, k - 1}; }

    bool operator==(const OrderIndex&) const = default;
};

/// strict ordering by exponent (families interleave for alpha in (0,1))
struct OrderLess {
    double alpha;
    bool operator()(const OrderIndex& a, const OrderIndex& b) const {
        return a.exponent(alpha) < b.exponent(alpha);
    }
};

/// "(p,k)" label used in filenames and reports, e.g. "p1k0" for the leading
/// fractional term (exponent alpha - 1)
std::string order_tag(OrderIndex idx);
/// human-readable exponent, e.g. "alpha-1", "alpha+2", "0", "1"
std::string order_exponent_name(OrderIndex idx);

/// smallest admissible truncation order: M > (3/2)(1 - floor(alpha))
int min_expansion_order(double alpha);

/// All term indices of the order-M scale, sorted by exponent:
/// fractional family p=1, k = 0..M (exponents alpha-1 .. alpha+M-1) and
/// integer family p=0, k = 1..M+floor(alpha) (exponents 0 .. M+floor(alpha)-1).
/// Valid for any M >= 1 regardless of the build constraint, so bookkeeping
/// tests can enumerate small scales too.
std::vector<OrderIndex> puiseux_inventory(double alpha, int M);

/// the first -floor(alpha)+1 fractional terms (the blow-up part of the scale)
std::vector<OrderIndex> principal_part(double alpha);

} // namespace thinflow
