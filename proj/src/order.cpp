#include "thinflow/order.hpp"
#include "thinflow/errors.hpp"

#include <algorithm>
#include <cmath>

namespace thinflow {

std::string order_tag(OrderIndex idx) {
    auto [p, k] = idx.pk_label();
    std::string s = "p" + std::to_string(p) + "k";
    if (k < 0) s += "m" + std::to_string(-k);
    else s += std::to_string(k);
    return s;
}

std::string order_exponent_name(OrderIndex idx) {
    if (idx.p == 0) return std::to_string(idx.m);
    std::string s = "alpha";
    if (idx.m > 0) s += "+" + std::to_string(idx.m);
    if (idx.m < 0) s += "-" + std::to_string(-idx.m);
    return s;
}

int min_expansion_order(double alpha) {
    const int fl = static_cast<int>(std::floor(alpha));
    // smallest integer M with M > (3/2)(1 - fl)
    return static_cast<int>(std::floor(1.5 * (1 - fl))) + 1;
}

std::vector<OrderIndex> puiseux_inventory(double alpha, int M) {
    if (alpha >= 1.0 || alpha == std::floor(alpha))
        fail(errkind::BadOrderIndex, "alpha must be non-integer and < 1");
    if (M < 1) fail(errkind::BadOrderIndex, "expansion order must be >= 1");
    const int fl = static_cast<int>(std::floor(alpha));
    std::vector<OrderIndex> out;
    for (int k = 0; k <= M; ++k) out.push_back(OrderIndex{1, k - 1});
    for (int k = 1; k <= M + fl; ++k) out.push_back(OrderIndex{0, k - 1});
    std::sort(out.begin(), out.end(), OrderLess{alpha});
    return out;
}

std::vector<OrderIndex> principal_part(double alpha) {
    if (alpha >= 1.0 || alpha == std::floor(alpha))
        fail(errkind::BadOrderIndex, "alpha must be non-integer and < 1");
    const int fl = static_cast<int>(std::floor(alpha));
    std::vector<OrderIndex> out;
    for (int k = 0; k <= -fl; ++k) out.push_back(OrderIndex{1, k - 1});
    return out;
}

} // namespace thinflow
