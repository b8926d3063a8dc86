#include "thinflow/expr.hpp"
#include "thinflow/errors.hpp"
#include "thinflow/rng.hpp"

#include <doctest.h>
#include <cmath>

using thinflow::Expression;
using thinflow::Error;

namespace {
// five-point central difference, h tuned for ~1e-10 accuracy on smooth data
double fd5(const Expression& e, std::vector<double> v, int slot, double h = 1e-3) {
    auto f = [&](double d) {
        std::vector<double> w = v;
        w[slot] += d;
        return e(w.data(), w.size());
    };
    return (-f(2 * h) + 8 * f(h) - 8 * f(-h) + f(-2 * h)) / (12 * h);
}
} // namespace

TEST_CASE("expression parsing and evaluation") {
    auto e = Expression::parse("2*x + t^2", {"x", "t"});
    CHECK(e({3.0, 2.0}) == doctest::Approx(10.0).epsilon(1e-15));

    auto prec = Expression::parse("1 + 2*3^2", {});
    CHECK(prec({}) == doctest::Approx(19.0));

    auto um = Expression::parse("-x^2", {"x"});
    CHECK(um({3.0}) == doctest::Approx(-9.0));

    auto c = Expression::parse("cos(pi)", {});
    CHECK(c({}) == doctest::Approx(-1.0).epsilon(1e-15));

    auto q = Expression::parse("(x - 1)/(x + 1)", {"x"});
    CHECK(q({3.0}) == doctest::Approx(0.5));
}

TEST_CASE("expression parse errors carry the ExprParse kind") {
    for (const char* bad : {"x +", "foo(x)", "x ^ t", "y", "sin(x, x)", "2..5", "(x"}) {
        try {
            Expression::parse(bad, {"x"});
            FAIL_CHECK("expected parse failure for: " << bad);
        } catch (const Error& err) {
            CHECK(err.kind() == std::string("ExprParse"));
        }
    }
}

TEST_CASE("symbolic derivatives match high-order finite differences") {
    const std::vector<std::string> vars{"x", "t"};
    const char* cases[] = {
        "x^3*sin(t)",
        "exp(x*t) + cos(2*x)",
        "(x + t)/(2 + x^2)",
        "ramp(t)*sin(x)",
        "smoothstep(x)",
        "bump(x, 0.2, 1.3)*t^2",
    };
    thinflow::Rng rng(42);
    for (const char* src : cases) {
        auto e = Expression::parse(src, vars);
        auto ex = e.derivative("x");
        auto et = e.derivative("t");
        for (int k = 0; k < 20; ++k) {
            std::vector<double> v{rng.uniform(0.25, 1.1), rng.uniform(0.25, 1.1)};
            const double scale = 1.0 + std::abs(e(v.data(), 2));
            CHECK(ex(v.data(), 2) == doctest::Approx(fd5(e, v, 0)).epsilon(1e-6).scale(scale));
            CHECK(et(v.data(), 2) == doctest::Approx(fd5(e, v, 1)).epsilon(1e-6).scale(scale));
        }
    }
}

TEST_CASE("ramp is exactly flat at zero to all orders") {
    auto e = Expression::parse("ramp(t)", {"t"});
    CHECK(e({0.5}) == doctest::Approx(std::exp(-2.0)).epsilon(1e-15));
    CHECK(e({-1.0}) == 0.0);
    CHECK(e({0.0}) == 0.0);

    // first derivative closed form: exp(-1/u)/u^2
    auto d1 = e.derivative("t");
    CHECK(d1({0.5}) == doctest::Approx(4.0 * std::exp(-2.0)).epsilon(1e-14));

    // four symbolic time derivatives all vanish identically at and below t = 0,
    // and stay zero for tiny positive t (underflow plateau)
    Expression d = Expression::parse("ramp(t)*sin(1 + t)", {"t"});
    for (int k = 0; k < 4; ++k) {
        d = d.derivative("t");
        CHECK(d({0.0}) == 0.0);
        CHECK(d({-0.3}) == 0.0);
        CHECK(d({1e-4}) == 0.0);
    }
}

TEST_CASE("smoothstep has exact plateaus and unit symmetry") {
    auto s = Expression::parse("smoothstep(y)", {"y"});
    auto s1 = s.derivative("y");
    CHECK(s({-0.2}) == 0.0);
    CHECK(s({0.0}) == 0.0);
    CHECK(s({1.0}) == 1.0);
    CHECK(s({1.7}) == 1.0);
    CHECK(s1({-0.2}) == 0.0);
    CHECK(s1({1.3}) == 0.0);
    CHECK(s({0.5}) == doctest::Approx(0.5).epsilon(1e-15));
    for (double y : {0.1, 0.23, 0.4, 0.77}) {
        CHECK(s({y}) + s({1.0 - y}) == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(s({y}) > 0.0);
        CHECK(s({y}) < 1.0);
        CHECK(s1({y}) > 0.0);
    }
}

TEST_CASE("bump vanishes outside its interval and peaks at one") {
    auto b = Expression::parse("bump(x, 0.25, 0.75)", {"x"});
    CHECK(b({0.2}) == 0.0);
    CHECK(b({0.25}) == 0.0);
    CHECK(b({0.8}) == 0.0);
    CHECK(b({0.5}) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(b({0.4}) > 0.0);
    CHECK(b({0.4}) < 1.0);
}

TEST_CASE("structural zero detection after folding") {
    CHECK(Expression::parse("0", {"x"}).is_zero());
    CHECK(Expression::parse("0*x + 0", {"x"}).is_zero());
    CHECK_FALSE(Expression::parse("1e-30*x", {"x"}).is_zero());
    double v = 0.0;
    CHECK(Expression::parse("2 + 3*4", {}).is_constant(&v));
    CHECK(v == doctest::Approx(14.0));
}
