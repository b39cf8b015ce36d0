#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "kle/geometry.hpp"
#include "kle/rng.hpp"

using namespace kle;

namespace {
SlitConfig golden() { return SlitConfig({1.0}, {-1.0}, {1.0}); }

SlitConfig random_config(CounterRng& rng, int n) {
    std::vector<double> y(n), xl(n), xr(n);
    for (int j = 0; j < n; ++j) {
        y[j] = rng.uniform(0.2, 3.0) + j; // distinct heights, always valid
        xl[j] = rng.uniform(-4.0, 2.0);
        xr[j] = xl[j] + rng.uniform(0.2, 3.0);
    }
    return SlitConfig(y, xl, xr);
}
} // namespace

TEST_CASE("construction rejects degenerate input") {
    CHECK_THROWS_AS(SlitConfig({-1.0}, {0.0}, {1.0}), ConfigError);
    CHECK_THROWS_AS(SlitConfig({1.0}, {1.0}, {1.0}), ConfigError);
    CHECK_THROWS_AS(SlitConfig({1.0}, {2.0}, {1.0}), ConfigError);
    // equal heights with overlap
    CHECK_THROWS_AS(SlitConfig({1.0, 1.0}, {0.0, 0.5}, {1.0, 1.5}), ConfigError);
    // equal heights, disjoint: fine
    CHECK_NOTHROW(SlitConfig({1.0, 1.0}, {0.0, 2.0}, {1.0, 3.0}));
}

TEST_CASE("slit_distance examples") {
    const auto s = golden();
    CHECK(slit_distance(s, s) == 0.0);
    const SlitConfig shifted({1.0}, {0.0}, {2.0});
    CHECK(slit_distance(s, shifted) == doctest::Approx(2.0));
    const SlitConfig raised({1.5}, {-1.0}, {1.0});
    CHECK(slit_distance(s, raised) == doctest::Approx(1.0));
    CHECK_THROWS_AS(slit_distance(s, SlitConfig{}), ConfigError);
}

TEST_CASE("contains") {
    const auto s = golden();
    CHECK(s.contains({0.0, 2.0}));
    CHECK_FALSE(s.contains({0.0, 1.0})); // on the slit
    CHECK_FALSE(s.contains({0.0, -1.0}));
    CHECK(s.contains({1.5, 1.0})); // same height, beyond the tip
    CHECK_FALSE(s.contains({1.0, 1.0})); // the endpoint itself is closed
}

TEST_CASE("geometric scalars") {
    const auto s = golden();
    CHECK(s.eta() == doctest::Approx(1.0));
    CHECK(s.r_out() == doctest::Approx(std::sqrt(2.0)));
    CHECK(s.l_half_gap() == doctest::Approx(0.5));

    const SlitConfig two({1.0, 3.0}, {0.0, 0.0}, {1.0, 1.0});
    CHECK(two.l_half_gap() == doctest::Approx(0.5));

    const SlitConfig wide({0.2}, {-5.0}, {5.0});
    CHECK(wide.eta() == doctest::Approx(0.2));
    CHECK(wide.r_out() == doctest::Approx(std::sqrt(25.04)));

    CHECK(SlitConfig{}.eta() == std::numeric_limits<double>::infinity());
    CHECK(SlitConfig{}.r_out() == 0.0);
}

TEST_CASE("project and reflect") {
    const auto s = golden();
    CHECK(project(SheetPoint::base({0.0, 2.0})) == Complex(0.0, 2.0));
    const SheetPoint p = SheetPoint::reflected({0.5, 0.5}, 0);
    CHECK(reflect(p, s) == Complex(0.5, 1.5));
    // the mirror fixes the slit pointwise
    const SheetPoint on_slit = SheetPoint::reflected({0.3, 1.0}, 0);
    CHECK(reflect(on_slit, s) == Complex(0.3, 1.0));
    CHECK_THROWS(reflect(SheetPoint::reflected({0.0, 0.5}, 3), s));
}

TEST_CASE("sq chart branch convention at the left endpoint") {
    const auto s = golden();
    const double eps = 1e-4;
    // the endpoint itself
    CHECK(sq_coordinate(s, 0, SlitEnd::left, SheetPoint::base(s.left_end(0))) ==
          Complex(0.0, 0.0));
    // base point on the upper edge, theta -> 0+
    const Complex up = sq_coordinate(
        s, 0, SlitEnd::left,
        SheetPoint::base(s.left_end(0) + Complex(eps, 1e-12)));
    CHECK(up.real() == doctest::Approx(std::sqrt(eps)).epsilon(1e-3));
    CHECK(std::abs(up.imag()) < 1e-6);
    // reflected point at the same projection, theta -> 0-
    const Complex refl = sq_coordinate(
        s, 0, SlitEnd::left,
        SheetPoint::reflected(s.left_end(0) + Complex(eps, -1e-12), 0));
    CHECK(refl.real() == doctest::Approx(std::sqrt(eps)).epsilon(1e-3));
    // base point on the lower edge, theta -> 2pi-
    const Complex dn = sq_coordinate(
        s, 0, SlitEnd::left,
        SheetPoint::base(s.left_end(0) + Complex(eps, -1e-12)));
    CHECK(dn.real() == doctest::Approx(-std::sqrt(eps)).epsilon(1e-3));
    // chart radius guard
    CHECK_THROWS(sq_coordinate(s, 0, SlitEnd::left, SheetPoint::base({5.0, 5.0})));
}

TEST_CASE("sq chart inverts") {
    const auto s = golden();
    CounterRng rng(11);
    for (int i = 0; i < 200; ++i) {
        const double r = rng.uniform(1e-4, std::sqrt(s.l_half_gap()) * 0.99);
        const double th = rng.uniform(-kPi, kPi);
        const Complex w = r * std::exp(Complex(0, th));
        for (SlitEnd e : {SlitEnd::left, SlitEnd::right}) {
            const SheetPoint p = sq_inverse(s, 0, e, w);
            const Complex w2 = sq_coordinate(s, 0, e, p);
            CHECK(std::abs(w2 - w) < 1e-9 * std::max(1.0, std::abs(w)));
        }
    }
}

TEST_CASE("sq chart is injective on a sampled grid") {
    const auto s = golden();
    std::vector<Complex> images;
    for (int i = 0; i < 14; ++i) {
        for (int k = 0; k < 24; ++k) {
            const double r = 0.05 + 0.4 * i / 13.0;
            const double th = -kPi + 2 * kPi * (k + 0.5) / 24.0;
            const SheetPoint p = sq_inverse(s, 0, SlitEnd::left,
                                            r * std::exp(Complex(0, th)));
            const Complex w = sq_coordinate(s, 0, SlitEnd::left, p);
            CHECK(std::abs(w) < std::sqrt(s.l_half_gap()) + 1e-12);
            for (const Complex& other : images)
                CHECK(std::abs(w - other) > 1e-8);
            images.push_back(w);
        }
    }
}

TEST_CASE("slit metric axioms on random configs") {
    CounterRng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 1 + static_cast<int>(rng.uniform(0.0, 3.0));
        const auto a = random_config(rng, n);
        const auto b = random_config(rng, n);
        const auto c = random_config(rng, n);
        CHECK(slit_distance(a, b) == doctest::Approx(slit_distance(b, a)));
        CHECK(slit_distance(a, c) <=
              slit_distance(a, b) + slit_distance(b, c) + 1e-12);
        CHECK(slit_distance(a, a) == 0.0);
        if (!(a == b)) CHECK(slit_distance(a, b) > 0.0);
    }
}

TEST_CASE("reflect is an involution on reflected points") {
    const auto s = golden();
    const Complex z(0.3, 0.4);
    // reflect twice through the same mirror line returns the projection
    const Complex once = reflect(SheetPoint::reflected(z, 0), s);
    const Complex twice = reflect(SheetPoint::reflected(once, 0), s);
    CHECK(std::abs(twice - z) < 1e-15);
}

TEST_CASE("JSON round trip is exact") {
    const SlitConfig s({0.1 + 1e-17, 2.0 / 3.0}, {-1.0 / 3.0, 5.0},
                       {0.123456789012345678, 7.0});
    const auto back = SlitConfig::from_json(s.to_json());
    CHECK(back == s);
    const auto empty = SlitConfig::from_json(SlitConfig{}.to_json());
    CHECK(empty.slit_count() == 0);
}

TEST_CASE("vector round trip") {
    const auto s = SlitConfig({1.0, 2.0}, {-1.0, 0.0}, {0.5, 4.0});
    CHECK(SlitConfig::from_vector(s.as_vector()) == s);
}
