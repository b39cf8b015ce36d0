#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "kle/drivers.hpp"

using namespace kle;

TEST_CASE("zero driver") {
    const auto p = sample(DriverSpec::zero(), uniform_grid(1.0, 10));
    CHECK(p.measure_at(0.0).total_mass() == 0.0);
    CHECK(p.measure_at(0.5).total_mass() == 0.0);
    CHECK(p.support_bound() == 0.0);
}

TEST_CASE("constant dirac driver") {
    const auto p = sample(DriverSpec::dirac_const(0.7), uniform_grid(1.0, 10));
    for (double t : {0.0, 0.31, 1.0}) {
        const auto nu = p.measure_at(t);
        REQUIRE(nu.atom_list().size() == 1);
        CHECK(nu.atom_list()[0].xi == 0.7);
        CHECK(nu.total_mass() == doctest::Approx(1.0));
    }
    CHECK(p.support_bound() == doctest::Approx(0.7));
}

TEST_CASE("dirac path interpolates linearly") {
    auto spec = DriverSpec::dirac_path({0.0, 1.0}, {0.0, 2.0});
    const auto p = sample(spec, uniform_grid(1.0, 4));
    CHECK(p.measure_at(0.5).atom_list()[0].xi == doctest::Approx(1.0));
    CHECK(p.measure_at(0.25).atom_list()[0].xi == doctest::Approx(0.5));
}

TEST_CASE("brownian with kappa = 0 degenerates to dirac") {
    const auto p = sample(DriverSpec::brownian(0.0, 42, 1.5), uniform_grid(1.0, 50));
    for (double t : {0.0, 0.42, 1.0})
        CHECK(p.measure_at(t).atom_list()[0].xi == doctest::Approx(1.5));
}

TEST_CASE("determinism: same seed gives the identical process") {
    const auto a = sample(DriverSpec::brownian(2.0, 99, 0.0), uniform_grid(1.0, 64));
    const auto b = sample(DriverSpec::brownian(2.0, 99, 0.0), uniform_grid(1.0, 64));
    REQUIRE(a.atom_paths().size() == 1);
    for (std::size_t i = 0; i < a.atom_paths()[0].size(); ++i)
        CHECK(a.atom_paths()[0][i] == b.atom_paths()[0][i]); // bit for bit
    const auto c = sample(DriverSpec::brownian(2.0, 100, 0.0), uniform_grid(1.0, 64));
    bool differs = false;
    for (std::size_t i = 0; i < a.atom_paths()[0].size(); ++i)
        if (a.atom_paths()[0][i] != c.atom_paths()[0][i]) differs = true;
    CHECK(differs);
}

TEST_CASE("multi dirac weights") {
    const auto p = sample(DriverSpec::multi_dirac({-1.0, 0.0, 2.0}, {0.5, 0.2, 0.3}),
                          uniform_grid(1.0, 8));
    const auto nu = p.measure_at(0.4);
    REQUIRE(nu.atom_list().size() == 3);
    CHECK(nu.total_mass() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK_THROWS_AS(sample(DriverSpec::multi_dirac({0.0, 1.0}, {0.6, 0.6}),
                           uniform_grid(1.0, 4)),
                    ConfigError);
}

TEST_CASE("dyson paths stay ordered and conserve mass") {
    const auto p = sample(DriverSpec::dyson(3, 7, 1.0), uniform_grid(0.5, 200));
    const auto& paths = p.atom_paths();
    REQUIRE(paths.size() == 3);
    for (std::size_t k = 0; k < paths[0].size(); ++k) {
        CHECK(paths[0][k] < paths[1][k]);
        CHECK(paths[1][k] < paths[2][k]);
    }
    for (double t : {0.0, 0.21, 0.5})
        CHECK(p.measure_at(t).total_mass() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("density driver") {
    const auto p = sample(DriverSpec::density_const({-2.0, 0.0, 2.0},
                                                    {0.25, 0.25, 0.25}),
                          uniform_grid(1.0, 4));
    CHECK(p.measure_at(0.7).total_mass() == doctest::Approx(1.0));
    CHECK(p.support_bound() == doctest::Approx(2.0));
    CHECK(support_bound(p) == doctest::Approx(2.0));
}

TEST_CASE("sampled brownian support bound is the realized maximum") {
    const auto p = sample(DriverSpec::brownian(1.0, 5, 0.0), uniform_grid(1.0, 128));
    double m = 0.0;
    for (double x : p.atom_paths()[0]) m = std::max(m, std::abs(x));
    CHECK(p.support_bound() == doctest::Approx(m));
}

TEST_CASE("driver spec JSON round trip") {
    auto spec = DriverSpec::multi_dirac({-1.0, 1.0}, {0.4, 0.6});
    const auto back = DriverSpec::from_json(spec.to_json());
    CHECK(back.kind == spec.kind);
    CHECK(back.xi0 == spec.xi0);
    CHECK(back.weights == spec.weights);
    const auto p = sample(back, uniform_grid(1.0, 8));
    std::ostringstream csv;
    p.write_csv(csv);
    CHECK(csv.str().substr(0, 9) == "t,xi0,xi1");
}

TEST_CASE("mass above one is rejected") {
    auto spec = DriverSpec::dirac_const(0.0);
    spec.total_mass = 1.5;
    CHECK_THROWS_AS(sample(spec, uniform_grid(1.0, 4)), ConfigError);
}

TEST_CASE("dyson collision underflow") {
    auto spec = DriverSpec::dyson(2, 1, 1.0);
    spec.xi0 = {0.0, 5e-10}; // below the collision guard
    CHECK_THROWS_AS(sample(spec, uniform_grid(0.1, 4)), CollisionUnderflow);
}
