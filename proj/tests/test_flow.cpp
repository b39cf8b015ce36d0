#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "kle/flow.hpp"
#include "kle/maps.hpp"
#include "kle/slit_basis.hpp"

using namespace kle;

namespace {
SlitConfig golden() { return SlitConfig({1.0}, {-1.0}, {1.0}); }

DrivingProcess dirac0(double T) {
    return sample(DriverSpec::dirac_const(0.0), uniform_grid(T, 8));
}

SolveOptions tight() {
    SolveOptions o;
    o.rtol = 1e-10;
    o.atol = 1e-12;
    o.rebuild_tol = 0.0;
    return o;
}
} // namespace

TEST_CASE("slit ODE right-hand side") {
    const auto zero = slit_ode_rhs(BoundaryMeasure{}, golden());
    CHECK(zero.cwiseAbs().maxCoeff() == 0.0);

    const auto b = slit_ode_rhs(BoundaryMeasure::dirac(0.0), golden());
    REQUIRE(b.size() == 3);
    CHECK(b(0) > 0.0); // height component strictly positive

    // kernel decay: a far pole barely moves the slit
    const auto far = slit_ode_rhs(BoundaryMeasure::dirac(1e3), golden());
    // Koebe envelope: |Psi| <= (4/pi)/dist, dist ~ 1e3
    CHECK(far.cwiseAbs().maxCoeff() < kPi * (4.0 / kPi) / 1e3 * 1.5);
}

TEST_CASE("forward N=0 closed form") {
    const auto traj = solve_forward(SlitConfig{}, dirac0(0.25),
                                    {SheetPoint::base({0, 2})}, 0.25, tight());
    const Complex expect(0.0, std::sqrt(5.0));
    CHECK(std::abs(traj.final_sample(0).z - expect) < 1e-6 * std::abs(expect));
    CHECK(traj.alive(0));
    CHECK(traj.lambda(0.25) == doctest::Approx(0.5));
}

TEST_CASE("empty driver freezes everything") {
    const auto driver = sample(DriverSpec::zero(), uniform_grid(0.5, 4));
    const auto traj = solve_forward(golden(), driver,
                                    {SheetPoint::base({0.3, 2.1})}, 0.5, tight());
    CHECK(traj.final_sample(0).z == Complex(0.3, 2.1));
    CHECK(slit_distance(traj.final_config(), golden()) == 0.0);
}

TEST_CASE("reversed N=0 closed form (mapping-out of the vertical slit)") {
    const auto traj = solve_reversed(SlitConfig{}, dirac0(0.5),
                                     {SheetPoint::base({0, 2})}, 0.5, tight());
    // g_t(2i) = sqrt(-4 + 4t); at t = 1/2 this is i sqrt 2
    const Complex expect(0.0, std::sqrt(2.0));
    CHECK(std::abs(traj.final_sample(0).z - expect) < 1e-6);
}

TEST_CASE("reversed flow absorbs a point inside the growing hull") {
    SolveOptions o = tight();
    o.boundary_floor = 1e-5;
    const auto traj = solve_reversed(SlitConfig{}, dirac0(0.02),
                                     {SheetPoint::base({0, 0.1})}, 0.02, o);
    CHECK_FALSE(traj.alive(0));
    CHECK(traj.fate(0) == PointFate::boundary_hit);
    // i eps is swallowed at t ~ eps^2/4 = 0.0025
    const auto& tr = traj.track(0);
    double death = traj.horizon();
    for (std::size_t k = 0; k < tr.size(); ++k)
        if (!tr[k].alive) {
            death = traj.times()[k];
            break;
        }
    CHECK(death < 0.01);
    CHECK(death > 0.0005);
}

TEST_CASE("forward heights increase strictly under a Dirac driver") {
    const auto traj = solve_forward(golden(), dirac0(0.25), {}, 0.25, tight());
    const auto& first = traj.config(0).heights();
    const auto& last = traj.final_config().heights();
    CHECK(last[0] > first[0]);
    for (std::size_t k = 1; k < traj.steps(); ++k)
        CHECK(traj.config(k).heights()[0] >=
              traj.config(k - 1).heights()[0] - 1e-12);
}

TEST_CASE("backward equation inverts the forward flow") {
    // N = 0 closed form first
    const auto traj = solve_forward(SlitConfig{}, dirac0(0.25),
                                    {SheetPoint::base({0, 2})}, 0.25, tight());
    const auto back = solve_backward(traj, Complex(0, std::sqrt(5.0)), 0.25, tight());
    CHECK_FALSE(back.boundary_hit);
    CHECK(std::abs(back.value - Complex(0, 2)) < 1e-6);

    // a point inside the hull must hit the boundary on the way back
    const auto hit = solve_backward(traj, Complex(0.0, 0.05), 0.25, tight());
    CHECK(hit.boundary_hit);
    CHECK(hit.hit_time < 0.25);
}

TEST_CASE("round trip through a slit configuration") {
    const auto traj = solve_forward(golden(), dirac0(0.2),
                                    {SheetPoint::base({0.4, 1.8})}, 0.2, tight());
    const auto img = traj.final_sample(0).z;
    const auto back = solve_backward(traj, img, 0.2, tight());
    CHECK_FALSE(back.boundary_hit);
    CHECK(std::abs(back.value - Complex(0.4, 1.8)) < 1e-5);
}

TEST_CASE("chart vector field is real on the real chart axis") {
    const auto nu = BoundaryMeasure::dirac(0.0);
    for (double w : {0.02, -0.05, 0.1}) {
        const Complex v = chart_vector_field(golden(), nu, 24, 0, SlitEnd::left,
                                             Complex(w, 0.0), Direction::forward);
        CHECK(std::abs(v.imag()) < 1e-10);
        const Complex vr = chart_vector_field(golden(), nu, 24, 0, SlitEnd::right,
                                              Complex(w, 0.0), Direction::forward);
        CHECK(std::abs(vr.imag()) < 1e-10);
    }
}

TEST_CASE("chart field magnitude obeys the Cauchy estimate") {
    const auto nu = BoundaryMeasure::dirac(0.0);
    const auto s = golden();
    // H(0) = (1/2 pi i) oint Psi-centered / zeta^2; |H| <= max |num| / r
    const double rc = std::sqrt(0.75 * std::min(s.l_half_gap(), 1.0));
    KernelWorkspace ws(s, 24);
    const auto m = ws.build(0.0, -1.0);
    double max_num = 0.0;
    for (int k = 0; k < 128; ++k) {
        const Complex zeta = rc * std::exp(Complex(0, 2 * kPi * k / 128.0));
        const SheetPoint p = sq_inverse(s, 0, SlitEnd::left, zeta);
        max_num = std::max(max_num,
                           std::abs(eval_psi(m, p) -
                                    eval_psi(m, SheetPoint::base(s.left_end(0)))));
    }
    const Complex H0 = chart_vector_field(s, nu, 24, 0, SlitEnd::left,
                                          Complex(0, 0), Direction::forward);
    CHECK(std::abs(H0) <= kPi * max_num / rc + 1e-9);
}

TEST_CASE("endpoint stays on the real chart axis while tracked") {
    // track the left endpoint itself through a short forward run
    const auto s = golden();
    SolveOptions o = tight();
    const auto traj = solve_forward(s, dirac0(0.05),
                                    {SheetPoint::base(s.left_end(0))}, 0.05, o);
    // the tracked point must remain on a slit edge: its height matches the
    // evolving slit height to chart accuracy
    const auto& tr = traj.track(0);
    for (std::size_t k = 0; k < tr.size(); ++k) {
        const double yk = traj.config(k).heights()[0];
        CHECK(std::abs(tr[k].z.imag() - yk) < 1e-8);
    }
}

TEST_CASE("chart and plane stepping agree on the overlap band") {
    const auto s = golden();
    const Complex z0 = s.left_end(0) + Complex(0.05, 0.05);
    SolveOptions plane = tight();
    plane.guard_radius = 1e-12; // effectively disable charts
    SolveOptions chart = tight();
    chart.guard_radius = 0.12; // force chart mode for this point
    const auto a = solve_forward(s, dirac0(0.01), {SheetPoint::base(z0)}, 0.01, plane);
    const auto b = solve_forward(s, dirac0(0.01), {SheetPoint::base(z0)}, 0.01, chart);
    CHECK(std::abs(a.final_sample(0).z - b.final_sample(0).z) < 1e-6);
}

TEST_CASE("semigroup property via dual integration") {
    const auto driver = sample(DriverSpec::multi_dirac({-0.7, 0.4}, {0.5, 0.5}),
                               uniform_grid(0.2, 8));
    const std::vector<SheetPoint> pts = {SheetPoint::base({0, 2}),
                                         SheetPoint::base({1.2, 0.8})};
    const auto direct = solve_forward(golden(), driver, pts, 0.2, tight());
    const auto leg1 = solve_forward(golden(), driver, pts, 0.08, tight());
    std::vector<SheetPoint> mid;
    for (int i = 0; i < 2; ++i)
        mid.push_back({leg1.final_sample(i).z, leg1.final_sample(i).sheet});
    const auto leg2 = solve_forward_window(leg1.final_config(), driver, mid, 0.08,
                                           0.2, tight());
    for (int i = 0; i < 2; ++i)
        CHECK(std::abs(direct.final_sample(i).z - leg2.final_sample(i).z) < 1e-5);
}

TEST_CASE("evolution family report of the frozen flow has zero defects") {
    const auto driver = sample(DriverSpec::zero(), uniform_grid(0.2, 4));
    const auto traj = solve_forward(golden(), driver,
                                    {SheetPoint::base({0, 2})}, 0.2, tight());
    const auto rep = evolution_family_report(traj, 2, 1, tight());
    CHECK(rep.semigroup_defect < 1e-12);
    CHECK(rep.worst_height_backstep <= 0.0);
    CHECK(rep.worst_im_backstep <= 0.0);
    CHECK(rep.heights_monotone);
    CHECK(rep.tracked_im_monotone);
}

TEST_CASE("two-slit run with a Dyson driver completes with invariants") {
    const SlitConfig two({1.0, 1.5}, {-1.0, 0.3}, {1.0, 2.3});
    const auto driver = sample(DriverSpec::dyson(3, 11, 0.8), uniform_grid(0.1, 32));
    SolveOptions o;
    o.rtol = 1e-8;
    o.rebuild_tol = 0.0;
    const auto traj = solve_forward(two, driver, {SheetPoint::base({0, 2.5})}, 0.1, o);
    CHECK(traj.alive(0));
    const auto rep = evolution_family_report(traj, 2, 3, o);
    CHECK(rep.heights_monotone);
    CHECK(rep.tracked_im_monotone);
    CHECK(rep.semigroup_defect < 1e-5);
    CHECK(rep.lipschitz_margin <= 1.0 + 1e-9);
}

TEST_CASE("brownian-driven run completes with invariants") {
    const auto driver = sample(DriverSpec::brownian(1.0, 23, 0.3),
                               uniform_grid(0.15, 64));
    SolveOptions o;
    o.rtol = 1e-7;
    const auto traj = solve_forward(golden(), driver,
                                    {SheetPoint::base({0, 2}),
                                     SheetPoint::base({-1.5, 0.6})},
                                    0.15, o);
    CHECK(traj.alive(0));
    CHECK(traj.alive(1));
    const auto rep = evolution_family_report(traj, 0, 1, o);
    CHECK(rep.heights_monotone);
    CHECK(rep.tracked_im_monotone);
    CHECK(rep.lipschitz_margin <= 1.0 + 1e-9);
}

TEST_CASE("reversed slit flow absorbs at the floor") {
    const SlitConfig low({0.3}, {-0.5}, {0.5});
    SolveOptions o = tight();
    o.y_floor = 1e-3;
    const auto traj = solve_reversed(low, dirac0(1.0), {}, 1.0, o);
    REQUIRE(traj.absorption().has_value());
    CHECK(traj.absorption()->slit == 0);
    CHECK(traj.final_config().heights()[0] <= 0.3);
    CHECK(traj.final_config().heights()[0] == doctest::Approx(1e-3).epsilon(2.0));
    // heights never increase along the way
    for (std::size_t k = 1; k < traj.steps(); ++k)
        CHECK(traj.config(k).heights()[0] <=
              traj.config(k - 1).heights()[0] + 1e-12);
}

TEST_CASE("trace point of the reversed N=0 flow finds the tip") {
    const auto traj = solve_reversed(SlitConfig{}, dirac0(0.25), {}, 0.25, tight());
    const auto tip = trace_point(traj, 0.25, {0.08, 0.04, 0.02}, tight());
    CHECK(std::abs(tip.tip - Complex(0, 1)) < 1e-4); // 2 i sqrt(t) at t = 1/4
    const auto start = trace_point(traj, 0.0, {0.08, 0.04, 0.02}, tight());
    CHECK(std::abs(start.tip - Complex(0, 0)) < 1e-3);
}

TEST_CASE("trace path is continuous for a slit configuration") {
    SolveOptions o;
    o.rtol = 1e-8;
    o.rebuild_tol = 0.0;
    const auto traj = solve_reversed(golden(), dirac0(0.1), {}, 0.1, o);
    Complex prev;
    bool first = true;
    for (double t : {0.02, 0.04, 0.06, 0.08, 0.1}) {
        const auto tip = trace_point(traj, t, {0.08, 0.04, 0.02}, o);
        if (!first) CHECK(std::abs(tip.tip - prev) < 0.2);
        prev = tip.tip;
        first = false;
    }
}

TEST_CASE("inverse residue of a flow-generated map") {
    // angular_residue(phi_{T,0}) = 2T and the backward inverse carries -2T
    SolveOptions o;
    o.rtol = 1e-9;
    o.rebuild_tol = 0.0;
    const double T = 0.1;
    const auto traj = solve_forward(golden(), dirac0(T), {}, T, o);
    const MapEvaluator inverse = [&](Complex w) {
        return solve_backward(traj, w, T, o).value;
    };
    const auto r = angular_residue(inverse, kPi / 4, {100.0, 200.0, 400.0});
    CHECK(std::abs(r.value + 2.0 * T) < 1e-3);
}

TEST_CASE("reversed-then-forward round trip is the identity") {
    // run the mapping-out flow, then grow back with the time-reversed driver
    // (constant here), starting from the reversed final configuration
    const auto rev = solve_reversed(golden(), dirac0(0.1),
                                    {SheetPoint::base({0.3, 2.0})}, 0.1, tight());
    REQUIRE(rev.alive(0));
    const auto fwd = solve_forward(rev.final_config(), dirac0(0.1),
                                   {SheetPoint::base(rev.final_sample(0).z)}, 0.1,
                                   tight());
    CHECK(std::abs(fwd.final_sample(0).z - Complex(0.3, 2.0)) < 1e-5);
    CHECK(slit_distance(fwd.final_config(), golden()) < 1e-5);
}

TEST_CASE("short-horizon maps recover a measure near the driving point") {
    // recover_measure(phi_{t+d, t-d}) should be supported near xi(t)
    SolveOptions o;
    o.rtol = 1e-7;
    const double t = 0.1, d = 0.02, xi_t = 0.0;
    const auto base = solve_forward(golden(), dirac0(0.2), {}, t - d, o);
    const auto s_mid = base.final_config();
    const auto driver = dirac0(0.2);
    const MapEvaluator phi = [&](Complex z) {
        const auto leg = solve_forward_window(s_mid, driver,
                                              {SheetPoint::base(z)}, t - d, t + d, o);
        return leg.final_sample(0).z;
    };
    std::vector<double> grid;
    for (int i = 0; i <= 24; ++i) grid.push_back(-3.0 + 6.0 * i / 24.0);
    const auto rec = recover_measure(phi, s_mid, grid);
    const double total = rec.measure.total_mass();
    REQUIRE(total > 0.0);
    const double inside = rec.measure.stieltjes_mass(xi_t - 0.75, xi_t + 0.75);
    CHECK(inside / total > 0.9);
}

TEST_CASE("three-slit forward run stays well behaved") {
    const SlitConfig three({0.6, 1.2, 2.0}, {-2.0, 0.5, -1.0}, {-0.5, 2.0, 0.8});
    const auto driver = sample(DriverSpec::multi_dirac({-1.0, 1.2}, {0.5, 0.5}),
                               uniform_grid(0.08, 8));
    SolveOptions o;
    o.rtol = 1e-7;
    o.rebuild_tol = 0.0;
    const auto traj = solve_forward(three, driver, {SheetPoint::base({0, 3})},
                                    0.08, o);
    CHECK(traj.alive(0));
    const auto rep = evolution_family_report(traj, 1, 5, o);
    CHECK(rep.heights_monotone);
    CHECK(rep.semigroup_defect < 1e-5);
}

TEST_CASE("trajectory serialization") {
    const auto traj = solve_forward(SlitConfig{}, dirac0(0.05),
                                    {SheetPoint::base({0, 2})}, 0.05, tight());
    std::ostringstream csv;
    traj.write_csv(csv);
    CHECK(csv.str().substr(0, 28) == "t,point,re,im,sheet,alive\n0,");
    const auto js = traj.to_json();
    CHECK(js.find("\"direction\":\"forward\"") != std::string::npos);
    CHECK(js.find("\"lambda\":\"2t\"") != std::string::npos);
}

TEST_CASE("min step underflow carries a diagnostic") {
    SolveOptions o = tight();
    o.dt_min = 0.05; // absurdly large floor forces underflow
    o.dt_init = 0.05;
    CHECK_THROWS_AS(solve_forward(SlitConfig{}, dirac0(0.25),
                                  {SheetPoint::base({0.0, 1e-4})}, 0.25, o),
                    MinStepUnderflow);
}
