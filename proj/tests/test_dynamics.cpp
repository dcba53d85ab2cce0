#include <cmath>
#include <random>
#include <stdexcept>

#include <doctest.h>

#include "accsim/dynamics.hpp"

using namespace accsim;

namespace {

// Analytic step response of 1/(s(0.5s+1)): the velocity under a held unit
// acceleration command from rest.
double unit_step_velocity(double t) { return t - 0.5 + 0.5 * std::exp(-2.0 * t); }

}  // namespace

TEST_CASE("discretization closed forms at Ts=0.1") {
    const DiscretePlant p = discretize_plant(0.1);
    const double e = std::exp(-0.2);
    CHECK(p.a_d[2][2] == doctest::Approx(e).epsilon(1e-12));
    CHECK(p.b_d[2] == doctest::Approx(1.0 - e).epsilon(1e-12));              // lag input
    CHECK(p.b_d[1] == doctest::Approx(0.1 - 0.5 * (1.0 - e)).epsilon(1e-12));  // velocity
    CHECK(p.b_d[1] == doctest::Approx(0.0093653765).epsilon(1e-7));
    CHECK(p.b_d[2] == doctest::Approx(0.1812692469).epsilon(1e-9));
    // position entry from the double ZOH integral
    CHECK(p.b_d[0] == doctest::Approx(0.5 * 0.01 - 0.05 + 0.25 * (1.0 - e)).epsilon(1e-12));
    CHECK(p.ts == 0.1);
}

TEST_CASE("discretize_plant rejects bad sample times") {
    CHECK_THROWS_AS(discretize_plant(0.0), std::invalid_argument);
    CHECK_THROWS_AS(discretize_plant(-0.1), std::invalid_argument);
}

TEST_CASE("zero state with zero command is an equilibrium") {
    const DiscretePlant p = discretize_plant(0.1);
    VehicleState s;
    for (int i = 0; i < 50; ++i) s = step_vehicle(s, p, 0.0);
    CHECK(s.x == 0.0);
    CHECK(s.v == 0.0);
    CHECK(s.a_lag == 0.0);
}

TEST_CASE("coasting: zero lag and zero command keep velocity, advance position") {
    const DiscretePlant p = discretize_plant(0.1);
    VehicleState s{10.0, 20.0, 0.0};
    s = step_vehicle(s, p, 0.0);
    CHECK(s.x == doctest::Approx(12.0).epsilon(1e-12));
    CHECK(s.v == doctest::Approx(20.0).epsilon(1e-12));
}

TEST_CASE("unit step response matches the analytic curve on the grid") {
    const DiscretePlant p = discretize_plant(0.1);
    VehicleState s;
    for (int i = 1; i <= 10; ++i) {
        s = step_vehicle(s, p, 1.0);
        const double t = 0.1 * i;
        CHECK(std::abs(s.v - unit_step_velocity(t)) < 1e-9);
    }
    CHECK(s.v == doctest::Approx(0.5 + 0.5 * std::exp(-2.0)).epsilon(1e-9));  // 0.56767
}

TEST_CASE("step_vehicle rejects non-finite inputs") {
    const DiscretePlant p = discretize_plant(0.1);
    VehicleState s{0.0, std::numeric_limits<double>::infinity(), 0.0};
    CHECK_THROWS_AS(step_vehicle(s, p, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(step_vehicle(VehicleState{}, p, std::nan("")), std::invalid_argument);
}

TEST_CASE("ZOH consistency: coarse and fine grids agree on held inputs") {
    const DiscretePlant coarse = discretize_plant(0.1);
    const DiscretePlant fine = discretize_plant(0.01);
    std::mt19937 rng(42);
    std::uniform_real_distribution<double> cmd(-3.0, 2.0);

    VehicleState a{0.0, 15.0, 0.0};
    VehicleState b = a;
    for (int i = 0; i < 100; ++i) {
        const double u = cmd(rng);
        a = step_vehicle(a, coarse, u);
        for (int j = 0; j < 10; ++j) b = step_vehicle(b, fine, u);
        CHECK(std::abs(a.x - b.x) < 1e-9);
        CHECK(std::abs(a.v - b.v) < 1e-9);
        CHECK(std::abs(a.a_lag - b.a_lag) < 1e-9);
    }
}

TEST_CASE("follow-the-leader model") {
    CHECK(follow_leader_accel(1.0, 0.0, 10.0) == 0.0);
    CHECK(follow_leader_accel(1.0, 5.0, 10.0) == doctest::Approx(0.5));
    CHECK_THROWS_AS(follow_leader_accel(1.0, 5.0, 0.0), std::domain_error);
    CHECK_THROWS_AS(follow_leader_accel(1.0, 5.0, 0.05), std::domain_error);

    // odd in v_rel, homogeneous of degree -1 in d_rel
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> vr(-10.0, 10.0), dr(0.5, 100.0), sc(0.2, 5.0);
    for (int i = 0; i < 200; ++i) {
        const double v = vr(rng), d = dr(rng), c = sc(rng);
        CHECK(follow_leader_accel(1.3, -v, d) ==
              doctest::Approx(-follow_leader_accel(1.3, v, d)).epsilon(1e-12));
        CHECK(follow_leader_accel(1.3, v, c * d) ==
              doctest::Approx(follow_leader_accel(1.3, v, d) / c).epsilon(1e-12));
    }
}

TEST_CASE("optimal velocity model") {
    const VelocityFunction identity{0.0, 1.0, -1e9, 1e9};
    CHECK(optimal_velocity_accel(1.0, identity, 20.0, 20.0) == doctest::Approx(-20.0));
    CHECK(optimal_velocity_accel(0.0, identity, 31.0, 7.0) == 0.0);

    const VelocityFunction fv{};  // clamp(25 + r, 0, 35)
    CHECK(optimal_velocity_accel(0.5, fv, 30.0, 25.0) == doctest::Approx(2.5));
    CHECK(fv(100.0) == 35.0);
    CHECK(fv(-100.0) == 0.0);
}

TEST_CASE("combined model reduces to its parts") {
    const VelocityFunction fv{};
    CHECK(combined_accel(0.0, 0.5, fv, 30.0, 25.0, 20.0) == doctest::Approx(2.5));
    CHECK(combined_accel(1.0, 0.0, fv, 30.0, 25.0, 20.0) == doctest::Approx(0.25));
    CHECK(combined_accel(1.0, 0.5, fv, 30.0, 25.0, 20.0) == doctest::Approx(2.75));
}

TEST_CASE("combined model can take spacing as the velocity-map argument") {
    const VelocityFunction fv{};
    // fv(d_rel) = clamp(25 + 20, 0, 35) = 35
    const double got = combined_accel(0.0, 1.0, fv, 30.0, 25.0, 20.0, OvmArgument::Spacing);
    CHECK(got == doctest::Approx(35.0 - 25.0));
}

TEST_CASE("lead profile validation") {
    CHECK_THROWS_AS(LeadProfile::checked({}, 25.0, 80.0), std::invalid_argument);
    CHECK_THROWS_AS(LeadProfile::checked({{1.0, 0.0}}, 25.0, 80.0), std::invalid_argument);
    CHECK_THROWS_AS(LeadProfile::checked({{0.0, 0.0}, {5.0, -1.0}, {5.0, 0.0}}, 25.0, 80.0),
                    std::invalid_argument);
    // braking to a standstill and beyond is rejected
    CHECK_THROWS_AS(LeadProfile::checked({{0.0, -1.0}}, 25.0, 80.0), std::invalid_argument);
    CHECK_NOTHROW(LeadProfile::checked({{0.0, -1.0}}, 25.0, 20.0));
}

TEST_CASE("lead profile lookup and piecewise integration") {
    const auto profile =
        LeadProfile::checked({{0.0, 0.0}, {15.0, -1.0}, {20.0, 0.0}}, 25.0, 80.0);
    CHECK(profile.accel_at(0.0) == 0.0);
    CHECK(profile.accel_at(15.0) == -1.0);
    CHECK(profile.accel_at(19.99) == -1.0);
    CHECK(profile.accel_at(20.0) == 0.0);
    CHECK(profile.accel_at(500.0) == 0.0);  // last segment persists
    CHECK(profile.velocity_at(20.0, 25.0) == doctest::Approx(20.0));
    CHECK(profile.velocity_at(17.0, 25.0) == doctest::Approx(23.0));
}

TEST_CASE("advance_lead with an all-zero profile conserves velocity exactly") {
    const DiscretePlant p = discretize_plant(0.1);
    const auto profile = LeadProfile::checked({{0.0, 0.0}}, 25.0, 100.0);
    VehicleState s{50.0, 25.0, 0.0};
    for (int i = 0; i < 1000; ++i) s = advance_lead(s, profile, 0.1 * i, p);
    CHECK(s.v == 25.0);
    CHECK(s.x == doctest::Approx(50.0 + 25.0 * 100.0).epsilon(1e-12));
}

TEST_CASE("advance_lead settles to the piecewise-integrated speed after the lag") {
    const DiscretePlant p = discretize_plant(0.1);
    const auto profile =
        LeadProfile::checked({{0.0, 0.0}, {15.0, -1.0}, {20.0, 0.0}}, 25.0, 80.0);
    VehicleState s{50.0, 25.0, 0.0};
    double v25 = 0.0, v40 = 0.0;
    for (int i = 0; i < 400; ++i) {
        s = advance_lead(s, profile, 0.1 * i, p);
        if (i == 249) v25 = s.v;
        if (i == 399) v40 = s.v;
    }
    CHECK(std::abs(v25 - 20.0) < 1e-3);   // actuator lag still draining
    CHECK(std::abs(v40 - 20.0) < 1e-9);   // fully settled
}
