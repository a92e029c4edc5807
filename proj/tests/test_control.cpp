// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "coop/control.hpp"
#include "coop/errors.hpp"
#include "coop/random.hpp"

using namespace coop;

namespace {

ManeuverPosterior left_posterior()
{
    return {{0.2, 0.7, 0.1}};
}

}  // namespace

TEST_CASE("planner states")
{
    EvContext ctx;
    ctx.tv_in_adjacent_lane = true;
    ctx.tv_relative_x = -3.0;
    CHECK(plan_state(left_posterior(), ctx) == LongitudinalState::Decelerate);
    CHECK(plan_state(std::nullopt, ctx) == LongitudinalState::Accelerate);
    CHECK(plan_state(ManeuverPosterior{{0.6, 0.3, 0.1}}, ctx) == LongitudinalState::Accelerate);
    ctx.tv_relative_x = -9.0;
    CHECK(plan_state(left_posterior(), ctx) == LongitudinalState::Accelerate);
    ctx.tv_relative_x = 2.0;
    CHECK(plan_state(left_posterior(), ctx) == LongitudinalState::Decelerate);
    ctx.tv_in_adjacent_lane = false;
    CHECK(plan_state(left_posterior(), ctx) == LongitudinalState::Accelerate);
    ctx.yield_latched = true;
    CHECK(plan_state(std::nullopt, ctx) == LongitudinalState::Decelerate);
    ctx.frontal_ttc = 0.4;
    CHECK(plan_state(std::nullopt, ctx) == LongitudinalState::Stop);
}

TEST_CASE("duty increments")
{
    PwmCommand p;
    p = apply_state(LongitudinalState::Accelerate, p);
    CHECK(p.duty == 4.0);
    CHECK(p.mapped == 10);
    for (int i = 0; i < 40; ++i) p = apply_state(LongitudinalState::Accelerate, p);
    CHECK(p.duty == 100.0);
    CHECK(p.mapped == 255);
    p = apply_state(LongitudinalState::Decelerate, p);
    CHECK(p.duty == 92.0);
    p = apply_state(LongitudinalState::Stop, p);
    CHECK(p.duty == 0.0);
    CHECK(p.mapped == 0);
    CHECK(parse_longitudinal_state("Stop") == LongitudinalState::Stop);
    CHECK_THROWS_AS(parse_longitudinal_state("Reverse"), InputError);
}

TEST_CASE("duty and mapped stay in range under random state sequences")
{
    Rng rng(42);
    std::size_t violations = 0, stop_violations = 0;
    for (int seq = 0; seq < 100000; ++seq) {
        PwmCommand p{draw_uniform(rng, -50, 150), 0};
        const int len = 1 + static_cast<int>(rng() % 30);
        for (int k = 0; k < len; ++k) {
            const auto s = static_cast<LongitudinalState>(rng() % 3);
            p = apply_state(s, p);
            if (p.duty < 0 || p.duty > 100 || p.mapped < 0 || p.mapped > 255) ++violations;
            if (s == LongitudinalState::Stop && (p.duty != 0.0 || p.mapped != 0)) ++stop_violations;
        }
    }
    CHECK(violations == 0);
    CHECK(stop_violations == 0);
}

TEST_CASE("stop forces zero duty on the same drive tick")
{
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        EvDrive drive;
        const int warm = static_cast<int>(rng() % 40);
        for (int k = 0; k < warm; ++k) drive.tick(static_cast<LongitudinalState>(rng() % 2));
        const auto row = drive.tick(LongitudinalState::Stop);
        CHECK(row.duty == 0.0);
        CHECK(row.mapped == 0);
        CHECK(row.state == LongitudinalState::Stop);
    }
}

TEST_CASE("pid step by hand")
{
    PidGains g;
    PidState s;
    auto out = pid_step(g, s, 1.0, 0.0);
    // integral = 0.5 * (1 + 0) * 0.1
    CHECK(s.integral == doctest::Approx(0.05));
    CHECK(out.x == doctest::Approx(2.0 * 1.0 + 2.0 * 0.05 + 0.05 * 1.0 / 0.1));
    CHECK(out.error == 1.0);
    out = pid_step(g, s, 1.0, 0.5);
    CHECK(s.integral == doctest::Approx(0.05 + 0.5 * 1.5 * 0.1));
    CHECK(out.x == doctest::Approx(2.0 * 0.5 + 2.0 * 0.125 + 0.05 * (-0.5) / 0.1));
    CHECK(s.prev_error == 0.5);
}

TEST_CASE("integral is clamped")
{
    PidGains g;
    PidState s;
    for (int i = 0; i < 1000; ++i) pid_step(g, s, 1.5, 0.0);
    CHECK(s.integral == doctest::Approx(kEvMaxSpeed / g.ki));
    g.integral_limit = 0.1;
    for (int i = 0; i < 10; ++i) pid_step(g, s, -1.5, 0.0);
    CHECK(s.integral == doctest::Approx(-0.1));
}

TEST_CASE("proportional-only pid is memoryless")
{
    PidGains g;
    g.ki = 0.0;
    g.kd = 0.0;
    Rng rng(2);
    PidState s;
    for (int i = 0; i < 1000; ++i) {
        const double vd = draw_uniform(rng, 0, 1.5), va = draw_uniform(rng, 0, 1.5);
        const PidState before = s;
        const auto out = pid_step(g, s, vd, va);
        CHECK(s.integral == before.integral);
        CHECK(s.prev_error == vd - va);
        CHECK(out.x == doctest::Approx(g.kp * (vd - va)));
    }
}

TEST_CASE("pwm mapping")
{
    CHECK(map_to_pwm(0.0).mapped == 0);
    CHECK(map_to_pwm(1.5).mapped == 255);
    CHECK(map_to_pwm(9.0).mapped == 255);
    CHECK(map_to_pwm(-3.0).mapped == 0);
    CHECK(map_to_pwm(NAN).mapped == 0);
    CHECK(map_to_pwm(0.75).mapped == 128);
    CHECK(map_to_pwm(0.75).duty == doctest::Approx(128 * 100.0 / 255));
    CHECK(duty_to_speed(50.0) == doctest::Approx(0.75));
    CHECK(duty_to_speed(130.0) == doctest::Approx(1.5));
}

TEST_CASE("plant is an exact first-order lag")
{
    PlantConfig cfg;
    double v = 0.0;
    const PwmCommand full{100.0, 255};
    for (int k = 1; k <= 30; ++k) {
        v = actuator_plant(full, v, 0.1, cfg);
        CHECK(v == doctest::Approx(1.5 * (1 - std::exp(-0.1 * k / 0.5))).epsilon(1e-12));
    }
    // stiction stops a coasting cart
    CHECK(actuator_plant({0.0, 0}, 0.015, 0.1, cfg) == 0.0);
    CHECK_THROWS_AS(actuator_plant(full, 0.0, 0.0, cfg), DomainError);
}

TEST_CASE("encoder counts whole pulses")
{
    PlantConfig cfg;
    Encoder enc(cfg);
    const double p = cfg.pulse_length();
    CHECK(enc.measure(2.5 * p, 0.1) == doctest::Approx(2 * p / 0.1));
    CHECK(enc.measure(3.1 * p, 0.1) == doctest::Approx(1 * p / 0.1));
    CHECK(enc.measure(3.2 * p, 0.1) == 0.0);
}

TEST_CASE("step response settles within five seconds")
{
    EvDrive drive;
    double settled_at = -1.0;
    for (int k = 1; k <= 200; ++k) {
        drive.track(1.2);
        const double err = std::abs(1.2 - drive.speed());
        if (err < 0.02 * 1.2) {
            if (settled_at < 0) settled_at = 0.1 * k;
        } else {
            settled_at = -1.0;
        }
    }
    REQUIRE(settled_at > 0.0);
    CHECK(settled_at <= 5.0);
}

TEST_CASE("drive to rest stops the cart")
{
    EvDrive drive;
    for (int k = 0; k < 30; ++k) drive.tick(LongitudinalState::Accelerate);
    CHECK(drive.speed() > 1.0);
    for (int k = 0; k < 50; ++k) drive.tick(LongitudinalState::Stop);
    CHECK(drive.speed() == 0.0);
}

TEST_CASE("heading hold")
{
    HeadingController ctl;
    CHECK_FALSE(lateral_correct(1.9, ctl));
    CHECK(*lateral_correct(2.5, ctl) == -1.0);
    CHECK(*lateral_correct(-2.5, ctl) == 1.0);
    Rng rng(13);
    for (int i = 0; i < 10000; ++i) CHECK_FALSE(lateral_correct(draw_uniform(rng, -1.5, 1.5), ctl));
    int issued = 0;
    for (int i = 0; i < 10000; ++i) {
        const double yaw = draw_uniform(rng, -3.0, 3.0);
        const auto cmd = lateral_correct(yaw, ctl);
        if (cmd) {
            ++issued;
            CHECK(*cmd * yaw < 0.0);
        }
    }
    CHECK(issued > 0);
}

TEST_CASE("config validation")
{
    PidGains g;
    g.ts = 0;
    CHECK_THROWS_AS(g.validate(), ConfigError);
    PlannerConfig pc;
    pc.window_behind = 5;
    CHECK_THROWS_AS(pc.validate(), ConfigError);
    HeadingController h;
    h.margin_deg = 0;
    CHECK_THROWS_AS(h.validate(), ConfigError);
    PlantConfig pl;
    pl.tau = 0;
    CHECK_THROWS_AS(EvDrive({}, pl), ConfigError);
}
