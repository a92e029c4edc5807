// SPDX-License-Identifier: Apache-2.0
//
// EV longitudinal planning and actuation: three-state machine, PWM duty
// increments, PID speed loop, PWM mapping, heading hold, actuator plant.
#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string_view>

#include "coop/inference.hpp"

namespace coop {

inline constexpr double kEvMaxSpeed = 1.5;  // m/s

enum class LongitudinalState : std::uint8_t { Accelerate, Decelerate, Stop };
std::string_view to_string(LongitudinalState s);
LongitudinalState parse_longitudinal_state(std::string_view text);

struct PwmCommand {
    double duty = 0.0;  // percent
    int mapped = 0;     // 0..255

    friend bool operator==(const PwmCommand&, const PwmCommand&) = default;
};

struct PlannerConfig {
    double emergency_ttc = 0.5;   // s
    double window_behind = -8.0;  // TV x - EV x, m
    double window_ahead = 2.0;
    double accelerate_step = 4.0;  // duty percent per tick
    double decelerate_step = 8.0;

    void validate() const;
};

struct EvContext {
    double frontal_ttc = std::numeric_limits<double>::infinity();
    bool tv_in_adjacent_lane = false;
    double tv_relative_x = 0.0;  // TV x - EV x
    bool yield_latched = false;
};

LongitudinalState plan_state(const std::optional<ManeuverPosterior>& prediction, const EvContext& ctx,
                             const PlannerConfig& cfg = {});

/// Accelerate +step clamped to 100, Decelerate -step clamped to 0, Stop 0.
PwmCommand apply_state(LongitudinalState state, const PwmCommand& pwm, const PlannerConfig& cfg = {});

struct PidGains {
    double kp = 2.0;
    double ki = 2.0;
    double kd = 0.05;
    double ts = 0.1;
    /// Integral bound; by default v_max / ki.
    std::optional<double> integral_limit;

    void validate() const;
    double limit() const;
};

struct PidState {
    double integral = 0.0;  // sum of trapezoids times T_s
    double prev_error = 0.0;

    friend bool operator==(const PidState&, const PidState&) = default;
};

struct PidOutput {
    double x = 0.0;
    double error = 0.0;
};

PidOutput pid_step(const PidGains& gains, PidState& state, double v_desired, double v_actual);

/// mapped = clamp(round(x * 255 / v_max), 0, 255); duty = mapped * 100 / 255.
PwmCommand map_to_pwm(double x, double v_max = kEvMaxSpeed);
/// Duty percent to desired speed.
double duty_to_speed(double duty, double v_max = kEvMaxSpeed);

struct HeadingController {
    double reference_deg = 0.0;
    double margin_deg = 2.0;
    double increment_deg = 1.0;

    void validate() const;
};

/// nullopt inside the margin, otherwise a fixed increment toward the reference.
std::optional<double> lateral_correct(double yaw_deg, const HeadingController& ctl);

struct PlantConfig {
    double v_max = kEvMaxSpeed;
    double tau = 0.5;        // s
    double stiction = 0.02;  // m/s; below this with zero drive the wheels stop
    double wheel_radius = 0.05;
    int encoder_pulses = 600;

    void validate() const;
    double pulse_length() const;
};

/// Exact first-order lag over dt toward v_max * duty / 100.
double actuator_plant(const PwmCommand& pwm, double speed, double dt, const PlantConfig& cfg = {});

/// Speed from whole encoder pulses counted over one tick.
class Encoder {
public:
    explicit Encoder(const PlantConfig& cfg = {}) : pulse_(cfg.pulse_length()) {}
    double measure(double distance_travelled, double dt);

private:
    double pulse_;
    double travelled_ = 0.0;
    std::int64_t pulses_ = 0;
};

struct ControlTrace {
    double t = 0.0;
    LongitudinalState state = LongitudinalState::Accelerate;
    double duty = 0.0;
    int mapped = 0;
    double v_desired = 0.0;
    double v_actual = 0.0;  // encoder reading
    double error = 0.0;

    friend bool operator==(const ControlTrace&, const ControlTrace&) = default;
};

/// Planner duty -> desired speed -> PID -> PWM mapping -> plant, one tick at a time.
class EvDrive {
public:
    EvDrive(PidGains gains = {}, PlantConfig plant = {}, PlannerConfig planner = {});

    /// Advances one tick of gains.ts; returns the trace row (time is the caller's).
    ControlTrace tick(LongitudinalState state);
    /// Bypasses the state machine: tracks v_desired directly.
    ControlTrace track(double v_desired);

    double speed() const { return speed_; }
    double distance() const { return distance_; }
    const PwmCommand& planner_pwm() const { return planner_pwm_; }
    void set_speed(double v) { speed_ = v; }

private:
    ControlTrace drive(double v_desired, bool hard_zero);

    PidGains gains_;
    PlantConfig plant_;
    PlannerConfig planner_;
    PidState pid_;
    Encoder encoder_;
    PwmCommand planner_pwm_;
    double speed_ = 0.0;
    double distance_ = 0.0;
    double measured_ = 0.0;
};

}  // namespace coop
