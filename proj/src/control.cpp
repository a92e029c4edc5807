// SPDX-License-Identifier: Apache-2.0
#include "coop/control.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "coop/errors.hpp"

namespace coop {

std::string_view to_string(LongitudinalState s)
{
    switch (s) {
    case LongitudinalState::Accelerate: return "Accelerate";
    case LongitudinalState::Decelerate: return "Decelerate";
    case LongitudinalState::Stop: return "Stop";
    }
    return "?";
}

LongitudinalState parse_longitudinal_state(std::string_view text)
{
    if (text == "Accelerate") return LongitudinalState::Accelerate;
    if (text == "Decelerate") return LongitudinalState::Decelerate;
    if (text == "Stop") return LongitudinalState::Stop;
    throw InputError("unknown longitudinal state: " + std::string(text));
}

void PlannerConfig::validate() const
{
    if (!(emergency_ttc > 0.0)) throw ConfigError("emergency TTC must be > 0");
    if (!(window_behind <= window_ahead)) throw ConfigError("interaction window is empty");
    if (!(accelerate_step > 0.0 && decelerate_step > 0.0)) throw ConfigError("PWM steps must be > 0");
}

LongitudinalState plan_state(const std::optional<ManeuverPosterior>& prediction, const EvContext& ctx,
                             const PlannerConfig& cfg)
{
    if (ctx.frontal_ttc < cfg.emergency_ttc) return LongitudinalState::Stop;
    if (ctx.yield_latched) return LongitudinalState::Decelerate;
    const bool in_window =
        ctx.tv_in_adjacent_lane && ctx.tv_relative_x >= cfg.window_behind && ctx.tv_relative_x <= cfg.window_ahead;
    if (prediction && in_window && prediction->argmax() == Maneuver::leftLaneChange)
        return LongitudinalState::Decelerate;
    return LongitudinalState::Accelerate;
}

PwmCommand apply_state(LongitudinalState state, const PwmCommand& pwm, const PlannerConfig& cfg)
{
    double duty = std::clamp(pwm.duty, 0.0, 100.0);
    switch (state) {
    case LongitudinalState::Accelerate: duty = std::min(100.0, duty + cfg.accelerate_step); break;
    case LongitudinalState::Decelerate: duty = std::max(0.0, duty - cfg.decelerate_step); break;
    case LongitudinalState::Stop: duty = 0.0; break;
    }
    return {duty, static_cast<int>(std::lround(duty / 100.0 * 255.0))};
}

void PidGains::validate() const
{
    if (!(ts > 0.0)) throw ConfigError("PID sample time must be > 0");
    if (!(kp >= 0.0 && ki >= 0.0 && kd >= 0.0)) throw ConfigError("PID gains must be >= 0");
    if (integral_limit && !(*integral_limit > 0.0)) throw ConfigError("integral limit must be > 0");
}

double PidGains::limit() const
{
    if (integral_limit) return *integral_limit;
    return ki > 0.0 ? kEvMaxSpeed / ki : std::numeric_limits<double>::infinity();
}

PidOutput pid_step(const PidGains& gains, PidState& state, double v_desired, double v_actual)
{
    if (!(gains.ts > 0.0)) throw DomainError("PID sample time must be > 0");
    const double e = v_desired - v_actual;
    const double lim = gains.limit();
    if (gains.ki > 0.0)
        state.integral = std::clamp(state.integral + 0.5 * (e + state.prev_error) * gains.ts, -lim, lim);
    const double x = gains.kp * e + gains.ki * state.integral + gains.kd * (e - state.prev_error) / gains.ts;
    state.prev_error = e;
    return {x, e};
}

PwmCommand map_to_pwm(double x, double v_max)
{
    if (!(v_max > 0.0)) throw DomainError("v_max must be > 0");
    const double raw = std::isnan(x) ? 0.0 : x * 255.0 / v_max;
    const int mapped = static_cast<int>(std::clamp(std::round(raw), 0.0, 255.0));
    return {mapped * 100.0 / 255.0, mapped};
}

double duty_to_speed(double duty, double v_max)
{
    return v_max * std::clamp(duty, 0.0, 100.0) / 100.0;
}

void HeadingController::validate() const
{
    if (!(margin_deg > 0.0)) throw ConfigError("heading margin must be > 0");
    if (!(increment_deg > 0.0)) throw ConfigError("steering increment must be > 0");
}

std::optional<double> lateral_correct(double yaw_deg, const HeadingController& ctl)
{
    const double err = yaw_deg - ctl.reference_deg;
    if (std::abs(err) <= ctl.margin_deg) return std::nullopt;
    return err > 0.0 ? -ctl.increment_deg : ctl.increment_deg;
}

void PlantConfig::validate() const
{
    if (!(v_max > 0.0 && tau > 0.0)) throw ConfigError("plant needs v_max > 0 and tau > 0");
    if (!(stiction >= 0.0)) throw ConfigError("stiction must be >= 0");
    if (!(wheel_radius > 0.0) || encoder_pulses < 1) throw ConfigError("encoder geometry must be positive");
}

double PlantConfig::pulse_length() const
{
    return 2.0 * 3.14159265358979323846 * wheel_radius / encoder_pulses;
}

double actuator_plant(const PwmCommand& pwm, double speed, double dt, const PlantConfig& cfg)
{
    if (!(dt > 0.0)) throw DomainError("plant step needs dt > 0");
    const double v_ss = cfg.v_max * std::clamp(pwm.duty, 0.0, 100.0) / 100.0;
    const double v = v_ss + (speed - v_ss) * std::exp(-dt / cfg.tau);
    if (v_ss < cfg.stiction && v < cfg.stiction) return 0.0;
    return v;
}

double Encoder::measure(double distance_travelled, double dt)
{
    travelled_ = distance_travelled;
    const auto pulses = static_cast<std::int64_t>(std::floor(travelled_ / pulse_));
    const double v = (pulses - pulses_) * pulse_ / dt;
    pulses_ = pulses;
    return v;
}

EvDrive::EvDrive(PidGains gains, PlantConfig plant, PlannerConfig planner)
    : gains_(gains), plant_(plant), planner_(planner), encoder_(plant)
{
    gains_.validate();
    plant_.validate();
    planner_.validate();
}

ControlTrace EvDrive::tick(LongitudinalState state)
{
    planner_pwm_ = apply_state(state, planner_pwm_, planner_);
    const double v_d = duty_to_speed(planner_pwm_.duty, plant_.v_max);
    ControlTrace row = drive(v_d, state == LongitudinalState::Stop || v_d == 0.0);
    row.state = state;
    row.duty = planner_pwm_.duty;
    return row;
}

ControlTrace EvDrive::track(double v_desired)
{
    ControlTrace row = drive(v_desired, v_desired == 0.0);
    row.duty = std::clamp(v_desired / plant_.v_max * 100.0, 0.0, 100.0);
    return row;
}

ControlTrace EvDrive::drive(double v_desired, bool hard_zero)
{
    ControlTrace row;
    row.v_desired = v_desired;
    PwmCommand out;
    if (hard_zero) {
        pid_ = PidState{};
        row.error = v_desired - measured_;
    } else {
        const auto r = pid_step(gains_, pid_, v_desired, measured_);
        out = map_to_pwm(r.x, plant_.v_max);
        row.error = r.error;
    }
    const double next = actuator_plant(out, speed_, gains_.ts, plant_);
    distance_ += 0.5 * (speed_ + next) * gains_.ts;
    speed_ = next;
    measured_ = encoder_.measure(distance_, gains_.ts);
    row.mapped = out.mapped;
    row.v_actual = measured_;
    return row;
}

}  // namespace coop
