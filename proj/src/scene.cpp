// SPDX-License-Identifier: Apache-2.0
#include "coop/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "coop/errors.hpp"

namespace coop {

std::string_view to_string(Role role)
{
    switch (role) {
    case Role::EV: return "EV";
    case Role::TV: return "TV";
    case Role::PV: return "PV";
    }
    return "?";
}

std::string_view to_string(PipelineVariant variant)
{
    return variant == PipelineVariant::P1 ? "P1" : "P2";
}

std::string_view to_string(Topology topology)
{
    return topology == Topology::direct ? "direct" : "relay";
}

PipelineVariant parse_pipeline_variant(std::string_view text)
{
    if (text == "P1") return PipelineVariant::P1;
    if (text == "P2") return PipelineVariant::P2;
    throw ConfigError("unknown pipeline variant: " + std::string(text));
}

Topology parse_topology(std::string_view text)
{
    if (text == "direct") return Topology::direct;
    if (text == "relay") return Topology::relay;
    throw ConfigError("unknown topology: " + std::string(text));
}

VehicleDims role_dimensions(Role role)
{
    switch (role) {
    case Role::PV: return {4.5, 1.8};
    case Role::TV: return {3.0, 1.5};
    case Role::EV: return {1.2, 0.7};
    }
    return {0.0, 0.0};
}

void LaneGeometry::validate() const
{
    if (lane_count < 1) throw ConfigError("lane_count must be >= 1");
    if (!(lane_width > 0.0)) throw ConfigError("lane_width must be > 0");
    if (!(track_length > 0.0)) throw ConfigError("track_length must be > 0");
}

int LaneGeometry::lane_of(double y) const
{
    const auto lane = static_cast<int>(std::lround(y / lane_width));
    return std::clamp(lane, 0, lane_count - 1);
}

VehicleState make_vehicle(int id, Role role, double x, int lane, double speed,
                          const LaneGeometry& lanes)
{
    if (lane < 0 || lane >= lanes.lane_count) throw ConfigError("vehicle lane outside the road");
    if (speed < 0.0) throw ConfigError("initial speed must be >= 0");
    const auto dims = role_dimensions(role);
    VehicleState v;
    v.id = id;
    v.role = role;
    v.x = x;
    v.y = lanes.lane_center(lane);
    v.lane_id = lane;
    v.speed = speed;
    v.length = dims.length;
    v.width = dims.width;
    return v;
}

VehicleState step_kinematics(const VehicleState& state, double commanded_accel, double dt)
{
    if (!(dt > 0.0)) throw DomainError("step_kinematics: dt must be > 0");
    VehicleState next = state;
    double a = commanded_accel;
    if (state.speed + a * dt < 0.0) a = -state.speed / dt;
    next.speed = std::max(0.0, state.speed + a * dt);
    next.x = state.x + state.speed * dt + 0.5 * a * dt * dt;
    next.accel = a;
    return next;
}

double ground_truth_gap(const VehicleState& follower, const VehicleState& leader)
{
    return leader.rear() - follower.front();
}

bool laterally_overlapping(const VehicleState& a, const VehicleState& b)
{
    return std::abs(a.y - b.y) < 0.5 * (a.width + b.width);
}

double LaneChangeProfile::y_at(double t) const
{
    if (t <= t_start) return y_from;
    if (t >= t_start + duration) return y_to;
    const double phase = std::numbers::pi * (t - t_start) / duration;
    return y_from + (y_to - y_from) * 0.5 * (1.0 - std::cos(phase));
}

double LaneChangeProfile::vy_at(double t) const
{
    if (!active(t)) return 0.0;
    const double w = std::numbers::pi / duration;
    return (y_to - y_from) * 0.5 * w * std::sin(w * (t - t_start));
}

double LaneChangeProfile::ay_at(double t) const
{
    if (!active(t)) return 0.0;
    const double w = std::numbers::pi / duration;
    return (y_to - y_from) * 0.5 * w * w * std::cos(w * (t - t_start));
}

SimClock::SimClock(double timestep) : timestep_(timestep)
{
    if (!(timestep > 0.0)) throw ConfigError("timestep must be > 0");
}

void ScenarioConfig::validate() const
{
    lanes.validate();
    if (!(timestep > 0.0)) throw ConfigError("timestep must be > 0");
    if (!(duration > 0.0)) throw ConfigError("duration must be > 0");
    if (ev_cruise_speed < 0.0 || tv_pv_cruise_speed < 0.0) throw ConfigError("speeds must be >= 0");
    if (ev.speed < 0.0 || tv.speed < 0.0 || pv.speed < 0.0) throw ConfigError("speeds must be >= 0");
    if (pv_brake_decel > 0.0) throw ConfigError("pv_brake_decel must be <= 0");
    if (tv_harsh_brake_decel > 0.0) throw ConfigError("tv_harsh_brake_decel must be <= 0");
    if (!(tv_lane_change_duration > 0.0)) throw ConfigError("tv_lane_change_duration must be > 0");
    if (driver_speed_noise < 0.0 || !(driver_noise_time > 0.0)) throw ConfigError("bad driver noise");
    if (!(driver_accel_limit > 0.0) || !(driver_speed_gain > 0.0)) throw ConfigError("bad driver authority");
    if (relay_latency_ms < 0.0 || direct_latency_ms < 0.0) throw ConfigError("comm latency must be >= 0");
    if (!(staleness_window > 0.0)) throw ConfigError("staleness_window must be > 0");
    if (surround_range_noise < 0.0 || imu_noise < 0.0) throw ConfigError("sensor noise must be >= 0");
    if (!(pv_brake_time >= 0.0)) throw ConfigError("pv_brake_time must be >= 0");
    for (const auto* s : {&ev, &tv, &pv}) {
        if (s->lane < 0 || s->lane >= lanes.lane_count) throw ConfigError("initial lane outside the road");
    }
}

}  // namespace coop
