// SPDX-License-Identifier: Apache-2.0
//
// Ground-truth world model for the three-vehicle straight-track scenario.
// Coordinates: +x along the track, +y to the left, lane 0 is the rightmost
// lane and its center sits at y = 0.
#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace coop {

enum class Role : std::uint8_t { EV, TV, PV };
enum class PipelineVariant : std::uint8_t { P1, P2 };
enum class Topology : std::uint8_t { direct, relay };

std::string_view to_string(Role role);
std::string_view to_string(PipelineVariant variant);
std::string_view to_string(Topology topology);
PipelineVariant parse_pipeline_variant(std::string_view text);
Topology parse_topology(std::string_view text);

struct VehicleDims {
    double length;
    double width;
};

/// Body dimensions are fixed per role: PV 4.5x1.8 m, TV 3.0x1.5 m, EV 1.2x0.7 m.
VehicleDims role_dimensions(Role role);

struct LaneGeometry {
    int lane_count = 2;
    double lane_width = 3.5;
    double track_length = 40.0;

    void validate() const;
    double lane_center(int lane) const { return lane * lane_width; }
    /// Lane whose center is nearest to `y`, clamped to the existing lanes.
    int lane_of(double y) const;
    /// y of the marking between `lane` and `lane + 1`.
    double marking_left_of(int lane) const { return (lane + 0.5) * lane_width; }
};

struct VehicleState {
    int id = 0;
    Role role = Role::EV;
    double x = 0.0;  // center, m
    double y = 0.0;  // center, m
    int lane_id = 0;
    double heading = 0.0;  // deg
    double speed = 0.0;    // m/s, never negative
    double accel = 0.0;    // m/s^2, last applied
    double length = 0.0;
    double width = 0.0;

    double front() const { return x + 0.5 * length; }
    double rear() const { return x - 0.5 * length; }
};

VehicleState make_vehicle(int id, Role role, double x, int lane, double speed, const LaneGeometry& lanes);

/// Point-mass longitudinal step. The applied acceleration is clipped so the
/// speed never goes negative; y is left untouched.
VehicleState step_kinematics(const VehicleState& state, double commanded_accel, double dt);

/// Bumper-to-bumper longitudinal distance; negative when the bodies overlap.
double ground_truth_gap(const VehicleState& follower, const VehicleState& leader);

bool laterally_overlapping(const VehicleState& a, const VehicleState& b);

/// Fixed-duration cosine ramp between two lateral positions.
struct LaneChangeProfile {
    double t_start = 0.0;
    double duration = 3.0;
    double y_from = 0.0;
    double y_to = 0.0;

    bool active(double t) const { return t >= t_start && t < t_start + duration; }
    bool finished(double t) const { return t >= t_start + duration; }
    double y_at(double t) const;
    double vy_at(double t) const;
    double ay_at(double t) const;
};

class SimClock {
public:
    explicit SimClock(double timestep);

    double timestep() const { return timestep_; }
    std::int64_t step_index() const { return step_index_; }
    double t() const { return static_cast<double>(step_index_) * timestep_; }
    void advance() { ++step_index_; }

private:
    double timestep_;
    std::int64_t step_index_ = 0;
};

struct InitialState {
    double x = 0.0;
    int lane = 0;
    double speed = 0.0;
};

struct ScenarioConfig {
    LaneGeometry lanes;
    InitialState ev{14.5, 1, 0.0};
    InitialState tv{0.0, 0, 0.0};
    InitialState pv{23.75, 0, 0.0};

    double ev_cruise_speed = 1.5;
    double tv_pv_cruise_speed = 2.5;
    double pv_brake_time = 12.0;
    double pv_brake_decel = -3.0;

    bool prediction_enabled = true;
    PipelineVariant pipeline_variant = PipelineVariant::P2;
    Topology topology = Topology::relay;
    std::uint64_t rng_seed = 1;
    double timestep = 0.1;
    double duration = 26.0;

    // Human-driver stand-ins for the TV and PV.
    double driver_accel_limit = 1.0;   // launch / speed-keeping authority, m/s^2
    double driver_speed_gain = 1.0;    // 1/s
    double driver_speed_noise = 0.03;  // stationary std of the cruise-target wander, m/s
    double driver_noise_time = 2.0;    // correlation time of the wander, s

    double tv_lane_change_duration = 3.6;
    double tv_gap_acceptance = 5.0;  // TV length + 2 m
    double tv_harsh_brake_decel = -4.0;

    // Modeled one-way comm latency in in-process mode, ms.
    double relay_latency_ms = 6.75;
    double direct_latency_ms = 3.25;
    double staleness_window = 0.5;  // s

    double surround_range_noise = 0.05;  // m, std of non-frontal range readings
    double imu_noise = 0.01;             // std of lateral velocity / acceleration readings

    void validate() const;
};

}  // namespace coop
