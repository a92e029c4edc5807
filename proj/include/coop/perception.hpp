// SPDX-License-Identifier: Apache-2.0
//
// Synthetic stereo perception: disparity/depth geometry, tilt compensation,
// the two tracker pipelines, safety features and detector timing profiles.
//
// Camera frame: X right, Y down, Z along the optical axis. The camera is
// pitched down by `tilt_deg`. Vehicle frame: x forward from the mount
// reference, y to the left, z up from the ground.
#pragma once

#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "coop/random.hpp"
#include "coop/scene.hpp"

namespace coop {

struct Point3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
};

struct CameraMount {
    double height = 1.8;   // m above ground
    double lateral = 0.2;  // m left of the vehicle centerline
    double forward = 0.0;  // m ahead of the front bumper
};

struct CameraModel {
    double fx = 500.0;
    double fy = 500.0;
    double cx = 336.0;
    double cy = 188.0;
    double baseline = 0.11989;  // m
    double tilt_deg = 15.0;
    int width = 672;
    int height = 376;
    double nominal_fps = 10.0;
    CameraMount mount;

    void validate() const;
};

struct DepthNoise {
    double quantum_px = 0.25;  // disparity quantization step, 0 disables
    double sigma_px = 0.1;     // zero-mean Gaussian disparity noise
    double min_depth = 0.3;
    double max_depth = 25.0;
};

struct Detection {
    int track_id = 0;
    double u = 0.0;
    double v = 0.0;
    double disparity = 0.0;
    double confidence = 0.0;
};

double disparity_to_depth(double disparity, const CameraModel& cam);
Point3 pixel_to_camera(double u, double v, double depth, const CameraModel& cam);

/// Rotation by -tilt about the camera lateral axis (levels the optical axis).
Point3 rotate_tilt(const Point3& p, double tilt_deg);
/// Camera-frame point to vehicle frame: leveling rotation, then mount translation.
Point3 tilt_compensate(const Point3& camera_point, const CameraModel& cam);
/// Inverse of tilt_compensate.
Point3 vehicle_to_camera(const Point3& vehicle_point, const CameraModel& cam);

/// Projects a true camera-frame point and produces a noisy stereo detection.
/// Returns nullopt when the point is outside the image or the depth range.
std::optional<Detection> synthesize_observation(const Point3& camera_point, const CameraModel& cam,
                                                const DepthNoise& noise, Rng& rng,
                                                double confidence = 1.0, int track_id = 0);

struct DepthSample {
    double t;
    double depth;
};

struct TrackState {
    int track_id = 0;
    std::size_t capacity = 5;
    double alpha = 0.3;

    // Pipeline 2: rolling depth window with EMA range rate.
    std::deque<DepthSample> window;
    double smoothed_depth = 0.0;
    double raw_velocity = 0.0;
    double ema_velocity = 0.0;

    // Pipeline 1: leveled camera-frame position and its finite-difference velocity.
    std::size_t point_samples = 0;
    double point_t = 0.0;
    Point3 point;
    double v_x = 0.0;
    double v_z = 0.0;
};

double ema_update(double ema, double raw, double alpha);

TrackState track_update_p1(TrackState track, const Point3& leveled_point, double t);
/// Signed radial speed of the tracked object, positive when the range is closing.
double estimate_object_speed_p1(const TrackState& track);
TrackState track_update_p2(TrackState track, double depth, double t);

struct SafetyFeatures {
    double ttc;    // s, +inf when not closing
    double thw;    // s, +inf when the follower is stopped
    double gap;    // m
    double v_rel;  // m/s, follower minus leader
};

SafetyFeatures safety_features(double gap, double v_follower, double v_leader);

enum class SpeedSensorKind { throttle, gps };

/// Throttle-calibrated reading with its error clamped to the +-3 km/h envelope.
double throttle_reading(double true_speed, double error, double max_error = 3.0 / 3.6);

class SpeedSensor {
public:
    explicit SpeedSensor(SpeedSensorKind kind, double max_error = 3.0 / 3.6, double gps_period = 1.0);

    /// Throttle: one reading per call. GPS: readings only on the 1 Hz grid,
    /// lagged by one grid sample.
    std::optional<double> sample(double true_speed, double t, Rng& rng);

    SpeedSensorKind kind() const { return kind_; }
    double max_error() const { return max_error_; }

private:
    SpeedSensorKind kind_;
    double max_error_;
    double gps_period_;
    std::optional<double> previous_grid_truth_;
};

struct DetectorProfile {
    std::string name;
    double latency_mean_ms = 0.0;
    double latency_std_ms = 0.0;
    double confidence_mean = 0.0;
    double confidence_std = 0.0;

    void validate() const;
};

DetectorProfile yolov8n_profile();
DetectorProfile faster_rcnn_profile();
DetectorProfile ssdlite_profile();

struct StageLatency {
    std::string name;
    double mean_ms = 0.0;
    double std_ms = 0.0;
};

struct PipelineProfile {
    PipelineVariant variant = PipelineVariant::P2;
    std::vector<StageLatency> stages;  // stages after the detector
};

PipelineProfile default_pipeline_profile(PipelineVariant variant);

struct FrameTiming {
    double latency_s;   // capture to features available
    double interval_s;  // capture to next capture
};

FrameTiming draw_frame_timing(const DetectorProfile& detector, const PipelineProfile& pipeline,
                              const CameraModel& cam, Rng& rng);
std::vector<FrameTiming> pipeline_cadence(const DetectorProfile& detector, const PipelineProfile& pipeline,
                                          const CameraModel& cam, std::size_t frames, Rng& rng);
double mean_fps(std::span<const FrameTiming> frames);

}  // namespace coop
