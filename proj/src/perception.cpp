// SPDX-License-Identifier: Apache-2.0
#include "coop/perception.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "coop/errors.hpp"

namespace coop {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }

}  // namespace

void CameraModel::validate() const
{
    if (!(fx > 0.0 && fy > 0.0)) throw ConfigError("camera focal lengths must be > 0");
    if (!(baseline > 0.0)) throw ConfigError("camera baseline must be > 0");
    if (width <= 0 || height <= 0) throw ConfigError("camera resolution must be positive");
    if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height)
        throw ConfigError("principal point outside the image");
    if (!(nominal_fps > 0.0)) throw ConfigError("nominal_fps must be > 0");
}

double disparity_to_depth(double disparity, const CameraModel& cam)
{
    if (!(disparity > 0.0)) throw DomainError("disparity must be > 0");
    return cam.fx * cam.baseline / disparity;
}

Point3 pixel_to_camera(double u, double v, double depth, const CameraModel& cam)
{
    if (!(depth > 0.0)) throw DomainError("depth must be > 0");
    return {(u - cam.cx) * depth / cam.fx, (v - cam.cy) * depth / cam.fy, depth};
}

Point3 rotate_tilt(const Point3& p, double tilt_deg)
{
    const double c = std::cos(deg2rad(tilt_deg));
    const double s = std::sin(deg2rad(tilt_deg));
    return {p.x, p.y * c + p.z * s, -p.y * s + p.z * c};
}

Point3 tilt_compensate(const Point3& camera_point, const CameraModel& cam)
{
    const Point3 level = rotate_tilt(camera_point, cam.tilt_deg);
    return {level.z + cam.mount.forward, -level.x + cam.mount.lateral, cam.mount.height - level.y};
}

Point3 vehicle_to_camera(const Point3& vehicle_point, const CameraModel& cam)
{
    const Point3 level{-(vehicle_point.y - cam.mount.lateral), cam.mount.height - vehicle_point.z,
                       vehicle_point.x - cam.mount.forward};
    return rotate_tilt(level, -cam.tilt_deg);
}

std::optional<Detection> synthesize_observation(const Point3& camera_point, const CameraModel& cam,
                                                const DepthNoise& noise, Rng& rng, double confidence,
                                                int track_id)
{
    const double z = camera_point.z;
    if (!(z > noise.min_depth) || z > noise.max_depth) return std::nullopt;
    const double u = cam.fx * camera_point.x / z + cam.cx;
    const double v = cam.fy * camera_point.y / z + cam.cy;
    if (u < 0.0 || u >= cam.width || v < 0.0 || v >= cam.height) return std::nullopt;

    double d = cam.fx * cam.baseline / z;
    if (noise.quantum_px > 0.0) d = noise.quantum_px * std::round(d / noise.quantum_px);
    d += draw_normal(rng, 0.0, noise.sigma_px);
    if (!(d > 0.0)) return std::nullopt;
    return Detection{track_id, u, v, d, std::clamp(confidence, 0.0, 1.0)};
}

double ema_update(double ema, double raw, double alpha)
{
    return alpha * raw + (1.0 - alpha) * ema;
}

TrackState track_update_p1(TrackState track, const Point3& leveled_point, double t)
{
    if (track.point_samples > 0) {
        if (!(t > track.point_t)) throw OrderingError("track_update_p1: timestamps must increase");
        const double dt = t - track.point_t;
        track.v_x = (leveled_point.x - track.point.x) / dt;
        track.v_z = (leveled_point.z - track.point.z) / dt;
    }
    track.point = leveled_point;
    track.point_t = t;
    ++track.point_samples;
    return track;
}

double estimate_object_speed_p1(const TrackState& track)
{
    if (track.point_samples < 2) throw InsufficientHistory("pipeline 1 speed needs two samples");
    const double range = std::hypot(track.point.x, track.point.z);
    if (range == 0.0) return 0.0;
    return -(track.v_x * track.point.x + track.v_z * track.point.z) / range;
}

TrackState track_update_p2(TrackState track, double depth, double t)
{
    if (!track.window.empty() && !(t > track.window.back().t))
        throw OrderingError("track_update_p2: timestamps must increase");
    track.window.push_back({t, depth});
    while (track.window.size() > std::max<std::size_t>(track.capacity, 1)) track.window.pop_front();

    double sum = 0.0;
    for (const auto& s : track.window) sum += s.depth;
    track.smoothed_depth = sum / static_cast<double>(track.window.size());

    if (track.window.size() >= 2) {
        const auto& oldest = track.window.front();
        const auto& newest = track.window.back();
        track.raw_velocity = (newest.depth - oldest.depth) / (newest.t - oldest.t);
        track.ema_velocity = ema_update(track.ema_velocity, track.raw_velocity, track.alpha);
    }
    return track;
}

SafetyFeatures safety_features(double gap, double v_follower, double v_leader)
{
    if (!(gap >= 0.0)) throw DomainError("safety_features: gap must be >= 0");
    const double v_rel = v_follower - v_leader;
    SafetyFeatures f{kInf, kInf, gap, v_rel};
    if (gap == 0.0) {
        f.ttc = 0.0;
        f.thw = 0.0;
        return f;
    }
    if (v_rel > 0.0) f.ttc = gap / v_rel;
    if (v_follower > 0.0) f.thw = gap / v_follower;
    return f;
}

double throttle_reading(double true_speed, double error, double max_error)
{
    return std::max(0.0, true_speed + std::clamp(error, -max_error, max_error));
}

SpeedSensor::SpeedSensor(SpeedSensorKind kind, double max_error, double gps_period)
    : kind_(kind), max_error_(max_error), gps_period_(gps_period)
{
    if (!(max_error >= 0.0)) throw ConfigError("max_error must be >= 0");
    if (!(gps_period > 0.0)) throw ConfigError("gps_period must be > 0");
}

std::optional<double> SpeedSensor::sample(double true_speed, double t, Rng& rng)
{
    if (true_speed < 0.0) throw DomainError("true speed must be >= 0");
    if (kind_ == SpeedSensorKind::throttle) {
        return throttle_reading(true_speed, draw_normal(rng, 0.0, max_error_ / 3.0), max_error_);
    }
    const double k = std::round(t / gps_period_);
    if (std::abs(t - k * gps_period_) > 1e-9) return std::nullopt;
    const auto published = previous_grid_truth_;
    previous_grid_truth_ = true_speed;
    return published;
}

void DetectorProfile::validate() const
{
    if (!(latency_mean_ms > 0.0)) throw ConfigError("detector latency_mean must be > 0");
    if (latency_std_ms < 0.0) throw ConfigError("detector latency_std must be >= 0");
    if (confidence_mean < 0.0 || confidence_mean > 1.0) throw ConfigError("confidence must be in [0,1]");
}

DetectorProfile yolov8n_profile() { return {"YOLOv8-n", 18.4, 3.5, 0.70, 0.05}; }
DetectorProfile faster_rcnn_profile() { return {"Faster R-CNN", 127.8, 3.7, 0.22, 0.03}; }
DetectorProfile ssdlite_profile() { return {"SSDLite320", 101.2, 12.1, 0.07, 0.01}; }

// Stage budgets are sized so that, behind a YOLOv8-n detector, the mean frame
// interval lands on the online rates (5.3 FPS for P2, 3.75 FPS for P1).
PipelineProfile default_pipeline_profile(PipelineVariant variant)
{
    PipelineProfile p;
    p.variant = variant;
    if (variant == PipelineVariant::P2) {
        p.stages = {
            {"roi_segmentation_deeplabv3", 11.2, 1.1},
            {"zed_disparity_and_ema_tracker", 12.0, 2.0},
            {"onboard_power_constrained_overhead", 147.08, 15.0},
        };
    } else {
        p.stages = {
            {"raft_stereo_24_iterations", 230.0, 55.0},
            {"depth_filtering_and_tracker", 18.27, 3.0},
        };
    }
    return p;
}

FrameTiming draw_frame_timing(const DetectorProfile& detector, const PipelineProfile& pipeline,
                              const CameraModel& cam, Rng& rng)
{
    double ms = std::max(0.0, draw_normal(rng, detector.latency_mean_ms, detector.latency_std_ms));
    for (const auto& stage : pipeline.stages) ms += std::max(0.0, draw_normal(rng, stage.mean_ms, stage.std_ms));
    const double latency = ms / 1000.0;
    return {latency, std::max(latency, 1.0 / cam.nominal_fps)};
}

std::vector<FrameTiming> pipeline_cadence(const DetectorProfile& detector, const PipelineProfile& pipeline,
                                          const CameraModel& cam, std::size_t frames, Rng& rng)
{
    std::vector<FrameTiming> out;
    out.reserve(frames);
    for (std::size_t i = 0; i < frames; ++i) out.push_back(draw_frame_timing(detector, pipeline, cam, rng));
    return out;
}

double mean_fps(std::span<const FrameTiming> frames)
{
    if (frames.empty()) return 0.0;
    double total = 0.0;
    for (const auto& f : frames) total += f.interval_s;
    return static_cast<double>(frames.size()) / total;
}

}  // namespace coop
