// SPDX-License-Identifier: Apache-2.0
//
// Scenario runner: scripted PV/TV drivers, stereo perception of the TV,
// relay + prediction in virtual time (or over the wire), EV control, run
// metrics, with/without-prediction comparison and run-log export.
#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "coop/control.hpp"
#include "coop/corpus.hpp"
#include "coop/inference.hpp"
#include "coop/net.hpp"
#include "coop/perception.hpp"
#include "coop/scene.hpp"

namespace coop {

/// Ontology, thresholds and the compiled table the prediction side uses.
struct PredictionStack {
    Ontology ontology;
    Thresholds thresholds;
    std::shared_ptr<const LikelihoodModel> model;
    std::shared_ptr<const LookupTable> table;

    /// Table lookup; frames outside the feasible set fall back to the model.
    ManeuverPosterior predict(const LinguisticFrame& frame) const;
    Predictor predictor() const;
};

/// Frequency likelihoods fitted on the synthetic corpus, compiled to a table.
PredictionStack build_prediction_stack(int lane_count, const CorpusConfig& corpus = {});

// ---- drivers

/// Ornstein-Uhlenbeck wander with stationary std `sigma` and correlation time `tau`.
class SpeedWander {
public:
    SpeedWander(double sigma, double tau, Rng rng) : sigma_(sigma), tau_(tau), rng_(std::move(rng)) {}
    double step(double dt);
    double value() const { return w_; }

private:
    double sigma_, tau_;
    Rng rng_;
    double w_ = 0.0;
};

/// Cruise toward `target` with bounded authority.
double cruise_accel(double speed, double target, const ScenarioConfig& cfg);

/// Cruise until the brake time, then the configured deceleration until stopped.
double pv_driver(double t, const VehicleState& pv, const ScenarioConfig& cfg, double wander = 0.0);

enum class TvMode : std::uint8_t { cruise, lane_change, harsh_brake };
std::string_view to_string(TvMode m);

struct TvDecision {
    double accel = 0.0;
    bool trigger_lane_change = false;
    bool trigger_harsh_brake = false;
};

/// Gap the TV would have to the EV in the target lane, projected to the middle
/// of the lane change with the EV's current acceleration. nullopt when the EV
/// is not in the target lane.
std::optional<double> projected_merge_gap(const VehicleState& tv, const VehicleState& ev, double duration);

/// One TV decision. `frontal_risk` is the TV's own categorized frontal TTC
/// (nullopt when nothing is perceived ahead).
TvDecision tv_driver(double t, const VehicleState& tv, TvMode mode, std::optional<std::uint8_t> frontal_risk,
                     std::optional<double> merge_gap, const ScenarioConfig& cfg, double wander = 0.0);

// ---- run log

struct VehicleRow {
    double t = 0.0;
    Role role = Role::EV;
    double x = 0.0, y = 0.0;
    int lane = 0;
    double speed = 0.0, accel = 0.0;

    friend bool operator==(const VehicleRow&, const VehicleRow&) = default;
};

struct PerceptionRow {
    std::uint64_t frame_id = 0;
    double t_capture = 0.0;
    double t_available = 0.0;
    double gap = 0.0;  // perceived TV->PV bumper gap, +inf when nothing is seen
    double ttc = 0.0;
    double thw = 0.0;
    std::string frame;  // linguistic frame key

    friend bool operator==(const PerceptionRow&, const PerceptionRow&) = default;
};

struct CommRow {
    std::uint64_t frame_id = 0;
    std::uint64_t seq = 0;
    double t_sent = 0.0;
    double latency_ms = 0.0;

    friend bool operator==(const CommRow&, const CommRow&) = default;
};

struct PredictionRow {
    double t = 0.0;  // arrival at the EV
    std::uint64_t frame_id = 0;
    Probabilities p{};
    Maneuver argmax = Maneuver::laneKeep;

    friend bool operator==(const PredictionRow&, const PredictionRow&) = default;
};

struct RunEvents {
    std::optional<double> prediction_time;  // first leftLaneChange prediction at the EV
    std::optional<double> lane_change_start;
    std::optional<double> crossing_time;  // TV center crosses the lane marking
    std::optional<double> harsh_brake_time;
    std::optional<double> ev_yield_time;

    friend bool operator==(const RunEvents&, const RunEvents&) = default;
};

struct RunLog {
    std::uint64_t base_config_hash = 0;  // everything but prediction_enabled
    bool prediction_enabled = true;
    std::uint64_t seed = 0;
    double timestep = 0.1;
    std::size_t ticks = 0;
    RunEvents events;

    std::vector<VehicleRow> vehicles;  // per tick, EV then TV then PV
    std::vector<PerceptionRow> perception;
    std::vector<CommRow> comm;
    std::vector<PredictionRow> predictions;
    std::vector<ControlTrace> control;

    /// Crossing time, or harsh-brake onset when the TV never crosses; 0 otherwise.
    double t0() const;

    friend bool operator==(const RunLog&, const RunLog&) = default;
};

struct RunMetrics {
    double anticipation_horizon = 0.0;  // s, NaN without both a prediction and a crossing
    double tv_min_accel = 0.0;
    double ev_stop_time = 0.0;  // s relative to t0, NaN when the EV never stops
    double min_ttc = 0.0;       // ground-truth TV->leader
    bool collision = false;
};

RunMetrics compute_metrics(const RunLog& log, const ScenarioConfig& cfg);

/// Hash of the config with prediction_enabled cleared.
std::uint64_t base_config_hash(const ScenarioConfig& cfg);

// ---- running

/// Networked mode: the simulator is the sensor feeding a perception client.
struct NetworkedRun {
    Endpoint client;
    std::chrono::milliseconds reply_timeout{2000};
};

struct RunResult {
    RunLog log;
    RunMetrics metrics;
};

/// Deterministic per seed in-process. `stack` is required when prediction is on.
RunResult run_scenario(const ScenarioConfig& cfg, const PredictionStack* stack, const NetworkedRun* network = nullptr);

// ---- comparison

struct Series {
    std::string name;  // e.g. "TV accel ON"
    Role role = Role::EV;
    std::string quantity;  // "accel" or "speed"
    bool prediction_enabled = true;
    std::vector<double> t;  // re-referenced to t0
    std::vector<double> v;
};

struct MetricDelta {
    std::string name;
    double on = 0.0;
    double off = 0.0;
    double delta = 0.0;  // on - off
};

struct ComparisonReport {
    std::vector<Series> series;               // 2 accel + 2 speed per vehicle
    std::optional<double> prediction_marker;  // ON run, re-referenced
    std::vector<MetricDelta> deltas;

    void write_csv(std::ostream& out) const;
    void write_svg(std::ostream& out) const;
};

/// InputError unless both logs come from the same base config.
ComparisonReport compare_runs(const RunLog& log_on, const RunMetrics& m_on, const RunLog& log_off,
                              const RunMetrics& m_off);

// ---- export (runlog_io.cpp)

/// One file, one `kind` column per row; see the README for the column list.
void write_runlog_csv(const RunLog& log, std::ostream& out);
RunLog read_runlog_csv(std::istream& in);
/// Acceleration and speed against t - t0 per vehicle, crossing line at 0, prediction marker.
void write_runlog_svg(const RunLog& log, std::ostream& out);
/// IoError when the path cannot be written.
void export_runlog(const RunLog& log, const std::string& path, const std::string& format);

// ---- config (config_io.cpp)

ScenarioConfig scenario_from_json(std::istream& in);
void scenario_to_json(const ScenarioConfig& cfg, std::ostream& out);

}  // namespace coop
