// SPDX-License-Identifier: Apache-2.0
#include "coop/sim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include "coop/errors.hpp"
#include "coop/nodes.hpp"
#include "coop/numfmt.hpp"

namespace coop {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kPvDetectHeight = 0.75;  // m, rear-bumper point the detector locks on

// independent RNG streams per noise source
enum Stream : std::uint64_t { kCadence = 1, kDepth, kSpeedSensor, kSurround, kImu, kPvWander, kTvWander };

std::uint64_t fnv1a(std::string_view s)
{
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace

// ---- prediction stack

ManeuverPosterior PredictionStack::predict(const LinguisticFrame& frame) const
{
    if (table) {
        try {
            const auto& p = table->query_hash(frame);
            return ManeuverPosterior{p.posterior};
        } catch (const InfeasibleFrame&) {
        }
    }
    if (!model) throw ConfigError("prediction stack has neither a table nor a model");
    return posterior(frame, *model);
}

Predictor PredictionStack::predictor() const
{
    return [stack = *this](const LinguisticFrame& f) { return stack.predict(f); };
}

PredictionStack build_prediction_stack(int lane_count, const CorpusConfig& corpus_cfg)
{
    CorpusConfig cc = corpus_cfg;
    cc.lane_count = lane_count;
    const auto corpus = generate_corpus(cc);
    PredictionStack stack{Ontology::for_lanes(lane_count), fit_lateral_thresholds(corpus), nullptr, nullptr};
    const auto frames = categorize_corpus(corpus, stack.thresholds, stack.ontology);
    auto model = std::make_shared<LikelihoodModel>(fit_likelihoods_frequency(frames, stack.ontology));
    const auto rules = default_feasibility_rules(stack.ontology);
    stack.table = std::make_shared<LookupTable>(
        LookupTable::build(stack.ontology, rules, [&model](const LinguisticFrame& f) { return posterior(f, *model); }));
    stack.model = std::move(model);
    return stack;
}

// ---- drivers

double SpeedWander::step(double dt)
{
    const double a = std::exp(-dt / tau_);
    w_ = w_ * a + draw_normal(rng_, 0.0, sigma_ * std::sqrt(1.0 - a * a));
    return w_;
}

double cruise_accel(double speed, double target, const ScenarioConfig& cfg)
{
    return std::clamp(cfg.driver_speed_gain * (target - speed), -cfg.driver_accel_limit, cfg.driver_accel_limit);
}

double pv_driver(double t, const VehicleState& pv, const ScenarioConfig& cfg, double wander)
{
    if (t < cfg.pv_brake_time) return cruise_accel(pv.speed, cfg.tv_pv_cruise_speed + wander, cfg);
    return pv.speed > 0.0 ? cfg.pv_brake_decel : 0.0;
}

std::string_view to_string(TvMode m)
{
    switch (m) {
    case TvMode::cruise: return "cruise";
    case TvMode::lane_change: return "lane_change";
    case TvMode::harsh_brake: return "harsh_brake";
    }
    return "?";
}

std::optional<double> projected_merge_gap(const VehicleState& tv, const VehicleState& ev, double duration)
{
    if (ev.lane_id != tv.lane_id + 1) return std::nullopt;
    const double half = 0.5 * duration;
    // the EV keeps its current acceleration, and a braking EV stays stopped
    double ev_travel = ev.speed * half + 0.5 * ev.accel * half * half;
    if (ev.accel < 0.0 && ev.speed + ev.accel * half < 0.0) ev_travel = -0.5 * ev.speed * ev.speed / ev.accel;
    ev_travel = std::max(ev_travel, 0.0);
    if (tv.x >= ev.x) return ground_truth_gap(ev, tv) + tv.speed * half - ev_travel;
    return ground_truth_gap(tv, ev) + ev_travel - tv.speed * half;
}

TvDecision tv_driver(double t, const VehicleState& tv, TvMode mode, std::optional<std::uint8_t> frontal_risk,
                     std::optional<double> merge_gap, const ScenarioConfig& cfg, double wander)
{
    (void)t;
    TvDecision d;
    switch (mode) {
    case TvMode::harsh_brake: d.accel = tv.speed > 0.0 ? cfg.tv_harsh_brake_decel : 0.0; return d;
    case TvMode::lane_change: d.accel = cruise_accel(tv.speed, cfg.tv_pv_cruise_speed + wander, cfg); return d;
    case TvMode::cruise: break;
    }
    if (frontal_risk && *frontal_risk == 0) {
        if (!merge_gap || *merge_gap >= cfg.tv_gap_acceptance) {
            d.trigger_lane_change = true;
            d.accel = cruise_accel(tv.speed, cfg.tv_pv_cruise_speed + wander, cfg);
        } else {
            d.trigger_harsh_brake = true;
            d.accel = tv.speed > 0.0 ? cfg.tv_harsh_brake_decel : 0.0;
        }
        return d;
    }
    d.accel = cruise_accel(tv.speed, cfg.tv_pv_cruise_speed + wander, cfg);
    return d;
}

// ---- run log / metrics

double RunLog::t0() const
{
    if (events.crossing_time) return *events.crossing_time;
    if (events.harsh_brake_time) return *events.harsh_brake_time;
    return 0.0;
}

std::uint64_t base_config_hash(const ScenarioConfig& cfg)
{
    ScenarioConfig c = cfg;
    c.prediction_enabled = false;
    std::ostringstream os;
    scenario_to_json(c, os);
    return fnv1a(os.str());
}

namespace {

struct Fleet {
    VehicleState ev, tv, pv;
};

// Nearest vehicle ahead of `self` in `lane` among `others`.
const VehicleState* leader_in_lane(const VehicleState& self, int lane,
                                   std::initializer_list<const VehicleState*> others)
{
    const VehicleState* best = nullptr;
    for (const auto* o : others) {
        if (o->lane_id != lane || o->x <= self.x) continue;
        if (!best || o->x < best->x) best = o;
    }
    return best;
}

const VehicleState* follower_in_lane(const VehicleState& self, int lane,
                                     std::initializer_list<const VehicleState*> others)
{
    const VehicleState* best = nullptr;
    for (const auto* o : others) {
        if (o->lane_id != lane || o->x > self.x) continue;
        if (!best || o->x > best->x) best = o;
    }
    return best;
}

double closing_ttc(double gap, double closing)
{
    if (!(closing > 0.0)) return kInf;
    return std::max(gap, 0.0) / closing;
}

VehicleState row_state(const std::vector<VehicleRow>& rows, std::size_t i)
{
    VehicleState v;
    v.role = rows[i].role;
    const auto dims = role_dimensions(v.role);
    v.x = rows[i].x;
    v.y = rows[i].y;
    v.lane_id = rows[i].lane;
    v.speed = rows[i].speed;
    v.length = dims.length;
    v.width = dims.width;
    return v;
}

}  // namespace

RunMetrics compute_metrics(const RunLog& log, const ScenarioConfig& cfg)
{
    (void)cfg;
    RunMetrics m;
    m.tv_min_accel = kInf;
    m.min_ttc = kInf;
    const double t0 = log.t0();
    bool ev_moved = false;
    m.ev_stop_time = kNaN;
    for (std::size_t i = 0; i + 2 < log.vehicles.size(); i += 3) {
        const auto ev = row_state(log.vehicles, i);
        const auto tv = row_state(log.vehicles, i + 1);
        const auto pv = row_state(log.vehicles, i + 2);
        m.tv_min_accel = std::min(m.tv_min_accel, log.vehicles[i + 1].accel);
        if (ev.speed > 0.0) ev_moved = true;
        if (ev_moved && ev.speed == 0.0 && std::isnan(m.ev_stop_time)) m.ev_stop_time = log.vehicles[i].t - t0;

        const VehicleState* pairs[3][2] = {{&ev, &tv}, {&ev, &pv}, {&tv, &pv}};
        for (auto& p : pairs) {
            const auto* a = p[0];
            const auto* b = p[1];
            if (!laterally_overlapping(*a, *b)) continue;
            const auto* back = a->x <= b->x ? a : b;
            const auto* front = a->x <= b->x ? b : a;
            if (ground_truth_gap(*back, *front) < 0.0) m.collision = true;
        }
        if (const auto* lead = leader_in_lane(tv, tv.lane_id, {&ev, &pv}))
            m.min_ttc = std::min(m.min_ttc, closing_ttc(ground_truth_gap(tv, *lead), tv.speed - lead->speed));
    }
    if (m.tv_min_accel == kInf) m.tv_min_accel = 0.0;
    m.anticipation_horizon = (log.events.prediction_time && log.events.crossing_time)
                                 ? *log.events.crossing_time - *log.events.prediction_time
                                 : kNaN;
    return m;
}

// ---- scenario

namespace {

struct PendingFrame {
    std::uint64_t frame_id;
    double t_capture;
    double t_available;
    NumericFeatures numeric;
    PerceptionRow row;
};

struct Arrival {
    double t;
    ManeuverPosterior posterior;
};

class TvPerception {
public:
    TvPerception(const ScenarioConfig& cfg, const Thresholds& th)
        : cfg_(cfg),
          th_(th),
          detector_(yolov8n_profile()),
          pipeline_(default_pipeline_profile(cfg.pipeline_variant)),
          cadence_rng_(make_stream(cfg.rng_seed, kCadence)),
          depth_rng_(make_stream(cfg.rng_seed, kDepth)),
          speed_rng_(make_stream(cfg.rng_seed, kSpeedSensor)),
          surround_rng_(make_stream(cfg.rng_seed, kSurround)),
          imu_rng_(make_stream(cfg.rng_seed, kImu)),
          speed_sensor_(SpeedSensorKind::throttle)
    {
    }

    std::optional<PendingFrame> maybe_capture(double t, const Fleet& f, const LaneChangeProfile* lc)
    {
        if (t + 1e-9 < next_capture_) return std::nullopt;
        const auto timing = draw_frame_timing(detector_, pipeline_, cam_, cadence_rng_);
        PendingFrame pf;
        pf.frame_id = next_id_++;
        pf.t_capture = t;
        pf.t_available = t + timing.latency_s;
        next_capture_ = t + timing.interval_s;
        pf.numeric = features(t, f, lc, pf.row);
        pf.row.frame_id = pf.frame_id;
        pf.row.t_capture = pf.t_capture;
        pf.row.t_available = pf.t_available;
        return pf;
    }

private:
    NumericFeatures features(double t, const Fleet& f, const LaneChangeProfile* lc, PerceptionRow& row)
    {
        const auto& tv = f.tv;
        const double v_tv = *speed_sensor_.sample(tv.speed, t, speed_rng_);
        NumericFeatures n;
        n.lateral_velocity = (lc ? lc->vy_at(t) : 0.0) + draw_normal(imu_rng_, 0.0, cfg_.imu_noise);
        n.lateral_acceleration = (lc ? lc->ay_at(t) : 0.0) + draw_normal(imu_rng_, 0.0, cfg_.imu_noise);
        n.lane_index = tv.lane_id;
        n.lane_count = cfg_.lanes.lane_count;
        n.lane_width = cfg_.lanes.lane_width;
        n.lane_offset = tv.y - cfg_.lanes.lane_center(tv.lane_id);

        // frontal: stereo camera on whatever leads in the TV's lane
        row.gap = row.ttc = row.thw = kInf;
        n.ttc_preceding = n.thw_preceding = kInf;
        if (const auto* lead = leader_in_lane(tv, tv.lane_id, {&f.ev, &f.pv})) {
            if (auto seen = stereo(t, tv, *lead, v_tv)) {
                row.gap = seen->gap;
                row.ttc = seen->ttc;
                row.thw = seen->thw;
                n.ttc_preceding = seen->ttc;
                n.thw_preceding = seen->thw;
                n.frontal_gap[static_cast<int>(LaneSide::current)] = seen->gap;
                n.lane_mean_speed[static_cast<int>(LaneSide::current)] = v_tv - seen->v_rel;
            }
        } else {
            track_ = TrackState{};
        }

        // neighbours: range sensors, ground truth plus noise
        auto surround = [&](int lane, double& ttc_pre, double& ttc_fol, LaneSide side) {
            ttc_pre = ttc_fol = kInf;
            if (lane < 0 || lane >= cfg_.lanes.lane_count) return;
            if (const auto* p = leader_in_lane(tv, lane, {&f.ev, &f.pv})) {
                const double gap =
                    ground_truth_gap(tv, *p) + draw_normal(surround_rng_, 0.0, cfg_.surround_range_noise);
                ttc_pre = closing_ttc(gap, v_tv - p->speed);
                n.frontal_gap[static_cast<int>(side)] = std::max(gap, 0.0);
                n.lane_mean_speed[static_cast<int>(side)] = p->speed;
            }
            if (const auto* q = follower_in_lane(tv, lane, {&f.ev, &f.pv})) {
                const double gap =
                    ground_truth_gap(*q, tv) + draw_normal(surround_rng_, 0.0, cfg_.surround_range_noise);
                ttc_fol = closing_ttc(gap, q->speed - v_tv);
            }
        };
        surround(tv.lane_id + 1, n.ttc_left_preceding, n.ttc_left_following, LaneSide::left);
        surround(tv.lane_id - 1, n.ttc_right_preceding, n.ttc_right_following, LaneSide::right);
        return n;
    }

    struct Seen {
        double gap, ttc, thw, v_rel;
    };

    std::optional<Seen> stereo(double t, const VehicleState& tv, const VehicleState& lead, double v_tv)
    {
        const Point3 target{ground_truth_gap(tv, lead), lead.y - tv.y, kPvDetectHeight};
        const auto det = synthesize_observation(vehicle_to_camera(target, cam_), cam_, noise_, depth_rng_,
                                                detector_.confidence_mean, lead.id);
        if (!det) return std::nullopt;
        if (track_.track_id != lead.id) {
            track_ = TrackState{};
            track_.track_id = lead.id;
        }
        const double depth = disparity_to_depth(det->disparity, cam_);
        double gap = 0.0;
        double closing = 0.0;
        if (cfg_.pipeline_variant == PipelineVariant::P2) {
            track_ = track_update_p2(track_, depth, t);
            // window mean sits at the window's mean time; carry it forward to the newest sample
            double t_mean = 0.0;
            for (const auto& w : track_.window) t_mean += w.t;
            t_mean /= static_cast<double>(track_.window.size());
            const double now_depth = track_.smoothed_depth + track_.ema_velocity * (track_.window.back().t - t_mean);
            gap = tilt_compensate(pixel_to_camera(det->u, det->v, now_depth, cam_), cam_).x;
            // camera depth is linear in forward range at fixed height
            if (track_.window.size() >= 2)
                closing = -track_.ema_velocity / std::cos(cam_.tilt_deg * std::numbers::pi / 180.0);
        } else {
            const Point3 p = pixel_to_camera(det->u, det->v, depth, cam_);
            track_ = track_update_p1(track_, rotate_tilt(p, cam_.tilt_deg), t);
            gap = tilt_compensate(p, cam_).x;
            if (track_.point_samples >= 2) closing = estimate_object_speed_p1(track_);
        }
        const auto s = safety_features(std::max(gap, 0.0), v_tv, v_tv - closing);
        return Seen{s.gap, s.ttc, s.thw, s.v_rel};
    }

    const ScenarioConfig& cfg_;
    Thresholds th_;
    CameraModel cam_;
    DepthNoise noise_;
    DetectorProfile detector_;
    PipelineProfile pipeline_;
    Rng cadence_rng_, depth_rng_, speed_rng_, surround_rng_, imu_rng_;
    SpeedSensor speed_sensor_;
    TrackState track_;
    double next_capture_ = 0.0;
    std::uint64_t next_id_ = 0;
};

}  // namespace

RunResult run_scenario(const ScenarioConfig& cfg, const PredictionStack* stack, const NetworkedRun* network)
{
    cfg.validate();
    if (cfg.prediction_enabled && !stack) throw ConfigError("prediction enabled without a prediction stack");
    if (stack && stack->ontology.lane_count() != static_cast<std::size_t>(cfg.lanes.lane_count))
        throw ConfigError("prediction ontology lane count differs from the scenario");
    if (cfg.tv.lane + 1 >= cfg.lanes.lane_count) throw ConfigError("the TV needs a lane on its left");

    const Thresholds th = stack ? stack->thresholds : Thresholds{};
    RunLog log;
    log.base_config_hash = base_config_hash(cfg);
    log.prediction_enabled = cfg.prediction_enabled;
    log.seed = cfg.rng_seed;
    log.timestep = cfg.timestep;

    Fleet f{make_vehicle(0, Role::EV, cfg.ev.x, cfg.ev.lane, cfg.ev.speed, cfg.lanes),
            make_vehicle(1, Role::TV, cfg.tv.x, cfg.tv.lane, cfg.tv.speed, cfg.lanes),
            make_vehicle(2, Role::PV, cfg.pv.x, cfg.pv.lane, cfg.pv.speed, cfg.lanes)};
    EvDrive drive;
    drive.set_speed(f.ev.speed);
    const double ev_x0 = f.ev.x;

    SpeedWander pv_wander(cfg.driver_speed_noise, cfg.driver_noise_time, make_stream(cfg.rng_seed, kPvWander));
    SpeedWander tv_wander(cfg.driver_speed_noise, cfg.driver_noise_time, make_stream(cfg.rng_seed, kTvWander));
    TvPerception perception(cfg, th);

    std::unique_ptr<SensorFeed> feed;
    if (network && cfg.prediction_enabled) {
        feed = std::make_unique<SensorFeed>(network->client);
        if (!feed->wait_ready(network->reply_timeout, cfg.lanes.lane_count))
            throw IoError("cannot reach the perception client at " + network->client.str());
    }
    const double latency_ms = cfg.topology == Topology::relay ? cfg.relay_latency_ms : cfg.direct_latency_ms;

    std::deque<PendingFrame> pending;
    std::deque<Arrival> inbox;
    std::optional<Arrival> latest;
    TvMode mode = TvMode::cruise;
    std::optional<LaneChangeProfile> lc;
    bool yield_latched = false;
    LongitudinalState ev_state = LongitudinalState::Accelerate;
    const double marking = cfg.lanes.marking_left_of(cfg.tv.lane);

    const auto ticks = static_cast<std::size_t>(std::llround(cfg.duration / cfg.timestep)) + 1;
    log.ticks = ticks;
    double prev_tv_y = f.tv.y;
    for (std::size_t k = 0; k < ticks; ++k) {
        const double t = static_cast<double>(k) * cfg.timestep;

        // TV lateral position and lane-marking crossing
        if (lc) {
            f.tv.y = lc->y_at(t);
            f.tv.lane_id = cfg.lanes.lane_of(f.tv.y);
            if (!log.events.crossing_time && prev_tv_y < marking && f.tv.y >= marking)
                log.events.crossing_time =
                    t - cfg.timestep + cfg.timestep * (marking - prev_tv_y) / (f.tv.y - prev_tv_y);
            if (mode == TvMode::lane_change && lc->finished(t)) mode = TvMode::cruise;
        }
        prev_tv_y = f.tv.y;

        // perception capture and delivery
        while (auto pf = perception.maybe_capture(t, f, lc && lc->active(t) ? &*lc : nullptr)) {
            if (stack) pf->row.frame = frame_key(categorize(pf->numeric, th, stack->ontology), stack->ontology);
            pending.push_back(std::move(*pf));
        }
        while (!pending.empty() && pending.front().t_available <= t + 1e-9) {
            PendingFrame pf = std::move(pending.front());
            pending.pop_front();
            log.perception.push_back(pf.row);
            if (!cfg.prediction_enabled) continue;
            if (feed) {
                const auto seq = feed->submit(pf.frame_id, pf.t_available, pf.numeric);
                if (!seq) continue;
                std::optional<TimedPrediction> got;
                while ((got = feed->next(network->reply_timeout)))
                    if (got->prediction.frame_id == pf.frame_id) break;
                if (!got) continue;
                const double ms = got->one_way_ms();
                log.comm.push_back({pf.frame_id, *seq, pf.t_available, ms});
                inbox.push_back({pf.t_available + ms / 1000.0, ManeuverPosterior{got->prediction.posterior}});
            } else {
                const auto post = stack->predict(categorize(pf.numeric, th, stack->ontology));
                log.comm.push_back({pf.frame_id, pf.frame_id + 1, pf.t_available, latency_ms});
                inbox.push_back({pf.t_available + latency_ms / 1000.0, post});
            }
            const auto& a = inbox.back();
            log.predictions.push_back({a.t, pf.frame_id, a.posterior.p, a.posterior.argmax()});
            if (!log.events.prediction_time && a.posterior.argmax() == Maneuver::leftLaneChange)
                log.events.prediction_time = a.t;
        }

        // TV
        const double tv_w = tv_wander.step(cfg.timestep);
        const auto gap = projected_merge_gap(f.tv, f.ev, cfg.tv_lane_change_duration);
        // the TV's human driver judges the gap by eye, not through the camera pipeline
        std::optional<std::uint8_t> tv_risk;
        if (const auto* lead = leader_in_lane(f.tv, f.tv.lane_id, {&f.ev, &f.pv}))
            tv_risk = risk_category(closing_ttc(ground_truth_gap(f.tv, *lead), f.tv.speed - lead->speed), th.ttc_high,
                                    th.ttc_medium);
        const auto dec = tv_driver(t, f.tv, mode, tv_risk, gap, cfg, tv_w);
        if (dec.trigger_lane_change) {
            mode = TvMode::lane_change;
            const double y0 = cfg.lanes.lane_center(f.tv.lane_id);
            lc = LaneChangeProfile{t, cfg.tv_lane_change_duration, y0, y0 + cfg.lanes.lane_width};
            log.events.lane_change_start = t;
        } else if (dec.trigger_harsh_brake) {
            mode = TvMode::harsh_brake;
            log.events.harsh_brake_time = t;
        }

        // PV
        const double pv_a = pv_driver(t, f.pv, cfg, pv_wander.step(cfg.timestep));

        // EV
        while (!inbox.empty() && inbox.front().t <= t + 1e-9) {
            latest = inbox.front();
            inbox.pop_front();
        }
        EvContext ctx;
        if (const auto* lead = leader_in_lane(f.ev, f.ev.lane_id, {&f.tv, &f.pv}))
            ctx.frontal_ttc = closing_ttc(ground_truth_gap(f.ev, *lead), f.ev.speed - lead->speed);
        ctx.tv_in_adjacent_lane = f.tv.lane_id + 1 == f.ev.lane_id;
        ctx.tv_relative_x = f.tv.x - f.ev.x;
        ctx.yield_latched = yield_latched;
        const bool stale = latest && t - latest->t > cfg.staleness_window;
        if (stale) {
            ev_state = ctx.frontal_ttc < PlannerConfig{}.emergency_ttc ? LongitudinalState::Stop : ev_state;
        } else {
            std::optional<ManeuverPosterior> pred;
            if (latest) pred = latest->posterior;
            ev_state = plan_state(pred, ctx);
        }
        if (ev_state == LongitudinalState::Decelerate && !yield_latched) {
            yield_latched = true;
            log.events.ev_yield_time = t;
        }
        const double ev_v0 = f.ev.speed;
        auto trace = drive.tick(ev_state);
        trace.t = t;
        log.control.push_back(trace);
        const double ev_a = (drive.speed() - ev_v0) / cfg.timestep;

        // log the state at t with the acceleration applied over [t, t + dt)
        auto next_tv = step_kinematics(f.tv, dec.accel, cfg.timestep);
        auto next_pv = step_kinematics(f.pv, pv_a, cfg.timestep);
        log.vehicles.push_back({t, Role::EV, f.ev.x, f.ev.y, f.ev.lane_id, f.ev.speed, ev_a});
        log.vehicles.push_back({t, Role::TV, f.tv.x, f.tv.y, f.tv.lane_id, f.tv.speed, next_tv.accel});
        log.vehicles.push_back({t, Role::PV, f.pv.x, f.pv.y, f.pv.lane_id, f.pv.speed, next_pv.accel});

        f.tv = next_tv;
        f.pv = next_pv;
        f.ev.speed = drive.speed();
        f.ev.x = ev_x0 + drive.distance();
        f.ev.accel = ev_a;
    }

    RunResult r{std::move(log), {}};
    r.metrics = compute_metrics(r.log, cfg);
    return r;
}

// ---- comparison

ComparisonReport compare_runs(const RunLog& log_on, const RunMetrics& m_on, const RunLog& log_off,
                              const RunMetrics& m_off)
{
    if (log_on.base_config_hash != log_off.base_config_hash)
        throw InputError("compare_runs: logs come from different base configs");
    if (log_on.timestep != log_off.timestep || log_on.ticks != log_off.ticks)
        throw InputError("compare_runs: logs have different time grids");
    ComparisonReport rep;
    for (Role role : {Role::EV, Role::TV, Role::PV}) {
        for (const char* q : {"accel", "speed"}) {
            for (const RunLog* log : {&log_on, &log_off}) {
                Series s;
                s.role = role;
                s.quantity = q;
                s.prediction_enabled = log == &log_on;
                s.name = std::string(to_string(role)) + " " + q + (s.prediction_enabled ? " ON" : " OFF");
                const double t0 = log->t0();
                for (const auto& row : log->vehicles) {
                    if (row.role != role) continue;
                    s.t.push_back(row.t - t0);
                    s.v.push_back(std::string_view(q) == "accel" ? row.accel : row.speed);
                }
                rep.series.push_back(std::move(s));
            }
        }
    }
    if (log_on.events.prediction_time) rep.prediction_marker = *log_on.events.prediction_time - log_on.t0();
    auto add = [&](const char* name, double on, double off) {
        double delta = on - off;
        if (std::isnan(on) && std::isnan(off)) delta = 0.0;
        rep.deltas.push_back({name, on, off, delta});
    };
    add("anticipation_horizon", m_on.anticipation_horizon, m_off.anticipation_horizon);
    add("tv_min_accel", m_on.tv_min_accel, m_off.tv_min_accel);
    add("ev_stop_time", m_on.ev_stop_time, m_off.ev_stop_time);
    add("min_ttc", m_on.min_ttc, m_off.min_ttc);
    add("collision", m_on.collision ? 1.0 : 0.0, m_off.collision ? 1.0 : 0.0);
    return rep;
}

void ComparisonReport::write_csv(std::ostream& out) const
{
    out << "metric,on,off,delta\n";
    for (const auto& d : deltas)
        out << d.name << ',' << format_double(d.on) << ',' << format_double(d.off) << ',' << format_double(d.delta)
            << '\n';
    out << "\nseries,t,value\n";
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.t.size(); ++i)
            out << s.name << ',' << format_double(s.t[i]) << ',' << format_double(s.v[i]) << '\n';
}

}  // namespace coop
