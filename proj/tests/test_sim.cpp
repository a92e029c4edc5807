// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "coop/errors.hpp"
#include "coop/nodes.hpp"
#include "coop/sim.hpp"

using namespace coop;
using namespace std::chrono_literals;

namespace {

const PredictionStack& stack()
{
    static const PredictionStack s = build_prediction_stack(2);
    return s;
}

RunResult run(std::uint64_t seed, bool prediction)
{
    ScenarioConfig cfg;
    cfg.rng_seed = seed;
    cfg.prediction_enabled = prediction;
    return run_scenario(cfg, prediction ? &stack() : nullptr);
}

std::string csv_of(const RunLog& log)
{
    std::stringstream ss;
    write_runlog_csv(log, ss);
    return ss.str();
}

}  // namespace

TEST_CASE("drivers")
{
    ScenarioConfig cfg;
    LaneGeometry lanes;
    auto pv = make_vehicle(2, Role::PV, 20, 0, 2.0, lanes);
    CHECK(pv_driver(1.0, pv, cfg) == doctest::Approx(0.5));
    CHECK(pv_driver(12.5, pv, cfg) == cfg.pv_brake_decel);
    pv.speed = 0.0;
    CHECK(pv_driver(12.5, pv, cfg) == 0.0);
    CHECK(cruise_accel(0.0, 2.5, cfg) == cfg.driver_accel_limit);

    auto tv = make_vehicle(1, Role::TV, 0, 0, 2.5, lanes);
    auto d = tv_driver(5.0, tv, TvMode::cruise, std::uint8_t{2}, std::nullopt, cfg);
    CHECK_FALSE(d.trigger_lane_change);
    CHECK_FALSE(d.trigger_harsh_brake);
    d = tv_driver(5.0, tv, TvMode::cruise, std::uint8_t{0}, 10.0, cfg);
    CHECK(d.trigger_lane_change);
    d = tv_driver(5.0, tv, TvMode::cruise, std::uint8_t{0}, 1.0, cfg);
    CHECK(d.trigger_harsh_brake);
    CHECK(d.accel == cfg.tv_harsh_brake_decel);
    d = tv_driver(5.0, tv, TvMode::cruise, std::uint8_t{0}, std::nullopt, cfg);
    CHECK(d.trigger_lane_change);
    tv.speed = 0.0;
    CHECK(tv_driver(5.0, tv, TvMode::harsh_brake, std::nullopt, std::nullopt, cfg).accel == 0.0);
}

TEST_CASE("projected merge gap")
{
    LaneGeometry lanes;
    const auto tv = make_vehicle(1, Role::TV, 0, 0, 2.0, lanes);
    auto ev = make_vehicle(0, Role::EV, 10, 1, 1.0, lanes);
    // 10 - 1.5 - 0.6 = 7.9 now; after 1.5 s the EV gains 1.5 m and the TV 3 m
    CHECK(*projected_merge_gap(tv, ev, 3.0) == doctest::Approx(7.9 + 1.5 - 3.0));
    ev.accel = -1.0;
    // stops after 1 s having covered 0.5 m
    CHECK(*projected_merge_gap(tv, ev, 3.0) == doctest::Approx(7.9 + 0.5 - 3.0));
    ev.lane_id = 0;
    CHECK_FALSE(projected_merge_gap(tv, ev, 3.0));
}

TEST_CASE("runs are reproducible to the byte")
{
    const auto a = run(7, true);
    const auto b = run(7, true);
    CHECK(a.log == b.log);
    CHECK(csv_of(a.log) == csv_of(b.log));
    const auto c = run(8, true);
    CHECK_FALSE(csv_of(a.log) == csv_of(c.log));
}

TEST_CASE("no negative speed and a row per vehicle per tick")
{
    for (bool on : {true, false}) {
        const auto r = run(3, on);
        CHECK(r.log.vehicles.size() == r.log.ticks * 3);
        for (const auto& v : r.log.vehicles) CHECK(v.speed >= 0.0);
        CHECK(r.log.control.size() == r.log.ticks);
    }
}

TEST_CASE("prediction on yields and prediction off brakes")
{
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto on = run(seed, true);
        const auto off = run(seed, false);
        CHECK_FALSE(on.metrics.collision);
        REQUIRE(on.log.events.prediction_time);
        REQUIRE(on.log.events.crossing_time);
        CHECK(on.metrics.anticipation_horizon >= 3.0);
        CHECK(on.metrics.anticipation_horizon ==
              doctest::Approx(*on.log.events.crossing_time - *on.log.events.prediction_time));
        CHECK(std::abs(on.metrics.tv_min_accel) < 0.5 * std::abs(off.metrics.tv_min_accel));
        REQUIRE(off.log.events.harsh_brake_time);
        CHECK((!off.log.events.crossing_time || *off.log.events.crossing_time > *off.log.events.harsh_brake_time));

        double prev = INFINITY;
        for (const auto& v : on.log.vehicles) {
            if (v.role != Role::EV || v.t < *on.log.events.prediction_time) continue;
            CHECK(v.speed <= prev);
            prev = v.speed;
        }
        CHECK(prev == 0.0);
    }
}

TEST_CASE("metrics are computed from the log")
{
    const auto r = run(2, false);
    ScenarioConfig cfg;
    cfg.rng_seed = 2;
    cfg.prediction_enabled = false;
    double min_acc = INFINITY;
    for (const auto& v : r.log.vehicles)
        if (v.role == Role::TV) min_acc = std::min(min_acc, v.accel);
    CHECK(r.metrics.tv_min_accel == min_acc);
    CHECK(std::isnan(r.metrics.anticipation_horizon));
    const auto again = compute_metrics(r.log, cfg);
    CHECK(again.tv_min_accel == r.metrics.tv_min_accel);
    CHECK(again.collision == r.metrics.collision);
}

TEST_CASE("run log CSV round trip is exact")
{
    for (bool on : {true, false}) {
        const auto r = run(4, on);
        const auto text = csv_of(r.log);
        std::stringstream in(text);
        const auto back = read_runlog_csv(in);
        CHECK(back == r.log);
        CHECK(csv_of(back) == text);
        CHECK(text.rfind("# coop-runlog 1\n", 0) == 0);
    }
    std::stringstream bad("# coop-runlog 1\nvehicle,1,2\n");
    CHECK_THROWS_AS(read_runlog_csv(bad), InputError);
}

TEST_CASE("run log SVG marks the crossing and the prediction")
{
    const auto r = run(5, true);
    std::stringstream ss;
    write_runlog_svg(r.log, ss);
    const auto svg = ss.str();
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("id=\"crossing\"") != std::string::npos);
    CHECK(svg.find("id=\"prediction\"") != std::string::npos);
}

TEST_CASE("export errors")
{
    const auto r = run(5, true);
    CHECK_THROWS_AS(export_runlog(r.log, "/tmp/x.pdf", "pdf"), ConfigError);
    CHECK_THROWS_AS(export_runlog(RunLog{}, "/tmp/x.csv", "csv"), InputError);
    CHECK_THROWS_AS(export_runlog(r.log, "/nonexistent-dir/x.csv", "csv"), IoError);
}

TEST_CASE("comparison of identical runs has zero deltas")
{
    const auto r = run(6, true);
    const auto rep = compare_runs(r.log, r.metrics, r.log, r.metrics);
    for (const auto& d : rep.deltas) {
        CHECK(std::isfinite(d.delta));
        CHECK(d.delta == 0.0);
    }
    CHECK(rep.series.size() == 12);
    for (Role role : {Role::EV, Role::TV, Role::PV}) {
        int accel = 0, speed = 0;
        for (const auto& s : rep.series)
            if (s.role == role) (s.quantity == "accel" ? accel : speed)++;
        CHECK(accel == 2);
        CHECK(speed == 2);
    }
}

TEST_CASE("comparison of ON and OFF")
{
    const auto on = run(6, true);
    const auto off = run(6, false);
    CHECK(on.log.base_config_hash == off.log.base_config_hash);
    const auto rep = compare_runs(on.log, on.metrics, off.log, off.metrics);
    REQUIRE(rep.prediction_marker);
    CHECK(*rep.prediction_marker < 0.0);
    std::stringstream svg;
    rep.write_svg(svg);
    CHECK(svg.str().find("id=\"crossing-TV-accel\"") != std::string::npos);
    std::stringstream csv;
    rep.write_csv(csv);
    CHECK(csv.str().rfind("metric,on,off,delta", 0) == 0);

    const auto other = run(7, false);
    CHECK_THROWS_AS(compare_runs(on.log, on.metrics, other.log, other.metrics), InputError);
}

TEST_CASE("config JSON round trip")
{
    ScenarioConfig cfg;
    cfg.rng_seed = 99;
    cfg.pv_brake_time = 11.5;
    cfg.topology = Topology::direct;
    cfg.pipeline_variant = PipelineVariant::P1;
    cfg.ev.x = 13.0;
    std::stringstream ss;
    scenario_to_json(cfg, ss);
    const auto back = scenario_from_json(ss);
    CHECK(back.rng_seed == 99);
    CHECK(back.pv_brake_time == 11.5);
    CHECK(back.topology == Topology::direct);
    CHECK(back.pipeline_variant == PipelineVariant::P1);
    CHECK(back.ev.x == 13.0);
    CHECK(base_config_hash(back) == base_config_hash(cfg));

    auto flipped = cfg;
    flipped.prediction_enabled = !cfg.prediction_enabled;
    CHECK(base_config_hash(flipped) == base_config_hash(cfg));
    flipped.rng_seed = 100;
    CHECK(base_config_hash(flipped) != base_config_hash(cfg));

    std::stringstream unknown(R"({"warp_speed": 9})");
    CHECK_THROWS_AS(scenario_from_json(unknown), ConfigError);
    std::stringstream bad_type(R"({"timestep": "fast"})");
    CHECK_THROWS_AS(scenario_from_json(bad_type), ConfigError);
    std::stringstream invalid(R"({"timestep": -1})");
    CHECK_THROWS_AS(scenario_from_json(invalid), ConfigError);
    std::stringstream partial(R"({"lanes": {"lane_count": 3}, "tv": {"x": 1.5}})");
    const auto p = scenario_from_json(partial);
    CHECK(p.lanes.lane_count == 3);
    CHECK(p.tv.x == 1.5);
    CHECK(p.tv.lane == 0);
}

TEST_CASE("prediction on without a stack is refused")
{
    ScenarioConfig cfg;
    CHECK_THROWS_AS(run_scenario(cfg, nullptr), ConfigError);
}

TEST_CASE("networked mode matches in-process within a tick")
{
    TopologyConfig topo;
    topo.mode = Topology::relay;
    topo.client = Endpoint{"127.0.0.1", 0};
    topo.relay = Endpoint{"127.0.0.1", 0};
    topo.server = Endpoint{"127.0.0.1", 0};
    NodeOptions so;
    so.role = NodeRole::prediction_server;
    so.topology = topo;
    so.predictor = stack().predictor();
    so.thresholds = stack().thresholds;
    Node server(so);
    server.start();
    topo.server->port = server.port();
    NodeOptions ro = so;
    ro.role = NodeRole::relay;
    ro.topology = topo;
    Node relay(ro);
    relay.start();
    topo.relay->port = relay.port();
    NodeOptions co = ro;
    co.role = NodeRole::perception_client;
    co.topology = topo;
    Node client(co);
    client.start();

    ScenarioConfig cfg;
    cfg.rng_seed = 3;
    const auto local = run_scenario(cfg, &stack());
    NetworkedRun net{Endpoint{"127.0.0.1", client.port()}};
    const auto remote = run_scenario(cfg, &stack(), &net);
    CHECK(remote.metrics.collision == local.metrics.collision);
    CHECK(std::abs(remote.metrics.anticipation_horizon - local.metrics.anticipation_horizon) <= cfg.timestep + 1e-9);
    CHECK(std::abs(remote.metrics.ev_stop_time - local.metrics.ev_stop_time) <= cfg.timestep + 1e-9);
    CHECK(remote.metrics.tv_min_accel == doctest::Approx(local.metrics.tv_min_accel).epsilon(0.05));
}
