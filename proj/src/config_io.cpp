// SPDX-License-Identifier: Apache-2.0
#include <istream>
#include <ostream>
#include <set>

#include <json.hpp>

#include "coop/errors.hpp"
#include "coop/sim.hpp"

namespace coop {

namespace {

using nlohmann::json;

struct DoubleField {
    const char* key;
    double ScenarioConfig::* member;
};

const DoubleField kDoubles[] = {
    {"ev_cruise_speed", &ScenarioConfig::ev_cruise_speed},
    {"tv_pv_cruise_speed", &ScenarioConfig::tv_pv_cruise_speed},
    {"pv_brake_time", &ScenarioConfig::pv_brake_time},
    {"pv_brake_decel", &ScenarioConfig::pv_brake_decel},
    {"timestep", &ScenarioConfig::timestep},
    {"duration", &ScenarioConfig::duration},
    {"driver_accel_limit", &ScenarioConfig::driver_accel_limit},
    {"driver_speed_gain", &ScenarioConfig::driver_speed_gain},
    {"driver_speed_noise", &ScenarioConfig::driver_speed_noise},
    {"driver_noise_time", &ScenarioConfig::driver_noise_time},
    {"tv_lane_change_duration", &ScenarioConfig::tv_lane_change_duration},
    {"tv_gap_acceptance", &ScenarioConfig::tv_gap_acceptance},
    {"tv_harsh_brake_decel", &ScenarioConfig::tv_harsh_brake_decel},
    {"relay_latency_ms", &ScenarioConfig::relay_latency_ms},
    {"direct_latency_ms", &ScenarioConfig::direct_latency_ms},
    {"staleness_window", &ScenarioConfig::staleness_window},
    {"surround_range_noise", &ScenarioConfig::surround_range_noise},
    {"imu_noise", &ScenarioConfig::imu_noise},
};

json vehicle_json(const InitialState& s)
{
    return {{"x", s.x}, {"lane", s.lane}, {"speed", s.speed}};
}

void check_keys(const json& j, std::set<std::string> allowed, const std::string& where)
{
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
}

InitialState vehicle_from(const json& j, InitialState s, const std::string& where)
{
    check_keys(j, {"x", "lane", "speed"}, where);
    if (j.contains("x")) s.x = j.at("x").get<double>();
    if (j.contains("lane")) s.lane = j.at("lane").get<int>();
    if (j.contains("speed")) s.speed = j.at("speed").get<double>();
    return s;
}

}  // namespace

void scenario_to_json(const ScenarioConfig& cfg, std::ostream& out)
{
    json j;
    j["lanes"] = {{"lane_count", cfg.lanes.lane_count},
                  {"lane_width", cfg.lanes.lane_width},
                  {"track_length", cfg.lanes.track_length}};
    j["ev"] = vehicle_json(cfg.ev);
    j["tv"] = vehicle_json(cfg.tv);
    j["pv"] = vehicle_json(cfg.pv);
    j["prediction_enabled"] = cfg.prediction_enabled;
    j["pipeline_variant"] = std::string(to_string(cfg.pipeline_variant));
    j["topology"] = std::string(to_string(cfg.topology));
    j["rng_seed"] = cfg.rng_seed;
    for (const auto& f : kDoubles) j[f.key] = cfg.*f.member;
    out << j.dump(2) << '\n';
}

ScenarioConfig scenario_from_json(std::istream& in)
{
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("scenario config is not valid JSON: ") + e.what());
    }
    ScenarioConfig cfg;
    std::set<std::string> allowed{"lanes",    "ev",      "tv", "pv", "prediction_enabled", "pipeline_variant",
                                  "topology", "rng_seed"};
    for (const auto& f : kDoubles) allowed.insert(f.key);
    check_keys(j, allowed, "scenario config");
    try {
        if (j.contains("lanes")) {
            const auto& l = j.at("lanes");
            check_keys(l, {"lane_count", "lane_width", "track_length"}, "lanes");
            if (l.contains("lane_count")) cfg.lanes.lane_count = l.at("lane_count").get<int>();
            if (l.contains("lane_width")) cfg.lanes.lane_width = l.at("lane_width").get<double>();
            if (l.contains("track_length")) cfg.lanes.track_length = l.at("track_length").get<double>();
        }
        if (j.contains("ev")) cfg.ev = vehicle_from(j.at("ev"), cfg.ev, "ev");
        if (j.contains("tv")) cfg.tv = vehicle_from(j.at("tv"), cfg.tv, "tv");
        if (j.contains("pv")) cfg.pv = vehicle_from(j.at("pv"), cfg.pv, "pv");
        if (j.contains("prediction_enabled")) cfg.prediction_enabled = j.at("prediction_enabled").get<bool>();
        if (j.contains("pipeline_variant"))
            cfg.pipeline_variant = parse_pipeline_variant(j.at("pipeline_variant").get<std::string>());
        if (j.contains("topology")) cfg.topology = parse_topology(j.at("topology").get<std::string>());
        if (j.contains("rng_seed")) cfg.rng_seed = j.at("rng_seed").get<std::uint64_t>();
        for (const auto& f : kDoubles)
            if (j.contains(f.key)) cfg.*f.member = j.at(f.key).get<double>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad scenario config value: ") + e.what());
    } catch (const InputError& e) {
        throw ConfigError(e.what());
    }
    cfg.validate();
    return cfg;
}

}  // namespace coop
