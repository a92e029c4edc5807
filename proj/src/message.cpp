// SPDX-License-Identifier: Apache-2.0
#include "coop/message.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "coop/errors.hpp"

namespace coop {

namespace {

using json = nlohmann::json;

constexpr double kInf = std::numeric_limits<double>::infinity();

constexpr std::array<std::string_view, 6> kTypeNames{"HELLO", "FEATURES", "LINGUISTIC", "PREDICTION", "ECHO",
                                                     "ECHO_REPLY"};

// ---- encode helpers

json finite(double v, const char* what)
{
    if (!std::isfinite(v)) throw InputError(std::string("non-finite value in ") + what);
    return v;
}

// +inf travels as null
json nullable(double v, const char* what)
{
    if (std::isnan(v)) throw InputError(std::string("NaN in ") + what);
    if (v == kInf) return nullptr;
    if (!std::isfinite(v)) throw InputError(std::string("-inf in ") + what);
    return v;
}

json optional_array(const std::array<std::optional<double>, 3>& a, const char* what)
{
    json out = json::array();
    for (const auto& x : a) out.push_back(x ? finite(*x, what) : json(nullptr));
    return out;
}

json encode_features(const FeaturesPayload& p)
{
    const auto& f = p.features;
    json j;
    j["schema_version"] = p.schema_version;
    j["frame_id"] = p.frame_id;
    j["t"] = finite(p.t, "t");
    j["origin_ts_us"] = p.origin_ts_us;
    if (p.schema_version == 1) {
        j["lateral_velocity"] = finite(f.lateral_velocity, "lateral_velocity");
        j["lateral_acceleration"] = finite(f.lateral_acceleration, "lateral_acceleration");
        j["ttc_preceding"] = nullable(f.ttc_preceding, "ttc_preceding");
        j["ttc_left_preceding"] = nullable(f.ttc_left_preceding, "ttc_left_preceding");
        j["ttc_right_preceding"] = nullable(f.ttc_right_preceding, "ttc_right_preceding");
        j["ttc_left_following"] = nullable(f.ttc_left_following, "ttc_left_following");
        j["ttc_right_following"] = nullable(f.ttc_right_following, "ttc_right_following");
        j["lane_index"] = f.lane_index;
        j["lane_count"] = f.lane_count;
        j["lane_offset"] = finite(f.lane_offset, "lane_offset");
        j["lane_width"] = finite(f.lane_width, "lane_width");
        j["thw_preceding"] = nullable(f.thw_preceding, "thw_preceding");
        j["frontal_gap"] = optional_array(f.frontal_gap, "frontal_gap");
        j["lane_mean_speed"] = optional_array(f.lane_mean_speed, "lane_mean_speed");
    } else if (p.schema_version == 2) {
        j["kinematics"] = {{"lat_vel", finite(f.lateral_velocity, "lat_vel")},
                           {"lat_acc", finite(f.lateral_acceleration, "lat_acc")}};
        j["risk"] = {{"ttc",
                      {{"preceding", nullable(f.ttc_preceding, "ttc")},
                       {"left_preceding", nullable(f.ttc_left_preceding, "ttc")},
                       {"right_preceding", nullable(f.ttc_right_preceding, "ttc")},
                       {"left_following", nullable(f.ttc_left_following, "ttc")},
                       {"right_following", nullable(f.ttc_right_following, "ttc")}}},
                     {"thw_preceding", nullable(f.thw_preceding, "thw")}};
        j["lane"] = {{"index", f.lane_index},
                     {"count", f.lane_count},
                     {"offset", finite(f.lane_offset, "offset")},
                     {"width", finite(f.lane_width, "width")}};
        json s;
        const char* names[3] = {"left", "current", "right"};
        for (int i = 0; i < 3; ++i) {
            s[names[i]] = {{"gap", f.frontal_gap[i] ? finite(*f.frontal_gap[i], "gap") : json(nullptr)},
                           {"speed", f.lane_mean_speed[i] ? finite(*f.lane_mean_speed[i], "speed") : json(nullptr)}};
        }
        j["surround"] = s;
    } else {
        throw InputError("unsupported FEATURES schema version " + std::to_string(p.schema_version));
    }
    return j;
}

json encode_payload(const Payload& payload)
{
    return std::visit(
        [](const auto& p) -> json {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, HelloPayload>) {
                json j = json::object();
                if (!p.role.empty()) j["role"] = p.role;
                return j;
            } else if constexpr (std::is_same_v<T, FeaturesPayload>) {
                return encode_features(p);
            } else if constexpr (std::is_same_v<T, LinguisticPayload>) {
                return {{"frame_id", p.frame_id},
                        {"t", finite(p.t, "t")},
                        {"labels", p.labels},
                        {"origin_ts_us", p.origin_ts_us},
                        {"relay_ingress_us", p.relay_ingress_us},
                        {"relay_egress_us", p.relay_egress_us}};
            } else if constexpr (std::is_same_v<T, PredictionPayload>) {
                json post = json::array();
                for (double x : p.posterior) post.push_back(finite(x, "posterior"));
                return {{"request_seq", p.request_seq},
                        {"frame_id", p.frame_id},
                        {"t", finite(p.t, "t")},
                        {"maneuver", std::string(to_string(p.maneuver))},
                        {"posterior", post},
                        {"origin_ts_us", p.origin_ts_us},
                        {"relay_ingress_us", p.relay_ingress_us},
                        {"relay_egress_us", p.relay_egress_us},
                        {"server_rx_us", p.server_rx_us}};
            } else if constexpr (std::is_same_v<T, EchoPayload>) {
                return json::object();
            } else {
                return {{"echo_seq", p.echo_seq}, {"echo_ts_us", p.echo_ts_us}};
            }
        },
        payload);
}

// ---- decode helpers; every failure is a DecodeError

[[noreturn]] void bad(const std::string& what) { throw DecodeError(what); }

const json& field(const json& j, const char* key)
{
    if (!j.is_object()) bad("expected an object");
    auto it = j.find(key);
    if (it == j.end()) bad(std::string("missing field '") + key + "'");
    return *it;
}

std::uint64_t u64(const json& j, const char* key)
{
    const auto& v = field(j, key);
    if (!v.is_number_unsigned()) bad(std::string("field '") + key + "' must be a non-negative integer");
    return v.get<std::uint64_t>();
}

std::int64_t i64(const json& j, const char* key)
{
    const auto& v = field(j, key);
    if (v.is_number_unsigned()) {
        const auto u = v.get<std::uint64_t>();
        if (u > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()))
            bad(std::string("field '") + key + "' out of range");
        return static_cast<std::int64_t>(u);
    }
    if (!v.is_number_integer()) bad(std::string("field '") + key + "' must be an integer");
    return v.get<std::int64_t>();
}

int small_int(const json& j, const char* key)
{
    const auto v = i64(j, key);
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
        bad(std::string("field '") + key + "' out of range");
    return static_cast<int>(v);
}

double num(const json& v, const char* key)
{
    if (!v.is_number()) bad(std::string("field '") + key + "' must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) bad(std::string("field '") + key + "' must be finite");
    return d;
}

double num(const json& j, const char* key, bool) { return num(field(j, key), key); }

double nullable_num(const json& j, const char* key)
{
    const auto& v = field(j, key);
    if (v.is_null()) return kInf;
    return num(v, key);
}

std::optional<double> opt_num(const json& v, const char* key)
{
    if (v.is_null()) return std::nullopt;
    return num(v, key);
}

std::string str(const json& j, const char* key)
{
    const auto& v = field(j, key);
    if (!v.is_string()) bad(std::string("field '") + key + "' must be a string");
    return v.get<std::string>();
}

FeaturesPayload decode_features(const json& j)
{
    FeaturesPayload p;
    p.schema_version = small_int(j, "schema_version");
    p.frame_id = u64(j, "frame_id");
    p.t = num(j, "t", true);
    p.origin_ts_us = i64(j, "origin_ts_us");
    auto& f = p.features;
    if (p.schema_version == 1) {
        f.lateral_velocity = num(j, "lateral_velocity", true);
        f.lateral_acceleration = num(j, "lateral_acceleration", true);
        f.ttc_preceding = nullable_num(j, "ttc_preceding");
        f.ttc_left_preceding = nullable_num(j, "ttc_left_preceding");
        f.ttc_right_preceding = nullable_num(j, "ttc_right_preceding");
        f.ttc_left_following = nullable_num(j, "ttc_left_following");
        f.ttc_right_following = nullable_num(j, "ttc_right_following");
        f.lane_index = small_int(j, "lane_index");
        f.lane_count = small_int(j, "lane_count");
        f.lane_offset = num(j, "lane_offset", true);
        f.lane_width = num(j, "lane_width", true);
        f.thw_preceding = nullable_num(j, "thw_preceding");
        const auto& gaps = field(j, "frontal_gap");
        const auto& speeds = field(j, "lane_mean_speed");
        if (!gaps.is_array() || gaps.size() != 3 || !speeds.is_array() || speeds.size() != 3)
            bad("frontal_gap and lane_mean_speed need three entries");
        for (std::size_t i = 0; i < 3; ++i) {
            f.frontal_gap[i] = opt_num(gaps[i], "frontal_gap");
            f.lane_mean_speed[i] = opt_num(speeds[i], "lane_mean_speed");
        }
    } else if (p.schema_version == 2) {
        const auto& kin = field(j, "kinematics");
        f.lateral_velocity = num(kin, "lat_vel", true);
        f.lateral_acceleration = num(kin, "lat_acc", true);
        const auto& risk = field(j, "risk");
        const auto& ttc = field(risk, "ttc");
        f.ttc_preceding = nullable_num(ttc, "preceding");
        f.ttc_left_preceding = nullable_num(ttc, "left_preceding");
        f.ttc_right_preceding = nullable_num(ttc, "right_preceding");
        f.ttc_left_following = nullable_num(ttc, "left_following");
        f.ttc_right_following = nullable_num(ttc, "right_following");
        f.thw_preceding = nullable_num(risk, "thw_preceding");
        const auto& lane = field(j, "lane");
        f.lane_index = small_int(lane, "index");
        f.lane_count = small_int(lane, "count");
        f.lane_offset = num(lane, "offset", true);
        f.lane_width = num(lane, "width", true);
        const auto& s = field(j, "surround");
        const char* names[3] = {"left", "current", "right"};
        for (int i = 0; i < 3; ++i) {
            const auto& side = field(s, names[i]);
            f.frontal_gap[i] = opt_num(field(side, "gap"), "gap");
            f.lane_mean_speed[i] = opt_num(field(side, "speed"), "speed");
        }
    } else {
        bad("unsupported FEATURES schema version");
    }
    return p;
}

Payload decode_payload(MessageType type, const json& j)
{
    if (!j.is_object()) bad("payload must be an object");
    switch (type) {
    case MessageType::HELLO: {
        HelloPayload p;
        if (j.contains("role")) p.role = str(j, "role");
        return p;
    }
    case MessageType::FEATURES: return decode_features(j);
    case MessageType::LINGUISTIC: {
        LinguisticPayload p;
        p.frame_id = u64(j, "frame_id");
        p.t = num(j, "t", true);
        const auto& labels = field(j, "labels");
        if (!labels.is_array() || labels.size() != kFeatureCount) bad("labels must hold 12 strings");
        for (const auto& l : labels) {
            if (!l.is_string()) bad("labels must hold 12 strings");
            p.labels.push_back(l.get<std::string>());
        }
        p.origin_ts_us = i64(j, "origin_ts_us");
        p.relay_ingress_us = i64(j, "relay_ingress_us");
        p.relay_egress_us = i64(j, "relay_egress_us");
        return p;
    }
    case MessageType::PREDICTION: {
        PredictionPayload p;
        p.request_seq = u64(j, "request_seq");
        p.frame_id = u64(j, "frame_id");
        p.t = num(j, "t", true);
        try {
            p.maneuver = parse_maneuver(str(j, "maneuver"));
        } catch (const VocabularyError&) {
            bad("unknown maneuver");
        }
        const auto& post = field(j, "posterior");
        if (!post.is_array() || post.size() != kManeuverCount) bad("posterior must hold 3 numbers");
        for (std::size_t i = 0; i < kManeuverCount; ++i) p.posterior[i] = num(post[i], "posterior");
        p.origin_ts_us = i64(j, "origin_ts_us");
        p.relay_ingress_us = i64(j, "relay_ingress_us");
        p.relay_egress_us = i64(j, "relay_egress_us");
        p.server_rx_us = i64(j, "server_rx_us");
        return p;
    }
    case MessageType::ECHO: return EchoPayload{};
    case MessageType::ECHO_REPLY: {
        EchoReplyPayload p;
        p.echo_seq = u64(j, "echo_seq");
        p.echo_ts_us = i64(j, "echo_ts_us");
        return p;
    }
    }
    bad("unknown message type");
}

}  // namespace

std::string_view to_string(MessageType t) { return kTypeNames[static_cast<std::size_t>(t)]; }

MessageType parse_message_type(std::string_view text)
{
    for (std::size_t i = 0; i < kTypeNames.size(); ++i)
        if (kTypeNames[i] == text) return static_cast<MessageType>(i);
    throw DecodeError("unknown message type: " + std::string(text));
}

MessageType type_of(const Payload& payload) { return static_cast<MessageType>(payload.index()); }

Message make_message(std::uint64_t seq, std::int64_t ts_us, Payload payload)
{
    const auto type = type_of(payload);
    return {type, seq, ts_us, std::move(payload)};
}

std::string frame_encode(const Message& msg)
{
    if (type_of(msg.payload) != msg.type) throw InputError("message type does not match its payload");
    json j;
    j["type"] = std::string(to_string(msg.type));
    j["seq"] = msg.seq;
    j["ts_us"] = msg.ts_us;
    j["payload"] = encode_payload(msg.payload);
    std::string body;
    try {
        body = j.dump();
    } catch (const json::exception& e) {
        throw InputError(std::string("cannot encode message: ") + e.what());
    }
    if (body.size() > kMaxFrameBody) throw FrameTooLarge("encoded body exceeds 1 MiB");
    std::string out;
    out.reserve(kFrameHeaderSize + body.size());
    const auto n = static_cast<std::uint32_t>(body.size());
    out.push_back(static_cast<char>((n >> 24) & 0xFF));
    out.push_back(static_cast<char>((n >> 16) & 0xFF));
    out.push_back(static_cast<char>((n >> 8) & 0xFF));
    out.push_back(static_cast<char>(n & 0xFF));
    out += body;
    return out;
}

std::size_t frame_body_length(std::string_view header)
{
    if (header.size() < kFrameHeaderSize) throw DecodeError("frame header truncated");
    const auto b = [&](std::size_t i) { return static_cast<std::uint32_t>(static_cast<unsigned char>(header[i])); };
    const std::uint32_t n = (b(0) << 24) | (b(1) << 16) | (b(2) << 8) | b(3);
    if (n > kMaxFrameBody) throw FrameTooLarge("declared frame length " + std::to_string(n) + " exceeds 1 MiB");
    return n;
}

Message decode_body(std::string_view body)
{
    json j;
    try {
        j = json::parse(body.begin(), body.end());
    } catch (const json::exception& e) {
        throw DecodeError(std::string("malformed JSON body: ") + e.what());
    }
    try {
        if (!j.is_object()) bad("body must be a JSON object");
        Message m;
        m.type = parse_message_type(str(j, "type"));
        m.seq = u64(j, "seq");
        m.ts_us = i64(j, "ts_us");
        m.payload = decode_payload(m.type, field(j, "payload"));
        return m;
    } catch (const json::exception& e) {
        throw DecodeError(std::string("malformed message: ") + e.what());
    }
}

Message frame_decode(std::string_view bytes)
{
    const std::size_t n = frame_body_length(bytes);
    if (bytes.size() - kFrameHeaderSize != n) throw DecodeError("frame length does not match the data");
    return decode_body(bytes.substr(kFrameHeaderSize));
}

std::int64_t monotonic_us()
{
    using namespace std::chrono;
    return duration_cast<microseconds>(steady_clock::now().time_since_epoch()).count();
}

}  // namespace coop
