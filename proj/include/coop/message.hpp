// SPDX-License-Identifier: Apache-2.0
//
// Wire messages and the length-prefixed JSON frame codec.
//
// Frame: u32 big-endian body length, then a UTF-8 JSON object
// {"type", "seq", "ts_us", "payload"}. Bodies above 1 MiB are refused.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "coop/inference.hpp"
#include "coop/semantics.hpp"

namespace coop {

inline constexpr std::size_t kMaxFrameBody = 1u << 20;
inline constexpr std::size_t kFrameHeaderSize = 4;

enum class MessageType : std::uint8_t { HELLO, FEATURES, LINGUISTIC, PREDICTION, ECHO, ECHO_REPLY };
std::string_view to_string(MessageType t);
MessageType parse_message_type(std::string_view text);  // DecodeError when unknown

struct HelloPayload {
    std::string role;  // empty encodes as {}

    friend bool operator==(const HelloPayload&, const HelloPayload&) = default;
};

/// Numeric features from a perception client. Version 1 is flat, version 2
/// groups the same values; both carry identical information.
struct FeaturesPayload {
    int schema_version = 1;
    std::uint64_t frame_id = 0;
    double t = 0.0;  // capture time on the sender's scenario clock, s
    std::int64_t origin_ts_us = 0;
    NumericFeatures features;

    friend bool operator==(const FeaturesPayload&, const FeaturesPayload&) = default;
};

struct LinguisticPayload {
    std::uint64_t frame_id = 0;
    double t = 0.0;
    std::vector<std::string> labels;  // ontology order
    std::int64_t origin_ts_us = 0;
    std::int64_t relay_ingress_us = 0;  // 0 on the direct path
    std::int64_t relay_egress_us = 0;

    friend bool operator==(const LinguisticPayload&, const LinguisticPayload&) = default;
};

struct PredictionPayload {
    std::uint64_t request_seq = 0;  // seq of the LINGUISTIC message answered
    std::uint64_t frame_id = 0;
    double t = 0.0;
    Maneuver maneuver = Maneuver::laneKeep;
    Probabilities posterior{};
    std::int64_t origin_ts_us = 0;
    std::int64_t relay_ingress_us = 0;
    std::int64_t relay_egress_us = 0;
    std::int64_t server_rx_us = 0;

    friend bool operator==(const PredictionPayload&, const PredictionPayload&) = default;
};

struct EchoPayload {
    friend bool operator==(const EchoPayload&, const EchoPayload&) = default;
};

struct EchoReplyPayload {
    std::uint64_t echo_seq = 0;
    std::int64_t echo_ts_us = 0;

    friend bool operator==(const EchoReplyPayload&, const EchoReplyPayload&) = default;
};

using Payload = std::variant<HelloPayload, FeaturesPayload, LinguisticPayload, PredictionPayload, EchoPayload,
                             EchoReplyPayload>;

struct Message {
    MessageType type = MessageType::HELLO;
    std::uint64_t seq = 0;
    std::int64_t ts_us = 0;
    Payload payload;

    friend bool operator==(const Message&, const Message&) = default;
};

/// Builds a message whose type matches the payload alternative.
Message make_message(std::uint64_t seq, std::int64_t ts_us, Payload payload);
MessageType type_of(const Payload& payload);

/// Frame bytes. InputError when the payload does not match the type or holds NaN;
/// FrameTooLarge when the body exceeds the cap.
std::string frame_encode(const Message& msg);
/// One complete frame. FrameTooLarge on an oversized declared length, DecodeError otherwise.
Message frame_decode(std::string_view bytes);

/// Body length from a 4-byte header; FrameTooLarge above the cap.
std::size_t frame_body_length(std::string_view header);
Message decode_body(std::string_view body);

/// Microseconds on the host monotonic clock.
std::int64_t monotonic_us();

}  // namespace coop
