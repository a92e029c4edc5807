// SPDX-License-Identifier: Apache-2.0
//
// Node runtimes for the three comm roles, the sensor-side feed that drives a
// perception client, and RTT measurement.
//
// Topology (arrows are connect direction; replies travel back the same socket):
//   sensor feed -> perception_client -> [relay ->] prediction_server
#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "coop/inference.hpp"
#include "coop/message.hpp"
#include "coop/net.hpp"
#include "coop/scene.hpp"
#include "coop/semantics.hpp"

namespace coop {

enum class NodeRole : std::uint8_t { perception_client, relay, prediction_server };
std::string_view to_string(NodeRole role);
NodeRole parse_node_role(std::string_view text);

struct TopologyConfig {
    Topology mode = Topology::relay;
    std::optional<Endpoint> client;  // sensor-feed listener of the perception client
    std::optional<Endpoint> relay;
    std::optional<Endpoint> server;

    // Test-only impairment, applied on both directions of a hop.
    double client_relay_delay_ms = 0.0;
    double relay_server_delay_ms = 0.0;
    double client_server_delay_ms = 0.0;  // direct mode
    double drop_prob = 0.0;
    std::uint64_t shaping_seed = 1;

    /// ConfigError unless the endpoints the mode needs are present.
    void validate() const;
    Endpoint listen_endpoint(NodeRole role) const;
    /// nullopt for the server.
    std::optional<Endpoint> upstream_endpoint(NodeRole role) const;
    /// Shaping for frames `role` sends upstream / downstream.
    LinkShaping upstream_shaping(NodeRole role) const;
    LinkShaping downstream_shaping(NodeRole role) const;
};

struct NodeCounters {
    std::atomic<std::uint64_t> received{0};
    std::atomic<std::uint64_t> forwarded{0};
    std::atomic<std::uint64_t> malformed{0};      // payloads rejected by the role logic
    std::atomic<std::uint64_t> decode_errors{0};  // frames rejected by the codec
    std::atomic<std::uint64_t> upstream_down{0};  // messages dropped while reconnecting
    std::atomic<std::uint64_t> reconnects{0};
};

/// FEATURES -> LINGUISTIC as the relay performs it. InputError on malformed
/// features (the caller drops the message).
Message relay_process(const Message& features, const Thresholds& thresholds, const Ontology& ontology,
                      std::uint64_t out_seq, std::int64_t ingress_us);

struct NodeOptions {
    NodeRole role = NodeRole::relay;
    TopologyConfig topology;
    Thresholds thresholds;
    Ontology ontology = Ontology::two_lane();
    Predictor predictor;  // prediction_server only
    std::chrono::milliseconds backoff_min{50};
    std::chrono::milliseconds backoff_max{2000};
};

class Node {
public:
    explicit Node(NodeOptions options);
    ~Node();
    Node(const Node&) = delete;
    Node& operator=(const Node&) = delete;

    /// Binds the listener and starts serving. IoError when the port is taken.
    void start();
    void stop();
    std::uint16_t port() const;
    const NodeCounters& counters() const { return counters_; }

private:
    struct Session;
    void accept_loop();
    void serve(std::shared_ptr<Session> s);
    void upstream_loop(std::shared_ptr<Session> s);
    void handle_downstream(Session& s, const Message& m);

    NodeOptions opt_;
    std::unique_ptr<TcpListener> listener_;
    std::atomic<bool> running_{false};
    std::thread accept_thread_;
    std::mutex sessions_mu_;
    std::vector<std::shared_ptr<Session>> sessions_;
    std::vector<std::thread> threads_;
    NodeCounters counters_;
};

struct TimedPrediction {
    PredictionPayload prediction;
    std::int64_t received_us = 0;  // at the feed

    double one_way_ms() const { return (prediction.server_rx_us - prediction.origin_ts_us) / 1000.0; }
};

/// Connects to a perception client (or any FEATURES consumer), submits
/// numeric frames and collects predictions. Reconnects with bounded
/// exponential backoff.
class SensorFeed {
public:
    SensorFeed(Endpoint peer, int schema_version = 1,
               std::chrono::milliseconds backoff_min = std::chrono::milliseconds(50),
               std::chrono::milliseconds backoff_max = std::chrono::milliseconds(2000));
    ~SensorFeed();
    SensorFeed(const SensorFeed&) = delete;
    SensorFeed& operator=(const SensorFeed&) = delete;

    /// Blocks up to `timeout` for a first connection.
    bool wait_connected(std::chrono::milliseconds timeout);
    /// Round-trips probe frames until the whole path answers. Probe replies never reach next().
    bool wait_ready(std::chrono::milliseconds timeout, int lane_count = 2);
    /// Seq of the FEATURES message, nullopt when the link is down.
    std::optional<std::uint64_t> submit(std::uint64_t frame_id, double t, const NumericFeatures& features);
    /// Next prediction in arrival order.
    std::optional<TimedPrediction> next(std::chrono::milliseconds timeout);
    std::uint64_t reconnects() const { return reconnects_.load(); }

    static constexpr std::uint64_t kProbeFrame = ~std::uint64_t{0};

private:
    void run();

    Endpoint peer_;
    int schema_version_;
    std::chrono::milliseconds backoff_min_, backoff_max_;
    std::atomic<bool> running_{true};
    std::atomic<std::uint64_t> reconnects_{0};
    std::atomic<std::uint64_t> probes_answered_{0};

    std::mutex mu_;
    std::condition_variable cv_;
    std::shared_ptr<FramedConnection> conn_;
    std::deque<TimedPrediction> inbox_;
    std::thread thread_;
};

struct LinkStats {
    std::vector<double> rtt_ms;
    double one_way_ms = 0.0;  // median(rtt) / 2
    std::size_t drops = 0;

    void write_csv(std::ostream& out) const;
};

/// One-way estimate from n ECHO round trips. DomainError for n < 5; a sample
/// without reply inside `timeout` is a drop; LinkUnusable above 50% drops.
LinkStats measure_rtt(const Endpoint& peer, std::size_t n,
                      std::chrono::milliseconds timeout = std::chrono::milliseconds(1000), LinkShaping shaping = {});
/// Same, over an existing connection whose reader is the caller.
LinkStats measure_rtt(FramedConnection& conn, std::size_t n, std::chrono::milliseconds timeout);

}  // namespace coop
