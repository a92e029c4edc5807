// SPDX-License-Identifier: Apache-2.0
#include "coop/nodes.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <unordered_map>

#include "coop/errors.hpp"
#include "coop/numfmt.hpp"

namespace coop {

namespace {

using Clock = std::chrono::steady_clock;
using std::chrono::milliseconds;

LinkShaping shaped(double delay_ms, double drop, std::uint64_t seed)
{
    return LinkShaping{delay_ms, drop, seed};
}

// Sleeps in short slices so shutdown is not held up by a long backoff.
void backoff_sleep(milliseconds d, const std::atomic<bool>& keep_going)
{
    auto until = Clock::now() + d;
    while (keep_going && Clock::now() < until) std::this_thread::sleep_for(milliseconds(5));
}

double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::string_view to_string(NodeRole role)
{
    switch (role) {
    case NodeRole::perception_client: return "perception_client";
    case NodeRole::relay: return "relay";
    case NodeRole::prediction_server: return "prediction_server";
    }
    return "?";
}

NodeRole parse_node_role(std::string_view text)
{
    if (text == "perception_client" || text == "client") return NodeRole::perception_client;
    if (text == "relay") return NodeRole::relay;
    if (text == "prediction_server" || text == "server") return NodeRole::prediction_server;
    throw ConfigError("unknown node role: " + std::string(text));
}

void TopologyConfig::validate() const
{
    if (!client || !server) throw ConfigError("topology needs client and server endpoints");
    if (mode == Topology::relay && !relay) throw ConfigError("relay topology needs all three endpoints");
    for (double d : {client_relay_delay_ms, relay_server_delay_ms, client_server_delay_ms})
        if (!(d >= 0.0)) throw ConfigError("injected delay must be >= 0");
    if (!(drop_prob >= 0.0 && drop_prob <= 1.0)) throw ConfigError("drop probability must be in [0,1]");
}

Endpoint TopologyConfig::listen_endpoint(NodeRole role) const
{
    const std::optional<Endpoint>* ep = role == NodeRole::perception_client ? &client
                                        : role == NodeRole::relay           ? &relay
                                                                            : &server;
    if (!*ep) throw ConfigError(std::string("no endpoint for ") + std::string(to_string(role)));
    return **ep;
}

std::optional<Endpoint> TopologyConfig::upstream_endpoint(NodeRole role) const
{
    switch (role) {
    case NodeRole::perception_client: return mode == Topology::relay ? relay : server;
    case NodeRole::relay: return server;
    case NodeRole::prediction_server: return std::nullopt;
    }
    return std::nullopt;
}

LinkShaping TopologyConfig::upstream_shaping(NodeRole role) const
{
    switch (role) {
    case NodeRole::perception_client:
        return shaped(mode == Topology::relay ? client_relay_delay_ms : client_server_delay_ms, drop_prob,
                      shaping_seed);
    case NodeRole::relay: return shaped(relay_server_delay_ms, drop_prob, shaping_seed + 1);
    case NodeRole::prediction_server: return {};
    }
    return {};
}

LinkShaping TopologyConfig::downstream_shaping(NodeRole role) const
{
    switch (role) {
    case NodeRole::perception_client: return {};  // sensor feed is local
    case NodeRole::relay: return shaped(client_relay_delay_ms, drop_prob, shaping_seed + 2);
    case NodeRole::prediction_server:
        return shaped(mode == Topology::relay ? relay_server_delay_ms : client_server_delay_ms, drop_prob,
                      shaping_seed + 3);
    }
    return {};
}

Message relay_process(const Message& features, const Thresholds& thresholds, const Ontology& ontology,
                      std::uint64_t out_seq, std::int64_t ingress_us)
{
    const auto* in = std::get_if<FeaturesPayload>(&features.payload);
    if (features.type != MessageType::FEATURES || !in) throw InputError("relay expects a FEATURES message");
    LinguisticPayload out;
    out.frame_id = in->frame_id;
    out.t = in->t;
    out.labels = frame_labels(categorize(in->features, thresholds, ontology), ontology);
    out.origin_ts_us = in->origin_ts_us;
    out.relay_ingress_us = ingress_us;
    out.relay_egress_us = std::max(monotonic_us(), ingress_us);
    return make_message(out_seq, out.relay_egress_us, std::move(out));
}

// ---- Node

struct Node::Session {
    std::shared_ptr<FramedConnection> down;
    std::atomic<bool> alive{true};

    std::mutex up_mu;
    std::shared_ptr<FramedConnection> up;
    std::unordered_map<std::uint64_t, std::uint64_t> pending;  // upstream seq -> downstream seq

    std::shared_ptr<FramedConnection> upstream()
    {
        std::lock_guard lk(up_mu);
        return up;
    }
};

Node::Node(NodeOptions options) : opt_(std::move(options))
{
    opt_.topology.validate();
    opt_.thresholds.validate();
    if (opt_.role == NodeRole::prediction_server && !opt_.predictor)
        throw ConfigError("prediction server needs a predictor");
    if (opt_.backoff_min.count() <= 0 || opt_.backoff_max < opt_.backoff_min)
        throw ConfigError("backoff bounds must satisfy 0 < min <= max");
}

Node::~Node()
{
    stop();
}

void Node::start()
{
    if (running_) return;
    listener_ = std::make_unique<TcpListener>(opt_.topology.listen_endpoint(opt_.role));
    running_ = true;
    accept_thread_ = std::thread([this] { accept_loop(); });
}

std::uint16_t Node::port() const
{
    if (!listener_) throw IoError("node not started");
    return listener_->port();
}

void Node::stop()
{
    if (!running_.exchange(false)) return;
    if (listener_) listener_->shutdown();
    if (accept_thread_.joinable()) accept_thread_.join();
    std::vector<std::thread> threads;
    {
        std::lock_guard lk(sessions_mu_);
        for (auto& s : sessions_) {
            s->alive = false;
            s->down->close();
            if (auto up = s->upstream()) up->close();
        }
        threads.swap(threads_);
    }
    for (auto& t : threads)
        if (t.joinable()) t.join();
    std::lock_guard lk(sessions_mu_);
    sessions_.clear();
    listener_.reset();
}

void Node::accept_loop()
{
    while (running_) {
        auto sock = listener_->accept(milliseconds(50));
        if (!sock) continue;
        auto s = std::make_shared<Session>();
        s->down = std::make_shared<FramedConnection>(std::move(*sock), opt_.topology.downstream_shaping(opt_.role));
        std::lock_guard lk(sessions_mu_);
        if (!running_) {
            s->down->close();
            break;
        }
        // drop finished sessions
        sessions_.erase(std::remove_if(sessions_.begin(), sessions_.end(), [](const auto& x) { return !x->alive; }),
                        sessions_.end());
        sessions_.push_back(s);
        threads_.emplace_back([this, s] { serve(s); });
        if (opt_.role != NodeRole::prediction_server) threads_.emplace_back([this, s] { upstream_loop(s); });
    }
}

void Node::serve(std::shared_ptr<Session> s)
{
    try {
        while (running_ && s->alive) {
            auto m = s->down->receive(milliseconds(100));
            if (!m) continue;
            counters_.received++;
            handle_downstream(*s, *m);
        }
    } catch (const IoError&) {
    }
    counters_.decode_errors += s->down->faults().decode_errors.load();
    s->alive = false;
    s->down->close();
    if (auto up = s->upstream()) up->close();
}

void Node::handle_downstream(Session& s, const Message& m)
{
    const std::int64_t rx = monotonic_us();
    auto& down = *s.down;
    if (m.type == MessageType::HELLO) return;
    if (m.type == MessageType::ECHO) {
        down.send(make_message(down.next_seq(), monotonic_us(), EchoReplyPayload{m.seq, m.ts_us}));
        return;
    }

    if (opt_.role == NodeRole::prediction_server) {
        const auto* in = std::get_if<LinguisticPayload>(&m.payload);
        if (!in) {
            counters_.malformed++;
            return;
        }
        PredictionPayload out;
        try {
            const auto post = opt_.predictor(frame_from_labels(in->labels, opt_.ontology));
            out.maneuver = post.argmax();
            out.posterior = post.p;
        } catch (const Error&) {
            counters_.malformed++;
            return;
        }
        out.request_seq = m.seq;
        out.frame_id = in->frame_id;
        out.t = in->t;
        out.origin_ts_us = in->origin_ts_us;
        out.relay_ingress_us = in->relay_ingress_us;
        out.relay_egress_us = in->relay_egress_us;
        out.server_rx_us = rx;
        if (down.send(make_message(down.next_seq(), monotonic_us(), std::move(out)))) counters_.forwarded++;
        return;
    }

    if (m.type != MessageType::FEATURES) {
        counters_.malformed++;
        return;
    }
    auto up = s.upstream();
    if (!up || !up->open()) {
        counters_.upstream_down++;
        return;
    }
    std::lock_guard lk(s.up_mu);
    const std::uint64_t up_seq = up->next_seq();
    Message out;
    try {
        if (opt_.role == NodeRole::relay) {
            out = relay_process(m, opt_.thresholds, opt_.ontology, up_seq, rx);
        } else {
            // perception client: capture stamp is taken here, where the features enter the network
            FeaturesPayload f = std::get<FeaturesPayload>(m.payload);
            f.origin_ts_us = rx;
            if (opt_.topology.mode == Topology::direct) {
                LinguisticPayload l;
                l.frame_id = f.frame_id;
                l.t = f.t;
                l.labels = frame_labels(categorize(f.features, opt_.thresholds, opt_.ontology), opt_.ontology);
                l.origin_ts_us = rx;
                out = make_message(up_seq, monotonic_us(), std::move(l));
            } else {
                out = make_message(up_seq, monotonic_us(), std::move(f));
            }
        }
    } catch (const Error&) {
        counters_.malformed++;
        return;
    }
    s.pending[up_seq] = m.seq;
    if (up->send(out))
        counters_.forwarded++;
    else
        counters_.upstream_down++;
}

void Node::upstream_loop(std::shared_ptr<Session> s)
{
    const Endpoint peer = *opt_.topology.upstream_endpoint(opt_.role);
    milliseconds backoff = opt_.backoff_min;
    bool connected_before = false;
    while (running_ && s->alive) {
        std::shared_ptr<FramedConnection> up;
        try {
            up = std::make_shared<FramedConnection>(connect_tcp(peer, milliseconds(500)),
                                                    opt_.topology.upstream_shaping(opt_.role));
        } catch (const IoError&) {
            backoff_sleep(backoff, s->alive);
            backoff = std::min(backoff * 2, opt_.backoff_max);
            continue;
        }
        backoff = opt_.backoff_min;
        if (connected_before) counters_.reconnects++;
        connected_before = true;
        up->send(make_message(up->next_seq(), monotonic_us(), HelloPayload{std::string(to_string(opt_.role))}));
        {
            std::lock_guard lk(s->up_mu);
            s->pending.clear();
            s->up = up;
        }
        try {
            while (running_ && s->alive) {
                auto m = up->receive(milliseconds(100));
                if (!m || m->type != MessageType::PREDICTION) continue;
                auto p = std::get<PredictionPayload>(m->payload);
                {
                    std::lock_guard lk(s->up_mu);
                    auto it = s->pending.find(p.request_seq);
                    if (it == s->pending.end()) continue;
                    p.request_seq = it->second;
                    s->pending.erase(it);
                }
                s->down->send(make_message(s->down->next_seq(), monotonic_us(), std::move(p)));
            }
        } catch (const IoError&) {
        }
        counters_.decode_errors += up->faults().decode_errors.load();
        {
            std::lock_guard lk(s->up_mu);
            if (s->up == up) s->up.reset();
        }
        up->close();
    }
}

// ---- SensorFeed

SensorFeed::SensorFeed(Endpoint peer, int schema_version, milliseconds backoff_min, milliseconds backoff_max)
    : peer_(std::move(peer)), schema_version_(schema_version), backoff_min_(backoff_min), backoff_max_(backoff_max)
{
    if (schema_version != 1 && schema_version != 2) throw ConfigError("FEATURES schema version must be 1 or 2");
    if (backoff_min.count() <= 0 || backoff_max < backoff_min)
        throw ConfigError("backoff bounds must satisfy 0 < min <= max");
    thread_ = std::thread([this] { run(); });
}

SensorFeed::~SensorFeed()
{
    running_ = false;
    {
        std::lock_guard lk(mu_);
        if (conn_) conn_->close();
    }
    cv_.notify_all();
    if (thread_.joinable()) thread_.join();
}

bool SensorFeed::wait_connected(milliseconds timeout)
{
    std::unique_lock lk(mu_);
    return cv_.wait_for(lk, timeout, [this] { return conn_ && conn_->open(); });
}

bool SensorFeed::wait_ready(milliseconds timeout, int lane_count)
{
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    if (!wait_connected(timeout)) return false;
    NumericFeatures probe;
    probe.lane_count = lane_count;
    probe.ttc_preceding = probe.ttc_left_preceding = probe.ttc_right_preceding = INFINITY;
    probe.ttc_left_following = probe.ttc_right_following = probe.thw_preceding = INFINITY;
    while (std::chrono::steady_clock::now() < deadline) {
        const std::uint64_t answered = probes_answered_.load();
        if (!submit(kProbeFrame, 0.0, probe)) {
            std::this_thread::sleep_for(milliseconds(20));
            continue;
        }
        std::unique_lock lk(mu_);
        if (cv_.wait_for(lk, milliseconds(200), [&] { return probes_answered_.load() > answered || !running_; }))
            return running_.load();
    }
    return false;
}

std::optional<std::uint64_t> SensorFeed::submit(std::uint64_t frame_id, double t, const NumericFeatures& features)
{
    std::shared_ptr<FramedConnection> c;
    {
        std::lock_guard lk(mu_);
        c = conn_;
    }
    if (!c || !c->open()) return std::nullopt;
    FeaturesPayload p;
    p.schema_version = schema_version_;
    p.frame_id = frame_id;
    p.t = t;
    p.origin_ts_us = monotonic_us();
    p.features = features;
    const std::uint64_t seq = c->next_seq();
    if (!c->send(make_message(seq, p.origin_ts_us, std::move(p)))) return std::nullopt;
    return seq;
}

std::optional<TimedPrediction> SensorFeed::next(milliseconds timeout)
{
    std::unique_lock lk(mu_);
    if (!cv_.wait_for(lk, timeout, [this] { return !inbox_.empty() || !running_; })) return std::nullopt;
    if (inbox_.empty()) return std::nullopt;
    auto p = inbox_.front();
    inbox_.pop_front();
    return p;
}

void SensorFeed::run()
{
    milliseconds backoff = backoff_min_;
    bool connected_before = false;
    while (running_) {
        std::shared_ptr<FramedConnection> c;
        try {
            c = std::make_shared<FramedConnection>(connect_tcp(peer_, milliseconds(500)));
        } catch (const IoError&) {
            backoff_sleep(backoff, running_);
            backoff = std::min(backoff * 2, backoff_max_);
            continue;
        }
        backoff = backoff_min_;
        if (connected_before) reconnects_++;
        connected_before = true;
        c->send(make_message(c->next_seq(), monotonic_us(), HelloPayload{"sensor"}));
        {
            std::lock_guard lk(mu_);
            conn_ = c;
        }
        cv_.notify_all();
        try {
            while (running_) {
                auto m = c->receive(milliseconds(100));
                if (!m || m->type != MessageType::PREDICTION) continue;
                TimedPrediction tp{std::get<PredictionPayload>(m->payload), monotonic_us()};
                {
                    std::lock_guard lk(mu_);
                    if (tp.prediction.frame_id == kProbeFrame)
                        probes_answered_++;
                    else
                        inbox_.push_back(std::move(tp));
                }
                cv_.notify_all();
            }
        } catch (const IoError&) {
        }
        {
            std::lock_guard lk(mu_);
            if (conn_ == c) conn_.reset();
        }
        c->close();
    }
    cv_.notify_all();
}

// ---- RTT

void LinkStats::write_csv(std::ostream& out) const
{
    out << "kind,index,value\n";
    for (std::size_t i = 0; i < rtt_ms.size(); ++i) out << "rtt_ms," << i << ',' << format_double(rtt_ms[i]) << '\n';
    out << "one_way_ms,," << format_double(one_way_ms) << '\n';
    out << "drops,," << drops << '\n';
}

LinkStats measure_rtt(FramedConnection& conn, std::size_t n, milliseconds timeout)
{
    if (n < 5) throw DomainError("measure_rtt needs at least 5 samples");
    LinkStats stats;
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint64_t seq = conn.next_seq();
        const auto sent = Clock::now();
        if (!conn.send(make_message(seq, monotonic_us(), EchoPayload{}))) {
            stats.drops++;
            continue;
        }
        const auto deadline = sent + timeout;
        bool got = false;
        while (!got) {
            const auto left = std::chrono::duration_cast<milliseconds>(deadline - Clock::now());
            if (left.count() <= 0) break;
            std::optional<Message> m;
            try {
                m = conn.receive(left);
            } catch (const IoError&) {
                break;
            }
            if (!m) break;
            const auto* r = std::get_if<EchoReplyPayload>(&m->payload);
            if (r && r->echo_seq == seq) {
                got = true;
                stats.rtt_ms.push_back(std::chrono::duration<double, std::milli>(Clock::now() - sent).count());
            }
        }
        if (!got) stats.drops++;
    }
    if (stats.drops * 2 > n || stats.rtt_ms.empty())
        throw LinkUnusable(std::to_string(stats.drops) + " of " + std::to_string(n) + " echo probes dropped");
    stats.one_way_ms = median(stats.rtt_ms) / 2.0;
    return stats;
}

LinkStats measure_rtt(const Endpoint& peer, std::size_t n, milliseconds timeout, LinkShaping shaping)
{
    if (n < 5) throw DomainError("measure_rtt needs at least 5 samples");
    FramedConnection conn(connect_tcp(peer, timeout), shaping);
    return measure_rtt(conn, n, timeout);
}

}  // namespace coop
