// SPDX-License-Identifier: Apache-2.0
//
// POSIX TCP plumbing: RAII socket, listener, framed connection, and the
// delay/drop shim that sits between the codec and the socket.
#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "coop/message.hpp"
#include "coop/random.hpp"

namespace coop {

struct Endpoint {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;

    std::string str() const { return host + ":" + std::to_string(port); }
};

/// "host:port"; ConfigError when malformed.
Endpoint parse_endpoint(const std::string& text);

class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    Socket(Socket&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
    Socket& operator=(Socket&& o) noexcept;
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    ~Socket() { close(); }

    int fd() const { return fd_; }
    bool valid() const { return fd_ >= 0; }
    /// Wakes blocked readers/writers without releasing the descriptor.
    void shutdown();
    void close();

private:
    int fd_ = -1;
};

class TcpListener {
public:
    /// Port 0 binds an ephemeral port.
    explicit TcpListener(const Endpoint& at);
    std::uint16_t port() const { return port_; }
    /// nullopt on timeout or after shutdown.
    std::optional<Socket> accept(std::chrono::milliseconds timeout);
    void shutdown() { sock_.shutdown(); }

private:
    Socket sock_;
    std::uint16_t port_ = 0;
};

/// IoError on failure.
Socket connect_tcp(const Endpoint& peer, std::chrono::milliseconds timeout = std::chrono::milliseconds(1000));

/// Test-only link impairment applied to outgoing frames.
struct LinkShaping {
    double delay_ms = 0.0;
    double drop_prob = 0.0;
    std::uint64_t seed = 1;

    bool active() const { return delay_ms > 0.0 || drop_prob > 0.0; }
};

struct FaultCounters {
    std::atomic<std::uint64_t> decode_errors{0};
    std::atomic<std::uint64_t> dropped{0};
    std::atomic<std::uint64_t> io_errors{0};
};

/// Message-level connection. send() may be called from several threads;
/// receive() from one reader thread.
class FramedConnection {
public:
    FramedConnection(Socket sock, LinkShaping shaping = {});
    ~FramedConnection();
    FramedConnection(const FramedConnection&) = delete;
    FramedConnection& operator=(const FramedConnection&) = delete;

    /// Encodes and writes (or schedules, under shaping). false when the link is down.
    bool send(const Message& msg);
    /// Next message; nullopt on timeout. Malformed bodies are counted and skipped.
    /// Throws IoError when the peer closes or the stream loses framing.
    std::optional<Message> receive(std::chrono::milliseconds timeout);

    bool open() const { return open_.load(); }
    void close();
    /// Per-connection sender sequence, strictly increasing from 1.
    std::uint64_t next_seq() { return ++seq_; }
    const FaultCounters& faults() const { return faults_; }

private:
    bool write_all(const std::string& bytes);
    bool read_exact(char* dst, std::size_t n, std::chrono::steady_clock::time_point deadline, bool allow_timeout);
    void delay_loop();

    Socket sock_;
    LinkShaping shaping_;
    Rng drop_rng_;
    std::atomic<bool> open_{true};
    std::atomic<std::uint64_t> seq_{0};
    std::mutex write_mu_;
    FaultCounters faults_;

    std::mutex q_mu_;
    std::condition_variable q_cv_;
    std::deque<std::pair<std::chrono::steady_clock::time_point, std::string>> queue_;
    bool stop_ = false;
    std::thread delay_thread_;
    std::string partial_;  // bytes of a frame whose read timed out midway
};

}  // namespace coop
