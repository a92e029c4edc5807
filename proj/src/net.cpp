// SPDX-License-Identifier: Apache-2.0
#include "coop/net.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "coop/errors.hpp"
#include "coop/numfmt.hpp"

namespace coop {

namespace {

using Clock = std::chrono::steady_clock;

int remaining_ms(Clock::time_point deadline)
{
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    return left < 0 ? 0 : static_cast<int>(left);
}

std::string errno_text(const char* what)
{
    return std::string(what) + ": " + std::strerror(errno);
}

sockaddr_in resolve(const Endpoint& ep)
{
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(ep.port);
    if (ep.host.empty() || ep.host == "0.0.0.0") {
        addr.sin_addr.s_addr = htonl(INADDR_ANY);
        return addr;
    }
    if (ep.host == "localhost") {
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        return addr;
    }
    if (inet_pton(AF_INET, ep.host.c_str(), &addr.sin_addr) == 1) return addr;
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (getaddrinfo(ep.host.c_str(), nullptr, &hints, &res) != 0 || !res) throw IoError("cannot resolve " + ep.host);
    addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
    freeaddrinfo(res);
    return addr;
}

void set_nodelay(int fd)
{
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

}  // namespace

Endpoint parse_endpoint(const std::string& text)
{
    auto colon = text.rfind(':');
    if (colon == std::string::npos || colon + 1 >= text.size())
        throw ConfigError("endpoint must be host:port: " + text);
    Endpoint ep;
    ep.host = text.substr(0, colon);
    if (ep.host.empty()) ep.host = "127.0.0.1";
    long long port = 0;
    try {
        port = parse_int(text.substr(colon + 1));
    } catch (const Error&) {
        throw ConfigError("bad port in " + text);
    }
    if (port < 0 || port > 65535) throw ConfigError("port out of range in " + text);
    ep.port = static_cast<std::uint16_t>(port);
    return ep;
}

Socket& Socket::operator=(Socket&& o) noexcept
{
    if (this != &o) {
        close();
        fd_ = o.fd_;
        o.fd_ = -1;
    }
    return *this;
}

void Socket::shutdown()
{
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

void Socket::close()
{
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

TcpListener::TcpListener(const Endpoint& at)
{
    int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (fd < 0) throw IoError(errno_text("socket"));
    sock_ = Socket(fd);
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr = resolve(at);
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
        throw IoError(errno_text(("bind " + at.str()).c_str()));
    if (::listen(fd, 16) != 0) throw IoError(errno_text("listen"));
    socklen_t len = sizeof addr;
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
}

std::optional<Socket> TcpListener::accept(std::chrono::milliseconds timeout)
{
    if (!sock_.valid()) return std::nullopt;
    pollfd p{sock_.fd(), POLLIN, 0};
    int rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
    if (rc <= 0) return std::nullopt;
    if (p.revents & (POLLERR | POLLHUP | POLLNVAL)) return std::nullopt;
    int fd = ::accept4(sock_.fd(), nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) return std::nullopt;
    set_nodelay(fd);
    return Socket(fd);
}

Socket connect_tcp(const Endpoint& peer, std::chrono::milliseconds timeout)
{
    sockaddr_in addr = resolve(peer);
    int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (fd < 0) throw IoError(errno_text("socket"));
    Socket sock(fd);
    int flags = ::fcntl(fd, F_GETFL, 0);
    ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
    int rc = ::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
    if (rc != 0 && errno != EINPROGRESS) throw IoError(errno_text(("connect " + peer.str()).c_str()));
    if (rc != 0) {
        pollfd p{fd, POLLOUT, 0};
        if (::poll(&p, 1, static_cast<int>(timeout.count())) <= 0) throw IoError("connect " + peer.str() + ": timeout");
        int err = 0;
        socklen_t len = sizeof err;
        ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
        if (err != 0) throw IoError("connect " + peer.str() + ": " + std::strerror(err));
    }
    ::fcntl(fd, F_SETFL, flags);
    set_nodelay(fd);
    return sock;
}

FramedConnection::FramedConnection(Socket sock, LinkShaping shaping)
    : sock_(std::move(sock)), shaping_(shaping), drop_rng_(make_stream(shaping.seed, 0xD0))
{
    if (!sock_.valid()) throw IoError("framed connection over an invalid socket");
    if (shaping_.delay_ms < 0.0 || !(shaping_.drop_prob >= 0.0 && shaping_.drop_prob <= 1.0))
        throw ConfigError("link shaping needs delay >= 0 and drop probability in [0,1]");
    if (shaping_.delay_ms > 0.0) delay_thread_ = std::thread([this] { delay_loop(); });
}

FramedConnection::~FramedConnection()
{
    close();
    if (delay_thread_.joinable()) delay_thread_.join();
}

void FramedConnection::close()
{
    {
        std::lock_guard lk(q_mu_);
        stop_ = true;
    }
    q_cv_.notify_all();
    open_ = false;
    sock_.shutdown();
}

bool FramedConnection::write_all(const std::string& bytes)
{
    std::lock_guard lk(write_mu_);
    std::size_t off = 0;
    while (off < bytes.size()) {
        ssize_t n = ::send(sock_.fd(), bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) {
            faults_.io_errors++;
            open_ = false;
            return false;
        }
        off += static_cast<std::size_t>(n);
    }
    return true;
}

void FramedConnection::delay_loop()
{
    std::unique_lock lk(q_mu_);
    while (true) {
        if (stop_) return;
        if (queue_.empty()) {
            q_cv_.wait(lk);
            continue;
        }
        auto due = queue_.front().first;
        if (Clock::now() < due) {
            q_cv_.wait_until(lk, due);
            continue;
        }
        std::string bytes = std::move(queue_.front().second);
        queue_.pop_front();
        lk.unlock();
        write_all(bytes);
        lk.lock();
    }
}

bool FramedConnection::send(const Message& msg)
{
    if (!open_) return false;
    std::string bytes = frame_encode(msg);
    if (shaping_.drop_prob > 0.0) {
        bool drop;
        {
            std::lock_guard lk(q_mu_);
            drop = draw_bernoulli(drop_rng_, shaping_.drop_prob);
        }
        if (drop) {
            faults_.dropped++;
            return true;  // silently lost on the wire
        }
    }
    if (shaping_.delay_ms > 0.0) {
        auto due = Clock::now() + std::chrono::microseconds(static_cast<std::int64_t>(shaping_.delay_ms * 1000.0));
        {
            std::lock_guard lk(q_mu_);
            queue_.emplace_back(due, std::move(bytes));
        }
        q_cv_.notify_all();
        return true;
    }
    return write_all(bytes);
}

bool FramedConnection::read_exact(char* dst, std::size_t n, Clock::time_point deadline, bool allow_timeout)
{
    // Buffered in partial_ so a timeout never splits a frame.
    while (partial_.size() < n) {
        pollfd p{sock_.fd(), POLLIN, 0};
        int rc = ::poll(&p, 1, remaining_ms(deadline));
        if (rc < 0 && errno == EINTR) continue;
        if (rc == 0) {
            if (allow_timeout) return false;
            continue;
        }
        char buf[65536];
        ssize_t got = ::recv(sock_.fd(), buf, sizeof buf, 0);
        if (got < 0 && errno == EINTR) continue;
        if (got <= 0) {
            open_ = false;
            throw IoError(got == 0 ? "peer closed the connection" : errno_text("recv"));
        }
        partial_.append(buf, static_cast<std::size_t>(got));
    }
    std::memcpy(dst, partial_.data(), n);
    return true;
}

std::optional<Message> FramedConnection::receive(std::chrono::milliseconds timeout)
{
    auto deadline = Clock::now() + timeout;
    while (true) {
        if (!open_ && partial_.size() < kFrameHeaderSize) throw IoError("connection closed");
        char header[kFrameHeaderSize];
        if (!read_exact(header, kFrameHeaderSize, deadline, true)) return std::nullopt;
        std::size_t len;
        try {
            len = frame_body_length(std::string_view(header, kFrameHeaderSize));
        } catch (const DecodeError&) {
            // Framing is lost; the stream cannot be resynchronised.
            faults_.decode_errors++;
            open_ = false;
            sock_.shutdown();
            throw IoError("oversized frame header; closing link");
        }
        std::string frame(kFrameHeaderSize + len, '\0');
        if (!read_exact(frame.data(), frame.size(), deadline, true)) return std::nullopt;
        partial_.erase(0, frame.size());
        try {
            return decode_body(std::string_view(frame).substr(kFrameHeaderSize));
        } catch (const DecodeError&) {
            faults_.decode_errors++;
            if (Clock::now() >= deadline) return std::nullopt;
        }
    }
}

}  // namespace coop
