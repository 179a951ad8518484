#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "gorila/wire.hpp"

namespace gorila {

/// One end of an ordered, reliable, frame-oriented connection. Single owner:
/// one thread sends and receives on a given endpoint.
class Connection {
public:
    virtual ~Connection() = default;

    virtual void send(const Frame& frame) = 0;

    /// Blocks for the next frame. Throws TransportError once the peer has
    /// closed and no complete frame remains; a partially received frame
    /// surfaces as ProtocolError(truncated).
    virtual Frame receive() = 0;

    virtual void close() = 0;

    /// Sends a request and waits for its reply.
    Frame call(const Frame& request) {
        send(request);
        return receive();
    }
};

/// Two connected in-process endpoints. Frames travel as encoded bytes, so
/// both transports exercise the same codec.
std::pair<std::unique_ptr<Connection>, std::unique_ptr<Connection>> in_process_pair(
    std::size_t max_payload = kDefaultMaxPayload);

/// Exponential backoff: base · 2^attempt, capped.
struct RetryPolicy {
    std::chrono::milliseconds base{100};
    std::chrono::milliseconds cap{5000};
    int max_retries = 6;

    std::chrono::milliseconds delay(int attempt) const;
};

class SocketListener {
public:
    /// Binds host:port; port 0 picks an ephemeral port.
    explicit SocketListener(const std::string& host = "127.0.0.1", std::uint16_t port = 0);
    ~SocketListener();

    SocketListener(const SocketListener&) = delete;
    SocketListener& operator=(const SocketListener&) = delete;

    std::uint16_t port() const noexcept { return port_; }

    /// Blocks for a client. Throws TransportError once close() was called.
    std::unique_ptr<Connection> accept();

    void close();

private:
    int fd_ = -1;
    std::uint16_t port_ = 0;
    std::atomic<bool> closed_{false};
};

/// Connects with retry; the sleep hook exists so tests can observe the
/// backoff schedule without waiting for it.
std::unique_ptr<Connection> socket_connect(
    const std::string& host, std::uint16_t port, const RetryPolicy& retry = {},
    const std::function<void(std::chrono::milliseconds)>& sleep = {},
    std::size_t max_payload = kDefaultMaxPayload);

/// Request handler run by a service. Returning nullopt sends nothing.
using FrameHandler = std::function<std::optional<Frame>(const Frame&)>;

/// Serves connections with one thread each: receive, handle, reply.
/// A ProtocolError from decoding or from the handler is answered with an
/// ERR frame and the connection is dropped; other library errors are
/// answered with ERR and the connection stays open.
class ServiceHost {
public:
    explicit ServiceHost(FrameHandler handler);
    ~ServiceHost();

    ServiceHost(const ServiceHost&) = delete;
    ServiceHost& operator=(const ServiceHost&) = delete;

    void serve(std::unique_ptr<Connection> conn);

    /// Accepts connections from the listener on a background thread.
    void serve_listener(SocketListener& listener);

    void stop();

private:
    struct Session {
        std::unique_ptr<Connection> conn;
        std::thread worker;
    };

    void run_session(Connection& conn);

    FrameHandler handler_;
    std::mutex mu_;
    std::list<Session> sessions_;
    std::thread accept_thread_;
    SocketListener* listener_ = nullptr;
    std::atomic<bool> stopping_{false};
};

/// Injected-delay shim for a service: each request sleeps a random
/// 0..max_delay before the wrapped handler runs. The handler itself runs
/// under one lock, so the recorded log of GRAD_PUSH base versions is in
/// exactly the order the server validated them.
class DelayShim {
public:
    DelayShim(FrameHandler inner, std::chrono::microseconds max_delay, std::uint64_t seed);

    FrameHandler handler();

    std::vector<std::uint64_t> grad_push_log() const;

private:
    std::optional<Frame> handle(const Frame& frame);

    FrameHandler inner_;
    std::chrono::microseconds max_delay_;
    mutable std::mutex rng_mu_;
    std::mt19937_64 rng_;
    mutable std::mutex dispatch_mu_;
    std::vector<std::uint64_t> log_;
};

/// Converts an ERR reply into the matching exception and checks kinds.
Message expect_reply(const Frame& reply, MessageKind expected);

}  // namespace gorila
