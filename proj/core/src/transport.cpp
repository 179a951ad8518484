#include "gorila/transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <sstream>

#include "gorila/errors.hpp"

namespace gorila {

namespace {

// Shared state of one in-process link: one byte queue per direction.
struct InProcessLink {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<std::vector<std::uint8_t>> queue[2];
    bool closed = false;
};

class InProcessConnection final : public Connection {
public:
    InProcessConnection(std::shared_ptr<InProcessLink> link, int side, std::size_t max_payload)
        : link_(std::move(link)), side_(side), max_payload_(max_payload) {}

    ~InProcessConnection() override { close(); }

    void send(const Frame& frame) override {
        auto bytes = encode_frame(frame, max_payload_);
        std::lock_guard lock(link_->mu);
        if (link_->closed) throw TransportError("in-process connection closed");
        link_->queue[1 - side_].push_back(std::move(bytes));
        link_->cv.notify_all();
    }

    Frame receive() override {
        std::vector<std::uint8_t> bytes;
        {
            std::unique_lock lock(link_->mu);
            auto& q = link_->queue[side_];
            link_->cv.wait(lock, [&] { return !q.empty() || link_->closed; });
            if (q.empty()) throw TransportError("in-process connection closed by peer");
            bytes = std::move(q.front());
            q.pop_front();
        }
        return decode_frame(bytes, max_payload_).frame;
    }

    void close() override {
        std::lock_guard lock(link_->mu);
        link_->closed = true;
        link_->cv.notify_all();
    }

private:
    std::shared_ptr<InProcessLink> link_;
    int side_;
    std::size_t max_payload_;
};

class SocketConnection final : public Connection {
public:
    SocketConnection(int fd, std::size_t max_payload) : fd_(fd), max_payload_(max_payload) {
        int one = 1;
        ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    }

    ~SocketConnection() override {
        close();
        ::close(fd_);
    }

    void send(const Frame& frame) override {
        const auto bytes = encode_frame(frame, max_payload_);
        std::size_t sent = 0;
        while (sent < bytes.size()) {
            const ssize_t n = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw TransportError(std::string("send failed: ") + std::strerror(errno));
            }
            sent += static_cast<std::size_t>(n);
        }
    }

    Frame receive() override {
        std::vector<std::uint8_t> buf(kFrameHeaderSize);
        if (!read_exact(buf.data(), kFrameHeaderSize, true)) {
            throw TransportError("connection closed by peer");
        }
        const std::size_t total = frame_size_from_header(buf, max_payload_);
        buf.resize(total);
        read_exact(buf.data() + kFrameHeaderSize, total - kFrameHeaderSize, false);
        return decode_frame(buf, max_payload_).frame;
    }

    void close() override {
        if (!shut_.exchange(true)) ::shutdown(fd_, SHUT_RDWR);
    }

private:
    // Returns false on a clean EOF before the first byte when allow_eof.
    bool read_exact(std::uint8_t* dst, std::size_t n, bool allow_eof) {
        std::size_t got = 0;
        while (got < n) {
            const ssize_t r = ::recv(fd_, dst + got, n - got, 0);
            if (r < 0) {
                if (errno == EINTR) continue;
                throw TransportError(std::string("recv failed: ") + std::strerror(errno));
            }
            if (r == 0) {
                if (allow_eof && got == 0) return false;
                throw ProtocolError(ProtocolErrc::truncated, "peer disconnected mid-frame");
            }
            got += static_cast<std::size_t>(r);
        }
        return true;
    }

    int fd_;
    std::size_t max_payload_;
    std::atomic<bool> shut_{false};
};

sockaddr_in make_addr(const std::string& host, std::uint16_t port) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    const std::string h = host == "localhost" ? "127.0.0.1" : host;
    if (::inet_pton(AF_INET, h.c_str(), &addr.sin_addr) != 1) {
        throw TransportError("invalid IPv4 address: " + host);
    }
    return addr;
}

}  // namespace

std::pair<std::unique_ptr<Connection>, std::unique_ptr<Connection>> in_process_pair(std::size_t max_payload) {
    auto link = std::make_shared<InProcessLink>();
    return {std::make_unique<InProcessConnection>(link, 0, max_payload),
            std::make_unique<InProcessConnection>(link, 1, max_payload)};
}

std::chrono::milliseconds RetryPolicy::delay(int attempt) const {
    auto d = base;
    for (int i = 0; i < attempt && d < cap; ++i) d *= 2;
    return std::min(d, cap);
}

SocketListener::SocketListener(const std::string& host, std::uint16_t port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw TransportError(std::string("socket: ") + std::strerror(errno));
    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    auto addr = make_addr(host, port);
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd_, 64) != 0) {
        const std::string err = std::strerror(errno);
        ::close(fd_);
        throw TransportError("cannot listen on " + host + ":" + std::to_string(port) + ": " + err);
    }
    socklen_t len = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
}

SocketListener::~SocketListener() {
    close();
    ::close(fd_);
}

std::unique_ptr<Connection> SocketListener::accept() {
    while (true) {
        const int client = ::accept(fd_, nullptr, nullptr);
        if (client >= 0) return std::make_unique<SocketConnection>(client, kDefaultMaxPayload);
        if (errno == EINTR && !closed_) continue;
        throw TransportError(closed_ ? "listener closed" : std::string("accept: ") + std::strerror(errno));
    }
}

void SocketListener::close() {
    if (!closed_.exchange(true)) ::shutdown(fd_, SHUT_RDWR);
}

std::unique_ptr<Connection> socket_connect(const std::string& host, std::uint16_t port, const RetryPolicy& retry,
                                           const std::function<void(std::chrono::milliseconds)>& sleep,
                                           std::size_t max_payload) {
    const auto addr = make_addr(host, port);
    for (int attempt = 0;; ++attempt) {
        const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd < 0) throw TransportError(std::string("socket: ") + std::strerror(errno));
        if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) == 0) {
            return std::make_unique<SocketConnection>(fd, max_payload);
        }
        const std::string err = std::strerror(errno);
        ::close(fd);
        if (attempt >= retry.max_retries) {
            throw TransportError("connect to " + host + ":" + std::to_string(port) + " failed after " +
                                 std::to_string(attempt + 1) + " attempts: " + err);
        }
        const auto d = retry.delay(attempt);
        if (sleep) {
            sleep(d);
        } else {
            std::this_thread::sleep_for(d);
        }
    }
}

ServiceHost::ServiceHost(FrameHandler handler) : handler_(std::move(handler)) {}

ServiceHost::~ServiceHost() { stop(); }

void ServiceHost::serve(std::unique_ptr<Connection> conn) {
    std::lock_guard lock(mu_);
    if (stopping_) {
        conn->close();
        return;
    }
    auto& session = sessions_.emplace_back();
    session.conn = std::move(conn);
    Connection* raw = session.conn.get();
    session.worker = std::thread([this, raw] { run_session(*raw); });
}

void ServiceHost::serve_listener(SocketListener& listener) {
    listener_ = &listener;
    accept_thread_ = std::thread([this, &listener] {
        while (!stopping_) {
            try {
                serve(listener.accept());
            } catch (const TransportError&) {
                return;
            }
        }
    });
}

void ServiceHost::run_session(Connection& conn) {
    while (!stopping_) {
        Frame request;
        try {
            request = conn.receive();
        } catch (const TransportError&) {
            return;
        } catch (const ProtocolError& e) {
            try {
                conn.send(encode_message(ErrorMsg{ErrCode::protocol, e.what()}));
            } catch (const Error&) {
            }
            conn.close();
            return;
        }
        try {
            if (auto reply = handler_(request)) conn.send(*reply);
        } catch (const ProtocolError& e) {
            try {
                conn.send(encode_message(ErrorMsg{ErrCode::protocol, e.what()}));
            } catch (const Error&) {
            }
            conn.close();
            return;
        } catch (const NotReady& e) {
            try {
                conn.send(encode_message(ErrorMsg{ErrCode::not_ready, e.what()}));
            } catch (const Error&) {
                return;
            }
        } catch (const PartialFetchError& e) {
            std::ostringstream ids;
            for (std::size_t i = 0; i < e.missing().size(); ++i) ids << (i ? "," : "") << e.missing()[i];
            try {
                conn.send(encode_message(ErrorMsg{ErrCode::partial_fetch, ids.str()}));
            } catch (const Error&) {
                return;
            }
        } catch (const TransportError&) {
            return;
        } catch (const std::exception& e) {
            try {
                conn.send(encode_message(ErrorMsg{ErrCode::internal, e.what()}));
            } catch (const Error&) {
                return;
            }
        }
    }
}

void ServiceHost::stop() {
    if (stopping_.exchange(true)) return;
    if (listener_) listener_->close();
    if (accept_thread_.joinable()) accept_thread_.join();
    std::list<Session> sessions;
    {
        std::lock_guard lock(mu_);
        sessions.swap(sessions_);
    }
    for (auto& s : sessions) s.conn->close();
    for (auto& s : sessions) {
        if (s.worker.joinable()) s.worker.join();
    }
}

DelayShim::DelayShim(FrameHandler inner, std::chrono::microseconds max_delay, std::uint64_t seed)
    : inner_(std::move(inner)), max_delay_(max_delay), rng_(seed) {}

FrameHandler DelayShim::handler() {
    return [this](const Frame& f) { return handle(f); };
}

std::optional<Frame> DelayShim::handle(const Frame& frame) {
    std::chrono::microseconds delay{0};
    {
        std::lock_guard lock(rng_mu_);
        std::uniform_int_distribution<std::int64_t> dist(0, max_delay_.count());
        delay = std::chrono::microseconds(dist(rng_));
    }
    std::this_thread::sleep_for(delay);
    std::lock_guard lock(dispatch_mu_);
    if (frame.kind == MessageKind::grad_push) {
        const auto msg = decode_message(frame);
        log_.push_back(std::get<GradPush>(msg).base_version);
    }
    return inner_(frame);
}

std::vector<std::uint64_t> DelayShim::grad_push_log() const {
    std::lock_guard lock(dispatch_mu_);
    return log_;
}

Message expect_reply(const Frame& reply, MessageKind expected) {
    auto msg = decode_message(reply);
    if (const auto* err = std::get_if<ErrorMsg>(&msg)) {
        switch (err->code) {
            case ErrCode::not_ready: throw NotReady(err->message);
            case ErrCode::protocol: throw ProtocolError(ProtocolErrc::malformed, "rejected by peer: " + err->message);
            case ErrCode::partial_fetch: {
                std::vector<std::uint32_t> missing;
                std::istringstream in(err->message);
                std::string tok;
                while (std::getline(in, tok, ',')) {
                    if (!tok.empty()) missing.push_back(static_cast<std::uint32_t>(std::stoul(tok)));
                }
                throw PartialFetchError(std::move(missing), "partial fetch, missing shards: " + err->message);
            }
            case ErrCode::unsupported: throw Unsupported(err->message);
            default: throw Error("remote error: " + err->message);
        }
    }
    if (kind_of(msg) != expected) {
        throw ProtocolError(ProtocolErrc::malformed, std::string("expected ") + to_string(expected) + ", got " +
                                                         to_string(kind_of(msg)));
    }
    return msg;
}

}  // namespace gorila
