// Thin RAII wrappers over POSIX stream sockets plus frame-oriented IO.
#pragma once

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <optional>
#include <string>
#include <utility>

#include "deskrl/frame.hpp"

namespace deskrl::net {

class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    ~Socket() { close(); }

    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    Socket(Socket&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
    Socket& operator=(Socket&& o) noexcept {
        if (this != &o) {
            close();
            fd_ = o.fd_;
            o.fd_ = -1;
        }
        return *this;
    }

    bool valid() const { return fd_ >= 0; }
    int fd() const { return fd_; }

    void set_nodelay() {
        int one = 1;
        ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    }

    void send_all(std::span<const uint8_t> data) {
        size_t sent = 0;
        while (sent < data.size()) {
            ssize_t n = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw TransportError(std::string("send failed: ") + std::strerror(errno));
            }
            sent += static_cast<size_t>(n);
        }
    }

    // Returns bytes read; 0 means orderly EOF.
    size_t recv_some(uint8_t* buf, size_t cap) {
        while (true) {
            ssize_t n = ::recv(fd_, buf, cap, 0);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw TransportError(std::string("recv failed: ") + std::strerror(errno));
            }
            return static_cast<size_t>(n);
        }
    }

    // Waits for readability. Returns false on timeout.
    bool wait_readable(long timeout_ms) {
        struct pollfd pfd {
            fd_, POLLIN, 0
        };
        while (true) {
            int r = ::poll(&pfd, 1, static_cast<int>(timeout_ms));
            if (r < 0) {
                if (errno == EINTR) continue;
                throw TransportError(std::string("poll failed: ") + std::strerror(errno));
            }
            return r > 0;
        }
    }

    // Unblocks any thread stuck in recv/send on this socket.
    void shutdown() {
        if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
    }

    void close() {
        if (fd_ >= 0) {
            ::close(fd_);
            fd_ = -1;
        }
    }

private:
    int fd_ = -1;
};

inline Socket tcp_connect(const std::string& host, uint16_t port) {
    struct addrinfo hints {};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    struct addrinfo* res = nullptr;
    int rc = ::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res);
    if (rc != 0) throw TransportError("resolve " + host + ": " + gai_strerror(rc), 100);

    int last_errno = ECONNREFUSED;
    for (auto* ai = res; ai; ai = ai->ai_next) {
        int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
        if (fd < 0) continue;
        if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) {
            ::freeaddrinfo(res);
            Socket s(fd);
            s.set_nodelay();
            return s;
        }
        last_errno = errno;
        ::close(fd);
    }
    ::freeaddrinfo(res);
    throw TransportError("connect " + host + ":" + std::to_string(port) + ": " +
                             std::strerror(last_errno),
                         100);
}

class Listener {
public:
    Listener() = default;

    // port 0 asks the OS for an ephemeral port; see port() for the result.
    explicit Listener(uint16_t port, const std::string& host = "127.0.0.1") {
        int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd < 0) throw TransportError(std::string("socket: ") + std::strerror(errno));
        int one = 1;
        ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
        struct sockaddr_in addr {};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(port);
        if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
            addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
            int e = errno;
            ::close(fd);
            throw TransportError("bind port " + std::to_string(port) + ": " + std::strerror(e));
        }
        if (::listen(fd, 128) < 0) {
            int e = errno;
            ::close(fd);
            throw TransportError(std::string("listen: ") + std::strerror(e));
        }
        socklen_t len = sizeof(addr);
        ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
        port_ = ntohs(addr.sin_port);
        sock_ = Socket(fd);
    }

    uint16_t port() const { return port_; }
    bool valid() const { return sock_.valid(); }

    // Blocks until a connection arrives or the listener is closed.
    std::optional<Socket> accept() {
        while (true) {
            int fd = ::accept(sock_.fd(), nullptr, nullptr);
            if (fd >= 0) {
                Socket s(fd);
                s.set_nodelay();
                return s;
            }
            if (errno == EINTR) continue;
            return std::nullopt;  // listener closed
        }
    }

    void close() {
        sock_.shutdown();
        sock_.close();
    }

private:
    Socket sock_;
    uint16_t port_ = 0;
};

inline bool port_available(uint16_t port, const std::string& host = "127.0.0.1") {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) return false;
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    struct sockaddr_in addr {};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    ::inet_pton(AF_INET, host.c_str(), &addr.sin_addr);
    bool ok = ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0;
    ::close(fd);
    return ok;
}

inline void send_frame(Socket& s, const Frame& f) { s.send_all(encode_frame(f)); }

// Accumulates stream bytes and yields complete frames.
class FrameReader {
public:
    explicit FrameReader(Socket& sock) : sock_(sock) {}

    // Blocks until a full frame is available. nullopt on EOF.
    // Throws on malformed input (bad magic/version) or transport failure.
    std::optional<Frame> read_frame() {
        while (true) {
            if (auto parsed = try_parse_frame({buf_.data(), buf_.size()})) {
                buf_.erase(buf_.begin(), buf_.begin() + parsed->second);
                return std::move(parsed->first);
            }
            uint8_t chunk[64 * 1024];
            size_t n = sock_.recv_some(chunk, sizeof(chunk));
            if (n == 0) {
                if (!buf_.empty()) throw IncompleteError("connection closed mid-frame");
                return std::nullopt;
            }
            buf_.insert(buf_.end(), chunk, chunk + n);
        }
    }

private:
    Socket& sock_;
    Bytes buf_;
};

}  // namespace deskrl::net
