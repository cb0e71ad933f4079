// Distributed directives over TCP framing.
//
// Push-Pull: many pushers, one puller; the pull side binds. Delivery is
// exactly-once while both sides stay up, per-pusher FIFO, and lossless:
// a full puller backlog blocks the pushers (TCP backpressure) instead of
// dropping experience.
//
// Publish-Subscribe: one publisher (binds), many subscribers. Fire and
// forget: no subscribers means the frame vanishes, and a slow subscriber
// overrunning its buffer loses the oldest frames with a counted drop.
#pragma once

#include <atomic>
#include <list>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "deskrl/net.hpp"

namespace deskrl {

struct Endpoint {
    std::string host;
    uint16_t port = 0;
};

// Reconnect policy: exponential backoff, base 100 ms, cap 5 s, jitter +-20%.
struct Backoff {
    long base_ms = 100;
    long cap_ms = 5000;
    double jitter = 0.2;

    long delay_ms(int attempt, Rng& rng) const {
        double d = static_cast<double>(base_ms);
        for (int i = 0; i < attempt && d < static_cast<double>(cap_ms); ++i) d *= 2.0;
        if (d > static_cast<double>(cap_ms)) d = static_cast<double>(cap_ms);
        d *= 1.0 + rng.uniform(-jitter, jitter);
        return static_cast<long>(d);
    }
};

// ---- push-pull ---------------------------------------------------------------

class PushClient {
public:
    explicit PushClient(Endpoint ep) : ep_(std::move(ep)), rng_(std::random_device{}()) {}

    // Single connection attempt; refusal throws TransportError with a
    // retry-after hint.
    void connect() {
        std::lock_guard lk(mu_);
        if (!sock_.valid()) sock_ = net::tcp_connect(ep_.host, ep_.port);
    }

    // Retries with backoff until the deadline.
    void connect_retry(long deadline_ms = 15000) {
        int64_t give_up = now_ms() + deadline_ms;
        Backoff policy;
        for (int attempt = 0;; ++attempt) {
            try {
                connect();
                return;
            } catch (const TransportError&) {
                long delay = policy.delay_ms(attempt, rng_);
                if (now_ms() + delay > give_up) throw;
                std::this_thread::sleep_for(std::chrono::milliseconds(delay));
            }
        }
    }

    // Blocks until the frame is fully handed to the transport (the ack).
    // Backpressure from a full puller shows up here as a blocking send.
    void push(const Frame& f) {
        Bytes wire = encode_frame(f);
        std::lock_guard lk(mu_);
        if (!sock_.valid()) sock_ = net::tcp_connect(ep_.host, ep_.port);
        try {
            sock_.send_all(wire);
        } catch (const TransportError&) {
            sock_.close();
            throw;
        }
    }

    bool connected() const {
        std::lock_guard lk(mu_);
        return sock_.valid();
    }

    void close() {
        std::lock_guard lk(mu_);
        sock_.shutdown();
        sock_.close();
    }

private:
    Endpoint ep_;
    mutable std::mutex mu_;
    net::Socket sock_;
    Rng rng_;
};

class PullServer {
public:
    explicit PullServer(uint16_t port, size_t backlog_capacity = 1024)
        : listener_(port), queue_(backlog_capacity) {
        accept_thread_ = std::thread([this] { accept_loop(); });
    }

    ~PullServer() { close(); }

    uint16_t port() const { return listener_.port(); }

    std::optional<Frame> pull(long timeout_ms = -1) {
        auto f = queue_.pop(timeout_ms);
        if (f) pulled_.fetch_add(1, std::memory_order_relaxed);
        return f;
    }

    uint64_t received() const { return received_.load(std::memory_order_relaxed); }
    uint64_t pulled() const { return pulled_.load(std::memory_order_relaxed); }
    size_t backlog() const { return queue_.size(); }

    void close() {
        bool expected = false;
        if (!closing_.compare_exchange_strong(expected, true)) return;
        queue_.close();
        listener_.close();
        {
            std::lock_guard lk(conns_mu_);
            for (auto& c : conns_) c.sock.shutdown();
        }
        if (accept_thread_.joinable()) accept_thread_.join();
        std::lock_guard lk(conns_mu_);
        for (auto& c : conns_)
            if (c.reader.joinable()) c.reader.join();
        conns_.clear();
    }

private:
    struct Conn {
        net::Socket sock;
        std::thread reader;
    };

    void accept_loop() {
        while (auto sock = listener_.accept()) {
            std::lock_guard lk(conns_mu_);
            if (closing_) {
                sock->close();
                break;
            }
            conns_.push_back(Conn{std::move(*sock), {}});
            Conn& c = conns_.back();
            c.reader = std::thread([this, &c] { read_loop(c); });
        }
    }

    void read_loop(Conn& c) {
        try {
            net::FrameReader reader(c.sock);
            while (auto f = reader.read_frame()) {
                received_.fetch_add(1, std::memory_order_relaxed);
                if (!queue_.push(std::move(*f))) return;  // server closed
            }
        } catch (const Error&) {
            // Connection dropped or sent garbage; remaining pushers are unaffected.
        }
    }

    net::Listener listener_;
    BoundedQueue<Frame> queue_;
    std::thread accept_thread_;
    std::mutex conns_mu_;
    std::list<Conn> conns_;
    std::atomic<bool> closing_{false};
    std::atomic<uint64_t> received_{0}, pulled_{0};
};

// ---- publish-subscribe ----------------------------------------------------------

struct SubscriberStats {
    uint64_t enqueued = 0;  // frames accepted into the buffer
    uint64_t sent = 0;      // frames handed to the transport
    uint64_t dropped = 0;   // frames evicted before send (oldest-first)
    size_t buffered = 0;
};

class PubServer {
public:
    explicit PubServer(uint16_t port, size_t per_subscriber_buffer = 64)
        : listener_(port), buffer_cap_(per_subscriber_buffer ? per_subscriber_buffer : 1) {
        accept_thread_ = std::thread([this] { accept_loop(); });
    }

    ~PubServer() { close(); }

    uint16_t port() const { return listener_.port(); }

    // Never blocks on subscribers. Returns the number of subscriber buffers
    // the frame was enqueued to (0 with no matching subscribers).
    size_t publish(const std::string& topic, Frame f) {
        f.topic = topic;
        auto wire = std::make_shared<const Bytes>(encode_frame(f));
        size_t deliveries = 0;
        std::lock_guard lk(subs_mu_);
        for (auto& sub : subs_) {
            std::lock_guard slk(sub->mu);
            if (!sub->ready || sub->gone) continue;
            if (!sub->topic.empty() && sub->topic != topic) continue;
            if (sub->buf.size() >= buffer_cap_) {
                sub->buf.pop_front();
                sub->stats.dropped++;
            }
            sub->buf.push_back(wire);
            sub->stats.enqueued++;
            sub->cv.notify_one();
            deliveries++;
        }
        return deliveries;
    }

    size_t subscriber_count(const std::string& topic = "") const {
        size_t n = 0;
        std::lock_guard lk(subs_mu_);
        for (const auto& sub : subs_) {
            std::lock_guard slk(sub->mu);
            if (!sub->ready || sub->gone) continue;
            if (topic.empty() || sub->topic.empty() || sub->topic == topic) n++;
        }
        return n;
    }

    std::vector<SubscriberStats> stats() const {
        std::vector<SubscriberStats> out;
        std::lock_guard lk(subs_mu_);
        for (const auto& sub : subs_) {
            std::lock_guard slk(sub->mu);
            SubscriberStats s = sub->stats;
            s.buffered = sub->buf.size();
            out.push_back(s);
        }
        return out;
    }

    void close() {
        bool expected = false;
        if (!closing_.compare_exchange_strong(expected, true)) return;
        listener_.close();
        {
            std::lock_guard lk(subs_mu_);
            for (auto& sub : subs_) {
                std::lock_guard slk(sub->mu);
                sub->gone = true;
                sub->sock.shutdown();
                sub->cv.notify_all();
            }
        }
        if (accept_thread_.joinable()) accept_thread_.join();
        std::lock_guard lk(subs_mu_);
        for (auto& sub : subs_)
            if (sub->worker.joinable()) sub->worker.join();
        subs_.clear();
    }

private:
    struct Sub {
        net::Socket sock;
        std::string topic;
        std::mutex mu;
        std::condition_variable cv;
        std::deque<std::shared_ptr<const Bytes>> buf;
        SubscriberStats stats;
        bool ready = false;  // handshake received
        bool gone = false;
        std::thread worker;
    };

    void accept_loop() {
        while (auto sock = listener_.accept()) {
            std::lock_guard lk(subs_mu_);
            if (closing_) break;
            auto sub = std::make_shared<Sub>();
            sub->sock = std::move(*sock);
            subs_.push_back(sub);
            sub->worker = std::thread([this, sub] { sub_loop(*sub); });
        }
    }

    void sub_loop(Sub& sub) {
        try {
            net::FrameReader reader(sub.sock);
            auto hello = reader.read_frame();
            if (!hello || hello->kind != MsgKind::Control) return;
            {
                std::lock_guard slk(sub.mu);
                sub.topic = hello->topic;
                sub.ready = true;
            }
            while (true) {
                std::shared_ptr<const Bytes> wire;
                {
                    std::unique_lock slk(sub.mu);
                    sub.cv.wait(slk, [&] { return !sub.buf.empty() || sub.gone; });
                    if (sub.gone) return;
                    wire = std::move(sub.buf.front());
                    sub.buf.pop_front();
                    sub.stats.sent++;  // handed to the transport
                }
                sub.sock.send_all(*wire);
            }
        } catch (const Error&) {
            std::lock_guard slk(sub.mu);
            sub.gone = true;
        }
    }

    net::Listener listener_;
    size_t buffer_cap_;
    std::thread accept_thread_;
    mutable std::mutex subs_mu_;
    std::vector<std::shared_ptr<Sub>> subs_;
    std::atomic<bool> closing_{false};
};

class SubClient {
public:
    // Joining subscribers see only frames published after the handshake;
    // there is no replay.
    SubClient(Endpoint ep, std::string topic, size_t inbox_capacity = 64,
              long connect_deadline_ms = 15000)
        : inbox_(inbox_capacity) {
        Rng rng(std::random_device{}());
        Backoff policy;
        int64_t give_up = now_ms() + connect_deadline_ms;
        for (int attempt = 0;; ++attempt) {
            try {
                sock_ = net::tcp_connect(ep.host, ep.port);
                break;
            } catch (const TransportError&) {
                long delay = policy.delay_ms(attempt, rng);
                if (now_ms() + delay > give_up) throw;
                std::this_thread::sleep_for(std::chrono::milliseconds(delay));
            }
        }
        net::send_frame(sock_, Frame{MsgKind::Control, std::move(topic), {}});
        reader_thread_ = std::thread([this] { read_loop(); });
    }

    ~SubClient() { close(); }

    std::optional<Frame> recv(long timeout_ms = -1) { return inbox_.pop(timeout_ms); }

    bool live() const { return !inbox_.closed(); }

    void close() {
        bool expected = false;
        if (!closing_.compare_exchange_strong(expected, true)) return;
        inbox_.close();
        sock_.shutdown();
        if (reader_thread_.joinable()) reader_thread_.join();
        sock_.close();
    }

private:
    void read_loop() {
        try {
            net::FrameReader reader(sock_);
            while (auto f = reader.read_frame()) {
                if (!inbox_.push(std::move(*f))) return;
            }
        } catch (const Error&) {
        }
        inbox_.close();
    }

    net::Socket sock_;
    BoundedQueue<Frame> inbox_;
    std::thread reader_thread_;
    std::atomic<bool> closing_{false};
};

}  // namespace deskrl
