// Serialization-offload pipeline: a pull endpoint whose frames are decoded
// by background workers, keeping all network reads and deserialization off
// the consumer's logic thread. take() only pops a finished item.
#pragma once

#include <thread>
#include <vector>

#include "deskrl/channel.hpp"
#include "deskrl/value.hpp"

namespace deskrl {

struct Message {
    MsgKind kind = MsgKind::Data;
    std::string topic;
    Value value;
};

inline int default_proto_workers() {
    std::string v = env_or("SURREAL_PROTO_WORKERS", "");
    if (!v.empty()) {
        int n = std::atoi(v.c_str());
        if (n >= 1) return n;
    }
    return 2;
}

class OffloadFetcher {
public:
    // Binds the pull side. The decoded-item queue holds at most
    // queue_capacity messages; beyond that the pipeline blocks upstream.
    OffloadFetcher(uint16_t port, size_t queue_capacity, int workers = default_proto_workers())
        : server_(port, std::max<size_t>(queue_capacity, 2)), out_(queue_capacity) {
        if (queue_capacity < 1) throw ConfigError("queue_capacity must be >= 1");
        if (workers < 1) workers = 1;
        for (int i = 0; i < workers; ++i)
            workers_.emplace_back([this] { worker_loop(); });
    }

    ~OffloadFetcher() { close(); }

    uint16_t port() const { return server_.port(); }

    // No decoding happens here; items arrive fully deserialized, in
    // arrival order.
    std::optional<Message> take(long timeout_ms = -1) {
        auto m = out_.pop(timeout_ms);
        if (!m && broken_.load(std::memory_order_acquire))
            throw BrokenPipelineError(error_text_);
        return m;
    }

    uint64_t decoded() const { return decoded_.load(std::memory_order_relaxed); }

    void close() {
        bool expected = false;
        if (!closing_.compare_exchange_strong(expected, true)) return;
        server_.close();
        out_.close();
        {
            std::lock_guard lk(seq_mu_);
            seq_cv_.notify_all();
        }
        for (auto& w : workers_)
            if (w.joinable()) w.join();
    }

private:
    void worker_loop() {
        try {
            while (true) {
                Frame frame;
                uint64_t my_seq;
                {
                    // One worker at a time waits on the socket queue so that
                    // sequence numbers match arrival order.
                    std::unique_lock lk(intake_mu_);
                    std::optional<Frame> f;
                    while (!(f = server_.pull(100))) {
                        if (closing_ || out_.closed()) return;
                    }
                    my_seq = next_seq_++;
                    frame = std::move(*f);
                }
                Message msg{frame.kind, std::move(frame.topic), deserialize(frame.payload)};
                decoded_.fetch_add(1, std::memory_order_relaxed);
                // Emit in arrival order.
                {
                    std::unique_lock lk(seq_mu_);
                    seq_cv_.wait(lk, [&] {
                        return emit_seq_ == my_seq || closing_ || broken_.load(std::memory_order_acquire);
                    });
                    if (closing_ || broken_.load(std::memory_order_acquire)) return;
                }
                if (!out_.push(std::move(msg))) return;
                {
                    std::lock_guard lk(seq_mu_);
                    emit_seq_++;
                }
                seq_cv_.notify_all();
            }
        } catch (const std::exception& e) {
            {
                std::lock_guard lk(seq_mu_);
                error_text_ = e.what();
                broken_.store(true, std::memory_order_release);
            }
            out_.close();
            seq_cv_.notify_all();
        }
    }

    PullServer server_;
    BoundedQueue<Message> out_;
    std::vector<std::thread> workers_;
    std::mutex intake_mu_;
    uint64_t next_seq_ = 0;
    std::mutex seq_mu_;
    std::condition_variable seq_cv_;
    uint64_t emit_seq_ = 0;
    std::atomic<bool> closing_{false};
    std::atomic<bool> broken_{false};
    std::atomic<uint64_t> decoded_{0};
    std::string error_text_;
};

}  // namespace deskrl
