// Experience buffer shards (FIFO for on-policy consumption, uniform
// sampling for off-policy use), producer->shard routing, and the versioned
// parameter server on the pub-sub channel.
//
// A shard is a single-writer service loop fed by its pull endpoint; sample
// requests arrive as control frames on the same endpoint and are serialized
// with inserts by the loop. Replies are pushed to the requester's own pull
// endpoint. Payloads use the Value codec: msg kind 0x01 for experience,
// 0x02 for parameters.
#pragma once

#include <atomic>
#include <deque>
#include <thread>
#include <unordered_map>

#include "deskrl/channel.hpp"
#include "deskrl/value.hpp"

namespace deskrl::datasvc {

// ---- experience batches --------------------------------------------------------

struct ExperienceBatch {
    std::string producer_id;
    int64_t sequence_number = 0;
    Value data;

    bool operator==(const ExperienceBatch&) const = default;
};

inline Value batch_to_value(const ExperienceBatch& b) {
    return Value(Value::Map{
        {"producer", Value(b.producer_id)},
        {"seq", Value(b.sequence_number)},
        {"data", b.data},
    });
}

inline ExperienceBatch batch_from_value(const Value& v) {
    ExperienceBatch b;
    b.producer_id = v.at("producer").as_str();
    b.sequence_number = v.at("seq").as_int();
    b.data = v.at("data");
    return b;
}

// ---- buffer shard ----------------------------------------------------------------

enum class ShardMode { Fifo, Uniform };

inline ShardMode shard_mode_from(const std::string& s) {
    if (s == "fifo") return ShardMode::Fifo;
    if (s == "uniform") return ShardMode::Uniform;
    throw ConfigError("unknown shard mode '" + s + "'");
}

// Plain single-writer data structure; the owning service loop serializes
// access. Inserts beyond capacity evict oldest-first (counted).
class BufferShard {
public:
    BufferShard(ShardMode mode, size_t capacity) : mode_(mode), capacity_(capacity ? capacity : 1) {}

    ShardMode mode() const { return mode_; }
    size_t size() const { return items_.size(); }
    size_t capacity() const { return capacity_; }
    uint64_t ingest_count() const { return ingest_; }
    uint64_t eviction_count() const { return evictions_; }
    bool accepting() const { return accepting_; }

    void shutdown() { accepting_ = false; }

    void insert(ExperienceBatch batch) {
        if (!accepting_) throw Error("rejected", "shard shutting down");
        auto [it, fresh] = last_seq_.try_emplace(batch.producer_id, batch.sequence_number);
        if (!fresh) {
            if (batch.sequence_number <= it->second)
                throw IntegrityError("producer '" + batch.producer_id + "' sequence " +
                                     std::to_string(batch.sequence_number) + " not increasing");
            it->second = batch.sequence_number;
        }
        if (items_.size() >= capacity_) {
            items_.pop_front();
            evictions_++;
        }
        items_.push_back(std::move(batch));
        ingest_++;
    }

    // Removes and returns the oldest n, or nullopt when fewer are stored
    // (the service loop retries until its deadline).
    std::optional<std::vector<ExperienceBatch>> try_sample_fifo(size_t n) {
        if (mode_ != ShardMode::Fifo) throw ContractError("shard is not in fifo mode");
        if (items_.size() < n) return std::nullopt;
        std::vector<ExperienceBatch> out;
        out.reserve(n);
        for (size_t i = 0; i < n; ++i) {
            out.push_back(std::move(items_.front()));
            items_.pop_front();
        }
        return out;
    }

    // n iid draws with replacement; contents unchanged; reproducible by seed.
    std::vector<ExperienceBatch> sample_uniform(size_t n, uint64_t seed) const {
        if (mode_ != ShardMode::Uniform) throw ContractError("shard is not in uniform mode");
        if (items_.empty()) throw Error("empty", "cannot sample from an empty shard");
        Rng rng(seed);
        std::vector<ExperienceBatch> out;
        out.reserve(n);
        for (size_t i = 0; i < n; ++i) out.push_back(items_[rng.below(items_.size())]);
        return out;
    }

    const std::deque<ExperienceBatch>& contents() const { return items_; }

private:
    ShardMode mode_;
    size_t capacity_;
    std::deque<ExperienceBatch> items_;
    std::unordered_map<std::string, int64_t> last_seq_;
    uint64_t ingest_ = 0;
    uint64_t evictions_ = 0;
    bool accepting_ = true;
};

// ---- shard routing ------------------------------------------------------------------

enum class RoutePolicy { RoundRobin, Hash };

// Deterministic producer->shard assignment. Round-robin keeps a per-producer
// counter; hash gives a sticky shard per producer id.
class Router {
public:
    Router(RoutePolicy policy, size_t shards) : policy_(policy), shards_(shards) {
        if (shards < 1) throw ConfigError("need at least one shard");
    }

    size_t route(const std::string& producer_id) {
        if (policy_ == RoutePolicy::Hash) return fnv1a64(producer_id) % shards_;
        return counters_[producer_id]++ % shards_;
    }

private:
    RoutePolicy policy_;
    size_t shards_;
    std::unordered_map<std::string, uint64_t> counters_;
};

// ---- parameter snapshots --------------------------------------------------------------

struct ParameterSnapshot {
    int64_t version = 0;
    std::vector<double> flat_params;
    uint64_t checksum = 0;  // fnv1a64 over the packed little-endian bytes
    double timestamp = 0;   // unix seconds; informational only
};

inline uint64_t params_checksum(std::span<const double> params) {
    return fnv1a64(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(params.data()),
                                            params.size() * sizeof(double)));
}

inline ParameterSnapshot make_snapshot(int64_t version, std::vector<double> params) {
    ParameterSnapshot s;
    s.version = version;
    s.flat_params = std::move(params);
    s.checksum = params_checksum(s.flat_params);
    s.timestamp = static_cast<double>(unix_time_ms()) / 1000.0;
    return s;
}

inline Value snapshot_to_value(const ParameterSnapshot& s) {
    return Value(Value::Map{
        {"version", Value(s.version)},
        {"params", Value(s.flat_params)},
        {"checksum", Value(static_cast<int64_t>(s.checksum))},
        {"timestamp", Value(s.timestamp)},
    });
}

inline ParameterSnapshot snapshot_from_value(const Value& v) {
    ParameterSnapshot s;
    s.version = v.at("version").as_int();
    s.flat_params = v.at("params").as_f64array();
    s.checksum = static_cast<uint64_t>(v.at("checksum").as_int());
    s.timestamp = v.at("timestamp").as_double();
    return s;
}

constexpr const char* kParamsTopic = "params";

// Publish side of the parameter broadcast; binds the pub-sub endpoint.
// Versions from a single publisher must strictly increase.
class ParameterServer {
public:
    explicit ParameterServer(uint16_t port, size_t per_subscriber_buffer = 8)
        : server_(port, per_subscriber_buffer) {}

    uint16_t port() const { return server_.port(); }
    size_t subscriber_count() { return server_.subscriber_count(kParamsTopic); }

    void publish(const ParameterSnapshot& snapshot) {
        if (snapshot.version <= last_version_)
            throw ContractError("snapshot version " + std::to_string(snapshot.version) +
                                " does not increase on " + std::to_string(last_version_));
        last_version_ = snapshot.version;
        last_frame_ = Frame{MsgKind::Params, kParamsTopic, serialize(snapshot_to_value(snapshot))};
        server_.publish(kParamsTopic, last_frame_);
    }

    // Re-sends the current snapshot so that subscribers joining after the
    // original broadcast still converge (no-replay channel). Subscribers
    // keep the highest version, so duplicates are harmless.
    void rebroadcast() {
        if (last_version_ >= 0) server_.publish(kParamsTopic, last_frame_);
    }

    void close() { server_.close(); }

private:
    PubServer server_;
    int64_t last_version_ = -1;
    Frame last_frame_;
};

// Subscriber-side cache: keeps the highest checksum-verified version seen.
// fetch_latest never goes backwards; corrupt snapshots are discarded.
class ParameterClient {
public:
    explicit ParameterClient(Endpoint ep, long connect_deadline_ms = 15000)
        : sub_(ep, kParamsTopic, 8, connect_deadline_ms) {
        worker_ = std::thread([this] { recv_loop(); });
    }

    ~ParameterClient() { close(); }

    std::optional<ParameterSnapshot> fetch_latest() const {
        std::lock_guard lk(mu_);
        if (latest_.version < 0) return std::nullopt;  // not ready
        return latest_;
    }

    int64_t version() const {
        std::lock_guard lk(mu_);
        return latest_.version;
    }

    uint64_t discarded_corrupt() const { return discarded_.load(); }

    // Blocks until a snapshot with version >= min_version arrives.
    std::optional<ParameterSnapshot> wait_for_version(int64_t min_version, long timeout_ms) {
        int64_t deadline = now_ms() + timeout_ms;
        while (now_ms() < deadline) {
            {
                std::lock_guard lk(mu_);
                if (latest_.version >= min_version) return latest_;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(2));
        }
        return std::nullopt;
    }

    void close() {
        bool expected = false;
        if (!closing_.compare_exchange_strong(expected, true)) return;
        sub_.close();
        if (worker_.joinable()) worker_.join();
    }

private:
    void recv_loop() {
        while (!closing_.load()) {
            auto frame = sub_.recv(200);
            if (!frame) {
                if (!sub_.live()) break;  // channel closed; timeouts keep waiting
                continue;
            }
            if (frame->kind != MsgKind::Params) continue;
            try {
                ParameterSnapshot s = snapshot_from_value(deserialize(frame->payload));
                if (params_checksum(s.flat_params) != s.checksum) {
                    discarded_.fetch_add(1);
                    continue;  // keep the previous good snapshot
                }
                std::lock_guard lk(mu_);
                if (s.version > latest_.version) latest_ = std::move(s);
            } catch (const Error&) {
                discarded_.fetch_add(1);
            }
        }
    }

    SubClient sub_;
    std::thread worker_;
    mutable std::mutex mu_;
    ParameterSnapshot latest_{-1, {}, 0, 0};
    std::atomic<uint64_t> discarded_{0};
    std::atomic<bool> closing_{false};
};

// ---- shard service over the wire -----------------------------------------------------------

// Control-frame request protocol. Replies are pushed to the requester's
// pull endpoint as data frames with topic "reply".
struct SampleRequest {
    std::string op;  // "sample_fifo" | "sample_uniform"
    int64_t n = 0;
    uint64_t seed = 0;
    std::string reply_host;
    uint16_t reply_port = 0;
    int64_t request_id = 0;
    long timeout_ms = 1000;
};

inline Frame request_to_frame(const SampleRequest& r) {
    Value v(Value::Map{
        {"op", Value(r.op)},
        {"n", Value(r.n)},
        {"seed", Value(static_cast<int64_t>(r.seed))},
        {"reply_host", Value(r.reply_host)},
        {"reply_port", Value(static_cast<int64_t>(r.reply_port))},
        {"request_id", Value(r.request_id)},
        {"timeout_ms", Value(static_cast<int64_t>(r.timeout_ms))},
    });
    return Frame{MsgKind::Control, "req", serialize(v)};
}

inline SampleRequest request_from_value(const Value& v) {
    SampleRequest r;
    r.op = v.at("op").as_str();
    r.n = v.at("n").as_int();
    r.seed = static_cast<uint64_t>(v.at("seed").as_int());
    r.reply_host = v.at("reply_host").as_str();
    r.reply_port = static_cast<uint16_t>(v.at("reply_port").as_int());
    r.request_id = v.at("request_id").as_int();
    r.timeout_ms = static_cast<long>(v.at("timeout_ms").as_int());
    return r;
}

// The experience sink and the request channel are separate endpoints so
// that a full FIFO can stop draining experience (backpressure pacing the
// pushers, no experience lost) while requests keep flowing. One loop
// serializes inserts and sampling; no internal locking exposed.
class ShardService {
public:
    ShardService(uint16_t data_port, uint16_t request_port, ShardMode mode, size_t capacity,
                 size_t backlog = 256)
        : shard_(mode, capacity), server_(data_port, backlog), requests_(request_port, 64) {
        loop_ = std::thread([this] { run(); });
    }

    ~ShardService() { close(); }

    uint16_t port() const { return server_.port(); }
    uint16_t request_port() const { return requests_.port(); }
    uint64_t ingest_count() const { return ingest_.load(std::memory_order_relaxed); }
    uint64_t eviction_count() const { return evictions_.load(std::memory_order_relaxed); }
    uint64_t rejected_count() const { return rejected_.load(std::memory_order_relaxed); }
    size_t size() const { return size_.load(std::memory_order_relaxed); }

    void close() {
        bool expected = false;
        if (!closing_.compare_exchange_strong(expected, true)) return;
        shard_.shutdown();
        server_.close();
        requests_.close();
        if (loop_.joinable()) loop_.join();
        for (auto& [key, client] : reply_clients_) client->close();
    }

private:
    struct Pending {
        SampleRequest req;
        int64_t deadline_ms;
    };

    void run() {
        while (!closing_) {
            while (auto frame = requests_.pull(0)) handle_request(*frame);
            // A full FIFO stops draining experience; the bounded socket
            // backlog then blocks the pushers until sampling frees space.
            bool full = shard_.mode() == ShardMode::Fifo && shard_.size() >= shard_.capacity();
            if (!full) {
                if (auto frame = server_.pull(pending_.empty() ? 50 : 5)) handle_data(*frame);
            } else {
                if (auto frame = requests_.pull(5)) handle_request(*frame);
            }
            service_pending();
        }
    }

    void handle_data(const Frame& frame) {
        try {
            if (frame.kind != MsgKind::Data) throw Error("bad-request", "expected experience");
            shard_.insert(batch_from_value(deserialize(frame.payload)));
            mirror_counters();
        } catch (const Error&) {
            rejected_.fetch_add(1, std::memory_order_relaxed);
        }
    }

    void handle_request(const Frame& frame) {
        try {
            if (frame.kind != MsgKind::Control) throw Error("bad-request", "expected control");
            SampleRequest req = request_from_value(deserialize(frame.payload));
            pending_.push_back({req, now_ms() + req.timeout_ms});
            service_pending();
        } catch (const Error&) {
            rejected_.fetch_add(1, std::memory_order_relaxed);
        }
    }

    void service_pending() {
        for (auto it = pending_.begin(); it != pending_.end();) {
            bool handled = false;
            try {
                handled = try_answer(it->req);
            } catch (const Error&) {
                handled = true;  // unanswerable request (bad op / bad mode)
            }
            if (!handled && now_ms() >= it->deadline_ms) {
                reply(it->req, "timeout", {});
                handled = true;
            }
            it = handled ? pending_.erase(it) : ++it;
        }
        mirror_counters();
    }

    bool try_answer(const SampleRequest& req) {
        if (req.op == "sample_fifo") {
            auto batches = shard_.try_sample_fifo(static_cast<size_t>(req.n));
            if (!batches) return false;
            reply(req, "ok", *batches);
            return true;
        }
        if (req.op == "sample_uniform") {
            if (shard_.size() < 1) return false;
            reply(req, "ok", shard_.sample_uniform(static_cast<size_t>(req.n), req.seed));
            return true;
        }
        throw Error("bad-request", "unknown op '" + req.op + "'");
    }

    void reply(const SampleRequest& req, const std::string& status,
               const std::vector<ExperienceBatch>& batches) {
        Value::List items;
        for (const auto& b : batches) items.push_back(batch_to_value(b));
        Value v(Value::Map{
            {"request_id", Value(req.request_id)},
            {"status", Value(status)},
            {"batches", Value(std::move(items))},
        });
        try {
            reply_client(req.reply_host, req.reply_port)
                .push(Frame{MsgKind::Data, "reply", serialize(v)});
        } catch (const TransportError&) {
            // Requester went away; drop the reply.
        }
    }

    PushClient& reply_client(const std::string& host, uint16_t port) {
        std::string key = host + ":" + std::to_string(port);
        auto it = reply_clients_.find(key);
        if (it == reply_clients_.end())
            it = reply_clients_.emplace(key, std::make_unique<PushClient>(Endpoint{host, port})).first;
        return *it->second;
    }

    void mirror_counters() {
        ingest_.store(shard_.ingest_count(), std::memory_order_relaxed);
        evictions_.store(shard_.eviction_count(), std::memory_order_relaxed);
        size_.store(shard_.size(), std::memory_order_relaxed);
    }

    BufferShard shard_;
    PullServer server_;
    std::thread loop_;
    std::deque<Pending> pending_;
    std::unordered_map<std::string, std::unique_ptr<PushClient>> reply_clients_;
    std::atomic<bool> closing_{false};
    std::atomic<uint64_t> ingest_{0}, evictions_{0}, rejected_{0};
    std::atomic<size_t> size_{0};
};

// Requester-side helper: owns a reply inbox (pull endpoint) plus push
// clients to each shard; used by the learner to draw batches.
class ShardClient {
public:
    // inbox_port 0 asks the OS for an ephemeral reply port; pass the
    // orchestrated port when the requester's pull endpoint is a declared
    // service.
    explicit ShardClient(std::vector<Endpoint> shards, uint16_t inbox_port = 0)
        : shards_(std::move(shards)), inbox_(inbox_port, 64) {
        for (const auto& ep : shards_) pushers_.push_back(std::make_unique<PushClient>(ep));
    }

    size_t shard_count() const { return shards_.size(); }

    // Sends one batch to the given shard index.
    void insert(size_t shard, const ExperienceBatch& batch) {
        pushers_.at(shard)->push(Frame{MsgKind::Data, "exp", serialize(batch_to_value(batch))});
    }

    // Request n batches; empty result with status "timeout" when the shard
    // cannot satisfy the request in time.
    struct Reply {
        std::string status;
        std::vector<ExperienceBatch> batches;
    };

    Reply sample_fifo(size_t shard, int64_t n, long timeout_ms) {
        return roundtrip(shard, "sample_fifo", n, 0, timeout_ms);
    }

    Reply sample_uniform(size_t shard, int64_t n, uint64_t seed, long timeout_ms) {
        return roundtrip(shard, "sample_uniform", n, seed, timeout_ms);
    }

    void close() {
        for (auto& p : pushers_) p->close();
        inbox_.close();
    }

private:
    Reply roundtrip(size_t shard, const std::string& op, int64_t n, uint64_t seed, long timeout_ms) {
        SampleRequest req;
        req.op = op;
        req.n = n;
        req.seed = seed;
        req.reply_host = "127.0.0.1";
        req.reply_port = inbox_.port();
        req.request_id = next_request_++;
        req.timeout_ms = timeout_ms;
        pushers_.at(shard)->push(request_to_frame(req));

        int64_t deadline = now_ms() + timeout_ms + 2000;
        while (now_ms() < deadline) {
            auto frame = inbox_.pull(deadline - now_ms());
            if (!frame) break;
            Value v = deserialize(frame->payload);
            if (v.at("request_id").as_int() != req.request_id) continue;  // stale reply
            Reply out;
            out.status = v.at("status").as_str();
            for (const auto& item : v.at("batches").as_list())
                out.batches.push_back(batch_from_value(item));
            return out;
        }
        return Reply{"timeout", {}};
    }

    std::vector<Endpoint> shards_;
    std::vector<std::unique_ptr<PushClient>> pushers_;
    PullServer inbox_;
    int64_t next_request_ = 0;
};

}  // namespace deskrl::datasvc
