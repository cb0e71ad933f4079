// Benchmark harnesses behind `bench proto|scaling|shard`: structured
// line-delimited reports over real multi-process runs.
#pragma once

#include <iomanip>
#include <iostream>
#include <numeric>

#include "deskrl/datasvc.hpp"
#include "deskrl/offload.hpp"
#include "deskrl/orchestra.hpp"
#include "deskrl/trajectory.hpp"
#include "deskrl/ppo.hpp"

namespace deskrl::bench {

namespace fs = std::filesystem;

// ---- child process management -----------------------------------------------------

class ChildSet {
public:
    explicit ChildSet(std::string log_dir) : log_dir_(std::move(log_dir)) {
        fs::create_directories(log_dir_);
    }

    ~ChildSet() { terminate(); }

    void spawn(const std::vector<std::string>& cmd, const std::string& tag) {
        std::string err;
        pid_t pid = orchestra::detail::spawn_process(
            cmd, {}, (fs::path(log_dir_) / (tag + ".log")).string(), err);
        if (pid < 0) throw ConfigError("bench worker spawn failed: " + err);
        pids_.push_back(pid);
    }

    // Waits for voluntary exits up to the deadline, then kills stragglers.
    void terminate(int grace_ms = 500) {
        int64_t deadline = now_ms() + grace_ms;
        while (now_ms() < deadline && reap() > 0)
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
        for (pid_t pid : pids_) ::kill(-pid, SIGKILL);
        for (pid_t pid : pids_) ::waitpid(pid, nullptr, 0);
        pids_.clear();
    }

private:
    size_t reap() {
        size_t alive = 0;
        for (pid_t pid : pids_)
            if (::waitpid(pid, nullptr, WNOHANG) == 0) alive++;
        return alive;
    }

    std::string log_dir_;
    std::vector<pid_t> pids_;
};

inline std::string bench_log_dir() {
    return "/tmp/deskrl-bench-" + std::to_string(::getpid());
}

// ---- proto bench: inline decode vs offload pipeline ---------------------------------

struct ProtoBenchOptions {
    size_t payload_bytes = 1 << 20;  // 1 MB messages
    int producers = 2;
    int workers = default_proto_workers();
    long duration_ms = 10000;
    long warmup_ms = 2000;
    std::string binary;  // self path for worker spawning
};

struct ProtoBenchReport {
    double inline_rate = 0;   // messages/s
    double offload_rate = 0;  // messages/s
    double ratio = 0;
    size_t payload_bytes = 0;
    int workers = 0;
};

// Fixed consumer-side work per message: touch every element once.
inline double consume_work(const Value& v) {
    double sum = 0;
    for (double x : v.at("x").as_f64array()) sum += x;
    return sum;
}

inline int run_bench_pusher(const std::string& host, uint16_t port, size_t payload_bytes,
                            long duration_ms) {
    std::vector<double> data(payload_bytes / 8, 1.0);
    Bytes wire =
        encode_frame(Frame{MsgKind::Data, "bench", serialize(Value(Value::Map{{"x", Value(data)}}))});
    try {
        net::Socket sock = net::tcp_connect(host, port);
        int64_t deadline = now_ms() + duration_ms;
        while (now_ms() < deadline) sock.send_all(wire);
    } catch (const TransportError&) {
        // consumer closed; normal end of a phase
    }
    return 0;
}

inline ProtoBenchReport run_proto_bench(const ProtoBenchOptions& opt, std::ostream& out) {
    ChildSet children(bench_log_dir());
    long producer_ms = opt.warmup_ms + opt.duration_ms + 4000;

    auto spawn_producers = [&](uint16_t port, const std::string& tag) {
        for (int p = 0; p < opt.producers; ++p)
            children.spawn({opt.binary, "worker", "bench-pusher", "--host", "127.0.0.1", "--port",
                            std::to_string(port), "--payload-bytes", std::to_string(opt.payload_bytes),
                            "--duration-ms", std::to_string(producer_ms)},
                           tag + "-pusher-" + std::to_string(p));
    };

    double sink = 0;
    auto measure = [&](auto&& take_one) {
        int64_t t_end_warmup = now_ms() + opt.warmup_ms;
        while (now_ms() < t_end_warmup) take_one();
        uint64_t count = 0;
        double t0 = now_sec();
        int64_t deadline = now_ms() + opt.duration_ms;
        while (now_ms() < deadline)
            if (take_one()) count++;
        return static_cast<double>(count) / (now_sec() - t0);
    };

    ProtoBenchReport report;
    report.payload_bytes = opt.payload_bytes;
    report.workers = opt.workers;

    {
        // Inline decode-on-take: deserialization runs on the consumer thread.
        PullServer server(0, 4);
        spawn_producers(server.port(), "inline");
        report.inline_rate = measure([&]() -> bool {
            auto f = server.pull(100);
            if (!f) return false;
            sink += consume_work(deserialize(f->payload));
            return true;
        });
        server.close();
        children.terminate();
    }
    {
        // Offloaded: workers decode in the background, take() just pops.
        OffloadFetcher fetcher(0, 4, opt.workers);
        spawn_producers(fetcher.port(), "offload");
        report.offload_rate = measure([&]() -> bool {
            auto m = fetcher.take(100);
            if (!m) return false;
            sink += consume_work(m->value);
            return true;
        });
        fetcher.close();
        children.terminate();
    }

    report.ratio = report.offload_rate / std::max(1e-9, report.inline_rate);
    nlohmann::json j{{"bench", "proto"},
                     {"payload_bytes", report.payload_bytes},
                     {"producers", opt.producers},
                     {"workers", report.workers},
                     {"inline_msgs_per_sec", report.inline_rate},
                     {"offload_msgs_per_sec", report.offload_rate},
                     {"ratio", report.ratio},
                     {"hw_threads", static_cast<int>(std::thread::hardware_concurrency())},
                     {"checksum", sink != 0}};
    out << j.dump() << "\n";
    return report;
}

// ---- scaling bench: aggregate env steps/s vs local actor count ----------------------------

struct ScalingBenchOptions {
    std::vector<int> actor_counts{1, 2, 4, 8};
    std::string env_id = "pointmass2d";
    int steps_per_sec = 2000;  // per-actor pace, emulating a fixed-rate simulator
    int segment_len = 64;
    long duration_ms = 8000;
    long warmup_ms = 2000;
    std::string binary;
};

struct ScalingBenchReport {
    std::vector<std::pair<int, double>> rates;  // (actors, steps/s)
    double slope = 0;       // through-origin fit
    double r_squared = 0;
    double efficiency = 0;  // slope / single-actor rate
};

// Paced rollout producer: real env, real segments, fixed step budget.
inline int run_bench_actor(const std::string& env_id, const std::string& host, uint16_t port,
                           int steps_per_sec, int segment_len, long duration_ms, int index) {
    algo::PolicyBundle bundle(envs::spec_for(env_id), {8, 8});
    Rng rng(static_cast<uint64_t>(index) + 1);
    algo::BundleParams params = init_bundle(bundle, rng);
    algo::ActorPolicyView view{&bundle.policy, &params.mean, &params.log_std, &params.value};
    algo::RolloutWorker worker(envs::make_env(env_id), static_cast<uint64_t>(index) * 131 + 7,
                               static_cast<uint64_t>(index) * 17 + 3,
                               "bench-actor-" + std::to_string(index));

    PushClient sink({host, port});
    sink.connect_retry(5000);
    auto t0 = std::chrono::steady_clock::now();
    int64_t deadline = now_ms() + duration_ms;
    int64_t segments = 0, seq = 0;
    try {
        while (now_ms() < deadline) {
            auto seg = worker.rollout(view, segment_len, 1);
            datasvc::ExperienceBatch batch{"bench-actor-" + std::to_string(index), seq++,
                                           algo::segment_to_value(seg)};
            sink.push(Frame{MsgKind::Data, "exp", serialize(datasvc::batch_to_value(batch))});
            segments++;
            auto next = t0 + std::chrono::microseconds(segments * 1000000LL * segment_len /
                                                       std::max(1, steps_per_sec));
            std::this_thread::sleep_until(next);
        }
    } catch (const TransportError&) {
    }
    return 0;
}

inline ScalingBenchReport run_scaling_bench(const ScalingBenchOptions& opt, std::ostream& out) {
    ScalingBenchReport report;
    for (int actors : opt.actor_counts) {
        PullServer sink(0, 4096);
        ChildSet children(bench_log_dir());
        for (int i = 0; i < actors; ++i)
            children.spawn({opt.binary, "worker", "bench-actor", "--env", opt.env_id, "--host",
                            "127.0.0.1", "--port", std::to_string(sink.port()), "--steps-per-sec",
                            std::to_string(opt.steps_per_sec), "--seglen",
                            std::to_string(opt.segment_len), "--duration-ms",
                            std::to_string(opt.warmup_ms + opt.duration_ms + 2000), "--actor-index",
                            std::to_string(i)},
                           "scaling-actor-" + std::to_string(i));

        auto count_steps = [&](long window_ms) {
            uint64_t steps = 0;
            int64_t deadline = now_ms() + window_ms;
            while (now_ms() < deadline) {
                auto f = sink.pull(50);
                if (!f) continue;
                auto batch = datasvc::batch_from_value(deserialize(f->payload));
                steps += static_cast<uint64_t>(
                    algo::segment_from_value(batch.data).length);
            }
            return steps;
        };
        count_steps(opt.warmup_ms);
        double t0 = now_sec();
        uint64_t steps = count_steps(opt.duration_ms);
        double rate = static_cast<double>(steps) / (now_sec() - t0);
        report.rates.emplace_back(actors, rate);

        nlohmann::json j{{"bench", "scaling"}, {"actors", actors},      {"steps_per_sec", rate},
                         {"pace", opt.steps_per_sec}, {"seglen", opt.segment_len}};
        out << j.dump() << "\n";
        children.terminate();
        sink.close();
    }

    // Through-origin least squares plus standard R^2 against the mean model.
    double skr = 0, skk = 0, mean = 0;
    for (auto& [k, r] : report.rates) {
        skr += k * r;
        skk += static_cast<double>(k) * k;
        mean += r;
    }
    mean /= static_cast<double>(report.rates.size());
    report.slope = skr / skk;
    double ss_res = 0, ss_tot = 0;
    for (auto& [k, r] : report.rates) {
        ss_res += (r - report.slope * k) * (r - report.slope * k);
        ss_tot += (r - mean) * (r - mean);
    }
    report.r_squared = 1.0 - ss_res / std::max(1e-9, ss_tot);
    double rate1 = report.rates.front().second;
    report.efficiency = report.slope / std::max(1e-9, rate1);

    nlohmann::json j{{"bench", "scaling-fit"},
                     {"slope", report.slope},
                     {"r_squared", report.r_squared},
                     {"efficiency", report.efficiency}};
    out << j.dump() << "\n";
    return report;
}

// ---- shard bench: aggregate ingest vs shard count ------------------------------------------

struct ShardBenchOptions {
    std::vector<int> shard_counts{1, 3, 5};
    int producers = 12;
    int calibration_producers = 4;
    size_t batch_bytes = 256 * 1024;
    double demand_factor = 1.45;  // total demand relative to 1-shard capacity
    long duration_ms = 8000;
    long warmup_ms = 2000;
    std::string binary;
};

struct ShardBenchReport {
    double single_shard_capacity = 0;  // batches/s, saturated
    double demand = 0;                 // offered batches/s in the comparison phases
    std::vector<std::pair<int, double>> rates;
};

// Producer pushing fixed-size batches round-robin over the shard ports.
// rate == 0 means unthrottled.
inline int run_shard_producer(const std::vector<uint16_t>& ports, double rate, size_t batch_bytes,
                              long duration_ms, int index) {
    std::vector<std::unique_ptr<PushClient>> shards;
    for (uint16_t p : ports) shards.push_back(std::make_unique<PushClient>(Endpoint{"127.0.0.1", p}));
    std::vector<double> payload(batch_bytes / 8, 0.5);
    std::string producer = "shard-producer-" + std::to_string(index);

    auto t0 = std::chrono::steady_clock::now();
    int64_t deadline = now_ms() + duration_ms;
    int64_t seq = 0;
    while (now_ms() < deadline) {
        datasvc::ExperienceBatch batch{producer, seq, Value(payload)};
        Bytes wire = serialize(datasvc::batch_to_value(batch));
        size_t shard = static_cast<size_t>(seq) % ports.size();
        bool sent = false;
        for (size_t attempt = 0; attempt < ports.size() && !sent; ++attempt) {
            try {
                shards[(shard + attempt) % ports.size()]->push(Frame{MsgKind::Data, "exp", wire});
                sent = true;
            } catch (const TransportError&) {
            }
        }
        if (!sent) break;  // all shards gone: phase over
        seq++;
        if (rate > 0)
            std::this_thread::sleep_until(
                t0 + std::chrono::microseconds(static_cast<int64_t>(seq * 1e6 / rate)));
    }
    return 0;
}

inline double measure_ingest_rate(const std::vector<std::unique_ptr<datasvc::ShardService>>& shards,
                                  long warmup_ms, long duration_ms) {
    std::this_thread::sleep_for(std::chrono::milliseconds(warmup_ms));
    uint64_t before = 0;
    for (const auto& s : shards) before += s->ingest_count();
    double t0 = now_sec();
    std::this_thread::sleep_for(std::chrono::milliseconds(duration_ms));
    uint64_t after = 0;
    for (const auto& s : shards) after += s->ingest_count();
    return static_cast<double>(after - before) / (now_sec() - t0);
}

inline ShardBenchReport run_shard_bench(const ShardBenchOptions& opt, std::ostream& out) {
    ShardBenchReport report;
    auto ports_arg = [](const std::vector<std::unique_ptr<datasvc::ShardService>>& shards) {
        std::string s;
        for (const auto& shard : shards) s += (s.empty() ? "" : ",") + std::to_string(shard->port());
        return s;
    };
    long child_ms = opt.warmup_ms + opt.duration_ms + 4000;

    {
        // Calibration: saturate a single shard to find its capacity.
        std::vector<std::unique_ptr<datasvc::ShardService>> shards;
        shards.push_back(std::make_unique<datasvc::ShardService>(0, datasvc::ShardMode::Uniform, 64));
        ChildSet children(bench_log_dir());
        for (int p = 0; p < opt.calibration_producers; ++p)
            children.spawn({opt.binary, "worker", "shard-producer", "--ports", ports_arg(shards),
                            "--rate", "0", "--batch-bytes", std::to_string(opt.batch_bytes),
                            "--duration-ms", std::to_string(child_ms), "--producer-index",
                            std::to_string(p)},
                           "calibrate-" + std::to_string(p));
        report.single_shard_capacity = measure_ingest_rate(shards, opt.warmup_ms, opt.duration_ms);
        children.terminate();
        for (auto& s : shards) s->close();
    }
    report.demand = opt.demand_factor * report.single_shard_capacity;
    nlohmann::json cal{{"bench", "shard"},
                       {"phase", "calibrate"},
                       {"single_shard_capacity", report.single_shard_capacity},
                       {"demand", report.demand},
                       {"batch_bytes", opt.batch_bytes}};
    out << cal.dump() << "\n";

    // Fixed offered load, varying shard count: the Table-2 shape.
    double per_producer = report.demand / opt.producers;
    for (int count : opt.shard_counts) {
        std::vector<std::unique_ptr<datasvc::ShardService>> shards;
        for (int s = 0; s < count; ++s)
            shards.push_back(std::make_unique<datasvc::ShardService>(0, datasvc::ShardMode::Uniform, 64));
        ChildSet children(bench_log_dir());
        for (int p = 0; p < opt.producers; ++p)
            children.spawn({opt.binary, "worker", "shard-producer", "--ports", ports_arg(shards),
                            "--rate", std::to_string(per_producer), "--batch-bytes",
                            std::to_string(opt.batch_bytes), "--duration-ms", std::to_string(child_ms),
                            "--producer-index", std::to_string(p)},
                           "shard" + std::to_string(count) + "-" + std::to_string(p));
        double rate = measure_ingest_rate(shards, opt.warmup_ms, opt.duration_ms);
        report.rates.emplace_back(count, rate);
        nlohmann::json j{{"bench", "shard"},
                         {"phase", "measure"},
                         {"shards", count},
                         {"aggregate_ingest_per_sec", rate},
                         {"offered", report.demand}};
        out << j.dump() << "\n";
        children.terminate();
        for (auto& s : shards) s->close();
    }
    return report;
}

}  // namespace deskrl::bench
