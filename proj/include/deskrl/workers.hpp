// Process entry points for the distributed trainers, plus the glue that
// declares the experiment graphs and drives a full training run on the
// local backend.
//
// PPO topology (one process per box below):
//   actor-i  --push segments-->  replay-k  --replies-->  learner (binds "feed")
//   learner  --push snapshot-->  ps-in (parameter server process)
//   ps       --pub-sub "params"-->  actors
// ES topology:
//   es-master binds "ps" (iteration broadcasts) and "records" (pull);
//   actors subscribe, evaluate their members, push records.
//
// Workers find their endpoints in SYMPH_<SERVICE>_HOST/PORT, injected by
// the orchestrator.
#pragma once

#include <fstream>
#include <iostream>

#include "deskrl/datasvc.hpp"
#include "deskrl/es.hpp"
#include "deskrl/offload.hpp"
#include "deskrl/orchestra.hpp"
#include "deskrl/ppo.hpp"

namespace deskrl::workers {

namespace fs = std::filesystem;

inline std::string require_env(const std::string& key) {
    const char* v = std::getenv(key.c_str());
    if (!v || !*v) throw ConfigError("missing environment variable " + key);
    return v;
}

inline std::string env_key(const std::string& service, const char* suffix) {
    std::string key = service;
    for (auto& c : key) c = (c == '-') ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return "SYMPH_" + key + suffix;
}

inline Endpoint service_endpoint(const std::string& service) {
    Endpoint ep;
    ep.host = require_env(env_key(service, "_HOST"));
    ep.port = static_cast<uint16_t>(std::stoi(require_env(env_key(service, "_PORT"))));
    return ep;
}

inline uint16_t service_port(const std::string& service) {
    return static_cast<uint16_t>(std::stoi(require_env(env_key(service, "_PORT"))));
}

inline std::string self_binary() {
    char buf[4096];
    ssize_t n = ::readlink("/proc/self/exe", buf, sizeof(buf) - 1);
    if (n <= 0) throw ConfigError("cannot resolve /proc/self/exe");
    buf[n] = 0;
    return buf;
}

// ---- structured training log -------------------------------------------------------

// Append-only line-delimited records; one JSON object per iteration.
class TrainLog {
public:
    explicit TrainLog(const fs::path& path) : out_(path, std::ios::app) {}

    void write(const std::map<std::string, double>& fields) {
        nlohmann::json j;
        for (const auto& [k, v] : fields) {
            if (std::isnan(v))
                j[k] = nullptr;
            else
                j[k] = v;
        }
        std::string line = j.dump();
        out_ << line << "\n";
        out_.flush();
        std::cout << line << std::endl;
    }

private:
    std::ofstream out_;
};

inline void write_checkpoint(const fs::path& dir, int64_t iter,
                             const datasvc::ParameterSnapshot& snapshot, const Value& config) {
    fs::create_directories(dir);
    Value v(Value::Map{
        {"snapshot", datasvc::snapshot_to_value(snapshot)},
        {"config", config},
    });
    Bytes bytes = serialize(v);
    std::ofstream out(dir / ("ckpt-" + std::to_string(iter) + ".bin"), std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// ---- config <-> flags ---------------------------------------------------------------

inline std::string join_ints(const std::vector<int>& v) {
    std::string s;
    for (int x : v) s += (s.empty() ? "" : ",") + std::to_string(x);
    return s;
}

inline std::vector<int> split_ints(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
    return out;
}

inline Value ppo_config_value(const algo::PpoConfig& c) {
    return Value(Value::Map{
        {"algo", Value("ppo")},
        {"env", Value(c.env_id)},
        {"actors", Value(int64_t{c.actors})},
        {"shards", Value(int64_t{c.shards})},
        {"gamma", Value(c.gamma)},
        {"kl_target", Value(c.kl_target)},
        {"epochs", Value(int64_t{c.epochs})},
        {"minibatch", Value(int64_t{c.minibatch})},
        {"lr", Value(c.lr)},
        {"grad_clip", Value(c.grad_clip)},
        {"segment_len", Value(int64_t{c.segment_len})},
        {"segments_per_iter", Value(int64_t{c.segments_per_iter})},
        {"staleness_window", Value(int64_t{c.staleness_window})},
        {"hidden", Value(join_ints(c.hidden))},
        {"seed", Value(static_cast<int64_t>(c.seed))},
    });
}

inline Value es_config_value(const algo::EsConfig& c) {
    return Value(Value::Map{
        {"algo", Value("es")},
        {"env", Value(c.env_id)},
        {"actors", Value(int64_t{c.actors})},
        {"population", Value(int64_t{c.population})},
        {"sigma", Value(c.sigma)},
        {"eta", Value(c.eta)},
        {"centered", Value(c.centered_returns)},
        {"mirrored", Value(c.mirrored)},
        {"action_bins", Value(int64_t{c.action_bins})},
        {"hidden", Value(join_ints(c.hidden))},
        {"seed", Value(static_cast<int64_t>(c.seed))},
    });
}

// ---- PPO workers ------------------------------------------------------------------------

// Parameter-server process: relays snapshots pushed by the learner onto the
// pub-sub broadcast. Binds "ps" (publish) and "ps-in" (pull).
inline int run_param_server() {
    datasvc::ParameterServer server(service_port("ps"));
    PullServer in(service_port("ps-in"));
    int64_t last_beat = 0;
    while (true) {
        auto frame = in.pull(200);
        if (frame && frame->kind == MsgKind::Params) {
            try {
                server.publish(datasvc::snapshot_from_value(deserialize(frame->payload)));
            } catch (const Error& e) {
                std::cerr << "ps: dropped snapshot: " << e.what() << std::endl;
            }
        }
        // Heartbeat rebroadcast so late-joining actors receive the current
        // parameters despite the channel's no-replay semantics.
        if (now_ms() - last_beat > 1000) {
            server.rebroadcast();
            last_beat = now_ms();
        }
    }
}

// Replay shard process k: binds "replay-k". The small socket backlog keeps
// pusher backpressure tight so actors pace themselves to learner demand.
inline int run_replay_shard(int shard_index, size_t capacity) {
    std::string svc = "replay-" + std::to_string(shard_index);
    datasvc::ShardService service(service_port(svc), datasvc::ShardMode::Fifo, capacity,
                                  /*backlog=*/8);
    while (true) std::this_thread::sleep_for(std::chrono::seconds(1));
}

inline std::vector<Endpoint> replay_endpoints(int shards) {
    std::vector<Endpoint> out;
    for (int k = 0; k < shards; ++k) out.push_back(service_endpoint("replay-" + std::to_string(k)));
    return out;
}

inline int run_ppo_actor(const algo::PpoConfig& cfg, int actor_index) {
    algo::PolicyBundle bundle(envs::spec_for(cfg.env_id), cfg.hidden);
    datasvc::ParameterClient params(service_endpoint("ps"));
    datasvc::ShardClient shards(replay_endpoints(cfg.shards));

    auto first = params.wait_for_version(1, 60000);
    if (!first) {
        std::cerr << "actor-" << actor_index << ": no initial snapshot" << std::endl;
        return 2;
    }

    std::string producer = "actor-" + std::to_string(actor_index);
    uint64_t base = cfg.seed + static_cast<uint64_t>(actor_index) * 0x9E3779B97F4A7C15ull;
    algo::RolloutWorker worker(envs::make_env(cfg.env_id), base, base ^ 0xAC7103ull, producer);
    std::cout << producer << " running ..." << std::endl;

    algo::BundleParams bp = unflatten_bundle(bundle, first->flat_params);
    int64_t version = first->version;
    datasvc::Router router(datasvc::RoutePolicy::RoundRobin, static_cast<size_t>(cfg.shards));
    int64_t seq = 0;

    while (true) {
        if (auto latest = params.fetch_latest(); latest && latest->version > version) {
            bp = unflatten_bundle(bundle, latest->flat_params);
            version = latest->version;
        }
        algo::ActorPolicyView view{&bundle.policy, &bp.mean, &bp.log_std, &bp.value};
        algo::TrajectorySegment seg = worker.rollout(view, cfg.segment_len, version);

        datasvc::ExperienceBatch batch{producer, seq, algo::segment_to_value(seg)};
        size_t start_shard = router.route(producer);
        for (int attempt = 0;; ++attempt) {
            size_t shard = (start_shard + attempt) % cfg.shards;
            try {
                shards.insert(shard, batch);
                break;
            } catch (const TransportError&) {
                if (attempt + 1 >= cfg.shards * 4)
                    std::this_thread::sleep_for(std::chrono::milliseconds(200));
            }
        }
        seq++;
    }
}

inline int run_ppo_learner(const algo::PpoConfig& cfg, const fs::path& expdir) {
    algo::PolicyBundle bundle(envs::spec_for(cfg.env_id), cfg.hidden);
    algo::PpoLearnerCore core(bundle, cfg);

    datasvc::ShardClient shards(replay_endpoints(cfg.shards), service_port("feed"));
    PushClient ps_in(service_endpoint("ps-in"));
    ps_in.connect_retry();

    auto publish = [&] {
        auto snapshot = datasvc::make_snapshot(core.version(), flatten_bundle(core.params()));
        ps_in.push(Frame{MsgKind::Params, datasvc::kParamsTopic,
                         serialize(datasvc::snapshot_to_value(snapshot))});
        return snapshot;
    };
    publish();  // version 1: the initial parameters

    TrainLog log(expdir / "train_log.jsonl");
    Value config_value = ppo_config_value(cfg);
    int64_t stale_dropped_total = 0;
    double t_start = now_sec();

    for (int iter = 0; iter < cfg.iters; ++iter) {
        double t_iter = now_sec();
        std::vector<algo::TrajectorySegment> segments;
        int64_t last_progress = now_ms();
        size_t shard_rr = static_cast<size_t>(iter) % cfg.shards;
        while (static_cast<int>(segments.size()) < cfg.segments_per_iter) {
            if (now_ms() - last_progress > 60000)
                throw Error("all-actors-dead", "no fresh segments for 60 s");
            int want = cfg.segments_per_iter - static_cast<int>(segments.size());
            auto reply = shards.sample_fifo(shard_rr, want, 1000);
            shard_rr = (shard_rr + 1) % cfg.shards;
            if (reply.status != "ok" && reply.batches.empty()) continue;
            for (const auto& batch : reply.batches) {
                auto seg = algo::segment_from_value(batch.data);
                if (core.accept_segment(seg)) {
                    segments.push_back(std::move(seg));
                    last_progress = now_ms();
                } else {
                    stale_dropped_total++;
                }
            }
        }

        auto stats = core.update(segments);
        publish();

        double elapsed = now_sec() - t_iter;
        log.write({
            {"iter", static_cast<double>(stats.iter)},
            {"wallclock", now_sec() - t_start},
            {"mean_return", stats.mean_return},
            {"realized_kl", stats.realized_kl},
            {"lambda", stats.lambda},
            {"steps_per_sec", static_cast<double>(stats.transitions) / std::max(1e-9, elapsed)},
            {"version", static_cast<double>(stats.version)},
            {"stale_dropped", static_cast<double>(stale_dropped_total)},
        });

        if (cfg.checkpoint_every > 0 && (iter + 1) % cfg.checkpoint_every == 0) {
            write_checkpoint(expdir / "checkpoints", stats.iter,
                             datasvc::make_snapshot(core.version(), flatten_bundle(core.params())),
                             config_value);
        }
    }
    write_checkpoint(expdir / "checkpoints", core.version(),
                     datasvc::make_snapshot(core.version(), flatten_bundle(core.params())),
                     config_value);
    return 0;
}

// ---- ES workers ----------------------------------------------------------------------------

constexpr const char* kEsIterTopic = "es-iter";

inline Value es_assignment_value(const algo::EsAssignment& a, std::span<const double> theta,
                                 const algo::EsConfig& cfg) {
    Value::List seeds;
    for (uint64_t s : a.seeds) seeds.push_back(Value(static_cast<int64_t>(s)));
    std::vector<double> params(theta.begin(), theta.end());
    return Value(Value::Map{
        {"version", Value(a.version)},
        {"seeds", Value(std::move(seeds))},
        {"mirrored", Value(a.mirrored)},
        {"params", Value(std::move(params))},
        {"checksum", Value(static_cast<int64_t>(datasvc::params_checksum(theta)))},
        {"sigma", Value(cfg.sigma)},
        {"population", Value(int64_t{cfg.population})},
    });
}

struct EsIterationMessage {
    algo::EsAssignment assignment;
    std::vector<double> theta;
    double sigma = 0;
    int population = 0;
};

inline EsIterationMessage es_assignment_from_value(const Value& v) {
    EsIterationMessage m;
    m.assignment.version = v.at("version").as_int();
    for (const auto& s : v.at("seeds").as_list())
        m.assignment.seeds.push_back(static_cast<uint64_t>(s.as_int()));
    m.assignment.mirrored = v.at("mirrored").as_bool();
    m.theta = v.at("params").as_f64array();
    if (datasvc::params_checksum(m.theta) != static_cast<uint64_t>(v.at("checksum").as_int()))
        throw IntegrityError("es iteration message failed checksum");
    m.sigma = v.at("sigma").as_double();
    m.population = static_cast<int>(v.at("population").as_int());
    return m;
}

inline int run_es_master(const algo::EsConfig& cfg, const fs::path& expdir) {
    nnet::GaussianPolicy policy = algo::PolicyBundle(envs::spec_for(cfg.env_id), cfg.hidden).policy;
    algo::EsMasterCore core(policy, cfg);

    PubServer broadcast(service_port("ps"), 8);
    PullServer records_in(service_port("records"), 4096);

    // Late subscribers miss broadcasts, so wait for the population to attach.
    int64_t attach_deadline = now_ms() + 60000;
    while (broadcast.subscriber_count(kEsIterTopic) < static_cast<size_t>(cfg.actors)) {
        if (now_ms() > attach_deadline) break;
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }

    TrainLog log(expdir / "train_log.jsonl");
    Value config_value = es_config_value(cfg);
    double t_start = now_sec();

    for (int iter = 0; iter < cfg.iters; ++iter) {
        double t_iter = now_sec();
        algo::EsAssignment assignment = core.next_assignment();
        Frame msg{MsgKind::Params, kEsIterTopic,
                  serialize(es_assignment_value(assignment, core.theta(), cfg))};
        broadcast.publish(kEsIterTopic, msg);

        // Collect the population; on timeout with quorum, proceed with what
        // arrived, otherwise re-broadcast for the stragglers (bounded retries).
        std::map<std::pair<uint64_t, int>, algo::PerturbationRecord> got;
        int retries = 0;
        int64_t collect_deadline = now_ms() + cfg.collect_timeout_ms;
        while (static_cast<int>(got.size()) < cfg.population) {
            auto frame = records_in.pull(50);
            if (frame) {
                try {
                    auto rec = algo::record_from_value(deserialize(frame->payload));
                    if (rec.version == assignment.version)
                        got.emplace(std::make_pair(rec.seed, rec.sign), rec);
                } catch (const Error&) {
                }
                continue;
            }
            if (now_ms() < collect_deadline) continue;
            if (core.quorum(got.size())) break;  // proceed with >= 80% of the population
            if (++retries > 3)
                throw Error("population-lost", "collected " + std::to_string(got.size()) + " of " +
                                                   std::to_string(cfg.population) + " records");
            broadcast.publish(kEsIterTopic, msg);
            collect_deadline = now_ms() + cfg.collect_timeout_ms;
        }

        std::vector<algo::PerturbationRecord> records;
        for (auto& [key, rec] : got) records.push_back(rec);
        auto stats = core.step(records);

        double elapsed = now_sec() - t_iter;
        log.write({
            {"iter", static_cast<double>(stats.iter)},
            {"wallclock", now_sec() - t_start},
            {"mean_return", stats.mean_return},
            {"records", static_cast<double>(stats.records)},
            {"grad_norm", stats.grad_norm},
            {"steps_per_sec", static_cast<double>(stats.records) / std::max(1e-9, elapsed)},
            {"version", static_cast<double>(stats.version)},
        });

        if (cfg.checkpoint_every > 0 && (iter + 1) % cfg.checkpoint_every == 0)
            write_checkpoint(expdir / "checkpoints", stats.iter,
                             datasvc::make_snapshot(core.version(), core.theta()), config_value);
    }
    write_checkpoint(expdir / "checkpoints", core.version() + 1,
                     datasvc::make_snapshot(core.version() + 1, core.theta()), config_value);
    return 0;
}

inline int run_es_actor(const algo::EsConfig& cfg, int actor_index) {
    nnet::GaussianPolicy policy = algo::PolicyBundle(envs::spec_for(cfg.env_id), cfg.hidden).policy;
    SubClient sub(service_endpoint("ps"), kEsIterTopic, 8);
    PushClient records(service_endpoint("records"));
    records.connect_retry();

    std::string actor_id = "es-actor-" + std::to_string(actor_index);
    algo::RolloutWorker worker(algo::make_es_env(cfg), cfg.seed + actor_index, cfg.seed ^ actor_index,
                               actor_id);
    nnet::Vec log_std(policy.act_dim(), std::log(cfg.fixed_std));
    std::cout << actor_id << " running ..." << std::endl;

    int64_t last_done = -1;
    while (true) {
        auto frame = sub.recv(500);
        if (!frame) continue;
        EsIterationMessage msg;
        try {
            msg = es_assignment_from_value(deserialize(frame->payload));
        } catch (const Error&) {
            continue;
        }
        if (msg.assignment.version <= last_done) continue;  // duplicate broadcast

        for (int m = actor_index; m < msg.assignment.members(); m += cfg.actors) {
            auto [seed, sign] = msg.assignment.member(m);
            nnet::Vec theta = algo::es_perturb(msg.theta, seed, msg.sigma, sign);
            nnet::MlpParams mean = nnet::unflatten(policy.mean_spec, theta);
            algo::ActorPolicyView view{&policy, &mean, &log_std, nullptr};
            uint64_t ep_seed = algo::es_episode_seed(msg.assignment.version, seed, sign);
            double ret = worker.run_episode(view, ep_seed, ep_seed ^ 0x5eed );

            algo::PerturbationRecord rec{seed, sign, ret, actor_id, msg.assignment.version};
            records.push(Frame{MsgKind::Data, "record", serialize(algo::record_to_value(rec))});
        }
        last_done = msg.assignment.version;
    }
}

// ---- experiment declarations ------------------------------------------------------------------

inline std::vector<std::string> base_worker_cmd(const std::string& binary) {
    return {binary, "worker"};
}

inline orchestra::ExperimentSpec build_ppo_experiment(const algo::PpoConfig& cfg,
                                                      const std::string& name,
                                                      const std::string& binary,
                                                      const std::string& expdir) {
    orchestra::ExperimentSpec spec;
    spec.name = name;
    spec.created_at_ms = unix_time_ms();

    std::vector<std::string> replay_services;
    for (int k = 0; k < cfg.shards; ++k) replay_services.push_back("replay-" + std::to_string(k));

    auto common = [&](std::vector<std::string> extra) {
        std::vector<std::string> cmd = base_worker_cmd(binary);
        cmd.insert(cmd.end(), extra.begin(), extra.end());
        cmd.insert(cmd.end(), {"--env", cfg.env_id, "--actors", std::to_string(cfg.actors),
                               "--shards", std::to_string(cfg.shards), "--seglen",
                               std::to_string(cfg.segment_len), "--hidden", join_ints(cfg.hidden),
                               "--seed", std::to_string(cfg.seed)});
        return cmd;
    };

    orchestra::ProcessSpec ps;
    ps.name = "ps";
    ps.command = base_worker_cmd(binary);
    ps.command.push_back("ps");
    ps.binds = {"ps", "ps-in"};
    spec.processes.push_back(ps);

    for (int k = 0; k < cfg.shards; ++k) {
        orchestra::ProcessSpec shard;
        shard.name = replay_services[k];
        shard.command = base_worker_cmd(binary);
        shard.command.insert(shard.command.end(), {"replay", "--shard-index", std::to_string(k),
                                                   "--capacity",
                                                   std::to_string(cfg.replay_capacity)});
        shard.binds = {replay_services[k]};
        spec.processes.push_back(shard);
    }

    orchestra::ProcessSpec learner;
    learner.name = "learner";
    learner.command = common({"ppo-learner"});
    learner.command.insert(learner.command.end(),
                           {"--iters", std::to_string(cfg.iters), "--gamma", std::to_string(cfg.gamma),
                            "--kl-target", std::to_string(cfg.kl_target), "--epochs",
                            std::to_string(cfg.epochs), "--minibatch", std::to_string(cfg.minibatch),
                            "--lr", std::to_string(cfg.lr), "--grad-clip", std::to_string(cfg.grad_clip),
                            "--segments-per-iter", std::to_string(cfg.segments_per_iter),
                            "--staleness-window", std::to_string(cfg.staleness_window),
                            "--checkpoint-every", std::to_string(cfg.checkpoint_every),
                            "--expdir", expdir});
    learner.binds = {"feed"};
    learner.connects = {"ps-in"};
    for (const auto& svc : replay_services) learner.connects.push_back(svc);
    spec.processes.push_back(learner);

    for (int i = 0; i < cfg.actors; ++i) {
        orchestra::ProcessSpec actor;
        actor.name = "actor-" + std::to_string(i);
        actor.command = common({"ppo-actor", "--actor-index", std::to_string(i)});
        actor.connects = {"ps"};
        for (const auto& svc : replay_services) actor.connects.push_back(svc);
        spec.processes.push_back(actor);
    }
    return spec;
}

inline orchestra::ExperimentSpec build_es_experiment(const algo::EsConfig& cfg,
                                                     const std::string& name,
                                                     const std::string& binary,
                                                     const std::string& expdir) {
    orchestra::ExperimentSpec spec;
    spec.name = name;
    spec.created_at_ms = unix_time_ms();

    auto flags = [&](std::vector<std::string> extra) {
        std::vector<std::string> cmd = base_worker_cmd(binary);
        cmd.insert(cmd.end(), extra.begin(), extra.end());
        cmd.insert(cmd.end(),
                   {"--env", cfg.env_id, "--actors", std::to_string(cfg.actors), "--population",
                    std::to_string(cfg.population), "--sigma", std::to_string(cfg.sigma), "--eta",
                    std::to_string(cfg.eta), "--hidden", join_ints(cfg.hidden), "--seed",
                    std::to_string(cfg.seed), "--action-bins", std::to_string(cfg.action_bins),
                    "--fixed-std", std::to_string(cfg.fixed_std)});
        if (cfg.mirrored) cmd.push_back("--mirrored");
        if (!cfg.centered_returns) cmd.push_back("--uncentered");
        return cmd;
    };

    orchestra::ProcessSpec master;
    master.name = "master";
    master.command = flags({"es-master"});
    master.command.insert(master.command.end(),
                          {"--iters", std::to_string(cfg.iters), "--checkpoint-every",
                           std::to_string(cfg.checkpoint_every), "--collect-timeout-ms",
                           std::to_string(cfg.collect_timeout_ms), "--expdir", expdir});
    master.binds = {"ps", "records"};
    spec.processes.push_back(master);

    for (int i = 0; i < cfg.actors; ++i) {
        orchestra::ProcessSpec actor;
        actor.name = "actor-" + std::to_string(i);
        actor.command = flags({"es-actor", "--actor-index", std::to_string(i)});
        actor.connects = {"ps", "records"};
        spec.processes.push_back(actor);
    }
    return spec;
}

// ---- train driver -------------------------------------------------------------------------------

inline std::atomic<bool> g_stop{false};

inline void install_stop_handler() {
    struct sigaction sa {};
    sa.sa_handler = [](int) { g_stop.store(true); };
    ::sigaction(SIGINT, &sa, nullptr);
    ::sigaction(SIGTERM, &sa, nullptr);
}

// Launches the experiment locally, streams the head process's training log
// to `out`, tears everything down when it finishes. Returns the head
// process's exit code.
inline int run_train(const orchestra::ExperimentSpec& spec, const std::string& head,
                     orchestra::Registry& registry, std::ostream& out) {
    install_stop_handler();
    auto exp = orchestra::launch_local(spec, registry);
    fs::path log_path = registry.exp_dir(spec.name) / "train_log.jsonl";

    // Stream complete lines appended to the log since the last poll.
    std::streamoff offset = 0;
    auto drain_log = [&] {
        std::ifstream log_in(log_path, std::ios::binary);
        if (!log_in.is_open()) return;
        log_in.seekg(0, std::ios::end);
        std::streamoff size = log_in.tellg();
        if (size <= offset) return;
        log_in.seekg(offset);
        std::string fresh(static_cast<size_t>(size - offset), '\0');
        log_in.read(fresh.data(), size - offset);
        size_t last_newline = fresh.rfind('\n');
        if (last_newline == std::string::npos) return;
        out << fresh.substr(0, last_newline + 1);
        out.flush();
        offset += static_cast<std::streamoff>(last_newline + 1);
    };

    int exit_code = 2;
    while (!g_stop.load()) {
        drain_log();
        auto status = exp.status(head);
        if (status.state == orchestra::ProcessStatus::State::Exited) {
            exit_code = status.code;
            break;
        }
        if (status.state != orchestra::ProcessStatus::State::Running) {
            exit_code = 2;
            break;
        }
        if (exp.degraded()) {
            out << "error: degraded: a worker failed to spawn\n";
            exit_code = 2;
            break;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    drain_log();
    exp.kill_all();
    return g_stop.load() ? 130 : exit_code;
}

}  // namespace deskrl::workers
