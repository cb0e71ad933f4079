// deskrl: desk-scale distributed RL stack in one binary.
// Subcommands: provision, launch, list, ps, logs, kill, train, bench,
// plus the internal `worker` roles spawned by the orchestrator.
#include <CLI11.hpp>

#include <iostream>

#include "deskrl/bench.hpp"
#include "deskrl/workers.hpp"

using namespace deskrl;

namespace {

int classify_exit(const Error& e) {
    static const std::set<std::string> user_errors{
        "validation", "name-conflict",  "not-found",        "parse", "config",
        "mapping",    "port-exhausted", "unknown-nodepool", "usage",
    };
    return user_errors.count(e.code()) ? 1 : 2;
}

provision::PoolRequest parse_pool(const std::string& text, int index) {
    provision::PoolRequest req;
    req.name = "pool-" + std::to_string(index);
    std::stringstream ss(text);
    std::string kv;
    while (std::getline(ss, kv, ',')) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw Error("usage", "pool entry '" + kv + "' is not key=value");
        std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
        if (key == "cpu")
            req.descriptor.cpu = std::stoi(value);
        else if (key == "gpu")
            req.descriptor.gpu = std::stoi(value);
        else if (key == "gpu_type")
            req.descriptor.gpu_type = value;
        else if (key == "mem")
            req.descriptor.memory_class = provision::memory_class_from(value);
        else if (key == "min")
            req.min_nodes = std::stoi(value);
        else if (key == "max")
            req.max_nodes = std::stoi(value);
        else if (key == "name")
            req.name = value;
        else
            throw Error("usage", "unknown pool key '" + key + "'");
    }
    return req;
}

std::string default_run_name(const std::string& algo, uint64_t seed) {
    return algo + "-s" + std::to_string(seed) + "-" + std::to_string(unix_time_ms() % 1000000);
}

void check_env_id(const std::string& env_id) {
    auto ids = envs::env_ids();
    if (std::find(ids.begin(), ids.end(), env_id) == ids.end()) {
        std::string known;
        for (const auto& id : ids) known += (known.empty() ? "" : ", ") + id;
        throw Error("usage", "unknown env '" + env_id + "'; valid: " + known);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale distributed RL stack"};
    app.require_subcommand(1);

    // ---- provision ------------------------------------------------------------
    auto* provision_cmd = app.add_subcommand("provision", "generate a cluster spec file");
    std::string cluster_name, vendor = "gce_like", cluster_out;
    std::vector<std::string> pool_args;
    provision_cmd->add_option("--name", cluster_name, "cluster name")->required();
    provision_cmd->add_option("--pool", pool_args,
                              "pool spec: cpu=..,gpu=..,gpu_type=..,mem=..,min=..,max=..[,name=..]");
    provision_cmd->add_option("--vendor", vendor)->check(CLI::IsMember({"gce_like", "aws_like"}));
    provision_cmd->add_option("--out", cluster_out, "output path (default <name>.cluster)");

    // ---- launch ---------------------------------------------------------------
    auto* launch_cmd = app.add_subcommand("launch", "launch an experiment from a file");
    std::string expfile, backend = "local", cluster_file, manifest_dir;
    launch_cmd->add_option("expfile", expfile)->required();
    launch_cmd->add_option("--backend", backend)->check(CLI::IsMember({"local", "manifest"}));
    launch_cmd->add_option("--cluster", cluster_file, "cluster spec file (manifest backend)");
    launch_cmd->add_option("--out-dir", manifest_dir, "manifest output dir");

    // ---- management -----------------------------------------------------------
    auto* list_cmd = app.add_subcommand("list", "list experiments");
    auto* ps_cmd = app.add_subcommand("ps", "list processes of an experiment");
    std::string ps_exp;
    ps_cmd->add_option("experiment", ps_exp)->required();
    auto* logs_cmd = app.add_subcommand("logs", "tail a process log");
    std::string logs_exp, logs_proc;
    size_t logs_tail = 20;
    logs_cmd->add_option("experiment", logs_exp)->required();
    logs_cmd->add_option("process", logs_proc)->required();
    logs_cmd->add_option("--tail", logs_tail);
    auto* kill_cmd = app.add_subcommand("kill", "stop an experiment and remove it");
    std::string kill_exp;
    kill_cmd->add_option("experiment", kill_exp)->required();

    // ---- train ------------------------------------------------------------------
    auto* train_cmd = app.add_subcommand("train", "run a training experiment locally");
    train_cmd->require_subcommand(1);
    algo::PpoConfig ppo;
    algo::EsConfig es;
    std::string train_name, hidden_csv = "32,32";

    auto* train_ppo = train_cmd->add_subcommand("ppo", "distributed PPO with adaptive KL penalty");
    train_ppo->add_option("--env", ppo.env_id);
    train_ppo->add_option("--actors", ppo.actors);
    train_ppo->add_option("--shards", ppo.shards);
    train_ppo->add_option("--iters", ppo.iters);
    train_ppo->add_option("--seglen", ppo.segment_len);
    train_ppo->add_option("--segments-per-iter", ppo.segments_per_iter);
    train_ppo->add_option("--gamma", ppo.gamma);
    train_ppo->add_option("--kl-target", ppo.kl_target);
    train_ppo->add_option("--epochs", ppo.epochs);
    train_ppo->add_option("--minibatch", ppo.minibatch);
    train_ppo->add_option("--lr", ppo.lr);
    train_ppo->add_option("--grad-clip", ppo.grad_clip);
    train_ppo->add_option("--staleness-window", ppo.staleness_window);
    train_ppo->add_option("--replay-capacity", ppo.replay_capacity);
    train_ppo->add_option("--checkpoint-every", ppo.checkpoint_every);
    train_ppo->add_option("--seed", ppo.seed);
    train_ppo->add_option("--hidden", hidden_csv);
    train_ppo->add_option("--name", train_name);

    auto* train_es = train_cmd->add_subcommand("es", "distributed evolution strategies");
    train_es->add_option("--env", es.env_id);
    train_es->add_option("--actors", es.actors);
    train_es->add_option("--iters", es.iters);
    train_es->add_option("--population", es.population);
    train_es->add_option("--sigma", es.sigma);
    train_es->add_option("--eta", es.eta);
    train_es->add_flag("--mirrored", es.mirrored);
    bool uncentered = false;
    train_es->add_flag("--uncentered", uncentered);
    train_es->add_option("--action-bins", es.action_bins);
    train_es->add_option("--fixed-std", es.fixed_std);
    train_es->add_option("--collect-timeout-ms", es.collect_timeout_ms);
    train_es->add_option("--checkpoint-every", es.checkpoint_every);
    train_es->add_option("--seed", es.seed);
    train_es->add_option("--hidden", hidden_csv);
    train_es->add_option("--name", train_name);

    // ---- bench ---------------------------------------------------------------------
    auto* bench_cmd = app.add_subcommand("bench", "system benchmarks");
    bench_cmd->require_subcommand(1);
    bench::ProtoBenchOptions proto_opt;
    bench::ScalingBenchOptions scaling_opt;
    bench::ShardBenchOptions shard_opt;
    std::string scaling_actors_csv = "1,2,4,8", shard_counts_csv = "1,3,5";

    auto* bench_proto = bench_cmd->add_subcommand("proto", "inline vs offloaded decode throughput");
    bench_proto->add_option("--payload", proto_opt.payload_bytes, "message payload size")
        ->transform(CLI::AsSizeValue(false));
    bench_proto->add_option("--producers", proto_opt.producers);
    bench_proto->add_option("--workers", proto_opt.workers);
    bench_proto->add_option("--duration-ms", proto_opt.duration_ms);
    bench_proto->add_option("--warmup-ms", proto_opt.warmup_ms);

    auto* bench_scaling = bench_cmd->add_subcommand("scaling", "env steps/s vs actor count");
    bench_scaling->add_option("--actors", scaling_actors_csv, "comma-separated actor counts");
    bench_scaling->add_option("--env", scaling_opt.env_id);
    bench_scaling->add_option("--steps-per-sec", scaling_opt.steps_per_sec, "per-actor pace");
    bench_scaling->add_option("--seglen", scaling_opt.segment_len);
    bench_scaling->add_option("--duration-ms", scaling_opt.duration_ms);
    bench_scaling->add_option("--warmup-ms", scaling_opt.warmup_ms);

    auto* bench_shard = bench_cmd->add_subcommand("shard", "aggregate ingest vs shard count");
    bench_shard->add_option("--shards", shard_counts_csv, "comma-separated shard counts");
    bench_shard->add_option("--producers", shard_opt.producers);
    bench_shard->add_option("--batch-bytes", shard_opt.batch_bytes)->transform(CLI::AsSizeValue(false));
    bench_shard->add_option("--demand-factor", shard_opt.demand_factor);
    bench_shard->add_option("--duration-ms", shard_opt.duration_ms);
    bench_shard->add_option("--warmup-ms", shard_opt.warmup_ms);

    // ---- worker (internal roles spawned by the orchestrator) --------------------------
    auto* worker_cmd = app.add_subcommand("worker", "internal worker roles");
    worker_cmd->group("");  // hidden from help
    worker_cmd->require_subcommand(1);
    int actor_index = 0, shard_index = 0, producer_index = 0;
    size_t shard_capacity = 1024;
    std::string expdir, w_host = "127.0.0.1", w_ports_csv;
    uint16_t w_port = 0;
    size_t w_payload = 1 << 20;
    long w_duration = 10000;
    double w_rate = 0;
    int w_steps_per_sec = 2000;

    auto add_common = [&](CLI::App* c, auto& cfg) {
        c->add_option("--env", cfg.env_id);
        c->add_option("--actors", cfg.actors);
        c->add_option("--hidden", hidden_csv);
        c->add_option("--seed", cfg.seed);
    };
    auto* w_ps = worker_cmd->add_subcommand("ps");
    auto* w_replay = worker_cmd->add_subcommand("replay");
    w_replay->add_option("--shard-index", shard_index);
    w_replay->add_option("--capacity", shard_capacity);

    auto* w_ppo_actor = worker_cmd->add_subcommand("ppo-actor");
    add_common(w_ppo_actor, ppo);
    w_ppo_actor->add_option("--actor-index", actor_index);
    w_ppo_actor->add_option("--shards", ppo.shards);
    w_ppo_actor->add_option("--seglen", ppo.segment_len);

    auto* w_ppo_learner = worker_cmd->add_subcommand("ppo-learner");
    add_common(w_ppo_learner, ppo);
    w_ppo_learner->add_option("--shards", ppo.shards);
    w_ppo_learner->add_option("--seglen", ppo.segment_len);
    w_ppo_learner->add_option("--iters", ppo.iters);
    w_ppo_learner->add_option("--gamma", ppo.gamma);
    w_ppo_learner->add_option("--kl-target", ppo.kl_target);
    w_ppo_learner->add_option("--epochs", ppo.epochs);
    w_ppo_learner->add_option("--minibatch", ppo.minibatch);
    w_ppo_learner->add_option("--lr", ppo.lr);
    w_ppo_learner->add_option("--grad-clip", ppo.grad_clip);
    w_ppo_learner->add_option("--segments-per-iter", ppo.segments_per_iter);
    w_ppo_learner->add_option("--staleness-window", ppo.staleness_window);
    w_ppo_learner->add_option("--checkpoint-every", ppo.checkpoint_every);
    w_ppo_learner->add_option("--expdir", expdir);

    auto* w_es_master = worker_cmd->add_subcommand("es-master");
    add_common(w_es_master, es);
    w_es_master->add_option("--population", es.population);
    w_es_master->add_option("--sigma", es.sigma);
    w_es_master->add_option("--eta", es.eta);
    w_es_master->add_flag("--mirrored", es.mirrored);
    w_es_master->add_flag("--uncentered", uncentered);
    w_es_master->add_option("--action-bins", es.action_bins);
    w_es_master->add_option("--fixed-std", es.fixed_std);
    w_es_master->add_option("--iters", es.iters);
    w_es_master->add_option("--checkpoint-every", es.checkpoint_every);
    w_es_master->add_option("--collect-timeout-ms", es.collect_timeout_ms);
    w_es_master->add_option("--expdir", expdir);

    auto* w_es_actor = worker_cmd->add_subcommand("es-actor");
    add_common(w_es_actor, es);
    w_es_actor->add_option("--actor-index", actor_index);
    w_es_actor->add_option("--population", es.population);
    w_es_actor->add_option("--sigma", es.sigma);
    w_es_actor->add_option("--eta", es.eta);
    w_es_actor->add_flag("--mirrored", es.mirrored);
    w_es_actor->add_flag("--uncentered", uncentered);
    w_es_actor->add_option("--action-bins", es.action_bins);
    w_es_actor->add_option("--fixed-std", es.fixed_std);

    auto* w_pusher = worker_cmd->add_subcommand("bench-pusher");
    w_pusher->add_option("--host", w_host);
    w_pusher->add_option("--port", w_port)->required();
    w_pusher->add_option("--payload-bytes", w_payload);
    w_pusher->add_option("--duration-ms", w_duration);

    auto* w_bench_actor = worker_cmd->add_subcommand("bench-actor");
    w_bench_actor->add_option("--env", scaling_opt.env_id);
    w_bench_actor->add_option("--host", w_host);
    w_bench_actor->add_option("--port", w_port)->required();
    w_bench_actor->add_option("--steps-per-sec", w_steps_per_sec);
    w_bench_actor->add_option("--seglen", scaling_opt.segment_len);
    w_bench_actor->add_option("--duration-ms", w_duration);
    w_bench_actor->add_option("--actor-index", actor_index);

    auto* w_shard_producer = worker_cmd->add_subcommand("shard-producer");
    w_shard_producer->add_option("--ports", w_ports_csv)->required();
    w_shard_producer->add_option("--rate", w_rate);
    w_shard_producer->add_option("--batch-bytes", w_payload);
    w_shard_producer->add_option("--duration-ms", w_duration);
    w_shard_producer->add_option("--producer-index", producer_index);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "error: usage: " << e.what() << std::endl;
        return 1;
    }

    try {
        ppo.hidden = workers::split_ints(hidden_csv);
        es.hidden = workers::split_ints(hidden_csv);
        es.centered_returns = !uncentered;

        if (provision_cmd->parsed()) {
            std::vector<provision::PoolRequest> pools;
            for (size_t i = 0; i < pool_args.size(); ++i)
                pools.push_back(parse_pool(pool_args[i], static_cast<int>(i)));
            auto spec = provision::generate_cluster_spec(cluster_name, pools, vendor);
            std::string out = cluster_out.empty() ? cluster_name + ".cluster" : cluster_out;
            provision::save_cluster_file(spec, out);
            std::cout << out << std::endl;
            return 0;
        }

        if (launch_cmd->parsed()) {
            auto spec = orchestra::load_experiment_file(expfile);
            auto violations = orchestra::validate(spec);
            if (!violations.empty()) {
                for (const auto& v : violations)
                    std::cerr << "error: validation: " << v.to_string() << std::endl;
                return 1;
            }
            if (backend == "manifest") {
                if (cluster_file.empty())
                    throw Error("usage", "--cluster is required with the manifest backend");
                auto cluster = provision::load_cluster_file(cluster_file);
                auto files = orchestra::emit_manifest(spec, cluster);
                std::string dir = manifest_dir.empty() ? spec.name + "-manifest" : manifest_dir;
                orchestra::write_manifest_files(files, dir);
                for (const auto& [name, content] : files) std::cout << dir << "/" << name << std::endl;
                return 0;
            }
            orchestra::Registry registry;
            auto exp = orchestra::launch_local(spec, registry);
            for (const auto& proc : exp.procs())
                std::cout << proc.name << " " << proc.status.to_string() << " pid=" << proc.pid
                          << std::endl;
            // Children keep running under the registry entry until `kill`.
            return exp.degraded() ? 2 : 0;
        }

        if (list_cmd->parsed()) {
            orchestra::Registry registry;
            for (const auto& name : registry.list_experiments()) std::cout << name << std::endl;
            return 0;
        }
        if (ps_cmd->parsed()) {
            orchestra::Registry registry;
            for (const auto& row : orchestra::list_processes(registry, ps_exp))
                std::cout << row.name << " " << row.status
                          << (row.pid > 0 ? " pid=" + std::to_string(row.pid) : "") << std::endl;
            return 0;
        }
        if (logs_cmd->parsed()) {
            orchestra::Registry registry;
            for (const auto& line : orchestra::tail_logs(registry, logs_exp, logs_proc, logs_tail))
                std::cout << line << std::endl;
            return 0;
        }
        if (kill_cmd->parsed()) {
            orchestra::Registry registry;
            orchestra::kill_experiment(registry, kill_exp);
            std::cout << "killed " << kill_exp << std::endl;
            return 0;
        }

        if (train_ppo->parsed()) {
            check_env_id(ppo.env_id);
            if (ppo.actors < 1) throw Error("usage", "--actors must be >= 1");
            if (ppo.shards < 1) throw Error("usage", "--shards must be >= 1");
            orchestra::Registry registry;
            std::string name = train_name.empty() ? default_run_name("ppo", ppo.seed) : train_name;
            auto spec = workers::build_ppo_experiment(ppo, name, workers::self_binary(),
                                                      registry.exp_dir(name).string());
            return workers::run_train(spec, "learner", registry, std::cout);
        }
        if (train_es->parsed()) {
            check_env_id(es.env_id);
            if (es.actors < 1) throw Error("usage", "--actors must be >= 1");
            es.check();
            orchestra::Registry registry;
            std::string name = train_name.empty() ? default_run_name("es", es.seed) : train_name;
            auto spec = workers::build_es_experiment(es, name, workers::self_binary(),
                                                     registry.exp_dir(name).string());
            return workers::run_train(spec, "master", registry, std::cout);
        }

        if (bench_proto->parsed()) {
            proto_opt.binary = workers::self_binary();
            bench::run_proto_bench(proto_opt, std::cout);
            return 0;
        }
        if (bench_scaling->parsed()) {
            scaling_opt.actor_counts = workers::split_ints(scaling_actors_csv);
            scaling_opt.binary = workers::self_binary();
            bench::run_scaling_bench(scaling_opt, std::cout);
            return 0;
        }
        if (bench_shard->parsed()) {
            shard_opt.shard_counts = workers::split_ints(shard_counts_csv);
            shard_opt.binary = workers::self_binary();
            bench::run_shard_bench(shard_opt, std::cout);
            return 0;
        }

        if (w_ps->parsed()) return workers::run_param_server();
        if (w_replay->parsed()) return workers::run_replay_shard(shard_index, shard_capacity);
        if (w_ppo_actor->parsed()) return workers::run_ppo_actor(ppo, actor_index);
        if (w_ppo_learner->parsed()) return workers::run_ppo_learner(ppo, expdir);
        if (w_es_master->parsed()) return workers::run_es_master(es, expdir);
        if (w_es_actor->parsed()) return workers::run_es_actor(es, actor_index);
        if (w_pusher->parsed()) return bench::run_bench_pusher(w_host, w_port, w_payload, w_duration);
        if (w_bench_actor->parsed())
            return bench::run_bench_actor(scaling_opt.env_id, w_host, w_port, w_steps_per_sec,
                                          scaling_opt.segment_len, w_duration, actor_index);
        if (w_shard_producer->parsed()) {
            std::vector<uint16_t> ports;
            for (int p : workers::split_ints(w_ports_csv)) ports.push_back(static_cast<uint16_t>(p));
            return bench::run_shard_producer(ports, w_rate, w_payload, w_duration, producer_index);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return classify_exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << std::endl;
        return 2;
    }
    return 0;
}
