#include "deskrl/orchestra.hpp"

#include <gtest/gtest.h>

#include <csignal>

using namespace deskrl;
using namespace deskrl::orchestra;

namespace {

std::string temp_home() {
    char tmpl[] = "/tmp/deskrl-test-XXXXXX";
    char* dir = ::mkdtemp(tmpl);
    if (!dir) throw std::runtime_error("mkdtemp failed");
    return dir;
}

ProcessSpec proc(const std::string& name, std::vector<std::string> cmd,
                 std::vector<std::string> binds = {}, std::vector<std::string> connects = {}) {
    ProcessSpec p;
    p.name = name;
    p.command = std::move(cmd);
    p.binds = std::move(binds);
    p.connects = std::move(connects);
    return p;
}

bool has_violation(const std::vector<Violation>& vs, const std::string& code,
                   const std::string& subject) {
    for (const auto& v : vs)
        if (v.code == code && v.subject == subject) return true;
    return false;
}

TEST(Validate, BindConnectPairOk) {
    ExperimentSpec spec;
    spec.name = "fig5b";
    spec.processes.push_back(proc("learner", {"learner"}, {}, {"replay"}));
    spec.processes.push_back(proc("replay", {"replay"}, {"replay"}));
    EXPECT_TRUE(validate(spec).empty());
}

TEST(Validate, DuplicateBind) {
    ExperimentSpec spec;
    spec.name = "dup";
    spec.processes.push_back(proc("a", {"x"}, {"replay"}));
    spec.processes.push_back(proc("b", {"x"}, {"replay"}));
    EXPECT_TRUE(has_violation(validate(spec), "duplicate-bind", "replay"));
}

TEST(Validate, UnboundService) {
    ExperimentSpec spec;
    spec.name = "unbound";
    spec.processes.push_back(proc("a", {"x"}, {}, {"ps"}));
    EXPECT_TRUE(has_violation(validate(spec), "unbound-service", "ps"));
}

TEST(Validate, SelfConnectionAllowed) {
    ExperimentSpec spec;
    spec.name = "selfc";
    spec.processes.push_back(proc("a", {"x"}, {"svc"}, {"svc"}));
    EXPECT_TRUE(validate(spec).empty());
}

TEST(Validate, EmptyCommandAndBadName) {
    ExperimentSpec spec;
    spec.name = "Bad_Name";
    spec.processes.push_back(proc("ok-name", {}));
    auto vs = validate(spec);
    EXPECT_TRUE(has_violation(vs, "bad-name", "Bad_Name"));
    EXPECT_TRUE(has_violation(vs, "empty-command", "ok-name"));
}

TEST(Addresses, LexicographicFromBase) {
    ExperimentSpec spec;
    spec.name = "addr";
    spec.processes.push_back(proc("replay", {"x"}, {"replay"}));
    spec.processes.push_back(proc("ps", {"x"}, {"ps"}));
    spec.processes.push_back(proc("learner", {"x"}, {}, {"replay", "ps"}));

    auto table = assign_addresses(spec, Backend::Local);
    ASSERT_EQ(table.services.size(), 2u);
    EXPECT_EQ(table.services.at("ps").host, "127.0.0.1");
    EXPECT_EQ(table.services.at("ps").port, 7000);
    EXPECT_EQ(table.services.at("replay").port, 7001);
}

TEST(Addresses, EnvRendering) {
    ExperimentSpec spec;
    spec.name = "env";
    spec.processes.push_back(proc("replay", {"x"}, {"replay"}));
    auto table = assign_addresses(spec, Backend::Local);
    table.services["replay"] = {"127.0.0.1", 7001};  // pin for the golden check
    auto env = table.env_map();
    EXPECT_EQ(env.at("SYMPH_REPLAY_HOST"), "127.0.0.1");
    EXPECT_EQ(env.at("SYMPH_REPLAY_PORT"), "7001");
}

TEST(Addresses, DashesBecomeUnderscores) {
    AddressTable table;
    table.services["replay-0"] = {"127.0.0.1", 7003};
    auto env = table.env_map();
    EXPECT_EQ(env.at("SYMPH_REPLAY_0_HOST"), "127.0.0.1");
    EXPECT_EQ(env.at("SYMPH_REPLAY_0_PORT"), "7003");
}

TEST(Addresses, ZeroServicesEmptyTable) {
    ExperimentSpec spec;
    spec.name = "none";
    spec.processes.push_back(proc("a", {"x"}));
    EXPECT_TRUE(assign_addresses(spec, Backend::Local).services.empty());
}

TEST(Addresses, ManifestHostsAreServiceNames) {
    ExperimentSpec spec;
    spec.name = "mani";
    spec.processes.push_back(proc("replay", {"x"}, {"replay"}));
    auto table = assign_addresses(spec, Backend::Manifest);
    EXPECT_EQ(table.services.at("replay").host, "replay");
    EXPECT_EQ(table.services.at("replay").port, 7000);
}

TEST(ExperimentFile, RoundTrip) {
    ExperimentSpec spec;
    spec.name = "rt";
    spec.created_at_ms = 123456;
    spec.processes.push_back(proc("a", {"run", "--x", "1"}, {"svc-a"}, {"svc-b"}));
    spec.processes.push_back(proc("b", {"run"}, {"svc-b"}, {"svc-a"}));
    auto c = proc("c", {"run"});
    c.resources = {2.5, 512, 1, "v100", "gpu-pool"};
    c.group = "workers";
    spec.processes.push_back(c);
    spec.groups.push_back({"workers", {"b", "c"}});

    EXPECT_EQ(load_experiment_text(serialize_experiment(spec)), spec);
}

TEST(ExperimentFile, MissingCommandNamesProcess) {
    std::string text = R"({"name": "x", "processes": [{"name": "broken"}]})";
    try {
        load_experiment_text(text);
        FAIL() << "expected parse error";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("broken"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("command"), std::string::npos);
    }
}

TEST(ExperimentFile, MinimalHandWrittenLoads) {
    std::string text = R"({
      "name": "mini",
      "processes": [{"name": "only", "command": ["echo", "hi"]}]
    })";
    auto spec = load_experiment_text(text);
    EXPECT_EQ(spec.name, "mini");
    ASSERT_EQ(spec.processes.size(), 1u);
    EXPECT_EQ(spec.processes[0].command.front(), "echo");
    EXPECT_TRUE(spec.processes[0].binds.empty());
}

TEST(LaunchLocal, TwoProcessesRunWithLogs) {
    Registry registry(temp_home());
    ExperimentSpec spec;
    spec.name = "two";
    spec.processes.push_back(proc("fast", {"/bin/sh", "-c", "echo fast done"}));
    spec.processes.push_back(proc("slow", {"/bin/sh", "-c", "sleep 30"}));

    auto exp = launch_local(spec, registry);
    EXPECT_FALSE(exp.degraded());
    for (int i = 0; i < 200 && exp.status("fast").state == ProcessStatus::State::Running; ++i)
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    EXPECT_EQ(exp.status("fast").state, ProcessStatus::State::Exited);
    EXPECT_EQ(exp.status("slow").state, ProcessStatus::State::Running);
    EXPECT_TRUE(std::filesystem::exists(exp.dir() / "logs" / "fast.log"));
    EXPECT_TRUE(std::filesystem::exists(exp.dir() / "logs" / "slow.log"));
    exp.kill_all();
}

TEST(LaunchLocal, ExitCodeObservedOthersUnaffected) {
    Registry registry(temp_home());
    ExperimentSpec spec;
    spec.name = "codes";
    spec.processes.push_back(proc("dies", {"/bin/sh", "-c", "exit 3"}));
    spec.processes.push_back(proc("lives", {"/bin/sh", "-c", "sleep 30"}));

    auto exp = launch_local(spec, registry);
    for (int i = 0; i < 200 && exp.status("dies").state == ProcessStatus::State::Running; ++i)
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    auto st = exp.status("dies");
    EXPECT_EQ(st.state, ProcessStatus::State::Exited);
    EXPECT_EQ(st.code, 3);
    EXPECT_EQ(exp.status("lives").state, ProcessStatus::State::Running);
    exp.kill_all();
}

TEST(LaunchLocal, SpawnFailureDegradesButOthersRun) {
    Registry registry(temp_home());
    ExperimentSpec spec;
    spec.name = "degraded";
    spec.processes.push_back(proc("broken", {"/no/such/binary-zzz"}));
    spec.processes.push_back(proc("fine", {"/bin/sh", "-c", "sleep 30"}));

    auto exp = launch_local(spec, registry);
    EXPECT_TRUE(exp.degraded());
    EXPECT_EQ(exp.status("broken").state, ProcessStatus::State::SpawnFailed);
    EXPECT_EQ(exp.status("fine").state, ProcessStatus::State::Running);
    exp.kill_all();
}

TEST(LaunchLocal, DuplicateNameConflicts) {
    Registry registry(temp_home());
    ExperimentSpec spec;
    spec.name = "once";
    spec.processes.push_back(proc("p", {"/bin/sh", "-c", "sleep 30"}));
    auto exp = launch_local(spec, registry);
    EXPECT_THROW(launch_local(spec, registry), NameConflictError);
    exp.kill_all();
}

TEST(LaunchLocal, EnvVarsInjected) {
    Registry registry(temp_home());
    ExperimentSpec spec;
    spec.name = "envcheck";
    spec.processes.push_back(proc(
        "printer", {"/bin/sh", "-c", "echo replay=$SYMPH_REPLAY_HOST:$SYMPH_REPLAY_PORT exp=$SYMPH_EXPERIMENT_NAME"},
        {"replay"}));

    auto exp = launch_local(spec, registry);
    for (int i = 0; i < 200 && exp.status("printer").state == ProcessStatus::State::Running; ++i)
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    auto lines = tail_logs(registry, "envcheck", "printer", 10);
    ASSERT_FALSE(lines.empty());
    uint16_t port = exp.addresses().services.at("replay").port;
    EXPECT_EQ(lines.back(), "replay=127.0.0.1:" + std::to_string(port) + " exp=envcheck");
    exp.kill_all();
}

TEST(LaunchLocal, KillLeavesNoOrphans) {
    Registry registry(temp_home());
    ExperimentSpec spec;
    spec.name = "orphans";
    for (int i = 0; i < 3; ++i)
        spec.processes.push_back(proc("sleeper-" + std::to_string(i), {"/bin/sh", "-c", "sleep 60"}));

    auto exp = launch_local(spec, registry);
    std::vector<pid_t> pids;
    for (const auto& p : exp.procs()) pids.push_back(p.pid);
    exp.kill_all();
    for (pid_t pid : pids) {
        EXPECT_NE(::kill(pid, 0), 0) << "pid " << pid << " still alive";
    }
}

TEST(Registry, ListReflectsLaunchesAndKills) {
    Registry registry(temp_home());
    const int kLaunch = 4, kKill = 2;
    for (int i = 0; i < kLaunch; ++i) {
        ExperimentSpec spec;
        spec.name = "exp-" + std::to_string(i);
        spec.processes.push_back(proc("p", {"/bin/sh", "-c", "sleep 60"}));
        launch_local(spec, registry);
    }
    EXPECT_EQ(registry.list_experiments().size(), static_cast<size_t>(kLaunch));
    for (int i = 0; i < kKill; ++i) kill_experiment(registry, "exp-" + std::to_string(i));
    auto names = registry.list_experiments();
    EXPECT_EQ(names.size(), static_cast<size_t>(kLaunch - kKill));
    for (int i = kKill; i < kLaunch; ++i)
        EXPECT_NE(std::find(names.begin(), names.end(), "exp-" + std::to_string(i)), names.end());
    for (int i = kKill; i < kLaunch; ++i) kill_experiment(registry, "exp-" + std::to_string(i));
}

TEST(Management, ListProcessesAndLogs) {
    Registry registry(temp_home());
    ExperimentSpec spec;
    spec.name = "cheetah";
    spec.processes.push_back(proc("actor-0", {"/bin/sh", "-c", "echo actor-0 running ...; sleep 30"}));
    auto exp = launch_local(spec, registry);

    auto names = registry.list_experiments();
    EXPECT_NE(std::find(names.begin(), names.end(), "cheetah"), names.end());

    auto rows = list_processes(registry, "cheetah");
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].name, "actor-0");
    EXPECT_EQ(rows[0].status, "running");

    for (int i = 0; i < 100; ++i) {
        auto lines = tail_logs(registry, "cheetah", "actor-0", 5);
        if (!lines.empty() && lines.back().find("actor-0 running") != std::string::npos) break;
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    auto lines = tail_logs(registry, "cheetah", "actor-0", 5);
    ASSERT_FALSE(lines.empty());
    EXPECT_NE(lines.back().find("actor-0 running"), std::string::npos);

    EXPECT_THROW(tail_logs(registry, "cheetah", "nonexistent", 5), NotFoundError);
    EXPECT_THROW(list_processes(registry, "unknown-exp"), NotFoundError);
    exp.kill_all();
}

TEST(Manifest, NodepoolSelectorAndResources) {
    auto cluster = provision::generate_cluster_spec(
        "kuflexes", {{"v100-nodepool", {32, provision::MemoryClass::Standard, 1, "v100"}, 0, 4}},
        "gce_like");

    ExperimentSpec spec;
    spec.name = "sched";
    auto learner = proc("learner", {"learner", "--run"});
    learner.resources = {5, 0, 1, "v100", "v100-nodepool"};
    spec.processes.push_back(learner);

    auto files = emit_manifest(spec, cluster);
    ASSERT_TRUE(files.count("process-learner.json"));
    auto doc = nlohmann::json::parse(files.at("process-learner.json"));
    EXPECT_EQ(doc.at("nodepool"), "v100-nodepool");
    EXPECT_EQ(doc.at("resources").at("cpu").get<double>(), 5);
    EXPECT_EQ(doc.at("resources").at("gpu").get<int>(), 1);
}

TEST(Manifest, GroupMembersShareColocationKey) {
    auto cluster = provision::generate_cluster_spec("c", {}, "gce_like");
    ExperimentSpec spec;
    spec.name = "grouped";
    auto a = proc("a", {"x"});
    auto b = proc("b", {"x"});
    spec.processes.push_back(a);
    spec.processes.push_back(b);
    spec.groups.push_back({"pair", {"a", "b"}});

    auto files = emit_manifest(spec, cluster);
    auto da = nlohmann::json::parse(files.at("process-a.json"));
    auto db = nlohmann::json::parse(files.at("process-b.json"));
    EXPECT_EQ(da.at("colocate"), "pair");
    EXPECT_EQ(da.at("colocate"), db.at("colocate"));
}

TEST(Manifest, ByteDeterministic) {
    auto cluster = provision::generate_cluster_spec("c", {}, "gce_like");
    ExperimentSpec spec;
    spec.name = "det";
    spec.processes.push_back(proc("replay", {"replay"}, {"replay"}));
    spec.processes.push_back(proc("learner", {"learner"}, {}, {"replay"}));
    spec.created_at_ms = 111;

    auto first = emit_manifest(spec, cluster);
    spec.created_at_ms = 999;  // timestamps must not leak into manifests
    auto second = emit_manifest(spec, cluster);
    EXPECT_EQ(first, second);
    ASSERT_TRUE(first.count("service-replay.json"));
    auto svc = nlohmann::json::parse(first.at("service-replay.json"));
    EXPECT_EQ(svc.at("host"), "replay");
    EXPECT_EQ(svc.at("bound_by"), "replay");
}

TEST(Manifest, UnknownNodepoolRejected) {
    auto cluster = provision::generate_cluster_spec("c", {}, "gce_like");
    ExperimentSpec spec;
    spec.name = "referr";
    auto p = proc("l", {"x"});
    p.resources.nodepool = "missing-pool";
    spec.processes.push_back(p);
    EXPECT_THROW(emit_manifest(spec, cluster), ReferenceError);
}

}  // namespace
