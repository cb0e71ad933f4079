// Experiment declaration and launch: a process graph with bind/connect
// service edges and resource claims, resolved to addresses and either
// spawned as local OS processes or emitted as deterministic deployment
// manifests. Experiment state lives in a directory tree under
// SURREAL_HOME (default ~/.mini-surreal); no daemon, no database.
#pragma once

#include <fcntl.h>
#include <signal.h>
#include <sys/file.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "deskrl/channel.hpp"
#include "deskrl/provision.hpp"

extern char** environ;

namespace deskrl::orchestra {

using json = nlohmann::json;
namespace fs = std::filesystem;

// ---- declaration types ------------------------------------------------------

struct ResourceClaim {
    double cpu = 0;
    double memory_mb = 0;
    int gpu = 0;
    std::string gpu_type;
    std::string nodepool;

    bool operator==(const ResourceClaim&) const = default;
};

struct ProcessSpec {
    std::string name;
    std::vector<std::string> command;
    std::vector<std::string> binds;
    std::vector<std::string> connects;
    ResourceClaim resources;
    std::string group;

    bool operator==(const ProcessSpec&) const = default;
};

struct ProcessGroup {
    std::string name;
    std::vector<std::string> members;

    bool operator==(const ProcessGroup&) const = default;
};

struct ExperimentSpec {
    std::string name;
    std::vector<ProcessSpec> processes;
    std::vector<ProcessGroup> groups;
    int64_t created_at_ms = 0;

    bool operator==(const ExperimentSpec&) const = default;

    const ProcessSpec* find_process(const std::string& pname) const {
        for (const auto& p : processes)
            if (p.name == pname) return &p;
        return nullptr;
    }
};

inline bool valid_identifier(const std::string& s) {
    if (s.empty() || s.size() > 63) return false;
    for (char c : s)
        if (!(std::islower(static_cast<unsigned char>(c)) ||
              std::isdigit(static_cast<unsigned char>(c)) || c == '-'))
            return false;
    return true;
}

// ---- validation ---------------------------------------------------------------

struct Violation {
    std::string code;     // e.g. "duplicate-bind"
    std::string subject;  // offending process or service
    std::string detail;

    std::string to_string() const { return code + "(" + subject + "): " + detail; }
};

inline std::vector<Violation> validate(const ExperimentSpec& spec) {
    std::vector<Violation> out;
    if (!valid_identifier(spec.name))
        out.push_back({"bad-name", spec.name, "experiment name must be lowercase alnum/dash, <= 63 chars"});

    std::map<std::string, int> name_count;
    for (const auto& p : spec.processes) name_count[p.name]++;
    for (const auto& [n, c] : name_count)
        if (c > 1) out.push_back({"duplicate-process", n, "process name declared " + std::to_string(c) + " times"});

    std::map<std::string, std::vector<std::string>> binders;  // service -> processes
    for (const auto& p : spec.processes) {
        if (!valid_identifier(p.name))
            out.push_back({"bad-name", p.name, "process name must be lowercase alnum/dash"});
        if (p.command.empty())
            out.push_back({"empty-command", p.name, "process has no command"});
        std::map<std::string, int> per_proc;
        for (const auto& svc : p.binds) {
            binders[svc].push_back(p.name);
            if (++per_proc[svc] == 2)
                out.push_back({"duplicate-bind", svc, "process " + p.name + " binds '" + svc + "' twice"});
        }
        if (p.resources.gpu == 0 && !p.resources.gpu_type.empty())
            out.push_back({"gpu-type-without-gpu", p.name, "gpu_type set but gpu == 0"});
        if (p.resources.cpu < 0 || p.resources.memory_mb < 0 || p.resources.gpu < 0)
            out.push_back({"negative-resource", p.name, "resource claims must be >= 0"});
    }
    for (const auto& [svc, procs] : binders) {
        std::vector<std::string> uniq = procs;
        std::sort(uniq.begin(), uniq.end());
        uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
        if (uniq.size() > 1) {
            std::string who;
            for (const auto& p : uniq) who += (who.empty() ? "" : ", ") + p;
            out.push_back({"duplicate-bind", svc, "bound by " + who});
        }
    }
    for (const auto& p : spec.processes)
        for (const auto& svc : p.connects)
            if (!binders.count(svc))
                out.push_back({"unbound-service", svc, "connected by " + p.name + " but bound by nobody"});

    std::map<std::string, int> group_count;
    for (const auto& g : spec.groups) group_count[g.name]++;
    for (const auto& [n, c] : group_count)
        if (c > 1) out.push_back({"duplicate-group", n, "group declared " + std::to_string(c) + " times"});
    for (const auto& g : spec.groups)
        for (const auto& m : g.members)
            if (!spec.find_process(m))
                out.push_back({"unknown-member", g.name, "group lists unknown process '" + m + "'"});
    for (const auto& p : spec.processes)
        if (!p.group.empty() && !group_count.count(p.group))
            out.push_back({"unknown-group", p.name, "references undeclared group '" + p.group + "'"});

    return out;
}

inline void require_valid(const ExperimentSpec& spec) {
    auto violations = validate(spec);
    if (!violations.empty()) {
        std::string msg;
        for (const auto& v : violations) msg += (msg.empty() ? "" : "; ") + v.to_string();
        throw Error("validation", msg);
    }
}

// Effective group membership: listed members plus processes naming the group.
inline std::map<std::string, std::string> group_of_process(const ExperimentSpec& spec) {
    std::map<std::string, std::string> out;
    for (const auto& g : spec.groups)
        for (const auto& m : g.members) out[m] = g.name;
    for (const auto& p : spec.processes)
        if (!p.group.empty()) out[p.name] = p.group;
    return out;
}

// ---- address assignment ------------------------------------------------------------

enum class Backend { Local, Manifest };

constexpr uint16_t kBasePort = 7000;

struct AddressTable {
    std::map<std::string, Endpoint> services;

    // SYMPH_<UPPERCASED-SERVICE>_HOST / _PORT, dashes become underscores.
    std::map<std::string, std::string> env_map() const {
        std::map<std::string, std::string> env;
        for (const auto& [svc, ep] : services) {
            std::string key = svc;
            for (auto& c : key) c = (c == '-') ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
            env["SYMPH_" + key + "_HOST"] = ep.host;
            env["SYMPH_" + key + "_PORT"] = std::to_string(ep.port);
        }
        return env;
    }
};

// Deterministic allocation: services in lexicographic order take ports from
// base upward; the local backend skips ports already occupied on the host.
inline AddressTable assign_addresses(const ExperimentSpec& spec, Backend backend,
                                     uint16_t base_port = kBasePort) {
    require_valid(spec);
    std::vector<std::string> services;
    for (const auto& p : spec.processes)
        for (const auto& svc : p.binds) services.push_back(svc);
    std::sort(services.begin(), services.end());
    services.erase(std::unique(services.begin(), services.end()), services.end());

    AddressTable table;
    uint32_t port = base_port;
    for (const auto& svc : services) {
        if (backend == Backend::Local) {
            while (port <= UINT16_MAX && !net::port_available(static_cast<uint16_t>(port))) port++;
        }
        if (port > UINT16_MAX) throw AllocationError("ran out of ports assigning '" + svc + "'");
        std::string host = backend == Backend::Local ? "127.0.0.1" : svc;
        table.services[svc] = Endpoint{host, static_cast<uint16_t>(port)};
        port++;
    }
    return table;
}

// ---- experiment file ---------------------------------------------------------------

inline json resources_to_json(const ResourceClaim& r) {
    json j = {{"cpu", r.cpu}, {"memory_mb", r.memory_mb}, {"gpu", r.gpu}};
    if (!r.gpu_type.empty()) j["gpu_type"] = r.gpu_type;
    if (!r.nodepool.empty()) j["nodepool"] = r.nodepool;
    return j;
}

inline std::string serialize_experiment(const ExperimentSpec& spec) {
    json procs = json::array();
    for (const auto& p : spec.processes) {
        json jp = {{"name", p.name},
                   {"command", p.command},
                   {"binds", p.binds},
                   {"connects", p.connects},
                   {"resources", resources_to_json(p.resources)}};
        if (!p.group.empty()) jp["group"] = p.group;
        procs.push_back(jp);
    }
    json groups = json::array();
    for (const auto& g : spec.groups) groups.push_back({{"name", g.name}, {"members", g.members}});
    json j = {{"name", spec.name},
              {"created_at_ms", spec.created_at_ms},
              {"processes", procs},
              {"groups", groups}};
    return j.dump(2) + "\n";
}

inline ExperimentSpec load_experiment_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("experiment file: ") + e.what());
    }

    ExperimentSpec spec;
    if (!j.contains("name")) throw ParseError("experiment file: missing field 'name'");
    spec.name = j.at("name").get<std::string>();
    spec.created_at_ms = j.value("created_at_ms", int64_t{0});
    if (!j.contains("processes")) throw ParseError("experiment file: missing field 'processes'");
    for (const auto& jp : j.at("processes")) {
        ProcessSpec p;
        if (!jp.contains("name")) throw ParseError("experiment file: process missing field 'name'");
        p.name = jp.at("name").get<std::string>();
        if (!jp.contains("command"))
            throw ParseError("process '" + p.name + "': missing field 'command'");
        try {
            p.command = jp.at("command").get<std::vector<std::string>>();
            p.binds = jp.value("binds", std::vector<std::string>{});
            p.connects = jp.value("connects", std::vector<std::string>{});
            p.group = jp.value("group", std::string{});
            if (jp.contains("resources")) {
                const auto& r = jp.at("resources");
                p.resources.cpu = r.value("cpu", 0.0);
                p.resources.memory_mb = r.value("memory_mb", 0.0);
                p.resources.gpu = r.value("gpu", 0);
                p.resources.gpu_type = r.value("gpu_type", std::string{});
                p.resources.nodepool = r.value("nodepool", std::string{});
            }
        } catch (const json::exception& e) {
            throw ParseError("process '" + p.name + "': " + e.what());
        }
        spec.processes.push_back(std::move(p));
    }
    for (const auto& jg : j.value("groups", json::array())) {
        ProcessGroup g;
        if (!jg.contains("name")) throw ParseError("experiment file: group missing field 'name'");
        g.name = jg.at("name").get<std::string>();
        g.members = jg.value("members", std::vector<std::string>{});
        spec.groups.push_back(std::move(g));
    }
    return spec;
}

inline void save_experiment_file(const ExperimentSpec& spec, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + path);
    out << serialize_experiment(spec);
}

inline ExperimentSpec load_experiment_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("no experiment file at " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return load_experiment_text(ss.str());
}

// ---- registry --------------------------------------------------------------------------

inline std::string default_home() {
    std::string home = env_or("SURREAL_HOME", "");
    if (!home.empty()) return home;
    return env_or("HOME", ".") + "/.mini-surreal";
}

class FileLock {
public:
    explicit FileLock(const fs::path& path) {
        fd_ = ::open(path.c_str(), O_CREAT | O_RDWR, 0644);
        if (fd_ >= 0) ::flock(fd_, LOCK_EX);
    }
    ~FileLock() {
        if (fd_ >= 0) {
            ::flock(fd_, LOCK_UN);
            ::close(fd_);
        }
    }
    FileLock(const FileLock&) = delete;
    FileLock& operator=(const FileLock&) = delete;

private:
    int fd_ = -1;
};

class Registry {
public:
    explicit Registry(std::string root = default_home()) : root_(std::move(root)) {
        fs::create_directories(experiments_dir());
    }

    const std::string& root() const { return root_; }
    fs::path experiments_dir() const { return fs::path(root_) / "experiments"; }
    fs::path exp_dir(const std::string& name) const { return experiments_dir() / name; }
    fs::path lock_path() const { return fs::path(root_) / ".lock"; }

    bool exists(const std::string& name) const {
        return fs::exists(exp_dir(name) / "experiment.json");
    }

    std::vector<std::string> list_experiments() const {
        FileLock lock(lock_path());
        std::vector<std::string> names;
        if (!fs::exists(experiments_dir())) return names;
        for (const auto& entry : fs::directory_iterator(experiments_dir()))
            if (entry.is_directory() && fs::exists(entry.path() / "experiment.json"))
                names.push_back(entry.path().filename().string());
        std::sort(names.begin(), names.end());
        return names;
    }

    // Creates the experiment directory tree; name conflicts are an error.
    fs::path create(const ExperimentSpec& spec) {
        FileLock lock(lock_path());
        if (exists(spec.name))
            throw NameConflictError("experiment '" + spec.name + "' already exists");
        fs::path dir = exp_dir(spec.name);
        fs::create_directories(dir / "logs");
        fs::create_directories(dir / "pids");
        fs::create_directories(dir / "status");
        save_experiment_file(spec, (dir / "experiment.json").string());
        return dir;
    }

    void remove(const std::string& name) {
        FileLock lock(lock_path());
        if (!exists(name)) throw NotFoundError("no experiment '" + name + "'");
        fs::remove_all(exp_dir(name));
    }

    ExperimentSpec load(const std::string& name) const {
        if (!exists(name)) throw NotFoundError("no experiment '" + name + "'");
        return load_experiment_file((exp_dir(name) / "experiment.json").string());
    }

private:
    std::string root_;
};

// ---- local process launch ------------------------------------------------------------------

struct ProcessStatus {
    enum class State { Running, Exited, Signaled, SpawnFailed, Unknown };
    State state = State::Unknown;
    int code = 0;  // exit code or signal number

    std::string to_string() const {
        switch (state) {
            case State::Running: return "running";
            case State::Exited: return "exited(" + std::to_string(code) + ")";
            case State::Signaled: return "signaled(" + std::to_string(code) + ")";
            case State::SpawnFailed: return "spawn-failed";
            default: return "unknown";
        }
    }
};

namespace detail {

// fork/exec with stdout+stderr captured to log_path; the child becomes its
// own process group leader so the whole tree can be signalled at once.
// Returns pid, or -1 with err set when exec fails.
inline pid_t spawn_process(const std::vector<std::string>& command,
                           const std::map<std::string, std::string>& extra_env,
                           const std::string& log_path, std::string& err) {
    int epipe[2];
    if (::pipe2(epipe, O_CLOEXEC) != 0) {
        err = "pipe2 failed";
        return -1;
    }

    std::vector<std::string> env_store;
    for (char** e = environ; *e; ++e) {
        std::string kv(*e);
        auto eq = kv.find('=');
        if (eq != std::string::npos && extra_env.count(kv.substr(0, eq))) continue;
        env_store.push_back(std::move(kv));
    }
    for (const auto& [k, v] : extra_env) env_store.push_back(k + "=" + v);

    pid_t pid = ::fork();
    if (pid < 0) {
        ::close(epipe[0]);
        ::close(epipe[1]);
        err = "fork failed";
        return -1;
    }
    if (pid == 0) {
        ::setpgid(0, 0);
        int logfd = ::open(log_path.c_str(), O_CREAT | O_WRONLY | O_APPEND, 0644);
        if (logfd >= 0) {
            ::dup2(logfd, STDOUT_FILENO);
            ::dup2(logfd, STDERR_FILENO);
            ::close(logfd);
        }
        std::vector<char*> argv;
        for (const auto& a : command) argv.push_back(const_cast<char*>(a.c_str()));
        argv.push_back(nullptr);
        std::vector<char*> envp;
        for (const auto& e : env_store) envp.push_back(const_cast<char*>(e.c_str()));
        envp.push_back(nullptr);
        ::execvpe(argv[0], argv.data(), envp.data());
        int e = errno;
        ssize_t n = ::write(epipe[1], &e, sizeof(e));
        (void)n;
        ::_exit(127);
    }
    ::close(epipe[1]);
    int child_errno = 0;
    ssize_t n = ::read(epipe[0], &child_errno, sizeof(child_errno));
    ::close(epipe[0]);
    if (n > 0) {
        ::waitpid(pid, nullptr, 0);
        err = std::string("exec '") + command[0] + "': " + std::strerror(child_errno);
        return -1;
    }
    return pid;
}

}  // namespace detail

// Handle over a locally launched experiment. Owns the children: poll() reaps
// exits, kill_all() tears the whole tree down.
class LocalExperiment {
public:
    struct Proc {
        std::string name;
        pid_t pid = -1;
        std::string log_path;
        ProcessStatus status;
    };

    LocalExperiment() = default;
    LocalExperiment(std::string name, fs::path dir) : name_(std::move(name)), dir_(std::move(dir)) {}

    const std::string& name() const { return name_; }
    const fs::path& dir() const { return dir_; }
    const std::vector<Proc>& procs() const { return procs_; }
    const AddressTable& addresses() const { return addresses_; }

    void add(Proc p) { procs_.push_back(std::move(p)); }
    void set_addresses(AddressTable t) { addresses_ = std::move(t); }

    bool degraded() const {
        for (const auto& p : procs_)
            if (p.status.state == ProcessStatus::State::SpawnFailed) return true;
        return false;
    }

    // Reaps any children that exited since the last poll.
    void poll() {
        for (auto& p : procs_) {
            if (p.status.state != ProcessStatus::State::Running) continue;
            int wstatus = 0;
            pid_t r = ::waitpid(p.pid, &wstatus, WNOHANG);
            if (r == p.pid) {
                if (WIFEXITED(wstatus))
                    p.status = {ProcessStatus::State::Exited, WEXITSTATUS(wstatus)};
                else if (WIFSIGNALED(wstatus))
                    p.status = {ProcessStatus::State::Signaled, WTERMSIG(wstatus)};
                write_status_file(p);
            }
        }
    }

    ProcessStatus status(const std::string& pname) {
        poll();
        for (const auto& p : procs_)
            if (p.name == pname) return p.status;
        throw NotFoundError("no process '" + pname + "' in experiment '" + name_ + "'");
    }

    size_t running_count() {
        poll();
        size_t n = 0;
        for (const auto& p : procs_)
            if (p.status.state == ProcessStatus::State::Running) n++;
        return n;
    }

    // SIGTERM the process groups, then SIGKILL stragglers after the grace
    // period; reaps everything.
    void kill_all(int grace_ms = 2000) {
        poll();
        for (auto& p : procs_)
            if (p.status.state == ProcessStatus::State::Running) ::kill(-p.pid, SIGTERM);
        int64_t deadline = now_ms() + grace_ms;
        while (now_ms() < deadline && running_count() > 0)
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
        for (auto& p : procs_)
            if (p.status.state == ProcessStatus::State::Running) ::kill(-p.pid, SIGKILL);
        while (running_count() > 0) std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }

private:
    void write_status_file(const Proc& p) {
        if (dir_.empty()) return;
        std::ofstream out(dir_ / "status" / p.name, std::ios::trunc);
        out << p.status.to_string() << "\n";
    }

    std::string name_;
    fs::path dir_;
    std::vector<Proc> procs_;
    AddressTable addresses_;
};

// One OS process per ProcessSpec, each started with the rendered address
// env plus SYMPH_EXPERIMENT_NAME, logs captured per process. A spawn
// failure degrades the experiment but leaves its siblings running.
inline LocalExperiment launch_local(const ExperimentSpec& spec, Registry& registry) {
    require_valid(spec);
    AddressTable table = assign_addresses(spec, Backend::Local);
    fs::path dir = registry.create(spec);

    LocalExperiment exp(spec.name, dir);
    exp.set_addresses(table);

    std::map<std::string, std::string> env = table.env_map();
    env["SYMPH_EXPERIMENT_NAME"] = spec.name;

    for (const auto& p : spec.processes) {
        LocalExperiment::Proc proc;
        proc.name = p.name;
        proc.log_path = (dir / "logs" / (p.name + ".log")).string();
        std::string err;
        pid_t pid = detail::spawn_process(p.command, env, proc.log_path, err);
        if (pid < 0) {
            proc.status = {ProcessStatus::State::SpawnFailed, 0};
            std::ofstream out(dir / "status" / p.name, std::ios::trunc);
            out << "spawn-failed: " << err << "\n";
        } else {
            proc.pid = pid;
            proc.status = {ProcessStatus::State::Running, 0};
            std::ofstream out(dir / "pids" / (p.name + ".pid"), std::ios::trunc);
            out << pid << "\n";
        }
        exp.add(std::move(proc));
    }
    return exp;
}

// ---- registry-side management (works across CLI invocations) --------------------------------

struct ProcessRow {
    std::string name;
    std::string status;
    pid_t pid = -1;
};

inline std::vector<ProcessRow> list_processes(const Registry& registry, const std::string& exp) {
    ExperimentSpec spec = registry.load(exp);
    fs::path dir = registry.exp_dir(exp);
    std::vector<ProcessRow> rows;
    for (const auto& p : spec.processes) {
        ProcessRow row;
        row.name = p.name;
        fs::path pid_file = dir / "pids" / (p.name + ".pid");
        fs::path status_file = dir / "status" / p.name;
        if (fs::exists(pid_file)) {
            std::ifstream in(pid_file);
            in >> row.pid;
        }
        if (row.pid > 0 && ::kill(row.pid, 0) == 0) {
            row.status = "running";
        } else if (fs::exists(status_file)) {
            std::ifstream in(status_file);
            std::getline(in, row.status);
        } else {
            row.status = row.pid > 0 ? "exited" : "not-started";
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::vector<std::string> tail_logs(const Registry& registry, const std::string& exp,
                                          const std::string& process, size_t tail) {
    ExperimentSpec spec = registry.load(exp);
    if (!spec.find_process(process))
        throw NotFoundError("no process '" + process + "' in experiment '" + exp + "'");
    fs::path log = registry.exp_dir(exp) / "logs" / (process + ".log");
    if (!fs::exists(log)) throw NotFoundError("no log for process '" + process + "'");
    std::ifstream in(log);
    std::deque<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        lines.push_back(line);
        if (lines.size() > tail) lines.pop_front();
    }
    return {lines.begin(), lines.end()};
}

// Stops every recorded process group of the experiment and removes its
// registry entry.
inline void kill_experiment(const Registry& registry, const std::string& exp, int grace_ms = 2000) {
    if (!registry.exists(exp)) throw NotFoundError("no experiment '" + exp + "'");
    fs::path pid_dir = registry.exp_dir(exp) / "pids";
    std::vector<pid_t> pids;
    if (fs::exists(pid_dir)) {
        for (const auto& entry : fs::directory_iterator(pid_dir)) {
            std::ifstream in(entry.path());
            pid_t pid = -1;
            in >> pid;
            if (pid > 0) pids.push_back(pid);
        }
    }
    for (pid_t pid : pids) ::kill(-pid, SIGTERM);
    int64_t deadline = now_ms() + grace_ms;
    auto any_alive = [&] {
        for (pid_t pid : pids)
            if (::kill(pid, 0) == 0) return true;
        return false;
    };
    while (now_ms() < deadline && any_alive())
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
    for (pid_t pid : pids)
        if (::kill(pid, 0) == 0) ::kill(-pid, SIGKILL);
    // Reap in case they were our children.
    for (pid_t pid : pids) ::waitpid(pid, nullptr, WNOHANG);
    const_cast<Registry&>(registry).remove(exp);
}

// ---- manifest emission ----------------------------------------------------------------------

// Deterministic, byte-stable deployment documents: one per process, one per
// bound service, with group co-location recorded on the members. A pure
// function of (spec, cluster); no timestamps.
inline std::map<std::string, std::string> emit_manifest(const ExperimentSpec& spec,
                                                        const provision::ClusterSpec& cluster) {
    require_valid(spec);
    for (const auto& p : spec.processes)
        if (!p.resources.nodepool.empty() && !cluster.find_pool(p.resources.nodepool))
            throw ReferenceError("process '" + p.name + "' claims unknown nodepool '" +
                                 p.resources.nodepool + "'");

    AddressTable table = assign_addresses(spec, Backend::Manifest);
    std::map<std::string, std::string> env = table.env_map();
    env["SYMPH_EXPERIMENT_NAME"] = spec.name;
    auto groups = group_of_process(spec);

    std::map<std::string, std::string> files;
    for (const auto& p : spec.processes) {
        json doc = {{"kind", "process"},
                    {"experiment", spec.name},
                    {"name", p.name},
                    {"command", p.command},
                    {"env", env},
                    {"resources", resources_to_json(p.resources)}};
        if (!p.resources.nodepool.empty()) doc["nodepool"] = p.resources.nodepool;
        if (groups.count(p.name)) doc["colocate"] = groups.at(p.name);
        files["process-" + p.name + ".json"] = doc.dump(2) + "\n";
    }
    std::map<std::string, std::string> bound_by;
    for (const auto& p : spec.processes)
        for (const auto& svc : p.binds) bound_by[svc] = p.name;
    for (const auto& [svc, ep] : table.services) {
        json doc = {{"kind", "service"},
                    {"experiment", spec.name},
                    {"name", svc},
                    {"host", ep.host},
                    {"port", ep.port},
                    {"bound_by", bound_by.at(svc)}};
        files["service-" + svc + ".json"] = doc.dump(2) + "\n";
    }
    return files;
}

inline void write_manifest_files(const std::map<std::string, std::string>& files,
                                 const std::string& out_dir) {
    fs::create_directories(out_dir);
    for (const auto& [name, content] : files) {
        std::ofstream out(fs::path(out_dir) / name, std::ios::trunc);
        if (!out) throw ConfigError("cannot write " + name + " under " + out_dir);
        out << content;
    }
}

}  // namespace deskrl::orchestra
