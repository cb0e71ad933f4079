// Descriptive hardware parameters -> vendor machine-type identifiers, plus
// cluster spec files consumed by the manifest emitter. Vendor naming tables
// live under data/vendors/ so adding a vendor is an edit, not a rebuild.
#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "deskrl/common.hpp"

namespace deskrl::provision {

using json = nlohmann::json;

enum class MemoryClass { Standard, Highmem };

inline std::string to_string(MemoryClass m) {
    return m == MemoryClass::Standard ? "standard" : "highmem";
}

inline MemoryClass memory_class_from(const std::string& s) {
    if (s == "standard") return MemoryClass::Standard;
    if (s == "highmem") return MemoryClass::Highmem;
    throw ParseError("unknown memory class '" + s + "'");
}

struct MachineDescriptor {
    int cpu = 1;
    MemoryClass memory_class = MemoryClass::Standard;
    int gpu = 0;
    std::string gpu_type;  // set only when gpu > 0

    bool operator==(const MachineDescriptor&) const = default;
};

inline void check_descriptor(const MachineDescriptor& d) {
    if (d.cpu < 1) throw ConfigError("cpu must be >= 1");
    if (d.gpu < 0) throw ConfigError("gpu must be >= 0");
    if (d.gpu > 0 && d.gpu_type.empty())
        throw ConfigError("gpu_type required when gpu > 0");
    if (d.gpu == 0 && !d.gpu_type.empty())
        throw ConfigError("gpu_type set but gpu == 0");
}

struct MappedMachine {
    std::string machine_type;
    int effective_cpu = 0;  // after nearest-above rounding
    bool rounded_up = false;
};

inline std::string vendor_data_dir() {
    std::string env = env_or("SURREAL_VENDOR_DIR", "");
    if (!env.empty()) return env;
#ifdef DESKRL_DATA_DIR
    return std::string(DESKRL_DATA_DIR) + "/vendors";
#else
    return "data/vendors";
#endif
}

struct VendorTable {
    std::string vendor;
    std::vector<int> supported_cpus;                       // ascending
    std::map<std::string, std::map<int, std::string>> types;  // memory class -> cpu -> id
    std::vector<std::string> gpu_types;
};

inline VendorTable load_vendor_table(const std::string& vendor) {
    std::filesystem::path path = std::filesystem::path(vendor_data_dir()) / (vendor + ".json");
    std::ifstream in(path);
    if (!in) throw MappingError("no vendor table for '" + vendor + "' at " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError("vendor table " + path.string() + ": " + e.what());
    }
    VendorTable t;
    t.vendor = j.at("vendor").get<std::string>();
    t.supported_cpus = j.at("supported_cpus").get<std::vector<int>>();
    std::sort(t.supported_cpus.begin(), t.supported_cpus.end());
    for (const auto& [cls, table] : j.at("machine_types").items())
        for (const auto& [cpu, id] : table.items())
            t.types[cls][std::stoi(cpu)] = id.get<std::string>();
    t.gpu_types = j.at("gpu_types").get<std::vector<std::string>>();
    return t;
}

inline MappedMachine map_machine_type(const MachineDescriptor& d, const std::string& vendor) {
    check_descriptor(d);
    VendorTable table = load_vendor_table(vendor);

    // Nearest-above rounding onto the supported grid.
    auto it = std::lower_bound(table.supported_cpus.begin(), table.supported_cpus.end(), d.cpu);
    if (it == table.supported_cpus.end()) {
        std::ostringstream msg;
        msg << "cpu=" << d.cpu << " exceeds the largest supported size; nearest options:";
        for (int c : table.supported_cpus) msg << ' ' << c;
        throw MappingError(msg.str());
    }
    int cpu = *it;

    if (d.gpu > 0 &&
        std::find(table.gpu_types.begin(), table.gpu_types.end(), d.gpu_type) == table.gpu_types.end()) {
        std::ostringstream msg;
        msg << "gpu_type '" << d.gpu_type << "' not offered; nearest options:";
        for (const auto& g : table.gpu_types) msg << ' ' << g;
        throw MappingError(msg.str());
    }

    auto cls = table.types.find(to_string(d.memory_class));
    if (cls == table.types.end() || !cls->second.count(cpu))
        throw MappingError("no " + to_string(d.memory_class) + " identifier for cpu=" +
                           std::to_string(cpu) + " in vendor '" + vendor + "'");
    return MappedMachine{cls->second.at(cpu), cpu, cpu != d.cpu};
}

struct NodePool {
    std::string name;
    MachineDescriptor descriptor;
    std::string vendor_machine_type;
    int min_nodes = 0;
    int max_nodes = 1;

    bool operator==(const NodePool&) const = default;
};

struct ClusterSpec {
    std::string name;
    std::string vendor;
    std::vector<NodePool> nodepools;

    bool operator==(const ClusterSpec&) const = default;

    const NodePool* find_pool(const std::string& pool_name) const {
        for (const auto& p : nodepools)
            if (p.name == pool_name) return &p;
        return nullptr;
    }
};

struct PoolRequest {
    std::string name;
    MachineDescriptor descriptor;
    int min_nodes = 0;
    int max_nodes = 1;
};

inline ClusterSpec generate_cluster_spec(const std::string& name,
                                         const std::vector<PoolRequest>& pools,
                                         const std::string& vendor) {
    ClusterSpec spec;
    spec.name = name;
    spec.vendor = vendor;
    for (const auto& req : pools) {
        if (spec.find_pool(req.name))
            throw ConfigError("duplicate pool name '" + req.name + "'");
        MappedMachine mapped = map_machine_type(req.descriptor, vendor);
        spec.nodepools.push_back(
            NodePool{req.name, req.descriptor, mapped.machine_type, req.min_nodes, req.max_nodes});
    }
    return spec;
}

inline std::string cluster_to_text(const ClusterSpec& spec) {
    json pools = json::array();
    for (const auto& p : spec.nodepools) {
        json d = {{"cpu", p.descriptor.cpu},
                  {"memory_class", to_string(p.descriptor.memory_class)},
                  {"gpu", p.descriptor.gpu}};
        if (p.descriptor.gpu > 0) d["gpu_type"] = p.descriptor.gpu_type;
        pools.push_back({{"name", p.name},
                         {"descriptor", d},
                         {"vendor_machine_type", p.vendor_machine_type},
                         {"min_nodes", p.min_nodes},
                         {"max_nodes", p.max_nodes}});
    }
    json j = {{"name", spec.name}, {"vendor", spec.vendor}, {"nodepools", pools}};
    return j.dump(2) + "\n";
}

inline ClusterSpec load_cluster_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("cluster file: ") + e.what());
    }
    ClusterSpec spec;
    try {
        spec.name = j.at("name").get<std::string>();
        spec.vendor = j.at("vendor").get<std::string>();
        for (const auto& p : j.at("nodepools")) {
            NodePool pool;
            pool.name = p.at("name").get<std::string>();
            const auto& d = p.at("descriptor");
            pool.descriptor.cpu = d.at("cpu").get<int>();
            pool.descriptor.memory_class = memory_class_from(d.at("memory_class").get<std::string>());
            pool.descriptor.gpu = d.at("gpu").get<int>();
            if (d.contains("gpu_type")) pool.descriptor.gpu_type = d.at("gpu_type").get<std::string>();
            pool.vendor_machine_type = p.at("vendor_machine_type").get<std::string>();
            pool.min_nodes = p.at("min_nodes").get<int>();
            pool.max_nodes = p.at("max_nodes").get<int>();
            spec.nodepools.push_back(std::move(pool));
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("cluster file: ") + e.what());
    }
    // The stored identifier must agree with the active mapping table.
    for (const auto& p : spec.nodepools) {
        MappedMachine mapped = map_machine_type(p.descriptor, spec.vendor);
        if (mapped.machine_type != p.vendor_machine_type)
            throw ParseError("pool '" + p.name + "': machine type '" + p.vendor_machine_type +
                             "' does not match mapping '" + mapped.machine_type + "'");
    }
    return spec;
}

inline void save_cluster_file(const ClusterSpec& spec, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + path);
    out << cluster_to_text(spec);
}

inline ClusterSpec load_cluster_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("no cluster file at " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return load_cluster_text(ss.str());
}

}  // namespace deskrl::provision
