// Evolution strategies: homogeneous actors evaluate seed-identified
// Gaussian perturbations of the mean parameters; the master recombines
// episodic returns into the smoothed-objective gradient estimate
//   g = (1/(n*sigma)) * sum_i J~_i * eps(seed_i)
// and steps theta += eta * g.
#pragma once

#include <set>
#include <unordered_set>

#include "deskrl/trajectory.hpp"

namespace deskrl::algo {

struct EsConfig {
    std::string env_id = "pointmass2d";
    int actors = 4;
    int population = 64;       // n; even when mirrored
    double sigma = 0.02;       // perturbation scale
    double eta = 0.01;         // learning rate
    bool centered_returns = true;
    bool mirrored = false;
    int action_bins = 0;       // 0 = continuous; e.g. 10 to discretize
    double fixed_std = 0.01;   // policy action noise in ES mode
    int iters = 500;
    int checkpoint_every = 50;
    std::vector<int> hidden = {32, 32};
    uint64_t seed = 1;
    long collect_timeout_ms = 30000;
    double min_fill = 0.8;     // proceed with >= 80% of the population

    void check() const {
        if (sigma <= 0) throw ConfigError("sigma must be > 0");
        if (population < 2) throw ConfigError("population must be >= 2");
        if (mirrored && population % 2 != 0)
            throw ConfigError("mirrored needs an even population");
    }
};

// The deterministic perturbation generator: seed -> standard normal vector.
// Reproducible across processes by construction (seeded engine + fixed
// Box-Muller transform).
inline nnet::Vec perturbation_noise(uint64_t seed, size_t dim) {
    Rng rng(seed);
    nnet::Vec eps(dim);
    for (auto& e : eps) e = rng.normal();
    return eps;
}

inline nnet::Vec es_perturb(std::span<const double> theta, uint64_t seed, double sigma,
                            int sign = +1) {
    if (sigma <= 0) throw ConfigError("sigma must be > 0");
    nnet::Vec eps = perturbation_noise(seed, theta.size());
    nnet::Vec out(theta.begin(), theta.end());
    for (size_t i = 0; i < out.size(); ++i) out[i] += sign * sigma * eps[i];
    return out;
}

// (seed, episodic return) pair; the entire actor -> master payload.
struct PerturbationRecord {
    uint64_t seed = 0;
    int sign = +1;  // -1 for the mirrored partner
    double episodic_return = 0;
    std::string actor_id;
    int64_t version = 0;

    bool operator==(const PerturbationRecord&) const = default;
};

inline Value record_to_value(const PerturbationRecord& r) {
    return Value(Value::Map{
        {"seed", Value(static_cast<int64_t>(r.seed))},
        {"sign", Value(int64_t{r.sign})},
        {"return", Value(r.episodic_return)},
        {"actor", Value(r.actor_id)},
        {"version", Value(r.version)},
    });
}

inline PerturbationRecord record_from_value(const Value& v) {
    PerturbationRecord r;
    r.seed = static_cast<uint64_t>(v.at("seed").as_int());
    r.sign = static_cast<int>(v.at("sign").as_int());
    r.episodic_return = v.at("return").as_double();
    r.actor_id = v.at("actor").as_str();
    r.version = v.at("version").as_int();
    return r;
}

// g = (1/(n*sigma)) sum_i J~_i * sign_i * eps(seed_i), where J~ centers the
// returns when configured. Every seed must come from the iteration's table.
inline nnet::Vec es_gradient_estimate(const std::vector<PerturbationRecord>& records,
                                      size_t dim, double sigma, const EsConfig& cfg,
                                      const std::vector<uint64_t>& seed_table) {
    if (records.size() < 2) throw ContractError("need at least 2 records");
    std::unordered_set<uint64_t> known(seed_table.begin(), seed_table.end());
    for (const auto& r : records)
        if (!known.count(r.seed))
            throw IntegrityError("record seed " + std::to_string(r.seed) +
                                 " not in the iteration's seed table");

    double baseline = 0;
    if (cfg.centered_returns) {
        for (const auto& r : records) baseline += r.episodic_return;
        baseline /= static_cast<double>(records.size());
    }

    nnet::Vec grad(dim, 0.0);
    const double scale = 1.0 / (static_cast<double>(records.size()) * sigma);
    for (const auto& r : records) {
        nnet::Vec eps = perturbation_noise(r.seed, dim);
        double weight = (r.episodic_return - baseline) * r.sign * scale;
        for (size_t i = 0; i < dim; ++i) grad[i] += weight * eps[i];
    }
    return grad;
}

// ---- master state machine ------------------------------------------------------------

// Population members are enumerated as (seed, sign) pairs; member m of
// iteration v evaluates seeds[m] (or seeds[m/2] with sign (-1)^m when
// mirrored). Actor j owns members with m % actors == j.
struct EsAssignment {
    int64_t version = 0;
    std::vector<uint64_t> seeds;  // population seeds (n, or n/2 when mirrored)
    bool mirrored = false;

    int members() const { return static_cast<int>(seeds.size()) * (mirrored ? 2 : 1); }

    std::pair<uint64_t, int> member(int m) const {
        if (!mirrored) return {seeds.at(m), +1};
        return {seeds.at(m / 2), m % 2 == 0 ? +1 : -1};
    }
};

class EsMasterCore {
public:
    EsMasterCore(const nnet::GaussianPolicy& policy, const EsConfig& cfg)
        : policy_(policy), cfg_(cfg), seed_rng_(cfg.seed ^ 0xe5e5e5e5ull) {
        cfg_.check();
        Rng init_rng(cfg.seed);
        nnet::MlpParams init = nnet::init_params(policy_.mean_spec, init_rng);
        // Near-zero policy head: no systematic drift at iteration 0.
        for (auto& w : init.W[init.spec.layers() - 1].data) w *= 0.01;
        theta_ = nnet::flatten(init);
    }

    const nnet::Vec& theta() const { return theta_; }
    int64_t version() const { return version_; }
    const EsConfig& config() const { return cfg_; }
    const nnet::GaussianPolicy& policy() const { return policy_; }

    // Draws the iteration's unique seed table.
    EsAssignment next_assignment() {
        EsAssignment a;
        a.version = version_;
        a.mirrored = cfg_.mirrored;
        int unique = cfg_.mirrored ? cfg_.population / 2 : cfg_.population;
        std::set<uint64_t> drawn;
        while (static_cast<int>(drawn.size()) < unique) drawn.insert(seed_rng_.next_u64());
        a.seeds.assign(drawn.begin(), drawn.end());
        current_ = a;
        return a;
    }

    const EsAssignment& current_assignment() const { return current_; }

    // Enough records to step? (straggler policy: >= min_fill of population)
    bool quorum(size_t records) const {
        return records >= static_cast<size_t>(
                              std::ceil(cfg_.min_fill * static_cast<double>(cfg_.population)));
    }

    struct IterStats {
        int64_t iter = 0;
        double mean_return = 0;
        double grad_norm = 0;
        int64_t records = 0;
        int64_t version = 0;
    };

    // Applies one update from the collected records (deduplicated by
    // (seed, sign); stale versions are the caller's concern).
    IterStats step(const std::vector<PerturbationRecord>& records) {
        std::vector<PerturbationRecord> unique;
        std::set<std::pair<uint64_t, int>> seen;
        for (const auto& r : records)
            if (seen.emplace(r.seed, r.sign).second) unique.push_back(r);

        nnet::Vec grad = es_gradient_estimate(unique, theta_.size(), cfg_.sigma, cfg_, current_.seeds);
        for (size_t i = 0; i < theta_.size(); ++i) theta_[i] += cfg_.eta * grad[i];
        version_++;

        IterStats stats;
        stats.iter = version_;
        stats.version = version_;
        stats.records = static_cast<int64_t>(unique.size());
        double sum = 0, norm2 = 0;
        for (const auto& r : unique) sum += r.episodic_return;
        for (double g : grad) norm2 += g * g;
        stats.mean_return = sum / static_cast<double>(unique.size());
        stats.grad_norm = std::sqrt(norm2);
        return stats;
    }

private:
    nnet::GaussianPolicy policy_;
    EsConfig cfg_;
    nnet::Vec theta_;
    Rng seed_rng_;
    int64_t version_ = 0;
    EsAssignment current_;
};

// Deterministic per-member evaluation seeds, shared by master and actors.
inline uint64_t es_episode_seed(int64_t version, uint64_t seed, int sign) {
    uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](uint64_t x) {
        for (int i = 0; i < 8; ++i) {
            h ^= (x >> (8 * i)) & 0xff;
            h *= 0x100000001b3ull;
        }
    };
    mix(static_cast<uint64_t>(version));
    mix(seed);
    mix(static_cast<uint64_t>(sign + 7));
    return h;
}

// Builds the evaluation env, honoring the optional action discretization.
inline std::unique_ptr<envs::Env> make_es_env(const EsConfig& cfg) {
    auto env = envs::make_env(cfg.env_id);
    if (cfg.action_bins > 0)
        return std::make_unique<DiscretizedActionEnv>(std::move(env), cfg.action_bins);
    return env;
}

}  // namespace deskrl::algo
