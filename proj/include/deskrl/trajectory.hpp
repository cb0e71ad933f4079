// Rollout segments shared by the trainers: fixed-length slices of
// experience with everything the learner needs to recompute densities
// (old means, log-stds, log-probs) and bootstrap returns.
#pragma once

#include <functional>

#include "deskrl/envs.hpp"
#include "deskrl/nnet.hpp"
#include "deskrl/value.hpp"

namespace deskrl::algo {

struct TrajectorySegment {
    int64_t policy_version = 0;
    int length = 0;
    int obs_dim = 0;
    int act_dim = 0;
    std::vector<double> observations;  // length x obs_dim, row-major
    std::vector<double> actions;       // length x act_dim
    std::vector<double> rewards;       // length
    std::vector<double> old_logprobs;  // length, recorded at sampling time
    std::vector<double> values;        // length, V(s_t) at sampling time
    Bytes dones;                       // length, 0/1
    std::vector<double> old_means;     // length x act_dim, for exact KL
    std::vector<double> old_log_std;   // act_dim
    std::vector<double> final_obs;     // observation after the last step
    bool final_done = false;
    std::vector<double> completed_returns;  // episodic returns finished in this slice
    std::string producer_id;

    bool operator==(const TrajectorySegment&) const = default;

    std::span<const double> obs_at(int t) const {
        return {observations.data() + static_cast<size_t>(t) * obs_dim, static_cast<size_t>(obs_dim)};
    }
    std::span<const double> act_at(int t) const {
        return {actions.data() + static_cast<size_t>(t) * act_dim, static_cast<size_t>(act_dim)};
    }
    std::span<const double> mean_at(int t) const {
        return {old_means.data() + static_cast<size_t>(t) * act_dim, static_cast<size_t>(act_dim)};
    }
};

inline Value segment_to_value(const TrajectorySegment& s) {
    return Value(Value::Map{
        {"version", Value(s.policy_version)},
        {"length", Value(int64_t{s.length})},
        {"obs_dim", Value(int64_t{s.obs_dim})},
        {"act_dim", Value(int64_t{s.act_dim})},
        {"obs", Value(s.observations)},
        {"act", Value(s.actions)},
        {"rew", Value(s.rewards)},
        {"logp", Value(s.old_logprobs)},
        {"val", Value(s.values)},
        {"done", Value::bytes(s.dones)},
        {"mean", Value(s.old_means)},
        {"log_std", Value(s.old_log_std)},
        {"final_obs", Value(s.final_obs)},
        {"final_done", Value(s.final_done)},
        {"episode_returns", Value(s.completed_returns)},
        {"producer", Value(s.producer_id)},
    });
}

inline TrajectorySegment segment_from_value(const Value& v) {
    TrajectorySegment s;
    s.policy_version = v.at("version").as_int();
    s.length = static_cast<int>(v.at("length").as_int());
    s.obs_dim = static_cast<int>(v.at("obs_dim").as_int());
    s.act_dim = static_cast<int>(v.at("act_dim").as_int());
    s.observations = v.at("obs").as_f64array();
    s.actions = v.at("act").as_f64array();
    s.rewards = v.at("rew").as_f64array();
    s.old_logprobs = v.at("logp").as_f64array();
    s.values = v.at("val").as_f64array();
    s.dones = v.at("done").as_bytes();
    s.old_means = v.at("mean").as_f64array();
    s.old_log_std = v.at("log_std").as_f64array();
    s.final_obs = v.at("final_obs").as_f64array();
    s.final_done = v.at("final_done").as_bool();
    s.completed_returns = v.at("episode_returns").as_f64array();
    s.producer_id = v.at("producer").as_str();
    if (static_cast<int>(s.rewards.size()) != s.length ||
        static_cast<int>(s.observations.size()) != s.length * s.obs_dim ||
        static_cast<int>(s.actions.size()) != s.length * s.act_dim ||
        static_cast<int>(s.dones.size()) != s.length)
        throw CodecError("segment arrays inconsistent with declared length");
    return s;
}

// ---- returns and advantages ---------------------------------------------------

struct AdvantageRecord {
    std::vector<double> returns;     // discounted reward-to-go R_t
    std::vector<double> advantages;  // R_t - V(s_t)
};

// R_t = sum_{k>=t} gamma^{k-t} r_k within the segment, resetting at episode
// boundaries and bootstrapping V(s_T) when the slice ends mid-episode.
inline AdvantageRecord compute_returns_and_advantages(
    const TrajectorySegment& seg, double gamma,
    const std::function<double(std::span<const double>)>& value_fn) {
    if (gamma < 0 || gamma > 1) throw ConfigError("gamma must be in [0, 1]");
    AdvantageRecord out;
    out.returns.resize(seg.length);
    out.advantages.resize(seg.length);
    double running = seg.final_done ? 0.0 : value_fn(seg.final_obs);
    for (int t = seg.length - 1; t >= 0; --t) {
        if (seg.dones[t]) running = 0.0;
        running = seg.rewards[t] + gamma * running;
        out.returns[t] = running;
    }
    for (int t = 0; t < seg.length; ++t)
        out.advantages[t] = out.returns[t] - value_fn(seg.obs_at(t));
    return out;
}

// ---- action discretization wrapper -----------------------------------------------

// Snaps each incoming action dimension to the nearest of `bins` centers
// placed uniformly across the action bounds.
class DiscretizedActionEnv final : public envs::Env {
public:
    DiscretizedActionEnv(std::unique_ptr<envs::Env> inner, int bins)
        : inner_(std::move(inner)), bins_(bins) {
        if (bins < 2) throw ConfigError("need at least 2 bins");
        spec_ = inner_->spec();
        spec_.id += "+bins" + std::to_string(bins);
    }

    const envs::EnvSpec& spec() const override { return spec_; }
    std::vector<double> reset(uint64_t seed) override { return inner_->reset(seed); }
    int step_index() const override { return inner_->step_index(); }
    bool done() const override { return inner_->done(); }

    envs::StepResult step(std::span<const double> action) override {
        std::vector<double> snapped(action.begin(), action.end());
        for (size_t i = 0; i < snapped.size(); ++i)
            snapped[i] = nearest_center(snapped[i], spec_.action_low[i], spec_.action_high[i]);
        return inner_->step(snapped);
    }

    double nearest_center(double a, double lo, double hi) const {
        double width = (hi - lo) / bins_;
        double k = std::floor((a - lo) / width);
        k = std::min(std::max(k, 0.0), static_cast<double>(bins_ - 1));
        double center = lo + (k + 0.5) * width;
        // The floor bucket is the nearest center except at bucket edges.
        if (a > center + width / 2 && k < bins_ - 1) center += width;
        return center;
    }

private:
    std::unique_ptr<envs::Env> inner_;
    int bins_;
    envs::EnvSpec spec_;
};

// ---- rollout worker ---------------------------------------------------------------

// The actor's view of current policy parameters. `value` may be null (ES).
struct ActorPolicyView {
    const nnet::GaussianPolicy* policy = nullptr;
    const nnet::MlpParams* mean = nullptr;
    const nnet::Vec* log_std = nullptr;  // per-dimension
    const nnet::MlpParams* value = nullptr;
};

// Steps a persistent environment in fixed-length slices. Deterministic
// given (params, env seed base, action-noise seed).
class RolloutWorker {
public:
    RolloutWorker(std::unique_ptr<envs::Env> env, uint64_t env_seed_base, uint64_t noise_seed,
                  std::string producer_id = "")
        : env_(std::move(env)),
          env_seed_base_(env_seed_base),
          noise_(noise_seed),
          producer_id_(std::move(producer_id)) {
        obs_ = env_->reset(episode_seed(0));
    }

    envs::Env& env() { return *env_; }
    uint64_t episodes_started() const { return episode_; }

    TrajectorySegment rollout(const ActorPolicyView& view, int T, int64_t version) {
        const auto& spec = env_->spec();
        TrajectorySegment seg;
        seg.policy_version = version;
        seg.length = T;
        seg.obs_dim = spec.obs_dim;
        seg.act_dim = spec.act_dim;
        seg.old_log_std = *view.log_std;
        seg.producer_id = producer_id_;
        seg.observations.reserve(static_cast<size_t>(T) * spec.obs_dim);
        seg.actions.reserve(static_cast<size_t>(T) * spec.act_dim);

        for (int t = 0; t < T; ++t) {
            seg.observations.insert(seg.observations.end(), obs_.begin(), obs_.end());
            nnet::Vec mean = view.policy->mean_action(*view.mean, obs_);
            nnet::Vec action(mean.size());
            for (size_t i = 0; i < mean.size(); ++i)
                action[i] = mean[i] + std::exp((*view.log_std)[i]) * noise_.normal();
            double logp = nnet::gaussian_logprob(mean, *view.log_std, action);
            double value = view.value ? nnet::forward(*view.value, obs_)[0] : 0.0;

            auto result = env_->step(action);
            episode_return_ += result.reward;

            seg.actions.insert(seg.actions.end(), action.begin(), action.end());
            seg.old_means.insert(seg.old_means.end(), mean.begin(), mean.end());
            seg.rewards.push_back(result.reward);
            seg.old_logprobs.push_back(logp);
            seg.values.push_back(value);
            seg.dones.push_back(result.done ? 1 : 0);
            steps_total_++;

            if (result.done) {
                seg.completed_returns.push_back(episode_return_);
                episode_return_ = 0;
                episode_++;
                obs_ = env_->reset(episode_seed(episode_));
            } else {
                obs_ = std::move(result.obs);
            }
        }
        seg.final_obs = obs_;
        seg.final_done = seg.dones.back() == 1;
        return seg;
    }

    // One full episode from a fresh seed; used by the ES path.
    double run_episode(const ActorPolicyView& view, uint64_t env_seed, uint64_t action_seed) {
        std::vector<double> obs = env_->reset(env_seed);
        Rng noise(action_seed);
        double total = 0;
        while (!env_->done()) {
            nnet::Vec mean = view.policy->mean_action(*view.mean, obs);
            nnet::Vec action(mean.size());
            for (size_t i = 0; i < mean.size(); ++i)
                action[i] = mean[i] + std::exp((*view.log_std)[i]) * noise.normal();
            auto result = env_->step(action);
            total += result.reward;
            obs = std::move(result.obs);
            steps_total_++;
        }
        // Leave the env freshly reset for segment-style use.
        episode_++;
        obs_ = env_->reset(episode_seed(episode_));
        episode_return_ = 0;
        return total;
    }

    uint64_t steps_total() const { return steps_total_; }

private:
    uint64_t episode_seed(uint64_t index) const {
        return env_seed_base_ + index * 0x9E3779B97F4A7C15ull;
    }

    std::unique_ptr<envs::Env> env_;
    uint64_t env_seed_base_;
    Rng noise_;
    std::string producer_id_;
    std::vector<double> obs_;
    double episode_return_ = 0;
    uint64_t episode_ = 0;
    uint64_t steps_total_ = 0;
};

}  // namespace deskrl::algo
