// Distributed PPO with the adaptive KL penalty. The learner consumes
// fixed-length on-policy segments, maximizes
//   mean(ratio_t * A_t) - lambda * mean KL[pi_old || pi_theta]
// minus a value-fit term, and adapts lambda whenever the realized KL
// leaves the target band.
#pragma once

#include <algorithm>

#include "deskrl/trajectory.hpp"

namespace deskrl::algo {

// ---- policy bundle: mean net + trainable log_std + value net -------------------

// FlatParams layout (canonical, stable): [mean net | log_std | value net],
// each network in layer-major W1,b1,W2,b2,... order.
struct PolicyBundle {
    nnet::GaussianPolicy policy;
    nnet::MlpSpec value_spec;

    PolicyBundle() = default;
    PolicyBundle(const envs::EnvSpec& env, std::vector<int> hidden = {32, 32}) {
        std::vector<int> mean_sizes{env.obs_dim};
        mean_sizes.insert(mean_sizes.end(), hidden.begin(), hidden.end());
        mean_sizes.push_back(env.act_dim);
        policy = nnet::GaussianPolicy(mean_sizes, env.action_low, env.action_high);

        value_spec.sizes = {env.obs_dim};
        value_spec.sizes.insert(value_spec.sizes.end(), hidden.begin(), hidden.end());
        value_spec.sizes.push_back(1);
        value_spec.output = nnet::MlpSpec::Output::Linear;
    }

    int act_dim() const { return policy.act_dim(); }
    int flat_size() const {
        return policy.mean_spec.param_count() + act_dim() + value_spec.param_count();
    }
};

struct BundleParams {
    nnet::MlpParams mean;
    nnet::Vec log_std;
    nnet::MlpParams value;
};

inline nnet::Vec flatten_bundle(const BundleParams& p) {
    nnet::Vec flat = nnet::flatten(p.mean);
    flat.insert(flat.end(), p.log_std.begin(), p.log_std.end());
    nnet::Vec vf = nnet::flatten(p.value);
    flat.insert(flat.end(), vf.begin(), vf.end());
    return flat;
}

inline BundleParams unflatten_bundle(const PolicyBundle& bundle, std::span<const double> flat) {
    if (static_cast<int>(flat.size()) != bundle.flat_size())
        throw ShapeError("bundle flat vector has " + std::to_string(flat.size()) +
                         " entries, bundle wants " + std::to_string(bundle.flat_size()));
    BundleParams p;
    size_t at = 0;
    size_t n_mean = bundle.policy.mean_spec.param_count();
    p.mean = nnet::unflatten(bundle.policy.mean_spec, flat.subspan(at, n_mean));
    at += n_mean;
    p.log_std.assign(flat.begin() + at, flat.begin() + at + bundle.act_dim());
    at += bundle.act_dim();
    p.value = nnet::unflatten(bundle.value_spec, flat.subspan(at));
    return p;
}

inline BundleParams init_bundle(const PolicyBundle& bundle, Rng& rng,
                                double init_log_std = std::log(0.3)) {
    BundleParams p;
    p.mean = nnet::init_params(bundle.policy.mean_spec, rng);
    // Near-zero policy head: the initial mean action is ~0 everywhere, so
    // early exploration comes from the noise term instead of an arbitrary
    // systematic drift.
    int head = p.mean.spec.layers() - 1;
    for (auto& w : p.mean.W[head].data) w *= 0.01;
    p.log_std.assign(bundle.act_dim(), init_log_std);
    p.value = nnet::init_params(bundle.value_spec, rng);
    return p;
}

// ---- adaptive KL penalty ---------------------------------------------------------

struct AdaptiveKLState {
    double lambda = 1.0;
    double kl_target = 0.01;
    double alpha = 1.5;      // adaptation factor
    double band_low = 0.5;   // no-op band [band_low, band_high] * kl_target
    double band_high = 2.0;
    double clamp_lo = 1e-4;
    double clamp_hi = 1e4;
};

// lambda grows when the realized KL overshoots the band, shrinks when it
// undershoots, and never leaves the clamp.
inline AdaptiveKLState adapt_kl(AdaptiveKLState s, double realized_kl) {
    if (realized_kl < 0) throw NumericError("realized KL must be >= 0");
    if (realized_kl > s.band_high * s.kl_target)
        s.lambda = std::min(s.lambda * s.alpha, s.clamp_hi);
    else if (realized_kl < s.band_low * s.kl_target)
        s.lambda = std::max(s.lambda / s.alpha, s.clamp_lo);
    return s;
}

// ---- loss and gradient --------------------------------------------------------------

// One transition row. Advantages are expected batch-normalized.
struct PpoBatch {
    int obs_dim = 0, act_dim = 0;
    std::vector<double> obs;           // N x obs_dim
    std::vector<double> act;           // N x act_dim
    std::vector<double> old_logp;      // N
    std::vector<double> old_mean;      // N x act_dim
    std::vector<double> old_log_std;   // N x act_dim
    std::vector<double> advantages;    // N, normalized
    std::vector<double> returns;       // N

    size_t size() const { return old_logp.size(); }

    std::span<const double> obs_at(size_t i) const {
        return {obs.data() + i * obs_dim, static_cast<size_t>(obs_dim)};
    }
    std::span<const double> act_at(size_t i) const {
        return {act.data() + i * act_dim, static_cast<size_t>(act_dim)};
    }
    std::span<const double> old_mean_at(size_t i) const {
        return {old_mean.data() + i * act_dim, static_cast<size_t>(act_dim)};
    }
    std::span<const double> old_log_std_at(size_t i) const {
        return {old_log_std.data() + i * act_dim, static_cast<size_t>(act_dim)};
    }
};

struct PpoLossResult {
    double loss = 0;          // minimized: -surrogate + lambda*KL + value term
    double surrogate = 0;     // mean(ratio * A)
    double kl = 0;            // mean KL[pi_old || pi_theta] (realized KL)
    double value_loss = 0;    // mean (V - R)^2
    nnet::Vec grad;           // d loss / d flat params, bundle layout
};

constexpr double kValueLossCoef = 0.5;

inline PpoLossResult ppo_loss_and_grad(const PolicyBundle& bundle, const BundleParams& params,
                                       const PpoBatch& batch, double lambda) {
    const size_t N = batch.size();
    if (N == 0) throw ContractError("empty batch");
    const int ad = bundle.act_dim();

    BundleParams grad;
    grad.mean = nnet::zero_params(bundle.policy.mean_spec);
    grad.log_std.assign(ad, 0.0);
    grad.value = nnet::zero_params(bundle.value_spec);

    double surrogate = 0, kl_total = 0, value_loss = 0;
    const double inv_n = 1.0 / static_cast<double>(N);

    for (size_t i = 0; i < N; ++i) {
        auto obs = batch.obs_at(i);
        auto act = batch.act_at(i);
        auto mu_old = batch.old_mean_at(i);
        auto ls_old = batch.old_log_std_at(i);
        const double adv = batch.advantages[i];

        nnet::Vec mu = bundle.policy.mean_action(params.mean, obs);
        double logp = nnet::gaussian_logprob(mu, params.log_std, act);
        double ratio = std::exp(logp - batch.old_logp[i]);
        double kl = nnet::gaussian_kl(mu_old, ls_old, mu, params.log_std);
        surrogate += ratio * adv;
        kl_total += kl;

        // d loss / d mu and d loss / d log_std for this sample
        nnet::Vec up_mu(ad, 0.0);
        for (int j = 0; j < ad; ++j) {
            double sigma2 = std::exp(2.0 * params.log_std[j]);
            double diff = act[j] - mu[j];
            double dlogp_dmu = diff / sigma2;
            double dlogp_dls = diff * diff / sigma2 - 1.0;
            double dkl_dmu = (mu[j] - mu_old[j]) / sigma2;
            double var_old = std::exp(2.0 * ls_old[j]);
            double dkl_dls =
                1.0 - (var_old + (mu_old[j] - mu[j]) * (mu_old[j] - mu[j])) / sigma2;
            up_mu[j] = inv_n * (-adv * ratio * dlogp_dmu + lambda * dkl_dmu);
            grad.log_std[j] += inv_n * (-adv * ratio * dlogp_dls + lambda * dkl_dls);
        }
        auto mean_back = bundle.policy.mean_backward(params.mean, obs, up_mu);
        for (int l = 0; l < params.mean.spec.layers(); ++l) {
            for (size_t k = 0; k < grad.mean.W[l].data.size(); ++k)
                grad.mean.W[l].data[k] += mean_back.param_grad.W[l].data[k];
            for (size_t k = 0; k < grad.mean.b[l].size(); ++k)
                grad.mean.b[l][k] += mean_back.param_grad.b[l][k];
        }

        double v = nnet::forward(params.value, obs)[0];
        double verr = v - batch.returns[i];
        value_loss += verr * verr;
        auto value_back = nnet::backward(params.value, obs,
                                         nnet::Vec{inv_n * 2.0 * kValueLossCoef * verr});
        for (int l = 0; l < params.value.spec.layers(); ++l) {
            for (size_t k = 0; k < grad.value.W[l].data.size(); ++k)
                grad.value.W[l].data[k] += value_back.param_grad.W[l].data[k];
            for (size_t k = 0; k < grad.value.b[l].size(); ++k)
                grad.value.b[l][k] += value_back.param_grad.b[l][k];
        }
    }

    PpoLossResult out;
    out.surrogate = surrogate * inv_n;
    out.kl = kl_total * inv_n;
    out.value_loss = value_loss * inv_n;
    out.loss = -out.surrogate + lambda * out.kl + kValueLossCoef * out.value_loss;
    if (!std::isfinite(out.loss)) throw NumericError("non-finite loss; batch rejected");
    out.grad = flatten_bundle(grad);
    for (double g : out.grad)
        if (!std::isfinite(g)) throw NumericError("non-finite gradient; batch rejected");
    return out;
}

// ---- learner core ---------------------------------------------------------------------

struct PpoConfig {
    std::string env_id = "pointmass2d";
    int actors = 4;
    int shards = 1;
    int iters = 300;
    int segment_len = 32;       // T
    int segments_per_iter = 8;  // K
    double gamma = 0.99;
    double kl_target = 0.01;
    double lambda_init = 1.0;
    int epochs = 3;             // E
    int minibatch = 64;
    double lr = 3e-4;
    double grad_clip = 5.0;
    int staleness_window = 2;
    int checkpoint_every = 50;
    // Small shard buffers let push-pull backpressure pace the actors, which
    // keeps queued segments within the staleness window.
    int replay_capacity = 32;
    std::vector<int> hidden = {32, 32};
    double init_log_std = std::log(0.3);
    // Guard rails on the trained log_std: sigma below ~0.007 explodes
    // ratios, sigma above ~0.6 just saturates the action box.
    double log_std_min = -5.0, log_std_max = -0.5;
    uint64_t seed = 1;
};

struct PpoIterStats {
    int64_t iter = 0;
    double mean_return = std::nan("");
    double realized_kl = 0;
    double lambda = 0;
    double surrogate = 0;
    double value_loss = 0;
    int64_t version = 0;
    int64_t transitions = 0;
    int64_t stale_dropped = 0;
};

// Single-logic-thread PPO update engine, shared by the in-process driver
// and the distributed learner worker. Segments in, new parameters out.
class PpoLearnerCore {
public:
    PpoLearnerCore(const PolicyBundle& bundle, const PpoConfig& cfg)
        : bundle_(bundle), cfg_(cfg), rng_(cfg.seed ^ 0x5ca1ab1e) {
        Rng init_rng(cfg.seed);
        params_ = init_bundle(bundle_, init_rng, cfg.init_log_std);
        kl_state_.kl_target = cfg.kl_target;
        kl_state_.lambda = cfg.lambda_init;
    }

    const PolicyBundle& bundle() const { return bundle_; }
    const BundleParams& params() const { return params_; }
    const AdaptiveKLState& kl_state() const { return kl_state_; }

    // Version of the current parameters as published to actors; the initial
    // snapshot is version 1 and every update increments it.
    int64_t version() const { return version_; }

    // Version-lag guard: stale segments never reach the gradient step.
    bool accept_segment(const TrajectorySegment& seg) const {
        return seg.policy_version >= version_ - cfg_.staleness_window;
    }

    PpoIterStats update(const std::vector<TrajectorySegment>& segments) {
        for (const auto& seg : segments)
            if (!accept_segment(seg))
                throw ContractError("stale segment reached the update");

        PpoBatch batch = build_batch(segments);
        normalize_advantages(batch);

        nnet::Vec flat = flatten_bundle(params_);
        const size_t n = batch.size();
        std::vector<size_t> order(n);
        for (size_t i = 0; i < n; ++i) order[i] = i;

        for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
            shuffle(order);
            for (size_t start = 0; start < n; start += cfg_.minibatch) {
                size_t stop = std::min(n, start + cfg_.minibatch);
                PpoBatch mb = subset(batch, order, start, stop);
                try {
                    auto result = ppo_loss_and_grad(bundle_, params_, mb, kl_state_.lambda);
                    apply_step(flat, result.grad);
                    params_ = unflatten_bundle(bundle_, flat);
                    clamp_log_std();
                    flat = flatten_bundle(params_);
                } catch (const NumericError&) {
                    rejected_batches_++;  // skip the batch, keep training
                }
            }
        }

        // Realized KL of the updated policy over the whole iteration batch.
        auto final_eval = ppo_loss_and_grad(bundle_, params_, batch, kl_state_.lambda);
        kl_state_ = adapt_kl(kl_state_, final_eval.kl);
        version_++;

        PpoIterStats stats;
        stats.iter = version_;
        stats.realized_kl = final_eval.kl;
        stats.lambda = kl_state_.lambda;
        stats.surrogate = final_eval.surrogate;
        stats.value_loss = final_eval.value_loss;
        stats.version = version_;
        stats.transitions = static_cast<int64_t>(n);
        std::vector<double> episode_returns;
        for (const auto& seg : segments)
            episode_returns.insert(episode_returns.end(), seg.completed_returns.begin(),
                                   seg.completed_returns.end());
        if (!episode_returns.empty()) {
            double sum = 0;
            for (double r : episode_returns) sum += r;
            recent_return_ = sum / static_cast<double>(episode_returns.size());
        }
        stats.mean_return = recent_return_;
        return stats;
    }

    uint64_t rejected_batches() const { return rejected_batches_; }

    double value_of(std::span<const double> obs) const {
        return nnet::forward(params_.value, obs)[0];
    }

private:
    PpoBatch build_batch(const std::vector<TrajectorySegment>& segments) {
        PpoBatch batch;
        const auto& env_spec_dims = segments.at(0);
        batch.obs_dim = env_spec_dims.obs_dim;
        batch.act_dim = env_spec_dims.act_dim;
        auto value_fn = [this](std::span<const double> o) { return value_of(o); };
        for (const auto& seg : segments) {
            AdvantageRecord rec = compute_returns_and_advantages(seg, cfg_.gamma, value_fn);
            for (int t = 0; t < seg.length; ++t) {
                auto o = seg.obs_at(t);
                auto a = seg.act_at(t);
                auto m = seg.mean_at(t);
                batch.obs.insert(batch.obs.end(), o.begin(), o.end());
                batch.act.insert(batch.act.end(), a.begin(), a.end());
                batch.old_mean.insert(batch.old_mean.end(), m.begin(), m.end());
                batch.old_log_std.insert(batch.old_log_std.end(), seg.old_log_std.begin(),
                                         seg.old_log_std.end());
                batch.old_logp.push_back(seg.old_logprobs[t]);
                batch.advantages.push_back(rec.advantages[t]);
                batch.returns.push_back(rec.returns[t]);
            }
        }
        return batch;
    }

    static void normalize_advantages(PpoBatch& batch) {
        double mean = 0;
        for (double a : batch.advantages) mean += a;
        mean /= static_cast<double>(batch.advantages.size());
        double var = 0;
        for (double a : batch.advantages) var += (a - mean) * (a - mean);
        double std = std::sqrt(var / static_cast<double>(batch.advantages.size()));
        for (double& a : batch.advantages) a = (a - mean) / (std + 1e-8);
    }

    void shuffle(std::vector<size_t>& order) {
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng_.below(i)]);
    }

    static PpoBatch subset(const PpoBatch& batch, const std::vector<size_t>& order, size_t start,
                           size_t stop) {
        PpoBatch mb;
        mb.obs_dim = batch.obs_dim;
        mb.act_dim = batch.act_dim;
        for (size_t k = start; k < stop; ++k) {
            size_t i = order[k];
            auto o = batch.obs_at(i);
            auto a = batch.act_at(i);
            auto m = batch.old_mean_at(i);
            auto ls = batch.old_log_std_at(i);
            mb.obs.insert(mb.obs.end(), o.begin(), o.end());
            mb.act.insert(mb.act.end(), a.begin(), a.end());
            mb.old_mean.insert(mb.old_mean.end(), m.begin(), m.end());
            mb.old_log_std.insert(mb.old_log_std.end(), ls.begin(), ls.end());
            mb.old_logp.push_back(batch.old_logp[i]);
            mb.advantages.push_back(batch.advantages[i]);
            mb.returns.push_back(batch.returns[i]);
        }
        return mb;
    }

    void apply_step(nnet::Vec& flat, const nnet::Vec& grad) {
        double norm2 = 0;
        for (double g : grad) norm2 += g * g;
        double norm = std::sqrt(norm2);
        double scale = cfg_.lr;
        if (norm > cfg_.grad_clip) scale *= cfg_.grad_clip / norm;
        for (size_t i = 0; i < flat.size(); ++i) flat[i] -= scale * grad[i];
    }

    void clamp_log_std() {
        for (double& ls : params_.log_std)
            ls = std::min(std::max(ls, cfg_.log_std_min), cfg_.log_std_max);
    }

    PolicyBundle bundle_;
    PpoConfig cfg_;
    BundleParams params_;
    AdaptiveKLState kl_state_;
    int64_t version_ = 1;
    Rng rng_;
    double recent_return_ = std::nan("");
    uint64_t rejected_batches_ = 0;
};

}  // namespace deskrl::algo
