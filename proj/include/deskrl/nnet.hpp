// Small feed-forward networks with exact manual gradients, diagonal-Gaussian
// policy densities, and flat parameter views for perturbation and broadcast.
// Float64 throughout. All functions are pure over immutable parameter values.
#pragma once

#include <cmath>
#include <numeric>
#include <vector>

#include "deskrl/common.hpp"

namespace deskrl::nnet {

using Vec = std::vector<double>;

struct Matrix {
    int rows = 0, cols = 0;
    Vec data;  // row-major

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    bool operator==(const Matrix&) const = default;
};

struct MlpSpec {
    std::vector<int> sizes;  // [in, h1, ..., out]; at least one hidden layer
    enum class Output { Linear, Tanh };
    Output output = Output::Linear;

    int layers() const { return static_cast<int>(sizes.size()) - 1; }
    int in_dim() const { return sizes.front(); }
    int out_dim() const { return sizes.back(); }

    // sum over layers of n_i * n_{i+1} + n_{i+1}
    int param_count() const {
        int n = 0;
        for (size_t i = 0; i + 1 < sizes.size(); ++i) n += sizes[i] * sizes[i + 1] + sizes[i + 1];
        return n;
    }

    void check() const {
        if (sizes.size() < 3) throw ShapeError("mlp needs at least one hidden layer");
        for (int s : sizes)
            if (s < 1) throw ShapeError("mlp layer sizes must be >= 1");
    }

    bool operator==(const MlpSpec&) const = default;
};

struct MlpParams {
    MlpSpec spec;
    std::vector<Matrix> W;  // W[l]: sizes[l+1] x sizes[l]
    std::vector<Vec> b;

    bool operator==(const MlpParams&) const = default;
};

inline MlpParams zero_params(const MlpSpec& spec) {
    spec.check();
    MlpParams p;
    p.spec = spec;
    for (int l = 0; l < spec.layers(); ++l) {
        p.W.emplace_back(spec.sizes[l + 1], spec.sizes[l]);
        p.b.emplace_back(spec.sizes[l + 1], 0.0);
    }
    return p;
}

// Xavier-uniform weights, zero biases; deterministic given the rng state.
inline MlpParams init_params(const MlpSpec& spec, Rng& rng) {
    MlpParams p = zero_params(spec);
    for (int l = 0; l < spec.layers(); ++l) {
        double s = std::sqrt(6.0 / (spec.sizes[l] + spec.sizes[l + 1]));
        for (auto& w : p.W[l].data) w = rng.uniform(-s, s);
    }
    return p;
}

// ---- flat parameter view -------------------------------------------------------
// Canonical layer-major order: W1 row-major, b1, W2, b2, ...

inline Vec flatten(const MlpParams& p) {
    Vec flat;
    flat.reserve(p.spec.param_count());
    for (int l = 0; l < p.spec.layers(); ++l) {
        flat.insert(flat.end(), p.W[l].data.begin(), p.W[l].data.end());
        flat.insert(flat.end(), p.b[l].begin(), p.b[l].end());
    }
    return flat;
}

inline MlpParams unflatten(const MlpSpec& spec, std::span<const double> flat) {
    spec.check();
    if (static_cast<int>(flat.size()) != spec.param_count())
        throw ShapeError("flat vector has " + std::to_string(flat.size()) + " entries, spec wants " +
                         std::to_string(spec.param_count()));
    MlpParams p = zero_params(spec);
    size_t at = 0;
    for (int l = 0; l < spec.layers(); ++l) {
        std::copy_n(flat.begin() + at, p.W[l].data.size(), p.W[l].data.begin());
        at += p.W[l].data.size();
        std::copy_n(flat.begin() + at, p.b[l].size(), p.b[l].begin());
        at += p.b[l].size();
    }
    return p;
}

// ---- forward / backward ------------------------------------------------------------

struct ForwardCache {
    std::vector<Vec> activations;      // activations[0] = x, last = output
    std::vector<Vec> preactivations;   // z per layer
};

inline Vec forward_cached(const MlpParams& p, std::span<const double> x, ForwardCache* cache) {
    if (static_cast<int>(x.size()) != p.spec.in_dim())
        throw ShapeError("input dim " + std::to_string(x.size()) + ", spec wants " +
                         std::to_string(p.spec.in_dim()));
    Vec a(x.begin(), x.end());
    if (cache) cache->activations.push_back(a);
    for (int l = 0; l < p.spec.layers(); ++l) {
        const Matrix& W = p.W[l];
        Vec z(W.rows);
        for (int r = 0; r < W.rows; ++r) {
            double s = p.b[l][r];
            const double* wrow = W.data.data() + static_cast<size_t>(r) * W.cols;
            for (int c = 0; c < W.cols; ++c) s += wrow[c] * a[c];
            z[r] = s;
        }
        if (cache) cache->preactivations.push_back(z);
        bool last = l == p.spec.layers() - 1;
        bool apply_tanh = !last || p.spec.output == MlpSpec::Output::Tanh;
        if (apply_tanh)
            for (auto& v : z) v = std::tanh(v);
        a = std::move(z);
        if (cache) cache->activations.push_back(a);
    }
    return a;
}

inline Vec forward(const MlpParams& p, std::span<const double> x) {
    return forward_cached(p, x, nullptr);
}

struct BackwardResult {
    MlpParams param_grad;
    Vec input_grad;
};

// Exact gradient of <upstream, forward(x)> w.r.t. parameters and input.
inline BackwardResult backward(const MlpParams& p, std::span<const double> x,
                               std::span<const double> upstream) {
    if (static_cast<int>(upstream.size()) != p.spec.out_dim())
        throw ShapeError("upstream dim " + std::to_string(upstream.size()) + ", spec wants " +
                         std::to_string(p.spec.out_dim()));
    ForwardCache cache;
    forward_cached(p, x, &cache);

    BackwardResult out;
    out.param_grad = zero_params(p.spec);

    Vec delta(upstream.begin(), upstream.end());
    for (int l = p.spec.layers() - 1; l >= 0; --l) {
        bool last = l == p.spec.layers() - 1;
        bool applied_tanh = !last || p.spec.output == MlpSpec::Output::Tanh;
        if (applied_tanh) {
            const Vec& act = cache.activations[l + 1];  // tanh(z)
            for (size_t i = 0; i < delta.size(); ++i) delta[i] *= 1.0 - act[i] * act[i];
        }
        const Vec& a_prev = cache.activations[l];
        Matrix& gW = out.param_grad.W[l];
        Vec& gb = out.param_grad.b[l];
        for (int r = 0; r < gW.rows; ++r) {
            gb[r] += delta[r];
            double* grow = gW.data.data() + static_cast<size_t>(r) * gW.cols;
            for (int c = 0; c < gW.cols; ++c) grow[c] += delta[r] * a_prev[c];
        }
        Vec next(p.W[l].cols, 0.0);
        for (int r = 0; r < p.W[l].rows; ++r) {
            const double* wrow = p.W[l].data.data() + static_cast<size_t>(r) * p.W[l].cols;
            for (int c = 0; c < p.W[l].cols; ++c) next[c] += wrow[c] * delta[r];
        }
        delta = std::move(next);
    }
    out.input_grad = std::move(delta);
    return out;
}

// ---- diagonal Gaussian densities ------------------------------------------------------

inline void check_same_dim(size_t a, size_t b, const char* what) {
    if (a != b) throw ShapeError(std::string(what) + ": dimension mismatch");
}

inline void check_finite(std::span<const double> v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x)) throw NumericError(std::string(what) + " has non-finite entries");
}

inline double gaussian_logprob(std::span<const double> mean, std::span<const double> log_std,
                               std::span<const double> action) {
    check_same_dim(mean.size(), log_std.size(), "gaussian_logprob");
    check_same_dim(mean.size(), action.size(), "gaussian_logprob");
    check_finite(mean, "mean");
    check_finite(log_std, "log_std");
    check_finite(action, "action");
    double lp = 0;
    for (size_t i = 0; i < mean.size(); ++i) {
        double sigma = std::exp(log_std[i]);
        double z = (action[i] - mean[i]) / sigma;
        lp += -0.5 * z * z - log_std[i] - 0.5 * std::log(2.0 * M_PI);
    }
    return lp;
}

// KL(p1 || p2) for diagonal Gaussians; >= 0, zero iff identical parameters.
inline double gaussian_kl(std::span<const double> mean1, std::span<const double> log_std1,
                          std::span<const double> mean2, std::span<const double> log_std2) {
    check_same_dim(mean1.size(), mean2.size(), "gaussian_kl");
    check_same_dim(mean1.size(), log_std1.size(), "gaussian_kl");
    check_same_dim(mean2.size(), log_std2.size(), "gaussian_kl");
    check_finite(mean1, "mean1");
    check_finite(mean2, "mean2");
    double kl = 0;
    for (size_t i = 0; i < mean1.size(); ++i) {
        double v1 = std::exp(2.0 * log_std1[i]);
        double v2 = std::exp(2.0 * log_std2[i]);
        double dm = mean1[i] - mean2[i];
        kl += log_std2[i] - log_std1[i] + (v1 + dm * dm) / (2.0 * v2) - 0.5;
    }
    return kl;
}

// ---- Gaussian policy over a tanh-bounded mean network ------------------------------------

// The mean network's tanh output is scaled affinely into the action box, so
// the mean always lies within bounds. log_std is a trainable per-dimension
// vector in PPO mode; ES uses a fixed scalar std (0.01) instead.
struct GaussianPolicy {
    MlpSpec mean_spec;  // output activation must be Tanh
    Vec action_low, action_high;

    GaussianPolicy() = default;
    GaussianPolicy(std::vector<int> sizes, Vec low, Vec high) {
        mean_spec.sizes = std::move(sizes);
        mean_spec.output = MlpSpec::Output::Tanh;
        mean_spec.check();
        action_low = std::move(low);
        action_high = std::move(high);
        if (static_cast<int>(action_low.size()) != mean_spec.out_dim() ||
            action_high.size() != action_low.size())
            throw ShapeError("action bounds must match mean net output dim");
    }

    int act_dim() const { return mean_spec.out_dim(); }

    Vec mean_action(const MlpParams& mean_params, std::span<const double> obs) const {
        Vec o = forward(mean_params, obs);
        for (size_t i = 0; i < o.size(); ++i) {
            double center = 0.5 * (action_low[i] + action_high[i]);
            double half = 0.5 * (action_high[i] - action_low[i]);
            o[i] = center + half * o[i];
        }
        return o;
    }

    // Backprop through the affine bound scaling into the mean network.
    BackwardResult mean_backward(const MlpParams& mean_params, std::span<const double> obs,
                                 std::span<const double> upstream_on_mean) const {
        Vec up(upstream_on_mean.begin(), upstream_on_mean.end());
        for (size_t i = 0; i < up.size(); ++i)
            up[i] *= 0.5 * (action_high[i] - action_low[i]);
        return backward(mean_params, obs, up);
    }
};

}  // namespace deskrl::nnet
