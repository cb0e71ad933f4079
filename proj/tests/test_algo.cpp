#include <gtest/gtest.h>

#include "deskrl/es.hpp"
#include "deskrl/ppo.hpp"

using namespace deskrl;
using namespace deskrl::algo;

namespace {

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max(1e-4, std::abs(a) + std::abs(b));
}

TrajectorySegment tiny_segment(std::vector<double> rewards, std::vector<uint8_t> dones,
                               bool final_done) {
    TrajectorySegment seg;
    seg.length = static_cast<int>(rewards.size());
    seg.obs_dim = 1;
    seg.act_dim = 1;
    seg.rewards = std::move(rewards);
    seg.dones = std::move(dones);
    for (int t = 0; t < seg.length; ++t) {
        seg.observations.push_back(0.1 * t);
        seg.actions.push_back(0.0);
        seg.old_logprobs.push_back(0.0);
        seg.values.push_back(0.0);
        seg.old_means.push_back(0.0);
    }
    seg.old_log_std = {0.0};
    seg.final_obs = {9.9};
    seg.final_done = final_done;
    return seg;
}

TEST(Returns, GammaZeroIsReward) {
    auto seg = tiny_segment({0.5, -1.0, 2.0}, {0, 0, 1}, true);
    auto rec = compute_returns_and_advantages(seg, 0.0, [](auto) { return 0.0; });
    EXPECT_EQ(rec.returns, (std::vector<double>{0.5, -1.0, 2.0}));
}

TEST(Returns, HandSummedDiscounting) {
    // rewards (1,1,1), gamma 0.5, done at end: R = (1+0.5+0.25, 1+0.5, 1)
    auto seg = tiny_segment({1, 1, 1}, {0, 0, 1}, true);
    auto rec = compute_returns_and_advantages(seg, 0.5, [](auto) { return 0.0; });
    EXPECT_EQ(rec.returns, (std::vector<double>{1.75, 1.5, 1.0}));
}

TEST(Returns, ZeroValueMakesAdvantageEqualReturn) {
    auto seg = tiny_segment({1, 2, 3}, {0, 0, 1}, true);
    auto rec = compute_returns_and_advantages(seg, 0.9, [](auto) { return 0.0; });
    EXPECT_EQ(rec.advantages, rec.returns);
}

TEST(Returns, BootstrapWhenNotDone) {
    auto seg = tiny_segment({1, 1}, {0, 0}, false);
    auto rec = compute_returns_and_advantages(seg, 0.5, [](auto) { return 8.0; });
    // R_1 = 1 + 0.5*V(final) = 5; R_0 = 1 + 0.5*5 = 3.5
    EXPECT_DOUBLE_EQ(rec.returns[1], 5.0);
    EXPECT_DOUBLE_EQ(rec.returns[0], 3.5);
}

TEST(Returns, EpisodeBoundaryResetsInsideSegment) {
    auto seg = tiny_segment({1, 1, 1}, {0, 1, 0}, false);
    auto rec = compute_returns_and_advantages(seg, 0.5, [](auto) { return 4.0; });
    EXPECT_DOUBLE_EQ(rec.returns[2], 3.0);   // 1 + 0.5*4 (bootstrap)
    EXPECT_DOUBLE_EQ(rec.returns[1], 1.0);   // done: no leak across episodes
    EXPECT_DOUBLE_EQ(rec.returns[0], 1.5);
}

TEST(Rollout, SingleStepArrays) {
    PolicyBundle bundle(envs::spec_for("pointmass2d"), {8, 8});
    Rng rng(3);
    BundleParams params = init_bundle(bundle, rng);
    ActorPolicyView view{&bundle.policy, &params.mean, &params.log_std, &params.value};

    RolloutWorker worker(envs::make_env("pointmass2d"), 11, 22, "actor-0");
    auto seg = worker.rollout(view, 1, 0);
    EXPECT_EQ(seg.length, 1);
    EXPECT_EQ(seg.rewards.size(), 1u);
    EXPECT_EQ(seg.observations.size(), 6u);
    EXPECT_EQ(seg.actions.size(), 2u);
    EXPECT_EQ(seg.dones.size(), 1u);
    EXPECT_EQ(seg.final_obs.size(), 6u);
}

TEST(Rollout, DeterministicGivenSeeds) {
    PolicyBundle bundle(envs::spec_for("pendulum"), {8, 8});
    Rng rng(5);
    BundleParams params = init_bundle(bundle, rng);
    ActorPolicyView view{&bundle.policy, &params.mean, &params.log_std, &params.value};

    RolloutWorker a(envs::make_env("pendulum"), 77, 88);
    RolloutWorker b(envs::make_env("pendulum"), 77, 88);
    for (int i = 0; i < 3; ++i) {
        auto sa = a.rollout(view, 40, i);
        auto sb = b.rollout(view, 40, i);
        EXPECT_EQ(sa, sb);
    }
    RolloutWorker c(envs::make_env("pendulum"), 77, 89);
    EXPECT_NE(a.rollout(view, 40, 0), c.rollout(view, 40, 0));
}

TEST(Rollout, LogprobSelfConsistent) {
    PolicyBundle bundle(envs::spec_for("pointmass2d"), {8, 8});
    Rng rng(7);
    BundleParams params = init_bundle(bundle, rng);
    ActorPolicyView view{&bundle.policy, &params.mean, &params.log_std, &params.value};

    RolloutWorker worker(envs::make_env("pointmass2d"), 1, 2);
    auto seg = worker.rollout(view, 32, 0);
    for (int t = 0; t < seg.length; ++t) {
        double recomputed =
            nnet::gaussian_logprob(seg.mean_at(t), seg.old_log_std, seg.act_at(t));
        EXPECT_NEAR(seg.old_logprobs[t], recomputed, 1e-12);
    }
}

TEST(Rollout, SegmentValueRoundTrip) {
    PolicyBundle bundle(envs::spec_for("pointmass2d"), {8, 8});
    Rng rng(9);
    BundleParams params = init_bundle(bundle, rng);
    ActorPolicyView view{&bundle.policy, &params.mean, &params.log_std, &params.value};
    RolloutWorker worker(envs::make_env("pointmass2d"), 4, 5, "actor-3");
    auto seg = worker.rollout(view, 16, 7);
    EXPECT_EQ(segment_from_value(deserialize(serialize(segment_to_value(seg)))), seg);
}

// ---- PPO loss ------------------------------------------------------------------

PpoBatch random_batch(const PolicyBundle& bundle, const BundleParams& old_params, size_t n,
                      Rng& rng, bool zero_advantages = false) {
    PpoBatch batch;
    batch.obs_dim = bundle.policy.mean_spec.in_dim();
    batch.act_dim = bundle.act_dim();
    for (size_t i = 0; i < n; ++i) {
        nnet::Vec obs(batch.obs_dim);
        for (auto& o : obs) o = rng.uniform(-1, 1);
        nnet::Vec mean = bundle.policy.mean_action(old_params.mean, obs);
        nnet::Vec act(batch.act_dim);
        for (int j = 0; j < batch.act_dim; ++j)
            act[j] = mean[j] + std::exp(old_params.log_std[j]) * rng.normal();
        batch.obs.insert(batch.obs.end(), obs.begin(), obs.end());
        batch.act.insert(batch.act.end(), act.begin(), act.end());
        batch.old_mean.insert(batch.old_mean.end(), mean.begin(), mean.end());
        batch.old_log_std.insert(batch.old_log_std.end(), old_params.log_std.begin(),
                                 old_params.log_std.end());
        batch.old_logp.push_back(nnet::gaussian_logprob(mean, old_params.log_std, act));
        batch.advantages.push_back(zero_advantages ? 0.0 : rng.normal());
        batch.returns.push_back(rng.uniform(-2, 2));
    }
    return batch;
}

TEST(PpoLoss, RatioIdentityAtOldParams) {
    envs::EnvSpec env = envs::spec_for("pointmass2d");
    PolicyBundle bundle(env, {8, 8});
    Rng rng(21);
    BundleParams params = init_bundle(bundle, rng);
    PpoBatch batch = random_batch(bundle, params, 30, rng);

    auto result = ppo_loss_and_grad(bundle, params, batch, 1.0);
    double mean_adv = 0;
    for (double a : batch.advantages) mean_adv += a;
    mean_adv /= static_cast<double>(batch.size());
    // At theta == theta_old the ratio is exactly 1 and the KL term exactly 0.
    EXPECT_NEAR(result.surrogate, mean_adv, 1e-12);
    EXPECT_NEAR(result.kl, 0.0, 1e-12);
}

TEST(PpoLoss, GradientMatchesFiniteDifferences) {
    envs::EnvSpec env = envs::spec_for("pointmass2d");
    PolicyBundle bundle(env, {4, 4});
    Rng rng(31);
    const double h = 1e-6;

    for (int trial = 0; trial < 20; ++trial) {
        BundleParams old_params = init_bundle(bundle, rng);
        BundleParams params = init_bundle(bundle, rng);  // different new params
        PpoBatch batch = random_batch(bundle, old_params, 20, rng);
        double lambda = rng.uniform(0.1, 2.0);

        auto result = ppo_loss_and_grad(bundle, params, batch, lambda);
        nnet::Vec flat = flatten_bundle(params);
        double max_err = 0;
        for (size_t i = 0; i < flat.size(); ++i) {
            nnet::Vec plus = flat, minus = flat;
            plus[i] += h;
            minus[i] -= h;
            double lp = ppo_loss_and_grad(bundle, unflatten_bundle(bundle, plus), batch, lambda).loss;
            double lm = ppo_loss_and_grad(bundle, unflatten_bundle(bundle, minus), batch, lambda).loss;
            max_err = std::max(max_err, rel_err(result.grad[i], (lp - lm) / (2 * h)));
        }
        EXPECT_LT(max_err, 1e-4) << "trial " << trial;
    }
}

TEST(PpoLoss, ZeroAdvantagesLeaveOnlyValueGradient) {
    envs::EnvSpec env = envs::spec_for("pointmass2d");
    PolicyBundle bundle(env, {4, 4});
    Rng rng(41);
    BundleParams params = init_bundle(bundle, rng);
    PpoBatch batch = random_batch(bundle, params, 16, rng, /*zero_advantages=*/true);

    // lambda = 0 isolates the advantage-weighted policy component.
    auto result = ppo_loss_and_grad(bundle, params, batch, 0.0);
    size_t n_policy = bundle.policy.mean_spec.param_count() + bundle.act_dim();
    for (size_t i = 0; i < n_policy; ++i) EXPECT_EQ(result.grad[i], 0.0);
    double value_norm = 0;
    for (size_t i = n_policy; i < result.grad.size(); ++i)
        value_norm += result.grad[i] * result.grad[i];
    EXPECT_GT(value_norm, 0.0);
}

TEST(PpoLoss, NonFiniteRejected) {
    envs::EnvSpec env = envs::spec_for("pointmass2d");
    PolicyBundle bundle(env, {4, 4});
    Rng rng(51);
    BundleParams params = init_bundle(bundle, rng);
    PpoBatch batch = random_batch(bundle, params, 4, rng);
    batch.old_logp[0] = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(ppo_loss_and_grad(bundle, params, batch, 1.0), NumericError);
}

// ---- adaptive KL ---------------------------------------------------------------------

TEST(AdaptKl, InsideBandNoop) {
    AdaptiveKLState s;
    s.kl_target = 0.01;
    s.lambda = 0.7;
    for (double kl : {0.01, 0.005, 0.02, 0.013}) {
        auto next = adapt_kl(s, kl);
        EXPECT_EQ(next.lambda, 0.7) << kl;
    }
}

TEST(AdaptKl, SingleStepChanges) {
    AdaptiveKLState s;
    s.kl_target = 0.01;
    s.lambda = 1.0;
    EXPECT_DOUBLE_EQ(adapt_kl(s, 0.03).lambda, 1.5);       // 3x target: grow
    EXPECT_DOUBLE_EQ(adapt_kl(s, 0.001).lambda, 1.0 / 1.5);  // below band: shrink
}

TEST(AdaptKl, ClampSaturationAtStep23) {
    AdaptiveKLState s;
    s.kl_target = 0.01;
    s.lambda = 1.0;
    int first_clamped = -1;
    for (int step = 1; step <= 50; ++step) {
        s = adapt_kl(s, 1.0);  // always far above band
        if (first_clamped < 0 && s.lambda == s.clamp_hi) first_clamped = step;
    }
    EXPECT_EQ(s.lambda, 1e4);
    // ceil(ln(1e4)/ln(1.5)) = 23
    EXPECT_EQ(first_clamped, 23);
}

TEST(AdaptKl, LowerClamp) {
    AdaptiveKLState s;
    s.kl_target = 0.01;
    s.lambda = 1.0;
    for (int step = 0; step < 60; ++step) s = adapt_kl(s, 0.0);
    EXPECT_DOUBLE_EQ(s.lambda, 1e-4);
}

TEST(AdaptKl, InBandTrajectoryProperty) {
    Rng rng(61);
    AdaptiveKLState s;
    s.kl_target = 0.02;
    s.lambda = 3.3;
    for (int i = 0; i < 1000; ++i) {
        double kl = rng.uniform(s.band_low * s.kl_target, s.band_high * s.kl_target);
        s = adapt_kl(s, kl);
        ASSERT_EQ(s.lambda, 3.3);
    }
}

// ---- ES ------------------------------------------------------------------------------

TEST(EsPerturb, ExactConstruction) {
    nnet::Vec theta{1.0, -2.0, 0.5};
    double sigma = 0.02;
    nnet::Vec eps = perturbation_noise(42, 3);
    nnet::Vec got = es_perturb(theta, 42, sigma);
    for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(got[i], theta[i] + sigma * eps[i]);
    // Mirrored partner.
    nnet::Vec neg = es_perturb(theta, 42, sigma, -1);
    for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(neg[i], theta[i] - sigma * eps[i]);
}

TEST(EsPerturb, SameSeedBitwiseIdentical) {
    auto a = perturbation_noise(987654321, 64);
    auto b = perturbation_noise(987654321, 64);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, perturbation_noise(987654322, 64));
}

TEST(EsPerturb, CoordinateMeanNearZero) {
    // CLT bound: 3/sqrt(1e5) ~ 0.0095
    double sum = 0;
    const int kSeeds = 100000;
    for (int s = 0; s < kSeeds; ++s) sum += perturbation_noise(static_cast<uint64_t>(s), 1)[0];
    EXPECT_LT(std::abs(sum / kSeeds), 0.01);
}

TEST(EsGradient, ConstantReturnsCenteredToZero) {
    EsConfig cfg;
    cfg.centered_returns = true;
    std::vector<uint64_t> seeds{11, 22, 33, 44};
    std::vector<PerturbationRecord> records;
    for (uint64_t s : seeds) records.push_back({s, +1, 5.5, "a", 0});
    nnet::Vec g = es_gradient_estimate(records, 8, 0.02, cfg, seeds);
    for (double v : g) EXPECT_EQ(v, 0.0);
}

TEST(EsGradient, MirroredEqualReturnsCancel) {
    EsConfig cfg;
    cfg.centered_returns = false;
    cfg.mirrored = true;
    std::vector<uint64_t> seeds{7};
    std::vector<PerturbationRecord> records{{7, +1, 3.0, "a", 0}, {7, -1, 3.0, "b", 0}};
    nnet::Vec g = es_gradient_estimate(records, 6, 0.02, cfg, seeds);
    for (double v : g) EXPECT_EQ(v, 0.0);
}

TEST(EsGradient, UnknownSeedRejected) {
    EsConfig cfg;
    std::vector<PerturbationRecord> records{{1, +1, 0.0, "a", 0}, {2, +1, 1.0, "a", 0}};
    EXPECT_THROW(es_gradient_estimate(records, 4, 0.02, cfg, {1}), IntegrityError);
}

// Monte-Carlo oracle: for J(theta) = -||theta||^2 the Gaussian-smoothed
// objective has gradient exactly -2*theta.
TEST(EsGradient, QuadraticSmoothedGradient) {
    const size_t dim = 10;
    const double sigma = 0.02;
    nnet::Vec theta(dim, 0.0);
    theta[0] = 1.0;

    EsConfig cfg;
    cfg.centered_returns = true;
    Rng seed_rng(20240818);
    const int n = 10000;
    std::vector<uint64_t> seeds;
    std::vector<PerturbationRecord> records;
    for (int i = 0; i < n; ++i) {
        uint64_t s = seed_rng.next_u64();
        seeds.push_back(s);
        nnet::Vec perturbed = es_perturb(theta, s, sigma);
        double J = 0;
        for (double x : perturbed) J -= x * x;
        records.push_back({s, +1, J, "a", 0});
    }
    nnet::Vec g = es_gradient_estimate(records, dim, sigma, cfg, seeds);
    EXPECT_LT(std::abs(g[0] - (-2.0)) / 2.0, 0.05);
}

TEST(EsMaster, QuadraticObjectiveDescendsEveryIteration) {
    nnet::GaussianPolicy policy({3, 4, 2}, {-1, -1}, {1, 1});
    EsConfig cfg;
    cfg.population = 64;
    cfg.sigma = 0.02;
    cfg.eta = 0.001;
    cfg.seed = 5;
    EsMasterCore master(policy, cfg);

    auto norm2 = [](const nnet::Vec& v) {
        double s = 0;
        for (double x : v) s += x * x;
        return s;
    };

    double prev = norm2(master.theta());
    for (int iter = 0; iter < 50; ++iter) {
        auto assignment = master.next_assignment();
        std::vector<PerturbationRecord> records;
        for (int m = 0; m < assignment.members(); ++m) {
            auto [seed, sign] = assignment.member(m);
            nnet::Vec perturbed = es_perturb(master.theta(), seed, cfg.sigma, sign);
            records.push_back({seed, sign, -norm2(perturbed), "local", assignment.version});
        }
        master.step(records);
        double now = norm2(master.theta());
        EXPECT_LT(now, prev) << "iteration " << iter;
        prev = now;
    }
}

TEST(EsMaster, SeedsUniqueAndQuorum) {
    nnet::GaussianPolicy policy({3, 4, 1}, {-1}, {1});
    EsConfig cfg;
    cfg.population = 16;
    cfg.mirrored = true;
    EsMasterCore master(policy, cfg);
    auto a = master.next_assignment();
    EXPECT_EQ(a.seeds.size(), 8u);
    EXPECT_EQ(a.members(), 16);
    std::set<uint64_t> uniq(a.seeds.begin(), a.seeds.end());
    EXPECT_EQ(uniq.size(), a.seeds.size());
    EXPECT_FALSE(master.quorum(12));  // < 0.8 * 16
    EXPECT_TRUE(master.quorum(13));
    // Mirrored member enumeration pairs signs over the same seed.
    auto [s0, g0] = a.member(0);
    auto [s1, g1] = a.member(1);
    EXPECT_EQ(s0, s1);
    EXPECT_EQ(g0, +1);
    EXPECT_EQ(g1, -1);
}

// ---- staleness guard -------------------------------------------------------------------

TEST(Staleness, WindowEnforced) {
    PolicyBundle bundle(envs::spec_for("pointmass2d"), {4, 4});
    PpoConfig cfg;
    cfg.staleness_window = 2;
    cfg.seed = 3;
    PpoLearnerCore core(bundle, cfg);

    TrajectorySegment seg;
    seg.policy_version = 1;
    EXPECT_TRUE(core.accept_segment(seg));

    // Advance the learner 3 versions with real rollouts.
    Rng rng(8);
    ActorPolicyView view{&bundle.policy, &core.params().mean, &core.params().log_std,
                         &core.params().value};
    RolloutWorker worker(envs::make_env("pointmass2d"), 10, 20);
    for (int i = 0; i < 3; ++i) {
        std::vector<TrajectorySegment> segs;
        ActorPolicyView fresh{&bundle.policy, &core.params().mean, &core.params().log_std,
                              &core.params().value};
        segs.push_back(worker.rollout(fresh, 16, core.version()));
        core.update(segs);
    }
    EXPECT_EQ(core.version(), 4);
    TrajectorySegment stale;
    stale.policy_version = 1;  // lag 3 > window 2
    EXPECT_FALSE(core.accept_segment(stale));
    EXPECT_THROW(core.update({stale}), ContractError);
}

// ---- action discretization ---------------------------------------------------------------

TEST(Discretize, TenBinCenters) {
    auto env = std::make_unique<DiscretizedActionEnv>(envs::make_env("pendulum"), 10);
    // bounds [-2, 2], 10 bins: centers -1.8, -1.4, ..., 1.8
    EXPECT_NEAR(env->nearest_center(0.05, -2, 2), 0.2, 1e-12);
    EXPECT_NEAR(env->nearest_center(-0.05, -2, 2), -0.2, 1e-12);
    EXPECT_NEAR(env->nearest_center(1.79, -2, 2), 1.8, 1e-12);
    EXPECT_NEAR(env->nearest_center(5.0, -2, 2), 1.8, 1e-12);   // beyond bounds clamps
    EXPECT_NEAR(env->nearest_center(-5.0, -2, 2), -1.8, 1e-12);
}

TEST(Discretize, StepUsesSnappedAction) {
    envs::Pendulum raw;
    raw.set_state(0.5, 0.0);
    auto wrapped_inner = envs::make_env("pendulum");
    auto* inner = static_cast<envs::Pendulum*>(wrapped_inner.get());
    inner->set_state(0.5, 0.0);
    DiscretizedActionEnv wrapped(std::move(wrapped_inner), 10);

    auto a = raw.step(std::vector<double>{0.2});          // snapped value applied directly
    auto b = wrapped.step(std::vector<double>{0.05});     // 0.05 snaps to 0.2
    EXPECT_EQ(a.obs, b.obs);
    EXPECT_EQ(a.reward, b.reward);
}

}  // namespace
