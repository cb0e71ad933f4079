#include "deskrl/envs.hpp"

#include <gtest/gtest.h>

using namespace deskrl;
using namespace deskrl::envs;

namespace {

TEST(PointMass, SpecShape) {
    PointMass2D env;
    EXPECT_EQ(env.spec().obs_dim, 6);
    EXPECT_EQ(env.spec().act_dim, 2);
    EXPECT_EQ(env.spec().horizon, 100);
    EXPECT_EQ(env.reset(1).size(), 6u);
}

TEST(PointMass, ResetDeterministic) {
    PointMass2D a, b;
    EXPECT_EQ(a.reset(42), b.reset(42));
    EXPECT_NE(a.reset(42), a.reset(43));
}

TEST(PointMass, HandEvaluatedEulerStep) {
    PointMass2D env;
    env.set_state(0, 0, 0, 0);
    auto [obs, reward, done] = env.step(std::vector<double>{1, 0});
    // v += a*dt, p += v*dt
    EXPECT_DOUBLE_EQ(obs[2], 0.05);   // vx
    EXPECT_DOUBLE_EQ(obs[3], 0.0);    // vy
    EXPECT_DOUBLE_EQ(obs[0], 0.0025);  // px
    EXPECT_DOUBLE_EQ(obs[1], 0.0);    // py
    EXPECT_DOUBLE_EQ(reward, -2.00500625);
    EXPECT_FALSE(done);
}

TEST(PointMass, GoalGivesBonusAndDone) {
    PointMass2D env;
    env.set_state(1, 1, 0, 0);
    auto [obs, reward, done] = env.step(std::vector<double>{0, 0});
    EXPECT_DOUBLE_EQ(reward, 10.0);
    EXPECT_TRUE(done);
}

TEST(PointMass, ActionClippedToBounds) {
    PointMass2D a, b;
    a.set_state(0, 0, 0, 0);
    b.set_state(0, 0, 0, 0);
    auto ra = a.step(std::vector<double>{5, -5});
    auto rb = b.step(std::vector<double>{1, -1});
    EXPECT_EQ(ra.obs, rb.obs);
    EXPECT_EQ(ra.reward, rb.reward);
}

TEST(PointMass, StepAfterDoneRejected) {
    PointMass2D env;
    env.set_state(1, 1, 0, 0);
    env.step(std::vector<double>{0, 0});
    EXPECT_THROW(env.step(std::vector<double>{0, 0}), ContractError);
}

TEST(PointMass, EpisodeEndsAtHorizon) {
    PointMass2D env;
    env.reset(7);
    int steps = 0;
    while (!env.done()) {
        env.step(std::vector<double>{-1, 0});
        if (++steps > 200) FAIL() << "episode ran past horizon";
    }
    EXPECT_LE(steps, env.spec().horizon);
}

TEST(Pendulum, ObsOnUnitCircle) {
    Pendulum env;
    for (uint64_t seed = 0; seed < 20; ++seed) {
        auto obs = env.reset(seed);
        EXPECT_NEAR(obs[0] * obs[0] + obs[1] * obs[1], 1.0, 1e-12);
    }
}

TEST(Pendulum, UprightEquilibrium) {
    Pendulum env;
    env.set_state(0, 0);
    for (int i = 0; i < 5; ++i) {
        auto [obs, reward, done] = env.step(std::vector<double>{0});
        EXPECT_DOUBLE_EQ(reward, 0.0);
        EXPECT_DOUBLE_EQ(obs[0], 1.0);  // cos(0)
        EXPECT_DOUBLE_EQ(obs[1], 0.0);  // sin(0)
    }
}

TEST(Pendulum, RewardWithinBounds) {
    const double lower = -(M_PI * M_PI + 0.1 * 64 + 0.001 * 4);
    Rng rng(5);
    Pendulum env;
    for (int ep = 0; ep < 5; ++ep) {
        env.reset(100 + ep);
        while (!env.done()) {
            auto [obs, reward, done] = env.step(std::vector<double>{rng.uniform(-2, 2)});
            EXPECT_LE(reward, 0.0);
            EXPECT_GE(reward, lower);
        }
        EXPECT_EQ(env.step_index(), env.spec().horizon);
    }
}

TEST(Envs, TrajectoriesBitwiseDeterministic) {
    for (const auto& id : env_ids()) {
        auto a = make_env(id);
        auto b = make_env(id);
        auto obs_a = a->reset(99);
        auto obs_b = b->reset(99);
        ASSERT_EQ(obs_a, obs_b);
        Rng actions(31337);
        for (int i = 0; i < 50 && !a->done(); ++i) {
            std::vector<double> act(a->spec().act_dim);
            for (auto& x : act) x = actions.uniform(-1, 1);
            auto ra = a->step(act);
            auto rb = b->step(act);
            ASSERT_EQ(ra.obs, rb.obs) << id;
            ASSERT_EQ(ra.reward, rb.reward) << id;
            ASSERT_EQ(ra.done, rb.done) << id;
        }
    }
}

TEST(Envs, FactoryAndUnknownId) {
    EXPECT_EQ(make_env("pendulum")->spec().obs_dim, 3);
    EXPECT_EQ(spec_for("pointmass2d").act_dim, 2);
    EXPECT_THROW(make_env("halfcheetah"), NotFoundError);
}

}  // namespace
