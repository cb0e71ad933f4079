// Self-contained continuous-control environments with deterministic
// dynamics (Euler integration, dt = 0.05). Distinct instances are
// independent; an instance is single-threaded.
#pragma once

#include <algorithm>
#include <memory>
#include <vector>

#include "deskrl/common.hpp"

namespace deskrl::envs {

struct EnvSpec {
    std::string id;
    int obs_dim = 0;
    int act_dim = 0;
    std::vector<double> action_low;
    std::vector<double> action_high;
    int horizon = 0;
    double dt = 0.05;
};

struct StepResult {
    std::vector<double> obs;
    double reward = 0;
    bool done = false;
};

class Env {
public:
    virtual ~Env() = default;
    virtual const EnvSpec& spec() const = 0;
    virtual std::vector<double> reset(uint64_t seed) = 0;
    virtual StepResult step(std::span<const double> action) = 0;
    virtual int step_index() const = 0;
    virtual bool done() const = 0;
};

namespace detail {

inline double clip(double x, double lo, double hi) { return std::min(std::max(x, lo), hi); }

inline double wrap_angle(double theta) {
    double t = std::fmod(theta + M_PI, 2.0 * M_PI);
    if (t < 0) t += 2.0 * M_PI;
    return t - M_PI;
}

}  // namespace detail

// Point mass on the plane accelerating toward a fixed goal at (1, 1).
// Episode ends at the horizon or on reaching the goal ball (bonus +10).
class PointMass2D final : public Env {
public:
    PointMass2D() {
        spec_.id = "pointmass2d";
        spec_.obs_dim = 6;
        spec_.act_dim = 2;
        spec_.action_low = {-1, -1};
        spec_.action_high = {1, 1};
        spec_.horizon = 100;
        spec_.dt = 0.05;
    }

    const EnvSpec& spec() const override { return spec_; }

    std::vector<double> reset(uint64_t seed) override {
        Rng rng(seed);
        px_ = rng.uniform(-1, 1);
        py_ = rng.uniform(-1, 1);
        vx_ = vy_ = 0;
        step_ = 0;
        done_ = false;
        return observe();
    }

    StepResult step(std::span<const double> action) override {
        if (done_) throw ContractError("step() after done; reset() first");
        if (action.size() != 2) throw ShapeError("pointmass2d action must be 2-dim");
        double ax = detail::clip(action[0], -1, 1);
        double ay = detail::clip(action[1], -1, 1);

        vx_ += ax * spec_.dt;
        vy_ += ay * spec_.dt;
        px_ += vx_ * spec_.dt;
        py_ += vy_ * spec_.dt;

        double dx = px_ - kGoalX, dy = py_ - kGoalY;
        double dist2 = dx * dx + dy * dy;
        double reward = -dist2 - 0.01 * (ax * ax + ay * ay);
        bool reached = std::sqrt(dist2) < 0.05;
        if (reached) reward += 10.0;

        step_++;
        done_ = reached || step_ >= spec_.horizon;
        return {observe(), reward, done_};
    }

    int step_index() const override { return step_; }
    bool done() const override { return done_; }

    // Places the mass directly; handy for experiments and tests.
    std::vector<double> set_state(double px, double py, double vx, double vy) {
        px_ = px;
        py_ = py;
        vx_ = vx;
        vy_ = vy;
        step_ = 0;
        done_ = false;
        return observe();
    }

private:
    std::vector<double> observe() const {
        return {px_, py_, vx_, vy_, kGoalX - px_, kGoalY - py_};
    }

    static constexpr double kGoalX = 1.0, kGoalY = 1.0;
    EnvSpec spec_;
    double px_ = 0, py_ = 0, vx_ = 0, vy_ = 0;
    int step_ = 0;
    bool done_ = false;
};

// Torque-limited pendulum swing-up. The reward scores the state the torque
// was applied in; episodes end only at the horizon.
class Pendulum final : public Env {
public:
    Pendulum() {
        spec_.id = "pendulum";
        spec_.obs_dim = 3;
        spec_.act_dim = 1;
        spec_.action_low = {-2};
        spec_.action_high = {2};
        spec_.horizon = 200;
        spec_.dt = 0.05;
    }

    const EnvSpec& spec() const override { return spec_; }

    std::vector<double> reset(uint64_t seed) override {
        Rng rng(seed);
        theta_ = rng.uniform(-M_PI, M_PI);
        omega_ = rng.uniform(-1, 1);
        step_ = 0;
        done_ = false;
        return observe();
    }

    StepResult step(std::span<const double> action) override {
        if (done_) throw ContractError("step() after done; reset() first");
        if (action.size() != 1) throw ShapeError("pendulum action must be 1-dim");
        double u = detail::clip(action[0], -2, 2);

        double wrapped = detail::wrap_angle(theta_);
        double reward = -(wrapped * wrapped + 0.1 * omega_ * omega_ + 0.001 * u * u);

        // g = 10, m = 1, l = 1; -sin(theta + pi) == sin(theta), which keeps
        // the upright equilibrium exact in floating point.
        omega_ += ((3.0 * kG / (2.0 * kL)) * std::sin(theta_) + (3.0 / (kM * kL * kL)) * u) *
                  spec_.dt;
        theta_ += omega_ * spec_.dt;
        omega_ = detail::clip(omega_, -8, 8);

        step_++;
        done_ = step_ >= spec_.horizon;
        return {observe(), reward, done_};
    }

    int step_index() const override { return step_; }
    bool done() const override { return done_; }

    std::vector<double> set_state(double theta, double omega) {
        theta_ = theta;
        omega_ = omega;
        step_ = 0;
        done_ = false;
        return observe();
    }

private:
    std::vector<double> observe() const { return {std::cos(theta_), std::sin(theta_), omega_}; }

    static constexpr double kG = 10.0, kM = 1.0, kL = 1.0;
    EnvSpec spec_;
    double theta_ = 0, omega_ = 0;
    int step_ = 0;
    bool done_ = false;
};

inline std::vector<std::string> env_ids() { return {"pointmass2d", "pendulum"}; }

inline std::unique_ptr<Env> make_env(const std::string& id) {
    if (id == "pointmass2d") return std::make_unique<PointMass2D>();
    if (id == "pendulum") return std::make_unique<Pendulum>();
    throw NotFoundError("unknown env '" + id + "'; valid: pointmass2d, pendulum");
}

inline EnvSpec spec_for(const std::string& id) { return make_env(id)->spec(); }

}  // namespace deskrl::envs
