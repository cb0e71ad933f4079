// Single-process PPO on a built-in env: the same learner core the
// distributed trainer uses, fed directly by in-process rollout workers.
// Handy for quick hyperparameter sweeps without sockets.
//
//   ./ppo_inprocess [iters] [lr] [grad_clip] [actors] [seed] [env] [K] [T] [epochs] [minibatch]
#include <cstdio>
#include <cstdlib>

#include "deskrl/ppo.hpp"

using namespace deskrl;
using namespace deskrl::algo;

int main(int argc, char** argv) {
    PpoConfig cfg;
    cfg.iters = argc > 1 ? std::atoi(argv[1]) : 300;
    cfg.lr = argc > 2 ? std::atof(argv[2]) : cfg.lr;
    cfg.grad_clip = argc > 3 ? std::atof(argv[3]) : cfg.grad_clip;
    cfg.actors = argc > 4 ? std::atoi(argv[4]) : 4;
    cfg.seed = argc > 5 ? std::strtoull(argv[5], nullptr, 10) : 1;
    cfg.env_id = argc > 6 ? argv[6] : "pointmass2d";
    cfg.segments_per_iter = argc > 7 ? std::atoi(argv[7]) : cfg.segments_per_iter;
    cfg.segment_len = argc > 8 ? std::atoi(argv[8]) : cfg.segment_len;
    cfg.epochs = argc > 9 ? std::atoi(argv[9]) : cfg.epochs;
    cfg.minibatch = argc > 10 ? std::atoi(argv[10]) : cfg.minibatch;

    PolicyBundle bundle(envs::spec_for(cfg.env_id), cfg.hidden);
    PpoLearnerCore core(bundle, cfg);

    std::vector<std::unique_ptr<RolloutWorker>> workers;
    for (int i = 0; i < cfg.actors; ++i)
        workers.push_back(std::make_unique<RolloutWorker>(
            envs::make_env(cfg.env_id), cfg.seed + i * 1000003ull, cfg.seed ^ (7ull + i),
            "inproc-" + std::to_string(i)));

    for (int iter = 0; iter < cfg.iters; ++iter) {
        std::vector<TrajectorySegment> segments;
        for (int k = 0; k < cfg.segments_per_iter; ++k) {
            auto& w = *workers[k % workers.size()];
            ActorPolicyView view{&bundle.policy, &core.params().mean, &core.params().log_std,
                                 &core.params().value};
            segments.push_back(w.rollout(view, cfg.segment_len, core.version()));
        }
        auto stats = core.update(segments);
        double sigma0 = std::exp(core.params().log_std[0]);
        std::printf("{\"iter\": %lld, \"mean_return\": %.3f, \"kl\": %.6g, \"lambda\": %.4g, "
                    "\"value_loss\": %.4g, \"sigma0\": %.4g, \"surrogate\": %.4g}\n",
                    static_cast<long long>(stats.iter), stats.mean_return, stats.realized_kl,
                    stats.lambda, stats.value_loss, sigma0, stats.surrogate);
    }
    return 0;
}
