// Single-process ES on a built-in env: the master state machine evaluates
// its own population sequentially. Useful for sweeps of sigma/eta.
//
//   ./es_inprocess [iters] [eta] [population] [mirrored 0|1] [seed] [env] [hidden]
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "deskrl/es.hpp"
#include "deskrl/ppo.hpp"

using namespace deskrl;
using namespace deskrl::algo;

int main(int argc, char** argv) {
    EsConfig cfg;
    cfg.iters = argc > 1 ? std::atoi(argv[1]) : 200;
    cfg.eta = argc > 2 ? std::atof(argv[2]) : cfg.eta;
    cfg.population = argc > 3 ? std::atoi(argv[3]) : 64;
    cfg.mirrored = argc > 4 && std::atoi(argv[4]) != 0;
    cfg.seed = argc > 5 ? std::strtoull(argv[5], nullptr, 10) : 1;
    cfg.env_id = argc > 6 ? argv[6] : "pointmass2d";
    if (argc > 7) {
        cfg.hidden.clear();
        std::stringstream ss(argv[7]);
        std::string tok;
        while (std::getline(ss, tok, ',')) cfg.hidden.push_back(std::atoi(tok.c_str()));
    }

    nnet::GaussianPolicy policy = PolicyBundle(envs::spec_for(cfg.env_id), cfg.hidden).policy;
    EsMasterCore master(policy, cfg);
    RolloutWorker evaluator(make_es_env(cfg), cfg.seed, cfg.seed ^ 0xE5, "inproc");
    nnet::Vec log_std(policy.act_dim(), std::log(cfg.fixed_std));

    for (int iter = 0; iter < cfg.iters; ++iter) {
        EsAssignment assignment = master.next_assignment();
        std::vector<PerturbationRecord> records;
        for (int m = 0; m < assignment.members(); ++m) {
            auto [seed, sign] = assignment.member(m);
            nnet::Vec theta = es_perturb(master.theta(), seed, cfg.sigma, sign);
            nnet::MlpParams mean = nnet::unflatten(policy.mean_spec, theta);
            ActorPolicyView view{&policy, &mean, &log_std, nullptr};
            uint64_t ep_seed = es_episode_seed(assignment.version, seed, sign);
            double ret = evaluator.run_episode(view, ep_seed, ep_seed ^ 0x5eed);
            records.push_back({seed, sign, ret, "inproc", assignment.version});
        }
        auto stats = master.step(records);
        std::printf("{\"iter\": %lld, \"mean_return\": %.3f, \"grad_norm\": %.4g}\n",
                    static_cast<long long>(stats.iter), stats.mean_return, stats.grad_norm);
    }
    return 0;
}
