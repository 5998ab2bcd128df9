#pragma once

#include <cstdint>
#include <vector>

#include "sbmkit/common.hpp"
#include "sbmkit/model.hpp"
#include "sbmkit/network.hpp"
#include "sbmkit/rng.hpp"

namespace sbm {

struct McmcConfig {
    int iterations = 10000;
    int burn_in = 5000;
    int thin = 1;
    int n_chains = 1;
    std::uint64_t seed = 1;

    int retained() const { return (iterations - burn_in) / thin; }
    void validate() const;
};

/// Full sampler state. Exposed so tests can drive single scans directly.
struct GibbsState {
    Labels labels;
    UpperTri<double> theta;
    std::vector<double> w;
    SufficientStats stats;
};

GibbsState init_gibbs_state(const Network& net, const Hyperparams& hp, Rng& rng);

/// One systematic scan: w, then theta, then every label in node order.
void gibbs_scan(const Network& net, const Hyperparams& hp, GibbsState& state, Rng& rng);

struct McmcTrace {
    Hyperparams hp;
    std::uint64_t seed = 0;
    int chain_index = 0;
    int iterations = 0;
    int burn_in = 0;
    int thin = 0;

    std::vector<Labels> labels;
    std::vector<UpperTri<double>> theta;
    std::vector<std::vector<double>> w;
    std::vector<double> log_joint;        // one entry per iteration, burn-in included
    std::vector<double> chain_mean_log_joint;
    double seconds = 0.0;

    int retained() const { return static_cast<int>(labels.size()); }
    double mean_log_joint_post_burnin() const;
};

/// Runs n_chains independent chains (streams seed+chain index) and returns
/// the one with the highest mean post burn-in log joint.
McmcTrace run_gibbs(const Network& net, const Hyperparams& hp, const McmcConfig& config);

}  // namespace sbm
