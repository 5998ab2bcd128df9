#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "sbmkit/cavi.hpp"
#include "sbmkit/common.hpp"
#include "sbmkit/model.hpp"
#include "sbmkit/network.hpp"
#include "sbmkit/rng.hpp"

namespace sbm {

struct SgvbConfig {
    double omega = 0.25;
    double kappa = 0.6;
    double tau = 1.0;
    int min_epochs = 3;
    double rel_tol = 1e-4;
    int max_epochs = 500;
    double time_budget_seconds = 0.0;  // 0 disables the budget
    int n_restarts = 1;
    double elbo_monitor_fraction = 0.1;
    std::uint64_t seed = 1;
    int jobs = 1;
    std::optional<double> fixed_rho;  // overrides the step-size schedule
    bool reshuffle = true;            // new node partition each epoch

    int batch_size(NodeId node_count) const;
    void validate() const;
};

/// Robbins-Monro step size (t + tau)^(-kappa), t >= 1.
double step_size(long long t, double tau, double kappa);

/// Ratio of observed dyad counts, full network over batch subnetwork.
double scaling_factor(std::int64_t observed_total, std::int64_t observed_batch);

/// Balanced partition of all nodes (in the given order) into
/// ceil(I/batch) blocks; blocks of one node are merged into their
/// predecessor so every block contains a dyad. Blocks sorted ascending.
std::vector<std::vector<NodeId>> epoch_blocks(const std::vector<NodeId>& order,
                                              int batch);

/// Minibatch coordinate updates for every i in S (ascending): likelihood
/// sums restricted to the induced subnetwork on S and scaled by
/// (I-1)/(|S|-1); prior terms keep the full column sums.
void local_minibatch_update(const Network& net, const Hyperparams& hp, VarState& state,
                            const std::vector<NodeId>& batch_nodes,
                            const std::vector<char>& in_batch, LocalWorkspace& ws);

/// Batch estimate of the global parameters: prior offset plus C times the
/// induced-subnetwork responsibility sums.
std::pair<UpperTri<double>, UpperTri<double>> intermediate_global(
    const Network& net, const Hyperparams& hp, const VarState& state,
    const std::vector<NodeId>& batch_nodes, double C);

/// Convex combination (1-rho)*old + rho*hat for both parameter triangles.
void sgvb_step(VarState& state, const UpperTri<double>& a_hat,
               const UpperTri<double>& b_hat, double rho);

/// ELBO with the likelihood portion evaluated on the monitor subnetwork and
/// rescaled by its observed-dyad ratio; remaining terms exact.
double noisy_elbo(const Network& net, const Hyperparams& hp, const VarState& state,
                  const std::vector<NodeId>& monitor_nodes);

VarFit run_sgvb(const Network& net, const Hyperparams& hp, const SgvbConfig& cfg);

}  // namespace sbm
