#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sbmkit/common.hpp"
#include "sbmkit/model.hpp"
#include "sbmkit/network.hpp"
#include "sbmkit/rng.hpp"

namespace sbm {

/// Mean-field state q(Theta, xi): Beta block parameters and per-node soft
/// label marginals. colsum/vsum cache the per-block column sums S_k and
/// variance sums V_k; local updates maintain them incrementally.
struct VarState {
    Matrix<double> soft;
    UpperTri<double> var_a;
    UpperTri<double> var_b;
    std::vector<double> colsum;
    std::vector<double> vsum;
    std::vector<double> elbo_trace;

    NodeId node_count() const { return static_cast<NodeId>(soft.rows()); }
    int block_count() const { return static_cast<int>(soft.cols()); }
    void refresh_caches();
};

/// Dyad responsibility r^{ij}_{kl} for k <= l.
double responsibility(std::span<const double> qi, std::span<const double> qj, int k, int l);

/// Soft rows drawn Dirichlet(1,...,1), then one global update.
VarState init_var_state(const Network& net, const Hyperparams& hp, Rng& rng);

/// Responsibility-weighted edge and non-edge sums over observed dyads.
/// With a batch, sums run over the induced subnetwork (both endpoints in
/// the batch). Passing null means the full network.
struct GlobalSums {
    UpperTri<double> edge;
    UpperTri<double> nonedge;
    std::int64_t observed_dyads = 0;
};
GlobalSums responsibility_sums(const Network& net, const Matrix<double>& soft,
                               const std::vector<NodeId>* batch);

void update_global(const Network& net, const Hyperparams& hp, VarState& state);

/// Digamma tables x1[k][l] = psi(a*_{phi(k,l)}) - psi(a*+b*) (x2 with b*),
/// plus per-node scratch. Refresh after every global update.
struct LocalWorkspace {
    Matrix<double> x1, x2;
    std::vector<double> nbr_sum, non_sum, masked_sum, logit;

    void refresh(const Hyperparams& hp, const VarState& state);
};

/// One coordinate update of row i. likelihood_scale multiplies the data
/// terms (1 for full-batch coordinate ascent). With in_batch set, the data
/// sums see only partners inside the batch and batch_colsum stands in for
/// the full column sums there; the prior terms always use the full sums.
void update_local(const Network& net, const Hyperparams& hp, VarState& state, NodeId i,
                  LocalWorkspace& ws, double likelihood_scale = 1.0,
                  const std::vector<char>* in_batch = nullptr,
                  std::vector<double>* batch_colsum = nullptr);

/// Convenience overload building the workspace on the fly.
void update_local(const Network& net, const Hyperparams& hp, VarState& state, NodeId i);

/// Normalizes logits into row i and keeps colsum/vsum (and optionally a
/// second column-sum accumulator) in sync. Consumes logit as scratch.
void apply_soft_row(VarState& state, NodeId i, std::vector<double>& logit,
                    std::vector<double>* extra_colsum);

/// Variational objective assembled from its expectation and entropy parts;
/// valid for any state. Equals elbo_display right after a global update.
double elbo(const Network& net, const Hyperparams& hp, const VarState& state);

/// The closed-form objective in terms of (a*, b*) and the column sums;
/// valid only when the global parameters are in sync with the soft rows.
double elbo_display(const Network& net, const Hyperparams& hp, const VarState& state);

/// E_q[log p(Y | Theta, xi)] over observed dyads.
double expected_log_likelihood(const Network& net, const Hyperparams& hp,
                               const VarState& state);

/// F - H[q] = E_q[log p(Y, Theta, xi)]; the score the sweep harness reports.
double expected_log_joint(const Network& net, const Hyperparams& hp, const VarState& state);

/// Per-row argmax of the soft assignments.
Labels argmax_partition(const VarState& state);

struct CaviConfig {
    double rel_tol = 1e-6;
    int max_sweeps = 500;
    int n_restarts = 1;
    int jobs = 1;
    std::uint64_t seed = 1;

    void validate() const;
};

struct RunRecord {
    std::string engine;
    bool converged = false;
    bool budget_exhausted = false;
    bool partial = false;   // stopped by a budget before the minimum work
    int sweeps = 0;         // cavi sweeps or sgvb epochs completed
    long long steps = 0;    // sgvb iteration counter at exit
    int best_restart = 0;
    double final_elbo = 0.0;
    double final_expected_joint = 0.0;
    double seconds = 0.0;
    std::vector<double> restart_final_elbos;
    std::vector<double> restart_expected_joints;
    std::vector<Labels> restart_partitions;
    std::vector<double> elbo_trace;
    std::vector<double> elapsed_trace;
    std::vector<long long> step_trace;
};

struct VarFit {
    VarState state;
    RunRecord record;
};

/// Runs single(restart) for n_restarts independent restarts, up to jobs of
/// them concurrently, and keeps the fit with the highest final ELBO. Fills
/// the per-restart score and partition vectors on the winner's record.
VarFit best_of_restarts(int n_restarts, int jobs, const std::function<VarFit(int)>& single);

VarFit run_cavi(const Network& net, const Hyperparams& hp, const CaviConfig& cfg);

}  // namespace sbm
