#pragma once

#include <string>
#include <vector>

#include "sbmkit/cavi.hpp"
#include "sbmkit/common.hpp"
#include "sbmkit/gibbs.hpp"
#include "sbmkit/model.hpp"
#include "sbmkit/network.hpp"

namespace sbm {

enum class CoclusterSource { mcmc, variational };

/// Pairwise co-clustering probabilities. Symmetric with unit diagonal.
struct CoclusterMatrix {
    Matrix<double> prob;
    CoclusterSource source = CoclusterSource::mcmc;

    NodeId node_count() const { return static_cast<NodeId>(prob.rows()); }
    double at(NodeId i, NodeId j) const { return prob(static_cast<std::size_t>(i), static_cast<std::size_t>(j)); }
};

/// Entry (i,j) = fraction of retained samples assigning i and j the same block.
CoclusterMatrix cocluster_from_trace(const McmcTrace& trace);

/// Entry (i,j) = dot product of the soft assignment rows; diagonal forced to 1.
CoclusterMatrix cocluster_from_variational(const VarState& state);

/// Equal-penalty pairwise loss sum_{i<j} |1(p_i == p_j) - C_ij|.
double partition_loss(const CoclusterMatrix& C, const Labels& partition);

struct PartitionEstimate {
    Labels partition;
    double loss = 0.0;
};

/// Lowest-loss candidate under the equal-penalty pairwise loss. Throws
/// ConfigError when the pool is empty.
PartitionEstimate lau_green_partition(const CoclusterMatrix& C,
                                      const std::vector<Labels>& candidates);

/// Relabels blocks by order of first appearance so equivalent partitions
/// compare equal.
Labels canonical_partition(const Labels& labels);

/// Candidate pool for a sampler trace: the distinct retained partitions.
std::vector<Labels> mcmc_candidates(const McmcTrace& trace);

/// Candidate pool for a variational fit: argmax rows plus average-linkage
/// cuts of (1 - C) at every merge height.
std::vector<Labels> variational_candidates(const VarState& state, const CoclusterMatrix& C);

double adjusted_rand_index(const Labels& p1, const Labels& p2);

/// Predictive edge probabilities for the given dyads. Pairs must have been
/// masked during fitting; pass allow_unmasked for in-sample diagnostics.
std::vector<double> predict_links(const Network& net, const McmcTrace& trace,
                                  const std::vector<Dyad>& pairs, bool allow_unmasked = false);
std::vector<double> predict_links(const Network& net, const VarState& state,
                                  const std::vector<Dyad>& pairs, bool allow_unmasked = false);

struct RocResult {
    std::vector<double> thresholds;
    std::vector<double> fpr;
    std::vector<double> tpr;
    double auc = 0.0;
};

/// ROC over all distinct score thresholds plus infinite endpoints; AUC by the
/// trapezoidal rule (ties averaged). Throws ConfigError when only one class
/// is present.
RocResult roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

/// Node ordering for heatmap export: by partition block, then by descending
/// degree within each block.
std::vector<NodeId> heatmap_order(const Network& net, const Labels& partition);

void write_cocluster_csv(const CoclusterMatrix& C, const std::string& path,
                         const std::vector<NodeId>* order = nullptr);
void write_cocluster_triplets(const CoclusterMatrix& C, const std::string& path,
                              double min_prob);
void write_roc_csv(const RocResult& roc, const std::string& path);

}  // namespace sbm
