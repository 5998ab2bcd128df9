#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sbmkit/common.hpp"

namespace sbm {

/// Undirected binary network over nodes 0..I-1. Only the strict upper
/// triangle is represented; masked dyads are unobserved (held out) and
/// contribute to no sufficient statistic. Immutable after construction, so
/// it can be shared freely across concurrent restarts.
class Network {
  public:
    /// Node-count threshold below which a dense edge bitmap is kept next to
    /// the adjacency lists.
    static constexpr NodeId kDefaultBitmapThreshold = 16384;

    Network() = default;
    Network(NodeId node_count, std::span<const Dyad> edges, std::span<const Dyad> masked = {},
            NodeId bitmap_threshold = kDefaultBitmapThreshold);

    NodeId node_count() const { return node_count_; }
    std::size_t edge_count() const { return edge_count_; }
    std::size_t masked_count() const { return masked_count_; }

    /// Dyads of the training view: all pairs minus the masked ones.
    std::size_t observed_dyad_count() const { return dyad_count(node_count_) - masked_count_; }

    /// True if (u,v) is an observed edge. Masked pairs report false.
    bool is_edge(NodeId u, NodeId v) const;
    bool is_masked(NodeId u, NodeId v) const;
    bool is_observed(NodeId u, NodeId v) const { return !is_masked(u, v); }

    std::span<const NodeId> neighbors(NodeId i) const { return adjacency_[static_cast<std::size_t>(i)]; }
    std::span<const NodeId> masked_partners(NodeId i) const { return masked_[static_cast<std::size_t>(i)]; }

    std::size_t degree(NodeId i) const { return adjacency_[static_cast<std::size_t>(i)].size(); }

    /// Canonical sorted edge list.
    std::vector<Dyad> edges() const;
    std::vector<Dyad> masked_dyads() const;

    /// Copy of this network with `pairs` added to the mask; any of them that
    /// were edges are removed from the training view.
    Network with_mask(std::span<const Dyad> pairs) const;

  private:
    NodeId node_count_ = 0;
    std::size_t edge_count_ = 0;
    std::size_t masked_count_ = 0;
    std::vector<std::vector<NodeId>> adjacency_;
    std::vector<std::vector<NodeId>> masked_;
    std::vector<std::uint64_t> edge_bits_;  // empty when above the bitmap threshold
};

struct TestPair {
    NodeId i;
    NodeId j;
    bool y;
};

/// One cross-validation split: the masked training view plus the held-out
/// dyads with their true values.
struct HoldoutSplit {
    Network train;
    std::vector<TestPair> test_pairs;
    int fold_id = 0;
    std::uint64_t seed = 0;
};

/// Edge list plus the original node identifiers (identity when the file ids
/// were already dense).
struct LoadedNetwork {
    Network net;
    std::vector<std::int64_t> original_ids;
};

/// Parse a whitespace-separated edge list, one dyad per line. Lines starting
/// with '#' are comments; "# nodes=I" declares the node count (for isolated
/// vertices). Duplicate dyads collapse; self-loops are rejected. Sparse ids
/// are re-indexed densely with the mapping returned alongside.
LoadedNetwork load_edge_list(const std::string& path, bool one_indexed = true);

/// Canonical form: "# nodes=I" header then sorted dyads, one per line.
void write_edge_list(const std::string& path, const Network& net, bool one_indexed = true);

/// Build holdout splits. folds == 1 masks a single random subset of the
/// observed dyads with the given fraction; folds >= 2 partitions all observed
/// dyads into k test folds (fraction ignored). With balanced set, positives
/// and negatives are sampled (or stratified) separately at the same rate.
std::vector<HoldoutSplit> make_holdout(const Network& net, double fraction, int folds,
                                       std::uint64_t seed, bool balanced = false);

/// Holdout serialization: {"fold":f,"seed":s,"test":[[i,j,y],...]}, 1-based ids.
void save_holdout(const std::string& path, const HoldoutSplit& split);
HoldoutSplit load_holdout(const std::string& path, const Network& base);

}  // namespace sbm
