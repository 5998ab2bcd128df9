#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sbmkit/common.hpp"
#include "sbmkit/model.hpp"
#include "sbmkit/network.hpp"

namespace sbm {

/// Ground-truth description of a planted-partition network: block sizes and
/// the upper-triangular block interaction probabilities.
struct GeneratorSpec {
    NodeId node_count = 0;
    std::vector<NodeId> block_sizes;
    UpperTri<double> theta;
    std::uint64_t seed = 0;

    int block_count() const { return static_cast<int>(block_sizes.size()); }

    /// Per-node labels: block 0 first, in block order.
    Labels labels() const;

    void validate() const;
};

/// Draw each dyad independently as Bernoulli(theta[phi(xi_i, xi_j)]).
/// Dyads are visited in canonical order with a single RNG stream, so the
/// edge set is reproducible bit for bit given the seed.
std::pair<Network, Labels> generate(const GeneratorSpec& spec);

/// Resample a network from hard labels and block-probability means; the
/// resimulation counterpart of generate().
Network resimulate_from_fit(const Labels& labels, const UpperTri<double>& theta_mean,
                            std::uint64_t seed);

/// Derive a spec in which the target block's interaction probabilities are
/// the elementwise mean of the two parents' rows (the target's diagonal is
/// the mean of the parents' diagonals). Indices are 0-based.
GeneratorSpec generate_confusable(const GeneratorSpec& base, int target_block,
                                  std::pair<int, int> parents);

/// Named dataset presets shipped with the repo: sim7-easy, sim7-confusable,
/// imdb-resim.
std::vector<std::string> preset_names();
GeneratorSpec make_preset(const std::string& name);

void save_generator_spec(const std::string& path, const GeneratorSpec& spec);
GeneratorSpec load_generator_spec(const std::string& path);

}  // namespace sbm
