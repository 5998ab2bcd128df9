#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sbmkit/common.hpp"
#include "sbmkit/network.hpp"

namespace sbm {

/// Fixed model hyperparameters; defaults give the uniform Beta prior and a
/// unit Dirichlet concentration.
struct Hyperparams {
    double a = 1.0;
    double b = 1.0;
    double alpha = 1.0;
    int K = 1;

    void validate() const {
        if (a <= 0.0 || b <= 0.0 || alpha <= 0.0)
            throw std::invalid_argument("Hyperparams: a, b, alpha must be positive");
        if (K < 1) throw std::invalid_argument("Hyperparams: K must be >= 1");
    }
};

/// Hard community labels, one entry per node, values in 0..K-1.
using Labels = std::vector<int>;

/// Per-block-pair edge counts s, masked-dyad counts, and block sizes m over
/// the training view. Dyad counts n are derived from m minus the masked
/// dyads, so single-label moves stay O(degree + K).
class SufficientStats {
  public:
    SufficientStats() = default;
    SufficientStats(const Network& net, const Labels& labels, int K);

    int dim() const { return s_.dim(); }

    std::int64_t s(int k, int l) const { return s_(k, l); }
    std::int64_t m(int k) const { return m_[static_cast<std::size_t>(k)]; }
    std::span<const std::int64_t> block_sizes() const { return m_; }

    /// Observed dyad count for block pair (k,l), k <= l.
    std::int64_t n(int k, int l) const {
        const std::int64_t nk = m_[static_cast<std::size_t>(k)];
        const std::int64_t full = (k == l) ? nk * (nk - 1) / 2 : nk * m_[static_cast<std::size_t>(l)];
        return full - masked_(k, l);
    }

    std::int64_t masked(int k, int l) const { return masked_(k, l); }

    /// Move node i to block `to`, updating s, m, and the masked counts
    /// incrementally; `labels` is rewritten in place.
    void move_node(const Network& net, Labels& labels, NodeId i, int to);

    friend bool operator==(const SufficientStats&, const SufficientStats&) = default;

  private:
    UpperTri<std::int64_t> s_;
    UpperTri<std::int64_t> masked_;
    std::vector<std::int64_t> m_;
};

inline SufficientStats compute_stats(const Network& net, const Labels& labels, int K) {
    return SufficientStats(net, labels, K);
}

/// Log of the joint density p(Y, theta, xi, w) with all normalizing
/// constants, so values are comparable across runs. Returns -infinity when a
/// degenerate theta contradicts the data.
double log_joint(const Network& net, const Labels& labels, const UpperTri<double>& theta,
                 std::span<const double> w, const Hyperparams& hp);

/// Same, reusing precomputed sufficient statistics.
double log_joint(const SufficientStats& stats, const UpperTri<double>& theta,
                 std::span<const double> w, const Hyperparams& hp);

/// Prior predictive of the collapsed block-indicator model:
/// (m_k^{-i} + alpha/K) / ((I-1) + alpha), where m_minus_i are the block
/// sizes with node i removed.
double collapsed_prior_predictive(std::span<const std::int64_t> m_minus_i, int k,
                                  const Hyperparams& hp);

/// Engine state snapshot, serialized as JSON.
struct Checkpoint {
    std::string engine;  // "mcmc" | "cavi" | "sgvb"
    std::uint64_t seed = 0;
    std::int64_t iteration = 0;
    Hyperparams hp;
    NodeId node_count = 0;

    std::optional<Labels> labels;            // hard state
    std::optional<UpperTri<double>> theta;   // hard state
    std::optional<std::vector<double>> w;    // hard state
    std::optional<Matrix<double>> soft;      // variational state
    std::optional<UpperTri<double>> var_a;   // variational state
    std::optional<UpperTri<double>> var_b;   // variational state
    std::optional<std::vector<Labels>> label_trace;  // retained sampler partitions
};

void save_checkpoint(const std::string& path, const Checkpoint& cp);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace sbm
