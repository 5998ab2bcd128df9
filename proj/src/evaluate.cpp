#include "sbmkit/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <span>

namespace sbm {

namespace {

void check_square(const CoclusterMatrix& C) {
    if (C.prob.rows() != C.prob.cols())
        throw std::invalid_argument("cocluster matrix must be square");
}

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("evaluate: cannot open " + path + " for writing");
    out << std::setprecision(17);
    return out;
}

}  // namespace

CoclusterMatrix cocluster_from_trace(const McmcTrace& trace) {
    if (trace.labels.empty()) throw ConfigError("cocluster_from_trace: empty trace");
    const auto I = trace.labels.front().size();

    Matrix<double> counts(I, I, 0.0);
    std::vector<std::vector<NodeId>> buckets;
    for (const Labels& sample : trace.labels) {
        const int K = 1 + *std::max_element(sample.begin(), sample.end());
        buckets.assign(static_cast<std::size_t>(K), {});
        for (std::size_t i = 0; i < I; ++i)
            buckets[static_cast<std::size_t>(sample[i])].push_back(static_cast<NodeId>(i));
        for (const auto& members : buckets)
            for (std::size_t a = 0; a < members.size(); ++a)
                for (std::size_t b = a + 1; b < members.size(); ++b) {
                    const auto i = static_cast<std::size_t>(members[a]);
                    const auto j = static_cast<std::size_t>(members[b]);
                    counts(i, j) += 1.0;
                }
    }

    CoclusterMatrix C;
    C.source = CoclusterSource::mcmc;
    C.prob = Matrix<double>(I, I, 0.0);
    const auto S = static_cast<double>(trace.labels.size());
    for (std::size_t i = 0; i < I; ++i) {
        C.prob(i, i) = 1.0;
        for (std::size_t j = i + 1; j < I; ++j) {
            const double p = counts(i, j) / S;
            C.prob(i, j) = p;
            C.prob(j, i) = p;
        }
    }
    return C;
}

CoclusterMatrix cocluster_from_variational(const VarState& state) {
    const auto I = state.soft.rows();
    const auto K = state.soft.cols();

    CoclusterMatrix C;
    C.source = CoclusterSource::variational;
    C.prob = Matrix<double>(I, I, 0.0);
    for (std::size_t i = 0; i < I; ++i) {
        C.prob(i, i) = 1.0;
        const double* qi = state.soft.row(i);
        for (std::size_t j = i + 1; j < I; ++j) {
            const double* qj = state.soft.row(j);
            double dot = 0.0;
            for (std::size_t k = 0; k < K; ++k) dot += qi[k] * qj[k];
            C.prob(i, j) = dot;
            C.prob(j, i) = dot;
        }
    }
    return C;
}

double partition_loss(const CoclusterMatrix& C, const Labels& partition) {
    check_square(C);
    const auto I = C.prob.rows();
    if (partition.size() != I)
        throw std::invalid_argument("partition_loss: size mismatch");

    double loss = 0.0;
    for (std::size_t i = 0; i < I; ++i)
        for (std::size_t j = i + 1; j < I; ++j) {
            const double same = partition[i] == partition[j] ? 1.0 : 0.0;
            loss += std::abs(same - C.prob(i, j));
        }
    return loss;
}

PartitionEstimate lau_green_partition(const CoclusterMatrix& C,
                                      const std::vector<Labels>& candidates) {
    if (candidates.empty())
        throw ConfigError("lau_green_partition: empty candidate pool");

    PartitionEstimate best;
    best.loss = std::numeric_limits<double>::infinity();
    for (const Labels& cand : candidates) {
        const double loss = partition_loss(C, cand);
        if (loss < best.loss) {
            best.loss = loss;
            best.partition = cand;
        }
    }
    return best;
}

Labels canonical_partition(const Labels& labels) {
    Labels out(labels.size());
    std::map<int, int> remap;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto [it, inserted] = remap.try_emplace(labels[i], static_cast<int>(remap.size()));
        out[i] = it->second;
    }
    return out;
}

std::vector<Labels> mcmc_candidates(const McmcTrace& trace) {
    std::set<Labels> seen;
    std::vector<Labels> pool;
    for (const Labels& sample : trace.labels) {
        Labels canon = canonical_partition(sample);
        if (seen.insert(canon).second) pool.push_back(std::move(canon));
    }
    return pool;
}

std::vector<Labels> variational_candidates(const VarState& state, const CoclusterMatrix& C) {
    check_square(C);
    const auto I = C.prob.rows();
    if (state.soft.rows() != I)
        throw std::invalid_argument("variational_candidates: size mismatch");

    std::set<Labels> seen;
    std::vector<Labels> pool;
    auto add = [&](const Labels& cand) {
        Labels canon = canonical_partition(cand);
        if (seen.insert(canon).second) pool.push_back(std::move(canon));
    };

    add(argmax_partition(state));

    // Average-linkage agglomeration of the dissimilarity 1 - C; every merge
    // height contributes one cut.
    Matrix<double> dist(I, I, 0.0);
    for (std::size_t i = 0; i < I; ++i)
        for (std::size_t j = 0; j < I; ++j)
            if (i != j) dist(i, j) = 1.0 - C.prob(i, j);

    std::vector<int> cluster_of(I);
    std::iota(cluster_of.begin(), cluster_of.end(), 0);
    std::vector<std::size_t> size(I, 1);
    std::vector<char> active(I, 1);
    Labels cut(I);

    for (std::size_t merges = 0; merges + 1 < I; ++merges) {
        std::size_t best_a = I, best_b = I;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < I; ++a) {
            if (!active[a]) continue;
            for (std::size_t b = a + 1; b < I; ++b) {
                if (!active[b]) continue;
                if (dist(a, b) < best_d) {
                    best_d = dist(a, b);
                    best_a = a;
                    best_b = b;
                }
            }
        }

        active[best_b] = 0;
        for (std::size_t c = 0; c < I; ++c) {
            if (!active[c] || c == best_a) continue;
            const double merged =
                (static_cast<double>(size[best_a]) * dist(best_a, c) +
                 static_cast<double>(size[best_b]) * dist(best_b, c)) /
                static_cast<double>(size[best_a] + size[best_b]);
            dist(best_a, c) = merged;
            dist(c, best_a) = merged;
        }
        size[best_a] += size[best_b];

        for (std::size_t i = 0; i < I; ++i) {
            if (cluster_of[i] == static_cast<int>(best_b)) cluster_of[i] = static_cast<int>(best_a);
            cut[i] = cluster_of[i];
        }
        add(cut);
    }
    return pool;
}

double adjusted_rand_index(const Labels& p1, const Labels& p2) {
    if (p1.size() != p2.size())
        throw std::invalid_argument("adjusted_rand_index: size mismatch");
    if (p1.empty()) throw std::invalid_argument("adjusted_rand_index: empty partitions");

    std::map<std::pair<int, int>, long long> cells;
    std::map<int, long long> rows, cols;
    for (std::size_t i = 0; i < p1.size(); ++i) {
        ++cells[{p1[i], p2[i]}];
        ++rows[p1[i]];
        ++cols[p2[i]];
    }

    auto comb2 = [](long long x) { return 0.5 * static_cast<double>(x) * static_cast<double>(x - 1); };
    double sum_cells = 0.0, sum_rows = 0.0, sum_cols = 0.0;
    for (const auto& [key, n] : cells) sum_cells += comb2(n);
    for (const auto& [key, n] : rows) sum_rows += comb2(n);
    for (const auto& [key, n] : cols) sum_cols += comb2(n);

    const double total = comb2(static_cast<long long>(p1.size()));
    const double expected = sum_rows * sum_cols / total;
    const double max_index = 0.5 * (sum_rows + sum_cols);
    if (max_index == expected) return 1.0;
    return (sum_cells - expected) / (max_index - expected);
}

namespace {

void check_no_leakage(const Network& net, const std::vector<Dyad>& pairs, bool allow_unmasked) {
    for (const Dyad& d : pairs) {
        if (d.first == d.second || d.first < 0 || d.second >= net.node_count())
            throw std::invalid_argument("predict_links: invalid dyad");
        if (!allow_unmasked && !net.is_masked(d.first, d.second))
            throw ConfigError("predict_links: dyad (" + std::to_string(d.first + 1) + "," +
                              std::to_string(d.second + 1) +
                              ") was observed during fitting; mask it or pass the "
                              "in-sample override");
    }
}

}  // namespace

std::vector<double> predict_links(const Network& net, const McmcTrace& trace,
                                  const std::vector<Dyad>& pairs, bool allow_unmasked) {
    check_no_leakage(net, pairs, allow_unmasked);
    if (trace.labels.empty() || trace.theta.empty())
        throw ConfigError("predict_links: trace has no retained samples");

    std::vector<double> probs(pairs.size(), 0.0);
    const auto S = trace.labels.size();
    for (std::size_t s = 0; s < S; ++s) {
        const Labels& xi = trace.labels[s];
        const UpperTri<double>& theta = trace.theta[s];
        for (std::size_t p = 0; p < pairs.size(); ++p) {
            const int ki = xi[static_cast<std::size_t>(pairs[p].first)];
            const int kj = xi[static_cast<std::size_t>(pairs[p].second)];
            probs[p] += theta.at_pair(ki, kj);
        }
    }
    for (double& p : probs) p /= static_cast<double>(S);
    return probs;
}

std::vector<double> predict_links(const Network& net, const VarState& state,
                                  const std::vector<Dyad>& pairs, bool allow_unmasked) {
    check_no_leakage(net, pairs, allow_unmasked);
    const int K = state.block_count();

    UpperTri<double> mean(K);
    for (int k = 0; k < K; ++k)
        for (int l = k; l < K; ++l)
            mean(k, l) = state.var_a(k, l) / (state.var_a(k, l) + state.var_b(k, l));

    std::vector<double> probs(pairs.size(), 0.0);
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        const std::span<const double> qi{state.soft.row(pairs[p].first),
                                         static_cast<std::size_t>(K)};
        const std::span<const double> qj{state.soft.row(pairs[p].second),
                                         static_cast<std::size_t>(K)};
        double lambda = 0.0;
        for (int k = 0; k < K; ++k)
            for (int l = k; l < K; ++l)
                lambda += responsibility(qi, qj, k, l) * mean(k, l);
        probs[p] = lambda;
    }
    return probs;
}

RocResult roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw std::invalid_argument("roc_auc: size mismatch");

    std::size_t n_pos = 0, n_neg = 0;
    for (int y : labels) {
        if (y != 0 && y != 1) throw std::invalid_argument("roc_auc: labels must be 0/1");
        if (y == 1) ++n_pos; else ++n_neg;
    }
    if (n_pos == 0 || n_neg == 0)
        throw ConfigError("roc_auc: need both classes to define the curve");

    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    const double inf = std::numeric_limits<double>::infinity();
    RocResult roc;
    roc.thresholds.push_back(inf);
    roc.fpr.push_back(0.0);
    roc.tpr.push_back(0.0);

    std::size_t tp = 0, fp = 0, at = 0;
    while (at < idx.size()) {
        const double t = scores[idx[at]];
        while (at < idx.size() && scores[idx[at]] == t) {
            if (labels[idx[at]] == 1) ++tp; else ++fp;
            ++at;
        }
        roc.thresholds.push_back(t);
        roc.fpr.push_back(static_cast<double>(fp) / static_cast<double>(n_neg));
        roc.tpr.push_back(static_cast<double>(tp) / static_cast<double>(n_pos));
    }
    roc.thresholds.push_back(-inf);
    roc.fpr.push_back(1.0);
    roc.tpr.push_back(1.0);

    double auc = 0.0;
    for (std::size_t p = 1; p < roc.fpr.size(); ++p)
        auc += (roc.fpr[p] - roc.fpr[p - 1]) * 0.5 * (roc.tpr[p] + roc.tpr[p - 1]);
    roc.auc = auc;
    return roc;
}

std::vector<NodeId> heatmap_order(const Network& net, const Labels& partition) {
    if (partition.size() != static_cast<std::size_t>(net.node_count()))
        throw std::invalid_argument("heatmap_order: size mismatch");

    std::vector<NodeId> order(partition.size());
    std::iota(order.begin(), order.end(), NodeId{0});
    std::sort(order.begin(), order.end(), [&](NodeId u, NodeId v) {
        const auto lu = partition[static_cast<std::size_t>(u)];
        const auto lv = partition[static_cast<std::size_t>(v)];
        if (lu != lv) return lu < lv;
        const auto du = net.neighbors(u).size();
        const auto dv = net.neighbors(v).size();
        if (du != dv) return du > dv;
        return u < v;
    });
    return order;
}

void write_cocluster_csv(const CoclusterMatrix& C, const std::string& path,
                         const std::vector<NodeId>* order) {
    check_square(C);
    const auto I = C.prob.rows();
    if (order && order->size() != I)
        throw std::invalid_argument("write_cocluster_csv: order size mismatch");

    std::ofstream out = open_output(path);
    for (std::size_t r = 0; r < I; ++r) {
        const auto i = order ? static_cast<std::size_t>((*order)[r]) : r;
        for (std::size_t c = 0; c < I; ++c) {
            const auto j = order ? static_cast<std::size_t>((*order)[c]) : c;
            if (c > 0) out << ',';
            out << C.prob(i, j);
        }
        out << '\n';
    }
}

void write_cocluster_triplets(const CoclusterMatrix& C, const std::string& path,
                              double min_prob) {
    check_square(C);
    const auto I = C.prob.rows();
    std::ofstream out = open_output(path);
    out << "i,j,p\n";
    for (std::size_t i = 0; i < I; ++i)
        for (std::size_t j = i + 1; j < I; ++j)
            if (C.prob(i, j) >= min_prob)
                out << (i + 1) << ',' << (j + 1) << ',' << C.prob(i, j) << '\n';
}

void write_roc_csv(const RocResult& roc, const std::string& path) {
    std::ofstream out = open_output(path);
    out << "fpr,tpr,threshold\n";
    for (std::size_t p = 0; p < roc.thresholds.size(); ++p)
        out << roc.fpr[p] << ',' << roc.tpr[p] << ',' << roc.thresholds[p] << '\n';
}

}  // namespace sbm
