#include "sbmkit/cavi.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>

#include "sbmkit/special.hpp"

namespace sbm {

void VarState::refresh_caches() {
    const int K = block_count();
    colsum.assign(static_cast<std::size_t>(K), 0.0);
    vsum.assign(static_cast<std::size_t>(K), 0.0);
    for (NodeId i = 0; i < node_count(); ++i) {
        const double* q = soft.row(i);
        for (int k = 0; k < K; ++k) {
            colsum[static_cast<std::size_t>(k)] += q[k];
            vsum[static_cast<std::size_t>(k)] += q[k] * (1.0 - q[k]);
        }
    }
}

double responsibility(std::span<const double> qi, std::span<const double> qj, int k, int l) {
    if (k > l) throw std::invalid_argument("responsibility requires k <= l");
    const auto uk = static_cast<std::size_t>(k);
    const auto ul = static_cast<std::size_t>(l);
    if (k == l) return qi[uk] * qj[uk];
    return qi[uk] * qj[ul] + qi[ul] * qj[uk];
}

GlobalSums responsibility_sums(const Network& net, const Matrix<double>& soft,
                               const std::vector<NodeId>* batch) {
    const int K = soft.cols();
    const NodeId I = static_cast<NodeId>(soft.rows());

    std::vector<char> in_batch;
    if (batch) {
        in_batch.assign(static_cast<std::size_t>(I), 0);
        for (NodeId i : *batch) in_batch[static_cast<std::size_t>(i)] = 1;
    }

    Matrix<double> directed(K, K);
    directed.fill(0.0);
    std::vector<double> nbr(static_cast<std::size_t>(K));
    std::vector<double> sc(static_cast<std::size_t>(K), 0.0);
    UpperTri<double> gram(K);
    gram.fill(0.0);

    auto accumulate_node = [&](NodeId i) {
        const double* qi = soft.row(i);
        for (int k = 0; k < K; ++k) {
            sc[static_cast<std::size_t>(k)] += qi[k];
            for (int l = k; l < K; ++l) gram(k, l) += qi[k] * qi[l];
        }
        std::fill(nbr.begin(), nbr.end(), 0.0);
        for (NodeId j : net.neighbors(i)) {
            if (batch && !in_batch[static_cast<std::size_t>(j)]) continue;
            const double* qj = soft.row(j);
            for (int k = 0; k < K; ++k) nbr[static_cast<std::size_t>(k)] += qj[k];
        }
        for (int k = 0; k < K; ++k) {
            double* drow = directed.row(k);
            const double qik = qi[k];
            if (qik == 0.0) continue;
            for (int l = 0; l < K; ++l) drow[l] += qik * nbr[static_cast<std::size_t>(l)];
        }
    };

    std::int64_t batch_size = 0;
    if (batch) {
        batch_size = static_cast<std::int64_t>(batch->size());
        for (NodeId i : *batch) accumulate_node(i);
    } else {
        batch_size = I;
        for (NodeId i = 0; i < I; ++i) accumulate_node(i);
    }

    GlobalSums sums;
    sums.edge = UpperTri<double>(K);
    sums.nonedge = UpperTri<double>(K);

    // All-dyad responsibility totals from column sums, then strip the masked
    // pairs and the edges to leave the observed non-edges.
    UpperTri<double> all_pairs(K);
    for (int k = 0; k < K; ++k) {
        all_pairs(k, k) = 0.5 * (sc[static_cast<std::size_t>(k)] * sc[static_cast<std::size_t>(k)] -
                                 gram(k, k));
        for (int l = k + 1; l < K; ++l)
            all_pairs(k, l) =
                sc[static_cast<std::size_t>(k)] * sc[static_cast<std::size_t>(l)] - gram(k, l);
    }

    std::int64_t masked_in_batch = 0;
    for (const Dyad& d : net.masked_dyads()) {
        if (batch && (!in_batch[static_cast<std::size_t>(d.first)] ||
                      !in_batch[static_cast<std::size_t>(d.second)]))
            continue;
        ++masked_in_batch;
        const double* qi = soft.row(d.first);
        const double* qj = soft.row(d.second);
        for (int k = 0; k < K; ++k) {
            all_pairs(k, k) -= qi[k] * qj[k];
            for (int l = k + 1; l < K; ++l) all_pairs(k, l) -= qi[k] * qj[l] + qi[l] * qj[k];
        }
    }

    for (int k = 0; k < K; ++k) {
        sums.edge(k, k) = 0.5 * directed(k, k);
        for (int l = k + 1; l < K; ++l) sums.edge(k, l) = directed(k, l);
    }
    for (int k = 0; k < K; ++k)
        for (int l = k; l < K; ++l)
            sums.nonedge(k, l) = std::max(0.0, all_pairs(k, l) - sums.edge(k, l));

    sums.observed_dyads = batch_size * (batch_size - 1) / 2 - masked_in_batch;
    return sums;
}

void update_global(const Network& net, const Hyperparams& hp, VarState& state) {
    const GlobalSums sums = responsibility_sums(net, state.soft, nullptr);
    const int K = hp.K;
    for (int k = 0; k < K; ++k)
        for (int l = k; l < K; ++l) {
            state.var_a(k, l) = hp.a + sums.edge(k, l);
            state.var_b(k, l) = hp.b + sums.nonedge(k, l);
        }
}

VarState init_var_state(const Network& net, const Hyperparams& hp, Rng& rng) {
    hp.validate();
    VarState state;
    const NodeId I = net.node_count();
    const int K = hp.K;
    state.soft = Matrix<double>(static_cast<int>(I), K);
    const std::vector<double> ones(static_cast<std::size_t>(K), 1.0);
    std::vector<double> row(static_cast<std::size_t>(K));
    for (NodeId i = 0; i < I; ++i) {
        rng.dirichlet(ones, row);
        std::copy(row.begin(), row.end(), state.soft.row(i));
    }
    state.var_a = UpperTri<double>(K);
    state.var_b = UpperTri<double>(K);
    state.refresh_caches();
    update_global(net, hp, state);
    return state;
}

void LocalWorkspace::refresh(const Hyperparams& hp, const VarState& state) {
    const int K = hp.K;
    if (x1.rows() != static_cast<std::size_t>(K)) {
        x1 = Matrix<double>(K, K);
        x2 = Matrix<double>(K, K);
        nbr_sum.resize(static_cast<std::size_t>(K));
        non_sum.resize(static_cast<std::size_t>(K));
        masked_sum.resize(static_cast<std::size_t>(K));
        logit.resize(static_cast<std::size_t>(K));
    }
    for (int k = 0; k < K; ++k)
        for (int l = k; l < K; ++l) {
            const double a = state.var_a(k, l);
            const double b = state.var_b(k, l);
            const double dab = digamma(a + b);
            const double v1 = digamma(a) - dab;
            const double v2 = digamma(b) - dab;
            x1(k, l) = v1;
            x1(l, k) = v1;
            x2(k, l) = v2;
            x2(l, k) = v2;
        }
}

namespace {

constexpr double kDeltaGuard = 1e-8;

}  // namespace

void apply_soft_row(VarState& state, NodeId i, std::vector<double>& logit,
                    std::vector<double>* extra_colsum) {
    const int K = state.block_count();
    double* q = state.soft.row(i);
    const double lse = log_sum_exp(logit);
    double total = 0.0;
    for (int k = 0; k < K; ++k) {
        logit[static_cast<std::size_t>(k)] =
            std::exp(logit[static_cast<std::size_t>(k)] - lse);
        total += logit[static_cast<std::size_t>(k)];
    }
    for (int k = 0; k < K; ++k) {
        const auto uk = static_cast<std::size_t>(k);
        const double v = logit[uk] / total;
        const double dq = v - q[k];
        state.colsum[uk] += dq;
        state.vsum[uk] += v * (1.0 - v) - q[k] * (1.0 - q[k]);
        if (extra_colsum) (*extra_colsum)[uk] += dq;
        q[k] = v;
    }
}

void update_local(const Network& net, const Hyperparams& hp, VarState& state, NodeId i,
                  LocalWorkspace& ws, double likelihood_scale,
                  const std::vector<char>* in_batch, std::vector<double>* batch_colsum) {
    const int K = hp.K;
    const double* qi = state.soft.row(i);

    std::fill(ws.nbr_sum.begin(), ws.nbr_sum.end(), 0.0);
    for (NodeId j : net.neighbors(i)) {
        if (in_batch && !(*in_batch)[static_cast<std::size_t>(j)]) continue;
        const double* qj = state.soft.row(j);
        for (int k = 0; k < K; ++k) ws.nbr_sum[static_cast<std::size_t>(k)] += qj[k];
    }
    std::fill(ws.masked_sum.begin(), ws.masked_sum.end(), 0.0);
    for (NodeId j : net.masked_partners(i)) {
        if (in_batch && !(*in_batch)[static_cast<std::size_t>(j)]) continue;
        const double* qj = state.soft.row(j);
        for (int k = 0; k < K; ++k) ws.masked_sum[static_cast<std::size_t>(k)] += qj[k];
    }
    const std::vector<double>& data_colsum = batch_colsum ? *batch_colsum : state.colsum;
    for (int k = 0; k < K; ++k) {
        const auto uk = static_cast<std::size_t>(k);
        ws.non_sum[uk] = std::max(
            0.0, data_colsum[uk] - qi[k] - ws.masked_sum[uk] - ws.nbr_sum[uk]);
    }

    for (int k = 0; k < K; ++k) {
        const auto uk = static_cast<std::size_t>(k);
        const double* x1row = ws.x1.row(k);
        const double* x2row = ws.x2.row(k);
        double lik = 0.0;
        for (int l = 0; l < K; ++l) {
            const auto ul = static_cast<std::size_t>(l);
            lik += x1row[l] * ws.nbr_sum[ul] + x2row[l] * ws.non_sum[ul];
        }
        const double col_minus = std::max(0.0, state.colsum[uk] - qi[k]);
        double prior = std::log(col_minus + hp.alpha / K);
        if (col_minus >= kDeltaGuard) {
            const double var_minus =
                std::max(0.0, state.vsum[uk] - qi[k] * (1.0 - qi[k]));
            prior -= 0.5 * var_minus / (col_minus * col_minus);
        }
        ws.logit[uk] = likelihood_scale * lik + prior;
    }
    apply_soft_row(state, i, ws.logit, batch_colsum);
}

void update_local(const Network& net, const Hyperparams& hp, VarState& state, NodeId i) {
    LocalWorkspace ws;
    ws.refresh(hp, state);
    update_local(net, hp, state, i, ws);
}

namespace {

double xi_prior_term(const Hyperparams& hp, std::span<const double> colsum,
                     std::span<const double> vsum, NodeId I) {
    const int K = hp.K;
    double term = log_gamma(hp.alpha) - log_gamma(static_cast<double>(I) + hp.alpha) -
                  K * log_gamma(hp.alpha / K);
    for (int k = 0; k < K; ++k) {
        const double s = colsum[static_cast<std::size_t>(k)] + hp.alpha / K;
        term += log_gamma(s) + 0.5 * trigamma(s) * vsum[static_cast<std::size_t>(k)];
    }
    return term;
}

double label_entropy(const Matrix<double>& soft) {
    double h = 0.0;
    for (std::size_t i = 0; i < soft.rows(); ++i) {
        const double* q = soft.row(i);
        for (std::size_t k = 0; k < soft.cols(); ++k)
            if (q[k] > 0.0) h -= q[k] * std::log(q[k]);
    }
    return h;
}

struct ElboParts {
    double e_loglik = 0.0;
    double theta_terms = 0.0;  // E[log p(Theta)] + H[q(Theta)]
    double xi_prior = 0.0;     // E[log p(xi)], Delta approximated
    double xi_entropy = 0.0;
    double theta_entropy = 0.0;

    double total() const { return e_loglik + theta_terms + xi_prior + xi_entropy; }
};

ElboParts elbo_parts(const Network& net, const Hyperparams& hp, const VarState& state) {
    ElboParts parts;
    const int K = hp.K;
    const GlobalSums sums = responsibility_sums(net, state.soft, nullptr);
    for (int k = 0; k < K; ++k)
        for (int l = k; l < K; ++l) {
            const double a = state.var_a(k, l);
            const double b = state.var_b(k, l);
            const double dab = digamma(a + b);
            const double e1 = digamma(a) - dab;
            const double e2 = digamma(b) - dab;
            parts.e_loglik += sums.edge(k, l) * e1 + sums.nonedge(k, l) * e2;
            const double h = beta_entropy(a, b);
            parts.theta_entropy += h;
            parts.theta_terms +=
                -log_beta(hp.a, hp.b) + (hp.a - 1.0) * e1 + (hp.b - 1.0) * e2 + h;
        }
    std::vector<double> colsum(static_cast<std::size_t>(K), 0.0);
    std::vector<double> vsum(static_cast<std::size_t>(K), 0.0);
    for (NodeId i = 0; i < state.node_count(); ++i) {
        const double* q = state.soft.row(i);
        for (int k = 0; k < K; ++k) {
            colsum[static_cast<std::size_t>(k)] += q[k];
            vsum[static_cast<std::size_t>(k)] += q[k] * (1.0 - q[k]);
        }
    }
    parts.xi_prior = xi_prior_term(hp, colsum, vsum, net.node_count());
    parts.xi_entropy = label_entropy(state.soft);
    return parts;
}

}  // namespace

double elbo(const Network& net, const Hyperparams& hp, const VarState& state) {
    return elbo_parts(net, hp, state).total();
}

double elbo_display(const Network& net, const Hyperparams& hp, const VarState& state) {
    const int K = hp.K;
    double f = 0.5 * K * (K + 1) *
               (log_gamma(hp.a + hp.b) - log_gamma(hp.a) - log_gamma(hp.b));
    for (int k = 0; k < K; ++k)
        for (int l = k; l < K; ++l) {
            const double a = state.var_a(k, l);
            const double b = state.var_b(k, l);
            f += log_gamma(a) + log_gamma(b) - log_gamma(a + b);
        }
    std::vector<double> colsum(static_cast<std::size_t>(K), 0.0);
    std::vector<double> vsum(static_cast<std::size_t>(K), 0.0);
    for (NodeId i = 0; i < state.node_count(); ++i) {
        const double* q = state.soft.row(i);
        for (int k = 0; k < K; ++k) {
            colsum[static_cast<std::size_t>(k)] += q[k];
            vsum[static_cast<std::size_t>(k)] += q[k] * (1.0 - q[k]);
        }
    }
    f += xi_prior_term(hp, colsum, vsum, net.node_count());
    f += label_entropy(state.soft);
    return f;
}

double expected_log_likelihood(const Network& net, const Hyperparams& hp,
                               const VarState& state) {
    return elbo_parts(net, hp, state).e_loglik;
}

double expected_log_joint(const Network& net, const Hyperparams& hp, const VarState& state) {
    const ElboParts parts = elbo_parts(net, hp, state);
    return parts.total() - parts.xi_entropy - parts.theta_entropy;
}

Labels argmax_partition(const VarState& state) {
    const auto I = state.soft.rows();
    const auto K = state.soft.cols();
    Labels labels(I, 0);
    for (std::size_t i = 0; i < I; ++i) {
        const double* q = state.soft.row(i);
        std::size_t best = 0;
        for (std::size_t k = 1; k < K; ++k)
            if (q[k] > q[best]) best = k;
        labels[i] = static_cast<int>(best);
    }
    return labels;
}

void CaviConfig::validate() const {
    if (!(rel_tol > 0.0)) throw ConfigError("cavi: rel_tol must be positive");
    if (max_sweeps <= 0) throw ConfigError("cavi: max_sweeps must be positive");
    if (n_restarts <= 0) throw ConfigError("cavi: n_restarts must be positive");
    if (jobs <= 0) throw ConfigError("cavi: jobs must be positive");
}

namespace {

VarFit run_cavi_single(const Network& net, const Hyperparams& hp, const CaviConfig& cfg,
                       int restart) {
    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&t0] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    Rng rng(cfg.seed, static_cast<std::uint64_t>(restart));
    VarFit fit;
    fit.state = init_var_state(net, hp, rng);
    fit.record.engine = "cavi";
    fit.record.best_restart = restart;

    LocalWorkspace ws;
    ws.refresh(hp, fit.state);
    double prev = elbo(net, hp, fit.state);
    fit.state.elbo_trace.push_back(prev);
    fit.record.elbo_trace.push_back(prev);
    fit.record.elapsed_trace.push_back(elapsed());

    for (int sweep = 1; sweep <= cfg.max_sweeps; ++sweep) {
        fit.state.refresh_caches();
        for (NodeId i = 0; i < net.node_count(); ++i)
            update_local(net, hp, fit.state, i, ws);
        update_global(net, hp, fit.state);
        ws.refresh(hp, fit.state);

        const double f = elbo(net, hp, fit.state);
        fit.state.elbo_trace.push_back(f);
        fit.record.elbo_trace.push_back(f);
        fit.record.elapsed_trace.push_back(elapsed());
        fit.record.sweeps = sweep;

        const double denom = std::max(std::abs(prev), 1e-12);
        if (std::abs(f - prev) / denom < cfg.rel_tol) {
            fit.record.converged = true;
            prev = f;
            break;
        }
        prev = f;
    }
    fit.record.final_elbo = prev;
    fit.record.final_expected_joint = expected_log_joint(net, hp, fit.state);
    fit.record.seconds = elapsed();
    return fit;
}

}  // namespace

VarFit best_of_restarts(int n_restarts, int jobs, const std::function<VarFit(int)>& single) {
    std::vector<VarFit> fits(static_cast<std::size_t>(n_restarts));
    const int workers = std::min(jobs, n_restarts);
    if (workers <= 1) {
        for (int r = 0; r < n_restarts; ++r) fits[static_cast<std::size_t>(r)] = single(r);
    } else {
        std::atomic<int> next{0};
        auto worker = [&] {
            for (;;) {
                const int r = next.fetch_add(1);
                if (r >= n_restarts) return;
                fits[static_cast<std::size_t>(r)] = single(r);
            }
        };
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    int best = 0;
    std::vector<double> elbos, joints;
    std::vector<Labels> partitions;
    elbos.reserve(fits.size());
    joints.reserve(fits.size());
    partitions.reserve(fits.size());
    for (int r = 0; r < n_restarts; ++r) {
        const VarFit& fit = fits[static_cast<std::size_t>(r)];
        elbos.push_back(fit.record.final_elbo);
        joints.push_back(fit.record.final_expected_joint);
        partitions.push_back(argmax_partition(fit.state));
        if (fit.record.final_elbo > fits[static_cast<std::size_t>(best)].record.final_elbo)
            best = r;
    }

    VarFit result = std::move(fits[static_cast<std::size_t>(best)]);
    result.record.best_restart = best;
    result.record.restart_final_elbos = std::move(elbos);
    result.record.restart_expected_joints = std::move(joints);
    result.record.restart_partitions = std::move(partitions);
    return result;
}

VarFit run_cavi(const Network& net, const Hyperparams& hp, const CaviConfig& cfg) {
    hp.validate();
    cfg.validate();
    return best_of_restarts(cfg.n_restarts, cfg.jobs,
                            [&](int r) { return run_cavi_single(net, hp, cfg, r); });
}

}  // namespace sbm
