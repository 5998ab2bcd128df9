#include "sbmkit/sgvb.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "sbmkit/special.hpp"

namespace sbm {

int SgvbConfig::batch_size(NodeId node_count) const {
    const auto size = static_cast<int>(std::llround(omega * static_cast<double>(node_count)));
    return std::max(2, std::min(size, static_cast<int>(node_count)));
}

void SgvbConfig::validate() const {
    if (!(omega > 0.0 && omega <= 1.0)) throw ConfigError("sgvb: omega must lie in (0,1]");
    if (!(kappa > 0.5 && kappa <= 1.0))
        throw ConfigError("sgvb: kappa must lie in (0.5,1]");
    if (!(tau >= 0.0)) throw ConfigError("sgvb: tau must be nonnegative");
    if (min_epochs < 1) throw ConfigError("sgvb: min_epochs must be at least 1");
    if (!(rel_tol > 0.0)) throw ConfigError("sgvb: rel_tol must be positive");
    if (max_epochs <= 0 && time_budget_seconds <= 0.0)
        throw ConfigError("sgvb: need max_epochs or a time budget");
    if (n_restarts <= 0) throw ConfigError("sgvb: n_restarts must be positive");
    if (!(elbo_monitor_fraction > 0.0 && elbo_monitor_fraction <= 1.0))
        throw ConfigError("sgvb: elbo_monitor_fraction must lie in (0,1]");
    if (jobs <= 0) throw ConfigError("sgvb: jobs must be positive");
    if (fixed_rho && !(*fixed_rho > 0.0 && *fixed_rho <= 1.0))
        throw ConfigError("sgvb: fixed_rho must lie in (0,1]");
}

double step_size(long long t, double tau, double kappa) {
    if (t < 1) throw std::invalid_argument("step_size: t must be >= 1");
    return std::pow(static_cast<double>(t) + tau, -kappa);
}

double scaling_factor(std::int64_t observed_total, std::int64_t observed_batch) {
    if (observed_batch <= 0)
        throw std::invalid_argument("scaling_factor: batch has no observed dyads");
    return static_cast<double>(observed_total) / static_cast<double>(observed_batch);
}

std::vector<std::vector<NodeId>> epoch_blocks(const std::vector<NodeId>& order, int batch) {
    const auto I = static_cast<int>(order.size());
    const int n_blocks = std::max(1, (I + batch - 1) / batch);
    const int base = I / n_blocks;
    const int extra = I % n_blocks;

    std::vector<std::vector<NodeId>> blocks;
    blocks.reserve(static_cast<std::size_t>(n_blocks));
    auto it = order.begin();
    for (int b = 0; b < n_blocks; ++b) {
        const int size = base + (b < extra ? 1 : 0);
        if (size == 0) continue;
        if (size == 1 && !blocks.empty()) {
            blocks.back().push_back(*it++);
            continue;
        }
        blocks.emplace_back(it, it + size);
        it += size;
    }
    for (auto& block : blocks) std::sort(block.begin(), block.end());
    return blocks;
}

void local_minibatch_update(const Network& net, const Hyperparams& hp, VarState& state,
                            const std::vector<NodeId>& batch_nodes,
                            const std::vector<char>& in_batch, LocalWorkspace& ws) {
    const int K = hp.K;
    const auto I = static_cast<double>(net.node_count());
    const auto S = static_cast<double>(batch_nodes.size());
    const double scale = (I - 1.0) / (S - 1.0);

    std::vector<double> batch_colsum(static_cast<std::size_t>(K), 0.0);
    for (NodeId i : batch_nodes) {
        const double* q = state.soft.row(i);
        for (int k = 0; k < K; ++k) batch_colsum[static_cast<std::size_t>(k)] += q[k];
    }
    for (NodeId i : batch_nodes)
        update_local(net, hp, state, i, ws, scale, &in_batch, &batch_colsum);
}

std::pair<UpperTri<double>, UpperTri<double>> intermediate_global(
    const Network& net, const Hyperparams& hp, const VarState& state,
    const std::vector<NodeId>& batch_nodes, double C) {
    const GlobalSums sums = responsibility_sums(net, state.soft, &batch_nodes);
    const int K = hp.K;
    UpperTri<double> a_hat(K), b_hat(K);
    for (int k = 0; k < K; ++k)
        for (int l = k; l < K; ++l) {
            a_hat(k, l) = hp.a + C * sums.edge(k, l);
            b_hat(k, l) = hp.b + C * sums.nonedge(k, l);
        }
    return {std::move(a_hat), std::move(b_hat)};
}

void sgvb_step(VarState& state, const UpperTri<double>& a_hat, const UpperTri<double>& b_hat,
               double rho) {
    const int K = state.var_a.dim();
    for (int k = 0; k < K; ++k)
        for (int l = k; l < K; ++l) {
            state.var_a(k, l) = (1.0 - rho) * state.var_a(k, l) + rho * a_hat(k, l);
            state.var_b(k, l) = (1.0 - rho) * state.var_b(k, l) + rho * b_hat(k, l);
        }
}

double noisy_elbo(const Network& net, const Hyperparams& hp, const VarState& state,
                  const std::vector<NodeId>& monitor_nodes) {
    const int K = hp.K;
    const GlobalSums monitor = responsibility_sums(net, state.soft, &monitor_nodes);
    const double scale =
        scaling_factor(net.observed_dyad_count(), monitor.observed_dyads);

    double e_loglik = 0.0;
    double theta_terms = 0.0;
    for (int k = 0; k < K; ++k)
        for (int l = k; l < K; ++l) {
            const double a = state.var_a(k, l);
            const double b = state.var_b(k, l);
            const double dab = digamma(a + b);
            const double e1 = digamma(a) - dab;
            const double e2 = digamma(b) - dab;
            e_loglik += monitor.edge(k, l) * e1 + monitor.nonedge(k, l) * e2;
            theta_terms += -log_beta(hp.a, hp.b) + (hp.a - 1.0) * e1 +
                           (hp.b - 1.0) * e2 + beta_entropy(a, b);
        }
    e_loglik *= scale;

    std::vector<double> colsum(static_cast<std::size_t>(K), 0.0);
    std::vector<double> vsum(static_cast<std::size_t>(K), 0.0);
    double entropy = 0.0;
    for (NodeId i = 0; i < state.node_count(); ++i) {
        const double* q = state.soft.row(i);
        for (int k = 0; k < K; ++k) {
            const auto uk = static_cast<std::size_t>(k);
            colsum[uk] += q[k];
            vsum[uk] += q[k] * (1.0 - q[k]);
            if (q[k] > 0.0) entropy -= q[k] * std::log(q[k]);
        }
    }
    double xi_prior = log_gamma(hp.alpha) -
                      log_gamma(static_cast<double>(net.node_count()) + hp.alpha) -
                      K * log_gamma(hp.alpha / K);
    for (int k = 0; k < K; ++k) {
        const double s = colsum[static_cast<std::size_t>(k)] + hp.alpha / K;
        xi_prior += log_gamma(s) + 0.5 * trigamma(s) * vsum[static_cast<std::size_t>(k)];
    }
    return e_loglik + theta_terms + xi_prior + entropy;
}

namespace {

std::int64_t observed_dyads_in(const Network& net, const std::vector<NodeId>& nodes) {
    std::vector<char> flags(static_cast<std::size_t>(net.node_count()), 0);
    for (NodeId i : nodes) flags[static_cast<std::size_t>(i)] = 1;
    std::int64_t masked = 0;
    for (const Dyad& d : net.masked_dyads())
        if (flags[static_cast<std::size_t>(d.first)] &&
            flags[static_cast<std::size_t>(d.second)])
            ++masked;
    const auto n = static_cast<std::int64_t>(nodes.size());
    return n * (n - 1) / 2 - masked;
}

VarFit run_sgvb_single(const Network& net, const Hyperparams& hp, const SgvbConfig& cfg,
                       int restart) {
    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&t0] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    auto out_of_budget = [&] {
        return cfg.time_budget_seconds > 0.0 && elapsed() >= cfg.time_budget_seconds;
    };

    const NodeId I = net.node_count();
    Rng rng(cfg.seed, static_cast<std::uint64_t>(restart));

    VarFit fit;
    fit.state = init_var_state(net, hp, rng);
    fit.record.engine = "sgvb";
    fit.record.best_restart = restart;

    // Fixed monitor subnetwork; falls back to all nodes if the drawn subset
    // carries no observed dyads.
    NodeId monitor_count = static_cast<NodeId>(
        std::llround(cfg.elbo_monitor_fraction * static_cast<double>(I)));
    monitor_count = std::clamp<NodeId>(monitor_count, std::min<NodeId>(2, I), I);
    std::vector<NodeId> monitor_nodes = rng.sample_without_replacement(I, monitor_count);
    if (observed_dyads_in(net, monitor_nodes) == 0) {
        monitor_nodes.resize(static_cast<std::size_t>(I));
        std::iota(monitor_nodes.begin(), monitor_nodes.end(), NodeId{0});
    }

    LocalWorkspace ws;
    ws.refresh(hp, fit.state);

    const int batch = cfg.batch_size(I);
    const std::int64_t observed_total = net.observed_dyad_count();
    std::vector<NodeId> order(static_cast<std::size_t>(I));
    std::iota(order.begin(), order.end(), NodeId{0});
    std::vector<char> in_batch(static_cast<std::size_t>(I), 0);

    long long t = 1;
    double prev_noisy = 0.0;
    bool have_prev = false;
    bool stopped_by_budget = false;

    for (int epoch = 1; cfg.max_epochs <= 0 || epoch <= cfg.max_epochs; ++epoch) {
        if (cfg.reshuffle || epoch == 1) rng.shuffle(order);
        const auto blocks = epoch_blocks(order, batch);
        fit.state.refresh_caches();

        for (const auto& planned : blocks) {
            if (out_of_budget()) {
                stopped_by_budget = true;
                break;
            }
            const std::vector<NodeId>* nodes = &planned;
            std::vector<NodeId> resampled;
            std::int64_t obs_batch = observed_dyads_in(net, *nodes);
            if (obs_batch == 0) {
                resampled = rng.sample_without_replacement(
                    I, static_cast<NodeId>(planned.size()));
                nodes = &resampled;
                obs_batch = observed_dyads_in(net, *nodes);
                if (obs_batch == 0) {
                    ++t;
                    continue;
                }
            }
            std::fill(in_batch.begin(), in_batch.end(), 0);
            for (NodeId i : *nodes) in_batch[static_cast<std::size_t>(i)] = 1;

            local_minibatch_update(net, hp, fit.state, *nodes, in_batch, ws);
            const double C = scaling_factor(observed_total, obs_batch);
            const auto [a_hat, b_hat] = intermediate_global(net, hp, fit.state, *nodes, C);
            const double rho =
                cfg.fixed_rho ? *cfg.fixed_rho : step_size(t, cfg.tau, cfg.kappa);
            sgvb_step(fit.state, a_hat, b_hat, rho);
            ws.refresh(hp, fit.state);
            ++t;
        }
        if (stopped_by_budget) {
            fit.record.budget_exhausted = true;
            fit.record.partial = fit.record.sweeps < cfg.min_epochs;
            break;
        }

        fit.record.sweeps = epoch;
        const double noisy = noisy_elbo(net, hp, fit.state, monitor_nodes);
        fit.state.elbo_trace.push_back(noisy);
        fit.record.elbo_trace.push_back(noisy);
        fit.record.elapsed_trace.push_back(elapsed());
        fit.record.step_trace.push_back(t - 1);

        if (have_prev && epoch >= cfg.min_epochs) {
            const double denom = std::max(std::abs(prev_noisy), 1e-12);
            if (std::abs(noisy - prev_noisy) / denom < cfg.rel_tol) {
                fit.record.converged = true;
                break;
            }
        }
        prev_noisy = noisy;
        have_prev = true;
        if (out_of_budget()) {
            stopped_by_budget = true;
            fit.record.budget_exhausted = true;
            fit.record.partial = fit.record.sweeps < cfg.min_epochs;
            break;
        }
    }

    fit.record.steps = t - 1;
    fit.record.final_elbo = elbo(net, hp, fit.state);
    fit.record.final_expected_joint = expected_log_joint(net, hp, fit.state);
    fit.record.seconds = elapsed();
    return fit;
}

}  // namespace

VarFit run_sgvb(const Network& net, const Hyperparams& hp, const SgvbConfig& cfg) {
    hp.validate();
    cfg.validate();
    if (net.node_count() < 2) throw ConfigError("sgvb: need at least two nodes");
    return best_of_restarts(cfg.n_restarts, cfg.jobs,
                            [&](int r) { return run_sgvb_single(net, hp, cfg, r); });
}

}  // namespace sbm
