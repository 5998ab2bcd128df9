#include "sbmkit/gibbs.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

namespace sbm {

void McmcConfig::validate() const {
    if (iterations <= 0) throw ConfigError("mcmc: iterations must be positive");
    if (burn_in < 0 || burn_in >= iterations)
        throw ConfigError("mcmc: burn_in must lie in [0, iterations)");
    if (thin <= 0) throw ConfigError("mcmc: thin must be positive");
    if (n_chains <= 0) throw ConfigError("mcmc: n_chains must be positive");
    if (retained() < 1)
        throw ConfigError("mcmc: no samples retained; lower thin or burn_in");
}

double McmcTrace::mean_log_joint_post_burnin() const {
    if (static_cast<int>(log_joint.size()) <= burn_in) return 0.0;
    const double sum = std::accumulate(log_joint.begin() + burn_in, log_joint.end(), 0.0);
    return sum / static_cast<double>(log_joint.size() - static_cast<std::size_t>(burn_in));
}

namespace {

void sample_weights(const SufficientStats& stats, const Hyperparams& hp,
                    std::vector<double>& w, Rng& rng) {
    const int K = static_cast<int>(w.size());
    std::vector<double> conc(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k)
        conc[static_cast<std::size_t>(k)] =
            hp.alpha / K + static_cast<double>(stats.m(k));
    rng.dirichlet(conc, w);
}

void sample_theta(const SufficientStats& stats, const Hyperparams& hp,
                  UpperTri<double>& theta, Rng& rng) {
    const int K = theta.dim();
    for (int k = 0; k < K; ++k)
        for (int l = k; l < K; ++l) {
            const auto s = static_cast<double>(stats.s(k, l));
            const auto n = static_cast<double>(stats.n(k, l));
            theta(k, l) = rng.beta(hp.a + s, hp.b + n - s);
        }
}

/// One label draw from the full conditional, using per-block neighbor counts.
void sample_label(const Network& net, const Hyperparams& hp, GibbsState& state,
                  const Matrix<double>& log_theta, const Matrix<double>& log_1m_theta,
                  NodeId i, std::vector<int>& edge_in_block,
                  std::vector<int>& masked_in_block, std::vector<double>& log_prob,
                  Rng& rng) {
    const int K = hp.K;
    std::fill(edge_in_block.begin(), edge_in_block.end(), 0);
    std::fill(masked_in_block.begin(), masked_in_block.end(), 0);
    for (NodeId j : net.neighbors(i))
        ++edge_in_block[static_cast<std::size_t>(state.labels[static_cast<std::size_t>(j)])];
    for (NodeId j : net.masked_partners(i))
        ++masked_in_block[static_cast<std::size_t>(state.labels[static_cast<std::size_t>(j)])];

    const int self = state.labels[static_cast<std::size_t>(i)];
    for (int k = 0; k < K; ++k) {
        double lp = std::log(state.w[static_cast<std::size_t>(k)]);
        for (int l = 0; l < K; ++l) {
            const auto e = static_cast<double>(edge_in_block[static_cast<std::size_t>(l)]);
            double obs = static_cast<double>(state.stats.m(l)) -
                         static_cast<double>(masked_in_block[static_cast<std::size_t>(l)]);
            if (l == self) obs -= 1.0;
            lp += e * log_theta(l, k) + (obs - e) * log_1m_theta(l, k);
        }
        log_prob[static_cast<std::size_t>(k)] = lp;
    }
    const int k_new = rng.categorical_from_log(log_prob);
    if (k_new != self) state.stats.move_node(net, state.labels, i, k_new);
}

void fill_log_theta(const UpperTri<double>& theta, Matrix<double>& log_theta,
                    Matrix<double>& log_1m_theta) {
    const int K = theta.dim();
    for (int k = 0; k < K; ++k)
        for (int l = k; l < K; ++l) {
            const double t = theta(k, l);
            const double lt = std::log(t);
            const double l1t = std::log1p(-t);
            log_theta(k, l) = lt;
            log_theta(l, k) = lt;
            log_1m_theta(k, l) = l1t;
            log_1m_theta(l, k) = l1t;
        }
}

McmcTrace run_chain(const Network& net, const Hyperparams& hp, const McmcConfig& config,
                    int chain) {
    const auto t0 = std::chrono::steady_clock::now();
    const int K = hp.K;
    Rng rng(config.seed, static_cast<std::uint64_t>(chain));
    GibbsState state = init_gibbs_state(net, hp, rng);

    McmcTrace trace;
    trace.hp = hp;
    trace.seed = config.seed;
    trace.chain_index = chain;
    trace.iterations = config.iterations;
    trace.burn_in = config.burn_in;
    trace.thin = config.thin;
    trace.labels.reserve(static_cast<std::size_t>(config.retained()));
    trace.theta.reserve(static_cast<std::size_t>(config.retained()));
    trace.w.reserve(static_cast<std::size_t>(config.retained()));
    trace.log_joint.reserve(static_cast<std::size_t>(config.iterations));

    Matrix<double> log_theta(K, K), log_1m_theta(K, K);
    std::vector<int> edge_in_block(static_cast<std::size_t>(K));
    std::vector<int> masked_in_block(static_cast<std::size_t>(K));
    std::vector<double> log_prob(static_cast<std::size_t>(K));

    for (int t = 1; t <= config.iterations; ++t) {
        sample_weights(state.stats, hp, state.w, rng);
        sample_theta(state.stats, hp, state.theta, rng);
        fill_log_theta(state.theta, log_theta, log_1m_theta);
        for (NodeId i = 0; i < net.node_count(); ++i)
            sample_label(net, hp, state, log_theta, log_1m_theta, i,
                         edge_in_block, masked_in_block, log_prob, rng);

        trace.log_joint.push_back(log_joint(state.stats, state.theta, state.w, hp));
        if (t > config.burn_in && (t - config.burn_in) % config.thin == 0) {
            trace.labels.push_back(state.labels);
            trace.theta.push_back(state.theta);
            trace.w.push_back(state.w);
        }
    }
    trace.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return trace;
}

}  // namespace

GibbsState init_gibbs_state(const Network& net, const Hyperparams& hp, Rng& rng) {
    hp.validate();
    GibbsState state;
    state.labels.resize(static_cast<std::size_t>(net.node_count()));
    for (auto& k : state.labels) k = static_cast<int>(rng.below(static_cast<std::uint64_t>(hp.K)));
    state.stats = SufficientStats(net, state.labels, hp.K);
    state.theta = UpperTri<double>(hp.K);
    state.w.resize(static_cast<std::size_t>(hp.K));
    const std::vector<double> prior_conc(static_cast<std::size_t>(hp.K), hp.alpha / hp.K);
    rng.dirichlet(prior_conc, state.w);
    for (int k = 0; k < hp.K; ++k)
        for (int l = k; l < hp.K; ++l) state.theta(k, l) = rng.beta(hp.a, hp.b);
    return state;
}

void gibbs_scan(const Network& net, const Hyperparams& hp, GibbsState& state, Rng& rng) {
    const int K = hp.K;
    Matrix<double> log_theta(K, K), log_1m_theta(K, K);
    std::vector<int> edge_in_block(static_cast<std::size_t>(K));
    std::vector<int> masked_in_block(static_cast<std::size_t>(K));
    std::vector<double> log_prob(static_cast<std::size_t>(K));
    sample_weights(state.stats, hp, state.w, rng);
    sample_theta(state.stats, hp, state.theta, rng);
    fill_log_theta(state.theta, log_theta, log_1m_theta);
    for (NodeId i = 0; i < net.node_count(); ++i)
        sample_label(net, hp, state, log_theta, log_1m_theta, i, edge_in_block,
                     masked_in_block, log_prob, rng);
}

McmcTrace run_gibbs(const Network& net, const Hyperparams& hp, const McmcConfig& config) {
    hp.validate();
    config.validate();
    McmcTrace best;
    std::vector<double> means;
    means.reserve(static_cast<std::size_t>(config.n_chains));
    for (int c = 0; c < config.n_chains; ++c) {
        McmcTrace trace = run_chain(net, hp, config, c);
        means.push_back(trace.mean_log_joint_post_burnin());
        if (c == 0 || means.back() > best.mean_log_joint_post_burnin())
            best = std::move(trace);
    }
    best.chain_mean_log_joint = std::move(means);
    return best;
}

}  // namespace sbm
