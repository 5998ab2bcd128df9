#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "oracles.hpp"
#include "sbmkit/cavi.hpp"
#include "sbmkit/generator.hpp"
#include "sbmkit/special.hpp"

using namespace sbm;

namespace {

Network planted(NodeId half, double within, double between, std::uint64_t seed) {
    GeneratorSpec spec;
    spec.block_sizes = {half, half};
    spec.node_count = 2 * half;
    spec.theta = UpperTri<double>(2);
    spec.theta(0, 0) = within;
    spec.theta(1, 1) = within;
    spec.theta(0, 1) = between;
    spec.seed = seed;
    return generate(spec).first;
}

VarState random_state(const Network& net, const Hyperparams& hp, std::uint64_t seed) {
    Rng rng(seed);
    return init_var_state(net, hp, rng);
}

// Entropy of the variational posterior, assembled directly.
double state_entropy(const VarState& st) {
    double h = 0.0;
    for (NodeId i = 0; i < st.node_count(); ++i)
        for (int k = 0; k < st.block_count(); ++k) {
            const double q = st.soft(static_cast<std::size_t>(i), static_cast<std::size_t>(k));
            if (q > 0.0) h -= q * std::log(q);
        }
    for (int k = 0; k < st.block_count(); ++k)
        for (int l = k; l < st.block_count(); ++l)
            h += beta_entropy(st.var_a(k, l), st.var_b(k, l));
    return h;
}

VarState permuted_blocks(const VarState& st, const std::vector<int>& perm) {
    VarState out = st;
    for (NodeId i = 0; i < st.node_count(); ++i)
        for (int k = 0; k < st.block_count(); ++k)
            out.soft(static_cast<std::size_t>(i), static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])) =
                st.soft(static_cast<std::size_t>(i), static_cast<std::size_t>(k));
    for (int k = 0; k < st.block_count(); ++k)
        for (int l = k; l < st.block_count(); ++l) {
            out.var_a.at_pair(perm[static_cast<std::size_t>(k)], perm[static_cast<std::size_t>(l)]) = st.var_a(k, l);
            out.var_b.at_pair(perm[static_cast<std::size_t>(k)], perm[static_cast<std::size_t>(l)]) = st.var_b(k, l);
        }
    out.refresh_caches();
    return out;
}

}  // namespace

TEST_CASE("cavi config validation") {
    CaviConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.rel_tol = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = CaviConfig{};
    cfg.n_restarts = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = CaviConfig{};
    cfg.max_sweeps = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("dyad responsibilities: point masses, symmetry, unit total") {
    const std::vector<double> e1{1.0, 0.0};
    CHECK(responsibility(e1, e1, 0, 0) == 1.0);

    const std::vector<double> half{0.5, 0.5};
    CHECK(responsibility(half, half, 0, 0) == doctest::Approx(0.25));
    CHECK(responsibility(half, half, 0, 1) == doctest::Approx(0.5));
    CHECK(responsibility(half, half, 1, 1) == doctest::Approx(0.25));

    Rng rng(71);
    for (int trial = 0; trial < 50; ++trial) {
        const int K = 2 + static_cast<int>(rng.below(4));
        std::vector<double> qi(static_cast<std::size_t>(K)), qj(static_cast<std::size_t>(K));
        rng.dirichlet(std::vector<double>(static_cast<std::size_t>(K), 1.0), qi);
        rng.dirichlet(std::vector<double>(static_cast<std::size_t>(K), 1.0), qj);
        double total = 0.0;
        for (int k = 0; k < K; ++k)
            for (int l = k; l < K; ++l) total += responsibility(qi, qj, k, l);
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("initialization: random rows, one synced global update") {
    const Network net = planted(8, 0.6, 0.1, 3);
    const Hyperparams hp{1.0, 2.0, 1.5, 3};
    const VarState st = random_state(net, hp, 11);
    CHECK(st.node_count() == 16);
    CHECK(st.block_count() == 3);
    for (NodeId i = 0; i < 16; ++i) {
        double rowsum = 0.0;
        for (int k = 0; k < 3; ++k) rowsum += st.soft(static_cast<std::size_t>(i), static_cast<std::size_t>(k));
        CHECK(rowsum == doctest::Approx(1.0).epsilon(1e-12));
    }
    const auto ref = oracle::brute_resp_sums(net, st.soft);
    for (int k = 0; k < 3; ++k)
        for (int l = k; l < 3; ++l) {
            CHECK(st.var_a(k, l) == doctest::Approx(hp.a + ref.edge(k, l)).epsilon(1e-10));
            CHECK(st.var_b(k, l) == doctest::Approx(hp.b + ref.nonedge(k, l)).epsilon(1e-10));
        }
    // distinct seeds must produce genuinely different restarts
    const VarState st2 = random_state(net, hp, 12);
    CHECK(st.soft != st2.soft);
}

TEST_CASE("responsibility sums match the naive double loop") {
    Rng rng(91);
    for (int trial = 0; trial < 8; ++trial) {
        const NodeId I = 8 + static_cast<NodeId>(rng.below(8));
        const int K = 2 + static_cast<int>(rng.below(3));
        std::vector<Dyad> edges, masked;
        for (NodeId i = 0; i < I; ++i)
            for (NodeId j = i + 1; j < I; ++j) {
                if (rng.bernoulli(0.4)) edges.push_back({i, j});
                if (trial % 2 && rng.bernoulli(0.2)) masked.push_back({i, j});
            }
        const Network net(I, edges, masked);
        const Hyperparams hp{1, 1, 1, K};
        const VarState st = random_state(net, hp, 100 + static_cast<std::uint64_t>(trial));

        const auto got_full = responsibility_sums(net, st.soft, nullptr);
        const auto want_full = oracle::brute_resp_sums(net, st.soft);
        CHECK(got_full.observed_dyads == want_full.observed);
        for (int k = 0; k < K; ++k)
            for (int l = k; l < K; ++l) {
                CHECK(got_full.edge(k, l) == doctest::Approx(want_full.edge(k, l)).epsilon(1e-10));
                CHECK(got_full.nonedge(k, l) ==
                      doctest::Approx(want_full.nonedge(k, l)).epsilon(1e-10));
            }

        // induced subnetwork on a node batch
        std::vector<NodeId> batch;
        for (NodeId i = 0; i < I; ++i)
            if (rng.bernoulli(0.5)) batch.push_back(i);
        if (batch.size() < 2) continue;
        const auto got_batch = responsibility_sums(net, st.soft, &batch);
        const auto want_batch = oracle::brute_resp_sums(net, st.soft, &batch);
        CHECK(got_batch.observed_dyads == want_batch.observed);
        for (int k = 0; k < K; ++k)
            for (int l = k; l < K; ++l) {
                CHECK(got_batch.edge(k, l) ==
                      doctest::Approx(want_batch.edge(k, l)).epsilon(1e-10));
                CHECK(got_batch.nonedge(k, l) ==
                      doctest::Approx(want_batch.nonedge(k, l)).epsilon(1e-10));
            }
    }
}

TEST_CASE("global update: exact sums, conserved responsibility mass") {
    const Network net = planted(7, 0.55, 0.08, 19);
    const Hyperparams hp{1.3, 0.7, 2.0, 3};
    VarState st = random_state(net, hp, 23);
    // disturb the rows, then re-sync
    update_local(net, hp, st, 0);
    update_local(net, hp, st, 5);
    update_global(net, hp, st);
    const auto ref = oracle::brute_resp_sums(net, st.soft);
    double mass = 0.0;
    for (int k = 0; k < 3; ++k)
        for (int l = k; l < 3; ++l) {
            CHECK(st.var_a(k, l) == doctest::Approx(hp.a + ref.edge(k, l)).epsilon(1e-10));
            CHECK(st.var_b(k, l) == doctest::Approx(hp.b + ref.nonedge(k, l)).epsilon(1e-10));
            mass += (st.var_a(k, l) - hp.a) + (st.var_b(k, l) - hp.b);
        }
    CHECK(mass == doctest::Approx(static_cast<double>(net.observed_dyad_count())).epsilon(1e-10));
}

TEST_CASE("hard assignments collapse the global update to the sampler's Beta posterior") {
    const Network net = planted(6, 0.5, 0.1, 29);
    const Hyperparams hp{1.5, 2.5, 1.0, 3};
    const Labels z{0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2};
    VarState st = random_state(net, hp, 31);
    st.soft.fill(0.0);
    for (NodeId i = 0; i < 12; ++i)
        st.soft(static_cast<std::size_t>(i), static_cast<std::size_t>(z[static_cast<std::size_t>(i)])) = 1.0;
    st.refresh_caches();
    update_global(net, hp, st);
    const SufficientStats stats(net, z, hp.K);
    for (int k = 0; k < 3; ++k)
        for (int l = k; l < 3; ++l) {
            CHECK(st.var_a(k, l) == doctest::Approx(hp.a + static_cast<double>(stats.s(k, l))).epsilon(1e-12));
            CHECK(st.var_b(k, l) ==
                  doctest::Approx(hp.b + static_cast<double>(stats.n(k, l) - stats.s(k, l))).epsilon(1e-12));
        }
}

TEST_CASE("empty network leaves the edge-side parameters at the prior") {
    const Network net(6, std::vector<Dyad>{});
    const Hyperparams hp{1.0, 1.0, 1.0, 2};
    VarState st = random_state(net, hp, 37);
    update_global(net, hp, st);
    for (int k = 0; k < 2; ++k)
        for (int l = k; l < 2; ++l) CHECK(st.var_a(k, l) == doctest::Approx(hp.a).epsilon(1e-12));
}

TEST_CASE("local update reproduces the literal mean-field formula") {
    Rng rng(123);
    for (int trial = 0; trial < 6; ++trial) {
        const NodeId I = 8;
        std::vector<Dyad> edges, masked;
        for (NodeId i = 0; i < I; ++i)
            for (NodeId j = i + 1; j < I; ++j) {
                if (rng.bernoulli(0.45)) edges.push_back({i, j});
                if (trial >= 3 && rng.bernoulli(0.25)) masked.push_back({i, j});
            }
        const Network net(I, edges, masked);
        const Hyperparams hp{0.8, 1.4, 2.0, 3};
        VarState st = random_state(net, hp, 200 + static_cast<std::uint64_t>(trial));
        for (NodeId i = 0; i < I; ++i) {
            const auto want = oracle::literal_local_row(net, hp, st, i);
            update_local(net, hp, st, i);
            for (int k = 0; k < hp.K; ++k)
                CHECK(st.soft(static_cast<std::size_t>(i), static_cast<std::size_t>(k)) ==
                      doctest::Approx(want[static_cast<std::size_t>(k)]).epsilon(1e-10));
        }
    }
}

TEST_CASE("local update edge cases") {
    SUBCASE("K=1 forces a unit row") {
        const Network net = planted(4, 0.5, 0.5, 41);
        const Hyperparams hp{1, 1, 1, 1};
        VarState st = random_state(net, hp, 43);
        update_local(net, hp, st, 2);
        CHECK(st.soft(2, 0) == 1.0);
    }

    SUBCASE("fully exchangeable two-node problem stays uniform") {
        const Network net(2, std::vector<Dyad>{{0, 1}});
        const Hyperparams hp{1, 1, 1, 2};
        VarState st = random_state(net, hp, 47);
        st.soft.fill(0.5);
        st.var_a.fill(1.7);
        st.var_b.fill(1.2);
        st.refresh_caches();
        update_local(net, hp, st, 0);
        CHECK(st.soft(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(st.soft(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
    }

    SUBCASE("vanishing column mass trips the guard, not a NaN") {
        const Network net = planted(5, 0.6, 0.1, 53);
        const Hyperparams hp{1, 1, 1, 2};
        VarState st = random_state(net, hp, 59);
        for (NodeId i = 0; i < st.node_count(); ++i) {
            st.soft(static_cast<std::size_t>(i), 0) = 1.0;
            st.soft(static_cast<std::size_t>(i), 1) = 0.0;
        }
        st.refresh_caches();
        update_local(net, hp, st, 3);
        double rowsum = 0.0;
        for (int k = 0; k < 2; ++k) {
            const double q = st.soft(3, static_cast<std::size_t>(k));
            CHECK(std::isfinite(q));
            rowsum += q;
        }
        CHECK(rowsum == doctest::Approx(1.0).epsilon(1e-12));
        // oracle applies the same guard
        const VarState fresh = [&] {
            VarState s = random_state(net, hp, 59);
            for (NodeId i = 0; i < s.node_count(); ++i) {
                s.soft(static_cast<std::size_t>(i), 0) = 1.0;
                s.soft(static_cast<std::size_t>(i), 1) = 0.0;
            }
            s.refresh_caches();
            return s;
        }();
        const auto want = oracle::literal_local_row(net, hp, fresh, 3);
        CHECK(st.soft(3, 0) == doctest::Approx(want[0]).epsilon(1e-10));
    }
}

TEST_CASE("column-sum caches stay exactly in sync through sweeps") {
    const Network net = planted(10, 0.5, 0.1, 61);
    const Hyperparams hp{1, 1, 1, 4};
    VarState st = random_state(net, hp, 67);
    for (int sweep = 0; sweep < 5; ++sweep) {
        for (NodeId i = 0; i < st.node_count(); ++i) update_local(net, hp, st, i);
        update_global(net, hp, st);
    }
    for (int k = 0; k < 4; ++k) {
        double S = 0.0, V = 0.0;
        for (NodeId i = 0; i < st.node_count(); ++i) {
            const double q = st.soft(static_cast<std::size_t>(i), static_cast<std::size_t>(k));
            S += q;
            V += q * (1.0 - q);
        }
        CHECK(st.colsum[static_cast<std::size_t>(k)] == doctest::Approx(S).epsilon(1e-12));
        CHECK(st.vsum[static_cast<std::size_t>(k)] == doctest::Approx(V).epsilon(1e-12));
    }
}

TEST_CASE("objective identities") {
    const Network net = planted(8, 0.55, 0.12, 71);
    const Hyperparams hp{1.0, 1.0, 1.0, 3};
    VarState st = random_state(net, hp, 73);
    for (NodeId i = 0; i < st.node_count(); ++i) update_local(net, hp, st, i);
    update_global(net, hp, st);

    SUBCASE("assembled and closed-form objectives agree after a global update") {
        CHECK(elbo(net, hp, st) == doctest::Approx(elbo_display(net, hp, st)).epsilon(1e-9));
    }

    SUBCASE("objective equals expected log joint plus entropy") {
        CHECK(elbo(net, hp, st) ==
              doctest::Approx(expected_log_joint(net, hp, st) + state_entropy(st)).epsilon(1e-9));
    }

    SUBCASE("block permutations leave the objective unchanged") {
        const VarState sw = permuted_blocks(st, {2, 0, 1});
        CHECK(elbo(net, hp, sw) == doctest::Approx(elbo(net, hp, st)).epsilon(1e-10));
        CHECK(elbo_display(net, hp, sw) ==
              doctest::Approx(elbo_display(net, hp, st)).epsilon(1e-10));
    }

    SUBCASE("expected log likelihood is a sum over observed dyads only") {
        const Network masked = net.with_mask(std::vector<Dyad>{{0, 1}, {2, 5}});
        VarState ms = st;
        const double full = expected_log_likelihood(net, hp, st);
        const double part = expected_log_likelihood(masked, hp, ms);
        CHECK(part > full);  // dropped terms are negative
    }
}

TEST_CASE("point-mass rows zero the label entropy term") {
    const Network net = planted(5, 0.6, 0.1, 79);
    const Hyperparams hp{1, 1, 1, 2};
    VarState st = random_state(net, hp, 83);
    st.soft.fill(0.0);
    for (NodeId i = 0; i < st.node_count(); ++i)
        st.soft(static_cast<std::size_t>(i), static_cast<std::size_t>(i % 2)) = 1.0;
    st.refresh_caches();
    update_global(net, hp, st);
    double beta_h = 0.0;
    for (int k = 0; k < 2; ++k)
        for (int l = k; l < 2; ++l) beta_h += beta_entropy(st.var_a(k, l), st.var_b(k, l));
    CHECK(elbo(net, hp, st) ==
          doctest::Approx(expected_log_joint(net, hp, st) + beta_h).epsilon(1e-9));
}

// The collapsed-prior approximations allow sub-1e-6 wobble; anything larger
// is a regression.
TEST_CASE("coordinate ascent increases the objective sweep over sweep") {
    for (int trial = 0; trial < 5; ++trial) {
        const Network net = planted(25, 0.5, 0.15, 300 + static_cast<std::uint64_t>(trial));
        const Hyperparams hp{1, 1, 1, 3};
        VarState st = random_state(net, hp, 400 + static_cast<std::uint64_t>(trial));
        double prev = elbo(net, hp, st);
        for (int sweep = 0; sweep < 15; ++sweep) {
            for (NodeId i = 0; i < st.node_count(); ++i) update_local(net, hp, st, i);
            update_global(net, hp, st);
            const double cur = elbo(net, hp, st);
            CHECK(cur >= prev - 1e-6 * std::abs(prev));
            prev = cur;
        }
    }
}

TEST_CASE("argmax partition breaks ties toward the first block") {
    VarState st;
    st.soft = Matrix<double>(3, 3, 0.0);
    st.soft(0, 1) = 1.0;
    st.soft(1, 0) = 0.5;
    st.soft(1, 2) = 0.5;
    st.soft(2, 2) = 0.6;
    st.soft(2, 0) = 0.4;
    CHECK(argmax_partition(st) == Labels{1, 0, 2});
}

TEST_CASE("run_cavi: convergence, restart selection, determinism") {
    const Network net = planted(15, 0.6, 0.05, 97);
    const Hyperparams hp{1, 1, 1, 2};
    CaviConfig cfg;
    cfg.n_restarts = 4;
    cfg.seed = 7;
    const VarFit fit = run_cavi(net, hp, cfg);
    CHECK(fit.record.engine == "cavi");
    CHECK(fit.record.converged);
    CHECK(fit.record.sweeps > 0);
    CHECK(fit.record.restart_final_elbos.size() == 4);
    CHECK(fit.record.restart_expected_joints.size() == 4);
    CHECK(fit.record.restart_partitions.size() == 4);
    double top = fit.record.restart_final_elbos[0];
    for (double v : fit.record.restart_final_elbos) top = std::max(top, v);
    CHECK(fit.record.final_elbo == doctest::Approx(top));
    CHECK(fit.record.restart_final_elbos[static_cast<std::size_t>(fit.record.best_restart)] ==
          doctest::Approx(fit.record.final_elbo));
    CHECK(fit.record.final_elbo == doctest::Approx(elbo(net, hp, fit.state)).epsilon(1e-12));
    CHECK(fit.record.final_expected_joint ==
          doctest::Approx(expected_log_joint(net, hp, fit.state)).epsilon(1e-12));
    // trace is quasi-monotone and ends at the reported value
    for (std::size_t t = 1; t < fit.record.elbo_trace.size(); ++t)
        CHECK(fit.record.elbo_trace[t] >=
              fit.record.elbo_trace[t - 1] - 1e-6 * std::abs(fit.record.elbo_trace[t - 1]));

    const VarFit again = run_cavi(net, hp, cfg);
    CHECK(again.state.soft == fit.state.soft);
    CHECK(again.record.final_elbo == fit.record.final_elbo);

    CaviConfig threaded = cfg;
    threaded.jobs = 3;
    const VarFit par = run_cavi(net, hp, threaded);
    CHECK(par.state.soft == fit.state.soft);
    CHECK(par.record.restart_final_elbos == fit.record.restart_final_elbos);
}

TEST_CASE("run_cavi flags exhausted sweep budgets") {
    const Network net = planted(12, 0.55, 0.1, 101);
    const Hyperparams hp{1, 1, 1, 2};
    CaviConfig cfg;
    cfg.max_sweeps = 1;
    cfg.seed = 3;
    const VarFit fit = run_cavi(net, hp, cfg);
    CHECK_FALSE(fit.record.converged);
    CHECK(fit.record.sweeps == 1);
}

TEST_CASE("K=1 closes in one sweep with the full-count parameters") {
    const Network net = planted(6, 0.4, 0.4, 103);
    const Hyperparams hp{1.0, 2.0, 1.0, 1};
    CaviConfig cfg;
    cfg.seed = 5;
    const VarFit fit = run_cavi(net, hp, cfg);
    CHECK(fit.record.converged);
    CHECK(fit.state.var_a(0, 0) ==
          doctest::Approx(hp.a + static_cast<double>(net.edge_count())).epsilon(1e-12));
    CHECK(fit.state.var_b(0, 0) ==
          doctest::Approx(hp.b + static_cast<double>(net.observed_dyad_count() - net.edge_count()))
              .epsilon(1e-12));
}
