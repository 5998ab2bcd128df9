#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "oracles.hpp"
#include "sbmkit/generator.hpp"
#include "sbmkit/sgvb.hpp"

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

std::vector<NodeId> ascending(NodeId count) {
    std::vector<NodeId> out(static_cast<std::size_t>(count));
    std::iota(out.begin(), out.end(), NodeId{0});
    return out;
}

}  // namespace

TEST_CASE("batch size: rounded fraction, floor of two, ceiling of all") {
    SgvbConfig cfg;
    cfg.omega = 0.25;
    CHECK(cfg.batch_size(350) == 88);
    CHECK(cfg.batch_size(40) == 10);
    cfg.omega = 0.004;
    CHECK(cfg.batch_size(100) == 2);
    cfg.omega = 1.0;
    CHECK(cfg.batch_size(57) == 57);
    cfg.omega = 0.99;
    CHECK(cfg.batch_size(10) == 10);
}

TEST_CASE("sgvb config validation") {
    SgvbConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    auto expect_reject = [](auto&& tweak) {
        SgvbConfig bad;
        tweak(bad);
        CHECK_THROWS_AS(bad.validate(), ConfigError);
    };
    expect_reject([](SgvbConfig& c) { c.omega = 0.0; });
    expect_reject([](SgvbConfig& c) { c.omega = 1.5; });
    expect_reject([](SgvbConfig& c) { c.kappa = 0.5; });
    expect_reject([](SgvbConfig& c) { c.kappa = 1.2; });
    expect_reject([](SgvbConfig& c) { c.tau = -0.1; });
    expect_reject([](SgvbConfig& c) { c.min_epochs = 0; });
    expect_reject([](SgvbConfig& c) { c.rel_tol = 0.0; });
    expect_reject([](SgvbConfig& c) {
        c.max_epochs = 0;
        c.time_budget_seconds = 0.0;
    });
    expect_reject([](SgvbConfig& c) { c.n_restarts = 0; });
    expect_reject([](SgvbConfig& c) { c.elbo_monitor_fraction = 0.0; });
    expect_reject([](SgvbConfig& c) { c.fixed_rho = 0.0; });
    expect_reject([](SgvbConfig& c) { c.fixed_rho = 1.5; });
    SgvbConfig budget_only;
    budget_only.max_epochs = 0;
    budget_only.time_budget_seconds = 2.0;
    CHECK_NOTHROW(budget_only.validate());
}

TEST_CASE("step size schedule") {
    CHECK(step_size(1, 0.0, 1.0) == doctest::Approx(1.0));
    CHECK(step_size(1, 1.0, 0.6) == doctest::Approx(std::pow(2.0, -0.6)));
    CHECK(step_size(9, 1.0, 0.5001) == doctest::Approx(std::pow(10.0, -0.5001)));
    CHECK_THROWS_AS(step_size(0, 1.0, 0.6), std::invalid_argument);

    double prev = 2.0;
    for (long long t = 1; t <= 50; ++t) {
        const double rho = step_size(t, 1.0, 0.6);
        CHECK(rho > 0.0);
        CHECK(rho < prev);
        prev = rho;
    }

    // the usual stochastic-approximation conditions, checked numerically:
    // squared steps nearly exhausted early, plain steps still growing
    const long long N = 50000;
    double sq_head = 0.0, sq_tail = 0.0, lin_head = 0.0, lin_tail = 0.0;
    for (long long t = 1; t <= N; ++t) {
        const double rho = step_size(t, 1.0, 0.6);
        sq_head += rho * rho;
        lin_head += rho;
    }
    for (long long t = N + 1; t <= 2 * N; ++t) {
        const double rho = step_size(t, 1.0, 0.6);
        sq_tail += rho * rho;
        lin_tail += rho;
    }
    CHECK(sq_tail < 0.05 * sq_head);
    CHECK(lin_tail > 0.25 * lin_head);
}

TEST_CASE("scaling factor is the observed dyad ratio") {
    CHECK(scaling_factor(350 * 349 / 2, 88 * 87 / 2) ==
          doctest::Approx(122150.0 / 7656.0));
    CHECK(scaling_factor(1225, 1225) == doctest::Approx(1.0));
    CHECK_THROWS_AS(scaling_factor(100, 0), std::invalid_argument);

    // masked dyads shrink both counts
    std::vector<Dyad> edges{{0, 1}, {1, 2}, {2, 3}, {0, 4}};
    std::vector<Dyad> masked{{0, 2}, {3, 4}};
    const Network net(5, edges, masked);
    CHECK(net.observed_dyad_count() == 8);
}

TEST_CASE("epoch blocks: cover, balance, singleton repair") {
    SUBCASE("even split") {
        const auto blocks = epoch_blocks(ascending(10), 4);
        REQUIRE(blocks.size() == 3);
        CHECK(blocks[0].size() == 4);
        CHECK(blocks[1].size() == 3);
        CHECK(blocks[2].size() == 3);
    }

    SUBCASE("trailing singleton merges into its predecessor") {
        const auto blocks = epoch_blocks(ascending(5), 2);
        REQUIRE(blocks.size() == 2);
        CHECK(blocks[0].size() == 2);
        CHECK(blocks[1].size() == 3);
    }

    SUBCASE("two nodes never travel alone") {
        const auto blocks = epoch_blocks(ascending(3), 2);
        REQUIRE(blocks.size() == 1);
        CHECK(blocks[0].size() == 3);
    }

    SUBCASE("one oversized batch keeps everything together") {
        const auto blocks = epoch_blocks(ascending(4), 9);
        REQUIRE(blocks.size() == 1);
        CHECK(blocks[0] == ascending(4));
    }

    SUBCASE("shuffled order: disjoint cover with sorted blocks") {
        Rng rng(5);
        std::vector<NodeId> order = ascending(23);
        rng.shuffle(order);
        const auto blocks = epoch_blocks(order, 5);
        std::set<NodeId> seen;
        std::size_t offset = 0;
        for (const auto& block : blocks) {
            CHECK(block.size() >= 2);
            CHECK(std::is_sorted(block.begin(), block.end()));
            // each block is a sorted copy of a contiguous run of the order
            std::vector<NodeId> run(order.begin() + static_cast<std::ptrdiff_t>(offset),
                                    order.begin() + static_cast<std::ptrdiff_t>(offset + block.size()));
            std::sort(run.begin(), run.end());
            CHECK(run == block);
            offset += block.size();
            for (NodeId i : block) CHECK(seen.insert(i).second);
        }
        CHECK(seen.size() == 23);
    }
}

TEST_CASE("minibatch local updates match the literal formula on the induced subnetwork") {
    Rng rng(211);
    for (int trial = 0; trial < 4; ++trial) {
        const NodeId I = 10;
        std::vector<Dyad> edges, masked;
        for (NodeId i = 0; i < I; ++i)
            for (NodeId j = i + 1; j < I; ++j) {
                if (rng.bernoulli(0.4)) edges.push_back({i, j});
                if (trial % 2 && rng.bernoulli(0.2)) masked.push_back({i, j});
            }
        const Network net(I, edges, masked);
        const Hyperparams hp{1.1, 0.9, 1.5, 3};

        std::vector<NodeId> batch = rng.sample_without_replacement(I, 5);
        std::vector<char> in_batch(static_cast<std::size_t>(I), 0);
        for (NodeId i : batch) in_batch[static_cast<std::size_t>(i)] = 1;
        const double scale = (static_cast<double>(I) - 1.0) / (static_cast<double>(batch.size()) - 1.0);

        VarState got = random_state(net, hp, 500 + static_cast<std::uint64_t>(trial));
        VarState want = got;
        LocalWorkspace ws;
        ws.refresh(hp, got);
        local_minibatch_update(net, hp, got, batch, in_batch, ws);

        for (NodeId i : batch) {
            const auto row = oracle::literal_local_row(net, hp, want, i, &batch, scale);
            for (int k = 0; k < hp.K; ++k)
                want.soft(static_cast<std::size_t>(i), static_cast<std::size_t>(k)) =
                    row[static_cast<std::size_t>(k)];
            want.refresh_caches();
        }
        for (NodeId i = 0; i < I; ++i)
            for (int k = 0; k < hp.K; ++k)
                CHECK(got.soft(static_cast<std::size_t>(i), static_cast<std::size_t>(k)) ==
                      doctest::Approx(want.soft(static_cast<std::size_t>(i), static_cast<std::size_t>(k)))
                          .epsilon(1e-10));
    }
}

TEST_CASE("a batch of every node reduces to the plain sweep") {
    const Network net = planted(8, 0.5, 0.1, 307);
    const Hyperparams hp{1, 1, 1, 3};
    VarState mini = random_state(net, hp, 311);
    VarState plain = mini;

    const std::vector<NodeId> all = ascending(net.node_count());
    std::vector<char> in_batch(static_cast<std::size_t>(net.node_count()), 1);
    LocalWorkspace ws;
    ws.refresh(hp, mini);
    local_minibatch_update(net, hp, mini, all, in_batch, ws);

    LocalWorkspace pws;
    pws.refresh(hp, plain);
    for (NodeId i = 0; i < net.node_count(); ++i) update_local(net, hp, plain, i, pws);

    for (NodeId i = 0; i < net.node_count(); ++i)
        for (int k = 0; k < hp.K; ++k)
            CHECK(mini.soft(static_cast<std::size_t>(i), static_cast<std::size_t>(k)) ==
                  doctest::Approx(plain.soft(static_cast<std::size_t>(i), static_cast<std::size_t>(k)))
                      .epsilon(1e-12));
}

TEST_CASE("intermediate global estimate: prior offset plus scaled batch sums") {
    const Network net = planted(9, 0.5, 0.12, 401);
    const Hyperparams hp{1.4, 0.8, 1.0, 3};
    const VarState st = random_state(net, hp, 403);
    Rng rng(405);
    const std::vector<NodeId> batch = rng.sample_without_replacement(net.node_count(), 7);
    const double C = 3.7;
    const auto [a_hat, b_hat] = intermediate_global(net, hp, st, batch, C);
    const auto ref = oracle::brute_resp_sums(net, st.soft, &batch);
    for (int k = 0; k < 3; ++k)
        for (int l = k; l < 3; ++l) {
            CHECK(a_hat(k, l) == doctest::Approx(hp.a + C * ref.edge(k, l)).epsilon(1e-10));
            CHECK(b_hat(k, l) == doctest::Approx(hp.b + C * ref.nonedge(k, l)).epsilon(1e-10));
        }

    SUBCASE("full batch at unit scale is the exact global update") {
        VarState upd = st;
        update_global(net, hp, upd);
        const auto [fa, fb] = intermediate_global(net, hp, st, ascending(net.node_count()), 1.0);
        for (int k = 0; k < 3; ++k)
            for (int l = k; l < 3; ++l) {
                CHECK(fa(k, l) == doctest::Approx(upd.var_a(k, l)).epsilon(1e-12));
                CHECK(fb(k, l) == doctest::Approx(upd.var_b(k, l)).epsilon(1e-12));
            }
    }

    SUBCASE("batch without internal edges leaves the edge side at the prior") {
        // star around node 0: nodes {1,2,3} share no edges
        std::vector<Dyad> spokes{{0, 1}, {0, 2}, {0, 3}};
        const Network star(4, spokes);
        const VarState ss = random_state(star, hp, 407);
        const std::vector<NodeId> leaves{1, 2, 3};
        const auto [sa, sb] = intermediate_global(star, hp, ss, leaves, 2.0);
        for (int k = 0; k < 3; ++k)
            for (int l = k; l < 3; ++l) CHECK(sa(k, l) == doctest::Approx(hp.a).epsilon(1e-12));
    }
}

TEST_CASE("scaled batch statistics are unbiased for the full-network sums") {
    const Network net = planted(6, 0.6, 0.15, 409);  // unmasked, so C is constant
    const Hyperparams hp{1, 1, 1, 2};
    const VarState st = random_state(net, hp, 411);
    const auto full = oracle::brute_resp_sums(net, st.soft);
    const NodeId I = net.node_count();
    const NodeId b = 5;
    const double C = scaling_factor(static_cast<std::int64_t>(net.observed_dyad_count()),
                                    static_cast<std::int64_t>(b) * (b - 1) / 2);

    Rng rng(413);
    const int reps = 4000;
    UpperTri<double> mean(2), m2(2);
    for (int rep = 0; rep < reps; ++rep) {
        const auto batch = rng.sample_without_replacement(I, b);
        const auto sums = oracle::brute_resp_sums(net, st.soft, &batch);
        for (int k = 0; k < 2; ++k)
            for (int l = k; l < 2; ++l) {
                const double x = C * sums.edge(k, l);
                const double d = x - mean(k, l);
                mean(k, l) += d / (rep + 1);
                m2(k, l) += d * (x - mean(k, l));
            }
    }
    for (int k = 0; k < 2; ++k)
        for (int l = k; l < 2; ++l) {
            const double se = std::sqrt(m2(k, l) / (reps - 1.0) / reps);
            CHECK(std::abs(mean(k, l) - full.edge(k, l)) <= 3.0 * se + 1e-9);
        }
}

TEST_CASE("stochastic step blends the parameter triangles") {
    VarState st;
    st.var_a = UpperTri<double>(2);
    st.var_b = UpperTri<double>(2);
    st.var_a.fill(2.0);
    st.var_b.fill(6.0);
    UpperTri<double> a_hat(2), b_hat(2);
    a_hat.fill(4.0);
    b_hat.fill(2.0);

    VarState half = st;
    sgvb_step(half, a_hat, b_hat, 0.5);
    CHECK(half.var_a(0, 1) == doctest::Approx(3.0));
    CHECK(half.var_b(1, 1) == doctest::Approx(4.0));

    VarState replaced = st;
    sgvb_step(replaced, a_hat, b_hat, 1.0);
    CHECK(replaced.var_a(0, 0) == 4.0);
    CHECK(replaced.var_b(0, 1) == 2.0);
}

TEST_CASE("noisy objective: exact on a full monitor, scaled likelihood on a subset") {
    const Network net = planted(8, 0.5, 0.1, 419);
    const Hyperparams hp{1.2, 0.8, 1.5, 3};
    VarState st = random_state(net, hp, 421);
    for (NodeId i = 0; i < net.node_count(); ++i) update_local(net, hp, st, i);
    update_global(net, hp, st);

    CHECK(noisy_elbo(net, hp, st, ascending(net.node_count())) ==
          doctest::Approx(elbo(net, hp, st)).epsilon(1e-12));

    Rng rng(423);
    const auto monitor = rng.sample_without_replacement(net.node_count(), 6);
    std::vector<char> inside(static_cast<std::size_t>(net.node_count()), 0);
    for (NodeId i : monitor) inside[static_cast<std::size_t>(i)] = 1;
    std::vector<Dyad> outside;
    for (NodeId i = 0; i < net.node_count(); ++i)
        for (NodeId j = i + 1; j < net.node_count(); ++j)
            if (!inside[static_cast<std::size_t>(i)] || !inside[static_cast<std::size_t>(j)])
                outside.push_back({i, j});
    const Network induced = net.with_mask(outside);
    const double ratio = static_cast<double>(net.observed_dyad_count()) /
                         static_cast<double>(induced.observed_dyad_count());
    const double want = elbo(net, hp, st) - expected_log_likelihood(net, hp, st) +
                        ratio * expected_log_likelihood(induced, hp, st);
    CHECK(noisy_elbo(net, hp, st, monitor) == doctest::Approx(want).epsilon(1e-9));
}

TEST_CASE("full batches with unit step walk the coordinate ascent path") {
    const Network net = planted(10, 0.55, 0.08, 431);
    const Hyperparams hp{1, 1, 1, 3};

    SgvbConfig scfg;
    scfg.omega = 1.0;
    scfg.fixed_rho = 1.0;
    scfg.min_epochs = 1;
    scfg.max_epochs = 6;
    scfg.rel_tol = 1e-300;
    scfg.seed = 17;
    const VarFit svb = run_sgvb(net, hp, scfg);
    CHECK(svb.record.sweeps == 6);
    CHECK(svb.record.steps == 6);  // one block per epoch

    CaviConfig ccfg;
    ccfg.max_sweeps = 6;
    ccfg.rel_tol = 1e-300;
    ccfg.seed = 17;
    const VarFit cavi = run_cavi(net, hp, ccfg);
    CHECK(cavi.record.sweeps == 6);

    for (NodeId i = 0; i < net.node_count(); ++i)
        for (int k = 0; k < hp.K; ++k)
            CHECK(svb.state.soft(static_cast<std::size_t>(i), static_cast<std::size_t>(k)) ==
                  doctest::Approx(cavi.state.soft(static_cast<std::size_t>(i), static_cast<std::size_t>(k)))
                      .epsilon(1e-10));
    for (int k = 0; k < hp.K; ++k)
        for (int l = k; l < hp.K; ++l) {
            CHECK(svb.state.var_a(k, l) ==
                  doctest::Approx(cavi.state.var_a(k, l)).epsilon(1e-10));
            CHECK(svb.state.var_b(k, l) ==
                  doctest::Approx(cavi.state.var_b(k, l)).epsilon(1e-10));
        }
    CHECK(svb.record.final_elbo == doctest::Approx(cavi.record.final_elbo).epsilon(1e-10));
}

TEST_CASE("run_sgvb: bookkeeping, determinism, restart selection") {
    const Network net = planted(12, 0.65, 0.05, 433);
    const Hyperparams hp{1, 1, 1, 2};
    SgvbConfig cfg;
    cfg.omega = 0.5;
    cfg.n_restarts = 3;
    cfg.seed = 29;
    cfg.max_epochs = 60;
    const VarFit fit = run_sgvb(net, hp, cfg);
    CHECK(fit.record.engine == "sgvb");
    CHECK(fit.record.sweeps >= cfg.min_epochs);
    CHECK(fit.record.restart_final_elbos.size() == 3);
    CHECK(fit.record.restart_partitions.size() == 3);
    double top = fit.record.restart_final_elbos[0];
    for (double v : fit.record.restart_final_elbos) top = std::max(top, v);
    CHECK(fit.record.final_elbo == doctest::Approx(top));
    CHECK(fit.record.final_elbo == doctest::Approx(elbo(net, hp, fit.state)).epsilon(1e-12));
    // one noisy objective reading per finished epoch
    CHECK(fit.record.elbo_trace.size() == static_cast<std::size_t>(fit.record.sweeps));
    CHECK(fit.record.step_trace.size() == static_cast<std::size_t>(fit.record.sweeps));
    // with a 12-per-batch split of 24 nodes, each epoch costs two steps
    CHECK(fit.record.step_trace.back() == 2 * fit.record.sweeps);

    const VarFit again = run_sgvb(net, hp, cfg);
    CHECK(again.state.soft == fit.state.soft);
    CHECK(again.record.final_elbo == fit.record.final_elbo);

    SgvbConfig threaded = cfg;
    threaded.jobs = 2;
    const VarFit par = run_sgvb(net, hp, threaded);
    CHECK(par.state.soft == fit.state.soft);
    CHECK(par.record.restart_final_elbos == fit.record.restart_final_elbos);
}

TEST_CASE("run_sgvb converges on an easy planted problem") {
    const Network net = planted(15, 0.7, 0.03, 439);
    const Hyperparams hp{1, 1, 1, 2};
    SgvbConfig cfg;
    cfg.omega = 0.4;
    cfg.seed = 31;
    cfg.max_epochs = 200;
    cfg.n_restarts = 2;
    const VarFit fit = run_sgvb(net, hp, cfg);
    CHECK(fit.record.converged);
    CHECK_FALSE(fit.record.budget_exhausted);
    CHECK_FALSE(fit.record.partial);
}

TEST_CASE("a vanishing time budget is reported, not hidden") {
    const Network net = planted(10, 0.6, 0.1, 443);
    const Hyperparams hp{1, 1, 1, 2};
    SgvbConfig cfg;
    cfg.time_budget_seconds = 1e-9;
    cfg.max_epochs = 50;
    cfg.seed = 37;
    const VarFit fit = run_sgvb(net, hp, cfg);
    CHECK(fit.record.budget_exhausted);
    CHECK(fit.record.partial);
    CHECK_FALSE(fit.record.converged);
    CHECK(std::isfinite(fit.record.final_elbo));
}

TEST_CASE("rejecting degenerate inputs") {
    const Hyperparams hp{1, 1, 1, 2};
    SgvbConfig cfg;
    CHECK_THROWS_AS(run_sgvb(Network(1, std::vector<Dyad>{}), hp, cfg), ConfigError);
}
