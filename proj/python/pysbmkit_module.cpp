#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sbmkit/cavi.hpp"
#include "sbmkit/evaluate.hpp"
#include "sbmkit/generator.hpp"
#include "sbmkit/gibbs.hpp"
#include "sbmkit/model.hpp"
#include "sbmkit/network.hpp"
#include "sbmkit/rng.hpp"
#include "sbmkit/sgvb.hpp"

namespace py = pybind11;
using namespace sbm;

namespace {

std::vector<Dyad> to_dyads(const std::vector<std::pair<int, int>>& pairs) {
    std::vector<Dyad> out;
    out.reserve(pairs.size());
    for (const auto& [u, v] : pairs) out.push_back(pair_key(u, v));
    return out;
}

std::vector<std::vector<double>> matrix_rows(const Matrix<double>& m) {
    std::vector<std::vector<double>> out(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r)
        out[r].assign(m.row(r), m.row(r) + m.cols());
    return out;
}

std::vector<std::vector<double>> dense_symmetric(const UpperTri<double>& t) {
    const int K = t.dim();
    std::vector<std::vector<double>> out(static_cast<std::size_t>(K),
                                         std::vector<double>(static_cast<std::size_t>(K)));
    for (int k = 0; k < K; ++k)
        for (int l = 0; l < K; ++l)
            out[static_cast<std::size_t>(k)][static_cast<std::size_t>(l)] = t.at_pair(k, l);
    return out;
}

UpperTri<double> tri_from_rows(const std::vector<std::vector<double>>& rows) {
    const int K = static_cast<int>(rows.size());
    UpperTri<double> t(K);
    for (int k = 0; k < K; ++k) {
        if (static_cast<int>(rows[static_cast<std::size_t>(k)].size()) != K)
            throw ConfigError("theta rows must form a square matrix");
        for (int l = k; l < K; ++l)
            t(k, l) = rows[static_cast<std::size_t>(k)][static_cast<std::size_t>(l)];
    }
    return t;
}

Labels variational_point_estimate(const VarState& state) {
    const CoclusterMatrix C = cocluster_from_variational(state);
    return lau_green_partition(C, variational_candidates(state, C)).partition;
}

Labels mcmc_point_estimate(const McmcTrace& trace) {
    const CoclusterMatrix C = cocluster_from_trace(trace);
    return lau_green_partition(C, mcmc_candidates(trace)).partition;
}

}  // namespace

PYBIND11_MODULE(pysbmkit, m) {
    m.doc() = "Bayesian stochastic blockmodel inference";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);

    py::class_<Hyperparams>(m, "Hyperparams")
        .def(py::init([](double a, double b, double alpha, int K) {
                 Hyperparams hp{a, b, alpha, K};
                 hp.validate();
                 return hp;
             }),
             py::arg("a") = 1.0, py::arg("b") = 1.0, py::arg("alpha") = 1.0, py::arg("k") = 1)
        .def_readwrite("a", &Hyperparams::a)
        .def_readwrite("b", &Hyperparams::b)
        .def_readwrite("alpha", &Hyperparams::alpha)
        .def_readwrite("k", &Hyperparams::K);

    py::class_<Network>(m, "Network")
        .def(py::init([](int node_count, const std::vector<std::pair<int, int>>& edges,
                         const std::vector<std::pair<int, int>>& masked) {
                 return Network(node_count, to_dyads(edges), to_dyads(masked));
             }),
             py::arg("node_count"), py::arg("edges"),
             py::arg("masked") = std::vector<std::pair<int, int>>{})
        .def_property_readonly("node_count", &Network::node_count)
        .def_property_readonly("edge_count", &Network::edge_count)
        .def_property_readonly("masked_count", &Network::masked_count)
        .def_property_readonly("observed_dyad_count", &Network::observed_dyad_count)
        .def("is_edge", &Network::is_edge)
        .def("is_masked", &Network::is_masked)
        .def("degree", &Network::degree)
        .def("neighbors",
             [](const Network& n, NodeId i) {
                 auto span = n.neighbors(i);
                 return std::vector<NodeId>(span.begin(), span.end());
             })
        .def("edges",
             [](const Network& n) {
                 std::vector<std::pair<int, int>> out;
                 for (const Dyad& d : n.edges()) out.emplace_back(d.first, d.second);
                 return out;
             })
        .def("with_mask", [](const Network& n, const std::vector<std::pair<int, int>>& pairs) {
            return n.with_mask(to_dyads(pairs));
        });

    py::class_<GeneratorSpec>(m, "GeneratorSpec")
        .def(py::init([](const std::vector<NodeId>& block_sizes,
                         const std::vector<std::vector<double>>& theta, std::uint64_t seed) {
                 GeneratorSpec spec;
                 spec.block_sizes = block_sizes;
                 spec.node_count = 0;
                 for (NodeId s : block_sizes) spec.node_count += s;
                 spec.theta = tri_from_rows(theta);
                 spec.seed = seed;
                 spec.validate();
                 return spec;
             }),
             py::arg("block_sizes"), py::arg("theta"), py::arg("seed") = 0)
        .def_readwrite("block_sizes", &GeneratorSpec::block_sizes)
        .def_readwrite("seed", &GeneratorSpec::seed)
        .def_property_readonly("node_count", [](const GeneratorSpec& s) { return s.node_count; })
        .def_property_readonly("theta",
                               [](const GeneratorSpec& s) { return dense_symmetric(s.theta); })
        .def("labels", &GeneratorSpec::labels);

    m.def("preset_names", &preset_names);
    m.def("make_preset", &make_preset, py::arg("name"));
    m.def(
        "generate",
        [](const GeneratorSpec& spec) {
            auto [net, labels] = generate(spec);
            return py::make_tuple(std::move(net), std::move(labels));
        },
        py::arg("spec"), "Sample (network, labels) from a planted-partition spec");

    py::class_<HoldoutSplit>(m, "HoldoutSplit")
        .def_readonly("train", &HoldoutSplit::train)
        .def_readonly("fold_id", &HoldoutSplit::fold_id)
        .def_readonly("seed", &HoldoutSplit::seed)
        .def_property_readonly("test_pairs", [](const HoldoutSplit& s) {
            std::vector<std::tuple<int, int, int>> out;
            for (const TestPair& p : s.test_pairs) out.emplace_back(p.i, p.j, p.y ? 1 : 0);
            return out;
        });

    m.def("make_holdout", &make_holdout, py::arg("net"), py::arg("fraction"),
          py::arg("folds") = 1, py::arg("seed") = 1, py::arg("balanced") = false);

    m.def(
        "read_edge_list",
        [](const std::string& path, bool one_indexed) {
            return load_edge_list(path, one_indexed).net;
        },
        py::arg("path"), py::arg("one_indexed") = true);
    m.def("write_edge_list", &write_edge_list, py::arg("path"), py::arg("net"),
          py::arg("one_indexed") = true);

    py::class_<McmcTrace>(m, "McmcTrace")
        .def_readonly("seed", &McmcTrace::seed)
        .def_readonly("chain_index", &McmcTrace::chain_index)
        .def_readonly("labels", &McmcTrace::labels)
        .def_readonly("log_joint", &McmcTrace::log_joint)
        .def_readonly("seconds", &McmcTrace::seconds)
        .def("retained", &McmcTrace::retained)
        .def("mean_log_joint", &McmcTrace::mean_log_joint_post_burnin)
        .def("cocluster",
             [](const McmcTrace& t) { return matrix_rows(cocluster_from_trace(t).prob); })
        .def("point_estimate", &mcmc_point_estimate)
        .def(
            "predict",
            [](const McmcTrace& t, const Network& net,
               const std::vector<std::pair<int, int>>& pairs, bool allow_unmasked) {
                return predict_links(net, t, to_dyads(pairs), allow_unmasked);
            },
            py::arg("net"), py::arg("pairs"), py::arg("allow_unmasked") = false);

    m.def(
        "run_mcmc",
        [](const Network& net, const Hyperparams& hp, int iterations, int burn_in, int thin,
           int n_chains, std::uint64_t seed) {
            McmcConfig cfg;
            cfg.iterations = iterations;
            cfg.burn_in = burn_in < 0 ? iterations / 2 : burn_in;
            cfg.thin = thin;
            cfg.n_chains = n_chains;
            cfg.seed = seed;
            return run_gibbs(net, hp, cfg);
        },
        py::arg("net"), py::arg("hp"), py::arg("iterations") = 10000, py::arg("burn_in") = -1,
        py::arg("thin") = 1, py::arg("n_chains") = 1, py::arg("seed") = 1,
        "Gibbs sampler; returns the best chain's trace");

    py::class_<VarFit>(m, "VarFit")
        .def_property_readonly("soft", [](const VarFit& f) { return matrix_rows(f.state.soft); })
        .def_property_readonly("var_a",
                               [](const VarFit& f) { return dense_symmetric(f.state.var_a); })
        .def_property_readonly("var_b",
                               [](const VarFit& f) { return dense_symmetric(f.state.var_b); })
        .def_property_readonly("labels",
                               [](const VarFit& f) { return argmax_partition(f.state); })
        .def_property_readonly("converged",
                               [](const VarFit& f) { return f.record.converged; })
        .def_property_readonly("budget_exhausted",
                               [](const VarFit& f) { return f.record.budget_exhausted; })
        .def_property_readonly("sweeps", [](const VarFit& f) { return f.record.sweeps; })
        .def_property_readonly("steps", [](const VarFit& f) { return f.record.steps; })
        .def_property_readonly("best_restart",
                               [](const VarFit& f) { return f.record.best_restart; })
        .def_property_readonly("final_elbo", [](const VarFit& f) { return f.record.final_elbo; })
        .def_property_readonly("elbo_trace", [](const VarFit& f) { return f.record.elbo_trace; })
        .def_property_readonly("restart_final_elbos",
                               [](const VarFit& f) { return f.record.restart_final_elbos; })
        .def_property_readonly("seconds", [](const VarFit& f) { return f.record.seconds; })
        .def("cocluster",
             [](const VarFit& f) { return matrix_rows(cocluster_from_variational(f.state).prob); })
        .def("point_estimate", [](const VarFit& f) { return variational_point_estimate(f.state); })
        .def(
            "predict",
            [](const VarFit& f, const Network& net,
               const std::vector<std::pair<int, int>>& pairs, bool allow_unmasked) {
                return predict_links(net, f.state, to_dyads(pairs), allow_unmasked);
            },
            py::arg("net"), py::arg("pairs"), py::arg("allow_unmasked") = false);

    m.def(
        "run_cavi",
        [](const Network& net, const Hyperparams& hp, double rel_tol, int max_sweeps,
           int n_restarts, std::uint64_t seed, int jobs) {
            CaviConfig cfg;
            cfg.rel_tol = rel_tol;
            cfg.max_sweeps = max_sweeps;
            cfg.n_restarts = n_restarts;
            cfg.seed = seed;
            cfg.jobs = jobs;
            return run_cavi(net, hp, cfg);
        },
        py::arg("net"), py::arg("hp"), py::arg("rel_tol") = 1e-6, py::arg("max_sweeps") = 500,
        py::arg("n_restarts") = 1, py::arg("seed") = 1, py::arg("jobs") = 1,
        "Coordinate-ascent variational fit, best of n_restarts");

    m.def(
        "run_sgvb",
        [](const Network& net, const Hyperparams& hp, double omega, double kappa, double tau,
           int min_epochs, double rel_tol, int max_epochs, double time_budget_seconds,
           int n_restarts, double monitor_fraction, std::uint64_t seed, int jobs,
           std::optional<double> fixed_rho, bool reshuffle) {
            SgvbConfig cfg;
            cfg.omega = omega;
            cfg.kappa = kappa;
            cfg.tau = tau;
            cfg.min_epochs = min_epochs;
            cfg.rel_tol = rel_tol;
            cfg.max_epochs = max_epochs;
            cfg.time_budget_seconds = time_budget_seconds;
            cfg.n_restarts = n_restarts;
            cfg.elbo_monitor_fraction = monitor_fraction;
            cfg.seed = seed;
            cfg.jobs = jobs;
            cfg.fixed_rho = fixed_rho;
            cfg.reshuffle = reshuffle;
            return run_sgvb(net, hp, cfg);
        },
        py::arg("net"), py::arg("hp"), py::arg("omega") = 0.25, py::arg("kappa") = 0.6,
        py::arg("tau") = 1.0, py::arg("min_epochs") = 3, py::arg("rel_tol") = 1e-4,
        py::arg("max_epochs") = 500, py::arg("time_budget_seconds") = 0.0,
        py::arg("n_restarts") = 1, py::arg("monitor_fraction") = 0.1, py::arg("seed") = 1,
        py::arg("jobs") = 1, py::arg("fixed_rho") = std::nullopt, py::arg("reshuffle") = true,
        "Stochastic variational fit on node minibatches, best of n_restarts");

    m.def("adjusted_rand_index", &adjusted_rand_index, py::arg("p1"), py::arg("p2"));
    m.def(
        "roc_auc",
        [](const std::vector<double>& scores, const std::vector<int>& labels) {
            return roc_auc(scores, labels).auc;
        },
        py::arg("scores"), py::arg("labels"));
    m.def("rng_algorithm", &rng_algorithm_id);
}
