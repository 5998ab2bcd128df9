#include "sbmkit/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sbmkit/rng.hpp"

namespace sbm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string join_path(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + dir + ": " + ec.message());
}

std::ofstream open_text(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open " + path + " for writing");
    out << std::setprecision(17);
    return out;
}

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

void DatasetSpec::validate() const {
    const int sources = (preset.empty() ? 0 : 1) + (edge_list.empty() ? 0 : 1) +
                        (spec_file.empty() ? 0 : 1);
    if (sources != 1)
        throw ConfigError("dataset: exactly one of preset, edge_list, spec_file must be set");
}

Labels load_labels_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open labels file: " + path);

    Labels labels;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream row(line);
        long long v = 0;
        while (row >> v) {
            if (v < 1) throw ParseError("labels file " + path + ": labels are 1-based", lineno);
            labels.push_back(static_cast<int>(v - 1));
        }
        if (!row.eof()) throw ParseError("labels file " + path + ": non-numeric entry", lineno);
    }
    if (labels.empty()) throw ParseError("labels file " + path + " is empty", lineno);
    return labels;
}

void write_labels_file(const std::string& path, const Labels& labels) {
    std::ofstream out = open_text(path);
    for (int v : labels) out << (v + 1) << '\n';
}

Dataset load_dataset(const DatasetSpec& spec) {
    spec.validate();
    Dataset ds;
    if (!spec.preset.empty()) {
        auto [net, truth] = generate(make_preset(spec.preset));
        ds.net = std::move(net);
        ds.truth = std::move(truth);
    } else if (!spec.spec_file.empty()) {
        auto [net, truth] = generate(load_generator_spec(spec.spec_file));
        ds.net = std::move(net);
        ds.truth = std::move(truth);
    } else {
        ds.net = load_edge_list(spec.edge_list).net;
    }
    if (!spec.truth_file.empty()) ds.truth = load_labels_file(spec.truth_file);
    if (!ds.truth.empty() && ds.truth.size() != static_cast<std::size_t>(ds.net.node_count()))
        throw ConfigError("truth labels do not match the network node count");
    return ds;
}

void HoldoutSpec::validate() const {
    if (fraction < 0.0 || fraction >= 1.0)
        throw ConfigError("holdout: fraction must lie in [0,1)");
    if (folds < 0 || folds == 1)
        throw ConfigError("holdout: folds must be 0 (disabled) or at least 2");
    if (fraction > 0.0 && folds >= 2)
        throw ConfigError("holdout: set either fraction or folds, not both");
}

void ExperimentConfig::apply_global_seed() {
    mcmc.seed = seed;
    cavi.seed = seed;
    sgvb.seed = seed;
    holdout.seed = seed;
}

void ExperimentConfig::validate() const {
    dataset.validate();
    if (engine != "mcmc" && engine != "cavi" && engine != "sgvb")
        throw ConfigError("engine must be mcmc, cavi, or sgvb");
    hp.validate();
    mcmc.validate();
    cavi.validate();
    sgvb.validate();
    holdout.validate();
    if (point_estimate != "laugreen" && point_estimate != "argmax")
        throw ConfigError("point_estimate must be laugreen or argmax");
    if (jobs <= 0) throw ConfigError("jobs must be positive");
    if (out_dir.empty()) throw ConfigError("out_dir must be set");
}

namespace {

json config_json(const ExperimentConfig& cfg) {
    json j;
    j["dataset"] = {{"preset", cfg.dataset.preset},
                    {"edge_list", cfg.dataset.edge_list},
                    {"spec_file", cfg.dataset.spec_file},
                    {"truth_file", cfg.dataset.truth_file}};
    j["engine"] = cfg.engine;
    j["hyperparams"] = {{"a", cfg.hp.a}, {"b", cfg.hp.b}, {"alpha", cfg.hp.alpha}, {"K", cfg.hp.K}};
    j["mcmc"] = {{"iterations", cfg.mcmc.iterations},
                 {"burn_in", cfg.mcmc.burn_in},
                 {"thin", cfg.mcmc.thin},
                 {"n_chains", cfg.mcmc.n_chains},
                 {"seed", cfg.mcmc.seed}};
    j["cavi"] = {{"rel_tol", cfg.cavi.rel_tol},
                 {"max_sweeps", cfg.cavi.max_sweeps},
                 {"n_restarts", cfg.cavi.n_restarts},
                 {"jobs", cfg.cavi.jobs},
                 {"seed", cfg.cavi.seed}};
    j["sgvb"] = {{"omega", cfg.sgvb.omega},
                 {"kappa", cfg.sgvb.kappa},
                 {"tau", cfg.sgvb.tau},
                 {"min_epochs", cfg.sgvb.min_epochs},
                 {"rel_tol", cfg.sgvb.rel_tol},
                 {"max_epochs", cfg.sgvb.max_epochs},
                 {"time_budget_seconds", cfg.sgvb.time_budget_seconds},
                 {"n_restarts", cfg.sgvb.n_restarts},
                 {"elbo_monitor_fraction", cfg.sgvb.elbo_monitor_fraction},
                 {"seed", cfg.sgvb.seed},
                 {"jobs", cfg.sgvb.jobs},
                 {"fixed_rho", cfg.sgvb.fixed_rho ? json(*cfg.sgvb.fixed_rho) : json(nullptr)},
                 {"reshuffle", cfg.sgvb.reshuffle}};
    j["holdout"] = {{"fraction", cfg.holdout.fraction},
                    {"folds", cfg.holdout.folds},
                    {"balanced", cfg.holdout.balanced},
                    {"seed", cfg.holdout.seed}};
    j["out_dir"] = cfg.out_dir;
    j["point_estimate"] = cfg.point_estimate;
    j["jobs"] = cfg.jobs;
    j["seed"] = cfg.seed;
    j["rng"] = rng_algorithm_id();
    return j;
}

template <typename T>
void maybe_get(const json& j, const char* key, T& out) {
    if (j.contains(key) && !j.at(key).is_null()) j.at(key).get_to(out);
}

}  // namespace

void write_config_echo(const ExperimentConfig& cfg, const std::string& path) {
    std::ofstream out = open_text(path);
    out << config_json(cfg).dump(2) << "\n";
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError("config file " + path + ": " + e.what(), 0);
    }

    ExperimentConfig cfg;
    maybe_get(j, "seed", cfg.seed);
    cfg.apply_global_seed();
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        maybe_get(d, "preset", cfg.dataset.preset);
        maybe_get(d, "edge_list", cfg.dataset.edge_list);
        maybe_get(d, "spec_file", cfg.dataset.spec_file);
        maybe_get(d, "truth_file", cfg.dataset.truth_file);
    }
    maybe_get(j, "engine", cfg.engine);
    if (j.contains("hyperparams")) {
        const auto& h = j.at("hyperparams");
        maybe_get(h, "a", cfg.hp.a);
        maybe_get(h, "b", cfg.hp.b);
        maybe_get(h, "alpha", cfg.hp.alpha);
        maybe_get(h, "K", cfg.hp.K);
    }
    if (j.contains("mcmc")) {
        const auto& m = j.at("mcmc");
        maybe_get(m, "iterations", cfg.mcmc.iterations);
        maybe_get(m, "burn_in", cfg.mcmc.burn_in);
        maybe_get(m, "thin", cfg.mcmc.thin);
        maybe_get(m, "n_chains", cfg.mcmc.n_chains);
        maybe_get(m, "seed", cfg.mcmc.seed);
    }
    if (j.contains("cavi")) {
        const auto& c = j.at("cavi");
        maybe_get(c, "rel_tol", cfg.cavi.rel_tol);
        maybe_get(c, "max_sweeps", cfg.cavi.max_sweeps);
        maybe_get(c, "n_restarts", cfg.cavi.n_restarts);
        maybe_get(c, "jobs", cfg.cavi.jobs);
        maybe_get(c, "seed", cfg.cavi.seed);
    }
    if (j.contains("sgvb")) {
        const auto& s = j.at("sgvb");
        maybe_get(s, "omega", cfg.sgvb.omega);
        maybe_get(s, "kappa", cfg.sgvb.kappa);
        maybe_get(s, "tau", cfg.sgvb.tau);
        maybe_get(s, "min_epochs", cfg.sgvb.min_epochs);
        maybe_get(s, "rel_tol", cfg.sgvb.rel_tol);
        maybe_get(s, "max_epochs", cfg.sgvb.max_epochs);
        maybe_get(s, "time_budget_seconds", cfg.sgvb.time_budget_seconds);
        maybe_get(s, "n_restarts", cfg.sgvb.n_restarts);
        maybe_get(s, "elbo_monitor_fraction", cfg.sgvb.elbo_monitor_fraction);
        maybe_get(s, "seed", cfg.sgvb.seed);
        maybe_get(s, "jobs", cfg.sgvb.jobs);
        if (s.contains("fixed_rho") && !s.at("fixed_rho").is_null())
            cfg.sgvb.fixed_rho = s.at("fixed_rho").get<double>();
        maybe_get(s, "reshuffle", cfg.sgvb.reshuffle);
    }
    if (j.contains("holdout")) {
        const auto& h = j.at("holdout");
        maybe_get(h, "fraction", cfg.holdout.fraction);
        maybe_get(h, "folds", cfg.holdout.folds);
        maybe_get(h, "balanced", cfg.holdout.balanced);
        maybe_get(h, "seed", cfg.holdout.seed);
    }
    maybe_get(j, "out_dir", cfg.out_dir);
    maybe_get(j, "point_estimate", cfg.point_estimate);
    maybe_get(j, "jobs", cfg.jobs);
    return cfg;
}

GenerateResult run_generate(const GeneratorSpec& spec, const std::string& out_dir) {
    spec.validate();
    ensure_dir(out_dir);
    auto [net, labels] = generate(spec);

    GenerateResult res;
    res.edges_path = join_path(out_dir, "edges.txt");
    res.labels_path = join_path(out_dir, "labels.txt");
    res.spec_path = join_path(out_dir, "generator.json");
    write_edge_list(res.edges_path, net);
    write_labels_file(res.labels_path, labels);
    save_generator_spec(res.spec_path, spec);
    res.node_count = net.node_count();
    res.edge_count = net.edge_count();
    return res;
}

namespace {

void write_cavi_trace(const RunRecord& rec, const std::string& path) {
    std::ofstream out = open_text(path);
    out << "sweep,elbo,elapsed_seconds\n";
    for (std::size_t s = 0; s < rec.elbo_trace.size(); ++s)
        out << s << ',' << rec.elbo_trace[s] << ',' << rec.elapsed_trace[s] << '\n';
}

void write_sgvb_trace(const RunRecord& rec, const std::string& path) {
    std::ofstream out = open_text(path);
    out << "epoch,t,noisy_elbo,elapsed_seconds\n";
    for (std::size_t e = 0; e < rec.elbo_trace.size(); ++e)
        out << (e + 1) << ',' << rec.step_trace[e] << ',' << rec.elbo_trace[e] << ','
            << rec.elapsed_trace[e] << '\n';
}

void write_mcmc_trace(const McmcTrace& trace, const std::string& path) {
    std::ofstream out = open_text(path);
    out << "iteration,log_joint\n";
    for (std::size_t it = 0; it < trace.log_joint.size(); ++it)
        out << (it + 1) << ',' << trace.log_joint[it] << '\n';
}

json record_json(const RunRecord& rec) {
    json j;
    j["engine"] = rec.engine;
    j["converged"] = rec.converged;
    j["budget_exhausted"] = rec.budget_exhausted;
    j["partial"] = rec.partial;
    j["sweeps"] = rec.sweeps;
    j["steps"] = rec.steps;
    j["best_restart"] = rec.best_restart;
    j["final_elbo"] = rec.final_elbo;
    j["final_expected_joint"] = rec.final_expected_joint;
    j["seconds"] = rec.seconds;
    j["restart_final_elbos"] = rec.restart_final_elbos;
    j["restart_expected_joints"] = rec.restart_expected_joints;
    j["rng"] = rng_algorithm_id();
    return j;
}

}  // namespace

FitResult run_fit(const ExperimentConfig& cfg) {
    cfg.validate();
    Dataset ds = load_dataset(cfg.dataset);
    ensure_dir(cfg.out_dir);

    Network net = ds.net;
    if (cfg.holdout.fraction > 0.0) {
        auto splits = make_holdout(ds.net, cfg.holdout.fraction, 1, cfg.holdout.seed,
                                   cfg.holdout.balanced);
        save_holdout(join_path(cfg.out_dir, "holdout.json"), splits[0]);
        net = std::move(splits[0].train);
    }

    FitResult result;
    result.checkpoint_path = join_path(cfg.out_dir, "checkpoint.json");
    result.record_path = join_path(cfg.out_dir, "record.json");
    result.trace_path = join_path(cfg.out_dir, "trace.csv");

    if (cfg.engine == "mcmc") {
        McmcTrace trace = run_gibbs(net, cfg.hp, cfg.mcmc);

        Checkpoint cp;
        cp.engine = "mcmc";
        cp.seed = cfg.mcmc.seed;
        cp.iteration = cfg.mcmc.iterations;
        cp.hp = cfg.hp;
        cp.node_count = net.node_count();
        if (trace.retained() > 0) {
            cp.labels = trace.labels.back();
            cp.theta = trace.theta.back();
            cp.w = trace.w.back();
            cp.label_trace = trace.labels;
        }
        save_checkpoint(result.checkpoint_path, cp);
        write_mcmc_trace(trace, result.trace_path);

        json j;
        j["engine"] = "mcmc";
        j["chain_index"] = trace.chain_index;
        j["iterations"] = trace.iterations;
        j["burn_in"] = trace.burn_in;
        j["thin"] = trace.thin;
        j["retained"] = trace.retained();
        j["mean_log_joint"] = trace.mean_log_joint_post_burnin();
        j["chain_mean_log_joint"] = trace.chain_mean_log_joint;
        j["seconds"] = trace.seconds;
        j["rng"] = rng_algorithm_id();
        open_text(result.record_path) << j.dump(2) << "\n";

        result.mcmc = std::move(trace);
        result.used_mcmc = true;
        result.exit_code = kExitOk;
    } else {
        VarFit fit;
        if (cfg.engine == "cavi") {
            CaviConfig c = cfg.cavi;
            if (cfg.jobs > 1) c.jobs = cfg.jobs;
            fit = run_cavi(net, cfg.hp, c);
        } else {
            SgvbConfig s = cfg.sgvb;
            if (cfg.jobs > 1) s.jobs = cfg.jobs;
            fit = run_sgvb(net, cfg.hp, s);
        }

        Checkpoint cp;
        cp.engine = cfg.engine;
        cp.seed = cfg.engine == "cavi" ? cfg.cavi.seed : cfg.sgvb.seed;
        cp.iteration = fit.record.sweeps;
        cp.hp = cfg.hp;
        cp.node_count = net.node_count();
        cp.soft = fit.state.soft;
        cp.var_a = fit.state.var_a;
        cp.var_b = fit.state.var_b;
        save_checkpoint(result.checkpoint_path, cp);

        if (cfg.engine == "cavi") write_cavi_trace(fit.record, result.trace_path);
        else write_sgvb_trace(fit.record, result.trace_path);
        open_text(result.record_path) << record_json(fit.record).dump(2) << "\n";

        if (cfg.engine == "sgvb") {
            result.comparison_path = join_path(cfg.out_dir, "comparison.csv");
            std::ofstream out = open_text(result.comparison_path);
            out << "restart,final_full_elbo,ari_if_truth_known\n";
            for (std::size_t r = 0; r < fit.record.restart_final_elbos.size(); ++r) {
                out << r << ',' << fit.record.restart_final_elbos[r] << ',';
                if (ds.has_truth())
                    out << adjusted_rand_index(fit.record.restart_partitions[r], ds.truth);
                out << '\n';
            }
        }

        result.exit_code =
            fit.record.budget_exhausted ? kExitBudgetExhausted : kExitOk;
        result.record = std::move(fit.record);
    }

    write_config_echo(cfg, join_path(cfg.out_dir, "config.json"));
    return result;
}

void SweepSpec::validate() const {
    if (kappas.empty() || taus.empty() || omegas.empty())
        throw ConfigError("sweep: grid lists must be nonempty");
    if (n_restarts <= 0) throw ConfigError("sweep: n_restarts must be positive");
    if (budget_seconds < 0.0) throw ConfigError("sweep: budget must be nonnegative");
    if (budget_probes <= 0) throw ConfigError("sweep: budget_probes must be positive");
}

SweepResult run_sweep(const ExperimentConfig& cfg, const SweepSpec& sweep) {
    cfg.validate();
    sweep.validate();
    Dataset ds = load_dataset(cfg.dataset);
    ensure_dir(cfg.out_dir);

    SweepResult res;
    res.budget_seconds = sweep.budget_seconds;
    if (res.budget_seconds <= 0.0) {
        double total = 0.0;
        for (int p = 0; p < sweep.budget_probes; ++p) {
            CaviConfig probe = cfg.cavi;
            probe.n_restarts = 1;
            probe.jobs = 1;
            probe.seed = cfg.cavi.seed + static_cast<std::uint64_t>(p);
            total += run_cavi(ds.net, cfg.hp, probe).record.seconds;
        }
        res.mean_cavi_seconds = total / static_cast<double>(sweep.budget_probes);
        res.budget_seconds = res.mean_cavi_seconds;
    }

    for (double kappa : sweep.kappas)
        for (double tau : sweep.taus)
            for (double omega : sweep.omegas) {
                SgvbConfig s = cfg.sgvb;
                s.kappa = kappa;
                s.tau = tau;
                s.omega = omega;
                s.n_restarts = sweep.n_restarts;
                if (cfg.jobs > 1) s.jobs = cfg.jobs;
                s.time_budget_seconds = res.budget_seconds;
                s.max_epochs = 0;

                const VarFit fit = run_sgvb(ds.net, cfg.hp, s);
                for (int r = 0; r < sweep.n_restarts; ++r)
                    res.rows.push_back(
                        {kappa, tau, omega, r,
                         fit.record.restart_expected_joints[static_cast<std::size_t>(r)],
                         fit.record.restart_final_elbos[static_cast<std::size_t>(r)]});
            }

    res.csv_path = join_path(cfg.out_dir, "sweep.csv");
    std::ofstream out = open_text(res.csv_path);
    out << "# budget_seconds=" << res.budget_seconds << "\n";
    out << "# mean_cavi_seconds=" << res.mean_cavi_seconds << "\n";
    out << "# rng=" << rng_algorithm_id() << "\n";
    out << "kappa,tau,omega,restart,expected_log_joint,final_elbo\n";
    for (const SweepRow& row : res.rows)
        out << row.kappa << ',' << row.tau << ',' << row.omega << ',' << row.restart << ','
            << row.expected_log_joint << ',' << row.final_elbo << '\n';

    write_config_echo(cfg, join_path(cfg.out_dir, "config.json"));
    return res;
}

CrossvalResult run_crossval(const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.holdout.folds < 2)
        throw ConfigError("crossval: holdout.folds must be at least 2");
    Dataset ds = load_dataset(cfg.dataset);
    ensure_dir(cfg.out_dir);

    const auto splits =
        make_holdout(ds.net, 0.0, cfg.holdout.folds, cfg.holdout.seed, cfg.holdout.balanced);

    CrossvalResult res;
    for (const HoldoutSplit& split : splits) {
        std::vector<Dyad> pairs;
        std::vector<int> ys;
        pairs.reserve(split.test_pairs.size());
        ys.reserve(split.test_pairs.size());
        for (const TestPair& tp : split.test_pairs) {
            pairs.push_back({tp.i, tp.j});
            ys.push_back(tp.y ? 1 : 0);
        }

        std::vector<double> scores;
        if (cfg.engine == "mcmc") {
            const McmcTrace trace = run_gibbs(split.train, cfg.hp, cfg.mcmc);
            scores = predict_links(split.train, trace, pairs);
        } else if (cfg.engine == "cavi") {
            CaviConfig c = cfg.cavi;
            if (cfg.jobs > 1) c.jobs = cfg.jobs;
            const VarFit fit = run_cavi(split.train, cfg.hp, c);
            scores = predict_links(split.train, fit.state, pairs);
        } else {
            SgvbConfig s = cfg.sgvb;
            if (cfg.jobs > 1) s.jobs = cfg.jobs;
            const VarFit fit = run_sgvb(split.train, cfg.hp, s);
            scores = predict_links(split.train, fit.state, pairs);
        }

        const RocResult roc = roc_auc(scores, ys);
        res.folds.push_back({split.fold_id, pairs.size(), roc.auc});
        write_roc_csv(roc, join_path(cfg.out_dir,
                                     "fold" + std::to_string(split.fold_id) + "_roc.csv"));
    }

    std::vector<double> aucs;
    aucs.reserve(res.folds.size());
    for (const FoldMetric& f : res.folds) aucs.push_back(f.auc);
    res.median_auc = median_of(aucs);
    res.mean_auc = std::accumulate(aucs.begin(), aucs.end(), 0.0) /
                   static_cast<double>(aucs.size());

    res.csv_path = join_path(cfg.out_dir, "crossval.csv");
    {
        std::ofstream out = open_text(res.csv_path);
        out << "fold,held_out,auc\n";
        for (const FoldMetric& f : res.folds)
            out << f.fold << ',' << f.held_out << ',' << f.auc << '\n';
    }

    res.json_path = join_path(cfg.out_dir, "crossval.json");
    {
        json j;
        j["engine"] = cfg.engine;
        json folds = json::array();
        for (const FoldMetric& f : res.folds)
            folds.push_back({{"fold", f.fold}, {"held_out", f.held_out}, {"auc", f.auc}});
        j["folds"] = std::move(folds);
        j["median_auc"] = res.median_auc;
        j["mean_auc"] = res.mean_auc;
        j["holdout_seed"] = cfg.holdout.seed;
        j["rng"] = rng_algorithm_id();
        open_text(res.json_path) << j.dump(2) << "\n";
    }

    write_config_echo(cfg, join_path(cfg.out_dir, "config.json"));
    return res;
}

namespace {

std::pair<CoclusterMatrix, Labels> summarize_checkpoint(const Checkpoint& cp,
                                                        const std::string& point_estimate) {
    if (cp.engine == "mcmc") {
        McmcTrace shim;
        if (cp.label_trace) shim.labels = *cp.label_trace;
        else if (cp.labels) shim.labels = {*cp.labels};
        else throw ConfigError("checkpoint carries no sampler labels");

        CoclusterMatrix C = cocluster_from_trace(shim);
        Labels part = point_estimate == "argmax"
                          ? shim.labels.back()
                          : lau_green_partition(C, mcmc_candidates(shim)).partition;
        return {std::move(C), std::move(part)};
    }

    if (!cp.soft) throw ConfigError("checkpoint carries no soft marginals");
    VarState vs;
    vs.soft = *cp.soft;
    CoclusterMatrix C = cocluster_from_variational(vs);
    Labels part = point_estimate == "argmax"
                      ? argmax_partition(vs)
                      : lau_green_partition(C, variational_candidates(vs, C)).partition;
    return {std::move(C), std::move(part)};
}

}  // namespace

EvaluateResult run_evaluate(const EvaluateOptions& opts) {
    if (opts.checkpoint.empty()) throw ConfigError("evaluate: checkpoint path required");
    if (opts.point_estimate != "laugreen" && opts.point_estimate != "argmax")
        throw ConfigError("evaluate: point_estimate must be laugreen or argmax");
    if (opts.cocluster_format != "auto" && opts.cocluster_format != "dense" &&
        opts.cocluster_format != "triplets")
        throw ConfigError("evaluate: cocluster_format must be auto, dense, or triplets");

    const Checkpoint cp = load_checkpoint(opts.checkpoint);
    ensure_dir(opts.out_dir);

    auto [C, part] = summarize_checkpoint(cp, opts.point_estimate);
    const NodeId I = C.node_count();

    EvaluateResult res;
    json metrics;
    metrics["engine"] = cp.engine;
    metrics["point_estimate"] = opts.point_estimate;
    const Labels canon = canonical_partition(part);
    metrics["partition_blocks"] = canon.empty() ? 0 : 1 + *std::max_element(canon.begin(), canon.end());
    metrics["partition_loss"] = partition_loss(C, part);
    metrics["rng"] = rng_algorithm_id();

    if (!opts.truth_file.empty()) {
        const Labels truth = load_labels_file(opts.truth_file);
        if (truth.size() != part.size())
            throw ConfigError("evaluate: truth labels do not match the checkpoint");
        res.has_ari = true;
        res.ari = adjusted_rand_index(part, truth);
        metrics["ari"] = res.ari;
    }

    res.partition_path = join_path(opts.out_dir, "partition.txt");
    write_labels_file(res.partition_path, canon);

    std::string format = opts.cocluster_format;
    if (format == "auto") format = I <= 1000 ? "dense" : "triplets";
    if (format == "dense") {
        std::vector<NodeId> order;
        if (!opts.edge_list.empty()) {
            const Network net = load_edge_list(opts.edge_list).net;
            if (net.node_count() != I)
                throw ConfigError("evaluate: edge list node count differs from the checkpoint");
            order = heatmap_order(net, part);
        } else {
            order.resize(static_cast<std::size_t>(I));
            std::iota(order.begin(), order.end(), NodeId{0});
            std::stable_sort(order.begin(), order.end(), [&](NodeId u, NodeId v) {
                return part[static_cast<std::size_t>(u)] < part[static_cast<std::size_t>(v)];
            });
        }
        res.cocluster_path = join_path(opts.out_dir, "cocluster.csv");
        write_cocluster_csv(C, res.cocluster_path, &order);
    } else {
        res.cocluster_path = join_path(opts.out_dir, "cocluster_triplets.csv");
        write_cocluster_triplets(C, res.cocluster_path, opts.triplet_min_prob);
    }

    if (!opts.second_checkpoint.empty()) {
        const Checkpoint cp2 = load_checkpoint(opts.second_checkpoint);
        auto [C2, part2] = summarize_checkpoint(cp2, opts.point_estimate);
        if (C2.node_count() != I)
            throw ConfigError("evaluate: checkpoints describe different node counts");

        res.overlap_path = join_path(opts.out_dir, "overlap.csv");
        std::ofstream out = open_text(res.overlap_path);
        out << "i,j,p_first,p_second\n";
        double abs_diff = 0.0;
        for (NodeId i = 0; i < I; ++i)
            for (NodeId j = i + 1; j < I; ++j) {
                const double p1 = C.at(i, j);
                const double p2 = C2.at(i, j);
                abs_diff += std::abs(p1 - p2);
                if (std::max(p1, p2) >= opts.triplet_min_prob)
                    out << (i + 1) << ',' << (j + 1) << ',' << p1 << ',' << p2 << '\n';
            }
        res.has_overlap = true;
        res.overlap_mean_abs_diff = abs_diff / static_cast<double>(dyad_count(I));
        metrics["overlap_mean_abs_diff"] = res.overlap_mean_abs_diff;
        metrics["cross_ari"] = adjusted_rand_index(part, part2);
    }

    res.metrics_path = join_path(opts.out_dir, "metrics.json");
    open_text(res.metrics_path) << metrics.dump(2) << "\n";
    return res;
}

}  // namespace sbm
