#include <cstdint>
#include <exception>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sbmkit/experiment.hpp"

namespace {

using sbm::ExperimentConfig;

struct DatasetCli {
    std::string preset;
    std::string edges;
    std::string spec;
    std::string truth;
};

struct EngineCli {
    std::string engine;
    int k = 0;
    double a = 0.0, b = 0.0, alpha = 0.0;
    std::uint64_t seed = 0;
    int jobs = 0;

    int iters = 0, burnin = -1, thin = 0, chains = 0;

    int restarts = 0;
    double rel_tol = 0.0;
    int max_sweeps = 0;

    double omega = 0.0, kappa = 0.0, tau = -1.0;
    int min_epochs = 0, max_epochs = -1;
    double time_budget = -1.0, monitor_frac = 0.0, fixed_rho = 0.0;
    bool no_reshuffle = false;

    double holdout_fraction = 0.0;
    int folds = 0;
    bool balanced = false;
    std::uint64_t holdout_seed = 0;
};

void add_dataset_options(CLI::App* sub, DatasetCli& d) {
    sub->add_option("--preset", d.preset, "builtin dataset preset")
        ->check(CLI::IsMember(sbm::preset_names()));
    sub->add_option("--edges", d.edges, "edge list file");
    sub->add_option("--spec", d.spec, "generator spec JSON");
    sub->add_option("--truth", d.truth, "true labels file (one per line)");
}

void add_engine_options(CLI::App* sub, EngineCli& e, bool with_engine) {
    if (with_engine)
        sub->add_option("--engine", e.engine, "inference engine")
            ->check(CLI::IsMember(std::set<std::string>{"mcmc", "cavi", "sgvb"}))
            ->required();
    sub->add_option("--k", e.k, "number of blocks");
    sub->add_option("--a", e.a, "Beta prior a");
    sub->add_option("--b", e.b, "Beta prior b");
    sub->add_option("--alpha", e.alpha, "Dirichlet concentration");
    sub->add_option("--seed", e.seed, "seed for every stage");
    sub->add_option("--jobs", e.jobs, "max concurrent restarts/chains");

    sub->add_option("--iters", e.iters, "sampler iterations");
    sub->add_option("--burnin", e.burnin, "sampler burn-in iterations");
    sub->add_option("--thin", e.thin, "sampler thinning stride");
    sub->add_option("--chains", e.chains, "independent chains");

    sub->add_option("--restarts", e.restarts, "variational restarts");
    sub->add_option("--rel-tol", e.rel_tol, "relative convergence tolerance");
    sub->add_option("--max-sweeps", e.max_sweeps, "coordinate ascent sweep cap");

    sub->add_option("--omega", e.omega, "minibatch fraction |S|/I");
    sub->add_option("--kappa", e.kappa, "step size forgetting rate");
    sub->add_option("--tau", e.tau, "step size delay");
    sub->add_option("--min-epochs", e.min_epochs, "epochs before convergence checks");
    sub->add_option("--max-epochs", e.max_epochs, "epoch cap (0 = budget only)");
    sub->add_option("--time-budget-secs", e.time_budget, "per-run wall clock budget");
    sub->add_option("--monitor-frac", e.monitor_frac, "noisy objective monitor fraction");
    sub->add_option("--fixed-rho", e.fixed_rho, "constant step size override");
    sub->add_flag("--no-reshuffle", e.no_reshuffle, "keep one epoch partition");

    sub->add_option("--holdout-fraction", e.holdout_fraction, "mask this share of dyads");
    sub->add_flag("--balanced", e.balanced, "stratify holdout by edge/non-edge");
    sub->add_option("--holdout-seed", e.holdout_seed, "holdout mask seed");
}

void apply_dataset(const CLI::App* sub, const DatasetCli& d, ExperimentConfig& cfg) {
    if (sub->count("--preset") || sub->count("--edges") || sub->count("--spec")) {
        cfg.dataset.preset.clear();
        cfg.dataset.edge_list.clear();
        cfg.dataset.spec_file.clear();
        if (sub->count("--preset")) cfg.dataset.preset = d.preset;
        if (sub->count("--edges")) cfg.dataset.edge_list = d.edges;
        if (sub->count("--spec")) cfg.dataset.spec_file = d.spec;
    }
    if (sub->count("--truth")) cfg.dataset.truth_file = d.truth;
}

void apply_engine(const CLI::App* sub, const EngineCli& e, ExperimentConfig& cfg) {
    if (sub->count("--seed")) {
        cfg.seed = e.seed;
        cfg.apply_global_seed();
    }
    if (sub->count("--engine")) cfg.engine = e.engine;
    if (sub->count("--k")) cfg.hp.K = e.k;
    if (sub->count("--a")) cfg.hp.a = e.a;
    if (sub->count("--b")) cfg.hp.b = e.b;
    if (sub->count("--alpha")) cfg.hp.alpha = e.alpha;
    if (sub->count("--jobs")) cfg.jobs = e.jobs;

    if (sub->count("--iters")) {
        cfg.mcmc.iterations = e.iters;
        if (!sub->count("--burnin")) cfg.mcmc.burn_in = e.iters / 2;
    }
    if (sub->count("--burnin")) cfg.mcmc.burn_in = e.burnin;
    if (sub->count("--thin")) cfg.mcmc.thin = e.thin;
    if (sub->count("--chains")) cfg.mcmc.n_chains = e.chains;

    if (sub->count("--restarts")) {
        cfg.cavi.n_restarts = e.restarts;
        cfg.sgvb.n_restarts = e.restarts;
    }
    if (sub->count("--rel-tol")) {
        cfg.cavi.rel_tol = e.rel_tol;
        cfg.sgvb.rel_tol = e.rel_tol;
    }
    if (sub->count("--max-sweeps")) cfg.cavi.max_sweeps = e.max_sweeps;

    if (sub->count("--omega")) cfg.sgvb.omega = e.omega;
    if (sub->count("--kappa")) cfg.sgvb.kappa = e.kappa;
    if (sub->count("--tau")) cfg.sgvb.tau = e.tau;
    if (sub->count("--min-epochs")) cfg.sgvb.min_epochs = e.min_epochs;
    if (sub->count("--max-epochs")) cfg.sgvb.max_epochs = e.max_epochs;
    if (sub->count("--time-budget-secs")) cfg.sgvb.time_budget_seconds = e.time_budget;
    if (sub->count("--monitor-frac")) cfg.sgvb.elbo_monitor_fraction = e.monitor_frac;
    if (sub->count("--fixed-rho")) cfg.sgvb.fixed_rho = e.fixed_rho;
    if (e.no_reshuffle) cfg.sgvb.reshuffle = false;

    if (sub->count("--holdout-fraction")) cfg.holdout.fraction = e.holdout_fraction;
    if (sub->count("--folds")) cfg.holdout.folds = e.folds;
    if (e.balanced) cfg.holdout.balanced = true;
    if (sub->count("--holdout-seed")) cfg.holdout.seed = e.holdout_seed;
}

ExperimentConfig base_config(const std::string& config_path) {
    if (config_path.empty()) return ExperimentConfig{};
    return sbm::load_config_file(config_path);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian stochastic blockmodel inference toolkit"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "sample a network and write it to disk");
    std::string gen_preset, gen_spec, gen_out = ".";
    std::uint64_t gen_seed = 0;
    gen->add_option("--preset", gen_preset, "builtin dataset preset")
        ->check(CLI::IsMember(sbm::preset_names()));
    gen->add_option("--spec", gen_spec, "generator spec JSON");
    gen->add_option("--seed", gen_seed, "override the spec seed");
    gen->add_option("--out", gen_out, "output directory");

    // fit
    auto* fit = app.add_subcommand("fit", "fit one engine and write checkpoint + traces");
    DatasetCli fit_data;
    EngineCli fit_eng;
    std::string fit_out = ".", fit_config;
    add_dataset_options(fit, fit_data);
    add_engine_options(fit, fit_eng, true);
    fit->add_option("--out", fit_out, "output directory");
    fit->add_option("--config", fit_config, "experiment config JSON");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "grid of time-budgeted minibatch runs");
    DatasetCli sweep_data;
    EngineCli sweep_eng;
    sbm::SweepSpec sweep_spec;
    std::string sweep_out = ".", sweep_config;
    add_dataset_options(sweep, sweep_data);
    add_engine_options(sweep, sweep_eng, false);
    sweep->add_option("--kappas", sweep_spec.kappas, "forgetting rate grid")->delimiter(',');
    sweep->add_option("--taus", sweep_spec.taus, "delay grid")->delimiter(',');
    sweep->add_option("--omegas", sweep_spec.omegas, "minibatch fraction grid")->delimiter(',');
    int sweep_restarts = 0;
    sweep->add_option("--sweep-restarts", sweep_restarts, "runs per grid cell");
    sweep->add_option("--budget-secs", sweep_spec.budget_seconds,
                      "per-run budget (0 = mean coordinate ascent runtime)");
    sweep->add_option("--budget-probes", sweep_spec.budget_probes,
                      "coordinate ascent runs used to measure the budget");
    sweep->add_option("--out", sweep_out, "output directory");
    sweep->add_option("--config", sweep_config, "experiment config JSON");

    // crossval
    auto* cv = app.add_subcommand("crossval", "k-fold link prediction");
    DatasetCli cv_data;
    EngineCli cv_eng;
    std::string cv_out = ".", cv_config;
    add_dataset_options(cv, cv_data);
    add_engine_options(cv, cv_eng, true);
    cv->add_option("--folds", cv_eng.folds, "cross-validation folds")->required();
    cv->add_option("--out", cv_out, "output directory");
    cv->add_option("--config", cv_config, "experiment config JSON");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "score checkpoints and export summaries");
    sbm::EvaluateOptions ev_opts;
    ev->add_option("--checkpoint", ev_opts.checkpoint, "fit checkpoint JSON")->required();
    ev->add_option("--second", ev_opts.second_checkpoint, "second checkpoint for overlap");
    ev->add_option("--truth", ev_opts.truth_file, "true labels file");
    ev->add_option("--edges", ev_opts.edge_list, "edge list for degree-ordered export");
    ev->add_option("--point-estimate", ev_opts.point_estimate, "laugreen or argmax")
        ->check(CLI::IsMember(std::set<std::string>{"laugreen", "argmax"}));
    ev->add_option("--cocluster-format", ev_opts.cocluster_format, "auto, dense, or triplets")
        ->check(CLI::IsMember(std::set<std::string>{"auto", "dense", "triplets"}));
    ev->add_option("--min-prob", ev_opts.triplet_min_prob, "sparse export threshold");
    ev->add_option("--out", ev_opts.out_dir, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            if (gen_preset.empty() == gen_spec.empty())
                throw sbm::ConfigError("generate: pass exactly one of --preset, --spec");
            sbm::GeneratorSpec gs = gen_preset.empty() ? sbm::load_generator_spec(gen_spec)
                                                       : sbm::make_preset(gen_preset);
            if (gen->count("--seed")) gs.seed = gen_seed;
            const sbm::GenerateResult res = sbm::run_generate(gs, gen_out);
            std::cout << "nodes " << res.node_count << ", edges " << res.edge_count << "\n"
                      << "wrote " << res.edges_path << "\n"
                      << "wrote " << res.labels_path << "\n"
                      << "wrote " << res.spec_path << "\n";
            return sbm::kExitOk;
        }

        if (fit->parsed()) {
            ExperimentConfig cfg = base_config(fit_config);
            apply_dataset(fit, fit_data, cfg);
            apply_engine(fit, fit_eng, cfg);
            if (fit->count("--out")) cfg.out_dir = fit_out;
            const sbm::FitResult res = sbm::run_fit(cfg);
            if (res.used_mcmc) {
                std::cout << "mean log joint " << res.mcmc.mean_log_joint_post_burnin()
                          << " (chain " << res.mcmc.chain_index << ", "
                          << res.mcmc.retained() << " samples)\n";
            } else {
                std::cout << "final elbo " << res.record.final_elbo << " ("
                          << (res.record.converged ? "converged" : "not converged") << ", "
                          << res.record.sweeps << " sweeps)\n";
            }
            std::cout << "wrote " << res.checkpoint_path << "\n";
            return res.exit_code;
        }

        if (sweep->parsed()) {
            ExperimentConfig cfg = base_config(sweep_config);
            cfg.engine = "sgvb";
            apply_dataset(sweep, sweep_data, cfg);
            apply_engine(sweep, sweep_eng, cfg);
            if (sweep->count("--out")) cfg.out_dir = sweep_out;
            if (sweep->count("--sweep-restarts")) sweep_spec.n_restarts = sweep_restarts;
            const sbm::SweepResult res = sbm::run_sweep(cfg, sweep_spec);
            std::cout << "budget " << res.budget_seconds << "s per run, " << res.rows.size()
                      << " rows\n"
                      << "wrote " << res.csv_path << "\n";
            return sbm::kExitOk;
        }

        if (cv->parsed()) {
            ExperimentConfig cfg = base_config(cv_config);
            apply_dataset(cv, cv_data, cfg);
            apply_engine(cv, cv_eng, cfg);
            cfg.holdout.fraction = 0.0;
            cfg.holdout.folds = cv_eng.folds;
            if (cv->count("--out")) cfg.out_dir = cv_out;
            const sbm::CrossvalResult res = sbm::run_crossval(cfg);
            std::cout << "median auc " << res.median_auc << " over " << res.folds.size()
                      << " folds\n"
                      << "wrote " << res.json_path << "\n";
            return sbm::kExitOk;
        }

        const sbm::EvaluateResult res = sbm::run_evaluate(ev_opts);
        if (res.has_ari) std::cout << "ari " << res.ari << "\n";
        if (res.has_overlap)
            std::cout << "mean co-clustering gap " << res.overlap_mean_abs_diff << "\n";
        std::cout << "wrote " << res.metrics_path << "\n";
        return sbm::kExitOk;
    } catch (const sbm::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const sbm::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
