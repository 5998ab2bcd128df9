#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sbmkit/cavi.hpp"
#include "sbmkit/evaluate.hpp"
#include "sbmkit/generator.hpp"
#include "sbmkit/gibbs.hpp"
#include "sbmkit/model.hpp"
#include "sbmkit/network.hpp"
#include "sbmkit/sgvb.hpp"

namespace sbm {

inline constexpr int kExitOk = 0;
inline constexpr int kExitBudgetExhausted = 3;

/// Exactly one of preset / edge_list / spec_file selects the data.
struct DatasetSpec {
    std::string preset;
    std::string edge_list;
    std::string spec_file;
    std::string truth_file;  // optional labels file, one 1-based label per line

    void validate() const;
};

struct Dataset {
    Network net;
    Labels truth;  // empty when unknown

    bool has_truth() const { return !truth.empty(); }
};

Dataset load_dataset(const DatasetSpec& spec);

Labels load_labels_file(const std::string& path);
void write_labels_file(const std::string& path, const Labels& labels);

struct HoldoutSpec {
    double fraction = 0.0;  // in (0,1): mask one random subset
    int folds = 0;          // >= 2: cross-validation partition
    bool balanced = false;
    std::uint64_t seed = 1;

    bool enabled() const { return fraction > 0.0 || folds >= 2; }
    void validate() const;
};

struct ExperimentConfig {
    DatasetSpec dataset;
    std::string engine = "cavi";  // mcmc | cavi | sgvb
    Hyperparams hp{1.0, 1.0, 1.0, 2};
    McmcConfig mcmc;
    CaviConfig cavi;
    SgvbConfig sgvb;
    HoldoutSpec holdout;
    std::string out_dir = ".";
    std::string point_estimate = "laugreen";  // or "argmax"
    int jobs = 1;
    std::uint64_t seed = 1;  // default for every nested seed

    void validate() const;
    void apply_global_seed();
};

/// Fully resolved config echo (defaults included) written next to outputs.
void write_config_echo(const ExperimentConfig& cfg, const std::string& path);
ExperimentConfig load_config_file(const std::string& path);

struct GenerateResult {
    std::string edges_path;
    std::string labels_path;
    std::string spec_path;
    NodeId node_count = 0;
    std::size_t edge_count = 0;
};

GenerateResult run_generate(const GeneratorSpec& spec, const std::string& out_dir);

struct FitResult {
    RunRecord record;  // variational engines
    McmcTrace mcmc;    // sampler engine
    bool used_mcmc = false;
    int exit_code = kExitOk;
    std::string checkpoint_path;
    std::string record_path;
    std::string trace_path;
    std::string comparison_path;  // sgvb only
};

FitResult run_fit(const ExperimentConfig& cfg);

struct SweepSpec {
    std::vector<double> kappas{0.6, 1.0};
    std::vector<double> taus{1.0, 64.0};
    std::vector<double> omegas{0.05, 0.10, 0.25};
    int n_restarts = 8;
    double budget_seconds = 0.0;  // 0: measure the mean CAVI runtime
    int budget_probes = 1;

    void validate() const;
};

struct SweepRow {
    double kappa = 0.0;
    double tau = 0.0;
    double omega = 0.0;
    int restart = 0;
    double expected_log_joint = 0.0;
    double final_elbo = 0.0;
};

struct SweepResult {
    double budget_seconds = 0.0;
    double mean_cavi_seconds = 0.0;
    std::vector<SweepRow> rows;
    std::string csv_path;
};

SweepResult run_sweep(const ExperimentConfig& cfg, const SweepSpec& sweep);

struct FoldMetric {
    int fold = 0;
    std::size_t held_out = 0;
    double auc = 0.0;
};

struct CrossvalResult {
    std::vector<FoldMetric> folds;
    double median_auc = 0.0;
    double mean_auc = 0.0;
    std::string csv_path;
    std::string json_path;
};

CrossvalResult run_crossval(const ExperimentConfig& cfg);

struct EvaluateOptions {
    std::string checkpoint;
    std::string second_checkpoint;  // optional: co-clustering overlap export
    std::string truth_file;         // optional: ARI against these labels
    std::string edge_list;          // optional: enables degree-ordered heatmap export
    std::string out_dir = ".";
    std::string point_estimate = "laugreen";  // or "argmax"
    std::string cocluster_format = "auto";    // auto | dense | triplets
    double triplet_min_prob = 0.05;
};

struct EvaluateResult {
    bool has_ari = false;
    double ari = 0.0;
    bool has_overlap = false;
    double overlap_mean_abs_diff = 0.0;
    std::string metrics_path;
    std::string cocluster_path;
    std::string overlap_path;
    std::string partition_path;
};

EvaluateResult run_evaluate(const EvaluateOptions& opts);

}  // namespace sbm
