#pragma once

#include "recount/diagnostics.hpp"
#include "recount/imputation.hpp"
#include "recount/simulation.hpp"
#include "recount/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace recount {

/// Loads the long-format dataset CSV:
///   subject_id,day,ema_count,tlfb_count,visit_day[,covariate columns...]
/// Lines starting with '#' are comments. Days are sorted per subject;
/// duplicate (subject_id, day) pairs, ema_count < 1, missing cells and
/// inconsistent baseline covariates are rejected with row locations.
Dataset load_dataset(const std::string& path);

/// Writes a dataset back in the same schema. Comment lines are emitted
/// verbatim (prefixed with "# ") before the header.
void save_dataset_csv(const std::string& path, const Dataset& dataset,
                      const std::vector<std::string>& comments = {});

/// Simulated latent state beside its dataset:
///   subject_id,day,ema_count,tlfb_count,w,g,b,u
void save_latent_truth_csv(const std::string& path, const SimulatedData& sim,
                           const std::vector<std::string>& comments = {});

void write_curve_csv(const std::string& path, const CurvePoints& curve,
                     const std::vector<std::string>& comments = {});

/// Minimal standalone SVG line plot of all series in the curve.
void write_curve_svg(const std::string& path, const CurvePoints& curve);

void write_heap_table_csv(const std::string& path, const HeapFractionTable& table,
                          const std::vector<std::string>& comments = {});

void write_imputations_csv(const std::string& path, const Dataset& dataset,
                           const std::vector<LatentImputation>& imputations,
                           const std::vector<std::string>& comments = {});

void write_predictions_csv(const std::string& path, const Dataset& dataset,
                           const std::vector<TrueCountImputation>& imputations,
                           const std::vector<std::string>& comments = {});

/// Key-value run configuration shared by the CLI commands. Every field has
/// a validated default; unknown keys in a config file are rejected.
struct RunConfig {
    std::uint64_t seed = 20120601;
    int threads = 0;  ///< 0 = hardware concurrency

    std::string dataset;  ///< input CSV path
    std::string out;      ///< output path (command-specific default if empty)

    std::vector<std::string> recall_covariates;
    std::vector<std::string> heaping_covariates;
    int quadrature_nodes = 20;
    PriorConfig prior;
    bool use_prior = true;

    int max_iterations = 500;
    double gradient_tolerance = 1e-4;
    double objective_tolerance = 1e-9;

    int proposals = 4000;
    int resample = 1000;
    int t_dof = 5;

    std::string scenario = "case1";
    int n_subjects = 100;
    int days_per_subject = 12;
    int replicates = 100;
    std::string ci_method = "hessian";
    int bootstrap_replicates = 100;

    std::string fit_artifact;  ///< fit.json consumed by impute/check/predict/curves
    std::string params_file;   ///< explicit parameters for curves
    int theta_draws = 20;
    long max_rejects = 1000000;
    std::string impute_mode = "fixed";  ///< or "redraw"

    std::string x_model = "poisson:20";
    int n_imputations = 10;

    std::string curve = "heaping";  ///< or "recall"
    int range_min = -1;             ///< curve grid; command defaults if < 0
    int range_max = -1;
    bool visit = false;
    bool marginal = true;
    bool svg = false;

    void validate() const;
};

/// Reads a JSON config file. A fit/report artifact containing an embedded
/// "config" object is accepted too, so any artifact can reproduce itself.
RunConfig load_run_config(const std::string& path);

/// Canonical JSON rendering (sorted keys) of the effective configuration.
std::string run_config_to_json(const RunConfig& config);

/// FNV-1a hash of the canonical configuration JSON, as "fnv1a:<hex>".
std::string config_hash(const RunConfig& config);

std::string theta_to_json_string(const Theta& theta);
Theta theta_from_json_string(const std::string& text);

/// Parses x-model strings: "point:20", "poisson:20", "negbin:22,6",
/// "empirical:<csv column of counts>".
TrueCountModel parse_true_count_model(const std::string& text);

} // namespace recount
